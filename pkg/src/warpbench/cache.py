"""Content-addressed cache: artifacts live under cache/<hash>/<name>.

The hash is a SHA-256 over the canonical JSON of the producing parameters
(sorted keys, no whitespace), so identical builds share cache entries and
any parameter change invalidates them.  The cache root defaults to
``.warpbench-cache`` under the current directory and can be overridden with
the WARPBENCH_CACHE environment variable or per call.
"""

from __future__ import annotations

import hashlib
import json
import os
from fractions import Fraction
from pathlib import Path

CACHE_ENV = "WARPBENCH_CACHE"
FORMAT_VERSION = 1


def _canonical(obj):
    if isinstance(obj, Fraction):
        return f"{obj.numerator}/{obj.denominator}"
    if isinstance(obj, dict):
        return {str(k): _canonical(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    if hasattr(obj, "tolist"):
        return _canonical(obj.tolist())
    return obj


def canonical_json(obj) -> str:
    return json.dumps(_canonical(obj), sort_keys=True, separators=(",", ":"))


def content_hash(params) -> str:
    payload = canonical_json({"format": FORMAT_VERSION, "params": params})
    return hashlib.sha256(payload.encode()).hexdigest()[:24]


class Cache:
    def __init__(self, root: str | os.PathLike | None = None, enabled: bool = True):
        root = root or os.environ.get(CACHE_ENV) or ".warpbench-cache"
        self.root = Path(root)
        self.enabled = enabled

    def path(self, key: str, name: str) -> Path:
        return self.root / key / name

    def load_json(self, key: str, name: str):
        p = self.path(key, name)
        if not self.enabled or not p.exists():
            return None
        with open(p) as fh:
            return json.load(fh)

    def store_json(self, key: str, name: str, payload) -> Path:
        p = self.path(key, name)
        p.parent.mkdir(parents=True, exist_ok=True)
        tmp = p.with_suffix(p.suffix + ".tmp")
        with open(tmp, "w") as fh:
            json.dump(_canonical(payload), fh, sort_keys=True, separators=(",", ":"))
        os.replace(tmp, p)
        return p

    def load_text(self, key: str, name: str):
        p = self.path(key, name)
        if not self.enabled or not p.exists():
            return None
        return p.read_text()

    def store_text(self, key: str, name: str, text: str) -> Path:
        p = self.path(key, name)
        p.parent.mkdir(parents=True, exist_ok=True)
        tmp = p.with_suffix(p.suffix + ".tmp")
        tmp.write_text(text)
        os.replace(tmp, p)
        return p
