"""warpbench: warped metrics on group actions, with exact engines,
cocycle embeddings, local trivializations, spectral gaps and distortion
bounds."""

__version__ = "0.1.0"
