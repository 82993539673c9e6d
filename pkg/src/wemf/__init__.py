"""Window-enhanced frequency-fused state-space segmentation, at desk scale."""

__version__ = "0.1.0"
