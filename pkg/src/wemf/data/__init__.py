from .nrrd import NRRDError, UnsupportedNRRDError, read_nrrd, write_nrrd
from .phantom import PhantomConfig, generate_phantom, render_phantom
from .rng import Rng
from .splits import SplitManifest, make_splits, read_manifest, write_manifest
from .volume import BACKGROUND, CYST, TUMOR, HounsfieldVolume, HUSlice, LabelVolume, slice_iter

__all__ = [
    "BACKGROUND", "CYST", "TUMOR", "HUSlice", "HounsfieldVolume", "LabelVolume", "NRRDError",
    "PhantomConfig", "Rng", "SplitManifest", "UnsupportedNRRDError", "generate_phantom",
    "make_splits", "read_manifest", "read_nrrd", "render_phantom", "slice_iter", "write_manifest",
    "write_nrrd",
]
