"""Geometry-aware angular super-resolution of light fields."""

__version__ = "0.1.0"

from .depth import filter_cost_volume, guided_filter, render_depth
from .estimator import GeoNI
from .evaluation import EvalReport, evaluate, sweep_shear_range
from .lightfield import (
    LightField4D,
    LightFieldError,
    LightFieldSlice,
    assemble_slices,
    extract_epi,
    extract_slices,
    load_lightfield,
    rgb_to_ycbcr,
    save_lightfield,
    to_luminance,
    ycbcr_to_rgb,
)
from .metrics import psnr, ssim
from .networks import (
    DibrNetworkSpec,
    NiNetworkSpec,
    build_dibr_network,
    build_ni_network,
    dibr_forward,
    load_checkpoint,
    ni_forward,
    save_checkpoint,
)
from .packing import c2s_shuffle, packing_block, residual_module, s2c_shuffle, unpacking_block
from .pipeline import (
    bilinear_geo_ni,
    blend,
    cascade_reconstruct,
    ni_only,
    reconstruct_4d,
    reconstruct_rgb,
    reconstruct_slice,
    upsample_chroma,
)
from .shear import inverse_shear, shear
from .training import DivergenceError, TrainConfig, fit, loss, train

__all__ = [name for name in dir() if not name.startswith("_")]
