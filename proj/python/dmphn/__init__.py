"""Multi-patch hierarchical image deblurring.

Arrays cross the boundary as NCHW float32 numpy arrays. Images live in
[0, 1]; the model's own working range is [-0.5, 0.5] (``Model.deblur``
handles the shift, padding, and clamping for you).
"""

from ._dmphn import (
    Model,
    gen_dataset,
    load,
    load_image,
    psnr,
    save_image,
    ssim,
)

__all__ = [
    "Model",
    "gen_dataset",
    "load",
    "load_image",
    "psnr",
    "save_image",
    "ssim",
]
