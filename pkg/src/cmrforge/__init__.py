"""Cardiac LGE-MRI data engineering toolkit.

Short-axis image containers, NIfTI-1 I/O, preprocessing (bias correction,
histogram matching, geometric standardization, normalization), scar-rotation
augmentation, procedural phantoms, training-set assembly and segmentation
metrics.
"""

from cmrforge.image import (
    LabelMap,
    SequenceKind,
    Slice2D,
    Volume,
    crop_or_pad_center,
    gaussian_blur_3x3,
    resample_bilinear,
    rotate_slice,
)

__version__ = "0.1.0"

__all__ = [
    "LabelMap",
    "SequenceKind",
    "Slice2D",
    "Volume",
    "crop_or_pad_center",
    "gaussian_blur_3x3",
    "resample_bilinear",
    "rotate_slice",
    "__version__",
]
