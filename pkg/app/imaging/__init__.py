"""Image containers, gamma, metrics, histogram matching and ground-truth fusion."""

from app.imaging.focus import focus_measure, multifocus_fuse
from app.imaging.histogram import HistogramCdf, histogram_match
from app.imaging.image import DEFAULT_GAMMA, Image, to_display, to_linear
from app.imaging.io import read_pfm, read_png, write_mask_png, write_pfm, write_png
from app.imaging.metrics import psnr, ssim, ssim_tensor

__all__ = [
    "DEFAULT_GAMMA", "HistogramCdf", "Image",
    "focus_measure", "histogram_match", "multifocus_fuse", "psnr", "read_pfm", "read_png",
    "ssim", "ssim_tensor", "to_display", "to_linear", "write_mask_png", "write_pfm", "write_png",
]
