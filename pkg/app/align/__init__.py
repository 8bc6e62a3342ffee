"""Spatial and photometric alignment of the ultra-wide view to the main view."""

from app.align.dataset import align_dataset, load_aligned
from app.align.features import detect_and_match
from app.align.flow import FlowField, fb_confidence, fb_roundtrip_error, pyramid_flow
from app.align.homography import Homography, estimate_homography_ransac
from app.align.pipeline import AlignedPair, AlignOptions, align_pair
from app.align.warp import sample_bilinear, warp_flow, warp_homography

__all__ = [
    "AlignOptions", "AlignedPair", "FlowField", "Homography", "align_dataset", "load_aligned",
    "align_pair", "detect_and_match", "estimate_homography_ransac", "fb_confidence", "fb_roundtrip_error",
    "pyramid_flow", "sample_bilinear", "warp_flow", "warp_homography",
]
