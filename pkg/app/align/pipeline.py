"""
Ultra-wide to main alignment: homography warp, flow warp, histogram match,
and the confidence mask used to gate ultra-wide rays during training.
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from app.align.features import detect_and_match
from app.align.flow import (
    CONFIDENCE_T,
    FLOW_DAMPING,
    FLOW_ITERS,
    FLOW_LEVELS,
    FLOW_WINDOW,
    fb_confidence,
    pyramid_flow,
)
from app.align.homography import INLIER_TOL_PX, RANSAC_ITERS, Homography, estimate_homography_ransac
from app.align.warp import sample_bilinear, warp_flow, warp_homography
from app.imaging.histogram import histogram_match
from app.imaging.image import Image
from app.utils.error_handler import ShapeError
from app.utils.logging_utils import get_logger

logger = get_logger("align")


@dataclass(frozen=True)
class AlignOptions:
    ransac_iters: int = RANSAC_ITERS
    inlier_tol_px: float = INLIER_TOL_PX
    seed: int = 0
    match_ratio: float = 0.8
    match_scales: Sequence[float] = (1.0, 1.2, 1.35, 1.5)
    flow_levels: int = FLOW_LEVELS
    flow_iters: int = FLOW_ITERS
    flow_window: int = FLOW_WINDOW
    flow_damping: float = FLOW_DAMPING
    confidence_t: float = CONFIDENCE_T
    use_homography: bool = True
    use_flow: bool = True
    use_histogram_match: bool = True


@dataclass
class AlignedPair:
    main: Image
    aligned: Image
    mask: np.ndarray
    homography: Homography
    flow: np.ndarray
    backward_flow: np.ndarray
    valid: np.ndarray = field(default=None)

    def __post_init__(self):
        shape = self.main.shape[:2]
        for name in ("mask", "flow", "backward_flow"):
            if getattr(self, name).shape[:2] != shape:
                raise ShapeError(f"{name} {getattr(self, name).shape} does not match main image {shape}")
        if self.aligned.shape != self.main.shape:
            raise ShapeError(f"aligned image {self.aligned.shape} does not match main {self.main.shape}")
        self.mask = self.mask.astype(bool)

    @property
    def confident_fraction(self) -> float:
        return float(self.mask.mean())


def align_pair(main: Image, ultra: Image, options: Optional[AlignOptions] = None) -> AlignedPair:
    """
    Registers `ultra` onto `main`. Raises EstimationError when the homography
    cannot be estimated.
    """
    options = options or AlignOptions()
    shape = main.shape[:2]

    if options.use_homography:
        matches = detect_and_match(ultra, main, options.match_ratio, options.match_scales)
        homography = estimate_homography_ransac(
            matches, options.ransac_iters, options.inlier_tol_px, options.seed
        )
    else:
        homography = Homography.identity()
    registered, valid_h = warp_homography(ultra, homography, main.shape)

    if options.use_flow:
        # flow runs on a colour-matched copy of the registered image
        guide = histogram_match(registered, main, valid_h) if options.use_histogram_match else registered
        fwd = pyramid_flow(main, guide, options.flow_levels, options.flow_iters,
                           options.flow_window, options.flow_damping)
        bwd = pyramid_flow(guide, main, options.flow_levels, options.flow_iters,
                           options.flow_window, options.flow_damping)
    else:
        fwd = np.zeros(shape + (2,))
        bwd = np.zeros(shape + (2,))
    aligned, valid_f = warp_flow(registered, fwd)

    # a flow-warped pixel is valid only if its source was inside the homography footprint
    ys, xs = np.mgrid[0:shape[0], 0:shape[1]].astype(np.float64)
    footprint, _ = sample_bilinear(valid_h.astype(np.float64), xs + fwd[..., 0], ys + fwd[..., 1])
    valid = valid_f & (footprint > 1.0 - 1e-6)

    if options.use_histogram_match:
        aligned = histogram_match(aligned, main, valid)
    aligned = Image(aligned.data * valid[..., None], aligned.encoding)

    mask = fb_confidence(fwd, bwd, options.confidence_t) & valid
    logger.info(
        f"aligned pair: {int(mask.sum())}/{mask.size} confident pixels, "
        f"H corner shift {homography.corner_error(Homography.identity(), shape[1], shape[0]):.2f}px"
    )
    return AlignedPair(main, aligned, mask, homography, fwd, bwd, valid)
