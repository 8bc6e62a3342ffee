"""
Per-channel histogram matching on a 256-level grid.
"""

from dataclasses import dataclass

import numpy as np

from app.imaging.image import Image
from app.utils.error_handler import ParameterError

LEVELS = 256


def quantize(channel: np.ndarray) -> np.ndarray:
    """[0,1] reals to integer levels 0..255."""
    return np.clip(np.floor(channel * (LEVELS - 1) + 0.5), 0, LEVELS - 1).astype(np.int64)


@dataclass(frozen=True)
class HistogramCdf:
    """Normalized histogram h and its cumulative distribution S, shape (C, 256)."""
    hist: np.ndarray
    cdf: np.ndarray

    @classmethod
    def from_image(cls, img, valid: np.ndarray = None) -> "HistogramCdf":
        data = img.data if isinstance(img, Image) else np.asarray(img, dtype=np.float64)
        if data.ndim == 2:
            data = data[..., None]
        hists, cdfs = [], []
        for c in range(data.shape[2]):
            levels = quantize(data[..., c])
            if valid is not None:
                levels = levels[valid.astype(bool)]
            counts = np.bincount(levels.ravel(), minlength=LEVELS).astype(np.float64)
            total = counts.sum()
            hist = counts / total if total > 0 else counts
            cdf = np.cumsum(hist)
            if total > 0:
                cdf[-1] = 1.0
            hists.append(hist)
            cdfs.append(cdf)
        return cls(np.stack(hists), np.stack(cdfs))

    def kolmogorov_distance(self, other: "HistogramCdf") -> np.ndarray:
        """Per-channel sup |S_a - S_b|."""
        return np.max(np.abs(self.cdf - other.cdf), axis=1)


def level_mapping(src_cdf: HistogramCdf, ref_cdf: HistogramCdf) -> np.ndarray:
    """
    For each channel and level i, the smallest ref level k with
    S_ref(k) >= S_src(i) - h_src(i)/2 (the source level's CDF midpoint).
    """
    mappings = []
    for c in range(src_cdf.cdf.shape[0]):
        target = src_cdf.cdf[c] - 0.5 * src_cdf.hist[c]
        k = np.searchsorted(ref_cdf.cdf[c], target - 1e-12, side="left")
        mappings.append(np.clip(k, 0, LEVELS - 1))
    return np.stack(mappings)


def histogram_match(src: Image, ref: Image, valid: np.ndarray = None) -> Image:
    """
    Matches the colour distribution of `src` to `ref`, channel by channel.
    `valid` (H x W of src) restricts which src pixels enter the statistics.
    """
    for name, img in (("src", src), ("ref", ref)):
        if img.channels != 3:
            raise ParameterError(f"histogram_match: {name} must have 3 channels")
        if img.encoding != "display":
            raise ParameterError(f"histogram_match: {name} must be display-encoded")
    mapping = level_mapping(HistogramCdf.from_image(src, valid), HistogramCdf.from_image(ref))
    out = np.empty_like(src.data)
    for c in range(3):
        out[..., c] = mapping[c][quantize(src.data[..., c])] / (LEVELS - 1)
    return Image(out, "display")
