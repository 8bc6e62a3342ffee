"""
Runs align_pair over the training views of a generated dataset and stores the
artifacts next to the view's images:

    ultra_aligned.png   histogram-matched ultra-wide image in the main frame
    conf.png            confidence mask (255 = confident)
    flow_fwd.pfm        forward flow (dx, dy, 0)
    flow_bwd.pfm        backward flow (dx, dy, 0)
"""

from pathlib import Path
from typing import List, Optional

import numpy as np

from app.align.pipeline import AlignOptions, align_pair
from app.imaging.io import read_pfm, read_png, write_mask_png, write_pfm, write_png
from app.models.data_models import DatasetManifest, load_manifest
from app.utils.error_handler import DatasetError, EstimationError
from app.utils.logging_utils import get_logger

logger = get_logger("align.dataset")

ALIGNED_FILES = {
    "aligned": "ultra_aligned.png",
    "confidence": "conf.png",
    "flow_fwd": "flow_fwd.pfm",
    "flow_bwd": "flow_bwd.pfm",
}


def _flow3(flow: np.ndarray) -> np.ndarray:
    return np.concatenate([flow, np.zeros(flow.shape[:2] + (1,))], axis=-1)


def view_dir(dataset_dir: Path, manifest: DatasetManifest, index: int) -> Path:
    return dataset_dir / Path(manifest.view(index).files["main"]).parent


def artifact_paths(dataset_dir, manifest: DatasetManifest, index: int) -> dict:
    folder = view_dir(Path(dataset_dir), manifest, index)
    return {key: folder / name for key, name in ALIGNED_FILES.items()}


def align_dataset(dataset_dir, options: Optional[AlignOptions] = None, views: Optional[List[int]] = None) -> List[dict]:
    """
    Aligns the ultra-wide image of every training view (or `views`) to its
    main image. Returns one row per view with the confident-pixel fraction.

    Raises:
        EstimationError: naming the view whose homography failed.
    """
    dataset_dir = Path(dataset_dir)
    manifest = load_manifest(dataset_dir)
    options = options or AlignOptions()
    rows = []
    for index in (manifest.train if views is None else views):
        record = manifest.view(index)
        main = read_png(dataset_dir / record.files["main"])
        ultra = read_png(dataset_dir / record.files["ultra"])
        try:
            pair = align_pair(main, ultra, options)
        except EstimationError as exc:
            raise EstimationError(f"view {index}: {exc}") from exc
        paths = artifact_paths(dataset_dir, manifest, index)
        write_png(paths["aligned"], pair.aligned)
        write_mask_png(paths["confidence"], pair.mask)
        write_pfm(paths["flow_fwd"], _flow3(pair.flow))
        write_pfm(paths["flow_bwd"], _flow3(pair.backward_flow))
        rows.append({
            "view": index,
            "confident_fraction": pair.confident_fraction,
            "corner_shift_px": pair.homography.corner_error(
                pair.homography.identity(), main.width, main.height
            ),
        })
        logger.info(f"view {index:03d}: confident fraction {pair.confident_fraction:.3f}")
    return rows


def load_aligned(dataset_dir, manifest: DatasetManifest, index: int):
    """(aligned ultra Image, boolean confidence mask) of a view; DatasetError when alignment never ran."""
    paths = artifact_paths(dataset_dir, manifest, index)
    missing = [str(p) for key, p in paths.items() if key in ("aligned", "confidence") and not p.is_file()]
    if missing:
        raise DatasetError(f"view {index} has no alignment artifacts (run align first): {missing}")
    aligned = read_png(paths["aligned"])
    mask = read_png(paths["confidence"]).gray() > 0.5
    return aligned, mask


def load_flow(dataset_dir, manifest: DatasetManifest, index: int, key: str = "flow_fwd") -> np.ndarray:
    return read_pfm(artifact_paths(dataset_dir, manifest, index)[key])[..., :2]
