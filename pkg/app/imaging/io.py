"""
File formats: 8-bit PNG for photographs and masks, PFM for float maps.
"""

import re
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image as PILImage, UnidentifiedImageError

from app.imaging.image import Image
from app.utils.error_handler import FormatError, ParameterError

PathLike = Union[str, Path]


def read_png(path: PathLike) -> Image:
    path = Path(path)
    if not path.exists():
        raise FormatError(f"image not found: {path}")
    try:
        with PILImage.open(path) as pil:
            pil.load()
            if pil.format != "PNG":
                raise FormatError(f"{path} is {pil.format}, expected PNG")
            if pil.mode not in ("L", "RGB", "RGBA", "P"):
                raise FormatError(f"{path}: unsupported PNG mode '{pil.mode}' (8-bit L/RGB only)")
            if pil.mode in ("RGBA", "P"):
                pil = pil.convert("RGB")
            raw = np.asarray(pil, dtype=np.uint8)
    except (UnidentifiedImageError, OSError, SyntaxError) as e:
        raise FormatError(f"cannot decode PNG {path}: {e}") from e
    return Image(raw.astype(np.float64) / 255.0, "display")


def write_png(path: PathLike, img: Image) -> Path:
    if img.encoding != "display":
        raise ParameterError(f"PNG files hold display-encoded images; {path} got linear data")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    quantized = np.round(img.data * 255.0).astype(np.uint8)
    if quantized.shape[2] == 1:
        PILImage.fromarray(quantized[..., 0]).save(path, format="PNG")
    else:
        PILImage.fromarray(quantized).save(path, format="PNG")
    return path


def write_mask_png(path: PathLike, mask: np.ndarray) -> Path:
    return write_png(path, Image(np.clip(np.asarray(mask, dtype=np.float64), 0.0, 1.0)))


def write_pfm(path: PathLike, data: np.ndarray) -> Path:
    """Little-endian PFM, scanlines stored bottom-up."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 3 and data.shape[2] == 1:
        data = data[..., 0]
    if data.ndim == 2:
        tag = "Pf"
    elif data.ndim == 3 and data.shape[2] == 3:
        tag = "PF"
    else:
        raise FormatError(f"PFM stores 1 or 3 channels, got shape {data.shape}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    height, width = data.shape[:2]
    with open(path, "wb") as f:
        f.write(f"{tag}\n{width} {height}\n-1.0\n".encode("ascii"))
        f.write(np.ascontiguousarray(np.flipud(data), dtype="<f4").tobytes())
    return path


def read_pfm(path: PathLike) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise FormatError(f"PFM not found: {path}")
    raw = path.read_bytes()
    match = re.match(rb"(P[Ff])\s+(\d+)\s+(\d+)\s+(-?[\d.eE+-]+)\s", raw)
    if match is None:
        raise FormatError(f"{path} has no PFM header")
    tag, width, height, scale = match.groups()
    width, height, scale = int(width), int(height), float(scale)
    channels = 3 if tag == b"PF" else 1
    dtype = "<f4" if scale < 0 else ">f4"
    count = width * height * channels
    body = raw[match.end():]
    if len(body) != 4 * count:
        raise FormatError(f"{path}: expected {4 * count} data bytes, found {len(body)}")
    data = np.frombuffer(body, dtype=dtype).astype(np.float64)
    shape = (height, width, 3) if channels == 3 else (height, width)
    return np.flipud(data.reshape(shape)).copy()
