"""Image decoding and encoder preprocessing."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ContractViolation, ImageDecodeError

SUPPORTED_FORMATS = ("PNG", "JPEG")

# published CLIP normalization constants
CLIP_MEAN = np.array([0.48145466, 0.4578275, 0.40821073], dtype=np.float32)
CLIP_STD = np.array([0.26862954, 0.26130258, 0.27577711], dtype=np.float32)


def decode_image(data: bytes) -> Image.Image:
    """Decode PNG/JPEG bytes into an RGB image, rejecting everything else."""
    try:
        img = Image.open(io.BytesIO(data))
        fmt = img.format
        if fmt not in SUPPORTED_FORMATS:
            raise ImageDecodeError(f"unsupported image format {fmt!r} (PNG and JPEG only)")
        img.load()
    except ImageDecodeError:
        raise
    except (UnidentifiedImageError, OSError, ValueError, SyntaxError) as exc:
        raise ImageDecodeError(f"cannot decode image: {exc}") from None
    return img.convert("RGB")


@dataclass(frozen=True)
class PreprocessPolicy:
    """``native`` keeps the original resolution; ``resize:S`` resizes the
    shorter side to S (bicubic) and centre-crops S x S."""

    mode: str
    size: int | None = None

    @classmethod
    def parse(cls, text: str) -> "PreprocessPolicy":
        if text == "native":
            return cls("native")
        if text.startswith("resize:"):
            try:
                size = int(text.split(":", 1)[1])
            except ValueError:
                size = 0
            if size <= 0:
                raise ContractViolation(f"bad resize size in {text!r}")
            return cls("resize", size)
        raise ContractViolation(f"unknown preprocess policy {text!r} (use native or resize:S)")

    def __str__(self) -> str:
        return "native" if self.mode == "native" else f"resize:{self.size}"


def resize_center_crop(img: Image.Image, size: int) -> Image.Image:
    w, h = img.size
    scale = size / min(w, h)
    new_w, new_h = max(size, round(w * scale)), max(size, round(h * scale))
    img = img.resize((new_w, new_h), Image.BICUBIC)
    left = (new_w - size) // 2
    top = (new_h - size) // 2
    return img.crop((left, top, left + size, top + size))


def to_clip_tensor(img: Image.Image, policy: PreprocessPolicy) -> np.ndarray:
    """RGB image -> float32 array of shape (1, 3, H, W), CLIP-normalized."""
    if policy.mode == "resize":
        img = resize_center_crop(img, policy.size)
    arr = np.asarray(img, dtype=np.float32) / 255.0
    arr = (arr - CLIP_MEAN) / CLIP_STD
    return np.ascontiguousarray(arr.transpose(2, 0, 1)[None])
