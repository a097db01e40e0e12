from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import ContractViolation, ProviderError


@dataclass(frozen=True)
class ProviderDescriptor:
    model_id: str
    embedding_dim: int
    normalizes_output: bool

    def __post_init__(self):
        if not self.model_id:
            raise ContractViolation("model_id must be non-empty")
        if self.embedding_dim <= 0:
            raise ContractViolation("embedding_dim must be positive")


@dataclass(frozen=True)
class ImageInput:
    data: bytes
    id: str

    @classmethod
    def from_path(cls, path: str | Path, image_id: str | None = None) -> "ImageInput":
        path = Path(path)
        return cls(path.read_bytes(), image_id if image_id is not None else path.name)


def l2_normalize(vec: np.ndarray) -> np.ndarray:
    norm = math.sqrt(math.fsum((vec * vec).tolist()))
    if norm == 0.0:
        raise ProviderError("cannot normalize an all-zero embedding")
    return vec / norm


class EmbeddingProvider(ABC):
    """Image and text encoders sharing one embedding space.

    Subclasses implement ``_embed_image`` and ``_embed_texts``; the public
    methods add shape checks and the optional L2 normalization.

    ``concurrency_safe`` tells the evaluation harness whether one instance may
    be called from several worker threads at once.
    """

    concurrency_safe: bool = True

    def __init__(
        self,
        model_id: str,
        embedding_dim: int,
        normalize: bool = False,
        native_normalized: bool = False,
    ):
        self._normalize = normalize
        self._descriptor = ProviderDescriptor(model_id, embedding_dim, normalize or native_normalized)

    @property
    def descriptor(self) -> ProviderDescriptor:
        return self._descriptor

    @property
    def model_id(self) -> str:
        return self._descriptor.model_id

    @property
    def dim(self) -> int:
        return self._descriptor.embedding_dim

    @property
    def cache_namespace(self) -> str:
        """Model id plus the normalization toggle; raw and normalized
        outputs of the same model must never share cache entries."""
        return f"{self.model_id}|l2={int(self._normalize)}"

    @abstractmethod
    def _embed_image(self, image: ImageInput) -> np.ndarray: ...

    @abstractmethod
    def _embed_texts(self, prompts: Sequence[str]) -> list[np.ndarray]: ...

    def _finish(self, vec, what: str) -> np.ndarray:
        vec = np.asarray(vec, dtype=np.float64).reshape(-1)
        if vec.size != self.dim:
            raise ProviderError(f"{what}: model produced {vec.size} values, descriptor says {self.dim}")
        if not np.all(np.isfinite(vec)):
            raise ProviderError(f"{what}: model produced non-finite values")
        if self._normalize:
            vec = l2_normalize(vec)
        vec.setflags(write=False)
        return vec

    def embed_image(self, image: ImageInput) -> np.ndarray:
        return self._finish(self._embed_image(image), f"image {image.id!r}")

    def embed_texts(self, prompts: Sequence[str]) -> list[np.ndarray]:
        prompts = list(prompts)
        if not prompts:
            raise ContractViolation("embed_texts needs at least one prompt")
        for i, p in enumerate(prompts):
            if not isinstance(p, str) or not p:
                raise ContractViolation(f"prompt {i} is empty")
        vecs = self._embed_texts(prompts)
        return [self._finish(v, f"prompt {i}") for i, v in enumerate(vecs)]
