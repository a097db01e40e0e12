"""Weight-free deterministic provider for tests and dry runs.

Each input is hashed (FNV-1a 64 over a domain byte followed by the input
bytes), the hash is XOR-ed with the seed, and a SplitMix64 stream started
from that state yields ``dim`` uniform doubles in [-1, 1). The vector is then
L2-normalized. Only integer arithmetic and IEEE-754 double operations are
involved, so outputs are identical on every platform.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from ..images import decode_image
from .base import EmbeddingProvider, ImageInput

MASK64 = 0xFFFFFFFFFFFFFFFF
FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
GOLDEN_GAMMA = 0x9E3779B97F4A7C15

DOMAIN_IMAGE = 0x01
DOMAIN_TEXT = 0x02


def fnv1a64(data: bytes, h: int = FNV_OFFSET) -> int:
    for byte in data:
        h = ((h ^ byte) * FNV_PRIME) & MASK64
    return h


def splitmix64(state: int, n: int) -> list[int]:
    """First ``n`` outputs of SplitMix64 seeded with ``state``."""
    out = []
    for _ in range(n):
        state = (state + GOLDEN_GAMMA) & MASK64
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        out.append(z ^ (z >> 31))
    return out


def mock_vector(domain: int, data: bytes, seed: int, dim: int) -> np.ndarray:
    state = fnv1a64(bytes([domain]) + data) ^ (seed & MASK64)
    raw = [(u >> 11) * 2.0**-53 * 2.0 - 1.0 for u in splitmix64(state, dim)]
    norm = math.sqrt(math.fsum(v * v for v in raw))
    return np.array([v / norm for v in raw], dtype=np.float64)


class MockProvider(EmbeddingProvider):
    """Pseudorandom unit vectors keyed on input content.

    Images must still decode as PNG/JPEG so that unreadable files are
    rejected the same way the neural backend rejects them.
    """

    concurrency_safe = True

    def __init__(self, seed: int = 0, dim: int = 1024, normalize: bool = False):
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.seed = seed
        super().__init__(f"mock-splitmix64/seed={seed}/dim={dim}", dim, normalize, native_normalized=True)

    def _embed_image(self, image: ImageInput) -> np.ndarray:
        decode_image(image.data)
        return mock_vector(DOMAIN_IMAGE, image.data, self.seed, self.dim)

    def _embed_texts(self, prompts: Sequence[str]) -> list[np.ndarray]:
        return [mock_vector(DOMAIN_TEXT, p.encode("utf-8"), self.seed, self.dim) for p in prompts]


def mock_provider(seed: int = 0, dim: int = 1024) -> MockProvider:
    return MockProvider(seed=seed, dim=dim)
