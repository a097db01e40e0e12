"""Similarity, per-feature descriptive scores and the overall quality score.

Embeddings are 1-D float64 numpy arrays. Every reduction goes through
``math.fsum``, which is correctly rounded and therefore independent of
summation order, BLAS build and CPU; reports are bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ContractViolation, DegenerateInputError, PairScoringError
from .prompt_bank import PromptBank

_LOWEST = math.nextafter(0.0, 1.0)
_HIGHEST = math.nextafter(100.0, 0.0)


def as_embedding(values, name: str = "embedding") -> np.ndarray:
    """Validate and coerce ``values`` into a read-only float64 vector."""
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ContractViolation(f"{name} must be a non-empty 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ContractViolation(f"{name} contains NaN or Inf")
    arr.setflags(write=False)
    return arr


def _dot(a: np.ndarray, b: np.ndarray) -> float:
    return math.fsum((a * b).tolist())


def similarity(image_emb, text_emb) -> float:
    """Image/text similarity on a 0-centred percent scale.

    ``100 * <x, t> / (|x|^2 + |t|^2)``. The denominator is the sum of the
    squared norms: rescaling both vectors together cancels, rescaling just
    one does not (unlike cosine). For unit vectors it equals ``50 * cos(x, t)``. No normalization happens here.

    Raises:
        ContractViolation: non-finite entries or mismatched dimensions.
        DegenerateInputError: both vectors are all zeros.
    """
    x = as_embedding(image_emb, "image embedding")
    t = as_embedding(text_emb, "text embedding")
    if x.shape != t.shape:
        raise ContractViolation(f"dimension mismatch: {x.size} vs {t.size}")
    denom = _dot(x, x) + _dot(t, t)
    if denom == 0.0:
        raise DegenerateInputError("similarity undefined: both embeddings are zero")
    return _dot(x, t) / denom * 100.0


@dataclass(frozen=True)
class DescriptiveScore:
    feature_label: str
    value: float


def descriptive_score(s_pos: float, s_neg: float, feature_label: str = "") -> DescriptiveScore:
    """Two-way softmax of (s_pos, s_neg), scaled to percent.

    Evaluated as a logistic of the difference with the larger exponent
    factored out, so it never overflows. Results that round to exactly 0 or
    100 are pulled back to the nearest float inside the open interval.
    """
    if not (math.isfinite(s_pos) and math.isfinite(s_neg)):
        raise ContractViolation(f"similarities must be finite, got {s_pos!r}, {s_neg!r}")
    diff = s_neg - s_pos
    if math.isinf(diff):
        # finite inputs of opposite sign near float max can still overflow
        value = 0.0 if diff > 0 else 100.0
    elif diff > 0:
        e = math.exp(-diff)
        value = 100.0 * e / (1.0 + e)
    else:
        value = 100.0 / (1.0 + math.exp(diff))
    value = min(max(value, _LOWEST), _HIGHEST)
    return DescriptiveScore(feature_label, value)


def overall_quality(scores: Sequence[DescriptiveScore | float]) -> float:
    """Unweighted mean of the descriptive scores."""
    if len(scores) == 0:
        raise ContractViolation("overall_quality needs at least one descriptive score")
    values = [s.value if isinstance(s, DescriptiveScore) else float(s) for s in scores]
    mean = math.fsum(values) / len(values)
    # the division can round one ulp past the extremes
    return min(max(mean, min(values)), max(values))


@dataclass(frozen=True)
class QualityReport:
    image_id: str
    per_feature: tuple[DescriptiveScore, ...]
    overall: float
    bank_fingerprint: str
    model_id: str

    @property
    def scores(self) -> dict[str, float]:
        return {d.feature_label: d.value for d in self.per_feature}

    def to_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "model_id": self.model_id,
            "bank_fingerprint": self.bank_fingerprint,
            "scores": [{"feature": d.feature_label, "value": d.value} for d in self.per_feature],
            "overall": self.overall,
        }


def score_image(
    image_emb,
    bank: PromptBank,
    text_embs: Sequence[tuple[object, object]],
    *,
    image_id: str = "",
    model_id: str = "",
) -> QualityReport:
    """Score one image embedding against every pair of ``bank``.

    Args:
        image_emb: image embedding.
        bank: prompt bank; fixes the order of ``per_feature``.
        text_embs: one (positive, negative) embedding tuple per bank pair.
        image_id: carried into the report.
        model_id: carried into the report.
    """
    if len(text_embs) != len(bank):
        raise ContractViolation(
            f"got {len(text_embs)} text embedding pairs for a bank of {len(bank)}"
        )
    per_feature = []
    for i, (pair, (pos, neg)) in enumerate(zip(bank.pairs, text_embs)):
        try:
            s_pos = similarity(image_emb, pos)
            s_neg = similarity(image_emb, neg)
            per_feature.append(descriptive_score(s_pos, s_neg, pair.feature_label))
        except (ContractViolation, DegenerateInputError) as exc:
            raise PairScoringError(i, pair.feature_label, exc) from exc
    return QualityReport(
        image_id=image_id,
        per_feature=tuple(per_feature),
        overall=overall_quality(per_feature),
        bank_fingerprint=bank.fingerprint,
        model_id=model_id,
    )
