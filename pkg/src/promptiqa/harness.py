"""Dataset evaluation: score every manifest image, correlate with MOS.

PLCC is taken on raw predicted scores against MOS; no logistic remapping is
fitted. Images that cannot be read or decoded are excluded from the
correlations and listed in ``EvalResult.skipped``.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .cache import CacheKey, EmbeddingCache
from .embedding.base import EmbeddingProvider, ImageInput
from .errors import ContractViolation, EvaluationError, ImageDecodeError, ManifestError, ProviderError
from .prompt_bank import PromptBank
from .scoring import score_image

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DatasetRecord:
    image_id: str
    image_path: Path
    mos: float


def load_manifest(
    path: str | Path,
    images_dir: str | Path | None = None,
    id_column: str = "image_name",
    mos_column: str = "MOS",
) -> list[DatasetRecord]:
    """Read a CSV manifest into records, in file order.

    ``image_path`` is ``images_dir / <id>``; ``images_dir`` defaults to the
    manifest's directory. Every row with an unparsable or non-finite MOS is
    listed in the raised ``ManifestError``; nothing is dropped silently.
    """
    path = Path(path)
    images_dir = Path(images_dir) if images_dir is not None else path.parent
    if not path.is_file():
        raise ManifestError(f"manifest not found: {path}")

    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in (id_column, mos_column) if c not in header]
        if missing:
            raise ManifestError(f"{path}: missing columns {missing} (header: {header})")

        records, problems, seen = [], [], set()
        for line_no, row in enumerate(reader, start=2):
            image_id = (row[id_column] or "").strip()
            if not image_id:
                problems.append(f"line {line_no}: empty {id_column}")
                continue
            if image_id in seen:
                raise ManifestError(f"{path}: duplicate image id {image_id!r} at line {line_no}")
            seen.add(image_id)
            raw = row[mos_column]
            try:
                mos = float(raw)
            except (TypeError, ValueError):
                mos = math.nan
            if not math.isfinite(mos):
                problems.append(f"line {line_no} ({image_id}): bad MOS {raw!r}")
                continue
            records.append(DatasetRecord(image_id, images_dir / image_id, mos))

    if problems:
        raise ManifestError(f"{path}: {len(problems)} unusable rows: " + "; ".join(problems))
    return records


def _check_pair(pred: Sequence[float], truth: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(pred, dtype=np.float64)
    y = np.asarray(truth, dtype=np.float64)
    if x.ndim != 1 or x.shape != y.shape:
        raise ContractViolation(f"length mismatch: {x.shape} vs {y.shape}")
    if x.size < 2:
        raise ContractViolation("correlation needs at least 2 samples")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ContractViolation("correlation inputs must be finite")
    return x, y


def _pearson(x: np.ndarray, y: np.ndarray) -> float | None:
    if np.ptp(x) == 0.0 or np.ptp(y) == 0.0:
        return None
    xc = x - x.mean()
    yc = y - y.mean()
    r = float(np.dot(xc, yc) / math.sqrt(float(np.dot(xc, xc)) * float(np.dot(yc, yc))))
    return min(1.0, max(-1.0, r))


def plcc(pred: Sequence[float], truth: Sequence[float]) -> float | None:
    """Pearson linear correlation; None when either input is constant."""
    return _pearson(*_check_pair(pred, truth))


def srocc(pred: Sequence[float], truth: Sequence[float]) -> float | None:
    """Spearman rank correlation with average ranks for ties; None when
    either ranking is constant."""
    x, y = _check_pair(pred, truth)
    return _pearson(rankdata(x, method="average"), rankdata(y, method="average"))


@dataclass(frozen=True)
class Prediction:
    image_id: str
    mos: float
    overall: float
    scores: tuple[float, ...]


@dataclass
class EvalResult:
    n: int
    srocc: float | None
    plcc: float | None
    predictions: list[Prediction]
    skipped: list[tuple[str, str]]
    labels: list[str]
    model_id: str
    bank_name: str
    bank_fingerprint: str
    timings: dict[str, float] = field(default_factory=dict)
    cache_hits: int = 0
    cache_misses: int = 0

    def metrics(self) -> dict:
        return {
            "n": self.n,
            "skipped": len(self.skipped),
            "srocc": self.srocc,
            "plcc": self.plcc,
        }


class _Outcome:
    __slots__ = ("vector", "reason", "hit")

    def __init__(self, vector=None, reason=None, hit=False):
        self.vector, self.reason, self.hit = vector, reason, hit


def embed_bank(
    provider: EmbeddingProvider, bank: PromptBank, cache: EmbeddingCache | None = None
) -> list[tuple[np.ndarray, np.ndarray]]:
    """(positive, negative) text embeddings for every pair of ``bank``."""
    prompts = bank.prompts()
    vecs: list[np.ndarray | None] = [None] * len(prompts)
    if cache is not None:
        for i, p in enumerate(prompts):
            vecs[i] = cache.get(CacheKey.for_text(p, provider.cache_namespace), provider.dim)
    todo = [i for i, v in enumerate(vecs) if v is None]
    if todo:
        fresh = provider.embed_texts([prompts[i] for i in todo])
        for i, v in zip(todo, fresh):
            vecs[i] = v
            if cache is not None:
                cache.put(CacheKey.for_text(prompts[i], provider.cache_namespace), v)
    return [(vecs[2 * i], vecs[2 * i + 1]) for i in range(len(bank))]


def _embed_file(provider, path: Path, image_id: str, cache, call_lock=None) -> _Outcome:
    try:
        data = path.read_bytes()
    except OSError as exc:
        return _Outcome(reason=f"unreadable: {exc.strerror or exc}")
    key = CacheKey.for_bytes(data, provider.cache_namespace, "image")
    if cache is not None:
        vec = cache.get(key, provider.dim)
        if vec is not None:
            return _Outcome(vec, hit=True)
    try:
        if call_lock is None:
            vec = provider.embed_image(ImageInput(data, image_id))
        else:
            with call_lock:
                vec = provider.embed_image(ImageInput(data, image_id))
    except (ImageDecodeError, ProviderError) as exc:
        return _Outcome(reason=str(exc))
    if cache is not None:
        cache.put(key, vec)
    return _Outcome(vec)


def embed_image_file(
    provider: EmbeddingProvider, path: str | Path, image_id: str | None = None, cache: EmbeddingCache | None = None
) -> np.ndarray:
    """Embed one image file, consulting ``cache`` first.

    Raises:
        ImageDecodeError: the file is missing, unreadable, not PNG/JPEG, or
            the encoder failed on it.
    """
    path = Path(path)
    out = _embed_file(provider, path, image_id or path.name, cache)
    if out.vector is None:
        raise ImageDecodeError(f"{path}: {out.reason}")
    return out.vector


def evaluate(
    provider: EmbeddingProvider,
    bank: PromptBank,
    records: Sequence[DatasetRecord],
    cache: EmbeddingCache | None = None,
    workers: int = 1,
) -> EvalResult:
    """Score ``records`` with ``provider`` and ``bank``; correlate with MOS.

    Images are embedded on a pool of ``workers`` threads (cache first), then
    scored and collected in manifest order, so the result does not depend on
    the worker count.

    Raises:
        EvaluationError: when no image could be scored.
    """
    if not records:
        raise ContractViolation("evaluate needs at least one record")
    if workers < 1:
        raise ContractViolation("workers must be >= 1")

    timings = {}
    t0 = time.perf_counter()
    text_embs = embed_bank(provider, bank, cache)
    timings["text_embedding_s"] = time.perf_counter() - t0

    call_lock = None if provider.concurrency_safe else threading.Lock()

    def embed_one(record: DatasetRecord) -> _Outcome:
        return _embed_file(provider, record.image_path, record.image_id, cache, call_lock)

    t0 = time.perf_counter()
    if workers == 1:
        outcomes = [embed_one(r) for r in records]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(embed_one, records))
    timings["image_embedding_s"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    predictions, skipped = [], []
    for record, out in zip(records, outcomes):
        if out.vector is None:
            skipped.append((record.image_id, out.reason))
            continue
        report = score_image(
            out.vector, bank, text_embs, image_id=record.image_id, model_id=provider.model_id
        )
        predictions.append(
            Prediction(record.image_id, record.mos, report.overall, tuple(d.value for d in report.per_feature))
        )
    timings["scoring_s"] = time.perf_counter() - t0

    if not predictions:
        reasons = sorted({reason for _, reason in skipped})
        raise EvaluationError(f"none of {len(records)} images could be scored; reasons: {reasons[:5]}")
    for image_id, reason in skipped:
        logger.warning("skipped %s: %s", image_id, reason)

    q = [p.overall for p in predictions]
    mos = [p.mos for p in predictions]
    if len(predictions) >= 2:
        rho, r = srocc(q, mos), plcc(q, mos)
    else:
        rho = r = None
    return EvalResult(
        n=len(predictions),
        srocc=rho,
        plcc=r,
        predictions=predictions,
        skipped=skipped,
        labels=bank.labels,
        model_id=provider.model_id,
        bank_name=bank.name,
        bank_fingerprint=bank.fingerprint,
        timings=timings,
        cache_hits=sum(o.hit for o in outcomes),
        cache_misses=sum(o.vector is not None and not o.hit for o in outcomes),
    )


def write_predictions(result: EvalResult, path: str | Path) -> None:
    """Flat CSV: image_id, MOS, q, then one column per feature. Full
    precision (shortest round-trip repr), so reruns are byte-identical."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["image_id", "mos", "q", *result.labels])
        for p in result.predictions:
            writer.writerow([p.image_id, repr(p.mos), repr(p.overall), *map(repr, p.scores)])


def write_report(result: EvalResult, path: str | Path, config: dict | None = None) -> None:
    """JSON report: run configuration, metrics, timings and the per-image table."""
    doc = {
        "config": {
            "model_id": result.model_id,
            "bank": result.bank_name,
            "bank_fingerprint": result.bank_fingerprint,
            **(config or {}),
        },
        "metrics": result.metrics(),
        "cache": {"hits": result.cache_hits, "misses": result.cache_misses},
        "timings": result.timings,
        "features": result.labels,
        "predictions": [
            {"image_id": p.image_id, "mos": p.mos, "q": p.overall, "scores": list(p.scores)}
            for p in result.predictions
        ],
        "skipped": [{"image_id": i, "reason": r} for i, r in result.skipped],
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
