"""Command-line entry point: ``promptiqa score | explain | evaluate``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from contextlib import contextmanager, nullcontext
from dataclasses import dataclass
from pathlib import Path
from typing import TextIO

from .cache import EmbeddingCache
from .embedding import EmbeddingProvider, MockProvider
from .errors import IQAError
from .harness import embed_bank, embed_image_file, evaluate, load_manifest, write_predictions, write_report
from .prompt_bank import PromptBank, resolve_bank
from .scoring import QualityReport, score_image

logger = logging.getLogger("promptiqa")

DEFAULT_THRESHOLD = 25.0

# what a low score on a known feature most likely means
CAUSE_HINTS = {
    "sharpness": "likely blur",
    "noise": "likely noise",
    "brightness": "likely too dark",
    "quality": "overall degradation",
}


class ConfigError(IQAError):
    pass


@dataclass
class RunConfig:
    backend: str = "mock"
    image_model: str | None = None
    text_model: str | None = None
    tokenizer: str | None = None
    bank: str = "default"
    cache_dir: str | None = None
    workers: int = 1
    normalize_embeddings: bool = False
    preprocess: str = "auto"
    format: str = "human"
    out: str | None = None
    seed: int = 0
    mock_dim: int = 1024
    threshold: float = DEFAULT_THRESHOLD

    def __post_init__(self):
        if self.backend not in ("mock", "neural"):
            raise ConfigError(f"unknown backend {self.backend!r}")
        if self.backend == "neural":
            missing = [
                flag
                for flag, value in (
                    ("--image-model", self.image_model),
                    ("--text-model", self.text_model),
                    ("--tokenizer", self.tokenizer),
                )
                if not value
            ]
            if missing:
                raise ConfigError(f"backend 'neural' requires {', '.join(missing)}")
        if self.workers < 1:
            raise ConfigError("--workers must be >= 1")
        if self.format not in ("human", "structured"):
            raise ConfigError(f"unknown format {self.format!r}")
        if self.cache_dir is None:
            self.cache_dir = os.environ.get("IQA_CACHE_DIR") or None

    def build_provider(self) -> EmbeddingProvider:
        if self.backend == "mock":
            return MockProvider(seed=self.seed, dim=self.mock_dim, normalize=self.normalize_embeddings)
        from .embedding.neural import NeuralProvider

        return NeuralProvider(
            self.image_model,
            self.text_model,
            self.tokenizer,
            preprocess=self.preprocess,
            normalize=self.normalize_embeddings,
        )

    def build_bank(self) -> PromptBank:
        return resolve_bank(self.bank)

    def build_cache(self) -> EmbeddingCache | None:
        return EmbeddingCache(self.cache_dir) if self.cache_dir else None


@contextmanager
def _output(path: str | None):
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            yield fh


def format_report_human(report: QualityReport) -> str:
    cols = "  ".join(f"{d.feature_label}={d.value:.2f}" for d in report.per_feature)
    return f"{report.image_id}  q={report.overall:.2f}  {cols}"


def explain_lines(report: QualityReport, bank: PromptBank, threshold: float = DEFAULT_THRESHOLD) -> list[str]:
    """Features sorted from weakest to strongest, flagging those below ``threshold``."""
    negatives = {p.feature_label: p.negative_text for p in bank.pairs}
    width = max(len(d.feature_label) for d in report.per_feature)
    lines = [f"{report.image_id}: overall q = {report.overall:.2f} (bank {bank.name}, model {report.model_id})"]
    for d in sorted(report.per_feature, key=lambda d: d.value):
        line = f"  {d.feature_label:<{width}}  {d.value:6.2f}"
        if d.value < threshold:
            hint = CAUSE_HINTS.get(d.feature_label, f'closer to "{negatives[d.feature_label]}"')
            line += f"  <- low {d.feature_label} score: {hint}"
        lines.append(line)
    return lines


def flagged_features(report: QualityReport, threshold: float = DEFAULT_THRESHOLD) -> list[str]:
    return [d.feature_label for d in sorted(report.per_feature, key=lambda d: d.value) if d.value < threshold]


def _score_paths(config: RunConfig, images: list[str]):
    provider = config.build_provider()
    bank = config.build_bank()
    cache = config.build_cache()
    text_embs = embed_bank(provider, bank, cache)
    for path in images:
        try:
            vec = embed_image_file(provider, path, image_id=path, cache=cache)
        except IQAError as exc:
            yield path, None, str(exc), bank
            continue
        yield path, score_image(vec, bank, text_embs, image_id=path, model_id=provider.model_id), None, bank


def cmd_score(config: RunConfig, images: list[str], stream: TextIO | None = None) -> int:
    ok = 0
    with _output(config.out) if stream is None else nullcontext(stream) as out:
        for path, report, error, _ in _score_paths(config, images):
            if report is None:
                logger.error("%s: %s", path, error)
                if config.format == "structured":
                    out.write(json.dumps({"image_id": path, "error": error}) + "\n")
                continue
            ok += 1
            if config.format == "structured":
                out.write(json.dumps(report.to_dict()) + "\n")
            else:
                out.write(format_report_human(report) + "\n")
    return 0 if ok else 1


def cmd_explain(config: RunConfig, image: str, stream: TextIO | None = None) -> int:
    with _output(config.out) if stream is None else nullcontext(stream) as out:
        for path, report, error, bank in _score_paths(config, [image]):
            if report is None:
                logger.error("%s: %s", path, error)
                return 1
            if config.format == "structured":
                doc = report.to_dict()
                doc["threshold"] = config.threshold
                doc["flagged"] = flagged_features(report, config.threshold)
                out.write(json.dumps(doc) + "\n")
            else:
                out.write("\n".join(explain_lines(report, bank, config.threshold)) + "\n")
    return 0


def cmd_evaluate(
    config: RunConfig,
    manifest: str,
    images_dir: str,
    id_column: str = "image_name",
    mos_column: str = "MOS",
    stream: TextIO | None = None,
) -> int:
    stream = stream or sys.stdout
    if not Path(images_dir).is_dir():
        raise ConfigError(f"images directory not found: {images_dir}")
    records = load_manifest(manifest, images_dir, id_column=id_column, mos_column=mos_column)
    provider = config.build_provider()
    result = evaluate(provider, config.build_bank(), records, config.build_cache(), workers=config.workers)

    out_dir = Path(config.out or "iqa-eval")
    out_dir.mkdir(parents=True, exist_ok=True)
    run_config = {
        "backend": config.backend,
        "preprocess": str(getattr(provider, "preprocess", "n/a")),
        "normalize_embeddings": config.normalize_embeddings,
        "normalizes_output": provider.descriptor.normalizes_output,
        "embedding_dim": provider.dim,
        "workers": config.workers,
        "seed": config.seed if config.backend == "mock" else None,
        "manifest": str(manifest),
    }
    write_report(result, out_dir / "report.json", run_config)
    write_predictions(result, out_dir / "predictions.csv")

    def fmt(v):
        return "n/a" if v is None else f"{v:.3f}"

    stream.write(f"n={result.n} skipped={len(result.skipped)}\n")
    stream.write(f"SROCC {fmt(result.srocc)}\nPLCC {fmt(result.plcc)}\n")
    return 0


@contextmanager
def nullcontext(stream):
    yield stream


def _common_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("backend")
    g.add_argument("--backend", choices=("mock", "neural"), default="mock")
    g.add_argument("--image-model", help="exported ONNX image encoder")
    g.add_argument("--text-model", help="exported ONNX text encoder")
    g.add_argument("--tokenizer", help="CLIP BPE vocabulary (bpe_simple_vocab_16e6.txt.gz)")
    g.add_argument("--preprocess", default="auto", help="native | resize:S | auto (default)")
    g.add_argument("--normalize-embeddings", action="store_true", help="L2-normalize embeddings before scoring")
    g.add_argument("--seed", type=int, default=0, help="mock backend seed (default 0)")
    g.add_argument("--mock-dim", type=int, default=1024, help="mock backend embedding size")
    p.add_argument("--bank", default="default", help="built-in bank (default, clip-iqa) or a bank JSON file")
    p.add_argument("--cache-dir", help="embedding cache directory (falls back to $IQA_CACHE_DIR)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--format", choices=("human", "structured"), default="human")
    p.add_argument("--out", help="output file (score/explain) or directory (evaluate)")
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD, help="explain: flag features below this")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(prog="promptiqa", description="Zero-shot image quality scoring with antonym prompts.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score", parents=[common], help="score images")
    p.add_argument("images", nargs="+")

    p = sub.add_parser("explain", parents=[common], help="per-feature breakdown for one image")
    p.add_argument("image")

    p = sub.add_parser("evaluate", parents=[common], help="SROCC/PLCC over a MOS manifest")
    p.add_argument("manifest")
    p.add_argument("images_dir")
    p.add_argument("--id-column", default="image_name")
    p.add_argument("--mos-column", default="MOS")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    fields = RunConfig.__dataclass_fields__
    return RunConfig(**{k: v for k, v in vars(args).items() if k in fields})


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        config = config_from_args(args)
        if args.command == "score":
            return cmd_score(config, args.images)
        if args.command == "explain":
            return cmd_explain(config, args.image)
        return cmd_evaluate(config, args.manifest, args.images_dir, args.id_column, args.mos_column)
    except ConfigError as exc:
        print(f"promptiqa: configuration error: {exc}", file=sys.stderr)
        return 2
    except IQAError as exc:
        print(f"promptiqa: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
