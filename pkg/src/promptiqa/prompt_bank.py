"""Antonym-prompt banks: the rubric an image is scored against.

A bank is an ordered list of (positive, negative) sentence pairs, one per
perceptual feature. Order matters: it fixes the column order of every
report, and it is part of the bank fingerprint.

Bank files are UTF-8 JSON::

    {
      "name": "my-bank",
      "pairs": [
        {"feature_label": "sharpness",
         "positive_text": "This is a good photo because it is sharp.",
         "negative_text": "This is a bad photo because it is blurred."}
      ]
    }
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Any

from .errors import BankValidationError

_PAIR_KEYS = ("feature_label", "positive_text", "negative_text")
_BANK_KEYS = ("name", "pairs")


@dataclass(frozen=True)
class AntonymPromptPair:
    feature_label: str
    positive_text: str
    negative_text: str

    def __post_init__(self):
        for key in _PAIR_KEYS:
            value = getattr(self, key)
            if not isinstance(value, str):
                raise BankValidationError(f"{key} must be a string, got {type(value).__name__}")
            if not value.strip():
                raise BankValidationError(f"{key} must be non-empty")
        if self.positive_text == self.negative_text:
            raise BankValidationError(
                f"positive and negative prompts for {self.feature_label!r} are identical"
            )

    def to_dict(self) -> dict[str, str]:
        return {key: getattr(self, key) for key in _PAIR_KEYS}


@dataclass(frozen=True)
class PromptBank:
    """Ordered, immutable collection of antonym-prompt pairs."""

    name: str
    pairs: tuple[AntonymPromptPair, ...]

    def __post_init__(self):
        if not isinstance(self.name, str) or not self.name.strip():
            raise BankValidationError("bank name must be a non-empty string")
        object.__setattr__(self, "pairs", tuple(self.pairs))
        if not self.pairs:
            raise BankValidationError("a bank needs at least one antonym pair")
        seen: set[str] = set()
        for i, pair in enumerate(self.pairs):
            if not isinstance(pair, AntonymPromptPair):
                raise BankValidationError(f"pairs[{i}] is not an AntonymPromptPair")
            if pair.feature_label in seen:
                raise BankValidationError(
                    f"pairs[{i}]: duplicate feature_label {pair.feature_label!r}"
                )
            seen.add(pair.feature_label)

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    @property
    def labels(self) -> list[str]:
        return [p.feature_label for p in self.pairs]

    def prompts(self) -> list[str]:
        """All prompt texts, flattened as [pos_1, neg_1, pos_2, neg_2, ...]."""
        out = []
        for p in self.pairs:
            out.extend((p.positive_text, p.negative_text))
        return out

    @cached_property
    def fingerprint(self) -> str:
        return fingerprint(self)

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "pairs": [p.to_dict() for p in self.pairs]}


def fingerprint(bank: PromptBank) -> str:
    """SHA-256 hex digest over the bank name and its ordered pairs.

    The digest is taken over a canonical JSON encoding, so it does not depend
    on platform, dict ordering or the file the bank came from.
    """
    canonical = json.dumps(bank.to_dict(), ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def default_bank() -> PromptBank:
    """The three-feature bank: sharpness, noise, brightness."""
    return PromptBank(
        name="antonym-3",
        pairs=(
            AntonymPromptPair(
                "sharpness",
                "This is a good photo because it is sharp.",
                "This is a bad photo because it is blurred.",
            ),
            AntonymPromptPair(
                "noise",
                "This is a good photo because it is noiseless.",
                "This is a bad photo because it has noise.",
            ),
            AntonymPromptPair(
                "brightness",
                "This is a good photo because it is light.",
                "This is a bad photo because it is dark.",
            ),
        ),
    )


def clipiqa_bank() -> PromptBank:
    """Single good/bad pair; scoring with it reproduces CLIP-IQA."""
    return PromptBank(
        name="clip-iqa",
        pairs=(AntonymPromptPair("quality", "Good photo.", "Bad photo."),),
    )


BUILTIN_BANKS = {
    "default": default_bank,
    "clip-iqa": clipiqa_bank,
}


def bank_from_dict(data: Any) -> PromptBank:
    if not isinstance(data, dict):
        raise BankValidationError("bank document must be a JSON object")
    unknown = sorted(set(data) - set(_BANK_KEYS))
    if unknown:
        raise BankValidationError(f"unknown bank keys: {unknown}")
    missing = [k for k in _BANK_KEYS if k not in data]
    if missing:
        raise BankValidationError(f"missing bank keys: {missing}")
    raw_pairs = data["pairs"]
    if not isinstance(raw_pairs, list):
        raise BankValidationError("'pairs' must be an array")

    pairs = []
    for i, raw in enumerate(raw_pairs):
        if not isinstance(raw, dict):
            raise BankValidationError(f"pairs[{i}]: expected an object")
        unknown = sorted(set(raw) - set(_PAIR_KEYS))
        if unknown:
            raise BankValidationError(f"pairs[{i}]: unknown keys {unknown}")
        missing = [k for k in _PAIR_KEYS if k not in raw]
        if missing:
            raise BankValidationError(f"pairs[{i}]: missing keys {missing}")
        try:
            pairs.append(AntonymPromptPair(**raw))
        except BankValidationError as exc:
            raise BankValidationError(f"pairs[{i}]: {exc}") from None
    return PromptBank(name=data["name"], pairs=tuple(pairs))


def load_bank(path: str | Path) -> PromptBank:
    """Read and validate a bank file. Pair order is preserved."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise BankValidationError(f"{path}: not valid JSON ({exc})") from None
    try:
        return bank_from_dict(data)
    except BankValidationError as exc:
        raise BankValidationError(f"{path}: {exc}") from None


def save_bank(bank: PromptBank, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(bank.to_dict(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )


def resolve_bank(name_or_path: str) -> PromptBank:
    """Return a built-in bank by name, otherwise load it from a file."""
    if name_or_path in BUILTIN_BANKS:
        return BUILTIN_BANKS[name_or_path]()
    return load_bank(name_or_path)
