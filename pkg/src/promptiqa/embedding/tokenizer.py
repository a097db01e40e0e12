"""Byte-level BPE tokenizer compatible with the published CLIP vocabulary.

Reads the gzipped merges file (``bpe_simple_vocab_16e6.txt.gz``) and produces
fixed-length token rows: start token, BPE ids, end token, zero padding.
Prompts that do not fit are rejected rather than truncated.
"""

from __future__ import annotations

import gzip
import html
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np
import regex

from ..errors import TokenizerError

CONTEXT_LENGTH = 77
# merges used by the released CLIP text encoders (vocab size 49408)
CLIP_NUM_MERGES = 49152 - 256 - 2

SOT = "<|startoftext|>"
EOT = "<|endoftext|>"

# special-token strings inside a prompt are tokenized as plain text
_TOKEN_PATTERN = regex.compile(
    r"""'s|'t|'re|'ve|'m|'ll|'d|[\p{L}]+|[\p{N}]|[^\s\p{L}\p{N}]+""",
    regex.IGNORECASE,
)
_WHITESPACE = regex.compile(r"\s+")


@lru_cache(maxsize=None)
def bytes_to_unicode() -> dict[int, str]:
    """Reversible byte -> printable unicode character table used by GPT-2/CLIP BPE."""
    printable = (
        list(range(ord("!"), ord("~") + 1))
        + list(range(ord("¡"), ord("¬") + 1))
        + list(range(ord("®"), ord("ÿ") + 1))
    )
    codes = printable[:]
    extra = 0
    for b in range(256):
        if b not in printable:
            printable.append(b)
            codes.append(256 + extra)
            extra += 1
    return dict(zip(printable, map(chr, codes)))


def clean_text(text: str) -> str:
    text = html.unescape(html.unescape(text)).strip()
    return _WHITESPACE.sub(" ", text).strip().lower()


class BPETokenizer:
    def __init__(
        self,
        vocab_path: str | Path,
        context_length: int = CONTEXT_LENGTH,
        num_merges: int | None = CLIP_NUM_MERGES,
    ):
        vocab_path = Path(vocab_path)
        try:
            with gzip.open(vocab_path, "rt", encoding="utf-8") as fh:
                lines = fh.read().split("\n")
        except (OSError, EOFError) as exc:
            raise TokenizerError(f"cannot read BPE vocabulary {vocab_path}: {exc}") from None

        # first line is a version header
        body = [ln for ln in lines[1:] if ln.strip()]
        if num_merges is not None:
            body = body[:num_merges]
        merges = []
        for n, line in enumerate(body, start=2):
            parts = line.split()
            if len(parts) != 2:
                raise TokenizerError(f"{vocab_path}:{n}: malformed merge line {line!r}")
            merges.append((parts[0], parts[1]))

        byte_chars = list(bytes_to_unicode().values())
        vocab = byte_chars + [c + "</w>" for c in byte_chars]
        vocab += ["".join(m) for m in merges]
        vocab += [SOT, EOT]

        self.context_length = context_length
        self.encoder = {tok: i for i, tok in enumerate(vocab)}
        self.decoder = {i: tok for tok, i in self.encoder.items()}
        self.bpe_ranks = {m: i for i, m in enumerate(merges)}
        self.sot_id = self.encoder[SOT]
        self.eot_id = self.encoder[EOT]
        self._byte_encoder = bytes_to_unicode()
        self._bpe = lru_cache(maxsize=65536)(self._bpe_uncached)

    @property
    def vocab_size(self) -> int:
        return len(self.encoder)

    def _bpe_uncached(self, token: str) -> tuple[str, ...]:
        word = tuple(token[:-1]) + (token[-1] + "</w>",)
        while len(word) > 1:
            pairs = set(zip(word, word[1:]))
            best = min(pairs, key=lambda p: self.bpe_ranks.get(p, float("inf")))
            if best not in self.bpe_ranks:
                break
            first, second = best
            merged = []
            i = 0
            while i < len(word):
                if i < len(word) - 1 and word[i] == first and word[i + 1] == second:
                    merged.append(first + second)
                    i += 2
                else:
                    merged.append(word[i])
                    i += 1
            word = tuple(merged)
        return word

    def encode(self, text: str) -> list[int]:
        """BPE ids for ``text`` without start/end tokens."""
        ids = []
        for piece in _TOKEN_PATTERN.findall(clean_text(text)):
            chars = "".join(self._byte_encoder[b] for b in piece.encode("utf-8"))
            ids.extend(self.encoder[t] for t in self._bpe(chars))
        return ids

    def decode(self, ids: Sequence[int]) -> str:
        byte_decoder = {c: b for b, c in self._byte_encoder.items()}
        text = "".join(self.decoder[i] for i in ids if i not in (self.sot_id, self.eot_id))
        raw = bytearray(byte_decoder[c] for c in text)
        return raw.decode("utf-8", errors="replace").replace("</w>", " ").strip()

    def tokenize(self, prompts: Sequence[str]) -> np.ndarray:
        """Token matrix of shape (len(prompts), context_length), int64."""
        out = np.zeros((len(prompts), self.context_length), dtype=np.int64)
        for i, prompt in enumerate(prompts):
            ids = [self.sot_id, *self.encode(prompt), self.eot_id]
            if len(ids) > self.context_length:
                raise TokenizerError(
                    f"{len(ids)} tokens exceed the context length of {self.context_length}", index=i
                )
            out[i, : len(ids)] = ids
        return out
