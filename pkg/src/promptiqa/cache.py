"""Content-addressed on-disk embedding cache.

One file per entry, named by the SHA-256 of the key. Entry layout
(little-endian)::

    magic    12 bytes  b"PROMPTIQAEMB"
    version  u32       1
    dim      u32
    vector   dim x f64
    crc32    u32       over all preceding bytes

Writes go to a temporary file that is renamed into place, so readers never
observe a half-written entry. A per-key lock serializes concurrent writers
within a process. Entries that fail validation are treated as absent and
removed so the next put rewrites them.
"""

from __future__ import annotations

import hashlib
import logging
import os
import struct
import tempfile
import threading
import zlib
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

MAGIC = b"PROMPTIQAEMB"
VERSION = 1
_HEADER = struct.Struct("<12sII")
_CRC = struct.Struct("<I")

DOMAINS = ("image", "text")


@dataclass(frozen=True)
class CacheKey:
    content_digest: str
    model_id: str
    domain: str

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise ValueError(f"domain must be one of {DOMAINS}, got {self.domain!r}")
        if len(self.content_digest) != 64:
            raise ValueError("content_digest must be a SHA-256 hex digest")
        if not self.model_id:
            raise ValueError("model_id must be non-empty")

    @classmethod
    def for_bytes(cls, data: bytes, model_id: str, domain: str) -> "CacheKey":
        return cls(hashlib.sha256(data).hexdigest(), model_id, domain)

    @classmethod
    def for_text(cls, text: str, model_id: str) -> "CacheKey":
        return cls.for_bytes(text.encode("utf-8"), model_id, "text")

    def filename(self) -> str:
        raw = "\0".join((self.domain, self.model_id, self.content_digest)).encode("utf-8")
        return hashlib.sha256(raw).hexdigest() + ".emb"


@dataclass(frozen=True)
class CacheEntry:
    key: CacheKey
    vector: np.ndarray
    created_at: datetime


def encode_entry(vector: np.ndarray) -> bytes:
    vec = np.ascontiguousarray(vector, dtype="<f8")
    body = _HEADER.pack(MAGIC, VERSION, vec.size) + vec.tobytes()
    return body + _CRC.pack(zlib.crc32(body))


def decode_entry(blob: bytes) -> np.ndarray | None:
    """Vector stored in ``blob``, or None when the blob is not a valid entry."""
    if len(blob) < _HEADER.size + _CRC.size:
        return None
    magic, version, dim = _HEADER.unpack_from(blob)
    if magic != MAGIC or version != VERSION:
        return None
    if len(blob) != _HEADER.size + 8 * dim + _CRC.size:
        return None
    (crc,) = _CRC.unpack_from(blob, len(blob) - _CRC.size)
    if zlib.crc32(blob[: -_CRC.size]) != crc:
        return None
    vec = np.frombuffer(blob, dtype="<f8", count=dim, offset=_HEADER.size).astype(np.float64)
    vec.setflags(write=False)
    return vec


class EmbeddingCache:
    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _path(self, key: CacheKey) -> Path:
        return self.directory / key.filename()

    def _lock(self, name: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(name, threading.Lock())

    def get(self, key: CacheKey, dim: int | None = None) -> np.ndarray | None:
        path = self._path(key)
        try:
            blob = path.read_bytes()
        except FileNotFoundError:
            return None
        vec = decode_entry(blob)
        if vec is None or (dim is not None and vec.size != dim):
            logger.warning("discarding corrupt cache entry %s", path.name)
            with self._lock(path.name):
                path.unlink(missing_ok=True)
            return None
        return vec

    def entry(self, key: CacheKey) -> CacheEntry | None:
        vec = self.get(key)
        if vec is None:
            return None
        mtime = self._path(key).stat().st_mtime
        return CacheEntry(key, vec, datetime.fromtimestamp(mtime, tz=timezone.utc))

    def put(self, key: CacheKey, vector: np.ndarray) -> None:
        blob = encode_entry(vector)
        path = self._path(key)
        with self._lock(path.name):
            try:
                if path.read_bytes() == blob:
                    return
            except FileNotFoundError:
                pass
            fd, tmp = tempfile.mkstemp(dir=self.directory, prefix=".tmp-")
            try:
                with os.fdopen(fd, "wb") as fh:
                    fh.write(blob)
                os.replace(tmp, path)
            except BaseException:
                Path(tmp).unlink(missing_ok=True)
                raise

    def __len__(self) -> int:
        return sum(1 for _ in self.directory.glob("*.emb"))


def cache_get(cache: EmbeddingCache, key: CacheKey) -> np.ndarray | None:
    return cache.get(key)


def cache_put(cache: EmbeddingCache, key: CacheKey, vector: np.ndarray) -> None:
    cache.put(key, vector)
