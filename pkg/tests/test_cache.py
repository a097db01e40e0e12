import struct
import threading
import zlib

import numpy as np
import pytest

from promptiqa.cache import MAGIC, CacheKey, EmbeddingCache, cache_get, cache_put, decode_entry, encode_entry


@pytest.fixture
def cache(tmp_path):
    return EmbeddingCache(tmp_path / "cache")


def key(data=b"image-bytes", model="m1", domain="image"):
    return CacheKey.for_bytes(data, model, domain)


def test_put_then_get_is_bit_identical(cache):
    vec = np.random.default_rng(0).normal(size=1024)
    vec[3] = 1e-310  # subnormal survives
    cache_put(cache, key(), vec)
    out = cache_get(cache, key())
    assert out.tobytes() == vec.astype("<f8").tobytes()


def test_get_on_empty_cache(cache):
    assert cache.get(key()) is None
    assert len(cache) == 0


def test_model_and_domain_separate_keys(cache):
    a, b = np.ones(4), np.full(4, 2.0)
    cache.put(key(model="m1"), a)
    cache.put(key(model="m2"), b)
    assert np.array_equal(cache.get(key(model="m1")), a)
    assert np.array_equal(cache.get(key(model="m2")), b)
    assert cache.get(key(domain="text")) is None


def test_put_is_idempotent(cache):
    vec = np.arange(5.0)
    cache.put(key(), vec)
    path = next(cache.directory.glob("*.emb"))
    mtime = path.stat().st_mtime_ns
    cache.put(key(), vec)
    assert path.stat().st_mtime_ns == mtime
    assert len(cache) == 1


def test_entry_layout():
    vec = np.array([1.0, -2.5])
    blob = encode_entry(vec)
    assert blob[:12] == MAGIC
    assert struct.unpack_from("<II", blob, 12) == (1, 2)
    assert struct.unpack_from("<2d", blob, 20) == (1.0, -2.5)
    assert struct.unpack_from("<I", blob, 36)[0] == zlib.crc32(blob[:36])
    assert len(blob) == 16 + 4 + 16 + 4


@pytest.mark.parametrize("damage", ["flip", "truncate", "magic", "empty"])
def test_corrupt_entry_treated_as_absent_and_rewritten(cache, damage):
    vec = np.linspace(0, 1, 8)
    cache.put(key(), vec)
    path = next(cache.directory.glob("*.emb"))
    blob = bytearray(path.read_bytes())
    if damage == "flip":
        blob[25] ^= 0x01
    elif damage == "truncate":
        blob = blob[:-3]
    elif damage == "magic":
        blob[0:4] = b"XXXX"
    else:
        blob = b""
    path.write_bytes(bytes(blob))
    assert decode_entry(bytes(blob)) is None
    assert cache.get(key()) is None
    assert not path.exists()
    cache.put(key(), vec)
    assert np.array_equal(cache.get(key()), vec)


def test_dim_mismatch_is_a_miss(cache):
    cache.put(key(), np.ones(3))
    assert cache.get(key(), dim=4) is None


def test_entry_has_timestamp(cache):
    cache.put(key(), np.ones(2))
    entry = cache.entry(key())
    assert entry.created_at.tzinfo is not None
    assert entry.key == key()


def test_key_validation():
    with pytest.raises(ValueError):
        CacheKey("abc", "m", "image")
    with pytest.raises(ValueError):
        CacheKey("0" * 64, "m", "audio")
    with pytest.raises(ValueError):
        CacheKey("0" * 64, "", "text")


def test_concurrent_writers_and_readers(cache):
    vecs = {i: np.full(16, float(i)) for i in range(20)}
    errors = []

    def work(offset):
        try:
            for i in range(20):
                j = (i + offset) % 20
                cache.put(key(str(j).encode()), vecs[j])
                got = cache.get(key(str(j).encode()))
                assert got is not None and np.array_equal(got, vecs[j])
        except Exception as exc:  # pragma: no cover - reported below
            errors.append(exc)

    threads = [threading.Thread(target=work, args=(k,)) for k in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors
    assert len(cache) == 20
    assert not list(cache.directory.glob(".tmp-*"))
