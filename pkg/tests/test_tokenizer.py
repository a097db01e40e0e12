import numpy as np
import pytest

from promptiqa.embedding.tokenizer import CONTEXT_LENGTH, BPETokenizer, bytes_to_unicode, clean_text
from promptiqa.errors import TokenizerError
from promptiqa.prompt_bank import clipiqa_bank, default_bank


def test_byte_table_is_a_bijection():
    table = bytes_to_unicode()
    assert sorted(table) == list(range(256))
    assert len(set(table.values())) == 256


def test_clean_text():
    assert clean_text("  Good&amp;amp;   Photo.\n") == "good& photo."


def test_tiny_vocab_merges(tiny_vocab_path):
    tok = BPETokenizer(tiny_vocab_path)
    assert tok.vocab_size == 512 + 11 + 2
    good_photo = tok.encode("Good photo.")
    assert [tok.decoder[i] for i in good_photo] == ["good</w>", "photo</w>", ".</w>"]
    assert tok.decode(good_photo) == "good photo ."


def test_tokenize_layout(tiny_vocab_path):
    tok = BPETokenizer(tiny_vocab_path)
    rows = tok.tokenize(["Good photo.", "Bad photo."])
    assert rows.shape == (2, CONTEXT_LENGTH) and rows.dtype == np.int64
    assert rows[0, 0] == tok.sot_id
    assert rows[0, 4] == tok.eot_id
    assert not rows[0, 5:].any()
    assert not np.array_equal(rows[0], rows[1])


def test_overflow_is_an_error_with_index(tiny_vocab_path):
    tok = BPETokenizer(tiny_vocab_path)
    long_prompt = "x " * 80
    with pytest.raises(TokenizerError) as info:
        tok.tokenize(["fine", long_prompt])
    assert info.value.index == 1
    # exactly 75 content tokens still fit
    assert tok.tokenize(["x " * 75]).shape == (1, 77)


def test_bad_vocab_file(tmp_path):
    path = tmp_path / "missing.gz"
    with pytest.raises(TokenizerError):
        BPETokenizer(path)
    path.write_bytes(b"not gzip")
    with pytest.raises(TokenizerError):
        BPETokenizer(path)


def test_published_vocab_prompt_ids(clip_vocab_path):
    tok = BPETokenizer(clip_vocab_path)
    assert tok.vocab_size == 49408
    assert (tok.sot_id, tok.eot_id) == (49406, 49407)
    # ids of the published CLIP vocabulary
    assert tok.encode("Good photo.") == [886, 1125, 269]
    assert tok.encode("Bad photo.") == [2103, 1125, 269]
    for prompt in default_bank().prompts() + clipiqa_bank().prompts():
        assert tok.tokenize([prompt])[0].nonzero()[0].size < 20


def test_matches_reference_tokenizer(clip_vocab_path):
    open_clip = pytest.importorskip("open_clip")
    texts = default_bank().prompts() + ["Héllo wörld &amp; 123 don't   STOP!!", "naïve café 東京", "<|endoftext|> x"]
    ref = open_clip.tokenize(texts).numpy()
    assert np.array_equal(BPETokenizer(clip_vocab_path).tokenize(texts), ref)
