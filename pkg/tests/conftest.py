import gzip
import io
import os
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

# ---------------------------------------------------------------- acceptance summary

_criteria: dict[str, list[str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    name = marker.args[0]
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _criteria.setdefault(name, []).append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcomes in _criteria.items():
        if "failed" in outcomes:
            status = "FAIL"
        elif all(o == "skipped" for o in outcomes):
            status = "SKIP"
        else:
            status = "PASS"
        terminalreporter.write_line(f"{status:4}  {name}  ({len(outcomes)} checks)")


# ---------------------------------------------------------------- images


def png_bytes(arr: np.ndarray, fmt: str = "PNG") -> bytes:
    buf = io.BytesIO()
    Image.fromarray(arr.astype(np.uint8)).save(buf, format=fmt)
    return buf.getvalue()


def synthetic_image(seed: int, size: int = 32) -> np.ndarray:
    rng = np.random.default_rng(seed)
    base = rng.integers(0, 256, size=3)
    yy, xx = np.mgrid[0:size, 0:size]
    grad = (xx + yy)[..., None] * rng.uniform(0.5, 3.0, size=3)
    noise = rng.normal(0, 20, size=(size, size, 3))
    return np.clip(base + grad + noise, 0, 255)


@pytest.fixture
def make_dataset(tmp_path):
    """Write ``n`` synthetic PNGs plus a manifest; returns (manifest, images_dir)."""

    def _make(n: int, seed: int = 0, mos=None, extra_rows=()):
        images = tmp_path / f"images_{n}_{seed}"
        images.mkdir(exist_ok=True)
        rng = np.random.default_rng(seed)
        rows = []
        for i in range(n):
            name = f"img_{i:03d}.png"
            (images / name).write_bytes(png_bytes(synthetic_image(seed * 1000 + i)))
            value = mos[i] if mos is not None else round(float(rng.uniform(1, 100)), 2)
            rows.append(f"{name},{value!r}")
        rows.extend(extra_rows)
        manifest = tmp_path / f"manifest_{n}_{seed}.csv"
        manifest.write_text("image_name,MOS\n" + "\n".join(rows) + "\n")
        return manifest, images

    return _make


# ---------------------------------------------------------------- tokenizer vocabularies


@pytest.fixture(scope="session")
def clip_vocab_path():
    """The published CLIP BPE file, if a local copy exists (open_clip ships one)."""
    env = os.environ.get("IQA_TOKENIZER")
    if env and Path(env).is_file():
        return Path(env)
    open_clip = pytest.importorskip("open_clip")
    path = Path(open_clip.__file__).parent / "bpe_simple_vocab_16e6.txt.gz"
    if not path.is_file():
        pytest.skip("no CLIP BPE vocabulary available")
    return path


@pytest.fixture(scope="session")
def tiny_vocab_path(tmp_path_factory):
    merges = ["t h", "th e</w>", "o t", "p h", "ph ot", "phot o</w>", "g o", "o d</w>", "go od</w>", "b a", "ba d</w>"]
    path = tmp_path_factory.mktemp("vocab") / "tiny_bpe.txt.gz"
    with gzip.open(path, "wt", encoding="utf-8") as fh:
        fh.write("#version: 0.2\n" + "\n".join(merges) + "\n")
    return path


# ---------------------------------------------------------------- tiny ONNX encoders


def build_image_encoder(path: Path, dim: int, fixed_size: int | None = None, seed: int = 0, metadata=None):
    onnx = pytest.importorskip("onnx")
    from onnx import TensorProto, helper, numpy_helper

    rng = np.random.default_rng(seed)
    h = w = fixed_size if fixed_size else None
    x = helper.make_tensor_value_info("pixel_values", TensorProto.FLOAT, ["batch", 3, h or "height", w or "width"])
    y = helper.make_tensor_value_info("image_embeds", TensorProto.FLOAT, ["batch", dim])
    weight = numpy_helper.from_array(rng.normal(size=(6, dim)).astype(np.float32), "W")
    bias = numpy_helper.from_array(rng.normal(size=(dim,)).astype(np.float32), "B")
    nodes = [
        # per-channel mean and mean of squares: cheap brightness/contrast features
        helper.make_node("GlobalAveragePool", ["pixel_values"], ["gap"]),
        helper.make_node("Mul", ["pixel_values", "pixel_values"], ["sq"]),
        helper.make_node("GlobalAveragePool", ["sq"], ["gap_sq"]),
        helper.make_node("Concat", ["gap", "gap_sq"], ["stats"], axis=1),
        helper.make_node("Flatten", ["stats"], ["feat"], axis=1),
        helper.make_node("Gemm", ["feat", "W", "B"], ["image_embeds"]),
    ]
    graph = helper.make_graph(nodes, "tiny_image_encoder", [x], [y], initializer=[weight, bias])
    model = helper.make_model(graph, opset_imports=[helper.make_opsetid("", 13)])
    model.ir_version = 8
    for k, v in (metadata or {}).items():
        entry = model.metadata_props.add()
        entry.key, entry.value = k, v
    onnx.checker.check_model(model)
    onnx.save(model, str(path))
    return path


def build_text_encoder(path: Path, dim: int, vocab_size: int, context: int = 77, seed: int = 1, dtype="int64"):
    onnx = pytest.importorskip("onnx")
    from onnx import TensorProto, helper, numpy_helper

    rng = np.random.default_rng(seed)
    elem = TensorProto.INT64 if dtype == "int64" else TensorProto.INT32
    x = helper.make_tensor_value_info("input_ids", elem, ["batch", context])
    y = helper.make_tensor_value_info("text_embeds", TensorProto.FLOAT, ["batch", dim])
    table = numpy_helper.from_array(rng.normal(size=(vocab_size, dim)).astype(np.float32), "E")
    nodes = [
        helper.make_node("Gather", ["E", "input_ids"], ["tok"], axis=0),
        helper.make_node("ReduceMean", ["tok"], ["text_embeds"], axes=[1], keepdims=0),
    ]
    graph = helper.make_graph(nodes, "tiny_text_encoder", [x], [y], initializer=[table])
    model = helper.make_model(graph, opset_imports=[helper.make_opsetid("", 13)])
    model.ir_version = 8
    onnx.checker.check_model(model)
    onnx.save(model, str(path))
    return path


@pytest.fixture
def tiny_models(tmp_path, tiny_vocab_path):
    """(image_model, text_model, vocab) for a variable-size 16-dim export."""
    from promptiqa.embedding.tokenizer import BPETokenizer

    vocab = BPETokenizer(tiny_vocab_path)
    image = build_image_encoder(tmp_path / "image.onnx", 16, metadata={"model_id": "tiny-test"})
    text = build_text_encoder(tmp_path / "text.onnx", 16, vocab.vocab_size)
    return image, text, tiny_vocab_path
