"""Provider backed by exported ONNX image and text encoders.

Export contract (not enforced here, only checked where observable):

* image encoder: one float input N x 3 x H x W, one output N x dim. Exports
  with the positional embedding removed declare H and W as symbolic axes and
  accept any resolution; exports with a fixed H x W are fed ``resize:S``
  preprocessed images.
* text encoder: one integer input N x 77 of token ids, one output N x dim.
* both outputs live in the joint space (projection applied).

Tensor names are read from the model, never assumed. If the model metadata
carries ``normalizes_output=true`` the descriptor reports it.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import ContractViolation, ProviderError
from ..images import PreprocessPolicy, decode_image, to_clip_tensor
from .base import EmbeddingProvider, ImageInput
from .tokenizer import BPETokenizer

logger = logging.getLogger(__name__)

_INT_TYPES = {"tensor(int64)": np.int64, "tensor(int32)": np.int32}
FALLBACK_RESIZE = 224


def _load_session(path: Path, threads: int):
    import onnxruntime as ort

    if not path.is_file():
        raise ProviderError(f"model file not found: {path}")
    opts = ort.SessionOptions()
    opts.intra_op_num_threads = threads
    opts.inter_op_num_threads = 1
    opts.execution_mode = ort.ExecutionMode.ORT_SEQUENTIAL
    try:
        return ort.InferenceSession(str(path), sess_options=opts, providers=["CPUExecutionProvider"])
    except Exception as exc:  # onnxruntime raises its own untyped errors
        raise ProviderError(f"cannot load model {path}: {exc}") from None


def _single_io(session, path: Path):
    inputs, outputs = session.get_inputs(), session.get_outputs()
    if len(inputs) != 1 or len(outputs) < 1:
        raise ProviderError(f"{path}: expected exactly one input, got {len(inputs)}")
    return inputs[0], outputs[0]


def _static_dim(value) -> int | None:
    return value if isinstance(value, int) and value > 0 else None


class NeuralProvider(EmbeddingProvider):
    """CLIP-style encoders executed with onnxruntime on CPU.

    Args:
        image_model_path: exported image encoder.
        text_model_path: exported text encoder.
        tokenizer: path to the BPE vocabulary, or a ready ``BPETokenizer``.
        preprocess: ``"native"``, ``"resize:S"`` or ``"auto"`` (native when the
            export accepts variable sizes, else resize to its declared size).
        normalize: L2-normalize every embedding before returning it.
        model_id: identifier recorded in reports and cache keys; defaults to
            the two model file names.
        threads: intra-op threads per inference call.
    """

    # onnxruntime sessions support concurrent run() calls
    concurrency_safe = True

    def __init__(
        self,
        image_model_path: str | Path,
        text_model_path: str | Path,
        tokenizer: str | Path | BPETokenizer,
        preprocess: str = "auto",
        normalize: bool = False,
        model_id: str | None = None,
        threads: int = 1,
    ):
        image_model_path, text_model_path = Path(image_model_path), Path(text_model_path)
        self._image_sess = _load_session(image_model_path, threads)
        self._text_sess = _load_session(text_model_path, threads)
        self.tokenizer = tokenizer if isinstance(tokenizer, BPETokenizer) else BPETokenizer(tokenizer)

        img_in, img_out = _single_io(self._image_sess, image_model_path)
        txt_in, txt_out = _single_io(self._text_sess, text_model_path)
        self._image_io = (img_in.name, img_out.name)
        self._text_io = (txt_in.name, txt_out.name)

        if len(img_in.shape) != 4:
            raise ProviderError(f"image encoder input must be 4-D, got {img_in.shape}")
        if _static_dim(img_in.shape[1]) not in (None, 3):
            raise ProviderError(f"image encoder expects {img_in.shape[1]} channels, not 3")
        self.fixed_size = tuple(_static_dim(d) for d in img_in.shape[2:])
        self.variable_size = self.fixed_size == (None, None)
        self.preprocess = self._resolve_policy(preprocess)

        if txt_in.type not in _INT_TYPES:
            raise ProviderError(f"text encoder input must be int32/int64, got {txt_in.type}")
        self._token_dtype = _INT_TYPES[txt_in.type]
        ctx = _static_dim(txt_in.shape[1]) if len(txt_in.shape) == 2 else None
        if ctx is not None and ctx != self.tokenizer.context_length:
            raise ProviderError(
                f"text encoder context is {ctx}, tokenizer produces {self.tokenizer.context_length}"
            )

        dim = _static_dim(txt_out.shape[-1]) or _static_dim(img_out.shape[-1])
        if dim is None:
            dim = self._run_text(["a photo."]).shape[1]
        img_dim = _static_dim(img_out.shape[-1])
        if img_dim is not None and img_dim != dim:
            raise ProviderError(f"image encoder width {img_dim} differs from text encoder width {dim}")

        meta = self._image_sess.get_modelmeta().custom_metadata_map
        native_norm = str(meta.get("normalizes_output", "")).lower() == "true"
        if model_id is None:
            model_id = meta.get("model_id") or f"onnx:{image_model_path.name}+{text_model_path.name}"
        super().__init__(model_id, dim, normalize, native_normalized=native_norm)
        logger.info("loaded %s (dim=%d, preprocess=%s)", model_id, dim, self.preprocess)

    def _resolve_policy(self, text: str) -> PreprocessPolicy:
        if text == "auto":
            if self.variable_size:
                return PreprocessPolicy("native")
            side = self.fixed_size[0] or self.fixed_size[1] or FALLBACK_RESIZE
            return PreprocessPolicy("resize", side)
        policy = PreprocessPolicy.parse(text)
        if policy.mode == "native" and not self.variable_size:
            raise ContractViolation(
                f"preprocess 'native' needs a variable-size image encoder; this one is fixed at {self.fixed_size}"
            )
        if policy.mode == "resize":
            for d in self.fixed_size:
                if d is not None and d != policy.size:
                    raise ContractViolation(f"image encoder is fixed at {self.fixed_size}, cannot feed {policy}")
        return policy

    def _run_text(self, prompts: Sequence[str]) -> np.ndarray:
        tokens = self.tokenizer.tokenize(prompts).astype(self._token_dtype)
        name_in, name_out = self._text_io
        try:
            (out,) = self._text_sess.run([name_out], {name_in: tokens})
        except Exception as exc:
            raise ProviderError(f"text encoder failed: {exc}") from None
        return np.asarray(out)

    def _embed_image(self, image: ImageInput) -> np.ndarray:
        pixels = to_clip_tensor(decode_image(image.data), self.preprocess)
        name_in, name_out = self._image_io
        try:
            (out,) = self._image_sess.run([name_out], {name_in: pixels})
        except Exception as exc:
            raise ProviderError(f"image encoder failed on {image.id!r}: {exc}") from None
        return np.asarray(out)[0]

    def _embed_texts(self, prompts: Sequence[str]) -> list[np.ndarray]:
        out = self._run_text(prompts)
        if out.shape[0] != len(prompts):
            raise ProviderError(f"text encoder returned {out.shape[0]} rows for {len(prompts)} prompts")
        return list(out)
