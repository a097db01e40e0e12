from .base import EmbeddingProvider, ImageInput, ProviderDescriptor, l2_normalize
from .mock import MockProvider, mock_provider


def neural_provider(image_model_path, text_model_path, tokenizer_spec, preprocess_policy="auto", **kwargs):
    from .neural import NeuralProvider

    return NeuralProvider(image_model_path, text_model_path, tokenizer_spec, preprocess_policy, **kwargs)


__all__ = [
    "EmbeddingProvider",
    "ImageInput",
    "MockProvider",
    "ProviderDescriptor",
    "l2_normalize",
    "mock_provider",
    "neural_provider",
]
