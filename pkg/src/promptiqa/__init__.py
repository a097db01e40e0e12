"""Zero-shot, interpretable no-reference image quality assessment with
antonym prompt pairs scored through a vision-language embedding model."""

from .errors import IQAError
from .prompt_bank import AntonymPromptPair, PromptBank, clipiqa_bank, default_bank, fingerprint, load_bank, save_bank
from .scoring import DescriptiveScore, QualityReport, descriptive_score, overall_quality, score_image, similarity

__version__ = "0.1.0"

__all__ = [
    "AntonymPromptPair",
    "DescriptiveScore",
    "IQAError",
    "PromptBank",
    "QualityReport",
    "clipiqa_bank",
    "default_bank",
    "descriptive_score",
    "fingerprint",
    "load_bank",
    "overall_quality",
    "save_bank",
    "score_image",
    "similarity",
]
