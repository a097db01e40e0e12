"""Exception hierarchy shared by every promptiqa module."""


class IQAError(Exception):
    """Base class for all promptiqa errors."""


class ContractViolation(IQAError, ValueError):
    """An operation was called with arguments outside its domain."""


class DegenerateInputError(IQAError, ValueError):
    """Inputs are well-formed but the formula is undefined for them."""


class PairScoringError(IQAError):
    """Scoring failed for one antonym pair; carries the pair index."""

    def __init__(self, index: int, label: str, cause: Exception):
        self.index = index
        self.label = label
        super().__init__(f"pair {index} ({label!r}): {cause}")


class BankValidationError(IQAError, ValueError):
    pass


class ManifestError(IQAError, ValueError):
    pass


class ImageDecodeError(IQAError):
    pass


class TokenizerError(IQAError, ValueError):
    """A prompt could not be tokenized (e.g. it overflows the context)."""

    def __init__(self, message: str, index: int | None = None):
        self.index = index
        if index is not None:
            message = f"prompt {index}: {message}"
        super().__init__(message)


class ProviderError(IQAError):
    """Model loading or inference failed."""


class EvaluationError(IQAError):
    """No image in the manifest could be scored."""
