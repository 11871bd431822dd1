"""Exception types shared by the model, the weights container and the CLI."""


class ModeError(ValueError):
    """Operation not available for this model variant (e.g. streaming a bidirectional model)."""


class WeightsError(Exception):
    """Base class for unusable weights files; ``code`` names the failure kind."""

    code = "weights-error"


class BadMagicError(WeightsError):
    code = "bad-magic"


class UnsupportedVersionError(WeightsError):
    code = "unsupported-version"


class CorruptFileError(WeightsError):
    code = "corrupt-file"


class UnknownTensorError(WeightsError):
    code = "unknown-tensor"


class MissingTensorError(WeightsError):
    code = "missing-tensor"


class ShapeMismatchError(WeightsError):
    code = "shape-mismatch"


class ConfigError(WeightsError):
    code = "config-mismatch"
