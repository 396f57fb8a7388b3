"""Exception hierarchy. ``category`` is what the CLI prints on failure."""


class DirfolioError(Exception):
    category = "error"
    exit_code = 1


class SchemaError(DirfolioError):
    category = "schema"
    exit_code = 2


class EmptyInputError(DirfolioError):
    category = "empty-input"
    exit_code = 2


class DuplicateKeyError(DirfolioError):
    category = "duplicate-key"
    exit_code = 2


class DataError(DirfolioError):
    category = "data"
    exit_code = 2


class SplitError(DirfolioError):
    category = "split"
    exit_code = 2


class WindowError(DirfolioError):
    category = "window"
    exit_code = 3


class RangeError(DirfolioError):
    category = "range"
    exit_code = 3


class ParameterError(DirfolioError, ValueError):
    category = "parameter"
    exit_code = 4


class ShapeError(DirfolioError, ValueError):
    category = "shape"
    exit_code = 4


class DegenerateMaskError(DirfolioError):
    category = "degenerate-mask"
    exit_code = 4


class FeasibilityError(DirfolioError):
    category = "feasibility"
    exit_code = 4


class ActionError(DirfolioError):
    category = "action"
    exit_code = 4


class ConfigError(DirfolioError):
    category = "config"
    exit_code = 5


class TrainingError(DirfolioError):
    category = "training"
    exit_code = 6


class RolloutError(DirfolioError):
    category = "rollout"
    exit_code = 6


class VersionError(DirfolioError):
    category = "version"
    exit_code = 7
