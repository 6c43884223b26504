"""Exception types shared across the package."""


class BdnetError(Exception):
    """Base class for all package errors."""


class ShapeError(BdnetError, ValueError):
    """Tensor shape incompatible with the operation."""


class ArchitectureError(BdnetError, ValueError):
    """Layer specification or architecture/input mismatch."""


class EmptyBatchError(BdnetError, ValueError):
    """Training step received no samples."""


class ClassIndexError(BdnetError, IndexError):
    """Class index outside [0, class_count)."""


class CongruenceError(BdnetError, ValueError):
    """Gradient or moment tensors not shape-congruent with parameters."""


class MaskParameterError(BdnetError, ValueError):
    """Invalid static-mask generation parameters."""


class FormatError(BdnetError, ValueError):
    """Malformed binary file (bad magic, truncation, count mismatch)."""


class MaskFormatError(FormatError):
    pass


class CheckpointFormatError(FormatError):
    pass


class IdxFormatError(FormatError):
    pass


class SplitPlanError(BdnetError, ValueError):
    """Split fractions invalid."""


class EmptySourceError(BdnetError, ValueError):
    """Injection pool contains no samples of the source class."""


class EmptyEvaluationError(BdnetError, ValueError):
    """Evaluation set empty or lacks the required class."""


class EmptyInputError(BdnetError, ValueError):
    """Operation requires a nonempty input collection."""


class DegenerateGradientError(BdnetError, ArithmeticError):
    """Boundary-search gradient too small to define a step direction."""


class InjectionSpecError(BdnetError, ValueError):
    """Invalid injection specification."""


class ScenarioError(BdnetError, ValueError):
    """Scenario/split combination cannot be resolved."""


class ConfigError(BdnetError, ValueError):
    """Malformed or incomplete run configuration."""
