"""Library-specific exceptions."""

from pathlib import Path


class SemalignError(Exception):
    """Base class for every error raised by semalign."""


class ShapeError(SemalignError):
    """Raised when operand shapes are incompatible."""

    def __init__(self, operation: str, *shapes: tuple[int, ...]) -> None:
        self.operation = operation
        self.shapes = shapes
        rendered = " and ".join("x".join(str(n) for n in shape) for shape in shapes)
        super().__init__(f"{operation}: incompatible shapes {rendered}")


class ContractError(SemalignError):
    """Raised when an input violates a documented precondition."""


class EvaluationError(SemalignError):
    """Raised when a scalar objective evaluates to a non-finite value."""


class InputFileError(SemalignError):
    """Raised when an input file cannot be read."""

    def __init__(self, path: str | Path, reason: str = "cannot be read") -> None:
        self.path = str(path)
        super().__init__(f"{self.path}: {reason}")


class EmbeddingParseError(SemalignError):
    """Raised when an embedding file is malformed."""

    def __init__(self, path: str | Path, line: int, reason: str) -> None:
        self.path = str(path)
        self.line = line
        self.reason = reason
        super().__init__(f"{self.path}:{line}: {reason}")


class ConfigError(SemalignError):
    """Raised for invalid hyperparameters or configuration files."""


class DegenerateFeatureError(SemalignError):
    """Raised when a projected feature row has (near) zero norm."""

    def __init__(self, row: int, norm: float) -> None:
        self.row = row
        self.norm = norm
        super().__init__(f"projected feature row {row} has norm {norm:.3e}; cosine undefined")


class UndefinedRateError(SemalignError):
    """Raised when a confusion rate is requested for a class with no samples."""

    def __init__(self, class_id: int) -> None:
        self.class_id = class_id
        super().__init__(f"class {class_id} has no evaluated samples")


class GenerationError(SemalignError):
    """Raised when a synthetic dataset cannot satisfy its construction constraints."""


class TrainingDivergedError(SemalignError):
    """Raised when a training loss becomes non-finite."""

    def __init__(self, stage: str, step: int, cell_id: str | None = None) -> None:
        self.stage = stage
        self.step = step
        self.cell_id = cell_id
        super().__init__(stage, step)

    def __str__(self) -> str:
        where = f" in cell {self.cell_id}" if self.cell_id else ""
        return f"{self.stage} training diverged at step {self.step}{where}"


class GradientCheckError(SemalignError):
    """Raised when analytic gradients disagree with finite differences."""

    def __init__(self, failures: dict[str, float], tolerance: float) -> None:
        self.failures = failures
        self.tolerance = tolerance
        listed = ", ".join(f"{name}={err:.3e}" for name, err in failures.items())
        super().__init__(f"gradient check above {tolerance:g}: {listed}")
