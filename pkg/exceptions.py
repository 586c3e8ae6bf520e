"""
Error types shared by the editor packages
"""

from typing import List, Optional


class EditorError(Exception):
    """Base class for every error raised by the editor"""


class ValidationError(EditorError, ValueError):
    """Input failed a shape, range or consistency check"""


class InstructionError(ValidationError):
    """Editing instruction is empty or cannot be used"""


class ConfigError(EditorError):
    """Configuration file or values are unusable"""


class ModelNotReadyError(EditorError):
    """A stage needs a trained model that is missing"""


class TrainingDivergedError(EditorError):
    """Loss became non-finite during training"""

    def __init__(self, step: int, losses: dict):
        self.step = step
        self.losses = losses
        detail = ", ".join(f"{name}={value}" for name, value in losses.items())
        super().__init__(f"Training diverged at step {step}: {detail}")


class BenchmarkValidationError(ValidationError):
    """Benchmark manifest has one or more invalid records"""

    def __init__(self, errors: List[str]):
        self.errors = errors
        super().__init__("Invalid benchmark manifest:\n" + "\n".join(errors))


class StageError(EditorError):
    """A pipeline stage failed; the partial artifact is kept"""

    def __init__(self, stage: str, message: str, artifact: Optional[object] = None):
        self.stage = stage
        self.artifact = artifact
        super().__init__(f"Stage '{stage}' failed: {message}")
