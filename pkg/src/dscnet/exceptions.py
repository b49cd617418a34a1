"""Exception hierarchy shared by all dscnet modules."""


class DSCError(Exception):
    """Base class for every error raised deliberately by dscnet."""


class ShapeError(DSCError, ValueError):
    """Operand shapes do not conform."""


class ConfigError(DSCError, ValueError):
    """Invalid model, schedule or run configuration."""


class NumericalError(DSCError, ArithmeticError):
    """A computation produced NaN/Inf or a singular system."""


class FormatError(DSCError, ValueError):
    """A file on disk does not follow its declared format."""

    def __init__(self, path, message):
        self.path = str(path)
        super().__init__(f"{self.path}: {message}")


class MissingArtifactError(DSCError, FileNotFoundError):
    """An upstream pipeline artifact is absent."""

    def __init__(self, path, stage=None):
        self.path = str(path)
        hint = f" (produced by the '{stage}' stage)" if stage else ""
        super().__init__(f"missing artifact {self.path}{hint}")
