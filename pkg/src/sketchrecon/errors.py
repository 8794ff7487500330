"""Exception types shared across the toolkit."""


class SketchReconError(Exception):
    """Base class for all toolkit errors."""


class ParseError(SketchReconError):
    """A file could not be parsed as a sketch document."""


class ValidationError(SketchReconError):
    """A parsed object violates one of its invariants.

    The message names the first violated invariant (e.g. "timestamps").
    """


class ConfigError(SketchReconError):
    """Unknown or inconsistent configuration values."""


class DegenerateInput(SketchReconError):
    """Input too small or collapsed for the operation (e.g. < 2 points)."""


class EmptySample(SketchReconError):
    """A statistical sample is empty."""


class DomainError(SketchReconError):
    """A numeric argument lies outside its legal domain."""


class InsufficientData(SketchReconError):
    """Not enough labeled rows (e.g. a class is absent) to train or stratify."""


class SchemaMismatch(SketchReconError):
    """Feature count or file schema does not match the model or format."""


class SingularConfiguration(SketchReconError):
    """A junction solve has no unique minimizer (parallel concurrent lines)."""


class NoCycleFound(SketchReconError):
    """No boundary cycle covers a scribble cluster well enough to surface it."""
