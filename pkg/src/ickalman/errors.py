"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """A model, sampler, or run configuration is internally inconsistent
    (dimension mismatches, invalid schemes, bad parameter ranges)."""


class NumericalError(ArithmeticError):
    """A linear-algebra step is too ill-conditioned to trust. The message
    carries the offending condition-number or denominator estimate."""


class ProgramError(ValueError):
    """A tape program failed static validation. The message carries the
    index of the offending instruction."""


class TapeRuntimeError(RuntimeError):
    """A tape program failed while executing (e.g. division by a
    near-zero scalar). The message carries the instruction index."""


class SchemaError(ValueError):
    """A dataset or prediction file does not match the expected schema
    or schema version."""


class AlignmentError(ValueError):
    """Two prediction files (or a prediction file and a dataset) do not
    describe the same batch of examples."""
