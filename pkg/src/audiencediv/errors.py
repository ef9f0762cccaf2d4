class InputError(ValueError):
    """Malformed or inconsistent input data (CLI exit code 1)."""


class ComputationError(RuntimeError):
    """A numerical routine failed on valid input (CLI exit code 2)."""
