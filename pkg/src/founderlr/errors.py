"""Exception types shared across the package."""


class InputError(ValueError):
    """Malformed or inconsistent input (case files, frequency tables, structures)."""


class NumericalError(ArithmeticError):
    """A computation could not produce a finite, well-defined result."""
