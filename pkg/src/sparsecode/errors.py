"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operand shapes do not match."""


class SizeGuardError(ValueError):
    """An exhaustive computation would exceed its enumeration guard.

    ``guard`` names the violated limit so callers (the CLI in particular) can
    report it in machine-readable form.
    """

    def __init__(self, guard: str, message: str):
        super().__init__(f"{guard}: {message}")
        self.guard = guard
