"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of a formula."""


class UnsupportedOperation(TypeError):
    """The operation has no meaning for the given AQM kind."""


class SaturationError(DomainError):
    """Load exceeds what the AQM can absorb before drop reaches 100%."""

    def __init__(self, load, max_load):
        self.load = load
        self.max_load = max_load
        super().__init__(
            f"normalized load {load:.6g} exceeds saturation load {max_load:.6g}"
        )


class SimulationUnstable(RuntimeError):
    """The simulated queue grew without bound."""
