class ConfigError(ValueError):
    """Configuration failed schema or invariant validation."""

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class SimulationFault(RuntimeError):
    """Unrecoverable model state, e.g. two vehicles overlapping in a lane."""

    def __init__(self, message, dump=None):
        super().__init__(message)
        self.dump = dump or {}


class OverlapFault(SimulationFault):
    pass


class JoinRejected(ValueError):
    pass
