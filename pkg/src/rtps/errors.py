"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A parameter or constant is outside its legal range."""


class SimulationError(RuntimeError):
    """The event loop reached an inconsistent state."""


class ScenarioError(ValueError):
    """A scenario file failed to parse or validate.

    ``line`` is the 1-based line number the problem was found on, or None when
    the problem is not tied to a single line (e.g. a missing section).
    """

    def __init__(self, message, line=None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
