"""Exception hierarchy and physics-regime warnings.

Two error families matter to callers: :class:`ConfigError` covers invalid
parameters, config files, and call arguments (CLI exit code 2), while
:class:`SimulationError` covers numerical failures at run time (exit code 1).
"""


class OptomechError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(OptomechError):
    """Invalid parameter set, configuration input, or call arguments."""


class SimulationError(OptomechError):
    """Numerical failure while running a simulation."""


class EmptyMembraneList(ConfigError):
    def __init__(self):
        super().__init__("a system needs at least one membrane mode")


class NonPositiveRate(ConfigError):
    def __init__(self, name, value):
        self.name = name
        self.value = value
        super().__init__(f"{name} must be positive, got {value!r}")


class OverdeterminedDrive(ConfigError):
    def __init__(self):
        super().__init__("give either the coupling power or eps_l, not both")


class UnderdeterminedDrive(ConfigError):
    def __init__(self):
        super().__init__("the drive needs either the coupling power or eps_l")


class UnknownConfigKey(ConfigError):
    def __init__(self, section, key):
        self.section = section
        self.key = key
        super().__init__(f"unknown key {key!r} in [{section}]")


class InvalidGrid(ConfigError):
    pass


class GridTooCoarse(ConfigError):
    def __init__(self, required_points, message=None):
        self.required_points = required_points
        super().__init__(
            message
            or f"sweep grid too coarse to resolve the narrowest transparency "
               f"window; use at least {required_points} points"
        )


class IndexOutOfRange(ConfigError, IndexError):
    def __init__(self, index, count):
        self.index = index
        self.count = count
        super().__init__(f"membrane index {index} out of range for {count} membranes")


class DivergentGroupVelocity(SimulationError):
    def __init__(self, delta):
        self.delta = delta
        super().__init__(
            f"group-velocity denominator vanishes at delta={delta!r} rad/s "
            f"(pole of the dispersion formula, not a physical result)"
        )


class StepSizeUnderflow(SimulationError):
    def __init__(self, message):
        super().__init__(f"integrator step size underflow: {message}")


class NonFiniteState(SimulationError):
    def __init__(self, t):
        self.t = t
        super().__init__(f"state became non-finite at t={t:g} s")


class NoRetrievedPeak(SimulationError):
    def __init__(self, read_window_max):
        self.read_window_max = read_window_max
        super().__init__(
            f"no retrieved output peak: read-window maximum "
            f"{read_window_max:.3e} below threshold (probe detuning likely "
            f"off every mechanical resonance)"
        )


class NoConvergence(SimulationError):
    def __init__(self, t_elapsed):
        self.t_elapsed = t_elapsed
        super().__init__(
            f"steady state not reached after {t_elapsed:g} s of simulated time"
        )


class RegimeWarning(UserWarning):
    """A modeling assumption is violated; results may be outside the intended regime."""
