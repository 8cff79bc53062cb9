"""Parameter model for a driven Fabry-Perot cavity with N dispersively coupled
membranes.

All frequencies and rates are angular (rad/s) throughout the package; optical
power is in watts and times in seconds. The types here are immutable after
construction and safe to share across concurrent workers.

Conventions
-----------
kappa      cavity amplitude decay rate
delta_eff  effective detuning of the coupling laser from the cavity resonance,
           including the static radiation-pressure shift (an input, not solved
           self-consistently)
g          rescaled single-photon coupling g0*sqrt(hbar/(m*omega)) of one
           membrane; the bare slope g0 and mass never enter on their own
c0         steady intracavity amplitude eps_l/(kappa + i*delta_eff)
G_n        field-enhanced coupling g_n*|c0| of membrane n
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

from .constants import HBAR
from .errors import (
    EmptyMembraneList,
    NonPositiveRate,
    OverdeterminedDrive,
    RegimeWarning,
    UnderdeterminedDrive,
)

# Advisory thresholds for "much smaller than" regime checks.
GAMMA_OVER_KAPPA_WARN = 0.1
PROBE_OVER_COUPLING_WARN = 0.1


def _positive(name, value):
    if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
        raise NonPositiveRate(name, value)
    return float(value)


def _nonnegative(name, value):
    if not (isinstance(value, (int, float)) and math.isfinite(value) and value >= 0):
        raise NonPositiveRate(name, value)
    return float(value)


@dataclass(frozen=True)
class MembraneMode:
    """One mechanical membrane mode.

    Parameters
    ----------
    omega : float
        Mechanical resonance frequency (rad/s).
    gamma : float
        Mechanical energy damping rate (rad/s).
    g : float
        Rescaled single-photon optomechanical coupling rate (rad/s),
        g = g0*sqrt(hbar/(m*omega)) for bare frequency-pull slope g0.
    """

    omega: float
    gamma: float
    g: float

    def __post_init__(self):
        _positive("membrane omega", self.omega)
        _positive("membrane gamma", self.gamma)
        _nonnegative("membrane g", self.g)

    @classmethod
    def from_bare_coupling(cls, omega, gamma, g0, mass):
        """Build a mode from the bare frequency-pull slope and effective mass.

        Parameters
        ----------
        omega, gamma : float
            As in the main constructor (rad/s).
        g0 : float
            Bare coupling slope d(omega_cavity)/dx (rad/s per meter).
        mass : float
            Effective mass of the mode (kg).
        """
        _positive("membrane omega", omega)
        _positive("membrane mass", mass)
        _nonnegative("membrane g0", g0)
        g = g0 * math.sqrt(HBAR / (mass * omega))
        return cls(omega=omega, gamma=gamma, g=g)


@dataclass(frozen=True)
class CavityParams:
    """Cavity and coupling-laser parameters.

    Parameters
    ----------
    kappa : float
        Cavity amplitude decay rate (rad/s).
    delta_eff : float
        Effective coupling-laser detuning from the cavity resonance (rad/s),
        static radiation-pressure shift included.
    omega_c : float
        Coupling-laser angular frequency (rad/s); only used to convert
        optical power to the drive rate eps_l.
    """

    kappa: float
    delta_eff: float
    omega_c: float

    def __post_init__(self):
        _positive("kappa", self.kappa)
        _positive("omega_c", self.omega_c)
        if not math.isfinite(self.delta_eff):
            raise NonPositiveRate("delta_eff", self.delta_eff)


@dataclass(frozen=True)
class DriveParams:
    """Coupling and probe drive amplitudes.

    Exactly one of `power` (optical power in W) or `eps_l` (drive rate in 1/s)
    must be given; with power, eps_l = sqrt(2*kappa*power/(hbar*omega_c)).
    `eps_p` uses the same units as eps_l and defaults to zero (no probe).
    """

    power: float | None = None
    eps_l: float | None = None
    eps_p: float = 0.0

    def __post_init__(self):
        if self.power is not None and self.eps_l is not None:
            raise OverdeterminedDrive()
        if self.power is None and self.eps_l is None:
            raise UnderdeterminedDrive()
        if self.power is not None:
            _nonnegative("coupling power", self.power)
        if self.eps_l is not None:
            _nonnegative("eps_l", self.eps_l)
        _nonnegative("eps_p", self.eps_p)

    def coupling_rate(self, kappa, omega_c):
        """Resolve the coupling drive rate eps_l (1/s)."""
        if self.eps_l is not None:
            return self.eps_l
        return math.sqrt(2.0 * kappa * self.power / (HBAR * omega_c))


@dataclass(frozen=True)
class SystemModel:
    """Validated cavity + membranes + drive with derived quantities.

    Derived fields: `eps_l` (resolved drive rate), `c0` (steady intracavity
    amplitude), `G` (effective coupling rate per membrane), `omega_mean`
    (arithmetic mean of the membrane frequencies) and `weak_coupling`
    (sqrt(2)*G_n < kappa flag per membrane).
    """

    cavity: CavityParams
    membranes: tuple[MembraneMode, ...]
    drive: DriveParams
    eps_l: float
    c0: complex
    G: tuple[float, ...]
    omega_mean: float
    weak_coupling: tuple[bool, ...]

    @property
    def n_membranes(self):
        return len(self.membranes)

    def membrane_arrays(self):
        """(omega, gamma, g, G) as parallel tuples, handy for numpy callers."""
        return (
            tuple(m.omega for m in self.membranes),
            tuple(m.gamma for m in self.membranes),
            tuple(m.g for m in self.membranes),
            self.G,
        )

    def without_coupling(self):
        """The same system with the coupling field switched off (eps_l = 0)."""
        return build_system(
            self.cavity,
            self.membranes,
            DriveParams(eps_l=0.0, eps_p=self.drive.eps_p),
        )


def build_system(cavity, membranes, drive):
    """Validate parameters and compute derived quantities.

    Parameters
    ----------
    cavity : CavityParams
    membranes : sequence of MembraneMode
    drive : DriveParams

    Returns
    -------
    SystemModel

    Raises
    ------
    EmptyMembraneList, NonPositiveRate, OverdeterminedDrive, UnderdeterminedDrive

    Warns
    -----
    RegimeWarning
        When a membrane damping rate is not small against kappa, when the
        system leaves the resolved-sideband regime (kappa >= mean membrane
        frequency), or when the probe is not weak against the coupling drive.
    """
    membranes = tuple(membranes)
    if not membranes:
        raise EmptyMembraneList()

    omega_mean = math.fsum(m.omega for m in membranes) / len(membranes)
    kappa = cavity.kappa
    for i, m in enumerate(membranes):
        if m.gamma >= GAMMA_OVER_KAPPA_WARN * kappa:
            warnings.warn(
                f"membrane {i}: gamma = {m.gamma:.3g} rad/s is not small "
                f"against kappa = {kappa:.3g} rad/s; the narrow-dip modeling "
                f"assumption gamma << kappa is violated",
                RegimeWarning,
                stacklevel=2,
            )
    if kappa >= omega_mean:
        warnings.warn(
            f"kappa = {kappa:.3g} rad/s >= mean membrane frequency "
            f"{omega_mean:.3g} rad/s: outside the resolved-sideband regime",
            RegimeWarning,
            stacklevel=2,
        )

    eps_l = drive.coupling_rate(kappa, cavity.omega_c)
    if drive.eps_p > 0 and eps_l > 0 and drive.eps_p >= PROBE_OVER_COUPLING_WARN * eps_l:
        warnings.warn(
            f"probe amplitude eps_p = {drive.eps_p:.3g} is not weak against "
            f"eps_l = {eps_l:.3g}; first-order-in-probe results degrade",
            RegimeWarning,
            stacklevel=2,
        )

    c0 = eps_l / complex(kappa, cavity.delta_eff) if eps_l else 0j
    mag = abs(c0)
    G = tuple(m.g * mag for m in membranes)
    weak = tuple(math.sqrt(2.0) * Gn < kappa for Gn in G)
    return SystemModel(
        cavity=cavity,
        membranes=membranes,
        drive=drive,
        eps_l=eps_l,
        c0=c0,
        G=G,
        omega_mean=omega_mean,
        weak_coupling=weak,
    )
