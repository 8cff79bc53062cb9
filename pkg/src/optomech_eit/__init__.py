"""Simulator for multi-window optomechanically induced transparency.

A Fabry-Perot cavity holds N near-degenerate mechanical membranes that couple
dispersively to the intracavity field. A strong coupling laser dresses the
system; a weak probe then sees up to N narrow transparency windows with steep
anomalous dispersion (negative group velocities), and Gaussian coupling
pulses can write a probe pulse into long-lived mechanical excitations and
read it back out.

The package splits into:

- :mod:`optomech_eit.core` - validated parameter model and derived rates
- :mod:`optomech_eit.spectral` - closed-form probe response, group
  velocities, transparency-window detection
- :mod:`optomech_eit.dynamics` - nonlinear mean-field and harmonic-balance
  time integration, pulse storage/retrieval, steady-state cross-checks
- :mod:`optomech_eit.cli` - the ``optomech-eit`` command-line tool
"""

__version__ = "1.0.0"

from .core import (
    CavityParams,
    DriveParams,
    MembraneMode,
    SystemModel,
    build_system,
)
from .dynamics import (
    CrosscheckReport,
    Drive,
    HBState,
    MeanFieldState,
    PulseProtocol,
    StorageReport,
    TimeSeries,
    conjugation_audit,
    exact_linear_response,
    exact_sideband_amplitudes,
    harmonic_balance_rhs,
    integrate,
    mean_field_rhs,
    static_operating_point,
    steady_state_crosscheck,
    storage_retrieval,
)
from .spectral import (
    ProbeResponse,
    SpectrumSweep,
    TransparencyWindow,
    find_transparency_windows,
    fwhm_analytic,
    group_velocity,
    output_probe_coefficient,
    probe_response,
    response_derivative,
    sweep_spectrum,
)
from .config import Scenario, dump_config, load_config, resolve_config
from .presets import PRESETS, preset_raw

__all__ = [
    "__version__",
    "CavityParams", "DriveParams", "MembraneMode", "SystemModel", "build_system",
    "ProbeResponse", "SpectrumSweep", "TransparencyWindow",
    "probe_response", "response_derivative", "group_velocity",
    "sweep_spectrum", "find_transparency_windows", "fwhm_analytic",
    "output_probe_coefficient",
    "PulseProtocol", "Drive", "HBState", "MeanFieldState", "TimeSeries",
    "StorageReport", "CrosscheckReport",
    "mean_field_rhs", "harmonic_balance_rhs", "integrate",
    "storage_retrieval", "steady_state_crosscheck", "exact_linear_response",
    "exact_sideband_amplitudes",
    "static_operating_point", "conjugation_audit",
    "Scenario", "load_config", "resolve_config", "dump_config",
    "PRESETS", "preset_raw",
]
