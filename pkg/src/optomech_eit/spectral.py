"""Closed-form steady-state probe response and transparency-window analysis.

The output field at the probe frequency, normalized to the probe amplitude, is

    eps_out_plus(delta) = 2*kappa / D(delta)
    D(delta) = kappa - i*(delta - omega_ref)
               + sum_n (G_n^2/2) / (gamma_n/2 - i*(delta - omega_n))

with omega_ref the arithmetic mean of the membrane frequencies. This is the
resonance-approximated response (valid for omega_n >> kappa and probe near the
mechanical sidebands); the unapproximated linear response lives in
:mod:`optomech_eit.dynamics`. The in-phase quadrature v_p = Re(eps_out_plus)
is the absorptive response and dips toward zero at each transparency window;
v_tilde_p = Im(eps_out_plus) is the dispersive response whose steep negative
slope at a dip produces negative group velocities.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DivergentGroupVelocity,
    GridTooCoarse,
    IndexOutOfRange,
    InvalidGrid,
)

# Detection defaults; both are judgment calls, not physics, and can be
# overridden per call (or via the [windows] config section).
DIP_DEPTH_RATIO = 0.5
CENTER_TOL_KAPPA = 1e-6
MIN_POINTS_PER_FWHM = 5
POLE_TOL = 1e-12

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0

THREADS_ENV_VAR = "OPTOMECH_EIT_THREADS"


def output_probe_coefficient(delta, kappa, omega_ref, omegas, gammas, couplings):
    """Normalized output-field coefficient at the probe frequency.

    Pure function of the raw parameters, vectorized over `delta`; the
    membrane triples are parallel sequences (omega_n, gamma_n, G_n).
    """
    delta = np.asarray(delta, dtype=float)
    omegas = np.asarray(omegas, dtype=float)
    gammas = np.asarray(gammas, dtype=float)
    couplings = np.asarray(couplings, dtype=float)
    d = delta[..., np.newaxis] - omegas
    terms = (0.5 * couplings**2) / (0.5 * gammas - 1j * d)
    denom = kappa - 1j * (delta - omega_ref) + terms.sum(axis=-1)
    return 2.0 * kappa / denom


def _coefficient_grid(system, delta):
    omegas, gammas, _, G = system.membrane_arrays()
    return output_probe_coefficient(
        delta, system.cavity.kappa, system.omega_mean, omegas, gammas, G
    )


def _derivative_grid(system, delta):
    """Analytic d(eps_out_plus)/d(delta), vectorized over delta."""
    delta = np.asarray(delta, dtype=float)
    omegas, gammas, _, G = system.membrane_arrays()
    kappa = system.cavity.kappa
    omegas = np.asarray(omegas)
    gammas = np.asarray(gammas)
    G = np.asarray(G)
    d = delta[..., np.newaxis] - omegas
    inner = 0.5 * gammas - 1j * d
    denom = kappa - 1j * (delta - system.omega_mean) + ((0.5 * G**2) / inner).sum(axis=-1)
    dprime = -1j + (1j * (0.5 * G**2) / inner**2).sum(axis=-1)
    return -2.0 * kappa * dprime / denom**2


def _group_velocity_grid(system, delta):
    """v_g/c over a grid; pole points come out as +/-inf (scalar API raises)."""
    delta = np.asarray(delta, dtype=float)
    v_tilde = _coefficient_grid(system, delta).imag
    slope = _derivative_grid(system, delta).imag
    denom = 1.0 + 0.5 * v_tilde + 0.5 * delta * slope
    with np.errstate(divide="ignore"):
        return 1.0 / denom


@dataclass(frozen=True)
class ProbeResponse:
    """Output probe coefficient and its quadratures at one detuning."""

    delta: float
    eps_out_plus: complex
    v_p: float
    v_tilde_p: float

    @classmethod
    def from_coefficient(cls, delta, eps):
        eps = complex(eps)
        return cls(delta=float(delta), eps_out_plus=eps, v_p=eps.real, v_tilde_p=eps.imag)


@dataclass(frozen=True)
class TransparencyWindow:
    """One detected transparency dip in the absorptive quadrature v_p."""

    center_delta: float
    depth: float
    fwhm_measured: float
    fwhm_analytic: float


@dataclass(frozen=True)
class SpectrumSweep:
    """Probe response sampled on a strictly increasing detuning grid."""

    grid: np.ndarray
    responses: tuple[ProbeResponse, ...]
    windows: tuple[TransparencyWindow, ...] = field(default=())

    def __post_init__(self):
        if len(self.responses) != len(self.grid):
            raise InvalidGrid("responses and grid length differ")
        if not np.all(np.diff(self.grid) > 0):
            raise InvalidGrid("sweep grid must be strictly increasing")

    def v_p_array(self):
        return np.array([r.v_p for r in self.responses])

    def v_tilde_p_array(self):
        return np.array([r.v_tilde_p for r in self.responses])


def probe_response(system, delta):
    """Evaluate the steady-state output probe coefficient at one detuning.

    Parameters
    ----------
    system : SystemModel
    delta : float
        Probe-coupling detuning (rad/s).

    Returns
    -------
    ProbeResponse
    """
    if not math.isfinite(delta):
        raise InvalidGrid(f"delta must be finite, got {delta!r}")
    eps = complex(_coefficient_grid(system, float(delta)))
    return ProbeResponse.from_coefficient(delta, eps)


def response_derivative(system, delta):
    """Analytic detuning derivative of the output coefficient (1/(rad/s)).

    Closed form: with denominator D(delta), returns -2*kappa*D'(delta)/D^2.
    """
    if not math.isfinite(delta):
        raise InvalidGrid(f"delta must be finite, got {delta!r}")
    return complex(_derivative_grid(system, float(delta)))


def group_velocity(system, delta):
    """Normalized group velocity v_g/c of the output probe field.

    v_g/c = 1 / (1 + v_tilde_p/2 + (delta/2) * d(v_tilde_p)/d(delta)), with
    the absolute detuning delta (rad/s) multiplying the slope so the product
    is dimensionless. Negative values indicate superluminal propagation.

    Raises
    ------
    DivergentGroupVelocity
        If the denominator vanishes (a pole of the formula, not physics).
    """
    if not math.isfinite(delta):
        raise InvalidGrid(f"delta must be finite, got {delta!r}")
    v_tilde = complex(_coefficient_grid(system, float(delta))).imag
    slope = complex(_derivative_grid(system, float(delta))).imag
    denom = 1.0 + 0.5 * v_tilde + 0.5 * delta * slope
    if abs(denom) < POLE_TOL:
        raise DivergentGroupVelocity(delta)
    return 1.0 / denom


def fwhm_analytic(system, n, merged=False):
    """Analytic linewidth estimate gamma_n + G_n^2/kappa of one dip (rad/s).

    With ``merged=True`` the couplings of all membranes degenerate with
    membrane `n` (same frequency) are summed, giving the width of their
    merged window: gamma + L*G^2/kappa for L identical membranes.
    """
    if not 0 <= n < system.n_membranes:
        raise IndexOutOfRange(n, system.n_membranes)
    kappa = system.cavity.kappa
    mode = system.membranes[n]
    if not merged:
        return mode.gamma + system.G[n] ** 2 / kappa
    cluster = _degenerate_cluster(system, mode.omega)
    gsq = math.fsum(system.G[j] ** 2 for j in cluster)
    gamma = math.fsum(system.membranes[j].gamma for j in cluster) / len(cluster)
    return gamma + gsq / kappa


def _degenerate_cluster(system, omega, rel_tol=1e-9):
    return [
        j
        for j, m in enumerate(system.membranes)
        if abs(m.omega - omega) <= rel_tol * omega
    ]


def _thread_count():
    raw = os.environ.get(THREADS_ENV_VAR, "")
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(n, 1)


def sweep_spectrum(system, delta_min, delta_max, points,
                   depth_ratio=DIP_DEPTH_RATIO, center_tol=None):
    """Sample the probe response on a uniform detuning grid and detect windows.

    Grid points are independent pure evaluations, so the optional
    parallelism (capped by the OPTOMECH_EIT_THREADS environment variable)
    is bit-identical to sequential evaluation. `depth_ratio` and
    `center_tol` tune the window detection (see
    :func:`find_transparency_windows`).

    Raises
    ------
    InvalidGrid
        If delta_min >= delta_max or points < 2.
    GridTooCoarse
        If the grid cannot resolve the narrowest expected window.
    """
    if not (math.isfinite(delta_min) and math.isfinite(delta_max)) or delta_min >= delta_max:
        raise InvalidGrid(f"need delta_min < delta_max, got [{delta_min!r}, {delta_max!r}]")
    points = int(points)
    if points < 2:
        raise InvalidGrid(f"need at least 2 grid points, got {points}")

    grid = np.linspace(delta_min, delta_max, points)
    threads = _thread_count()
    if threads > 1 and points >= 4 * threads:
        chunks = np.array_split(np.arange(points), threads)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda idx: _coefficient_grid(system, grid[idx]), chunks))
        eps = np.concatenate(parts)
    else:
        eps = _coefficient_grid(system, grid)

    responses = tuple(
        ProbeResponse.from_coefficient(d, e) for d, e in zip(grid, eps)
    )
    sweep = SpectrumSweep(grid=grid, responses=responses)
    windows = find_transparency_windows(
        system, sweep, depth_ratio=depth_ratio, center_tol=center_tol
    )
    return SpectrumSweep(grid=grid, responses=responses, windows=tuple(windows))


def _check_grid_density(system, grid):
    spacing = (grid[-1] - grid[0]) / (len(grid) - 1)
    lo, hi = grid[0], grid[-1]
    widths = [
        m.gamma + system.G[j] ** 2 / system.cavity.kappa
        for j, m in enumerate(system.membranes)
        if system.G[j] > 0 and lo <= m.omega <= hi
    ]
    if not widths:
        return
    narrowest = min(widths)
    if narrowest / spacing < MIN_POINTS_PER_FWHM:
        span = grid[-1] - grid[0]
        required = math.ceil(MIN_POINTS_PER_FWHM * span / narrowest) + 1
        raise GridTooCoarse(required)


def _walk_to_flank_max(values, i, step):
    """Index of the first local maximum walking from i in direction step.

    Stops at the grid boundary, which then serves as the flank value.
    """
    j = i
    while 0 < j < len(values) - 1 and values[j + step] > values[j]:
        j += step
    return j


def _golden_minimize(f, a, b, xtol):
    """Golden-section minimum of f on [a, b] to absolute x-tolerance xtol."""
    x1 = b - _INVPHI * (b - a)
    x2 = a + _INVPHI * (b - a)
    f1, f2 = f(x1), f(x2)
    while (b - a) > xtol:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _INVPHI * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _INVPHI * (b - a)
            f2 = f(x2)
    return 0.5 * (a + b)


def _bisect_crossing(f, a, b, level, xtol):
    """Point where f crosses `level` on [a, b], assuming f(a) < level < f(b)."""
    fa = f(a) - level
    for _ in range(200):
        if (b - a) <= xtol:
            break
        mid = 0.5 * (a + b)
        fm = f(mid) - level
        if (fa < 0) == (fm < 0):
            a, fa = mid, fm
        else:
            b = mid
    return 0.5 * (a + b)


def find_transparency_windows(system, sweep, depth_ratio=DIP_DEPTH_RATIO, center_tol=None):
    """Locate transparency dips in the absorptive quadrature of a sweep.

    A grid local minimum of v_p qualifies as a window when its value is below
    ``depth_ratio`` times the smaller of the two flanking local maxima. The
    center is then refined by golden-section minimization (absolute tolerance
    ``center_tol``, default 1e-6*kappa) and the measured FWHM is found by
    bisecting v_p against the half level (depth + flank max)/2 on both flanks.

    Returns
    -------
    list of TransparencyWindow, ordered by center detuning.

    Raises
    ------
    GridTooCoarse
        If any expected window would span fewer than 5 grid points.
    """
    grid = np.asarray(sweep.grid)
    _check_grid_density(system, grid)
    kappa = system.cavity.kappa
    xtol = CENTER_TOL_KAPPA * kappa if center_tol is None else center_tol
    v = sweep.v_p_array()

    def v_p_at(x):
        return float(np.real(_coefficient_grid(system, float(x))))

    windows = []
    for i in range(1, len(grid) - 1):
        if not (v[i] < v[i - 1] and v[i] <= v[i + 1]):
            continue
        ileft = _walk_to_flank_max(v, i, -1)
        iright = _walk_to_flank_max(v, i, +1)
        local_max = min(v[ileft], v[iright])
        if not v[i] < depth_ratio * local_max:
            continue
        center = _golden_minimize(v_p_at, grid[i - 1], grid[i + 1], xtol)
        depth = v_p_at(center)
        half = 0.5 * (depth + local_max)
        x_left = _bisect_crossing(lambda x: -v_p_at(x), grid[ileft], center, -half, xtol)
        x_right = _bisect_crossing(v_p_at, center, grid[iright], half, xtol)
        fwhm = x_right - x_left
        nearest = min(
            range(system.n_membranes),
            key=lambda j: abs(system.membranes[j].omega - center),
        )
        windows.append(
            TransparencyWindow(
                center_delta=float(center),
                depth=float(depth),
                fwhm_measured=float(fwhm),
                fwhm_analytic=fwhm_analytic(system, nearest, merged=True),
            )
        )
    return windows
