import math

import numpy as np
import pytest

from optomech_eit import (
    CavityParams,
    DriveParams,
    MembraneMode,
    build_system,
    fwhm_analytic,
    group_velocity,
    output_probe_coefficient,
    probe_response,
    response_derivative,
    sweep_spectrum,
)
from optomech_eit.errors import (
    DivergentGroupVelocity,
    GridTooCoarse,
    IndexOutOfRange,
    InvalidGrid,
)
from optomech_eit.presets import OMEGA_M, KAPPA, GAMMA
from optomech_eit.spectral import _coefficient_grid

OMEGA_C = 2 * math.pi * 299792458.0 / 1064e-9


def system_with_couplings(omega_factors, coupling_factors, delta_eff=OMEGA_M):
    """System whose effective couplings are coupling_factor*kappa exactly."""
    cav = CavityParams(kappa=KAPPA, delta_eff=delta_eff, omega_c=OMEGA_C)
    eps_l = math.sqrt(2 * KAPPA * 0.04e-6 / (1.054571817e-34 * OMEGA_C))
    c0_mag = eps_l / math.hypot(KAPPA, delta_eff)
    modes = [
        MembraneMode(omega=f * OMEGA_M, gamma=GAMMA, g=c * KAPPA / c0_mag)
        for f, c in zip(omega_factors, coupling_factors)
    ]
    return build_system(cav, modes, DriveParams(eps_l=eps_l))


@pytest.fixture(scope="module")
def fig2_system():
    return system_with_couplings((1.05, 0.95), (0.4, 0.4))


@pytest.fixture(scope="module")
def bare_system():
    return system_with_couplings((1.05, 0.95), (0.0, 0.0))


class TestProbeResponse:
    def test_bare_cavity_peak(self, bare_system):
        # With all couplings off the response is a Lorentzian peaking at 2.
        r = probe_response(bare_system, OMEGA_M)
        assert r.eps_out_plus == pytest.approx(2.0 + 0j, abs=1e-15)
        assert r.v_p == 2.0
        assert r.v_tilde_p == 0.0

    def test_quadratures_are_re_and_im(self, fig2_system):
        r = probe_response(fig2_system, 1.02 * OMEGA_M)
        assert r.v_p == r.eps_out_plus.real
        assert r.v_tilde_p == r.eps_out_plus.imag

    def test_deep_dip_at_membrane_frequency(self, fig2_system):
        # the coupled system transmits at the mechanical sideband
        r = probe_response(fig2_system, fig2_system.membranes[0].omega)
        assert r.v_p < 0.01

    def test_identical_membranes_merge_to_single_with_sqrtN(self):
        # N identical membranes respond exactly like one with sqrt(N)-scaled g
        n = 4
        many = system_with_couplings((1.0,) * n, (0.3,) * n)
        g_single = many.membranes[0].g * math.sqrt(n)
        one = build_system(
            many.cavity,
            [MembraneMode(omega=OMEGA_M, gamma=GAMMA, g=g_single)],
            many.drive,
        )
        grid = np.linspace(0.8 * OMEGA_M, 1.2 * OMEGA_M, 4001)
        diff = np.abs(_coefficient_grid(many, grid) - _coefficient_grid(one, grid))
        assert diff.max() < 1e-12

    def test_partial_merge_at_fixed_reference(self):
        # Merging a degenerate cluster with G_merged = sqrt(sum G^2) leaves the
        # coefficient unchanged when the reference frequency is held fixed.
        rng = np.random.default_rng(7)
        for _ in range(20):
            L = rng.integers(2, 5)
            g_cluster = rng.uniform(0.05, 0.5, L) * KAPPA
            omega_rest, g_rest = 1.08 * OMEGA_M, 0.3 * KAPPA
            grid = np.linspace(0.8 * OMEGA_M, 1.2 * OMEGA_M, 801)
            unmerged = output_probe_coefficient(
                grid, KAPPA, OMEGA_M,
                [0.93 * OMEGA_M] * L + [omega_rest],
                [GAMMA] * (L + 1),
                list(g_cluster) + [g_rest],
            )
            merged = output_probe_coefficient(
                grid, KAPPA, OMEGA_M,
                [0.93 * OMEGA_M, omega_rest],
                [GAMMA, GAMMA],
                [math.sqrt(np.sum(g_cluster**2)), g_rest],
            )
            assert np.abs(unmerged - merged).max() < 1e-12

    def test_permutation_invariance(self, fig2_system):
        reversed_system = build_system(
            fig2_system.cavity, fig2_system.membranes[::-1], fig2_system.drive
        )
        for d in np.linspace(0.8 * OMEGA_M, 1.2 * OMEGA_M, 101):
            a = probe_response(fig2_system, d).eps_out_plus
            b = probe_response(reversed_system, d).eps_out_plus
            assert a == pytest.approx(b, rel=1e-13)

    def test_modulus_bounded_by_two(self):
        rng = np.random.default_rng(11)
        grid = np.linspace(0.5 * OMEGA_M, 1.5 * OMEGA_M, 2001)
        for _ in range(25):
            n = rng.integers(1, 6)
            system = system_with_couplings(
                rng.uniform(0.85, 1.15, n), rng.uniform(0.0, 0.7, n)
            )
            mod = np.abs(_coefficient_grid(system, grid))
            assert mod.max() <= 2.0 + 1e-12

    def test_nonfinite_delta_rejected(self, fig2_system):
        with pytest.raises(InvalidGrid):
            probe_response(fig2_system, float("nan"))


class TestResponseDerivative:
    def test_bare_cavity_resonant_derivative(self, bare_system):
        # d/d(delta) of 2k/(k - i(delta-omega_m)) at delta=omega_m is 2i/kappa
        d = response_derivative(bare_system, OMEGA_M)
        assert d == pytest.approx(2j / KAPPA, rel=1e-14)

    @pytest.mark.parametrize(
        "factors,couplings",
        [
            ((1.05, 0.95), (0.4, 0.4)),
            ((1.05, 1.0, 0.95), (0.4, 0.4, 0.4)),
            ((1.05, 0.95, 1.1, 0.9), (0.4,) * 4),
            ((1.05, 1.0, 0.95), (0.2, 0.4, 0.7)),
            ((1.05, 0.95, 0.95, 0.95), (0.4,) * 4),
        ],
    )
    def test_matches_finite_differences(self, factors, couplings):
        # central-difference oracle with step h = 1e-6 * kappa
        system = system_with_couplings(factors, couplings)
        rng = np.random.default_rng(42)
        h = 1e-6 * KAPPA
        for delta in rng.uniform(0.8 * OMEGA_M, 1.2 * OMEGA_M, 100):
            fd = (
                probe_response(system, delta + h).eps_out_plus
                - probe_response(system, delta - h).eps_out_plus
            ) / (2 * h)
            an = response_derivative(system, delta)
            assert abs(an - fd) / abs(fd) < 1e-5

    def test_anomalous_dispersion_at_dip(self, fig2_system):
        for m in fig2_system.membranes:
            assert response_derivative(fig2_system, m.omega).imag < 0


class TestGroupVelocity:
    def test_fig2_paper_values(self, fig2_system):
        assert group_velocity(fig2_system, 1.05 * OMEGA_M) == pytest.approx(-0.0155, rel=0.05)
        assert group_velocity(fig2_system, 0.95 * OMEGA_M) == pytest.approx(-0.0171, rel=0.05)

    def test_fig6_paper_values(self):
        system = system_with_couplings((1.05, 1.0, 0.95), (0.2, 0.4, 0.7))
        for factor, target in [(1.05, -0.0038), (1.0, -0.0163), (0.95, -0.0544)]:
            assert group_velocity(system, factor * OMEGA_M) == pytest.approx(target, rel=0.05)

    def test_fig7_paper_values(self):
        system = system_with_couplings((1.05, 0.95, 0.95, 0.95), (0.4,) * 4)
        assert group_velocity(system, 1.05 * OMEGA_M) == pytest.approx(-0.015, rel=0.05)
        assert group_velocity(system, 0.95 * OMEGA_M) == pytest.approx(-0.053, rel=0.05)

    def test_far_off_resonance_approaches_unity(self, bare_system):
        # closed-form oracle for the bare Lorentzian
        for delta in (4 * OMEGA_M, 6 * OMEGA_M, 10 * OMEGA_M):
            x = delta - OMEGA_M
            v_tilde = 2 * KAPPA * x / (KAPPA**2 + x**2)
            slope = 2 * KAPPA * (KAPPA**2 - x**2) / (KAPPA**2 + x**2) ** 2
            expected = 1.0 / (1 + v_tilde / 2 + delta / 2 * slope)
            vg = group_velocity(bare_system, delta)
            assert vg == pytest.approx(expected, rel=1e-12)
            assert abs(vg - 1.0) < 0.1

    def test_pole_raises(self, fig2_system):
        # The denominator crosses zero on a dip flank; bisect it down to the
        # floating-point neighborhood and hit the pole.
        def denom(d):
            v_tilde = probe_response(fig2_system, d).v_tilde_p
            slope = response_derivative(fig2_system, d).imag
            return 1 + v_tilde / 2 + d / 2 * slope

        a = 1.05 * OMEGA_M
        assert denom(a) < 0
        b = next(
            x for x in np.linspace(1.06, 1.4, 60) * OMEGA_M if denom(x) > 0
        )
        for _ in range(200):
            mid = 0.5 * (a + b)
            if mid in (a, b):
                break
            if denom(mid) < 0:
                a = mid
            else:
                b = mid
        pole = min(
            (x for x in (a, b, np.nextafter(a, b))), key=lambda x: abs(denom(x))
        )
        assert abs(denom(pole)) < 1e-12
        with pytest.raises(DivergentGroupVelocity):
            group_velocity(fig2_system, pole)


class TestAnalyticFwhm:
    def test_storage_parameters_give_1678_hz(self):
        system = system_with_couplings((1.05, 0.95), (0.0, 0.0))
        # rebuild with the paper's bare coupling to follow the full chain
        modes = [
            MembraneMode(omega=m.omega, gamma=m.gamma, g=0.0008 * KAPPA)
            for m in system.membranes
        ]
        system = build_system(system.cavity, modes, DriveParams(power=0.04e-6))
        for j in range(2):
            assert fwhm_analytic(system, j) / (2 * math.pi) == pytest.approx(1678.0, rel=0.02)

    def test_zero_coupling_reduces_to_gamma(self, bare_system):
        for j in range(bare_system.n_membranes):
            assert fwhm_analytic(bare_system, j) == bare_system.membranes[j].gamma

    def test_doubling_power_doubles_width_above_gamma(self):
        cav = CavityParams(kappa=KAPPA, delta_eff=OMEGA_M, omega_c=OMEGA_C)
        modes = [MembraneMode(omega=OMEGA_M, gamma=GAMMA, g=100.0)]
        s1 = build_system(cav, modes, DriveParams(power=0.04e-6))
        s2 = build_system(cav, modes, DriveParams(power=0.08e-6))
        w1 = fwhm_analytic(s1, 0) - GAMMA
        w2 = fwhm_analytic(s2, 0) - GAMMA
        assert w2 == pytest.approx(2 * w1, rel=1e-12)

    def test_merged_width_counts_the_cluster(self):
        system = system_with_couplings((1.0, 1.0, 1.0), (0.2, 0.2, 0.2))
        single = fwhm_analytic(system, 0)
        merged = fwhm_analytic(system, 0, merged=True)
        G = system.G[0]
        assert merged == pytest.approx(GAMMA + 3 * G**2 / KAPPA, rel=1e-12)
        assert single == pytest.approx(GAMMA + G**2 / KAPPA, rel=1e-12)

    def test_index_out_of_range(self, fig2_system):
        with pytest.raises(IndexOutOfRange):
            fwhm_analytic(fig2_system, 2)


class TestSweepAndWindows:
    def test_fig2_two_windows(self, fig2_system):
        sweep = sweep_spectrum(fig2_system, 0.8 * OMEGA_M, 1.2 * OMEGA_M, 4001)
        assert len(sweep.windows) == 2
        centers = sorted(w.center_delta for w in sweep.windows)
        assert centers[0] == pytest.approx(0.95 * OMEGA_M, abs=1e-3 * OMEGA_M)
        assert centers[1] == pytest.approx(1.05 * OMEGA_M, abs=1e-3 * OMEGA_M)

    def test_fig3_three_windows(self):
        system = system_with_couplings((1.05, 1.0, 0.95), (0.4,) * 3)
        sweep = sweep_spectrum(system, 0.8 * OMEGA_M, 1.2 * OMEGA_M, 4001)
        assert len(sweep.windows) == 3

    def test_fig4_four_windows(self):
        system = system_with_couplings((1.05, 0.95, 1.1, 0.9), (0.4,) * 4)
        sweep = sweep_spectrum(system, 0.8 * OMEGA_M, 1.2 * OMEGA_M, 4001)
        assert len(sweep.windows) == 4

    def test_fig7_triple_degeneracy_two_windows(self):
        system = system_with_couplings((1.05, 0.95, 0.95, 0.95), (0.4,) * 4)
        sweep = sweep_spectrum(system, 0.8 * OMEGA_M, 1.2 * OMEGA_M, 4001)
        assert len(sweep.windows) == 2

    def test_identical_membranes_single_window_at_line_center(self):
        system = system_with_couplings((1.0, 1.0, 1.0), (0.2, 0.2, 0.2))
        sweep = sweep_spectrum(system, 0.8 * OMEGA_M, 1.2 * OMEGA_M, 4001)
        assert len(sweep.windows) == 1
        assert sweep.windows[0].center_delta == pytest.approx(OMEGA_M, abs=1e-4 * KAPPA)
        assert sweep.windows[0].fwhm_analytic == pytest.approx(
            GAMMA + 3 * system.G[0] ** 2 / KAPPA, rel=1e-12
        )

    def test_measured_fwhm_close_to_analytic(self, fig2_system):
        sweep = sweep_spectrum(fig2_system, 0.8 * OMEGA_M, 1.2 * OMEGA_M, 4001)
        for w in sweep.windows:
            assert w.fwhm_measured == pytest.approx(w.fwhm_analytic, rel=0.15)
            assert w.fwhm_measured > 0

    def test_window_is_a_genuine_dip(self, fig2_system):
        sweep = sweep_spectrum(fig2_system, 0.8 * OMEGA_M, 1.2 * OMEGA_M, 4001)
        for w in sweep.windows:
            left = probe_response(fig2_system, w.center_delta - w.fwhm_measured).v_p
            right = probe_response(fig2_system, w.center_delta + w.fwhm_measured).v_p
            assert w.depth < left
            assert w.depth < right

    def test_anomalous_dispersion_at_window_centers(self):
        for factors, couplings in [
            ((1.05, 0.95), (0.4, 0.4)),
            ((1.05, 1.0, 0.95), (0.2, 0.4, 0.7)),
        ]:
            system = system_with_couplings(factors, couplings)
            sweep = sweep_spectrum(system, 0.8 * OMEGA_M, 1.2 * OMEGA_M, 4001)
            for w in sweep.windows:
                assert response_derivative(system, w.center_delta).imag < 0

    def test_no_windows_without_coupling(self, bare_system):
        sweep = sweep_spectrum(bare_system, 0.8 * OMEGA_M, 1.2 * OMEGA_M, 1001)
        assert sweep.windows == ()

    def test_grid_too_coarse(self, fig2_system):
        with pytest.raises(GridTooCoarse) as err:
            sweep_spectrum(fig2_system, 0.8 * OMEGA_M, 1.2 * OMEGA_M, 20)
        assert err.value.required_points > 20
        sweep_spectrum(
            fig2_system, 0.8 * OMEGA_M, 1.2 * OMEGA_M, err.value.required_points
        )

    def test_invalid_grid(self, fig2_system):
        with pytest.raises(InvalidGrid):
            sweep_spectrum(fig2_system, 1.2 * OMEGA_M, 0.8 * OMEGA_M, 100)
        with pytest.raises(InvalidGrid):
            sweep_spectrum(fig2_system, 0.8 * OMEGA_M, 1.2 * OMEGA_M, 1)

    def test_window_count_matches_membrane_count_when_separated(self):
        # constructive random configurations honoring the separation and
        # weak-coupling preconditions (small version of the acceptance check)
        rng = np.random.default_rng(123)
        for _ in range(25):
            n = int(rng.integers(1, 7))
            couplings = rng.uniform(0.08, 0.3, n)
            max_w = (GAMMA + (couplings.max() * KAPPA) ** 2 / KAPPA) / OMEGA_M
            gaps = 2.1 * max_w + rng.uniform(0, 0.004, max(n - 1, 0))
            span = float(np.sum(gaps))
            start = 0.85 + rng.uniform(0, max(0.3 - span, 1e-6))
            factors = start + np.concatenate([[0.0], np.cumsum(gaps)])
            system = system_with_couplings(factors, couplings)
            sweep = sweep_spectrum(system, 0.8 * OMEGA_M, 1.2 * OMEGA_M, 4001)
            assert len(sweep.windows) == n

    def test_threaded_sweep_is_bit_identical(self, fig2_system, monkeypatch):
        sequential = sweep_spectrum(fig2_system, 0.8 * OMEGA_M, 1.2 * OMEGA_M, 2001)
        monkeypatch.setenv("OPTOMECH_EIT_THREADS", "4")
        threaded = sweep_spectrum(fig2_system, 0.8 * OMEGA_M, 1.2 * OMEGA_M, 2001)
        for a, b in zip(sequential.responses, threaded.responses):
            assert a.eps_out_plus == b.eps_out_plus
