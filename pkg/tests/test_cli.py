import math

import numpy as np
import pytest

from optomech_eit.cli import main
from optomech_eit.config import dump_config, resolve_config
from optomech_eit.presets import OMEGA_M, preset_raw


def run(args):
    return main(list(args))


def read_csv(path):
    """CSV text -> (header list, column dict of float arrays, comment lines)."""
    comments, header, rows = [], None, []
    for line in path.read_text().splitlines():
        if line.startswith("#"):
            comments.append(line)
        elif header is None:
            header = line.split(",")
        else:
            rows.append([float(x) for x in line.split(",")])
    data = np.array(rows) if rows else np.empty((0, len(header or [])))
    columns = {name: data[:, i] for i, name in enumerate(header or [])}
    return header, columns, comments


def local_minima(values):
    v = np.asarray(values)
    return [
        i
        for i in range(1, len(v) - 1)
        if v[i] < v[i - 1] and v[i] <= v[i + 1]
    ]


class TestSpectrum:
    def test_fig2_has_two_deep_dips(self, tmp_path):
        out = tmp_path / "fig2.csv"
        assert run(["spectrum", "--preset", "fig2", "--out", str(out)]) == 0
        header, cols, comments = read_csv(out)
        assert header == ["delta_rad_s", "delta_over_omega_m", "v_p", "v_tilde_p", "vg_over_c"]
        dips = [i for i in local_minima(cols["v_p"]) if cols["v_p"][i] < 0.05]
        assert len(dips) == 2
        assert comments[0].startswith("# optomech-eit")
        assert any("kappa_rad_s" in c for c in comments)

    def test_reference_off_is_bare_lorentzian(self, tmp_path):
        out = tmp_path / "ref.csv"
        assert run(["spectrum", "--preset", "fig2", "--reference-off", "--out", str(out)]) == 0
        _, cols, comments = read_csv(out)
        v_p = cols["v_p"]
        peak = np.argmax(v_p)
        assert v_p[peak] == pytest.approx(2.0, abs=1e-6)
        assert cols["delta_over_omega_m"][peak] == pytest.approx(1.0, abs=1e-3)
        assert len(local_minima(v_p)) == 0
        # metadata describes the system actually run (drive off)
        assert any(c == "# eps_l_rad_s = 0.0" for c in comments)

    def test_inverted_range_exits_2_without_file(self, tmp_path):
        out = tmp_path / "never.csv"
        assert run(["spectrum", "--preset", "fig2", "--range", "1.2,0.8", "--out", str(out)]) == 2
        assert not out.exists()

    def test_requires_exactly_one_source(self, tmp_path):
        assert run(["spectrum", "--out", str(tmp_path / "x.csv")]) == 2

    def test_unknown_preset_exits_2(self, tmp_path):
        assert run(["spectrum", "--preset", "fig99", "--out", str(tmp_path / "x.csv")]) == 2


class TestGroupVel:
    def test_fig2_at_both_windows(self, tmp_path):
        out = tmp_path / "vg.csv"
        assert run(["groupvel", "--preset", "fig2", "--at", "1.05,0.95", "--out", str(out)]) == 0
        _, cols, _ = read_csv(out)
        assert cols["vg_over_c"][0] == pytest.approx(-0.0155, rel=0.05)
        assert cols["vg_over_c"][1] == pytest.approx(-0.0171, rel=0.05)

    def test_fig6_three_values(self, tmp_path):
        out = tmp_path / "vg6.csv"
        assert run(["groupvel", "--preset", "fig6", "--at", "1.05,1.0,0.95", "--out", str(out)]) == 0
        _, cols, _ = read_csv(out)
        np.testing.assert_allclose(
            cols["vg_over_c"], [-0.0038, -0.0163, -0.0544], rtol=0.05
        )

    def test_at_outside_range_exits_2(self, tmp_path):
        out = tmp_path / "bad.csv"
        assert run(["groupvel", "--preset", "fig2", "--at", "1.5", "--out", str(out)]) == 2
        assert not out.exists()

    def test_grid_output_when_no_at(self, tmp_path):
        out = tmp_path / "grid.csv"
        assert run(["groupvel", "--preset", "fig2", "--points", "101", "--out", str(out)]) == 0
        _, cols, _ = read_csv(out)
        assert len(cols["vg_over_c"]) == 101


class TestWindows:
    @pytest.mark.parametrize("preset,count", [("fig4", 4), ("fig7", 2)])
    def test_window_counts(self, tmp_path, preset, count):
        out = tmp_path / f"{preset}.csv"
        assert run(["windows", "--preset", preset, "--out", str(out)]) == 0
        header, cols, _ = read_csv(out)
        assert header == ["center_delta", "depth", "fwhm_measured", "fwhm_analytic"]
        assert len(cols["center_delta"]) == count

    def test_uncoupled_single_membrane_has_no_windows(self, tmp_path):
        config = tmp_path / "bare.toml"
        config.write_text(
            f"""
[cavity]
kappa_rad_s = {OMEGA_M / 5!r}
delta_eff_rad_s = {OMEGA_M!r}
wavelength_nm = 1064.0

[[membrane]]
omega_rad_s = {OMEGA_M!r}
gamma_rad_s = {2 * math.pi * 0.12!r}
g_rad_s = 0.0

[drive]
eps_l_rad_s = 0.0
"""
        )
        out = tmp_path / "bare.csv"
        assert run(["windows", "--config", str(config), "--out", str(out)]) == 0
        _, cols, _ = read_csv(out)
        assert len(cols["center_delta"]) == 0


class TestStorage:
    def test_fig8_summary_and_columns(self, tmp_path):
        out = tmp_path / "fig8.csv"
        assert run(["storage", "--preset", "fig8", "--points", "4001", "--out", str(out)]) == 0
        header, cols, comments = read_csv(out)
        assert header[:5] == [
            "t_s", "coupling_power_norm", "probe_power_norm",
            "output_power_norm", "output_raw_norm",
        ]
        assert header[5:] == ["mech_intensity_1", "mech_intensity_2"]
        summary = {
            line.split("=")[0][2:]: float(line.split("=")[1])
            for line in comments
            if "=" in line and not line.startswith("# optomech") and "_" in line.split("=")[0]
        }
        assert abs(summary["retrieve_peak_time_s"] - 9e-3) < 1.2e-3
        assert 0 < summary["retrieval_efficiency"] < 1

    def test_fig9_addresses_second_membrane(self, tmp_path):
        out = tmp_path / "fig9.csv"
        assert run(["storage", "--preset", "fig9", "--points", "2001", "--out", str(out)]) == 0
        _, cols, _ = read_csv(out)
        assert cols["mech_intensity_2"].max() >= 10 * cols["mech_intensity_1"].max()

    def test_zero_probe_override_gives_silent_output(self, tmp_path):
        out = tmp_path / "null.csv"
        code = run([
            "storage", "--preset", "fig8",
            "--set", "protocol.eps_p_peak_rad_s=0",
            "--set", "protocol.t_end_s=0.002",
            "--points", "501",
            "--out", str(out),
        ])
        assert code == 0
        _, cols, _ = read_csv(out)
        assert cols["output_power_norm"].max() < 1e-12

    def test_storage_needs_protocol(self, tmp_path):
        assert run(["storage", "--preset", "fig2", "--out", str(tmp_path / "x.csv")]) == 2


class TestSweep:
    def test_long_format_over_probe_coupling(self, tmp_path):
        out = tmp_path / "sweep.csv"
        code = run([
            "sweep", "--preset", "fig2",
            "--vary", "membrane.0.g_rad_s=50:150:3",
            "--points", "51",
            "--out", str(out),
        ])
        assert code == 0
        header, cols, _ = read_csv(out)
        assert header[0] == "membrane_0_g_rad_s"
        assert len(cols["v_p"]) == 3 * 51
        assert set(np.unique(cols["membrane_0_g_rad_s"])) == {50.0, 100.0, 150.0}

    def test_sweep_needs_vary(self, tmp_path):
        assert run(["sweep", "--preset", "fig2", "--out", str(tmp_path / "x.csv")]) == 2


class TestDeterminismAndRoundTrip:
    def test_spectrum_rerun_is_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert run(["spectrum", "--preset", "fig3", "--out", str(a)]) == 0
        assert run(["spectrum", "--preset", "fig3", "--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_dumped_preset_reproduces_identical_output(self, tmp_path):
        scenario = resolve_config(preset_raw("fig2"), preset="fig2")
        config = tmp_path / "fig2.toml"
        config.write_text(dump_config(scenario))
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert run(["spectrum", "--preset", "fig2", "--out", str(a)]) == 0
        assert run(["spectrum", "--config", str(config), "--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_seventeen_significant_digits(self, tmp_path):
        out = tmp_path / "digits.csv"
        assert run(["groupvel", "--preset", "fig2", "--at", "1.05", "--out", str(out)]) == 0
        data_line = [
            line for line in out.read_text().splitlines() if not line.startswith("#")
        ][1]
        mantissa = data_line.split(",")[0].replace(".", "").split("e")[0].lstrip("-0")
        assert len(mantissa) >= 16


def test_stdout_default(capsys):
    assert run(["groupvel", "--preset", "fig2", "--at", "1.0"]) == 0
    captured = capsys.readouterr()
    assert "vg_over_c" in captured.out


def test_version_flag():
    assert run(["--version"]) == 0
