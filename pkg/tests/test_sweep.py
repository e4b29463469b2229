import json

import numpy as np
import pytest

from fwmsqueeze import sweep as sw
from fwmsqueeze.detection import PulseShape, band_average_gain
from fwmsqueeze.errors import BracketError, CalibrationError, ConfigError, DomainError, FitError
from fwmsqueeze.medium import TWO_PI, MediumConfig, empty_medium


class TestSweepSpec:
    def test_grid_forms(self):
        spec = sw.SweepSpec("cw_gain", "medium.coupling_C", {"min": 0, "max": 1e10, "n": 5})
        assert np.allclose(spec.grid, np.linspace(0, 1e10, 5))
        assert len(sw.SweepSpec("cw_gain", "medium.coupling_C", [3.0, 2.0, 1.0]).grid) == 3

    @pytest.mark.parametrize("grid", [[], [1.0, 1.0, 2.0], [1.0, 3.0, 2.0]])
    def test_bad_grid(self, grid):
        with pytest.raises(ConfigError):
            sw.SweepSpec("cw_gain", "medium.coupling_C", grid)

    def test_bad_path_and_target(self):
        with pytest.raises(ConfigError, match="medium.nope"):
            sw.SweepSpec("cw_gain", "medium.nope", [1.0])
        with pytest.raises(ConfigError):
            sw.SweepSpec("cw_gain", "elsewhere", [1.0])
        with pytest.raises(ConfigError):
            sw.SweepSpec("loudness", "medium.delta", [1.0])


class TestRunSweep:
    def test_coupling_sweep_starts_at_one(self):
        fixed = sw.Setup(medium=MediumConfig(raman_A=0.0))
        res = sw.run_sweep(sw.SweepSpec("cw_gain", "medium.coupling_C", [0.0, 5e9, 1e10], fixed=fixed))
        assert res.values[0] == 1.0
        assert res.values[2] > res.values[1]

    def test_width_sweep_non_decreasing(self, calibrated):
        spec = sw.SweepSpec("band_average_gain", "pulse.width", np.linspace(30e-9, 100e-9, 8),
                            fixed=sw.Setup(medium=calibrated))
        res = sw.run_sweep(spec, threads=4)
        assert np.all(np.diff(res.values) >= 0)

    def test_point_errors_recorded(self):
        # the first point violates the rise-time invariant
        spec = sw.SweepSpec("band_average_gain", "pulse.width", [8e-9, 50e-9, 60e-9])
        res = sw.run_sweep(spec)
        assert "DomainError" in res.errors[0] and res.errors[1] is None
        assert np.isnan(res.values[0]) and np.isfinite(res.values[1])
        assert res.to_csv().splitlines()[3].endswith(",error")
        assert json.loads(res.to_json())["values"][0] is None

    def test_all_points_failing(self):
        with pytest.raises(DomainError):
            sw.run_sweep(sw.SweepSpec("band_average_gain", "pulse.width", [8e-9, 9e-9]))

    def test_permutation_and_determinism(self):
        grid = [0.0, 3e9, 6e9, 9e9]
        a = sw.run_sweep(sw.SweepSpec("cw_gain", "medium.coupling_C", grid, seed=4), threads=3)
        b = sw.run_sweep(sw.SweepSpec("cw_gain", "medium.coupling_C", grid[::-1], seed=4), threads=1)
        assert np.array_equal(a.values, b.values[::-1])
        c = sw.run_sweep(sw.SweepSpec("cw_gain", "medium.coupling_C", grid, seed=4), threads=2)
        assert a.to_csv() == c.to_csv() and a.to_json() == c.to_json()

    def test_csv_layout(self):
        res = sw.run_sweep(sw.SweepSpec("conjugate_probe_ratio", "medium.coupling_C", [1e9, 5e9, 1e10], seed=7))
        lines = res.to_csv().splitlines()
        assert lines[0] == "# seed: 7" and lines[1].startswith("# config_hash: ")
        assert lines[2] == "medium.coupling_C,conjugate_probe_ratio,uncertainty,flag"
        assert np.all(res.uncertainties >= 0)

    def test_noise_spectrum_target(self):
        res = sw.run_sweep(sw.SweepSpec("noise_spectrum", "detection_omega", [0.0, TWO_PI * 10e6],
                                        fixed=sw.Setup(medium=empty_medium())))
        assert np.allclose(res.values, 1.0)

    def test_interior_minimum_flag(self):
        res = sw.CurveResult("x", "y", np.arange(4.0), np.array([3.0, 1.0, 2.0, 4.0]), np.zeros(4),
                             (None,) * 4, {"seed": 0, "config_hash": "h"})
        assert res.interior_minimum() == 1
        assert res.to_csv().splitlines()[4].endswith("interior_minimum")
        edge = res.__class__("x", "y", np.arange(3.0), np.array([0.0, 1.0, 2.0]), np.zeros(3),
                             (None,) * 3, {"seed": 0, "config_hash": "h"})
        assert edge.interior_minimum() is None


class TestConjugateProbe:
    def test_ideal_slope(self):
        cfg = sw.calibrate_coupling(4.2, raman_ratio=0.0)
        slope = sw.conjugate_probe_ratio(cfg, [1.0, 2.0, 5.0])
        assert slope == pytest.approx(3.2 / 4.2, abs=2e-3)

    def test_no_gain(self):
        assert sw.conjugate_probe_ratio(empty_medium(), [1.0, 2.0, 3.0]) == pytest.approx(0.0, abs=1e-15)

    def test_gain_from_slope(self):
        assert sw.gain_from_slope(0.7674) == pytest.approx(4.3, abs=0.005)
        assert sw.gain_from_slope(0.0) == 1.0
        with pytest.raises(DomainError):
            sw.gain_from_slope(1.0)

    def test_degenerate(self):
        with pytest.raises(FitError):
            sw.conjugate_probe_ratio(MediumConfig(), [1.0, 2.0])
        with pytest.raises(FitError):
            sw.conjugate_probe_ratio(MediumConfig(), [0.0, 0.0, 0.0])


class TestOptimum:
    def test_symmetric_toy(self):
        d0 = TWO_PI * 17.3e6
        star, v = sw.find_optimum_delta(None, objective=lambda d: 0.5 + ((d - d0) / TWO_PI / 1e7) ** 2)
        assert abs(star - d0) < TWO_PI * 0.5e6
        assert v == pytest.approx(0.5, abs=1e-3)

    def test_edge_minimum(self):
        with pytest.raises(BracketError):
            sw.find_optimum_delta(None, objective=lambda d: d)

    def test_calibrated(self, calibrated):
        from fwmsqueeze.detection import DetectionChain

        lo, hi = 0.0, TWO_PI * 40e6
        star, v = sw.find_optimum_delta(calibrated, (lo, hi), chain=DetectionChain(eta=1.0))
        assert 10e6 <= star / TWO_PI <= 30e6
        # minimality against the bracket ends is established by the coarse grid
        assert v < 1.0


class TestCalibration:
    def test_target_one(self):
        assert sw.calibrate_coupling(1.0).coupling_C == 0.0

    def test_reproduces_target(self, calibrated):
        assert band_average_gain(calibrated, PulseShape()) == pytest.approx(4.2, abs=0.01)
        assert calibrated.raman_A == pytest.approx(0.1 * calibrated.coupling_C)

    def test_idempotent(self, calibrated):
        again = sw.calibrate_coupling(4.2, base_config=calibrated)
        assert again.coupling_C == pytest.approx(calibrated.coupling_C, rel=1e-3)

    def test_monotone_in_target(self, calibrated):
        assert sw.calibrate_coupling(3.0).coupling_C < calibrated.coupling_C < sw.calibrate_coupling(6.0).coupling_C

    def test_unreachable(self):
        with pytest.raises(CalibrationError):
            sw.calibrate_coupling(4.2, base_config=MediumConfig(gamma=TWO_PI * 5e6), raman_ratio=50.0)

    def test_rejects_sub_unity_target(self):
        with pytest.raises(DomainError):
            sw.calibrate_coupling(0.5)
