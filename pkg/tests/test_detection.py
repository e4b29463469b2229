import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fwmsqueeze import detection as d
from fwmsqueeze.errors import CoverageError, DomainError, FitError, MatchingError, PreconditionError
from fwmsqueeze.gaussian import apply_transfer, coherent_input, db, ideal_twin_beam_noise, split_coherent
from fwmsqueeze.medium import TWO_PI, MediumConfig, cw_gain, empty_medium

BRIGHT = 1e8


class TestPulseShape:
    def test_invariants(self):
        with pytest.raises(DomainError):
            d.PulseShape(width=2e-6)
        with pytest.raises(DomainError):
            d.PulseShape(rise_time=30e-9)
        with pytest.raises(DomainError):
            d.PulseShape(kind="triangle")

    def test_spectral_mass_matches_parseval(self):
        for shape in (d.PulseShape(), d.PulseShape(kind="gaussian")):
            om = np.linspace(-TWO_PI * 2e9, TWO_PI * 2e9, 800001)
            numeric = np.trapezoid(shape.spectral_density(om), om)
            assert numeric == pytest.approx(shape.spectral_mass(), rel=2e-3)

    def test_integration_fraction(self):
        assert d.PulseShape().integration_fraction(150e-9) == 1.0
        assert d.PulseShape(rise_time=0.0).integration_fraction(25e-9) == pytest.approx(0.5)
        assert 0.99 < d.PulseShape(kind="gaussian").integration_fraction(150e-9) <= 1.0


class TestPulseSpectrum:
    def test_square_sinc_and_first_null(self):
        shape = d.PulseShape(rise_time=0.0)
        grid = np.linspace(-TWO_PI * 400e6, TWO_PI * 400e6, 8001)
        w = d.pulse_spectrum(shape, grid)
        assert w.sum() == pytest.approx(1.0)
        expected = np.sinc(grid * shape.width / TWO_PI) ** 2
        assert np.allclose(w / w.max(), expected, atol=1e-12)
        k = np.argmin(np.abs(grid - TWO_PI * 20e6))
        assert w[k] < 1e-12 * w.max()

    def test_gaussian_symmetric_unimodal(self):
        grid = np.linspace(-TWO_PI * 300e6, TWO_PI * 300e6, 601)
        w = d.pulse_spectrum(d.PulseShape(kind="gaussian", width=37e-9), grid)
        assert np.allclose(w, w[::-1])
        mid = len(w) // 2
        assert np.all(np.diff(w[: mid + 1]) >= 0) and np.all(np.diff(w[mid:]) <= 0)

    def test_long_pulse_collapses(self):
        grid = np.linspace(-TWO_PI * 50e6, TWO_PI * 50e6, 1001)
        fractions = [d.pulse_spectrum(d.PulseShape(width=w, repetition_period=1.0), grid)[500] for w in (1e-6, 1e-5, 1e-4)]
        assert fractions[-1] > 0.98 and np.all(np.diff(fractions) >= 0)

    def test_coverage(self):
        with pytest.raises(CoverageError):
            d.pulse_spectrum(d.PulseShape(), np.linspace(-TWO_PI * 100e6, TWO_PI * 100e6, 101))
        with pytest.raises(CoverageError):
            d.pulse_spectrum(d.PulseShape(), np.linspace(-TWO_PI * 5e6, TWO_PI * 5e6, 101))


class TestBandAverageGain:
    def test_empty_medium(self):
        for width in (20e-9, 50e-9, 200e-9):
            assert d.band_average_gain(empty_medium(), d.PulseShape(width=width)) == pytest.approx(1.0, abs=1e-12)

    def test_long_pulse_reaches_cw(self, calibrated):
        long = d.PulseShape(width=20e-6, rise_time=1e-6, repetition_period=1e-4)
        assert d.band_average_gain(calibrated, long) == pytest.approx(cw_gain(calibrated), rel=2e-3)

    def test_calibrated_ordering(self, calibrated):
        g30, g50, g100 = (d.band_average_gain(calibrated, d.PulseShape(width=w)) for w in (30e-9, 50e-9, 100e-9))
        assert g30 < g50 < g100


class TestTimeResolvedVariance:
    @pytest.mark.parametrize("kind", ["square", "gaussian"])
    @pytest.mark.parametrize("bw", [1e6, 8e6, 1e9])
    def test_normalisation(self, kind, bw):
        chain = d.DetectionChain(eta=0.6, bandwidth=bw)
        v = d.time_resolved_variance(empty_medium(), coherent_input(BRIGHT), d.PulseShape(kind=kind), chain)
        assert v == pytest.approx(1.0, abs=1e-12)

    def test_loss_contraction(self, near_optimum):
        inp = coherent_input(BRIGHT)
        v1 = d.time_resolved_variance(near_optimum, inp, d.PulseShape(), d.DetectionChain(eta=1.0))
        v = d.time_resolved_variance(near_optimum, inp, d.PulseShape(), d.DetectionChain())
        assert v == pytest.approx(0.7468 * v1 + 1 - 0.7468, rel=1e-10)
        assert db(v) == pytest.approx(-1.5, abs=0.6)

    def test_infinite_bandwidth_is_pulse_average(self, near_optimum):
        shape, inp = d.PulseShape(), coherent_input(BRIGHT)
        grid = d.default_grid(shape)
        states = d.propagate_spectrum(near_optimum, inp, np.abs(grid))
        from fwmsqueeze.gaussian import intensity_difference_variance
        S = np.array([intensity_difference_variance(s) for s in states])
        v = d.time_resolved_variance(near_optimum, inp, shape, d.DetectionChain(eta=1.0, bandwidth=np.inf), grid)
        assert v == pytest.approx(np.sum(d.pulse_spectrum(shape, grid) * S), rel=1e-12)


class TestRecords:
    def test_shot_noise_record(self):
        chain = d.DetectionChain(rng_seed=5, n_samples=20000)
        rec = d.simulate_records(empty_medium(), split_coherent(1e6), d.PulseShape(), chain)
        n = len(rec)
        ratio = np.var(rec.charges, ddof=1) / rec.metadata["mean_total_charge"]
        assert abs(ratio - 1) < 3 * np.sqrt(2 / n)

    def test_ideal_twin_beams(self):
        """Lossless amplifier with G = 4.2 and unit efficiency."""
        from fwmsqueeze.gaussian import two_mode_squeezer

        n = 100_000
        chain = d.DetectionChain(eta=1.0, n_samples=n, rng_seed=11)
        # a flat-gain twin-beam source: empty medium, input already amplified
        inp = apply_transfer(coherent_input(1e7), two_mode_squeezer(4.2))
        rec = d.simulate_records(empty_medium(), inp, d.PulseShape(), chain)
        v = np.var(rec.charges, ddof=1) / rec.metadata["mean_total_charge"]
        target = ideal_twin_beam_noise(4.2)
        assert abs(v - target) < 3 * target * np.sqrt(2 / n)

    def test_deterministic(self):
        chain = d.DetectionChain(rng_seed=42, electronic_noise_var=10.0)
        a = d.simulate_records(MediumConfig(), coherent_input(BRIGHT), d.PulseShape(), chain)
        b = d.simulate_records(MediumConfig(), coherent_input(BRIGHT), d.PulseShape(), chain)
        assert a.charges.tobytes() == b.charges.tobytes() and a == b
        c = d.simulate_records(MediumConfig(), coherent_input(BRIGHT), d.PulseShape(), chain.replace(rng_seed=43))
        assert a.charges.tobytes() != c.charges.tobytes()

    def test_dim_beam_refused(self):
        with pytest.raises(PreconditionError):
            d.simulate_records(MediumConfig(), coherent_input(3.0), d.PulseShape(), d.DetectionChain())

    def test_serialisation_round_trip(self):
        rec = d.simulate_records(MediumConfig(), coherent_input(BRIGHT), d.PulseShape(), d.DetectionChain(rng_seed=9))
        back = d.PulseRecord.from_bytes(rec.to_bytes())
        assert back.charges.tobytes() == rec.charges.tobytes() and back.metadata == rec.metadata
        csv_back = d.PulseRecord.from_csv(rec.to_csv())
        assert csv_back.charges.tobytes() == rec.charges.tobytes()
        assert csv_back.metadata["seed"] == 9 and csv_back.metadata["config_hash"] == rec.metadata["config_hash"]
        assert rec.to_csv().splitlines()[2] == "index,charge"


class TestRollingAverage:
    def test_constant(self):
        rec = d.PulseRecord(np.full(500, 3.25))
        assert np.all(d.rolling_average_subtract(rec, 50).charges == 0)

    def test_length_and_errors(self):
        rec = d.PulseRecord(np.arange(300.0))
        assert len(d.rolling_average_subtract(rec, 100)) == 200
        with pytest.raises(DomainError):
            d.rolling_average_subtract(rec, 151)
        with pytest.raises(DomainError):
            d.rolling_average_subtract(rec, 1)

    def test_white_noise_inflation(self, rng):
        x = rng.standard_normal(1_000_000) * 2.0
        out = d.rolling_average_subtract(d.PulseRecord(x), 10)
        raw = np.var(out.charges, ddof=1)
        assert raw == pytest.approx(4.0 * 1.1, rel=5e-3)
        assert d.record_variance(out) == pytest.approx(4.0, rel=5e-3)

    def test_drift_removed(self, rng):
        n, w = 200_000, 100
        white = rng.standard_normal(n)
        drift = 1e-4 * np.arange(n) / w  # 1e-4 sigma per window
        clean = d.record_variance(d.rolling_average_subtract(d.PulseRecord(white), w))
        drifted = d.record_variance(d.rolling_average_subtract(d.PulseRecord(white + drift * w), w))
        assert drifted == pytest.approx(clean, rel=0.01)
        assert np.var(white + drift * w) > 10 * clean  # drift dominates without the subtraction


class TestShotNoiseCalibration:
    POWERS = [0.25e6, 0.5e6, 1e6, 2e6, 4e6, 8e6]

    def test_linear_without_electronic_noise(self):
        fit = d.shot_noise_calibration(self.POWERS, d.DetectionChain(rng_seed=3))
        assert fit.r_squared > 0.999
        assert abs(fit.intercept) < 3 * fit.intercept_stderr
        assert fit.slope == pytest.approx(0.7468, rel=0.03)

    def test_doubling_powers(self):
        chain = d.DetectionChain(rng_seed=3)
        a = d.shot_noise_calibration(self.POWERS, chain)
        b = d.shot_noise_calibration([2 * p for p in self.POWERS], chain)
        assert b.slope == pytest.approx(a.slope, rel=0.03)
        assert np.allclose(b.variances / a.variances, 2.0, rtol=0.06)

    def test_electronic_noise_recovered(self):
        v_e = 4e5
        fit = d.shot_noise_calibration(self.POWERS, d.DetectionChain(rng_seed=8, electronic_noise_var=v_e))
        assert abs(fit.intercept - v_e) < 3 * fit.intercept_stderr

    def test_degenerate_powers(self):
        with pytest.raises(FitError):
            d.shot_noise_calibration([1e6, 1e6, 2e6, 2e6], d.DetectionChain())
        with pytest.raises(FitError):
            d.shot_noise_calibration([1e6, 2e6, 3e6], d.DetectionChain())


class TestSqueezingReport:
    def _rec(self, seed, medium=None, inp=None):
        medium = empty_medium() if medium is None else medium
        inp = split_coherent(2e6) if inp is None else inp
        return d.simulate_records(medium, inp, d.PulseShape(), d.DetectionChain(rng_seed=seed))

    def test_identical_records(self):
        rec = self._rec(1)
        r = d.squeezing_report(rec, rec, 0.7468)
        assert r.measured_db == pytest.approx(0.0, abs=1e-12) and r.corrected_db == pytest.approx(0.0, abs=1e-12)

    def test_reported_ratio(self):
        r = d.squeezing_from_ratio(0.8017, 0.7468)
        assert r.measured_db == pytest.approx(-0.96, abs=0.005)
        assert r.corrected_db == pytest.approx(-1.34, abs=0.01)

    def test_excess_noise_sign(self):
        r = d.squeezing_from_ratio(1.2, 0.7468)
        assert r.measured_db > 0 and r.corrected_db >= r.measured_db

    def test_mismatched_power(self):
        with pytest.raises(MatchingError):
            d.squeezing_report(self._rec(1), self._rec(2, inp=split_coherent(2.2e6)), 0.7468)

    def test_standard_error(self):
        r = d.squeezing_report(self._rec(1), self._rec(2), 0.7468)
        assert r.measured_db_stderr == pytest.approx(10 / np.log(10) * np.sqrt(4 / 9999), rel=1e-9)
        assert abs(r.measured_db) < 3 * r.measured_db_stderr


@given(st.floats(0.05, 1.0), st.floats(1e6, 1e9))
@settings(max_examples=20, deadline=None)
def test_filter_is_single_pole(eta, bw):
    chain = d.DetectionChain(eta=eta, bandwidth=bw)
    assert chain.filter_power(TWO_PI * bw) == pytest.approx(0.5)
    assert chain.filter_power(0.0) == 1.0
