"""Pulse spectra, detection-band weighting and simulated balanced-detection records.

Charges are expressed in photoelectrons, so a shot-noise-limited record has
``Var(charge) = <total charge>``. Spectral weights are discrete quadrature
weights on the caller's grid and sum to one.
"""

from __future__ import annotations

import dataclasses
import io
import json
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

from .errors import CoverageError, DomainError, FitError, MatchingError
from .gaussian import (
    GaussianState,
    apply_loss,
    db,
    intensity_difference_variance,
    loss_correct,
    photon_number_covariance,
    propagate_spectrum,
    split_coherent,
)
from .medium import TWO_PI, MediumConfig, empty_medium, transfer_function
from .serial import config_hash, to_plain

COVERAGE_LIMIT = 0.05
MIN_SPAN_NULLS = 10.0
DEFAULT_SPAN_NULLS = 20.0
DEFAULT_GRID_POINTS = 1601

_RECORD_MAGIC = b"FWMREC01"


@dataclass(frozen=True)
class PulseShape:
    """Temporal envelope of the probe pulse.

    ``square`` is a trapezoid: a flat top convolved with a linear ramp of
    ``rise_time``, so ``width`` is its full width at half maximum.
    ``gaussian`` has an envelope FWHM of ``width`` and ignores ``rise_time``.
    """

    kind: str = "square"
    width: float = 50e-9
    rise_time: float = 5e-9
    repetition_period: float = 1e-6

    def __post_init__(self):
        if self.kind not in ("square", "gaussian"):
            raise DomainError(f"pulse kind must be 'square' or 'gaussian', got {self.kind!r}")
        if not 0.0 < self.width < self.repetition_period:
            raise DomainError("pulse width must satisfy 0 < width < repetition_period")
        if not 0.0 <= self.rise_time < self.width / 2.0:
            raise DomainError("rise time must satisfy 0 <= rise_time < width / 2")

    def replace(self, **changes) -> "PulseShape":
        return dataclasses.replace(self, **changes)

    def spectral_density(self, omega) -> np.ndarray:
        """``|f(omega)|^2`` for a unit-height envelope."""
        omega = np.asarray(omega, dtype=float)
        if self.kind == "square":
            amp = self.width * np.sinc(omega * self.width / TWO_PI) * np.sinc(omega * self.rise_time / TWO_PI)
            return amp**2
        sigma2 = 4.0 * np.log(2.0) / self.width**2
        return (np.pi / sigma2) * np.exp(-(omega**2) / (2.0 * sigma2))

    def spectral_mass(self, omega_max: float | None = None) -> float:
        """Integral of :meth:`spectral_density` over ``|omega| <= omega_max`` (all if None)."""
        if self.kind == "square":
            total = TWO_PI * (self.width - self.rise_time / 3.0)
            if omega_max is None:
                return total
            # resolve the sinc lobes finely; the tail beyond is what we want to bound
            n = int(max(4001, 40 * omega_max * self.width / np.pi))
            om = np.linspace(0.0, omega_max, n)
            return float(2.0 * np.trapezoid(self.spectral_density(om), om))
        sigma2 = 4.0 * np.log(2.0) / self.width**2
        total = (np.pi / sigma2) * np.sqrt(TWO_PI * sigma2)
        if omega_max is None:
            return total
        return total * float(special.erf(omega_max / np.sqrt(2.0 * sigma2)))

    def integration_fraction(self, window: float) -> float:
        """Fraction of pulse energy inside a centred boxcar of length ``window``."""
        if self.kind == "gaussian":
            sigma_t = self.width / (2.0 * np.sqrt(2.0 * np.log(2.0)))
            # intensity |f|^2 has rms width sigma_t / sqrt(2)
            return float(special.erf(window / (2.0 * sigma_t)))
        half = window / 2.0
        flat = (self.width - self.rise_time) / 2.0
        energy_total = self.width - self.rise_time / 3.0
        if half >= flat + self.rise_time:
            return 1.0
        if half <= flat:
            return 2.0 * half / energy_total
        u = (half - flat) / self.rise_time  # ramp height falls linearly 1 -> 0
        ramp = self.rise_time * (u - u**2 + u**3 / 3.0)
        return (2.0 * flat + 2.0 * ramp) / energy_total


@dataclass(frozen=True)
class DetectionChain:
    """Lumped detection parameters.

    ``eta`` defaults to the efficiency implied by a measured -0.96 dB that
    corrects to -1.34 dB. ``bandwidth`` is the corner of a single-pole
    low-pass filter in Hz; ``electronic_noise_var`` is in photoelectrons^2.
    """

    eta: float = 0.7468
    bandwidth: float = 8e6
    amp_response: float = 150e-9
    electronic_noise_var: float = 0.0
    n_samples: int = 10000
    rolling_window: int = 100
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.eta <= 1.0:
            raise DomainError(f"eta must lie in (0, 1], got {self.eta}")
        if not self.bandwidth > 0:
            raise DomainError("bandwidth must be > 0")
        if not self.amp_response > 0:
            raise DomainError("amp_response must be > 0")
        if not self.electronic_noise_var >= 0:
            raise DomainError("electronic_noise_var must be >= 0")
        if self.rolling_window < 2:
            raise DomainError("rolling_window must be >= 2")
        if self.n_samples < 2 * self.rolling_window:
            raise DomainError("n_samples must be >= 2 * rolling_window")
        if self.rng_seed < 0:
            raise DomainError("rng_seed must be >= 0")

    def replace(self, **changes) -> "DetectionChain":
        return dataclasses.replace(self, **changes)

    def filter_power(self, omega) -> np.ndarray:
        """``|H(omega)|^2`` of the single-pole detection filter."""
        if np.isinf(self.bandwidth):
            return np.ones_like(np.asarray(omega, dtype=float))
        return 1.0 / (1.0 + (np.asarray(omega, dtype=float) / (TWO_PI * self.bandwidth)) ** 2)


@dataclass(frozen=True, eq=False)
class PulseRecord:
    charges: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "charges", np.asarray(self.charges, dtype="<f8"))

    def __len__(self):
        return len(self.charges)

    def __eq__(self, other):
        return (
            isinstance(other, PulseRecord)
            and self.charges.tobytes() == other.charges.tobytes()
            and self.metadata == other.metadata
        )

    def to_csv(self) -> str:
        """CSV text with ``#`` header lines carrying seed and config hash."""
        buf = io.StringIO()
        buf.write(f"# seed: {self.metadata.get('seed')}\n")
        buf.write(f"# config_hash: {self.metadata.get('config_hash')}\n")
        buf.write("index,charge\n")
        for k, q in enumerate(self.charges):
            buf.write(f"{k},{float(q)!r}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "PulseRecord":
        meta = {}
        values = []
        for line in text.splitlines():
            if line.startswith("#"):
                key, _, val = line[1:].partition(":")
                val = val.strip()
                meta[key.strip()] = int(val) if key.strip() == "seed" and val != "None" else val
            elif line and not line.startswith("index"):
                values.append(float(line.split(",")[1]))
        return cls(np.array(values), meta)

    def to_bytes(self) -> bytes:
        """Binary dump: magic, JSON header length and header, little-endian float64 data."""
        header = json.dumps(to_plain(self.metadata), sort_keys=True).encode("utf-8")
        return _RECORD_MAGIC + struct.pack("<Q", len(header)) + header + self.charges.tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "PulseRecord":
        if blob[:8] != _RECORD_MAGIC:
            raise DomainError("not a pulse record dump")
        (n,) = struct.unpack("<Q", blob[8:16])
        meta = json.loads(blob[16:16 + n].decode("utf-8"))
        charges = np.frombuffer(blob[16 + n:], dtype="<f8").copy()
        return cls(charges, meta)


def default_grid(shape: PulseShape, n: int = DEFAULT_GRID_POINTS) -> np.ndarray:
    """Symmetric grid over ``+-2 pi x 20 / width``."""
    span = TWO_PI * DEFAULT_SPAN_NULLS / shape.width
    return np.linspace(-span, span, n)


def _quadrature_widths(omega_grid):
    if len(omega_grid) < 2:
        raise CoverageError("spectral grid needs at least two points")
    if np.any(np.diff(omega_grid) <= 0):
        raise DomainError("spectral grid must be strictly increasing")
    return np.gradient(omega_grid)


def pulse_spectrum(shape: PulseShape, omega_grid) -> np.ndarray:
    """Discrete spectral weights of the pulse on ``omega_grid`` (sum to one).

    Raises
    ------
    CoverageError
        If the grid does not reach ``+-2 pi x 10 / width`` or misses 5 % or
        more of the analytic spectral mass.
    """
    omega_grid = np.asarray(omega_grid, dtype=float)
    widths = _quadrature_widths(omega_grid)
    reach = min(-omega_grid[0], omega_grid[-1])
    if reach < TWO_PI * MIN_SPAN_NULLS / shape.width * (1 - 1e-12):
        raise CoverageError(
            f"grid reaches only {reach / TWO_PI:.4g} Hz; need 10 / width = {MIN_SPAN_NULLS / shape.width:.4g} Hz"
        )
    outside = 1.0 - shape.spectral_mass(reach) / shape.spectral_mass()
    if outside >= COVERAGE_LIMIT:
        raise CoverageError(f"{outside:.1%} of the pulse spectrum lies outside the grid")
    w = shape.spectral_density(omega_grid) * widths
    return w / w.sum()


def band_average_gain(config: MediumConfig, shape: PulseShape, omega_grid=None) -> float:
    """Probe gain averaged over the pulse spectrum, ``sum w |T_11|^2``."""
    grid = default_grid(shape) if omega_grid is None else np.asarray(omega_grid, dtype=float)
    w = pulse_spectrum(shape, grid)
    tf = transfer_function(config, grid)
    return float(np.sum(w * np.abs(tf.T[:, 0, 0]) ** 2))


def detection_weights(shape: PulseShape, chain: DetectionChain, omega_grid) -> np.ndarray:
    """Pulse spectrum times detection filter, normalised to sum one."""
    w = pulse_spectrum(shape, omega_grid) * chain.filter_power(omega_grid)
    return w / w.sum()


def _sideband_states(config, input, omega_grid):
    """Sideband states on ``omega_grid``; the spectrum is even, so ``|omega|`` is evaluated once."""
    unique, inverse = np.unique(np.abs(omega_grid), return_inverse=True)
    states = propagate_spectrum(config, input, unique)
    return states, inverse


def time_resolved_variance(config: MediumConfig, input: GaussianState, shape: PulseShape,
                           chain: DetectionChain, omega_grid=None) -> float:
    """Pulse-integrated intensity-difference variance after detection loss.

    ``V = sum_k W_k S_eta(omega_k)`` with ``W`` the filtered pulse spectrum
    and ``S_eta`` the normalised noise of each sideband state after
    ``apply_loss(., eta)``.
    """
    grid = default_grid(shape) if omega_grid is None else np.asarray(omega_grid, dtype=float)
    W = detection_weights(shape, chain, grid)
    states, inverse = _sideband_states(config, input, grid)
    S = np.array([intensity_difference_variance(apply_loss(s, chain.eta)) for s in states])
    return float(np.sum(W * S[inverse]))


def pulse_photon_statistics(config: MediumConfig, input: GaussianState, shape: PulseShape,
                            chain: DetectionChain, omega_grid=None):
    """Mean photon numbers and their 2x2 covariance for one pulse before detection.

    The covariance is the filtered, pulse-weighted average of the sideband
    photon-number covariances, so that
    ``Var(N_s - N_i) / (N_s + N_i)`` equals ``time_resolved_variance`` at
    ``eta = 1``.
    """
    grid = default_grid(shape) if omega_grid is None else np.asarray(omega_grid, dtype=float)
    W = detection_weights(shape, chain, grid)
    states, inverse = _sideband_states(config, input, grid)
    for s in states:
        intensity_difference_variance(s)  # enforces the bright-beam precondition
    covs = np.array([photon_number_covariance(s) for s in states])
    cov = np.tensordot(W, covs[inverse], axes=1)
    return states[0].photon_means, 0.5 * (cov + cov.T)


def _record_metadata(config, input, shape, chain, extra=None):
    snapshot = {
        "medium": config,
        "input": {"mean": input.mean, "cov": input.cov},
        "pulse": shape,
        "detection": chain,
    }
    meta = {"seed": chain.rng_seed, "config_hash": config_hash(snapshot)}
    if extra:
        meta.update(extra)
    return meta


def _sample_normal(rng, mean, cov, n):
    vals, vecs = np.linalg.eigh(cov)
    root = vecs * np.sqrt(np.clip(vals, 0.0, None))
    return mean + rng.standard_normal((n, len(mean))) @ root.T


def simulate_records(config: MediumConfig, input: GaussianState, shape: PulseShape,
                     chain: DetectionChain, omega_grid=None) -> PulseRecord:
    """Monte Carlo record of per-pulse difference charges.

    Each pulse draws a photon-number pair from a bivariate normal with the
    Gaussian-pipeline moments, thins each arm at ``eta`` (normal
    approximation to the binomial), keeps the fraction of the pulse captured
    by the charge-amplifier boxcar and adds electronic noise. The metadata
    holds ``mean_total_charge``, the sample mean of the summed arm charges.
    """
    means, cov = pulse_photon_statistics(config, input, shape, chain, omega_grid)
    rng = np.random.default_rng(chain.rng_seed)
    n = chain.n_samples
    photons = _sample_normal(rng, means, cov, n)
    eta = chain.eta
    thin_sd = np.sqrt(eta * (1.0 - eta) * np.clip(photons, 0.0, None))
    detected = eta * photons + thin_sd * rng.standard_normal((n, 2))
    frac = shape.integration_fraction(chain.amp_response)
    charges = frac * (detected[:, 0] - detected[:, 1])
    if chain.electronic_noise_var > 0:
        charges = charges + np.sqrt(chain.electronic_noise_var) * rng.standard_normal(n)
    total = frac * detected.sum(axis=1)
    meta = _record_metadata(config, input, shape, chain,
                            {"mean_total_charge": float(total.mean()), "rolling_window": None})
    return PulseRecord(charges, meta)


def rolling_average_subtract(record: PulseRecord, window: int) -> PulseRecord:
    """Subtract from each sample the mean of the ``window`` samples before it.

    The first ``window`` samples have no full history and are dropped.
    Subtracting an independent W-sample mean inflates white-noise variance by
    ``1 + 1/window``; :func:`record_variance` removes that factor.
    """
    x = record.charges
    if window < 2:
        raise DomainError("window must be >= 2")
    if len(x) < 2 * window:
        raise DomainError(f"record of length {len(x)} is shorter than 2 x window = {2 * window}")
    c = np.concatenate([[0.0], np.cumsum(x)])
    trailing = (c[window:-1] - c[:-window - 1]) / window
    meta = dict(record.metadata)
    meta["rolling_window"] = int(window)
    return PulseRecord(x[window:] - trailing, meta)


def record_variance(record: PulseRecord) -> float:
    """Unbiased sample variance, undoing rolling-average inflation when present."""
    v = float(np.var(record.charges, ddof=1))
    window = record.metadata.get("rolling_window")
    if window:
        v /= 1.0 + 1.0 / window
    return v


@dataclass(frozen=True)
class ShotNoiseFit:
    powers: np.ndarray
    variances: np.ndarray
    slope: float
    intercept: float
    slope_stderr: float
    intercept_stderr: float
    r_squared: float
    residuals: np.ndarray


def shot_noise_calibration(powers, chain: DetectionChain, shape: PulseShape | None = None) -> ShotNoiseFit:
    """Fit record variance against mean photon number for split coherent light.

    ``powers`` are mean total photon numbers per pulse. Each power gets its
    own record with seed ``chain.rng_seed + index``, is drift-corrected by
    rolling-average subtraction and contributes one unbiased variance.
    The slope is the calibration constant (``eta`` in photoelectron units)
    and the intercept estimates the electronic noise.
    """
    powers = np.asarray(powers, dtype=float)
    if powers.ndim != 1 or len(np.unique(powers)) < 4:
        raise FitError("need at least four distinct powers")
    if np.any(powers <= 0):
        raise FitError("powers must be > 0")
    shape = PulseShape() if shape is None else shape
    medium = empty_medium()
    variances = np.empty(len(powers))
    for k, p in enumerate(powers):
        rec = simulate_records(medium, split_coherent(p), shape, chain.replace(rng_seed=chain.rng_seed + k),
                               omega_grid=default_grid(shape, 201))
        variances[k] = record_variance(rolling_average_subtract(rec, chain.rolling_window))
    fit = stats.linregress(powers, variances)
    predicted = fit.intercept + fit.slope * powers
    return ShotNoiseFit(
        powers=powers,
        variances=variances,
        slope=float(fit.slope),
        intercept=float(fit.intercept),
        slope_stderr=float(fit.stderr),
        intercept_stderr=float(fit.intercept_stderr),
        r_squared=float(fit.rvalue**2),
        residuals=variances - predicted,
    )


@dataclass(frozen=True)
class SqueezingReport:
    ratio: float
    measured_db: float
    corrected_db: float
    measured_db_stderr: float
    corrected_db_stderr: float


_DB_PER_REL = 10.0 / np.log(10.0)


def squeezing_from_ratio(ratio: float, eta: float, rel_stderr: float = 0.0) -> SqueezingReport:
    """Measured and loss-corrected squeezing for a variance ratio."""
    corrected = loss_correct(ratio, eta)
    return SqueezingReport(
        ratio=float(ratio),
        measured_db=db(ratio),
        corrected_db=db(corrected),
        measured_db_stderr=_DB_PER_REL * rel_stderr,
        corrected_db_stderr=_DB_PER_REL * ratio * rel_stderr / (eta * corrected),
    )


def squeezing_report(record_snl: PulseRecord, record_fwm: PulseRecord, eta: float) -> SqueezingReport:
    """Squeezing from a shot-noise record and an FWM record at matched power.

    Each variance is normalised by its record's mean total charge, so the
    ratio compares noise per detected photon. Standard errors use
    ``Var(s^2) = 2 sigma^4 / (n - 1)`` for each record.

    Raises
    ------
    MatchingError
        If the mean total charges differ by more than 2 %.
    """
    q_snl = record_snl.metadata.get("mean_total_charge")
    q_fwm = record_fwm.metadata.get("mean_total_charge")
    if q_snl is None or q_fwm is None:
        raise MatchingError("records must carry mean_total_charge metadata")
    if abs(q_fwm - q_snl) > 0.02 * abs(q_snl):
        raise MatchingError(f"mean total charges differ by more than 2 % ({q_fwm:.6g} vs {q_snl:.6g})")
    ratio = (record_variance(record_fwm) / q_fwm) / (record_variance(record_snl) / q_snl)
    rel = np.sqrt(2.0 / (len(record_fwm) - 1) + 2.0 / (len(record_snl) - 1))
    return squeezing_from_ratio(ratio, eta, rel)
