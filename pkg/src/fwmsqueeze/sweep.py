"""Parameter sweeps, the two-photon-detuning optimum and gain calibration."""

from __future__ import annotations

import dataclasses
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize

from .detection import (
    DetectionChain,
    PulseShape,
    band_average_gain,
    default_grid,
    pulse_spectrum,
    time_resolved_variance,
)
from .errors import BracketError, CalibrationError, ConfigError, DomainError, FitError, FWMError
from .gaussian import coherent_input, noise_spectrum
from .medium import RAMAN_RATIO, TWO_PI, MediumConfig, cw_gain, transfer_function
from .serial import canonical_json, config_hash, to_plain

TARGETS = ("cw_gain", "band_average_gain", "time_resolved_variance", "noise_spectrum",
           "conjugate_probe_ratio")

DELTA_XTOL = TWO_PI * 0.5e6
COUPLING_MAX = 2e11
GAIN_TOL = 0.01


@dataclass(frozen=True)
class Setup:
    """Everything a sweep target needs besides the swept value.

    ``probe_photons`` is the mean seed photon number per pulse and
    ``detection_omega`` the analysis frequency used by the ``noise_spectrum``
    target. ``seed_powers`` feeds ``conjugate_probe_ratio``.
    """

    medium: MediumConfig = field(default_factory=MediumConfig)
    pulse: PulseShape = field(default_factory=PulseShape)
    detection: DetectionChain = field(default_factory=DetectionChain)
    probe_photons: float = 1e8
    excess_noise_db: float = 0.0
    detection_omega: float = TWO_PI * 2e6
    seed_powers: tuple = (1e6, 2e6, 4e6, 8e6)

    def input_state(self):
        return coherent_input(self.probe_photons, self.excess_noise_db)

    def with_value(self, path: str, value: float) -> "Setup":
        """Copy with the field at dotted ``path`` (e.g. ``medium.delta``) replaced."""
        head, _, rest = path.partition(".")
        if head in ("medium", "pulse", "detection"):
            section = getattr(self, head)
            names = {f.name for f in dataclasses.fields(section)}
            if rest not in names:
                raise ConfigError(f"unknown field {rest!r}", path=path)
            if isinstance(getattr(section, rest), (int, np.integer)) and not isinstance(getattr(section, rest), bool) \
                    and float(value).is_integer():
                value = int(value)
            return dataclasses.replace(self, **{head: section.replace(**{rest: value})})
        if head in ("probe_photons", "excess_noise_db", "detection_omega") and not rest:
            return dataclasses.replace(self, **{head: float(value)})
        raise ConfigError("parameter path does not resolve", path=path)


def _resolve_grid(grid) -> np.ndarray:
    if isinstance(grid, dict):
        try:
            values = np.linspace(float(grid["min"]), float(grid["max"]), int(grid["n"]))
        except KeyError as exc:
            raise ConfigError(f"grid range needs min, max and n (missing {exc.args[0]})", path="grid") from None
    else:
        values = np.asarray(grid, dtype=float).ravel()
    if values.size == 0:
        raise ConfigError("grid is empty", path="grid")
    if values.size > 1:
        step = np.diff(values)
        if not (np.all(step > 0) or np.all(step < 0)):
            raise ConfigError("grid must be strictly monotone", path="grid")
    return values


@dataclass(frozen=True)
class SweepSpec:
    target: str
    parameter: str
    grid: object
    fixed: Setup = field(default_factory=Setup)
    seed: int = 0

    def __post_init__(self):
        if self.target not in TARGETS:
            raise ConfigError(f"unknown target {self.target!r}; choose from {', '.join(TARGETS)}", path="target")
        object.__setattr__(self, "grid", _resolve_grid(self.grid))
        try:
            self.fixed.with_value(self.parameter, self.grid[0])
        except DomainError:
            pass  # the path resolves; an invalid value is reported per point by run_sweep


@dataclass(frozen=True)
class CurveResult:
    parameter: str
    observable: str
    parameter_values: np.ndarray
    values: np.ndarray
    uncertainties: np.ndarray
    errors: tuple
    metadata: dict

    def __post_init__(self):
        n = len(self.parameter_values)
        if not (len(self.values) == len(self.uncertainties) == len(self.errors) == n):
            raise DomainError("curve arrays must have equal lengths")
        if np.any(np.asarray(self.uncertainties) < 0):
            raise DomainError("uncertainties must be >= 0")

    def interior_minimum(self) -> int | None:
        """Index of the smallest finite value when it is not at either grid edge."""
        vals = np.where(np.isfinite(self.values), self.values, np.inf)
        if not np.isfinite(vals).any():
            return None
        k = int(np.argmin(vals))
        return k if 0 < k < len(vals) - 1 else None

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# seed: {self.metadata['seed']}\n")
        buf.write(f"# config_hash: {self.metadata['config_hash']}\n")
        buf.write(f"{self.parameter},{self.observable},uncertainty,flag\n")
        k_min = self.interior_minimum()
        for k, (x, y, u) in enumerate(zip(self.parameter_values, self.values, self.uncertainties)):
            flag = "error" if self.errors[k] else ("interior_minimum" if k == k_min else "")
            buf.write(f"{float(x)!r},{float(y)!r},{float(u)!r},{flag}\n")
        return buf.getvalue()

    def to_json(self) -> str:
        payload = {
            "parameter": self.parameter,
            "observable": self.observable,
            "parameter_values": self.parameter_values,
            "values": [None if not np.isfinite(v) else v for v in self.values],
            "uncertainties": self.uncertainties,
            "errors": list(self.errors),
            "interior_minimum_index": self.interior_minimum(),
            "metadata": self.metadata,
        }
        return canonical_json(payload, indent=2) + "\n"


def evaluate_target(target: str, setup: Setup) -> tuple[float, float]:
    """Value and uncertainty of ``target`` for one setup."""
    if target == "cw_gain":
        return cw_gain(setup.medium), 0.0
    if target == "band_average_gain":
        return band_average_gain(setup.medium, setup.pulse), 0.0
    if target == "time_resolved_variance":
        return time_resolved_variance(setup.medium, setup.input_state(), setup.pulse, setup.detection), 0.0
    if target == "noise_spectrum":
        res = noise_spectrum(setup.medium, setup.input_state(), [setup.detection_omega])
        return float(res.S[0]), 0.0
    if target == "conjugate_probe_ratio":
        fit = fit_conjugate_probe(setup.medium, setup.seed_powers, setup.pulse)
        return fit.slope, fit.slope_stderr
    raise ConfigError(f"unknown target {target!r}", path="target")


def run_sweep(spec: SweepSpec, threads: int | None = None) -> CurveResult:
    """Evaluate the target on every grid point.

    Points run concurrently on up to ``threads`` workers and are returned in
    grid order. A failing point is recorded as NaN with its error message;
    the sweep raises only when every point fails.
    """
    grid = spec.grid

    def point(x):
        try:
            return (*evaluate_target(spec.target, spec.fixed.with_value(spec.parameter, x)), None)
        except FWMError as exc:
            return math.nan, 0.0, exc

    with ThreadPoolExecutor(max_workers=threads) as pool:
        results = list(pool.map(point, grid))
    errors = [r[2] for r in results]
    if all(e is not None for e in errors):
        raise errors[0]
    snapshot = {"target": spec.target, "parameter": spec.parameter, "grid": grid,
                "fixed": spec.fixed, "seed": spec.seed}
    return CurveResult(
        parameter=spec.parameter,
        observable=spec.target,
        parameter_values=grid,
        values=np.array([r[0] for r in results]),
        uncertainties=np.array([r[1] for r in results]),
        errors=tuple(None if e is None else f"{type(e).__name__}: {e}" for e in errors),
        metadata={"seed": spec.seed, "config_hash": config_hash(snapshot), "config": to_plain(snapshot)},
    )


@dataclass(frozen=True)
class ConjugateProbeFit:
    seed_powers: np.ndarray
    probe_powers: np.ndarray
    conjugate_powers: np.ndarray
    slope: float
    slope_stderr: float

    @property
    def gain(self) -> float:
        return gain_from_slope(self.slope)


def fit_conjugate_probe(config: MediumConfig, seed_powers, shape: PulseShape | None = None) -> ConjugateProbeFit:
    """Output conjugate against amplified probe power, fitted through the origin.

    Output powers are pulse-averaged mean fields: ``P |T_11|^2`` for the
    probe and ``P |T_21|^2`` for the conjugate, averaged over the pulse
    spectrum.
    """
    powers = np.asarray(seed_powers, dtype=float)
    if powers.ndim != 1 or len(powers) < 3:
        raise FitError("need at least three seed powers")
    if np.any(powers < 0) or not np.any(powers > 0):
        raise FitError("seed powers must be >= 0 and not all zero")
    shape = PulseShape() if shape is None else shape
    grid = default_grid(shape)
    w = pulse_spectrum(shape, grid)
    T = transfer_function(config, grid).T
    probe = powers * np.sum(w * np.abs(T[:, 0, 0]) ** 2)
    conj = powers * np.sum(w * np.abs(T[:, 1, 0]) ** 2)
    slope = float(probe @ conj / (probe @ probe))
    resid = conj - slope * probe
    dof = len(powers) - 1
    stderr = float(np.sqrt(resid @ resid / dof / (probe @ probe)))
    return ConjugateProbeFit(powers, probe, conj, slope, stderr)


def conjugate_probe_ratio(config: MediumConfig, seed_powers, shape: PulseShape | None = None) -> float:
    """Slope of conjugate versus probe output power; ``(G - 1) / G`` when lossless."""
    return fit_conjugate_probe(config, seed_powers, shape).slope


def gain_from_slope(slope: float) -> float:
    """Gain implied by a conjugate/probe slope, ``1 / (1 - s)``."""
    if not 0.0 <= slope < 1.0:
        raise DomainError(f"slope {slope} outside [0, 1)")
    return 1.0 / (1.0 - slope)


def find_optimum_delta(config: MediumConfig, delta_range=(0.0, TWO_PI * 40e6), input=None,
                       shape: PulseShape | None = None, chain: DetectionChain | None = None,
                       n_coarse: int = 9, objective: Callable[[float], float] | None = None):
    """Two-photon detuning that minimises the time-resolved variance.

    A coarse grid locates the best interior point; golden-section search then
    refines it within the neighbouring grid cells to ``2 pi x 0.5 MHz``.
    ``objective`` replaces the variance (as a function of ``delta``) when given.

    Returns
    -------
    delta_star, v_star : float

    Raises
    ------
    BracketError
        If the coarse minimum sits on the edge of ``delta_range``.
    """
    lo, hi = map(float, delta_range)
    if not hi > lo:
        raise DomainError("delta range must be increasing")
    if objective is None:
        state = coherent_input(1e8) if input is None else input
        shape = PulseShape() if shape is None else shape
        chain = DetectionChain() if chain is None else chain

        def objective(d):
            return time_resolved_variance(config.replace(delta=d), state, shape, chain)

    coarse = np.linspace(lo, hi, n_coarse)
    values = np.array([objective(d) for d in coarse])
    k = int(np.argmin(values))
    if k == 0 or k == n_coarse - 1:
        raise BracketError(
            f"no interior minimum in [{lo / TWO_PI:.4g}, {hi / TWO_PI:.4g}] Hz (coarse minimum at the edge)"
        )
    a, b, c = coarse[k - 1], coarse[k], coarse[k + 1]
    tol = DELTA_XTOL / (2.0 * max(abs(a), abs(c)))
    res = optimize.minimize_scalar(objective, bracket=(a, b, c), method="golden", options={"xtol": tol})
    delta_star, v_star = float(res.x), float(res.fun)
    if v_star > values[k]:
        delta_star, v_star = float(b), float(values[k])
    return delta_star, v_star


def calibrate_coupling(target_gain: float = 4.2, shape: PulseShape | None = None,
                       base_config: MediumConfig | None = None,
                       raman_ratio: float = RAMAN_RATIO) -> MediumConfig:
    """Set ``coupling_C`` so the pulse gain equals ``target_gain`` to within 0.01.

    ``raman_A`` follows as ``raman_ratio * coupling_C``. The root is
    bracketed by a geometric scan up to ``COUPLING_MAX`` and polished with
    Brent's method.

    Raises
    ------
    CalibrationError
        If the target cannot be reached below ``COUPLING_MAX``.
    """
    if not target_gain >= 1.0:
        raise DomainError(f"target gain must be >= 1, got {target_gain}")
    if raman_ratio < 0:
        raise DomainError("raman ratio must be >= 0")
    shape = PulseShape() if shape is None else shape
    base = MediumConfig() if base_config is None else base_config
    if target_gain == 1.0:
        return base.replace(coupling_C=0.0, raman_A=0.0)

    def excess(C):
        return band_average_gain(base.replace(coupling_C=C, raman_A=raman_ratio * C), shape) - target_gain

    scan = np.geomspace(COUPLING_MAX * 1e-3, COUPLING_MAX, 16)
    lower = 0.0
    for C in scan:
        try:
            positive = excess(C) > 0
        except FWMError as exc:
            raise CalibrationError(f"gain evaluation failed at coupling {C:.3g}: {exc}") from exc
        if positive:
            break
        lower = C
    else:
        raise CalibrationError(f"gain {target_gain} not reached for coupling_C <= {COUPLING_MAX:g}")
    C = optimize.brentq(excess, lower, C, xtol=1e-6 * C, rtol=1e-12)
    if abs(excess(C)) > GAIN_TOL:
        raise CalibrationError("root finder did not reach the gain tolerance")
    return base.replace(coupling_C=float(C), raman_A=float(raman_ratio * C))
