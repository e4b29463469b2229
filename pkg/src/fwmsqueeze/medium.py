"""Pumped double-lambda medium: coupled-mode coefficients and cell transfer function.

The probe field ``a(w)`` and the conjugate field taken at the mirrored
sideband, ``b^dag(-w)``, obey

    d/dz (a, b^dag) = M(w) (a, b^dag) + noise,
    M = [[kappa_s, chi], [chi^*, kappa_i^*]],

with ``w`` the sideband angular frequency measured from the pulse carrier.
The coefficients share a single light-shifted Raman resonance

    D(w) = gamma - i (delta - delta_LS + w),   delta_LS = |Omega_p|^2 / (4 Delta_1),
    chi = C / D(w),   kappa_s = -A / D(w),   kappa_i = conj(kappa_s(-w)),

where ``C`` (``coupling_C``) and ``A`` (``raman_A``) are per-metre strengths
fixed by calibration against the measured pulse gain. This is a
phenomenological stand-in for the full atomic response: it keeps a narrow
parametric gain line that competes with Raman absorption on the same
resonance, and nothing more.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np
from scipy import constants
from scipy.linalg import expm

from .errors import ConvergenceError, DomainError, SingularityError

TWO_PI = 2.0 * np.pi

# Reduced dipole matrix element of the 87Rb D1 line, <J=1/2||er||J'=1/2> (C m).
D1_DIPOLE = 2.537e-29
# Effective fraction of the reduced element seen by the pump on F=1 -> F'=2
# (angular factor); puts the light-shifted Raman line near 2 pi x 40 MHz.
PUMP_TRANSITION_FACTOR = 0.48
PUMP_DIPOLE = D1_DIPOLE * PUMP_TRANSITION_FACTOR

RB_MELTING_POINT_C = 39.30

# raman_A / coupling_C held fixed during calibration
RAMAN_RATIO = 0.1

J = np.diag([1.0, -1.0])

DEFAULT_SLABS = 64
MAX_SLABS = 4096
CONVERGENCE_TOL = 1e-6


@dataclass(frozen=True)
class MediumConfig:
    """Vapor cell, pump and detunings. Angular frequencies in rad/s, SI otherwise.

    The default ``delta`` sits on the light-shifted Raman resonance, where the
    gain peaks. ``coupling_C`` and ``raman_A`` default to the values obtained
    by calibrating that configuration to a 50 ns pulse gain of 4.2
    (see :func:`fwmsqueeze.sweep.calibrate_coupling`).
    """

    delta1: float = TWO_PI * 1.8e9
    delta: float = TWO_PI * 40e6
    omega_hf: float = TWO_PI * 6.834682e9
    Gamma: float = TWO_PI * 5.75e6
    gamma: float = TWO_PI * 6.8e6
    pump_power: float = 0.75
    pump_waist: float = 650e-6
    probe_waist: float = 300e-6
    cell_length: float = 5e-3
    temperature: float = 140.0
    coupling_C: float = 1.568e10
    raman_A: float = RAMAN_RATIO * 1.568e10

    def __post_init__(self):
        for name in ("delta1", "omega_hf", "Gamma", "pump_power", "pump_waist",
                     "probe_waist", "cell_length"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise DomainError(f"{name} must be finite and > 0, got {value!r}")
        for name in ("gamma", "coupling_C", "raman_A"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise DomainError(f"{name} must be finite and >= 0, got {value!r}")
        if not np.isfinite(self.delta):
            raise DomainError("delta must be finite")
        if self.delta1 < 10 * self.Gamma:
            raise DomainError("delta1 must be far off resonance (>= 10 Gamma)")
        if abs(self.delta) > 0.1 * self.delta1:
            raise DomainError("|delta| must be small compared with delta1")
        if not -20.0 <= self.temperature <= 250.0:
            raise DomainError(f"temperature {self.temperature} C outside [-20, 250]")

    def replace(self, **changes) -> "MediumConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def empty_medium(**changes) -> MediumConfig:
    """A config with the nonlinearity switched off."""
    return MediumConfig(coupling_C=0.0, raman_A=0.0, **changes)


@dataclass(frozen=True)
class CoupledModeCoefficients:
    """Coefficients in 1/m; arrays when evaluated on a frequency grid."""

    kappa_s: np.ndarray
    kappa_i: np.ndarray
    chi: np.ndarray

    def matrix(self) -> np.ndarray:
        """Generator ``M`` with shape ``(..., 2, 2)``."""
        ks = np.asarray(self.kappa_s, dtype=complex)
        M = np.empty(ks.shape + (2, 2), dtype=complex)
        M[..., 0, 0] = ks
        M[..., 0, 1] = self.chi
        M[..., 1, 0] = np.conj(self.chi)
        M[..., 1, 1] = np.conj(self.kappa_i)
        return M


@dataclass(frozen=True)
class TransferFunction:
    """Input-output map of the cell on a sideband-frequency grid.

    Attributes
    ----------
    omega_grid : (n,) array
    T : (n, 2, 2) complex array
        Acts on ``(a_in, b_in^dag)``.
    N_added : (n, 2, 2) complex array
        Symmetrised covariance of the Langevin noise reaching the output,
        in units where vacuum is the identity.
    noise_commutator : (n, 2, 2) complex array
        Commutator matrix of the same noise operators. Physical propagation
        requires ``T J T^dag + noise_commutator = J``.
    n_slabs : int
    """

    omega_grid: np.ndarray
    T: np.ndarray
    N_added: np.ndarray
    noise_commutator: np.ndarray
    n_slabs: int

    def physicality_residual(self) -> float:
        lhs = self.T @ J @ np.conj(np.swapaxes(self.T, -1, -2)) + self.noise_commutator
        return float(np.max(np.abs(lhs - J)))

    def at(self, k: int):
        """``(T, N_added)`` at grid index ``k``."""
        return self.T[k], self.N_added[k]


def vapor_density(temperature: float) -> float:
    """Rubidium number density (m^-3) of a saturated vapor at ``temperature`` (C).

    Uses the Alcock vapor-pressure correlation for Rb as tabulated by Steck,
    in torr with T in kelvin::

        solid  (T < 39.30 C): log10 P = 2.881 + 4.857 - 4215 / T
        liquid (T > 39.30 C): log10 P = 2.881 + 4.312 - 4040 / T

    and the ideal gas law ``n = P / (k_B T)``.
    """
    if not np.isfinite(temperature) or not -20.0 <= temperature <= 250.0:
        raise DomainError(f"temperature {temperature} C outside [-20, 250]")
    T = temperature + constants.zero_Celsius
    if temperature < RB_MELTING_POINT_C:
        log10_p = 2.881 + 4.857 - 4215.0 / T
    else:
        log10_p = 2.881 + 4.312 - 4040.0 / T
    pressure = 10.0**log10_p * constants.torr
    return pressure / (constants.k * T)


def rabi_frequency(power: float, waist: float) -> float:
    """Peak pump Rabi frequency (rad/s) of a Gaussian beam.

    ``Omega = d E0 / hbar`` with peak intensity ``I0 = 2 P / (pi w^2)`` and
    ``E0 = sqrt(2 I0 / (c eps0))``, i.e.
    ``Omega = (2 d / (hbar w)) sqrt(P / (pi c eps0))``, with ``d = PUMP_DIPOLE``.
    """
    if not power > 0 or not waist > 0:
        raise DomainError("power and waist must be > 0")
    field = np.sqrt(4.0 * power / (np.pi * waist**2 * constants.c * constants.epsilon_0))
    return PUMP_DIPOLE * field / constants.hbar


def light_shift(config: MediumConfig) -> float:
    omega_p = rabi_frequency(config.pump_power, config.pump_waist)
    return omega_p**2 / (4.0 * config.delta1)


def coupling_scale(config: MediumConfig) -> float:
    """``n |Omega_p|^2 / Delta_1^2`` (m^-3); both strengths scale with this."""
    omega_p = rabi_frequency(config.pump_power, config.pump_waist)
    return vapor_density(config.temperature) * omega_p**2 / config.delta1**2


def resonance_center(config: MediumConfig) -> float:
    """Sideband frequency at which the Raman denominator is smallest."""
    return light_shift(config) - config.delta


def _denominator(config, omega):
    return config.gamma - 1j * (config.delta - light_shift(config) + omega)


def coefficients(config: MediumConfig, omega) -> CoupledModeCoefficients:
    omega = np.asarray(omega, dtype=float)
    d_plus = _denominator(config, omega)
    d_minus = _denominator(config, -omega)
    if np.any(d_plus == 0) or np.any(d_minus == 0):
        raise SingularityError("gamma = 0 and omega sits exactly on the Raman resonance")
    chi = config.coupling_C / d_plus
    kappa_s = -config.raman_A / d_plus
    kappa_i = np.conj(-config.raman_A / d_minus)
    return CoupledModeCoefficients(kappa_s=kappa_s, kappa_i=kappa_i, chi=chi)


def _propagate(M, length, n_slabs):
    """Slab composition of ``exp(M dz)`` with the distributed loss noise.

    Per slab the noise injected by a loss rate ``r`` is
    ``int_0^dz P(s) Q P(s)^dag ds`` (Van Loan block exponential), with
    ``Q = diag(r_s, r_i)`` for the symmetrised covariance and the J-signed
    version of ``Q`` for the commutator.
    """
    dz = length / n_slabs
    n = M.shape[0]
    loss = np.zeros((n, 2, 2), dtype=complex)
    loss[:, 0, 0] = -2.0 * M[:, 0, 0].real
    loss[:, 1, 1] = -2.0 * M[:, 1, 1].real
    signed = loss @ J

    M_dag = np.conj(np.swapaxes(M, -1, -2))
    big = np.zeros((n, 4, 4), dtype=complex)
    big[:, :2, :2] = -M * dz
    big[:, 2:, 2:] = M_dag * dz
    big[:, :2, 2:] = loss * dz
    E = expm(big)
    P = np.linalg.inv(E[:, :2, :2])
    noise_slab = P @ E[:, :2, 2:]
    big[:, :2, 2:] = signed * dz
    comm_slab = P @ expm(big)[:, :2, 2:]

    P_dag = np.conj(np.swapaxes(P, -1, -2))
    T = np.broadcast_to(np.eye(2, dtype=complex), (n, 2, 2)).copy()
    noise = np.zeros((n, 2, 2), dtype=complex)
    comm = np.zeros((n, 2, 2), dtype=complex)
    for _ in range(n_slabs):
        T = P @ T
        noise = P @ noise @ P_dag + noise_slab
        comm = P @ comm @ P_dag + comm_slab
    noise = 0.5 * (noise + np.conj(np.swapaxes(noise, -1, -2)))
    comm = 0.5 * (comm + np.conj(np.swapaxes(comm, -1, -2)))
    return T, noise, comm


def transfer_function(config: MediumConfig, omega_grid, n_slabs: int = DEFAULT_SLABS,
                      max_slabs: int = MAX_SLABS) -> TransferFunction:
    """Cell transfer function, refined by slab doubling until converged.

    Raises
    ------
    ConvergenceError
        If doubling the slab count still changes some ``|T|`` entry by more
        than ``CONVERGENCE_TOL`` (relative) at ``max_slabs``.
    """
    omega_grid = np.atleast_1d(np.asarray(omega_grid, dtype=float))
    if not np.all(np.isfinite(omega_grid)):
        raise DomainError("omega grid must be finite")
    M = coefficients(config, omega_grid).matrix()
    if not np.all(np.isfinite(M)):
        raise SingularityError("coupled-mode generator is not finite on the grid")

    T, noise, comm = _propagate(M, config.cell_length, n_slabs)
    while True:
        if 2 * n_slabs > max_slabs:
            raise ConvergenceError(f"transfer function not converged at {max_slabs} slabs")
        T2, noise2, comm2 = _propagate(M, config.cell_length, 2 * n_slabs)
        change = np.max(np.abs(np.abs(T2) - np.abs(T)) / np.maximum(np.abs(T2), 1.0))
        T, noise, comm, n_slabs = T2, noise2, comm2, 2 * n_slabs
        if change < CONVERGENCE_TOL:
            break
    return TransferFunction(omega_grid=omega_grid, T=T, N_added=noise,
                            noise_commutator=comm, n_slabs=n_slabs)


def cw_gain(config: MediumConfig) -> float:
    """Probe power gain ``|T_11(0)|^2`` at the pulse carrier."""
    tf = transfer_function(config, [0.0])
    return float(np.abs(tf.T[0, 0, 0]) ** 2)
