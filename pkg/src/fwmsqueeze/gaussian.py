"""Two-mode Gaussian states of the probe and conjugate.

Quadrature ordering is ``(x_s, p_s, x_i, p_i)`` with ``x = a + a^dag`` and
``p = -i (a - a^dag)``, so the vacuum covariance is the identity and a
coherent amplitude ``alpha`` has mean ``x = 2 Re alpha``.

Intensity-difference noise is evaluated in the bright-beam linearisation
``dN_j = |alpha_j| dX_j`` and normalised to the shot noise of the total
photon number, so 1.0 is the standard quantum limit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .errors import CutoffError, DomainError, PhysicalityError, PreconditionError
from .medium import J, MediumConfig, transfer_function

PHYSICALITY_TOL = 1e-9
SYMMETRY_TOL = 1e-12
BRIGHT_BEAM_RATIO = 100.0

_OMEGA = np.kron(np.eye(2), np.array([[0.0, 1.0], [-1.0, 0.0]]))

# (a, b^dag) = K r  for  r = (x_s, p_s, x_i, p_i)
_K = 0.5 * np.array([[1, 1j, 0, 0], [0, 0, 1, -1j]])
_L = np.vstack([_K, np.conj(_K)])
_L_INV = 2.0 * np.conj(_L.T)


def symplectic_eigenvalues(cov) -> np.ndarray:
    eig = np.linalg.eigvals(1j * _OMEGA @ np.asarray(cov))
    return np.sort(np.abs(eig))[::2]


@dataclass(frozen=True)
class GaussianState:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(4)
        cov = np.asarray(self.cov, dtype=float).reshape(4, 4)
        scale = max(1.0, float(np.max(np.abs(cov))))
        if np.max(np.abs(cov - cov.T)) > SYMMETRY_TOL * scale:
            raise PhysicalityError("covariance matrix is not symmetric")
        cov = 0.5 * (cov + cov.T)
        nu = symplectic_eigenvalues(cov).min()
        if nu < 1.0 - PHYSICALITY_TOL:
            raise PhysicalityError(f"state violates the uncertainty principle (nu_min = {nu:.3g})")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def photon_means(self) -> np.ndarray:
        """Mean-field photon numbers ``|alpha_s|^2, |alpha_i|^2``."""
        m = self.mean
        return np.array([m[0] ** 2 + m[1] ** 2, m[2] ** 2 + m[3] ** 2]) / 4.0

    def min_symplectic_eigenvalue(self) -> float:
        return float(symplectic_eigenvalues(self.cov).min())


def vacuum() -> GaussianState:
    return GaussianState(np.zeros(4), np.eye(4))


def coherent_input(mean_photon_flux_s: float, excess_noise_db: float = 0.0) -> GaussianState:
    """Seeded probe with classical amplitude noise; vacuum in the conjugate port.

    ``mean_photon_flux_s`` is the mean probe photon number per detection
    window. The excess noise raises the probe amplitude-quadrature variance
    to ``10**(excess_noise_db / 10)``.
    """
    if mean_photon_flux_s < 0:
        raise DomainError("photon flux must be >= 0")
    if excess_noise_db < 0:
        raise DomainError("excess noise must be >= 0 dB")
    cov = np.eye(4)
    cov[0, 0] = undb(excess_noise_db)
    mean = np.array([2.0 * np.sqrt(mean_photon_flux_s), 0.0, 0.0, 0.0])
    return GaussianState(mean, cov)


def split_coherent(total_photons: float) -> GaussianState:
    """A coherent beam split 50:50 onto the two detector arms."""
    if total_photons < 0:
        raise DomainError("photon number must be >= 0")
    amp = 2.0 * np.sqrt(total_photons / 2.0)
    return GaussianState(np.array([amp, 0.0, amp, 0.0]), np.eye(4))


def symplectic_embedding(T) -> np.ndarray:
    """Real 4x4 matrix acting on quadratures for a map on ``(a, b^dag)``."""
    T = np.asarray(T, dtype=complex)
    big = np.zeros((4, 4), dtype=complex)
    big[:2, :2] = T
    big[2:, 2:] = np.conj(T)
    S = _L_INV @ big @ _L
    return S.real


def noise_embedding(N) -> np.ndarray:
    """Real quadrature covariance of phase-insensitive noise ``N`` on ``(a, b^dag)``."""
    N = np.asarray(N, dtype=complex)
    big = np.zeros((4, 4), dtype=complex)
    big[:2, :2] = 0.5 * N
    big[2:, 2:] = 0.5 * np.conj(N)
    V = _L_INV @ big @ np.conj(_L_INV.T)
    return V.real


def check_transfer(T, N_commutator, tol: float = PHYSICALITY_TOL) -> None:
    T = np.asarray(T, dtype=complex)
    resid = T @ J @ np.conj(T.T) + np.asarray(N_commutator) - J
    if np.max(np.abs(resid)) > tol * max(1.0, float(np.max(np.abs(T)) ** 2)):
        raise PhysicalityError("transfer matrix does not preserve commutators")


def apply_transfer(state: GaussianState, T, N_added=None, N_commutator=None) -> GaussianState:
    """Propagate ``state`` through a Bogoliubov map plus added noise.

    Without ``N_added`` the map must be lossless on its own; with it, the
    noise commutator is required for the physicality check.
    """
    T = np.asarray(T, dtype=complex)
    if N_added is None:
        N = comm = np.zeros((2, 2))
    elif N_commutator is None:
        raise PhysicalityError("added noise needs its commutator matrix for the physicality check")
    else:
        N, comm = np.asarray(N_added), np.asarray(N_commutator)
    check_transfer(T, comm)
    S = symplectic_embedding(T)
    cov = S @ state.cov @ S.T + noise_embedding(N)
    return GaussianState(S @ state.mean, 0.5 * (cov + cov.T))


def apply_loss(state: GaussianState, eta_s: float, eta_i: float | None = None) -> GaussianState:
    """Beam-splitter loss with transmissions ``eta_s``, ``eta_i`` into vacuum."""
    eta_i = eta_s if eta_i is None else eta_i
    for eta in (eta_s, eta_i):
        if not 0.0 <= eta <= 1.0:
            raise DomainError(f"efficiency {eta} outside [0, 1]")
    t = np.sqrt(np.array([eta_s, eta_s, eta_i, eta_i]))
    cov = t[:, None] * state.cov * t[None, :] + np.diag(1.0 - t**2)
    return GaussianState(t * state.mean, cov)


def _difference_gradient(state: GaussianState):
    m = state.mean
    grad = np.array([m[0], m[1], -m[2], -m[3]]) / 2.0
    return grad


def check_bright(state: GaussianState) -> None:
    total = 4.0 * state.photon_means.sum()
    largest = float(np.max(np.linalg.eigvalsh(state.cov)))
    if total < BRIGHT_BEAM_RATIO * largest:
        raise PreconditionError(
            "beams too dim for the linearised photon-number model "
            f"(sum of squared means {total:.3g} < {BRIGHT_BEAM_RATIO:g} x variance {largest:.3g}); "
            "use fock_tms_statistics for dim states"
        )


def photon_number_covariance(state: GaussianState) -> np.ndarray:
    """Linearised 2x2 covariance of ``(N_s, N_i)``."""
    m = state.mean
    G = np.array([[m[0], m[1], 0.0, 0.0], [0.0, 0.0, m[2], m[3]]]) / 2.0
    return G @ state.cov @ G.T


def intensity_difference_variance(state: GaussianState) -> float:
    """``Var(N_s - N_i) / (<N_s> + <N_i>)``; 1.0 is the shot-noise limit."""
    check_bright(state)
    g = _difference_gradient(state)
    return float(g @ state.cov @ g / state.photon_means.sum())


def ideal_twin_beam_noise(G: float) -> float:
    """Normalised difference noise of a lossless amplifier seeded by a coherent probe."""
    if not G >= 1.0:
        raise DomainError(f"gain must be >= 1, got {G}")
    return 1.0 / (2.0 * G - 1.0)


def two_mode_squeezer(G: float) -> np.ndarray:
    """Bogoliubov matrix on ``(a, b^dag)`` for a lossless amplifier of gain ``G``."""
    if not G >= 1.0:
        raise DomainError(f"gain must be >= 1, got {G}")
    return np.array([[np.sqrt(G), np.sqrt(G - 1.0)], [np.sqrt(G - 1.0), np.sqrt(G)]], dtype=complex)


@dataclass(frozen=True)
class NoiseSpectrumResult:
    omega_grid: np.ndarray
    S: np.ndarray


def sideband_state(state: GaussianState, T_plus, T_minus, N_plus, N_minus,
                   comm_plus, comm_minus, T_carrier) -> GaussianState:
    """State of the detected sideband pair at frequency ``+-omega``.

    The bright mean is carried by the pulse carrier and transforms with
    ``T_carrier``. Fluctuations at ``+omega`` and ``-omega`` beat against it
    and combine into the cosine quadratures seen by a detector at ``omega``;
    their covariance is the real part of the two-sided cross spectrum. With
    ``T_plus = T_minus`` this reduces to :func:`apply_transfer`.
    """
    T_plus = np.asarray(T_plus, dtype=complex)
    T_minus = np.asarray(T_minus, dtype=complex)
    check_transfer(T_plus, comm_plus)
    check_transfer(T_minus, comm_minus)
    big = np.zeros((4, 4), dtype=complex)
    big[:2, :2] = T_plus
    big[2:, 2:] = np.conj(T_minus)
    S = _L_INV @ big @ _L
    noise = np.zeros((4, 4), dtype=complex)
    noise[:2, :2] = 0.5 * np.asarray(N_plus)
    noise[2:, 2:] = 0.5 * np.conj(np.asarray(N_minus))
    cov = (S @ state.cov @ np.conj(S.T) + _L_INV @ noise @ np.conj(_L_INV.T)).real
    mean = symplectic_embedding(T_carrier) @ state.mean
    return GaussianState(mean, 0.5 * (cov + cov.T))


def propagate_spectrum(config: MediumConfig, state: GaussianState, omega_grid) -> list:
    """Output sideband states, one per detection frequency in ``omega_grid``."""
    omega_grid = np.atleast_1d(np.asarray(omega_grid, dtype=float))
    n = len(omega_grid)
    tf = transfer_function(config, np.concatenate([[0.0], omega_grid, -omega_grid]))
    T, N, C = tf.T, tf.N_added, tf.noise_commutator
    return [
        sideband_state(state, T[1 + k], T[1 + n + k], N[1 + k], N[1 + n + k],
                       C[1 + k], C[1 + n + k], T[0])
        for k in range(n)
    ]


MAX_DETECTION_OMEGA = 2 * np.pi * 50e6


def noise_spectrum(config: MediumConfig, input: GaussianState, omega_grid) -> NoiseSpectrumResult:
    """Normalised intensity-difference noise versus detection frequency.

    Raises
    ------
    DomainError
        If any frequency exceeds ``MAX_DETECTION_OMEGA`` in magnitude.
    """
    omega_grid = np.atleast_1d(np.asarray(omega_grid, dtype=float))
    if np.any(np.abs(omega_grid) > MAX_DETECTION_OMEGA * (1 + 1e-12)):
        raise DomainError("noise spectrum is only modelled for |omega| <= 2 pi x 50 MHz")
    states = propagate_spectrum(config, input, omega_grid)
    S = np.array([intensity_difference_variance(s) for s in states])
    return NoiseSpectrumResult(omega_grid=omega_grid, S=S)


def loss_correct(v_measured: float, eta: float) -> float:
    """Undo detection loss on a normalised variance: ``(v - (1 - eta)) / eta``."""
    if not 0.0 < eta <= 1.0:
        raise DomainError(f"efficiency {eta} outside (0, 1]")
    if v_measured <= 1.0 - eta:
        raise DomainError(
            f"measured variance {v_measured} is below the loss floor 1 - eta = {1 - eta}; "
            "correction infeasible"
        )
    return (v_measured - (1.0 - eta)) / eta


def apply_loss_variance(v: float, eta: float) -> float:
    return eta * v + (1.0 - eta)


def db(v: float) -> float:
    v = np.asarray(v, dtype=float)
    if np.any(v <= 0):
        raise DomainError("dB conversion needs positive values")
    out = 10.0 * np.log10(v)
    return float(out) if out.ndim == 0 else out


def undb(d: float) -> float:
    out = 10.0 ** (np.asarray(d, dtype=float) / 10.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class FockStatistics:
    mean_s: float
    mean_i: float
    var_difference: float
    norm: float


def fock_tms_statistics(squeeze_r: float, seed_alpha: complex, cutoff: int) -> FockStatistics:
    """Photon statistics of ``S2(r) (D(alpha)|0>) x |0>`` by exact Fock-space evolution.

    ``S2(r) = exp(r (a b - a^dag b^dag))``. The generator conserves
    ``n_s - n_i``, so each difference sector is evolved on its own with a
    small dense exponential. Raises :class:`CutoffError` when the truncated
    seed norm falls short of ``1 - 1e-8`` or more than ``1e-8`` of the output
    probability sits in the top five Fock levels.
    """
    if cutoff < 8:
        raise CutoffError("cutoff must be at least 8")
    n = np.arange(cutoff)
    log_fact = np.concatenate([[0.0], np.cumsum(np.log(np.arange(1, cutoff)))])
    alpha = complex(seed_alpha)
    if alpha == 0:
        seed = np.zeros(cutoff, dtype=complex)
        seed[0] = 1.0
    else:
        log_amp = -0.5 * abs(alpha) ** 2 + n * np.log(abs(alpha)) - 0.5 * log_fact
        seed = np.exp(log_amp) * np.exp(1j * np.angle(alpha) * n)
    norm = float(np.sum(np.abs(seed) ** 2))
    if norm < 1.0 - 1e-8:
        raise CutoffError(f"seed truncated at {cutoff} photons keeps only norm {norm:.3g}")

    prob = np.zeros((cutoff, cutoff))
    for d in range(cutoff):
        # sector basis |d + k, k>, k = 0..cutoff-1-d; the seed populates k = 0
        size = cutoff - d
        k = np.arange(size - 1)
        coupling = np.sqrt((d + k + 1.0) * (k + 1.0))
        H = np.zeros((size, size))
        H[k, k + 1] = coupling  # a b
        H[k + 1, k] = -coupling  # -a^dag b^dag
        psi0 = np.zeros(size, dtype=complex)
        psi0[0] = seed[d]
        if seed[d] == 0:
            continue
        psi = expm(squeeze_r * H) @ psi0
        kk = np.arange(size)
        prob[d + kk, kk] = np.abs(psi) ** 2

    edge = prob[-5:, :].sum() + prob[:, -5:].sum()
    if edge > 1e-8:
        raise CutoffError(f"{edge:.3g} of the probability reaches the cutoff; increase it")
    total = prob.sum()
    ns = n[:, None] * np.ones(cutoff)[None, :]
    ni = n[None, :] * np.ones(cutoff)[:, None]
    mean_s = float((prob * ns).sum() / total)
    mean_i = float((prob * ni).sum() / total)
    diff = ns - ni
    mean_d = (prob * diff).sum() / total
    var_d = float((prob * diff**2).sum() / total - mean_d**2)
    return FockStatistics(mean_s=mean_s, mean_i=mean_i, var_difference=var_d, norm=norm)
