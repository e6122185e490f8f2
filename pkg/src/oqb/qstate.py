"""Qubit density matrices, the battery Hamiltonian and state metrics.

Natural units (hbar = 1) are used everywhere. The computational basis
follows the convention ``|1> = [1, 0]^T`` and ``|0> = [0, 1]^T``, so the
state ``|0><0|`` is ``diag(0, 1)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import DegenerateHamiltonianError, StateValidationError

# spectral floor applied inside every logarithm
EPS = 1e-12

HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-10
PSD_TOL = 1e-10
# eigenvalues in [-PSD_REJECT, 0) are clipped, anything lower is rejected
PSD_REJECT = 1e-8
DEGENERACY_TOL = 1e-9

IDENTITY = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)

KET_1 = np.array([1, 0], dtype=complex)
KET_0 = np.array([0, 1], dtype=complex)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


def projector(ket) -> np.ndarray:
    """Return ``|k><k|`` for a (not necessarily normalised) ket."""
    ket = np.asarray(ket, dtype=complex).reshape(2)
    ket = ket / np.linalg.norm(ket)
    return np.outer(ket, ket.conj())


def as_matrix(x) -> np.ndarray:
    """Return the 2x2 complex matrix behind a state, Hamiltonian or array."""
    if isinstance(x, (QubitState, Hamiltonian)):
        return x.matrix
    m = np.asarray(x, dtype=complex)
    if m.shape != (2, 2):
        raise StateValidationError(f"expected a 2x2 matrix, got shape {m.shape}")
    return m


def repair_density_matrix(m) -> np.ndarray:
    """Validate ``m`` as a density matrix and apply the clipping policy.

    Hermiticity and unit trace must hold within 1e-10. Eigenvalues between
    -1e-8 and 0 are clipped to zero and the matrix renormalised; anything
    more negative is rejected.

    Returns:
        A new Hermitian, unit-trace, PSD complex array.

    Raises:
        StateValidationError: if any of the checks fail.
    """
    m = np.asarray(m, dtype=complex)
    if m.shape != (2, 2):
        raise StateValidationError(f"expected a 2x2 matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise StateValidationError("density matrix has non-finite entries")
    herm_err = np.max(np.abs(m - m.conj().T))
    if herm_err > HERMITIAN_TOL:
        raise StateValidationError(f"matrix is not Hermitian (error {herm_err:.3e})")
    m = 0.5 * (m + m.conj().T)
    tr = np.trace(m).real
    if abs(tr - 1.0) > TRACE_TOL:
        raise StateValidationError(f"trace is {tr!r}, expected 1")
    evals, evecs = np.linalg.eigh(m)
    if evals[0] < -PSD_REJECT:
        raise StateValidationError(f"negative eigenvalue {evals[0]:.3e}")
    if evals[0] < 0.0:
        evals = np.clip(evals, 0.0, None)
        evals = evals / evals.sum()
        m = (evecs * evals) @ evecs.conj().T
        m = 0.5 * (m + m.conj().T)
    return m


class QubitState:
    """Immutable, validated 2x2 density matrix.

    Construction applies :func:`repair_density_matrix`, so a state built from
    integrator output with tiny negative eigenvalues is silently clipped,
    while a grossly unphysical matrix raises.
    """

    __slots__ = ("_matrix",)

    def __init__(self, matrix):
        if isinstance(matrix, QubitState):
            self._matrix = matrix._matrix
            return
        self._matrix = _readonly(repair_density_matrix(matrix))

    @classmethod
    def pure(cls, ket) -> "QubitState":
        return cls(projector(ket))

    @classmethod
    def from_bloch(cls, x: float, y: float, z: float) -> "QubitState":
        return cls(0.5 * (IDENTITY + x * SIGMA_X + y * SIGMA_Y + z * SIGMA_Z))

    @classmethod
    def maximally_mixed(cls) -> "QubitState":
        return cls(0.5 * IDENTITY)

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    @property
    def bloch(self) -> np.ndarray:
        m = self._matrix
        return np.array([2 * m[1, 0].real, 2 * m[1, 0].imag, (m[0, 0] - m[1, 1]).real])

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self._matrix)

    @property
    def purity(self) -> float:
        return float(np.real(np.trace(self._matrix @ self._matrix)))

    def is_pure(self, tol: float = 1e-9) -> bool:
        return abs(self.purity - 1.0) <= tol

    def __array__(self, dtype=None, copy=None):
        a = np.array(self._matrix, dtype=dtype)
        return a

    def __repr__(self) -> str:
        return f"QubitState({np.array2string(self._matrix, precision=6)})"


StateLike = Union[QubitState, np.ndarray]


# |0><0| in the SM convention
GROUND_KET_STATE = QubitState.pure(KET_0)


def _phase_fix(ket: np.ndarray) -> np.ndarray:
    # first nonzero component real-positive
    idx = int(np.argmax(np.abs(ket) > 1e-12))
    c = ket[idx]
    return ket * (abs(c) / c)


class Hamiltonian:
    """Non-degenerate 2x2 Hermitian battery Hamiltonian.

    Caches the eigen-decomposition: ``energies = (E_g, E_e)``, the eigen-kets,
    the projectors ``rho_e``/``rho_g`` and the capacity ``E_e - E_g``.
    """

    __slots__ = ("_matrix", "energies", "ket_e", "ket_g", "rho_e", "rho_g")

    def __init__(self, matrix):
        m = np.asarray(matrix, dtype=complex)
        if m.shape != (2, 2):
            raise StateValidationError(f"expected a 2x2 matrix, got shape {m.shape}")
        if np.max(np.abs(m - m.conj().T)) > 1e-12:
            raise StateValidationError("Hamiltonian is not Hermitian")
        m = 0.5 * (m + m.conj().T)
        evals, evecs = np.linalg.eigh(m)
        if evals[1] - evals[0] < DEGENERACY_TOL:
            raise DegenerateHamiltonianError(
                f"degenerate spectrum {evals[0]!r}, {evals[1]!r}")
        self._matrix = _readonly(m)
        self.energies = (float(evals[0]), float(evals[1]))
        self.ket_g = _readonly(_phase_fix(evecs[:, 0]))
        self.ket_e = _readonly(_phase_fix(evecs[:, 1]))
        self.rho_e = QubitState(projector(self.ket_e))
        self.rho_g = QubitState(projector(self.ket_g))

    @classmethod
    def qubit(cls, Omega: float = 3.0, omega: float = 1.0) -> "Hamiltonian":
        """Build ``Omega * sigma_x + omega * sigma_z``."""
        return cls(Omega * SIGMA_X + omega * SIGMA_Z)

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    @property
    def E_g(self) -> float:
        return self.energies[0]

    @property
    def E_e(self) -> float:
        return self.energies[1]

    @property
    def capacity(self) -> float:
        """E_max, the gap between the charged and discharged levels."""
        return self.energies[1] - self.energies[0]

    def __repr__(self) -> str:
        return f"Hamiltonian({np.array2string(self._matrix, precision=6)})"


@dataclass(frozen=True)
class OutcomeDistribution:
    """Probabilities of the two outcomes of an energy measurement."""

    p_e: float
    p_g: float

    def __post_init__(self):
        for p in (self.p_e, self.p_g):
            if not 0.0 <= p <= 1.0:
                raise StateValidationError(f"probability {p!r} outside [0, 1]")
        if abs(self.p_e + self.p_g - 1.0) > 1e-12:
            raise StateValidationError("probabilities do not sum to one")

    @classmethod
    def from_p_e(cls, p_e: float) -> "OutcomeDistribution":
        p_e = float(min(max(p_e, 0.0), 1.0))
        return cls(p_e, 1.0 - p_e)

    @classmethod
    def from_state(cls, rho: StateLike, H: Hamiltonian) -> "OutcomeDistribution":
        return cls.from_p_e(excited_population(rho, H))


def max_min_energy_states(H: Hamiltonian) -> tuple[QubitState, QubitState]:
    """Return ``(rho_e, rho_g)``, the projectors on the highest and lowest level."""
    return H.rho_e, H.rho_g


def excited_population(rho: StateLike, H: Hamiltonian) -> float:
    """``Tr[rho rho_e]``, the probability of the outcome *e*."""
    return float(np.real(np.trace(as_matrix(rho) @ H.rho_e.matrix)))


def overlap_batch(a: StateLike, states: np.ndarray) -> np.ndarray:
    """``Re Tr[a rho_n]`` over a (n, 2, 2) stack.

    Written as an explicit four-term sum so the rounding does not depend on
    memory layout, which keeps ensemble reductions bit-reproducible.
    """
    a = as_matrix(a)
    s = np.asarray(states)
    return (a[0, 0] * s[:, 0, 0] + a[0, 1] * s[:, 1, 0]
            + a[1, 0] * s[:, 0, 1] + a[1, 1] * s[:, 1, 1]).real


def trace_distance(rho: StateLike, sigma: StateLike) -> float:
    """``T = 1/2 Tr|rho - sigma|``."""
    d = as_matrix(rho) - as_matrix(sigma)
    d = 0.5 * (d + d.conj().T)
    return float(min(0.5 * np.sum(np.abs(np.linalg.eigvalsh(d))), 1.0))


def _sqrtm_psd(m: np.ndarray) -> np.ndarray:
    evals, evecs = np.linalg.eigh(m)
    return (evecs * np.sqrt(np.clip(evals, 0.0, None))) @ evecs.conj().T


def fidelity(rho: StateLike, sigma: StateLike) -> float:
    """Uhlmann fidelity ``(Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2``."""
    r = as_matrix(rho)
    s = as_matrix(sigma)
    sr = _sqrtm_psd(0.5 * (r + r.conj().T))
    inner = sr @ s @ sr
    evals = np.linalg.eigvalsh(0.5 * (inner + inner.conj().T))
    f = np.sum(np.sqrt(np.clip(evals, 0.0, None))) ** 2
    return float(min(max(f, 0.0), 1.0))


def pure_state_fidelity(rho_pure: StateLike, sigma: StateLike) -> float:
    """Fidelity shortcut ``Tr[rho sigma]``, exact when ``rho_pure`` is pure."""
    f = np.real(np.trace(as_matrix(rho_pure) @ as_matrix(sigma)))
    return float(min(max(f, 0.0), 1.0))


def von_neumann_entropy(rho: StateLike) -> float:
    evals = np.linalg.eigvalsh(as_matrix(rho))
    evals = evals[evals > EPS]
    return float(-np.sum(evals * np.log(evals)))


def shannon_entropy(P: Union[OutcomeDistribution, float]) -> float:
    """Binary Shannon entropy in nats; accepts a distribution or ``P_e``."""
    if not isinstance(P, OutcomeDistribution):
        P = OutcomeDistribution.from_p_e(P)
    h = 0.0
    for p in (P.p_e, P.p_g):
        if p > 0.0:
            h -= p * np.log(p)
    return float(h)


def energy(rho: StateLike, H: Hamiltonian) -> float:
    return float(np.real(np.trace(H.matrix @ as_matrix(rho))))


def ergotropy(rho: StateLike, H: Hamiltonian) -> float:
    """Energy extractable by unitaries: ``Tr[H rho] - Tr[H rho_passive]``.

    The passive state puts the largest eigenvalue of ``rho`` on the ground
    level and the smallest on the excited one.
    """
    r_small, r_large = np.linalg.eigvalsh(as_matrix(rho))
    passive = r_large * H.E_g + r_small * H.E_e
    return float(max(energy(rho, H) - passive, 0.0))


def regularized_log(rho: StateLike) -> np.ndarray:
    """Matrix logarithm with eigenvalues floored at :data:`EPS`."""
    m = as_matrix(rho)
    evals, evecs = np.linalg.eigh(0.5 * (m + m.conj().T))
    return (evecs * np.log(np.maximum(evals, EPS))) @ evecs.conj().T


def spectral_floor_active(rho: StateLike) -> bool:
    """True when a logarithm of ``rho`` needs the spectral floor."""
    return bool(np.linalg.eigvalsh(as_matrix(rho))[0] < EPS)


def relative_entropy(rho: StateLike, sigma: StateLike) -> float:
    """``S(rho || sigma) = Tr[rho (log rho - log sigma)]`` with floored logs."""
    r = as_matrix(rho)
    val = np.trace(r @ (regularized_log(r) - regularized_log(sigma))).real
    return float(val)


def gibbs_state(H: Hamiltonian, temperature: float) -> QubitState:
    """Thermal state ``exp(-H/T)/Z`` for a positive temperature."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    weights = np.exp(-(np.array(H.energies) - H.E_g) / temperature)
    weights /= weights.sum()
    return energy_diagonal_state(H, p_e=weights[1])


def energy_diagonal_state(H: Hamiltonian, p_e: float) -> QubitState:
    """State with population ``p_e`` on the excited level and no coherence."""
    return QubitState(p_e * H.rho_e.matrix + (1.0 - p_e) * H.rho_g.matrix)
