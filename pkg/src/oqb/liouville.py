"""Open dynamics ``d rho/dt = -i[H0, rho] + D[rho]`` for the qubit battery.

Density matrices are vectorised by column stacking, so that
``vec(A X B) = (B^T kron A) vec(X)`` and the coherent part of the generator
is ``-i (I kron H0 - H0^T kron I)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .errors import IntegratorError, StateValidationError
from .qstate import (
    IDENTITY,
    KET_1,
    Hamiltonian,
    QubitState,
    StateLike,
    as_matrix,
    projector,
    regularized_log,
    repair_density_matrix,
)

log = logging.getLogger(__name__)

NULL_TOL = 1e-9
COHERENCE_TOL = 1e-9
DEFAULT_STEP = 1e-3
_CACHE_LIMIT = 4096


def vec(m: np.ndarray) -> np.ndarray:
    """Column-stack a matrix, or a stack of matrices along the last two axes."""
    m = np.asarray(m)
    if m.ndim == 2:
        return m.reshape(-1, order="F")
    return np.swapaxes(m, -1, -2).reshape(m.shape[:-2] + (-1,))


def unvec(v: np.ndarray) -> np.ndarray:
    """Inverse of :func:`vec`."""
    v = np.asarray(v)
    if v.ndim == 1:
        return v.reshape(2, 2, order="F")
    return np.swapaxes(v.reshape(v.shape[:-1] + (2, 2)), -1, -2)


def commutator_superoperator(H) -> np.ndarray:
    """Superoperator of ``X -> -i[H, X]``."""
    h = as_matrix(H)
    return -1j * (np.kron(IDENTITY, h) - np.kron(h.T, IDENTITY))


@dataclass(frozen=True, eq=False)
class DephasingGenerator:
    """Pure-dephasing dissipator ``D[rho] = gamma (-{N, rho} + 2 N rho N)``.

    ``N`` defaults to ``|1><1| = diag(1, 0)``; any rank-1 projector is
    accepted.
    """

    gamma: float
    projector: np.ndarray = field(default_factory=lambda: projector(KET_1))

    def __post_init__(self):
        if not self.gamma >= 0.0:
            raise ValueError(f"dephasing rate must be >= 0, got {self.gamma!r}")
        n = np.array(self.projector, dtype=complex)
        if n.shape != (2, 2):
            raise ValueError("projector must be 2x2")
        if np.max(np.abs(n @ n - n)) > 1e-12 or np.max(np.abs(n - n.conj().T)) > 1e-12:
            raise ValueError("N must be a Hermitian projector")
        if abs(np.trace(n).real - 1.0) > 1e-12:
            raise ValueError("N must have rank one")
        n.setflags(write=False)
        object.__setattr__(self, "projector", n)

    def apply(self, rho) -> np.ndarray:
        """Evaluate ``D[rho]``; broadcasts over leading axes."""
        r = np.asarray(rho.matrix if isinstance(rho, QubitState) else rho, dtype=complex)
        n = self.projector
        return self.gamma * (-(n @ r) - (r @ n) + 2.0 * (n @ r @ n))

    def superoperator(self) -> np.ndarray:
        n = self.projector
        return self.gamma * (
            -np.kron(IDENTITY, n) - np.kron(n.T, IDENTITY) + 2.0 * np.kron(n.T, n))


def dissipator(rho: StateLike, g: DephasingGenerator) -> np.ndarray:
    """``D[rho]`` as a 2x2 Hermitian, traceless matrix."""
    return g.apply(as_matrix(rho))


class Liouvillian:
    """4x4 generator of the uncontrolled dynamics with cached exponentials.

    Propagators ``exp(L dt)`` are memoised per step length, and stacks of
    powers ``exp(L h)^k`` are kept per sampling step so trajectory segments
    can be sampled with a single batched product.
    """

    def __init__(self, hamiltonian: Hamiltonian, generator: DephasingGenerator):
        self.hamiltonian = hamiltonian
        self.generator = generator
        m = commutator_superoperator(hamiltonian) + generator.superoperator()
        m.setflags(write=False)
        self.matrix = m
        self._exp_cache: dict[float, np.ndarray] = {}
        self._power_cache: dict[float, np.ndarray] = {}

    @property
    def gamma(self) -> float:
        return self.generator.gamma

    def apply(self, rho) -> np.ndarray:
        """``-i[H0, rho] + D[rho]``; broadcasts over leading axes."""
        r = np.asarray(rho.matrix if isinstance(rho, QubitState) else rho, dtype=complex)
        h = self.hamiltonian.matrix
        return -1j * (h @ r - r @ h) + self.generator.apply(r)

    def propagator(self, dt: float) -> np.ndarray:
        """``exp(L dt)`` as a read-only 4x4 array."""
        dt = float(dt)
        if dt < 0:
            raise ValueError(f"negative time step {dt!r}")
        p = self._exp_cache.get(dt)
        if p is None:
            if len(self._exp_cache) >= _CACHE_LIMIT:
                self._exp_cache.clear()
            p = expm(self.matrix * dt)
            p.setflags(write=False)
            self._exp_cache[dt] = p
        return p

    def powers(self, step: float, count: int) -> np.ndarray:
        """Stack ``exp(L step)^k`` for ``k = 0 .. count-1``."""
        step = float(step)
        stack = self._power_cache.get(step)
        if stack is None or len(stack) < count:
            n = max(count, 2 if stack is None else 2 * len(stack))
            base = self.propagator(step)
            stack = np.empty((n, 4, 4), dtype=complex)
            stack[0] = np.eye(4)
            for k in range(1, n):
                stack[k] = base @ stack[k - 1]
            stack.setflags(write=False)
            self._power_cache[step] = stack
        return stack[:count]

    def evolve(self, rho, dt: float) -> np.ndarray:
        """Raw ``unvec(exp(L dt) vec(rho))`` without revalidation."""
        return unvec(self.propagator(dt) @ vec(as_matrix(rho)))

    def sample(self, rho, first_offset: float, step: float, count: int) -> np.ndarray:
        """States at times ``first_offset + k*step`` after ``rho``, shape (count, 2, 2)."""
        if count <= 0:
            return np.empty((0, 2, 2), dtype=complex)
        v0 = self.propagator(first_offset) @ vec(as_matrix(rho))
        return unvec(self.powers(step, count) @ v0)

    def __repr__(self) -> str:
        return f"Liouvillian(H={self.hamiltonian!r}, gamma={self.gamma!r})"


def propagate(rho: StateLike, L: Liouvillian, dt: float) -> QubitState:
    """Evolve ``rho`` for ``dt`` under the open dynamics.

    The result is re-Hermitised and passed through the state clipping
    policy; a PSD violation beyond tolerance is an :class:`IntegratorError`.
    """
    if dt < 0:
        raise ValueError(f"negative time step {dt!r}")
    out = L.evolve(rho, dt)
    try:
        return QubitState(0.5 * (out + out.conj().T))
    except StateValidationError as exc:
        raise IntegratorError(f"propagation produced an invalid state: {exc}") from exc


@dataclass(frozen=True)
class SteadyState:
    """A fixed point of the uncontrolled dynamics and the null-space dimension."""

    state: QubitState
    null_dimension: int

    @property
    def unique(self) -> bool:
        return self.null_dimension == 1


def steady_state(L: Liouvillian) -> SteadyState:
    """Extract a PSD, unit-trace null vector of ``L``.

    When the null space is degenerate, the projection of the maximally mixed
    state onto it is tried first, then each basis vector.
    """
    _, s, vh = np.linalg.svd(L.matrix)
    null = vh[s < NULL_TOL].conj()
    dim = len(null)
    if dim == 0:
        raise IntegratorError("Liouvillian has no null vector")
    candidates = []
    if dim > 1:
        target = vec(0.5 * IDENTITY)
        candidates.append(null.T @ (null.conj() @ target))
    candidates.extend(null)
    for v in candidates:
        m = unvec(v)
        tr = np.trace(m)
        if abs(tr) < 1e-12:
            continue
        m = m / tr
        m = 0.5 * (m + m.conj().T)
        try:
            state = QubitState(repair_density_matrix(m))
        except StateValidationError:
            continue
        if np.linalg.norm(L.matrix @ vec(state.matrix)) <= 1e-10:
            return SteadyState(state, dim)
    raise IntegratorError("no PSD unit-trace fixed point found")


def effective_temperature(ss: SteadyState | QubitState, H: Hamiltonian) -> float:
    """Gibbs temperature reproducing the steady-state populations.

    Returns ``math.inf`` when the two populations are equal and a negative
    value for population inversion.

    Raises:
        StateValidationError: if the steady state has energy-basis coherence.
    """
    rho = ss.state if isinstance(ss, SteadyState) else ss
    m = as_matrix(rho)
    coherence = abs(H.ket_e.conj() @ m @ H.ket_g)
    if coherence > COHERENCE_TOL:
        raise StateValidationError(
            f"steady state has energy-basis coherence {coherence:.3e}; no Gibbs form")
    p_e = float(np.real(H.ket_e.conj() @ m @ H.ket_e))
    p_g = float(np.real(H.ket_g.conj() @ m @ H.ket_g))
    if abs(p_g - p_e) < 1e-9:
        return math.inf
    if p_e <= 0.0:
        return 0.0
    T = H.capacity / math.log(p_g / p_e)
    if T < 0:
        log.warning("population inversion in steady state: negative temperature %g", T)
    return T


def entropy_production_rate_D(rho: StateLike, L: Liouvillian, ss: SteadyState | QubitState) -> float:
    """``-Tr[L[rho] (log rho - log rho_ss)]`` using the full uncontrolled generator."""
    ref = ss.state if isinstance(ss, SteadyState) else ss
    r = as_matrix(rho)
    val = -np.trace(L.apply(r) @ (regularized_log(r) - regularized_log(ref))).real
    return float(val)


def energy_current_D(rho: StateLike, H: Hamiltonian, g: DephasingGenerator) -> float:
    """``Tr[D[rho] H0]``, the energy flowing into the battery from the environment."""
    return float(np.trace(g.apply(as_matrix(rho)) @ H.matrix).real)


def energy_current_batch(states: np.ndarray, H: Hamiltonian, g: DephasingGenerator) -> np.ndarray:
    """Vectorised :func:`energy_current_D` over a (n, 2, 2) stack."""
    d = g.apply(states)
    return np.einsum("...ij,ji->...", d, H.matrix).real


def entropy_rate_S_D(rho: StateLike, L: Liouvillian) -> float:
    """``-Tr[L[rho] log rho]``, the entropy rate of the uncontrolled battery.

    For (near-)pure states the value depends on the spectral floor; see
    :func:`oqb.qstate.spectral_floor_active`.
    """
    r = as_matrix(rho)
    return float(-np.trace(L.apply(r) @ regularized_log(r)).real)
