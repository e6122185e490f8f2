"""Energy and entropy bookkeeping for the stabilisation protocol.

Sign conventions: work ``W_stab`` is energy spent on the battery by the
controller (unitary kicks, measurement back-action and Landauer erasure).
Losses ``Delta L = int Tr[H0 D[rho_t]] dt`` are the signed energy flow from
the environment into the battery, so a leaking battery has negative losses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np
from scipy import integrate

from .liouville import (
    DephasingGenerator,
    Liouvillian,
    SteadyState,
    energy_current_batch,
    propagate,
)
from .qstate import (
    EPS,
    Hamiltonian,
    OutcomeDistribution,
    QubitState,
    StateLike,
    as_matrix,
    energy,
    excited_population,
    shannon_entropy,
)

WORK_KINDS = ("evol", "meas", "landauer")
LOSS_KINDS = ("evol-loss", "zeno-loss")


class LedgerEntry(NamedTuple):
    time: float
    kind: str
    value: float


def _cumulate(entries: Sequence[LedgerEntry], kinds, times: np.ndarray) -> np.ndarray:
    sel = [e for e in entries if e.kind in kinds]
    if not sel:
        return np.zeros(len(times))
    t = np.array([e.time for e in sel])
    v = np.array([e.value for e in sel])
    order = np.argsort(t, kind="stable")
    cum = np.concatenate(([0.0], np.cumsum(v[order])))
    # right-continuous: an entry booked at t counts from t on
    idx = np.searchsorted(t[order], times + 1e-12, side="right")
    return cum[idx]


@dataclass(frozen=True, eq=False)
class EnergyLedger:
    """Cumulative work and loss curves on a time grid.

    ``loss`` holds the losses of the controlled run(s); ``baseline_loss``,
    when present, the leakage of the uncontrolled battery used by the excess
    cost. Per-run ledgers keep their individual entries; averaged ledgers
    keep only the curves.
    """

    times: np.ndarray
    work: np.ndarray
    loss: np.ndarray
    capacity: float
    entries: tuple = ()
    baseline_loss: Optional[np.ndarray] = None

    @classmethod
    def from_entries(cls, entries, times, capacity, baseline_loss=None) -> "EnergyLedger":
        times = np.asarray(times, dtype=float)
        entries = tuple(entries)
        return cls(
            times=times,
            work=_cumulate(entries, WORK_KINDS, times),
            loss=_cumulate(entries, LOSS_KINDS, times),
            capacity=capacity,
            entries=entries,
            baseline_loss=baseline_loss,
        )

    @classmethod
    def mean(cls, ledgers: Sequence["EnergyLedger"]) -> "EnergyLedger":
        """Index-ordered average of per-run ledgers sharing one grid."""
        if not ledgers:
            raise ValueError("no ledgers to average")
        work = np.zeros_like(ledgers[0].work)
        loss = np.zeros_like(ledgers[0].loss)
        for led in ledgers:
            work += led.work
            loss += led.loss
        n = len(ledgers)
        return cls(ledgers[0].times, work / n, loss / n, ledgers[0].capacity,
                   baseline_loss=ledgers[0].baseline_loss)

    def with_baseline(self, baseline_loss: np.ndarray) -> "EnergyLedger":
        return replace(self, baseline_loss=np.asarray(baseline_loss, dtype=float))

    def entry_sum(self, kinds=WORK_KINDS) -> float:
        return float(sum(e.value for e in self.entries if e.kind in kinds))

    @property
    def total_work(self) -> float:
        return float(self.work[-1])

    @property
    def total_loss(self) -> float:
        return float(self.loss[-1])

    def index_at(self, t: float) -> int:
        if t < self.times[0] - 1e-12 or t > self.times[-1] + 1e-12:
            raise ValueError(f"time {t!r} outside ledger span")
        return int(np.searchsorted(self.times, t + 1e-12, side="right") - 1)


# --- elementary costs -----------------------------------------------------

def delta_E_evol(rho0: StateLike, rho_i: StateLike, H: Hamiltonian) -> float:
    """Initialisation cost ``Tr[H0 (rho_i - rho_0)]``."""
    return energy(rho_i, H) - energy(rho0, H)


def measurement_energy(rho_pre: StateLike, outcome: str, H: Hamiltonian) -> float:
    """Back-action energy ``Tr[H0 (rho_post - rho_pre)]`` of a projective measurement."""
    if outcome == "e":
        post = H.E_e
    elif outcome == "g":
        post = H.E_g
    else:
        raise ValueError(f"outcome must be 'e' or 'g', got {outcome!r}")
    return post - energy(rho_pre, H)


def landauer_cost(P: Union[OutcomeDistribution, float], beta: float) -> float:
    """Minimal erasure cost ``H(P)/beta`` of one recorded outcome."""
    if not beta > 0:
        raise ValueError(f"inverse temperature must be positive, got {beta!r}")
    if math.isinf(beta):
        return 0.0
    return shannon_entropy(P) / beta


def loss_integral(states: np.ndarray, times: np.ndarray, H: Hamiltonian,
                  g: DephasingGenerator) -> float:
    """Integral of ``Tr[H0 D[rho_t]]`` over sampled states (Simpson, trapezoid for two points)."""
    states = np.asarray(states, dtype=complex)
    times = np.asarray(times, dtype=float)
    if len(states) < 2 or len(states) != len(times):
        raise ValueError("need at least two samples with matching times")
    current = energy_current_batch(states, H, g)
    if len(states) == 2:
        return float(integrate.trapezoid(current, times))
    return float(integrate.simpson(current, x=times))


def segment_loss(rho_start: StateLike, duration: float, L: Liouvillian,
                 h: float) -> float:
    """Losses of a free-evolution segment, sampled with steps no longer than ``h``."""
    if duration <= 0:
        return 0.0
    n = max(int(math.ceil(duration / h - 1e-9)), 1)
    step = duration / n
    states = L.sample(rho_start, 0.0, step, n + 1)
    times = step * np.arange(n + 1)
    return loss_integral(states, times, L.hamiltonian, L.generator)


# --- closed-form estimates ------------------------------------------------

def geometric_attempt_factor(p_g: float, n_bar: float) -> float:
    """``1 + sum_{k=1}^{n_bar} p_g^k``, continued to real ``n_bar``."""
    if not 0.0 <= p_g < 1.0:
        raise ValueError(f"p_g must lie in [0, 1), got {p_g!r}")
    if n_bar < 0:
        raise ValueError("n_bar must be non-negative")
    if p_g == 0.0:
        return 1.0
    return 1.0 + p_g * (1.0 - p_g ** n_bar) / (1.0 - p_g)


def total_work_estimate(delta_e_evol: float, p_g: float, n_bar: float, m_bar: float,
                        beta: float, rho_alpha: StateLike, H: Hamiltonian) -> float:
    """Average work up to the horizon, ``(1 + sum P_g^k) dE_evol + m H(P(rho_a))/beta``."""
    if m_bar < 0:
        raise ValueError("m_bar must be non-negative")
    zeno = m_bar * landauer_cost(excited_population(rho_alpha, H), beta) if m_bar else 0.0
    return geometric_attempt_factor(p_g, n_bar) * delta_e_evol + zeno


def total_loss_estimate(delta_l_evol: float, p_g: float, n_bar: float,
                        zeno_losses: Union[float, Sequence[float]]) -> float:
    """Average leakage up to the horizon.

    ``zeno_losses`` is either the already-summed Zeno contribution or the
    sequence of per-period loss integrals.
    """
    if not np.isscalar(zeno_losses):
        zeno_losses = float(np.sum(zeno_losses))
    return geometric_attempt_factor(p_g, n_bar) * delta_l_evol + float(zeno_losses)


def first_order_excess_cost(p_g: float, delta_e_evol: float, delta_l_evol: float,
                            capacity: float) -> float:
    """Small-``P_g`` excess cost ``(1 + P_g) |dE_evol - dL_evol| / E_max``."""
    return (1.0 + p_g) * abs(delta_e_evol - delta_l_evol) / capacity


def avg_power_estimate(rho0: StateLike, rho_i: StateLike, H: Hamiltonian, m_bar: float,
                       beta: float, rho_alpha: StateLike, tau: float) -> float:
    """Average stabilisation power per Zeno period."""
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau!r}")
    zeno = m_bar * landauer_cost(excited_population(rho_alpha, H), beta) if m_bar else 0.0
    return (delta_E_evol(rho0, rho_i, H) + zeno) / tau


# --- performance measures -------------------------------------------------

def relative_costs(ledger: EnergyLedger, t: float, capacity: Optional[float] = None):
    """Return ``(varsigma, xi)`` at time ``t``.

    ``xi`` needs the uncontrolled leakage curve in ``ledger.baseline_loss``.
    """
    cap = ledger.capacity if capacity is None else capacity
    i = ledger.index_at(t)
    w = ledger.work[i]
    if ledger.baseline_loss is None:
        raise ValueError("ledger has no uncontrolled baseline for the excess cost")
    return float(w / cap), float(abs(w - ledger.baseline_loss[i]) / cap)


def relative_cost_curves(ledger: EnergyLedger):
    """Vectorised :func:`relative_costs` over the ledger grid."""
    varsigma = ledger.work / ledger.capacity
    if ledger.baseline_loss is None:
        return varsigma, None
    return varsigma, np.abs(ledger.work - ledger.baseline_loss) / ledger.capacity


class RateFit(NamedTuple):
    rate: float
    intercept: float
    residual: float


def stabilization_rate(ledger: EnergyLedger, tau: float) -> RateFit:
    """Least-squares slope of ``varsigma(t)`` over the final third of the record.

    Raises:
        ValueError: if the record is shorter than ten Zeno periods.
    """
    span = ledger.times[-1] - ledger.times[0]
    if span < 10 * tau:
        raise ValueError("record too short to estimate the stabilisation rate")
    t0 = ledger.times[-1] - span / 3.0
    mask = ledger.times >= t0
    t = ledger.times[mask]
    y = ledger.work[mask] / ledger.capacity
    A = np.vstack([t, np.ones_like(t)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - y) ** 2)))
    return RateFit(float(coef[0]), float(coef[1]), resid)


def break_even_time(ledger_or_times, work=None, capacity: Optional[float] = None) -> float:
    """First time the average work reaches the capacity, linearly interpolated.

    Returns ``math.inf`` when the work stays below the capacity within the
    record.
    """
    if isinstance(ledger_or_times, EnergyLedger):
        times = ledger_or_times.times
        work = ledger_or_times.work
        capacity = ledger_or_times.capacity if capacity is None else capacity
    else:
        times = np.asarray(ledger_or_times, dtype=float)
        work = np.asarray(work, dtype=float)
    if capacity is None:
        raise ValueError("capacity required")
    hits = np.nonzero(work >= capacity)[0]
    if len(hits) == 0:
        return math.inf
    k = int(hits[0])
    if k == 0:
        return float(times[0])
    w0, w1 = work[k - 1], work[k]
    frac = (capacity - w0) / (w1 - w0)
    return float(times[k - 1] + frac * (times[k] - times[k - 1]))


# --- measurement entropy ---------------------------------------------------

def zeno_state(L: Liouvillian, tau: float) -> QubitState:
    """``rho_alpha``: the excited state after one free period ``tau``."""
    return propagate(L.hamiltonian.rho_e, L, tau)


def sigma_NU(rho: StateLike, L: Liouvillian, H: Hamiltonian) -> float:
    """Shannon-entropy rate ``-dP_e/dt log(P_e / (1 - P_e))`` under free evolution."""
    r = as_matrix(rho)
    p_e = min(max(excited_population(r, H), EPS), 1.0 - EPS)
    p_dot = float(np.real(np.trace(L.apply(r) @ H.rho_e.matrix)))
    return -p_dot * math.log(p_e / (1.0 - p_e))


def zeno_entropy_integral(tau: float, L: Liouvillian, H: Optional[Hamiltonian] = None) -> float:
    """``int_0^tau dH(P)/dt dt`` from ``rho_e``, i.e. ``H(P(rho_alpha))``."""
    H = L.hamiltonian if H is None else H
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau!r}")
    return shannon_entropy(excited_population(propagate(H.rho_e, L, tau), H))


def zeno_entropy_integral_quadrature(tau: float, L: Liouvillian,
                                     H: Optional[Hamiltonian] = None) -> float:
    """Same integral by adaptive quadrature of :func:`sigma_NU`."""
    H = L.hamiltonian if H is None else H
    rho_e = H.rho_e.matrix

    def integrand(t):
        return sigma_NU(L.evolve(rho_e, t), L, H)

    val, _ = integrate.quad(integrand, 0.0, tau, limit=200, epsabs=1e-12, epsrel=1e-10)
    return float(val)


def zeno_count(tau: float, T_zeno: float, integer_count: bool = False) -> float:
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau!r}")
    if tau > T_zeno:
        raise ValueError("tau exceeds the Zeno duration")
    m = T_zeno / tau
    return float(math.floor(m + 1e-9)) if integer_count else m


def sigma_zeno(tau: float, T_zeno: float, L: Liouvillian, H: Optional[Hamiltonian] = None,
               integer_count: bool = False) -> float:
    """Entropic cost of a Zeno stage of length ``T_zeno`` measured every ``tau``.

    The number of measurements defaults to the mean count ``T_zeno/tau``;
    ``integer_count=True`` uses ``floor(T_zeno/tau)`` instead.
    """
    return zeno_count(tau, T_zeno, integer_count) * zeno_entropy_integral(tau, L, H)


def unstored_energy_fraction(tau: float, T_zeno: float, L: Liouvillian,
                             H: Optional[Hamiltonian] = None,
                             integer_count: bool = False) -> float:
    """``m P_g(rho_alpha)``: expected failed projections, i.e. missed energy in units of E_max."""
    H = L.hamiltonian if H is None else H
    p_g = 1.0 - excited_population(zeno_state(L, tau), H)
    return zeno_count(tau, T_zeno, integer_count) * p_g


# --- second-law bound -------------------------------------------------------

def _batch_log(states: np.ndarray) -> np.ndarray:
    herm = 0.5 * (states + np.conj(np.swapaxes(states, -1, -2)))
    evals, evecs = np.linalg.eigh(herm)
    logs = np.log(np.maximum(evals, EPS))
    return (evecs * logs[..., None, :]) @ np.conj(np.swapaxes(evecs, -1, -2))


def _tr(a, b):
    return np.einsum("...ij,...ji->...", a, b).real


@dataclass(frozen=True, eq=False)
class PowerBoundReport:
    """Rates entering the minimum-power bound on a time grid.

    ``E_dot``, ``W_dot`` and friends are the smooth (between-jump) parts;
    measurement and unitary jumps are listed separately and checked in
    integrated form. ``slack`` is ``W_dot - (E_dot - T S_dot_D)`` and is only
    defined for a finite reference temperature.
    """

    times: np.ndarray
    E_dot: np.ndarray
    S_dot_D: np.ndarray
    E_dot_D: np.ndarray
    Sigma_D: np.ndarray
    W_dot: np.ndarray
    relative_entropy: np.ndarray
    temperature: float
    slack: Optional[np.ndarray] = None
    jump_slack_min: float = 0.0
    n_records: int = 1
    notes: tuple = field(default_factory=tuple)

    @property
    def bounded(self) -> bool:
        return self.slack is not None


def power_bound_report(records, L: Liouvillian, ss: SteadyState, H: Optional[Hamiltonian] = None,
                       reference_temperature: Optional[float] = None) -> PowerBoundReport:
    """Evaluate the entropy-production rates and the power bound.

    ``records`` is one trajectory record or a sequence of them (averaged in
    index order). The temperature is the steady-state effective temperature
    unless ``reference_temperature`` is given; when it is unbounded only
    ``Sigma_D >= 0`` and the relative-entropy curve are reported.
    """
    from .liouville import effective_temperature

    H = L.hamiltonian if H is None else H
    if hasattr(records, "states"):
        records = [records]
    records = list(records)
    ref = ss.state.matrix
    log_ref = _batch_log(ref[None])[0]
    if reference_temperature is not None:
        T = float(reference_temperature)
    else:
        T = effective_temperature(ss, H)
    finite = math.isfinite(T)

    acc = None
    jump_min = math.inf
    for rec in records:
        states = np.asarray(rec.states)
        gen = L.apply(states)
        logs = _batch_log(states)
        e_dot = _tr(H.matrix, gen)
        e_dot_d = energy_current_batch(states, H, L.generator)
        s_dot = -_tr(gen, logs)
        sigma = -_tr(gen, logs - log_ref)
        rel = _tr(states, logs - log_ref)
        vals = np.stack([e_dot, s_dot, e_dot_d, sigma, e_dot - e_dot_d, rel])
        acc = vals if acc is None else acc + vals
        for ev in getattr(rec, "events", ()):
            # integrated bound across a jump: dW >= dE, i.e. Landauer >= 0
            jump_min = min(jump_min, ev.landauer)
    acc = acc / len(records)
    if jump_min is math.inf:
        jump_min = 0.0
    slack = None
    notes = ()
    if finite:
        slack = acc[4] - (acc[0] - T * acc[1])
    else:
        notes = ("effective temperature unbounded: bound reported as Sigma_D >= 0",)
    return PowerBoundReport(
        times=np.asarray(records[0].times),
        E_dot=acc[0], S_dot_D=acc[1], E_dot_D=acc[2], Sigma_D=acc[3], W_dot=acc[4],
        relative_entropy=acc[5], temperature=T, slack=slack, jump_slack_min=jump_min,
        n_records=len(records), notes=notes,
    )
