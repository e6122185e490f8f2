"""Measurement-based stabilisation protocol: single runs and ensembles.

One realisation proceeds as

1. initialisation: an instantaneous y-rotation takes the input state to the
   point of its unitary orbit closest to ``|0><0|``, followed by free open
   evolution for ``t_star``;
2. a projective energy measurement; on outcome *e* the Zeno loop measures
   again every ``tau`` until the horizon;
3. any *g* outcome (first measurement or Zeno failure) restarts step 1 from
   ``rho_g``. Re-initialisation consumes protocol time.

Every realisation draws from its own random stream derived from
``(master_seed, index)``, so ensembles are reproducible and independent of
how the realisations are distributed over worker processes.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Optional

import numpy as np

from .errors import ConfigError
from .liouville import DEFAULT_STEP, DephasingGenerator, Liouvillian, propagate
from .qstate import (
    GROUND_KET_STATE,
    SIGMA_Y,
    Hamiltonian,
    QubitState,
    StateLike,
    as_matrix,
    energy,
    excited_population,
    overlap_batch,
)
from .thermo import EnergyLedger, LedgerEntry, landauer_cost, segment_loss

log = logging.getLogger(__name__)

PHASE_FIRST = "first-measurement"
PHASE_ZENO = "zeno"
PHASE_REINIT = "reinit"

_TIME_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class ProtocolConfig:
    """Parameters of the protocol; defaults reproduce the qubit example.

    ``rho0`` defaults to the ground state ``rho_g`` of the Hamiltonian.
    """

    hamiltonian: Hamiltonian = field(default_factory=Hamiltonian.qubit)
    gamma: float = 2.0 / 3.0
    rho0: Optional[QubitState] = None
    t_star: float = 0.33
    tau: float = 0.0662
    t_fin: float = 10.0
    beta: float = 1.0
    h: float = DEFAULT_STEP
    realizations: int = 1000
    master_seed: int = 42

    def __post_init__(self):
        if not self.gamma >= 0:
            raise ConfigError("gamma must be >= 0")
        if not self.beta > 0:
            raise ConfigError("beta must be > 0")
        if not (0 < self.h <= self.tau <= self.t_star <= self.t_fin):
            raise ConfigError("need 0 < h <= tau <= t_star <= t_fin")
        if self.realizations < 1:
            raise ConfigError("realizations must be >= 1")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("master_seed must be a 64-bit unsigned integer")
        n = self.t_fin / self.h
        if abs(n - round(n)) > 1e-6:
            raise ConfigError("t_fin must be an integer multiple of h")
        if self.rho0 is not None and not isinstance(self.rho0, QubitState):
            object.__setattr__(self, "rho0", QubitState(self.rho0))

    @cached_property
    def liouvillian(self) -> Liouvillian:
        return Liouvillian(self.hamiltonian, DephasingGenerator(self.gamma))

    @property
    def initial_state(self) -> QubitState:
        return self.hamiltonian.rho_g if self.rho0 is None else self.rho0

    def time_grid(self) -> np.ndarray:
        n = int(round(self.t_fin / self.h))
        return self.h * np.arange(n + 1)

    def replace(self, **changes) -> "ProtocolConfig":
        return replace(self, **changes)


def rng_stream(master_seed: int, index: int) -> np.random.Generator:
    """Independent, reproducible generator for realisation ``index``."""
    seq = np.random.SeedSequence(int(master_seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.PCG64(seq))


# --- records ---------------------------------------------------------------

@dataclass(frozen=True)
class MeasurementEvent:
    time: float
    outcome: str
    p_e: float
    energy_pre: float
    energy_post: float
    landauer: float
    phase: str

    @property
    def p_g(self) -> float:
        return 1.0 - self.p_e

    @property
    def delta_e_meas(self) -> float:
        return self.energy_post - self.energy_pre


@dataclass(frozen=True, eq=False)
class Segment:
    """A stretch of free evolution between instantaneous operations.

    For initialisation segments ``rho_before`` is the state before the fast
    rotation and ``work`` the initialisation cost ``Tr[H0 (rho_end - rho_before)]``.
    """

    kind: str
    t_start: float
    t_end: float
    rho_start: np.ndarray
    rho_end: np.ndarray
    loss: float
    rho_before: Optional[np.ndarray] = None
    work: float = 0.0

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start


@dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    """One realisation: right-continuous samples on the grid plus the event log.

    Measurement times are exact protocol times and need not coincide with
    grid points; a grid point at a measurement time holds the post-measurement
    state.
    """

    times: np.ndarray
    states: np.ndarray
    events: tuple
    segments: tuple
    ledger: EnergyLedger
    index: int = 0

    @property
    def zeno_events(self):
        return [e for e in self.events if e.phase == PHASE_ZENO]

    @property
    def n_reinitializations(self) -> int:
        return sum(1 for s in self.segments if s.kind == "init") - 1

    @property
    def has_failure_collapse(self) -> bool:
        return any(e.outcome == "g" for e in self.zeno_events)

    def fidelity(self, H: Hamiltonian) -> np.ndarray:
        return overlap_batch(H.rho_e, self.states)


# --- elementary steps ------------------------------------------------------

def rotation_angle(rho: StateLike) -> float:
    """Angle ``phi`` of ``V = exp(-i phi sigma_y)`` maximising ``<0|V rho V^+|0>``.

    The y-rotation turns the Bloch vector by ``2 phi`` in the x-z plane, so
    the optimum aligns the in-plane component with ``-z`` (``|0> = [0, 1]^T``).
    """
    m = as_matrix(rho)
    x = 2.0 * m[1, 0].real
    z = (m[0, 0] - m[1, 1]).real
    if math.hypot(x, z) < 1e-15:
        return 0.0
    return 0.5 * (math.pi - math.atan2(x, z))


def arctan_rotation_angle(rho: StateLike) -> float:
    """``arctan(rho^(11)/rho^(21))`` with the ``pi/2`` branch when ``rho^(21) = 0``.

    Equal to :func:`rotation_angle` modulo ``pi`` for real pure states off the
    poles; kept as the reference formula for ``rho_g``.
    """
    m = as_matrix(rho)
    if abs(m[1, 0]) < 1e-15:
        return math.pi / 2
    return math.atan(m[0, 0].real / m[1, 0].real)


def y_rotation(phi: float) -> np.ndarray:
    return math.cos(phi) * np.eye(2) - 1j * math.sin(phi) * SIGMA_Y


def fast_unitary_init(rho0: StateLike, H: Optional[Hamiltonian] = None) -> QubitState:
    """Instantaneous rotation of ``rho0`` onto (or towards) ``|0><0|``."""
    m = as_matrix(rho0)
    if abs(m[1, 0].imag) > 1e-9:
        log.warning("input state has a sigma_y component the rotation cannot remove")
    v = y_rotation(rotation_angle(m))
    return QubitState(v @ m @ v.conj().T)


def initialize(rho0: StateLike, config: ProtocolConfig, t_start: float = 0.0,
               t_star: Optional[float] = None, t_fin: Optional[float] = None):
    """Rotate ``rho0`` and let it evolve freely for ``t_star``.

    Returns:
        ``(rho_i, segment)``; the segment is cut at ``t_fin`` if the horizon
        falls inside the free evolution.
    """
    L = config.liouvillian
    H = config.hamiltonian
    t_star = config.t_star if t_star is None else t_star
    t_fin = config.t_fin if t_fin is None else t_fin
    before = as_matrix(rho0)
    rotated = fast_unitary_init(before, H)
    duration = max(min(t_star, t_fin - t_start), 0.0)
    rho_i = propagate(rotated, L, duration)
    seg = Segment(
        kind="init", t_start=t_start, t_end=t_start + duration,
        rho_start=rotated.matrix, rho_end=rho_i.matrix,
        loss=segment_loss(rotated, duration, L, config.h),
        rho_before=np.array(before), work=energy(rho_i, H) - energy(before, H),
    )
    return rho_i, seg


def projective_measurement(rho: StateLike, H: Hamiltonian, rng: np.random.Generator,
                           beta: float = 1.0, time: float = 0.0,
                           phase: str = PHASE_FIRST):
    """Energy measurement with stochastic collapse onto ``rho_e`` or ``rho_g``."""
    p_e = min(max(excited_population(rho, H), 0.0), 1.0)
    u = rng.random()
    outcome = "e" if u < p_e else "g"
    post = H.rho_e if outcome == "e" else H.rho_g
    event = MeasurementEvent(
        time=time, outcome=outcome, p_e=p_e,
        energy_pre=energy(rho, H),
        energy_post=H.E_e if outcome == "e" else H.E_g,
        landauer=landauer_cost(p_e, beta), phase=phase,
    )
    return event, post


def zeno_step(rho_current: StateLike, config: ProtocolConfig, rng: np.random.Generator,
              time: float = 0.0):
    """Free evolution for ``tau`` followed by a Zeno measurement at ``time + tau``."""
    rho_pre = propagate(rho_current, config.liouvillian, config.tau)
    return projective_measurement(rho_pre, config.hamiltonian, rng, config.beta,
                                  time + config.tau, PHASE_ZENO)


# --- single realisation ---------------------------------------------------

class _Runner:
    """Per-config memo of deterministic pieces shared by many realisations."""

    def __init__(self, config: ProtocolConfig):
        self.config = config
        self.L = config.liouvillian
        self.H = config.hamiltonian
        self.grid = config.time_grid()
        self._prop: dict = {}
        self._loss: dict = {}
        self._init: dict = {}

    def _key(self, m, duration):
        return (np.asarray(m).tobytes(), round(duration, 15))

    def propagated(self, m, duration) -> QubitState:
        k = self._key(m, duration)
        out = self._prop.get(k)
        if out is None:
            out = self._prop[k] = propagate(m, self.L, duration)
        return out

    def loss(self, m, duration) -> float:
        k = self._key(m, duration)
        out = self._loss.get(k)
        if out is None:
            out = self._loss[k] = segment_loss(m, duration, self.L, self.config.h)
        return out

    def initialize(self, rho, t_start):
        cfg = self.config
        duration = max(min(cfg.t_star, cfg.t_fin - t_start), 0.0)
        k = self._key(rho.matrix, duration)
        hit = self._init.get(k)
        if hit is None:
            rotated = fast_unitary_init(rho, self.H)
            rho_i = self.propagated(rotated.matrix, duration)
            hit = self._init[k] = (
                rotated, rho_i, self.loss(rotated.matrix, duration),
                energy(rho_i, self.H) - energy(rho, self.H))
        rotated, rho_i, loss, work = hit
        seg = Segment("init", t_start, t_start + duration, rotated.matrix, rho_i.matrix,
                      loss, rho_before=rho.matrix, work=work)
        return rho_i, seg

    def run(self, index: int) -> TrajectoryRecord:
        cfg, H = self.config, self.H
        rng = rng_stream(cfg.master_seed, index)
        t_fin = cfg.t_fin
        t = 0.0
        rho = cfg.initial_state
        phase = PHASE_FIRST
        segments: list[Segment] = []
        events: list[MeasurementEvent] = []
        while t < t_fin - _TIME_TOL:
            rho_i, seg = self.initialize(rho, t)
            segments.append(seg)
            t = seg.t_end
            if t >= t_fin - _TIME_TOL:
                break
            ev, rho = projective_measurement(rho_i, H, rng, cfg.beta, t, phase)
            events.append(ev)
            if ev.outcome == "g":
                phase = PHASE_REINIT
                continue
            # Zeno loop from rho_e
            while t < t_fin - _TIME_TOL:
                duration = min(cfg.tau, t_fin - t)
                rho_pre = self.propagated(H.rho_e.matrix, duration)
                segments.append(Segment("zeno", t, t + duration, H.rho_e.matrix,
                                        rho_pre.matrix, self.loss(H.rho_e.matrix, duration)))
                t += duration
                if t >= t_fin - _TIME_TOL:
                    break
                ev, rho = projective_measurement(rho_pre, H, rng, cfg.beta, t, PHASE_ZENO)
                events.append(ev)
                if ev.outcome == "g":
                    phase = PHASE_REINIT
                    break
        states = self.sample(segments)
        ledger = EnergyLedger.from_entries(_ledger_entries(segments, events), self.grid,
                                           H.capacity)
        return TrajectoryRecord(self.grid, states, tuple(events), tuple(segments), ledger, index)

    def sample(self, segments) -> np.ndarray:
        grid, h = self.grid, self.config.h
        states = np.empty((len(grid), 2, 2), dtype=complex)
        for i, seg in enumerate(segments):
            j0 = int(np.searchsorted(grid, seg.t_start - _TIME_TOL, side="left"))
            if i == len(segments) - 1:
                j1 = len(grid)
            else:
                j1 = int(np.searchsorted(grid, seg.t_end - _TIME_TOL, side="left"))
            if j1 <= j0:
                continue
            offset = max(grid[j0] - seg.t_start, 0.0)
            states[j0:j1] = self.L.sample(seg.rho_start, offset, h, j1 - j0)
        return 0.5 * (states + np.conj(np.swapaxes(states, -1, -2)))


def _ledger_entries(segments, events) -> list[LedgerEntry]:
    entries = []
    for seg in segments:
        if seg.kind == "init":
            entries.append(LedgerEntry(seg.t_end, "evol", seg.work))
            entries.append(LedgerEntry(seg.t_end, "evol-loss", seg.loss))
        else:
            entries.append(LedgerEntry(seg.t_end, "zeno-loss", seg.loss))
    for ev in events:
        entries.append(LedgerEntry(ev.time, "meas", ev.delta_e_meas))
        entries.append(LedgerEntry(ev.time, "landauer", ev.landauer))
    entries.sort(key=lambda e: e.time)
    return entries


def run_single(config: ProtocolConfig, realization_index: int = 0) -> TrajectoryRecord:
    """Execute one realisation; deterministic in ``(master_seed, realization_index)``."""
    return _Runner(config).run(realization_index)


def uncontrolled_run(config: ProtocolConfig, rho0: Optional[StateLike] = None) -> TrajectoryRecord:
    """Free open evolution from ``|0><0|`` (or ``rho0``) without any measurement.

    The ledger's loss curve is the cumulative trapezoidal leakage on the grid,
    which serves as the uncontrolled baseline of the excess cost.
    """
    from scipy.integrate import cumulative_trapezoid

    from .liouville import energy_current_batch

    L, H = config.liouvillian, config.hamiltonian
    start = GROUND_KET_STATE if rho0 is None else QubitState(rho0)
    grid = config.time_grid()
    states = L.sample(start, 0.0, config.h, len(grid))
    states = 0.5 * (states + np.conj(np.swapaxes(states, -1, -2)))
    current = energy_current_batch(states, H, L.generator)
    loss = cumulative_trapezoid(current, grid, initial=0.0)
    seg = Segment("free", 0.0, config.t_fin, start.matrix, states[-1], float(loss[-1]))
    entries = (LedgerEntry(config.t_fin, "evol-loss", float(loss[-1])),)
    ledger = EnergyLedger(grid, np.zeros(len(grid)), loss, H.capacity, entries)
    return TrajectoryRecord(grid, states, (), (seg,), ledger)


# --- ensembles ------------------------------------------------------------

_STAT_FIELDS = (
    "work", "loss", "reinitializations", "zeno_measurements", "zeno_failures",
    "init_measurements", "init_successes", "delta_e_meas", "landauer", "evol_work",
    "evol_loss", "zeno_loss",
)


def _summarize(rec: TrajectoryRecord) -> dict:
    zeno = rec.zeno_events
    init_ev = [e for e in rec.events if e.phase != PHASE_ZENO]
    led = rec.ledger
    return {
        "work": led.total_work,
        "loss": led.total_loss,
        "reinitializations": rec.n_reinitializations,
        "zeno_measurements": len(zeno),
        "zeno_failures": sum(1 for e in zeno if e.outcome == "g"),
        "init_measurements": len(init_ev),
        "init_successes": sum(1 for e in init_ev if e.outcome == "e"),
        "delta_e_meas": led.entry_sum(("meas",)),
        "landauer": led.entry_sum(("landauer",)),
        "evol_work": led.entry_sum(("evol",)),
        "evol_loss": led.entry_sum(("evol-loss",)),
        "zeno_loss": led.entry_sum(("zeno-loss",)),
    }


def _run_chunk(config: ProtocolConfig, indices) -> list:
    runner = _Runner(config)
    out = []
    for i in indices:
        rec = runner.run(i)
        out.append((rec.states, rec.ledger.work, rec.ledger.loss, _summarize(rec)))
    return out


@dataclass(frozen=True, eq=False)
class EnsembleResult:
    """Pointwise averages over realisations and per-run summary statistics.

    ``fidelity`` is the fidelity of the averaged state with ``rho_e``;
    ``mean_fidelity`` averages the per-run fidelities. They coincide because
    ``rho_e`` is pure, and both are kept for reporting.
    """

    times: np.ndarray
    mean_states: np.ndarray
    fidelity: np.ndarray
    mean_fidelity: np.ndarray
    ledger: EnergyLedger
    stats: dict
    realizations: int

    def _mean(self, key) -> float:
        return float(np.mean(self.stats[key]))

    def stderr(self, key) -> float:
        a = np.asarray(self.stats[key], dtype=float)
        return float(np.std(a, ddof=1) / np.sqrt(len(a))) if len(a) > 1 else 0.0

    @property
    def n_bar(self) -> float:
        """Mean number of re-initialisations per run."""
        return self._mean("reinitializations")

    @property
    def m_bar(self) -> float:
        """Mean number of Zeno measurements per run."""
        return self._mean("zeno_measurements")

    @property
    def zeno_failure_rate(self) -> float:
        total = np.sum(self.stats["zeno_measurements"])
        return float(np.sum(self.stats["zeno_failures"]) / total) if total else 0.0

    @property
    def zeno_failure_stderr(self) -> float:
        total = np.sum(self.stats["zeno_measurements"])
        p = self.zeno_failure_rate
        return float(math.sqrt(p * (1 - p) / total)) if total else 0.0

    @property
    def init_success_rate(self) -> float:
        """Empirical ``P_e`` of the measurements closing an initialisation."""
        total = np.sum(self.stats["init_measurements"])
        return float(np.sum(self.stats["init_successes"]) / total) if total else 0.0


def run_ensemble(config: ProtocolConfig, workers: int = 1, chunk_size: int = 25,
                 baseline: bool = True) -> EnsembleResult:
    """Run ``config.realizations`` independent realisations and average them.

    Results are reduced in realisation-index order, so the output is
    bit-identical for any ``workers``.
    """
    n = config.realizations
    chunks = [range(i, min(i + chunk_size, n)) for i in range(0, n, chunk_size)]
    grid = config.time_grid()
    H = config.hamiltonian
    rho_e = H.rho_e.matrix
    sum_states = np.zeros((len(grid), 2, 2), dtype=complex)
    sum_fid = np.zeros(len(grid))
    sum_work = np.zeros(len(grid))
    sum_loss = np.zeros(len(grid))
    stats = {k: [] for k in _STAT_FIELDS}

    def consume(results):
        nonlocal sum_states, sum_fid, sum_work, sum_loss
        for states, work, loss, summary in results:
            sum_states += states
            sum_fid += overlap_batch(rho_e, states)
            sum_work += work
            sum_loss += loss
            for k in _STAT_FIELDS:
                stats[k].append(summary[k])

    if workers <= 1:
        for c in chunks:
            consume(_run_chunk(config, c))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for res in pool.map(_run_chunk, [config] * len(chunks), chunks):
                consume(res)

    mean_states = sum_states / n
    fid = np.clip(overlap_batch(rho_e, mean_states), 0.0, 1.0)
    base = uncontrolled_run(config).ledger.loss if baseline else None
    ledger = EnergyLedger(grid, sum_work / n, sum_loss / n, H.capacity, baseline_loss=base)
    return EnsembleResult(
        times=grid, mean_states=mean_states, fidelity=fid,
        mean_fidelity=np.clip(sum_fid / n, 0.0, 1.0), ledger=ledger,
        stats={k: np.asarray(v) for k, v in stats.items()}, realizations=n,
    )
