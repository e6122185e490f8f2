"""Command-line front end: ``oqb <command> [options]``.

Commands and their outputs (all CSVs have a header row, 17 significant
digits and Unix newlines; the matrix entry ``rho11`` is the population of
``|1> = [1, 0]^T``, so ``|0><0|`` has ``rho11 = 0`` and ``rho22 = 1``):

  fig1          fig1_avg.csv        t,rho11,re_rho12,im_rho12 (ensemble average)
                fig1_single_0.csv   same columns, realisation 0
                fig1_single_1.csv   same columns, first realisation with a Zeno failure
                fig1_fidelity.csv   t,F,F_mean (fidelity of the mean state / mean fidelity)
  fig2          fig2_sigma.csv      tau,sigma_T<T>...,integral_Hdot
                fig2_inset.csv      tau,mPg_T<T>...,P_g
  uncontrolled  s1_elements.csv     t,rho11,rho22,re_rho12,im_rho12
                s2_metrics.csv      t,trace_distance,P_e
  ledger        ledger.csv          t,W_stab,Delta_L,varsigma,xi  (+ summary on stdout)
  sweep-tstar   tstar_sweep.csv     t_star,P_e,coherence_mismatch,population_mismatch,
                                    delta_E_evol,delta_L_evol

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, IntegratorError, StateValidationError
from .protocol import (
    EnsembleResult,
    ProtocolConfig,
    initialize,
    run_ensemble,
    run_single,
    uncontrolled_run,
)
from .qstate import Hamiltonian, excited_population, overlap_batch, trace_distance
from .report import csv_text, svg_from_csv
from .thermo import (
    avg_power_estimate,
    break_even_time,
    first_order_excess_cost,
    landauer_cost,
    relative_cost_curves,
    segment_loss,
    sigma_zeno,
    stabilization_rate,
    total_loss_estimate,
    total_work_estimate,
    unstored_energy_fraction,
    zeno_entropy_integral,
    zeno_state,
)

log = logging.getLogger("oqb")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

CONFIG_DEFAULTS = {
    "omega": 1.0,
    "Omega": 3.0,
    "gamma": 2.0 / 3.0,
    "t_star": 0.33,
    "tau": 0.0662,
    "t_fin": 10.0,
    "beta": 1.0,
    "h": 1e-3,
    "realizations": 1000,
    "seed": 42,
    "out_dir": ".",
}
_INT_KEYS = {"realizations", "seed"}

DEFAULT_T_ZENO = (0.4, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0)
DEFAULT_TAU_GRID = np.linspace(0.02, 0.3, 57)
DEFAULT_TSTAR_GRID = np.linspace(0.0, 1.0, 101)


# --- configuration -------------------------------------------------------

def parse_config_text(text: str) -> dict:
    """Parse ``key=value`` lines; ``#`` starts a comment; unknown keys are rejected."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_DEFAULTS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _convert(key, val)
    return values


def _convert(key, val):
    if key == "out_dir":
        return val
    try:
        return int(val) if key in _INT_KEYS else float(val)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {val!r}") from exc


def load_settings(config_file: Optional[str] = None, overrides: Optional[dict] = None) -> dict:
    settings = dict(CONFIG_DEFAULTS)
    if config_file:
        try:
            text = Path(config_file).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        settings.update(parse_config_text(text))
    for k, v in (overrides or {}).items():
        if v is not None:
            settings[k] = v
    return settings


def settings_to_config(settings: dict) -> ProtocolConfig:
    try:
        H = Hamiltonian.qubit(Omega=settings["Omega"], omega=settings["omega"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return ProtocolConfig(
        hamiltonian=H, gamma=settings["gamma"], t_star=settings["t_star"],
        tau=settings["tau"], t_fin=settings["t_fin"], beta=settings["beta"],
        h=settings["h"], realizations=int(settings["realizations"]),
        master_seed=int(settings["seed"]),
    )


# --- computations behind the commands ---------------------------------

def state_columns(times, states, with_rho22: bool = False) -> dict:
    cols = {"t": times, "rho11": states[:, 0, 0].real}
    if with_rho22:
        cols["rho22"] = states[:, 1, 1].real
    cols["re_rho12"] = states[:, 0, 1].real
    cols["im_rho12"] = states[:, 0, 1].imag
    return cols


def failure_realization(config: ProtocolConfig, exclude: int = 0) -> int:
    """Index of the first realisation (other than ``exclude``) with a Zeno failure."""
    for i in range(config.realizations):
        if i != exclude and run_single(config, i).has_failure_collapse:
            return i
    return 1 if exclude == 0 else 0


def fig2_tables(config: ProtocolConfig, tau_grid=DEFAULT_TAU_GRID,
                t_zeno_list=DEFAULT_T_ZENO, integer_count: bool = False):
    """Zeno entropic cost and unstored-energy tables over a grid of periods."""
    tau_grid = np.asarray(tau_grid, dtype=float)
    if np.any(tau_grid <= 0) or np.any(np.diff(tau_grid) <= 0):
        raise ConfigError("tau grid must be positive and ascending")
    L = config.liouvillian
    sigma = {"tau": tau_grid}
    inset = {"tau": tau_grid}
    for T in t_zeno_list:
        s_col, m_col = [], []
        for tau in tau_grid:
            if tau > T:
                log.warning("skipping tau=%g > T_zeno=%g", tau, T)
                s_col.append(math.nan)
                m_col.append(math.nan)
                continue
            s_col.append(sigma_zeno(tau, T, L, integer_count=integer_count))
            m_col.append(unstored_energy_fraction(tau, T, L, integer_count=integer_count))
        sigma[f"sigma_T{T:g}"] = s_col
        inset[f"mPg_T{T:g}"] = m_col
    sigma["integral_Hdot"] = [zeno_entropy_integral(tau, L) for tau in tau_grid]
    H = config.hamiltonian
    inset["P_g"] = [1.0 - excited_population(zeno_state(L, tau), H) for tau in tau_grid]
    return sigma, inset


def tstar_sweep(config: ProtocolConfig, t_grid=DEFAULT_TSTAR_GRID) -> dict:
    """Initialisation quality and cost as a function of the free-evolution time."""
    H = config.hamiltonian
    rho_e = H.rho_e.matrix
    rows = {k: [] for k in ("t_star", "P_e", "coherence_mismatch", "population_mismatch",
                            "delta_E_evol", "delta_L_evol")}
    rho0 = config.initial_state
    for t in np.asarray(t_grid, dtype=float):
        rho_i, seg = initialize(rho0, config, t_star=float(t), t_fin=math.inf)
        m = rho_i.matrix
        rows["t_star"].append(t)
        rows["P_e"].append(excited_population(rho_i, H))
        rows["coherence_mismatch"].append(abs(m[0, 1] - rho_e[0, 1]) ** 2)
        rows["population_mismatch"].append(abs(m[0, 0] - rho_e[0, 0]) ** 2)
        rows["delta_E_evol"].append(seg.work)
        rows["delta_L_evol"].append(seg.loss)
    return rows


@dataclass(frozen=True)
class ClosedFormCheck:
    """Closed-form averages next to the ensemble ledger they approximate."""

    delta_e_evol: float
    delta_l_evol: float
    p_g_init: float
    p_g_zeno: float
    n_bar: float
    m_bar: float
    zeno_period_loss: float
    work_estimate: float
    work_ledger: float
    loss_estimate: float
    loss_ledger: float
    work_accounted: float
    loss_accounted: float
    xi_first_order: float
    power_estimate: float

    @staticmethod
    def _rel(a, b):
        return abs(a - b) / abs(b) if b else math.inf

    @property
    def work_deviation(self) -> float:
        return self._rel(self.work_estimate, self.work_ledger)

    @property
    def loss_deviation(self) -> float:
        return self._rel(self.loss_estimate, self.loss_ledger)

    @property
    def work_accounted_deviation(self) -> float:
        return self._rel(self.work_accounted, self.work_ledger)

    @property
    def loss_accounted_deviation(self) -> float:
        return self._rel(self.loss_accounted, self.loss_ledger)


def closed_form_check(config: ProtocolConfig, ens: EnsembleResult) -> ClosedFormCheck:
    """Compare the averaged closed forms with the ensemble ledger.

    ``work_estimate``/``loss_estimate`` use the geometric attempt factor with
    the empirical ``P_g`` at ``rho_i``, ``N = n_bar`` re-initialisations and
    ``m_bar`` Zeno measurements. ``work_accounted``/``loss_accounted`` count
    every initialisation attempt and every measurement explicitly, using the
    ensemble's mean counts.
    """
    H, L = config.hamiltonian, config.liouvillian
    rho0 = config.initial_state
    rho_i, seg = initialize(rho0, config, t_fin=math.inf)
    rho_alpha = zeno_state(L, config.tau)
    p_g_init = 1.0 - ens.init_success_rate
    p_g_zeno = 1.0 - excited_population(rho_alpha, H)
    zeno_loss = segment_loss(H.rho_e, config.tau, L, config.h)
    n_bar, m_bar = ens.n_bar, ens.m_bar
    w_est = total_work_estimate(seg.work, p_g_init, n_bar, m_bar, config.beta, rho_alpha, H)
    l_est = total_loss_estimate(seg.loss, p_g_init, n_bar, m_bar * zeno_loss)
    attempts = float(np.mean(ens.stats["reinitializations"])) + 1.0
    init_meas = float(np.mean(ens.stats["init_measurements"]))
    p_i = excited_population(rho_i, H)
    w_acc = (attempts * seg.work + init_meas * landauer_cost(p_i, config.beta)
             + m_bar * landauer_cost(1.0 - p_g_zeno, config.beta))
    l_acc = attempts * seg.loss + m_bar * zeno_loss
    return ClosedFormCheck(
        delta_e_evol=seg.work, delta_l_evol=seg.loss, p_g_init=p_g_init, p_g_zeno=p_g_zeno,
        n_bar=n_bar, m_bar=m_bar, zeno_period_loss=zeno_loss,
        work_estimate=w_est, work_ledger=ens.ledger.total_work,
        loss_estimate=l_est, loss_ledger=ens.ledger.total_loss,
        work_accounted=w_acc, loss_accounted=l_acc,
        xi_first_order=first_order_excess_cost(p_g_init, seg.work, seg.loss, H.capacity),
        power_estimate=avg_power_estimate(rho0, rho_i, H, 1.0, config.beta, rho_alpha,
                                          config.tau),
    )


# --- command implementations ------------------------------------------

class _Output:
    def __init__(self, out_dir, svg: bool):
        self.dir = Path(out_dir)
        self.svg = svg
        try:
            self.dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise OSError(f"cannot create output directory {self.dir}: {exc}") from exc
        self.written: list[Path] = []

    def csv(self, name: str, columns: dict, title: str = ""):
        text = csv_text(columns)
        path = self.dir / name
        path.write_text(text, encoding="utf-8", newline="")
        self.written.append(path)
        if self.svg:
            svg_path = path.with_suffix(".svg")
            svg_path.write_text(svg_from_csv(text, title or name), encoding="utf-8")
            self.written.append(svg_path)
        return path


def cmd_fig1(config: ProtocolConfig, out: _Output, workers: int = 1):
    ens = run_ensemble(config, workers=workers, baseline=False)
    out.csv("fig1_avg.csv", state_columns(ens.times, ens.mean_states), "ensemble average")
    first = run_single(config, 0)
    out.csv("fig1_single_0.csv", state_columns(first.times, first.states), "realisation 0")
    k = failure_realization(config, exclude=0)
    second = run_single(config, k)
    out.csv("fig1_single_1.csv", state_columns(second.times, second.states),
            f"realisation {k}")
    out.csv("fig1_fidelity.csv", {"t": ens.times, "F": ens.fidelity, "F_mean": ens.mean_fidelity},
            "fidelity")
    return ens


def cmd_fig2(config: ProtocolConfig, out: _Output, tau_grid=DEFAULT_TAU_GRID,
             t_zeno_list=DEFAULT_T_ZENO, integer_count: bool = False):
    sigma, inset = fig2_tables(config, tau_grid, t_zeno_list, integer_count)
    out.csv("fig2_sigma.csv", sigma, "sigma_Zeno vs tau")
    out.csv("fig2_inset.csv", inset, "m P_g vs tau")
    return sigma, inset


def cmd_uncontrolled(config: ProtocolConfig, out: _Output):
    rec = uncontrolled_run(config)
    H = config.hamiltonian
    out.csv("s1_elements.csv", state_columns(rec.times, rec.states, with_rho22=True),
            "uncontrolled elements")
    td = [trace_distance(s, H.rho_e) for s in rec.states]
    pe = overlap_batch(H.rho_e, rec.states)
    out.csv("s2_metrics.csv", {"t": rec.times, "trace_distance": td, "P_e": pe},
            "uncontrolled metrics")
    return rec


def cmd_ledger(config: ProtocolConfig, out: _Output, workers: int = 1, stream=None):
    stream = sys.stdout if stream is None else stream
    ens = run_ensemble(config, workers=workers)
    led = ens.ledger
    varsigma, xi = relative_cost_curves(led)
    out.csv("ledger.csv", {"t": led.times, "W_stab": led.work, "Delta_L": led.baseline_loss,
                           "varsigma": varsigma, "xi": xi}, "energy ledger")
    check = closed_form_check(config, ens)
    try:
        rate = stabilization_rate(led, config.tau)
        rate_txt = f"{rate.rate:.6g} (fit residual {rate.residual:.6g})"
    except ValueError as exc:
        rate_txt = f"n/a ({exc})"
    t_be = break_even_time(led)
    H = config.hamiltonian
    lines = [
        f"E_max                          {H.capacity:.6g}",
        f"Delta_E_evol                   {check.delta_e_evol:.6g}",
        f"Delta_L_evol                   {check.delta_l_evol:.6g}",
        f"P_g(rho_i) empirical           {check.p_g_init:.6g}",
        f"P_g(rho_alpha)                 {check.p_g_zeno:.6g}",
        f"Zeno failure rate (empirical)  {ens.zeno_failure_rate:.6g}",
        f"N_bar (re-initialisations)     {check.n_bar:.6g}",
        f"m_bar (Zeno measurements)      {check.m_bar:.6g}",
        f"<W_stab(t_fin)> ledger         {check.work_ledger:.6g}",
        f"<W_stab(t_fin)> closed form    {check.work_estimate:.6g}  "
        f"(rel. dev. {check.work_deviation:.6g})",
        f"<W_stab(t_fin)> all attempts   {check.work_accounted:.6g}  "
        f"(rel. dev. {check.work_accounted_deviation:.6g})",
        f"<Delta_L(t_fin)> ledger        {check.loss_ledger:.6g}",
        f"<Delta_L(t_fin)> closed form   {check.loss_estimate:.6g}  "
        f"(rel. dev. {check.loss_deviation:.6g})",
        f"<Delta_L(t_fin)> all attempts  {check.loss_accounted:.6g}  "
        f"(rel. dev. {check.loss_accounted_deviation:.6g})",
        f"uncontrolled Delta_L(t_fin)    {led.baseline_loss[-1]:.6g}",
        f"varsigma(t_fin)                {varsigma[-1]:.6g}",
        f"xi(t_fin)                      {xi[-1]:.6g}",
        f"xi first order                 {check.xi_first_order:.6g}",
        f"R_stab                         {rate_txt}",
        f"break-even time                {t_be:.6g}",
        f"power estimate (per period)    {check.power_estimate:.6g}",
    ]
    print("\n".join(lines), file=stream)
    return ens, check


def cmd_sweep_tstar(config: ProtocolConfig, out: _Output, t_grid=DEFAULT_TSTAR_GRID):
    rows = tstar_sweep(config, t_grid)
    out.csv("tstar_sweep.csv", rows, "t_star sweep")
    return rows


# --- argument parsing -----------------------------------------------------

def _grid(text: str) -> np.ndarray:
    try:
        start, stop, num = text.split(":")
        return np.linspace(float(start), float(stop), int(num))
    except ValueError as exc:
        raise argparse.ArgumentTypeError("expected start:stop:num") from exc


def _float_list(text: str) -> tuple:
    try:
        return tuple(float(x) for x in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError("expected comma-separated numbers") from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value configuration file")
    common.add_argument("--seed", type=int)
    common.add_argument("--realizations", type=int)
    common.add_argument("--tau", type=float)
    common.add_argument("--t-star", dest="t_star", type=float)
    common.add_argument("--gamma", type=float)
    common.add_argument("--beta", type=float)
    common.add_argument("--t-fin", dest="t_fin", type=float)
    common.add_argument("--out", dest="out_dir", help="output directory")
    common.add_argument("--svg", action="store_true", help="also write SVG line charts")
    common.add_argument("--workers", type=int, default=1,
                        help="worker processes for ensembles (output is identical)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(
        prog="oqb", description=__doc__.split("\n\n")[0],
        epilog=__doc__.split("\n\n", 1)[1], formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("fig1", parents=[common], help="ensemble and single-run dynamics, fidelity")
    p2 = sub.add_parser("fig2", parents=[common], help="entropic cost of the Zeno stage")
    p2.add_argument("--tau-grid", type=_grid, default=DEFAULT_TAU_GRID, help="start:stop:num")
    p2.add_argument("--t-zeno", type=_float_list, default=DEFAULT_T_ZENO,
                    help="comma-separated Zeno durations")
    p2.add_argument("--integer-count", action="store_true",
                    help="use floor(T_zeno/tau) measurements instead of T_zeno/tau")
    sub.add_parser("uncontrolled", parents=[common], help="free open evolution from |0><0|")
    sub.add_parser("ledger", parents=[common], help="work/loss ledger and closed-form checks")
    ps = sub.add_parser("sweep-tstar", parents=[common], help="initialisation time sweep")
    ps.add_argument("--t-grid", type=_grid, default=DEFAULT_TSTAR_GRID, help="start:stop:num")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {k: getattr(args, k) for k in
                 ("seed", "realizations", "tau", "t_star", "gamma", "beta", "t_fin", "out_dir")}
    try:
        settings = load_settings(args.config, overrides)
        config = settings_to_config(settings)
        out = _Output(settings["out_dir"], args.svg)
        if args.command == "fig1":
            cmd_fig1(config, out, workers=args.workers)
        elif args.command == "fig2":
            cmd_fig2(config, out, args.tau_grid, args.t_zeno, args.integer_count)
        elif args.command == "uncontrolled":
            cmd_uncontrolled(config, out)
        elif args.command == "ledger":
            cmd_ledger(config, out, workers=args.workers)
        elif args.command == "sweep-tstar":
            cmd_sweep_tstar(config, out, args.t_grid)
    except ConfigError as exc:
        print(f"oqb: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IntegratorError, StateValidationError, FloatingPointError) as exc:
        print(f"oqb: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"oqb: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
