"""Acceptance gate: one PASS/FAIL line per criterion, printed in the terminal summary.

Tolerances and runtime budgets are fixed; nothing here is tuned to the
implementation's output.
"""

import math
import time

import numpy as np
import pytest

from oqb.cli import _Output, closed_form_check, cmd_fig1
from oqb.liouville import entropy_production_rate_D, propagate, steady_state
from oqb.protocol import ProtocolConfig, uncontrolled_run
from oqb.qstate import (
    GROUND_KET_STATE,
    Hamiltonian,
    QubitState,
    excited_population,
    fidelity,
    relative_entropy,
    trace_distance,
)
from oqb.thermo import (
    measurement_energy,
    sigma_zeno,
    unstored_energy_fraction,
    zeno_entropy_integral,
    zeno_entropy_integral_quadrature,
    zeno_state,
)

from conftest import ACCEPTANCE_LINES, ENSEMBLE_SECONDS, random_state
from oracles import euler_trace

T_ZENO = (0.4, 1, 2, 3, 4, 5, 6)
TAUS = np.linspace(0.02, 0.3, 57)


def report(n, title, checks, seconds, budget):
    """Record the line for criterion ``n`` and fail if any sub-check failed."""
    ok_time = seconds < budget
    ok = all(c[1] for c in checks) and ok_time
    details = "; ".join(f"{name}={'ok' if good else 'FAIL'} ({info})" for name, good, info in checks)
    line = (f"criterion {n:>2} {'PASS' if ok else 'FAIL'}  {title}: {details}; "
            f"runtime {seconds:.3g}s < {budget:g}s {'ok' if ok_time else 'FAIL'}")
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def best_of(fn, repeat=5):
    # best-of-n wall time, as timeit does, to keep sub-millisecond budgets meaningful
    out = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t0)
    return min(out)


def test_criterion_01_energy_basis():
    dt = best_of(lambda: Hamiltonian.qubit().rho_e)
    rho_e = Hamiltonian.qubit().rho_e.matrix
    err = np.max(np.abs(rho_e - np.array([[0.658, 0.474], [0.474, 0.342]])))
    report(1, "rho_e of 3 sigma_x + sigma_z", [("entrywise", err <= 1e-3, f"max err {err:.2e}")],
           dt, 1e-3)


def test_criterion_02_initial_fidelity():
    H = Hamiltonian.qubit()
    dt = best_of(lambda: fidelity(H.rho_e, GROUND_KET_STATE))
    f = fidelity(H.rho_e, GROUND_KET_STATE)
    report(2, "F(rho_e, |0><0|)", [
        ("0.342+-1e-3", abs(f - 0.342) <= 1e-3, f"F={f:.6f}"),
        ("in [0.3,0.4]", 0.3 <= f <= 0.4, f"F={f:.6f}"),
    ], dt, 1e-3)


def test_criterion_03_uncontrolled_bounds():
    cfg = ProtocolConfig()
    t0 = time.perf_counter()
    rec = uncontrolled_run(cfg)
    H = cfg.hamiltonian
    td = np.array([trace_distance(s, H.rho_e) for s in rec.states])
    pe = np.array([excited_population(s, H) for s in rec.states])
    dt = time.perf_counter() - t0
    report(3, "uncontrolled run t in [0,10]", [
        ("min T >= 0.5-1e-6", td.min() >= 0.5 - 1e-6, f"min T={td.min():.6f}"),
        ("max P_e <= 0.5+1e-6", pe.max() <= 0.5 + 1e-6, f"max P_e={pe.max():.6f}"),
    ], dt, 1.0)


def test_criterion_04_zeno_reliability(ensemble, default_config):
    L, H = default_config.liouvillian, default_config.hamiltonian
    p_g = 1 - excited_population(zeno_state(L, default_config.tau), H)
    rate, se = ensemble.zeno_failure_rate, ensemble.zeno_failure_stderr
    report(4, "Zeno failure probability at tau=0.0662", [
        ("P_g(rho_alpha) < 0.01", p_g < 0.01, f"P_g={p_g:.5f}"),
        ("empirical < 0.01+3se", rate < 0.01 + 3 * se, f"rate={rate:.5f}, se={se:.5f}"),
    ], ENSEMBLE_SECONDS["default"], 30.0)


def test_criterion_05_fidelity_plateau(ensemble, default_config):
    # the first Zeno period begins right after the first measurement at t_star
    F = ensemble.fidelity[ensemble.times >= default_config.t_star]
    above = np.nonzero(F >= 0.95)[0]
    reached = len(above) > 0
    held = reached and bool(np.all(F[above[0]:] >= 0.95))
    report(5, "ensemble fidelity after the first Zeno period begins", [
        ("reaches 0.95", reached, f"max F={F.max():.4f}"),
        ("holds >= 0.95", held, f"final F={F[-1]:.4f}, mean over t>5: "
         f"{ensemble.fidelity[ensemble.times > 5].mean():.4f}"),
    ], ENSEMBLE_SECONDS["default"], 60.0)


def test_criterion_06_fig2_shapes(default_config):
    L = default_config.liouvillian
    t0 = time.perf_counter()
    sig_ok = []
    for T in T_ZENO:
        s = np.array([sigma_zeno(t, T, L) for t in TAUS])
        sig_ok.append(bool(np.all(np.diff(s) < 0)))
    integral = np.array([zeno_entropy_integral(t, L) for t in TAUS])
    # m = floor(T/tau) for the inset quantity; the continuous count is reported alongside
    mpg = {T: np.array([unstored_energy_fraction(t, T, L, integer_count=True) for t in TAUS])
           for T in T_ZENO}
    mpg_ok = [bool(np.all(np.diff(v) > 0)) for v in mpg.values()]
    cont_ok = [bool(np.all(np.diff([unstored_energy_fraction(t, T, L) for t in TAUS]) > 0))
               for T in T_ZENO]
    dt = time.perf_counter() - t0
    report(6, "sigma_Zeno / integral / m P_g over tau in [0.02,0.3]", [
        ("sigma decreasing", all(sig_ok), f"{sum(sig_ok)}/{len(sig_ok)} columns"),
        ("integral increasing", bool(np.all(np.diff(integral) > 0)),
         f"{integral[0]:.4f}->{integral[-1]:.4f}"),
        ("m P_g increasing", all(mpg_ok),
         f"{sum(mpg_ok)}/{len(mpg_ok)} columns, continuous m {sum(cont_ok)}/{len(cont_ok)}; "
         f"T=2: {mpg[2][0]:.4f}->{mpg[2][-1]:.4f}"),
    ], dt, 60.0)


def test_criterion_07_thermo_identities(default_config):
    H, L = default_config.hamiltonian, default_config.liouvillian
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(10_000):
        s = random_state(rng)
        p = excited_population(s, H)
        m = p * measurement_energy(s, "e", H) + (1 - p) * measurement_energy(s, "g", H)
        worst = max(worst, abs(m))
    ss = steady_state(L)
    sig = min(entropy_production_rate_D(random_state(rng), L, ss) for _ in range(1000))
    states = uncontrolled_run(default_config).states
    rel = np.array([relative_entropy(s, ss.state) for s in states])
    inc = float(np.max(np.diff(rel)))
    dt = time.perf_counter() - t0
    report(7, "thermodynamic identities", [
        ("zero-mean dE_meas", worst <= 1e-10, f"max |mean|={worst:.1e}"),
        ("Sigma_D >= -1e-8", sig >= -1e-8, f"min={sig:.2e}"),
        ("S(rho_t||rho_ss) non-increasing", inc <= 1e-8, f"max step={inc:.1e}"),
    ], dt, 10.0)


def test_criterion_08_oracles(ensemble, default_config):
    L = default_config.liouvillian
    t0 = time.perf_counter()
    exact = L.sample(GROUND_KET_STATE, 0.0, 1e-3, 10001)
    euler = euler_trace(GROUND_KET_STATE.matrix, default_config.gamma, 1e-5, 1e-3, 10.0)
    e_err = max(np.max(np.abs(exact[:, 0, 0] - euler[:, 0, 0])),
                np.max(np.abs(exact[:, 0, 1] - euler[:, 0, 1])))
    q_err = max(abs(zeno_entropy_integral(t, L) - zeno_entropy_integral_quadrature(t, L))
                for t in TAUS)
    chk = closed_form_check(default_config, ensemble)
    dt = time.perf_counter() - t0 + ENSEMBLE_SECONDS["default"]
    report(8, "oracle equivalence", [
        ("expm vs Euler h=1e-5 <= 1e-6", e_err <= 1e-6, f"max err {e_err:.2e}"),
        ("sigma analytic vs quad <= 1e-6", q_err <= 1e-6, f"max err {q_err:.1e}"),
        ("closed-form W within 5%", chk.work_deviation <= 0.05,
         f"{chk.work_estimate:.3f} vs ledger {chk.work_ledger:.3f}, dev {chk.work_deviation:.3f}"),
        ("closed-form dL within 5%", chk.loss_deviation <= 0.05,
         f"{chk.loss_estimate:.3f} vs ledger {chk.loss_ledger:.3f}, dev {chk.loss_deviation:.3f}"),
    ], dt, 120.0)


def test_criterion_09_determinism(tmp_path):
    cfg = ProtocolConfig()
    names = ("fig1_avg.csv", "fig1_single_0.csv", "fig1_single_1.csv", "fig1_fidelity.csv")
    t0 = time.perf_counter()
    cmd_fig1(cfg, _Output(tmp_path / "a", False), workers=1)
    cmd_fig1(cfg, _Output(tmp_path / "b", False), workers=4)
    dt = time.perf_counter() - t0
    same = [(tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes() for n in names]
    report(9, "cmd_fig1 byte identity, 1 vs 4 workers", [
        ("identical CSVs", all(same), f"{sum(same)}/{len(same)} files"),
    ], dt, 120.0)
