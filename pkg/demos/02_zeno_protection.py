# %% [markdown]
# # Charging by measurement, holding by the Zeno effect
#
# Each realisation rotates the ground state onto `|0><0|` and lets it evolve
# for `t* = 0.33`. It then measures energy. On outcome `e` the battery is
# re-measured every `tau = 0.0662`. On any `g` outcome it starts over.

# %%
import numpy as np

from oqb.protocol import ProtocolConfig, run_ensemble, run_single
from oqb.qstate import excited_population
from oqb.thermo import zeno_state

cfg = ProtocolConfig(realizations=300)
H, L = cfg.hamiltonian, cfg.liouvillian

# %% [markdown]
# The numbers that decide how well this works are the success probability
# of the charging measurement and the failure probability per Zeno shot.

# %%
rec = run_single(cfg, 0)
p_i = rec.events[0].p_e
q = 1 - excited_population(zeno_state(L, cfg.tau), H)
print(f"P_e after charging  = {p_i:.4f}")
print(f"P_g per Zeno shot   = {q:.4f}")

# %%
for e in rec.events[:6]:
    print(f"t={e.time:7.4f}  {e.phase:18s} outcome={e.outcome}  P_e={e.p_e:.4f}")

# %% [markdown]
# Averaged over realisations, the fidelity with `rho_e` starts at 0.342. It
# settles where the time spent charging balances the time spent protected.

# %%
ens = run_ensemble(cfg, workers=2, baseline=False)
for t in (0.0, 0.5, 1.0, 2.0, 5.0, 10.0):
    k = int(round(t / cfg.h))
    print(f"t={t:5.1f}  F={ens.fidelity[k]:.4f}")
print(f"Zeno failure rate {ens.zeno_failure_rate:.4f} +- {ens.zeno_failure_stderr:.4f}")

# %% [markdown]
# A renewal estimate of the plateau: the Zeno phase lasts `tau/q` on average
# and the charging phase `t*/p`.

# %%
zeno_time = cfg.tau / q
charge_time = cfg.t_star / p_i
print(f"fraction of time protected ~ {zeno_time / (zeno_time + charge_time):.3f}")
