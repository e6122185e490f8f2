# %% [markdown]
# # What stabilisation costs
#
# The ledger books three kinds of work: the charging kick, the energy change
# of each measurement, and the Landauer cost `H(P)/beta` of erasing each
# outcome. It compares the total with the leakage of the uncontrolled battery.

# %%
import numpy as np

from oqb.cli import closed_form_check
from oqb.protocol import ProtocolConfig, run_ensemble
from oqb.thermo import break_even_time, relative_cost_curves, sigma_zeno, stabilization_rate

cfg = ProtocolConfig(realizations=300)
ens = run_ensemble(cfg, workers=2)
varsigma, xi = relative_cost_curves(ens.ledger)
print(f"W_stab(10) = {ens.ledger.total_work:.3f}   varsigma(10) = {varsigma[-1]:.3f}")
print(f"break-even at t = {break_even_time(ens.ledger):.3f}")
print(f"R_stab = {stabilization_rate(ens.ledger, cfg.tau).rate:.4f}")

# %% [markdown]
# The averaged closed form counts one charge plus a geometric series of
# retries. Counting every attempt and every measurement recovers the ledger.

# %%
chk = closed_form_check(cfg, ens)
print(f"closed form  {chk.work_estimate:8.3f}  (dev {chk.work_deviation:.3f})")
print(f"all attempts {chk.work_accounted:8.3f}  (dev {chk.work_accounted_deviation:.3f})")
print(f"ledger       {chk.work_ledger:8.3f}")

# %% [markdown]
# Measuring more often protects better but costs more entropy per unit time.

# %%
L = cfg.liouvillian
for tau in (0.02, 0.05, 0.1, 0.2, 0.3):
    print(f"tau={tau:4.2f}  sigma_Zeno(T=2) = {sigma_zeno(tau, 2.0, L):.4f}")
