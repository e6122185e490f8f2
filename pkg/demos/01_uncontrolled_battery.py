# %% [markdown]
# # A charged qubit left alone
#
# The battery Hamiltonian is `3 sigma_x + sigma_z`. Its environment dephases
# the computational basis at rate `gamma = 2/3`, which is not the energy
# basis, so stored energy leaks away. This script starts from `|0><0|` and
# watches the state drift toward the maximally mixed state.

# %%
import numpy as np

from oqb.liouville import DephasingGenerator, Liouvillian, steady_state
from oqb.qstate import GROUND_KET_STATE, Hamiltonian, excited_population, trace_distance

H = Hamiltonian.qubit()
L = Liouvillian(H, DephasingGenerator(2 / 3))
print("rho_e =\n", np.round(H.rho_e.matrix.real, 3))
print("capacity E_max =", H.capacity)

# %% [markdown]
# The fixed point is `I/2`. Because the populations are equal, no finite
# temperature reproduces it.

# %%
ss = steady_state(L)
print("steady state unique:", ss.unique)
print(np.round(ss.state.matrix.real, 12))

# %% [markdown]
# Sample the free evolution on a 1 ms grid. The excited population never
# passes one half, so the trace distance to `rho_e` stays at least one half.

# %%
t = np.arange(10001) * 1e-3
states = L.sample(GROUND_KET_STATE, 0.0, 1e-3, len(t))
pe = np.array([excited_population(s, H) for s in states])
td = np.array([trace_distance(s, H.rho_e) for s in states])
print(f"max P_e = {pe.max():.5f} at t = {t[pe.argmax()]:.3f}")
print(f"min T   = {td.min():.5f}")
for k in (0, 330, 1000, 5000, 10000):
    print(f"t={t[k]:6.2f}  rho11={states[k, 0, 0].real:.4f}  |rho12|={abs(states[k, 0, 1]):.4f}")
