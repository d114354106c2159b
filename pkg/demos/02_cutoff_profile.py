# %% [markdown]
# # The C^2 cutoff profile
#
# The smoothed kernel multiplies |x|^-(s+1) x by a radial cutoff phi that is a
# power law below 1, vanishes beyond 1 + rho + 2 rho^2 and is glued together
# by polynomial connectors.  The junction table shows the gluing is C^2.

# %%
import numpy as np

from rieszlab.smoothing import build_profile, eval_phi, eval_phi_prime, junction_table, kernel_radial_sup

# %%
p = build_profile(0.5, 0.25)
print("support ends at", p.support_end)
for row in junction_table(p):
    print({k: (f"{v:.2e}" if isinstance(v, float) else v) for k, v in row.items()})

# %%
r = np.linspace(0, p.support_end + 0.1, 12)
print(np.column_stack([r, eval_phi(p, r), eval_phi_prime(p, r)]))

# %% [markdown]
# rho |phi'| stays of order one: the connectors are no steeper than needed.

# %%
for rho in (0.25, 0.05):
    q = build_profile(1.5, rho)
    grid = np.linspace(0, q.support_end, 20_000)
    print(rho, rho * np.abs(eval_phi_prime(q, grid)).max(), kernel_radial_sup(q, 1.0))
