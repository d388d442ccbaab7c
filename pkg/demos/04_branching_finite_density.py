"""Branching MERA for the XX chain at mu = sqrt 2, compared with a plain MERA of equal chi.

Runs fermionic and bosonic swaps at one decoupling depth (default s*=1, first
argument overrides). Each branching run takes roughly 15 minutes at chi=4.
"""
import sys

import numpy as np

from branchmera.branching import BranchingConfig, optimize_branching
from branchmera.free_fermions import xx_energy_per_site
from branchmera.mera import MeraConfig, optimize_mera
from branchmera.spin_models import build_xx

s_star = int(sys.argv[1]) if len(sys.argv) > 1 else 1
mu = np.sqrt(2.0)
h = build_xx(mu)
exact = xx_energy_per_site(mu)
print(f"oracle e = {exact:.10f}")

plain = optimize_mera(h, MeraConfig(chi=4, sweeps=800, seed=0)).report.energy_per_site
print(f"plain chi=4          error {plain - exact:.3e}")
for kind in ("fermionic", "bosonic"):
    cfg = BranchingConfig(mu=mu, s_star=s_star, swap_kind=kind, outer_iterations=150, seed=s_star)
    res = optimize_branching(h, cfg, callback=lambda it, e: print(f"  {kind} it {it:3d}  error {e - exact:.3e}")
                             if it % 25 == 0 else None)
    print(f"{kind:9s} s*={s_star}      error {res.report.energy_per_site - exact:.3e}, "
          f"residual coupling {res.residual_coupling:.3f}")
