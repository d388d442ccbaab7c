"""Free-fermion reference values: energies, filling and entanglement scaling."""
import numpy as np

from branchmera.free_fermions import (entropy_profile, fit_central_charge, ising_energy_per_site, xx_energy_per_site,
                                      xx_filling)

print("e_XX(0)      ", xx_energy_per_site(0.0), " -4/pi =", -4 / np.pi)
print("e_Ising(g=1) ", ising_energy_per_site())
mu = np.sqrt(2.0)
print(f"mu = sqrt 2: e = {xx_energy_per_site(mu):.12f}, filling = {xx_filling(mu):.4f}")

Ls = [2**k for k in range(4, 11)]
xx = entropy_profile("xx", Ls, mu=0.0)
ising = entropy_profile("ising", Ls)
print("\n   L    S_XX     S_Ising  2 S_Ising(L/2)")
half = entropy_profile("ising", [L // 2 for L in Ls])
for L, a, b, c in zip(Ls, xx.S, ising.S, half.S):
    print(f"{L:5d}  {a:.5f}  {b:.5f}  {2 * c:.5f}")
print(f"\nc_XX = {fit_central_charge(xx):.4f}, c_Ising = {fit_central_charge(ising):.4f}")
print(f"c_XX at mu = sqrt 2: {fit_central_charge(entropy_profile('xx', Ls, mu=mu)):.4f}")
