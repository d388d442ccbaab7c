import numpy as np
import pytest
from hypothesis import given, strategies as st

from branchmera.free_fermions import (EntropyProfile, block_entropy, entropy_from_correlations, entropy_profile,
                                      fit_central_charge, ising_covariance, ising_energy_per_site, xx_energy_per_site,
                                      xx_fermi_momentum, xx_filling)
from branchmera.free_fermions import ising_majorana, xx_majorana
from branchmera.spin_models import brute_force_ground, build_ising, build_xx


def test_xx_and_ising_energies_at_criticality():
    assert abs(xx_energy_per_site(0.0) + 4 / np.pi) < 1e-9
    assert abs(ising_energy_per_site(1.0) + 4 / np.pi) < 1e-9


def test_xx_energy_closed_form():
    # e = mu/2 + (2/pi)(-2 sin kF ... ) integrated by hand: mu/2 - (4 sin kF - mu (pi - kF)) / pi
    for mu in (0.3, np.sqrt(2.0), 3.0):
        kf = xx_fermi_momentum(mu)
        closed = mu / 2 - (4 * np.sin(kf) + mu * (np.pi - kf)) / np.pi
        assert np.isclose(xx_energy_per_site(mu), closed, atol=1e-10)


def test_xx_saturated_band():
    # mu above the band top fills every mode: e = mu/2 - mu
    assert np.isclose(xx_energy_per_site(4.5), -2.25)
    assert np.isclose(xx_filling(4.5), 1.0)
    assert np.isclose(xx_filling(-4.5), 0.0)
    assert np.isclose(xx_energy_per_site(-4.5), -2.25)
    e, _ = brute_force_ground(build_xx(4.5), 6)
    assert np.isclose(e / 6, -2.25)


def test_filling_at_mu_sqrt2():
    # occupied fraction 1 - kF/pi with kF = arccos(sqrt2/4)
    assert np.isclose(xx_filling(np.sqrt(2.0)), 1 - np.arccos(np.sqrt(2.0) / 4) / np.pi)


@pytest.mark.parametrize("name", ["xx", "ising"])
def test_open_chain_ground_energy_vs_brute_force(name):
    # Majorana quadratic form vs exact diagonalisation of the spin chain
    n = 10
    model, hq = (build_xx(0.6), xx_majorana(n, 0.6)) if name == "xx" else (build_ising(1.0), ising_majorana(n))
    e, _ = brute_force_ground(model, n, "open")
    assert abs(e - hq.ground_energy()) < 1e-10


def test_finite_chains_approach_the_limit():
    # periodic critical Ising: e(n)/n - e_inf = -pi c / (6 n^2) * v with v = 2, c = 1/2
    n = 10
    e, _ = brute_force_ground(build_ising(1.0), n)
    gap = e / n - ising_energy_per_site(1.0)
    assert abs(gap + np.pi * 2 * 0.5 / (6 * n * n)) < 1e-4


def test_entropy_vs_brute_force_ising():
    # exact diagonalisation of 14 periodic sites, block of 2: finite-size effect small
    _, psi = brute_force_ground(build_ising(1.0), 14)
    m = psi.reshape(4, -1)
    p = np.linalg.svd(m, compute_uv=False) ** 2
    s_ed = -np.sum(p[p > 1e-14] * np.log2(p[p > 1e-14]))
    assert abs(s_ed - block_entropy("ising", 2)) < 0.02


def test_xx_correlations_vs_finite_chain():
    # single-particle ground state of a long ring, block of 20 sites in the middle
    N, L, mu = 602, 20, 0.6
    h = np.zeros((N, N))
    for r in range(N):
        h[r, (r + 1) % N] = h[(r + 1) % N, r] = 2.0
        h[r, r] = -mu
    w, v = np.linalg.eigh(h)
    occ = v[:, w < 0]
    C = (occ.conj() @ occ.T)[:L, :L]
    assert abs(entropy_from_correlations(C) - block_entropy("xx", L, mu=mu)) < 0.02


def test_central_charges():
    Ls = [16, 32, 64, 128, 256, 512, 1024]
    assert abs(fit_central_charge(entropy_profile("xx", Ls, mu=0.0)) - 1.0) < 0.05
    assert abs(fit_central_charge(entropy_profile("ising", Ls)) - 0.5) < 0.03


def test_ising_covariance_is_pure():
    S = ising_covariance(30)
    # the full chain is pure; a block has eigenvalues within [-1, 1]
    assert np.allclose(S, S.conj().T)
    assert np.all(np.abs(np.linalg.eigvalsh(S)) <= 1 + 1e-10)


@given(st.integers(1, 60), st.floats(-3.5, 3.5))
def test_entropy_bounds(L, mu):
    s = block_entropy("xx", L, mu=mu)
    assert -1e-12 <= s <= L + 1e-12


def test_profile_validation():
    with pytest.raises(ValueError):
        EntropyProfile([1, 2], [0.1])
    with pytest.raises(ValueError):
        fit_central_charge(EntropyProfile([8, 9, 10, 11], [1, 1, 1, 1]))
    with pytest.raises(ValueError):
        block_entropy("heisenberg", 4)
