import numpy as np
import pytest
from hypothesis import given, strategies as st

from branchmera.spin_models import (EnergyReport, SizeLimitError, TwoSiteHamiltonian, X, Y, Z, brute_force_ground,
                                    build_ising, build_xx)


def test_two_site_ising_open():
    # XX + Z1 + Z2: even sector [[2, 1], [1, -2]] gives -sqrt(5)
    e, _ = brute_force_ground(build_ising(1.0), 2, "open")
    assert np.isclose(e, -np.sqrt(5.0), atol=1e-12)


def test_two_site_xx_open():
    e, _ = brute_force_ground(build_xx(0.0), 2, "open")
    assert np.isclose(e, -2.0, atol=1e-12)


def test_ground_state_is_normalised_eigenvector():
    h = build_ising(0.7)
    e, psi = brute_force_ground(h, 6)
    H = h.dense(6)
    v = psi.reshape(-1)
    assert np.isclose(np.linalg.norm(v), 1.0)
    assert np.allclose(H @ v, e * v, atol=1e-10)


def test_lanczos_branch_matches_dense(monkeypatch):
    import branchmera.spin_models as sm
    h = build_ising(0.8)
    e_dense, _ = brute_force_ground(h, 8)
    monkeypatch.setattr(sm, "_DENSE_LIMIT", 16)
    e_sparse, psi = brute_force_ground(h, 8)
    assert abs(e_sparse - e_dense) < 1e-10
    assert np.isclose(np.linalg.norm(psi), 1.0)


def test_periodic_wrap_bond_is_translation_invariant():
    h = build_xx(0.5)
    H = h.dense(5)
    # cyclic shift T; H must commute with it
    n, d = 5, 2
    perm = np.arange(d**n).reshape((d,) * n).transpose(list(range(1, n)) + [0]).reshape(-1)
    T = np.eye(d**n)[perm]
    assert np.allclose(T @ H @ T.T, H, atol=1e-12)


def test_three_site_term_sums_to_chain():
    h = build_ising(0.8)
    n = 6
    H = h.dense(n, "periodic")
    h3 = h.three_site().reshape(8, 8)
    total = np.zeros_like(H)
    for r in range(n):
        # embed h3 on (r, r+1, r+2) mod n by permuting sites
        order = [(r + k) % n for k in range(n)]
        inv = np.argsort(order)
        big = np.kron(h3, np.eye(2 ** (n - 3))).reshape((2,) * (2 * n))
        big = big.transpose(list(inv) + [n + i for i in inv]).reshape(2**n, 2**n)
        total += big
    assert np.allclose(total, H, atol=1e-12)


def test_size_cap():
    with pytest.raises(SizeLimitError):
        build_xx().sparse(17)


def test_non_hermitian_rejected():
    with pytest.raises(ValueError):
        TwoSiteHamiltonian(2, np.kron(X, np.array([[0, 1], [0, 0]])), np.zeros((2, 2)))


def test_energy_report_must_be_finite():
    with pytest.raises(ValueError):
        EnergyReport(float("nan"), "oracle")


@given(st.floats(-3, 3), st.integers(3, 8))
def test_xx_conserves_magnetisation(mu, n):
    H = build_xx(mu).dense(n)
    Mz = sum(np.kron(np.kron(np.eye(2**r), Z), np.eye(2 ** (n - r - 1))) for r in range(n))
    assert np.allclose(H @ Mz, Mz @ H, atol=1e-10)
