import numpy as np
import pytest
from hypothesis import given, strategies as st

from branchmera.exact_decoupler import (CertificationError, MajoranaLabel, QuadraticMajoranaHamiltonian, bond_sign,
                                        decouple_xx_exact, exact_disentangler, majorana_as_spin,
                                        rewrite_sublattice_as_ising)
from branchmera.free_fermions import ising_majorana, many_body_spectrum, xx_majorana
from branchmera.spin_models import SizeLimitError, Z, build_ising, build_xx

labels = st.builds(MajoranaLabel, st.integers(1, 5), st.sampled_from(["c", "d"]))


@given(labels, labels)
def test_majorana_clifford_relations(a, b):
    n = 5
    ga, gb = majorana_as_spin(a, n), majorana_as_spin(b, n)
    anti = ga @ gb + gb @ ga
    expect = 2 * np.eye(2**n) if a == b else np.zeros((2**n, 2**n))
    assert np.allclose(anti, expect, atol=1e-12)
    assert np.allclose(ga, ga.conj().T)


def test_majorana_bilinear_is_local_field():
    # i c_1 d_1 = i X Y = -Z on site 1
    c1 = majorana_as_spin(MajoranaLabel(1, "c"), 2)
    d1 = majorana_as_spin(MajoranaLabel(1, "d"), 2)
    assert np.allclose(1j * c1 @ d1, -np.kron(Z, np.eye(2)))


def test_bad_labels():
    with pytest.raises(ValueError):
        MajoranaLabel(0, "c")
    with pytest.raises(ValueError):
        MajoranaLabel(1, "e")
    with pytest.raises(SizeLimitError):
        majorana_as_spin(MajoranaLabel(1, "c"), 9)


def test_disentangler_relations():
    u = exact_disentangler()
    assert np.allclose(u @ u.conj().T, np.eye(4), atol=1e-14)
    c1, d1, c2, d2 = (majorana_as_spin(MajoranaLabel(r, f), 2) for r in (1, 2) for f in "cd")
    for g, gp in [(c1, c2), (d1, c1), (c2, d1), (d2, -d2)]:
        assert np.allclose(u @ g @ u.conj().T, gp, atol=1e-13)
    # determinant -1 permutation: u is parity odd
    zz = np.kron(Z, Z)
    assert np.allclose(zz @ u @ zz, -u, atol=1e-13)


@pytest.mark.parametrize("n,mu", [(4, 0.0), (6, 0.7), (5, 1.3)])
def test_majorana_forms_match_spin_chains(n, mu):
    assert np.allclose(xx_majorana(n, mu).dense(), build_xx(mu).dense(n, "open"), atol=1e-12)
    assert np.allclose(ising_majorana(n, 1.0).dense(), build_ising(1.0).dense(n, "open"), atol=1e-12)


def test_many_body_spectrum_matches_dense():
    hq = xx_majorana(5, 0.4)
    assert np.allclose(many_body_spectrum(hq), np.linalg.eigvalsh(hq.dense()), atol=1e-10)
    assert np.isclose(hq.ground_energy(), np.linalg.eigvalsh(hq.dense())[0], atol=1e-10)


def test_antisymmetry_enforced():
    with pytest.raises(ValueError):
        QuadraticMajoranaHamiltonian(np.ones((2, 2)))


@pytest.mark.parametrize("n", [4, 8])
def test_exact_decoupling(n):
    res = decouple_xx_exact(n)
    assert res.residual < 1e-12
    assert res.commutator_norm < 1e-12
    assert res.spectrum_deviation < 1e-10
    for block in (res.H_A, res.H_B):
        assert rewrite_sublattice_as_ising(block).params["g"] == 1.0
        assert bond_sign(block) == 1


def test_bosonic_swaps_leave_interactions():
    res = decouple_xx_exact(8, swap_kind="bosonic")
    assert res.residual > 0.1


def test_certification_rejects_xx_block():
    with pytest.raises(CertificationError):
        rewrite_sublattice_as_ising(build_xx(0.0).dense(4, "open"))


def test_decoupler_size_limits():
    with pytest.raises(SizeLimitError):
        decouple_xx_exact(16)
    with pytest.raises(ValueError):
        decouple_xx_exact(6)
