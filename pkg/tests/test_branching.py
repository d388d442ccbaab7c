import numpy as np
import pytest
from hypothesis import given, strategies as st

from branchmera.branching import (A_SITES, B_SITES, SIGN_PAIRS, BranchingConfig, BranchingMeraState, _drop,
                                  _hyper_contract, _v_window,
                                  branch_entropy_profile, descend_v, exact_v_gates, init_branching, init_v_layer,
                                  optimize_branching, reduced_hamiltonians, v_environments, window_coupling,
                                  window_energy, window_operator)
from branchmera.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from branchmera.mera import _three_site, op_trace, parity_labels
from branchmera.spin_models import SizeLimitError, X, Z, build_ising, build_xx
from conftest import random_density, random_hermitian


def v_layer(d, kind, seed, noise=0.4):
    return init_v_layer(parity_labels(d), kind, np.random.default_rng(seed), noise)


def dense_v(layer):
    """V as a dense 6-site unitary built gate by gate, mapping (A sites, B sites) -> window."""
    d = layer.chi_in
    p = layer.parity_in % 2
    eye = np.eye(d)
    U = np.kron(np.kron(eye, layer.u.reshape(d * d, d * d)), np.kron(layer.u.reshape(d * d, d * d), eye))
    Vg = layer.v.reshape(d * d, d * d)
    Vm = np.kron(np.kron(Vg, Vg), Vg)
    # signs on the sublattice pairs, diagonal in the q basis
    s = np.ones((d,) * 6)
    if layer.swap_kind == "fermionic":
        for idx in np.ndindex(*s.shape):
            s[idx] = (-1) ** sum(p[idx[b]] * p[idx[a]] for b, a in SIGN_PAIRS)
    G = U @ Vm @ np.diag(s.reshape(-1))
    order = list(A_SITES) + list(B_SITES)
    # reorder the columns from window order to (A, B) order
    G = G.reshape((d,) * 6 + (d,) * 6).transpose(list(range(6)) + [6 + x for x in order])
    return G.reshape(d**6, d**6)


@pytest.mark.parametrize("kind", ["fermionic", "bosonic"])
def test_window_operator_matches_dense_unitary(kind, rng):
    layer = v_layer(2, kind, 1)
    h = random_hermitian(8, rng).reshape((2,) * 6)
    G = dense_v(layer)
    H6 = (np.kron(np.kron(np.eye(2), h.reshape(8, 8)), np.eye(4))
          + np.kron(np.kron(np.eye(4), h.reshape(8, 8)), np.eye(2)))
    assert np.allclose(window_operator(h, layer), G.conj().T @ H6 @ G, atol=1e-10)
    # V is unitary: spectrum preserved
    assert np.allclose(np.linalg.eigvalsh(window_operator(h, layer)), np.linalg.eigvalsh(H6), atol=1e-10)


@given(st.integers(0, 500), st.sampled_from(["fermionic", "bosonic"]))
def test_window_energy_descend_and_environments_agree(seed, kind):
    r = np.random.default_rng(seed)
    d = 2
    layer = v_layer(d, kind, seed)
    h = random_hermitian(d**3, r).reshape((d,) * 6)
    ra = random_density(d**3, r).reshape((d,) * 6)
    rb = random_density(d**3, r).reshape((d,) * 6)
    e = window_energy(layer, h, ra, rb)
    # descend_v averages the two supports; window_energy sums them
    assert abs(2 * op_trace(h, descend_v(layer, ra, rb)) - e) < 1e-10
    env = v_environments(layer, h, ra, rb)
    assert abs(np.sum(env["u"] * layer.u.conj()) - 2 * e) < 1e-10
    assert abs(np.sum(env["v"] * layer.v.conj()) - 3 * e) < 1e-10
    ha, hb = reduced_hamiltonians(h, layer, ra, rb)
    assert abs(op_trace(ha, ra) - e) < 1e-10
    assert abs(op_trace(hb, rb) - e) < 1e-10


def test_descend_v_is_a_density_matrix(rng):
    layer = v_layer(2, "fermionic", 5)
    ra = random_density(8, rng).reshape((2,) * 6)
    rb = random_density(8, rng).reshape((2,) * 6)
    rho = descend_v(layer, ra, rb).reshape(8, 8)
    assert abs(np.trace(rho) - 1) < 1e-12
    assert np.allclose(rho, rho.conj().T, atol=1e-12)
    assert np.linalg.eigvalsh(rho).min() > -1e-10


def site_op(op, k):
    ops = [np.eye(2)] * 3
    ops[k] = op
    return np.einsum("aA,bB,cC->abcABC", *ops).astype(complex)


def test_reduced_hamiltonian_uncoupled_term(rng):
    # identity gates and bosonic swaps: support (1,2,3) holds (a0, b1, a1), support (2,3,4) holds
    # (b1, a1, b2). A one-site Z on the first support site acts on a0 and on b1, with no coupling,
    # so H'_A = Z_a0 + <Z_b1> and H'_B = Z_b1 + <Z_a0>.
    layer = init_v_layer(parity_labels(2), "bosonic", rng, 0.0, np.eye(4), np.eye(4))
    ra = random_density(8, rng).reshape((2,) * 6)
    rb = random_density(8, rng).reshape((2,) * 6)
    hz = site_op(Z, 0)
    ha, hb = reduced_hamiltonians(hz, layer, ra, rb)
    m_a = np.real(op_trace(site_op(Z, 0), ra))
    m_b = np.real(op_trace(site_op(Z, 1), rb))
    assert np.allclose(ha, site_op(Z, 0) + m_b * site_op(np.eye(2), 0), atol=1e-12)
    assert np.allclose(hb, site_op(Z, 1) + m_a * site_op(np.eye(2), 0), atol=1e-12)


def test_reduced_hamiltonian_zz_closed_form(rng):
    # identity gates: x1 = a0 and x2 = b1, so Z_x1 Z_x2 -> H'_A = <Z_b1> Z_a0
    layer = init_v_layer(parity_labels(2), "bosonic", rng, 0.0, np.eye(4), np.eye(4))
    ra = random_density(8, rng).reshape((2,) * 6)
    rb = random_density(8, rng).reshape((2,) * 6)
    h = np.einsum("aA,bB,cC->abcABC", Z, Z, np.eye(2)).astype(complex)
    # first support only, where the term is Z_a0 Z_b1
    ops, labels, names, fi, fo, qi, qo = _v_window(layer, (1, 2, 3), h, ra, rb)
    k = names.index("rho_b")
    o, l, _ = _drop(ops, labels, names, k)
    hb_single = _hyper_contract(o, l, [qo[x] for x in B_SITES] + [qi[x] for x in B_SITES])
    k = names.index("rho_a")
    o, l, _ = _drop(ops, labels, names, k)
    ha_single = _hyper_contract(o, l, [qo[x] for x in A_SITES] + [qi[x] for x in A_SITES])
    m_b = np.real(op_trace(site_op(Z, 1), rb))
    m_a = np.real(op_trace(site_op(Z, 0), ra))
    assert np.allclose(ha_single, m_b * site_op(Z, 0), atol=1e-12)
    assert np.allclose(hb_single, m_a * site_op(Z, 1), atol=1e-12)


def test_exact_v_decouples_xx():
    h0 = _three_site(build_xx(0.0))
    for kind, small in (("fermionic", True), ("bosonic", False)):
        layer = init_v_layer(parity_labels(2), kind, np.random.default_rng(0), 0.0, *exact_v_gates(kind))
        ta, tb, res = window_coupling(h0, layer)
        assert (res < 1e-12) == small
    layer = init_v_layer(parity_labels(2), "fermionic", np.random.default_rng(0), 0.0, *exact_v_gates())
    ta, tb, _ = window_coupling(h0, layer)
    # each branch sees one critical Ising bond XX + Z/2 + Z/2 per cell (A on a0 a1, B on b1 b2)
    bond = np.kron(X, X) + 0.5 * np.kron(Z, np.eye(2)) + 0.5 * np.kron(np.eye(2), Z)
    for t, expect in ((ta, np.kron(bond, np.eye(2))), (tb, np.kron(np.eye(2), bond))):
        t0 = np.trace(t) / 8
        assert np.allclose(t - t0 * np.eye(8), expect, atol=1e-12)


def test_window_operator_size_cap():
    with pytest.raises(SizeLimitError):
        window_operator(np.zeros((6,) * 6), v_layer(6, "bosonic", 0, 0.0))


def test_state_tree_checks():
    cfg = BranchingConfig(s_star=1, chi_trunk=4, chi_branch=4)
    st_ = init_branching(parity_labels(2), cfg)
    assert len(st_.trunk) == 1 and st_.v.kind == "V"
    labels = [l for l, _ in st_.layers]
    assert labels.count("V") == 1 and labels[0] == "trunk"
    with pytest.raises(ValueError):
        BranchingMeraState([], st_.v, st_.branches, 1)
    with pytest.raises(ValueError):
        BranchingMeraState(st_.trunk, st_.v, {"A": st_.branches["A"]}, 1)


def test_exact_start_is_a_fixed_point():
    # mu = 0 with the exact V: optimisation must not degrade the energy
    cfg = BranchingConfig(mu=0.0, s_star=0, chi_trunk=2, chi_branch=4, outer_iterations=12, branch_sweeps=3,
                          seed=2)
    h = build_xx(0.0)
    state = init_branching(parity_labels(2), cfg, v_gates=exact_v_gates())
    frozen = optimize_branching(h, BranchingConfig(**{**cfg.__dict__, "freeze_v": True}), state=state)
    cfg.outer_iterations = 6
    res = optimize_branching(h, cfg, state=frozen.state)
    tr = np.array(res.trace)
    assert np.all(np.diff(tr[3:]) < 1e-8)
    assert res.report.energy_per_site <= frozen.report.energy_per_site + 1e-8
    # V may trade a tiny coupling for mean-field energy but stays at the decoupler
    assert res.residual_coupling < 1e-3


def test_checkpoint_round_trip(tmp_path):
    cfg = BranchingConfig(s_star=1)
    st_ = init_branching(parity_labels(2), cfg)
    path = tmp_path / "s.ckpt"
    save_checkpoint(path, st_, {"config_hash": "abc"})
    back, meta = load_checkpoint(path)
    assert meta == {"config_hash": "abc"}
    assert back.s_star == 1
    for (la, a), (lb, b) in zip(st_.layers, back.layers):
        assert la == lb
        for k in a.tensors:
            assert np.array_equal(a.tensors[k], b.tensors[k])
        assert np.array_equal(a.parity_out, b.parity_out)
    raw = path.read_bytes()
    assert raw[:8] == b"BMERACKP"
    (tmp_path / "bad.ckpt").write_bytes(b"NOTACKPT" + raw[8:])
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "bad.ckpt")
    (tmp_path / "short.ckpt").write_bytes(raw[:100])
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "short.ckpt")


def test_branch_entropy_profile_product_state():
    cfg = BranchingConfig(s_star=0, chi_trunk=2, chi_branch=4, init_noise=0.0)
    st_ = init_branching(parity_labels(2), cfg)
    # identity-like tensors without noise keep the product state |0...0>
    for p in branch_entropy_profile(st_).values():
        assert np.allclose(p.S, 0.0, atol=1e-8)
