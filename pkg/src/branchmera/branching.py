"""Branching MERA: a coarse-graining trunk, one decoupling layer V at scale s*,
and two independent scale-invariant MERAs above it.

V acts on the trunk sites at scale s*, grouped in cells (a_j, b_j). As a
state-side circuit it is V = U_u U_v S: S interleaves the two sublattice
states (the fermionic swaps of the routing network), v acts on (b_j, a_{j+1})
and u on (a_j, b_j). For an infinite chain the swap network only leaves
signs among the sites of a local window; those outside cancel between ket
and bra because the branch states have definite parity. A window of six
trunk sites

    x0  x1  x2  x3  x4  x5
    b0  a0  b1  a1  b2  a2

carries both Hamiltonian positions (x1..x3 and x2..x4) in its light cone,
and the interleaving sign is the product of (-1)^{p(b_l) p(a_k)} over the
pairs with b_l left of a_k.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import opt_einsum

from .free_fermions import EntropyProfile
from .mera import (LayerSpec, Mera, MeraConfig, _shift, _three_site, ascend, densities, density_entropy,
                   descend, feasible_parities, fixed_point_density, init_layer, init_mera, op_trace,
                   parity_labels, refresh_densities, update_layers, _update_layer)
from .spin_models import EnergyReport, SizeLimitError, TwoSiteHamiltonian
from .tensor_core import parity_mask, polar_update

A_SITES = (1, 3, 5)
B_SITES = (0, 2, 4)
# (b position, a position) pairs whose order flips when the sublattices are interleaved
SIGN_PAIRS = [(b, a) for b in B_SITES for a in A_SITES if b < a]
SUPPORTS = ((1, 2, 3), (2, 3, 4))
WINDOW_MAX_DIM = 4096


# ---------------------------------------------------------------- contraction helper

@lru_cache(maxsize=2048)
def _expression(subscripts: str, shapes: tuple):
    # flop count alone misjudges paths with huge intermediates; penalise memory traffic
    best = None
    for opt in ("branch-2", "dp"):
        path, info = opt_einsum.contract_path(subscripts, *shapes, shapes=True, optimize=opt)
        cost = float(info.opt_cost) + 64.0 * float(info.largest_intermediate)
        if best is None or cost < best[0]:
            best = (cost, path)
    return opt_einsum.contract_expression(subscripts, *shapes, optimize=best[1])


def _hyper_contract(operands, labels, out):
    """Einstein sum over label lists; labels may appear on any number of legs."""
    symbols = {}
    for ls in labels + [out]:
        for l in ls:
            if l not in symbols:
                symbols[l] = opt_einsum.get_symbol(len(symbols))
    subs = ",".join("".join(symbols[l] for l in ls) for ls in labels)
    subs += "->" + "".join(symbols[l] for l in out)
    expr = _expression(subs, tuple(np.shape(t) for t in operands))
    return expr(*operands)


# ---------------------------------------------------------------- V layer

def sign_matrix(parity, swap_kind: str) -> np.ndarray | None:
    if swap_kind == "bosonic":
        return None
    if swap_kind != "fermionic":
        raise ValueError(f"unknown swap kind {swap_kind!r}")
    p = np.asarray(parity) % 2
    return np.where(np.outer(p, p) == 1, -1.0, 1.0)


def init_v_layer(parity, swap_kind: str, rng: np.random.Generator, noise: float = 1e-3,
                 u=None, v=None) -> LayerSpec:
    """V layer with identity-like (or given) u and v gates."""
    parity = np.asarray(parity)
    d = len(parity)

    def gate(g):
        if g is not None:
            return np.asarray(g, dtype=complex).reshape(d, d, d, d)
        m = np.eye(d * d) + noise * (rng.standard_normal((d * d, d * d)) + 1j * rng.standard_normal((d * d, d * d)))
        return polar_update(-m.reshape(d, d, d, d), 2, [parity] * 4)

    return LayerSpec("V", {"u": gate(u), "v": gate(v)}, parity, parity, swap_kind)


@lru_cache(maxsize=16)
def _v_factors(parity: tuple) -> tuple:
    """Swap-sign factors F_x attached to the three v gates of the window.

    The gate at (x, x+1) enters as g_x = v[m, m', q, q'] F_x[q, q', bonds].
    The within-gate pairs give (-1)^(p_x p_x+1). The cross-gate pairs
    (0,3), (0,5), (2,5) are carried by two parity bonds of dimension 2:
    k = p_0 from g_0 to g_2, and k' = p_0 + p_2 (mod 2) from g_2 to g_4.
    """
    p = np.asarray(parity) % 2
    sg = np.where(np.outer(p, p) == 1, -1.0, 1.0)
    d = len(p)
    f0 = np.zeros((d, d, 2))
    f1 = np.zeros((d, d, 2, 2))
    f2 = np.zeros((d, d, 2))
    for c in range(d):
        for e in range(d):
            f0[c, e, p[c]] = sg[c, e]
            for k in (0, 1):
                f1[c, e, k, (k + p[c]) % 2] = sg[c, e] * (-1) ** (k * p[e])
                f2[c, e, k] = sg[c, e] * (-1) ** (k * p[e])
    return f0, f1, f2


_BONDS = {0: [("k",)], 2: [("k",), ("k'",)], 4: [("k'",)]}


def _v_window(layer: LayerSpec, support=None, h=None, rho_a=None, rho_b=None):
    """Operands and labels of tr(h G (rho_A x rho_B) G^dag) for one h position.

    For fermionic swaps the signs ride on small bond legs between the v
    gates (see _v_factors), so no index is shared by more than two operands.
    """
    sup = support or ()
    ops, labels, names = [], [], []

    def add(name, t, ls):
        ops.append(t)
        labels.append(ls)
        names.append(name)

    fo = {x: ("fo", x) for x in range(6)}
    fi = {x: (("fi", x) if x in sup else ("fo", x)) for x in range(6)}
    if h is not None:
        add("h", h, [fo[x] for x in sup] + [fi[x] for x in sup])
    mo, mi = dict(fo), dict(fi)
    for x in (1, 3):
        for y in (x, x + 1):
            mo[y], mi[y] = ("mo", y), ("mi", y)
        add("u", layer.u, [fi[x], fi[x + 1], mi[x], mi[x + 1]])
        add("u*", layer.u.conj(), [fo[x], fo[x + 1], mo[x], mo[x + 1]])
    qo = {x: ("qo", x) for x in range(6)}
    qi = {x: ("qi", x) for x in range(6)}
    fermionic = sign_matrix(layer.parity_out, layer.swap_kind) is not None
    if fermionic:
        factors = _v_factors(tuple(int(x) for x in layer.parity_out))
    for n, x in enumerate((0, 2, 4)):
        if fermionic:
            g = np.einsum("abcd,cd...->abcd...", layer.v, factors[n])
            add("v", g, [mi[x], mi[x + 1], qi[x], qi[x + 1]] + [t + ("i",) for t in _BONDS[x]])
            add("v*", g.conj(), [mo[x], mo[x + 1], qo[x], qo[x + 1]] + [t + ("o",) for t in _BONDS[x]])
        else:
            add("v", layer.v, [mi[x], mi[x + 1], qi[x], qi[x + 1]])
            add("v*", layer.v.conj(), [mo[x], mo[x + 1], qo[x], qo[x + 1]])
    if rho_a is not None:
        add("rho_a", rho_a, [qi[x] for x in A_SITES] + [qo[x] for x in A_SITES])
    if rho_b is not None:
        add("rho_b", rho_b, [qi[x] for x in B_SITES] + [qo[x] for x in B_SITES])
    return ops, labels, names, fi, fo, qi, qo


def _drop(ops, labels, names, k):
    return ops[:k] + ops[k + 1:], labels[:k] + labels[k + 1:], names[:k] + names[k + 1:]


def window_energy(layer: LayerSpec, h, rho_a, rho_b) -> float:
    """Energy of one cell (two trunk sites): both h positions."""
    total = 0.0
    for sup in SUPPORTS:
        ops, labels, *_ = _v_window(layer, sup, h, rho_a, rho_b)
        total += _hyper_contract(ops, labels, [])
    return float(np.real(total))


def v_environments(layer: LayerSpec, h, rho_a, rho_b, which=("u", "v")) -> dict:
    envs = {name: 0.0 for name in which}
    factors = _v_factors(tuple(int(x) for x in layer.parity_out))
    for sup in SUPPORTS:
        ops, labels, names, *_ = _v_window(layer, sup, h, rho_a, rho_b)
        n = 0
        for k, name in enumerate(names):
            if name in ("u*", "v*"):
                if name[0] not in which:
                    n += name == "v*"
                    continue
                o, l, _ = _drop(ops, labels, names, k)
                env = _hyper_contract(o, l, labels[k])
                if name == "v*":
                    if env.ndim > 4:
                        f = factors[n]
                        env = (env.reshape(env.shape[:4] + (-1,)) * f.reshape(f.shape[:2] + (-1,))).sum(-1)
                    n += 1
                envs[name[0]] = envs[name[0]] + env
    return envs


def reduced_hamiltonian(h, layer: LayerSpec, rho_a, rho_b, branch: str) -> np.ndarray:
    """Mean-field three-site term of one branch ("A" or "B"), the other traced out."""
    name, sites = ("rho_a", A_SITES) if branch == "A" else ("rho_b", B_SITES)
    total = 0.0
    for sup in SUPPORTS:
        ops, labels, names, fi, fo, qi, qo = _v_window(layer, sup, h, rho_a, rho_b)
        k = names.index(name)
        o, l, _ = _drop(ops, labels, names, k)
        total = total + _hyper_contract(o, l, [qo[x] for x in sites] + [qi[x] for x in sites])
    return total


def reduced_hamiltonians(h, layer: LayerSpec, rho_a, rho_b):
    """Mean-field branch Hamiltonians H'_A = <Psi_B|H'|Psi_B>, H'_B = <Psi_A|H'|Psi_A>.

    Returned as three-site terms on (a0, a1, a2) and (b0, b1, b2): the sum of
    these terms over cells is the cell Hamiltonian with the other branch
    traced out against its three-site density matrix.
    """
    return (reduced_hamiltonian(h, layer, rho_a, rho_b, "A"),
            reduced_hamiltonian(h, layer, rho_a, rho_b, "B"))


def descend_v(layer: LayerSpec, rho_a, rho_b) -> np.ndarray:
    """Trunk three-site density matrix at s*, averaged over the two cell positions."""
    total = 0.0
    for sup in SUPPORTS:
        ops, labels, names, fi, fo, *_ = _v_window(layer, sup, None, rho_a, rho_b)
        total = total + _hyper_contract(ops, labels, [fi[x] for x in sup] + [fo[x] for x in sup])
    return 0.5 * total


def window_operator(h, layer: LayerSpec) -> np.ndarray:
    """V^dag (h on x1..x3 + h on x2..x4) V as a dense operator on (a0 a1 a2 | b0 b1 b2).

    Only for small trunk dimensions (window dimension up to 4096).
    """
    d = layer.chi_in
    if d**6 > WINDOW_MAX_DIM:
        raise SizeLimitError(f"dense window operator limited to dimension {WINDOW_MAX_DIM}")
    total = 0.0
    for sup in SUPPORTS:
        ops, labels, names, fi, fo, qi, qo = _v_window(layer, sup, h)
        order = [x for x in A_SITES] + [x for x in B_SITES]
        total = total + _hyper_contract(ops, labels, [qo[x] for x in order] + [qi[x] for x in order])
    return total.reshape(d**6, d**6)


def window_coupling(h, layer: LayerSpec):
    """(T_A, T_B, residual): HS-orthogonal split of the window operator and the
    Frobenius norm of its A-B coupling part."""
    T = window_operator(h, layer)
    d3 = layer.chi_in ** 3
    T4 = T.reshape(d3, d3, d3, d3)
    ta = np.einsum("ibjb->ij", T4) / d3
    tb = np.einsum("aiaj->ij", T4) / d3
    t0 = np.trace(ta) / d3
    # ||T - ta x 1 - 1 x tb + t0||^2 expanded in HS-orthogonal pieces
    res2 = (np.linalg.norm(T) ** 2 - d3 * np.linalg.norm(ta) ** 2 - d3 * np.linalg.norm(tb) ** 2
            + d3 * d3 * abs(t0) ** 2)
    return ta, tb - t0 * np.eye(d3), float(np.sqrt(max(res2, 0.0)))


# ---------------------------------------------------------------- state

@dataclass
class BranchingConfig:
    mu: float = float(np.sqrt(2.0))
    chi_trunk: int = 4
    chi_branch: int = 4
    s_star: int = 1
    swap_kind: str = "fermionic"
    outer_iterations: int = 200
    branch_sweeps: int = 4
    trunk_sweeps: int = 1
    v_updates: int = 2
    n_transitional: int = 2
    init_noise: float = 1e-3
    power_steps: int = 8
    u_start: int = 5
    v_start: int = 5           # outer iterations before V is updated
    tol: float = 1e-9
    patience: int = 40
    seed: int = 0
    freeze_v: bool = False
    freeze_trunk: bool = False


@dataclass
class BranchingMeraState:
    """Trunk W layers (bottom first), the V layer at s*, and the two branch MERAs."""

    trunk: list
    v: LayerSpec
    branches: dict
    s_star: int

    def __post_init__(self):
        self.check()

    def check(self):
        if len(self.trunk) != self.s_star:
            raise ValueError("the trunk must hold exactly s* coarse-graining layers")
        if self.v.kind != "V" or any(l.kind != "W" for l in self.trunk):
            raise ValueError("malformed branch tree: one V layer above W layers expected")
        if set(self.branches) != {"A", "B"}:
            raise ValueError("branches must be labelled A and B")
        p = self.trunk[-1].parity_out if self.trunk else self.v.parity_in
        if np.any(p != self.v.parity_in):
            raise ValueError("V layer does not match the trunk")
        for m in self.branches.values():
            if np.any(m.physical_parity != self.v.parity_out):
                raise ValueError("branch MERA does not match the V layer")
            m.check()

    @property
    def layers(self) -> list:
        """All layers with their branch label: (label, layer)."""
        out = [("trunk", l) for l in self.trunk] + [("V", self.v)]
        for b in ("A", "B"):
            out += [(b, l) for l in self.branches[b].layers]
        return out

    def copy(self) -> "BranchingMeraState":
        return BranchingMeraState([l.copy() for l in self.trunk], self.v.copy(),
                                  {k: m.copy() for k, m in self.branches.items()}, self.s_star)


def init_branching(p_phys, config: BranchingConfig, rng=None, v_gates=None) -> BranchingMeraState:
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    p = np.asarray(p_phys)
    trunk = []
    for _ in range(config.s_star):
        q = feasible_parities(p, config.chi_trunk)
        trunk.append(init_layer(p, q, rng, config.init_noise))
        p = q
    u, v = v_gates if v_gates is not None else (None, None)
    vl = init_v_layer(p, config.swap_kind, rng, config.init_noise, u, v)
    bcfg = MeraConfig(chi=config.chi_branch, n_transitional=config.n_transitional,
                      init_noise=config.init_noise)
    branches = {b: init_mera(p, bcfg, rng) for b in ("A", "B")}
    return BranchingMeraState(trunk, vl, branches, config.s_star)


def trunk_hamiltonians(state: BranchingMeraState, h0) -> list:
    hs = [h0]
    for layer in state.trunk:
        hs.append(ascend(hs[-1], layer))
    return hs


def branch_densities(state: BranchingMeraState, power_steps: int | None = None,
                     tol: float = 1e-10) -> dict:
    """Bottom three-site density matrix of each branch."""
    out = {}
    for b, m in state.branches.items():
        if power_steps is None:
            m.rho_top, _, _ = fixed_point_density(m.top, m.rho_top, tol=tol)
            out[b] = densities(m, m.rho_top)[0]
        else:
            out[b] = refresh_densities(m, power_steps)[0]
    return out


def branching_energy(state: BranchingMeraState, h, tol: float = 1e-10) -> EnergyReport:
    """Energy per physical site with converged branch fixed points."""
    h0 = _three_site(h)
    hs = trunk_hamiltonians(state, h0)
    rho = branch_densities(state, None, tol)
    e_cell = window_energy(state.v, hs[-1], rho["A"], rho["B"])
    e = e_cell / (2 * 2**state.s_star)
    return EnergyReport(e, "mera", {"s_star": state.s_star, "chi_trunk": state.v.chi_in,
                                    "chi_branch": state.branches["A"].top.chi_out,
                                    "swap_kind": state.v.swap_kind})


def gate_charge(t: np.ndarray, parity) -> int:
    """Z2 charge of a two-site gate (0 even, 1 odd), read off its larger sector."""
    odd = parity_mask([parity] * 4, 1)
    return int(np.linalg.norm(t[odd]) > np.linalg.norm(t[~odd]))


def _update_v(layer: LayerSpec, h, rho_a, rho_b, n: int):
    # gates keep their charge: the analytic decoupler's u is parity odd
    p = layer.parity_in
    for _ in range(n):
        for name in ("u", "v"):
            t = layer.tensors[name]
            env = v_environments(layer, h, rho_a, rho_b, (name,))[name]
            layer.tensors[name] = polar_update(env, 2, [p] * 4, charge=gate_charge(t, p), previous=t)


@dataclass
class BranchingResult:
    state: BranchingMeraState
    report: EnergyReport
    trace: list = field(default_factory=list)
    residual_coupling: float | None = None
    seconds: float = 0.0
    rolled_back: bool = False


def optimize_branching(h, config: BranchingConfig, state: BranchingMeraState | None = None,
                       p_phys=None, callback=None) -> BranchingResult:
    """Self-consistent optimisation of trunk, V layer and both branches.

    Each outer iteration: refresh the branch densities, record the energy,
    update the trunk (from the density descended through V), update u and v
    of the V layer, then sweep each branch MERA on its mean-field
    Hamiltonian (the other branch traced out). The shift that makes the
    Hamiltonian negative semidefinite is removed from reported energies.
    """
    t0 = time.time()
    h0 = _three_site(h)
    if p_phys is None:
        p_phys = parity_labels(h0.shape[0])
    if state is None:
        state = init_branching(p_phys, config)
    state = state.copy()
    hs0, shift = _shift(h0)
    scale = 2 * 2**state.s_star
    best, best_e, stale, trace, rolled_back = state.copy(), np.inf, 0, [], False
    for it in range(config.outer_iterations):
        rho = branch_densities(state, config.power_steps)
        hs = trunk_hamiltonians(state, hs0)
        e = window_energy(state.v, hs[-1], rho["A"], rho["B"]) / scale + shift
        trace.append(e)
        if callback is not None:
            callback(it, e)
        stale = 0 if e < best_e - 1e-8 else stale + 1
        if e < best_e:
            best, best_e = state.copy(), e
        if stale >= config.patience:
            rolled_back = True
            break
        if len(trace) > 20 and abs(trace[-20] - e) < config.tol * 20:
            break
        update_u = it >= config.u_start
        if state.trunk and not config.freeze_trunk:
            for _ in range(config.trunk_sweeps):
                rhos = [descend_v(state.v, rho["A"], rho["B"])]
                for layer in reversed(state.trunk[1:]):
                    rhos.append(descend(rhos[-1], layer))
                rhos = rhos[::-1]
                h_s = hs0
                for s, layer in enumerate(state.trunk):
                    _update_layer(layer, h_s, rhos[s], update_u)
                    h_s = ascend(h_s, layer)
            hs = trunk_hamiltonians(state, hs0)
        if not config.freeze_v and it >= config.v_start:
            _update_v(state.v, hs[-1], rho["A"], rho["B"], config.v_updates)
        for b in ("A", "B"):
            hb = reduced_hamiltonian(hs[-1], state.v, rho["A"], rho["B"], b)
            hb_shifted, _ = _shift(_hermitian(hb))
            m = state.branches[b]
            for _ in range(config.branch_sweeps):
                rhos = refresh_densities(m, config.power_steps)
                update_layers(m, hb_shifted, rhos, update_u)
            rho[b] = refresh_densities(m, config.power_steps)[0]
    final = best if (rolled_back or trace[-1] > best_e) else state
    report = branching_energy(final, h0)
    report.metadata.update({"iterations": len(trace), "shift": shift, "rolled_back": rolled_back})
    residual = None
    if final.v.chi_in**6 <= WINDOW_MAX_DIM:
        residual = window_coupling(trunk_hamiltonians(final, h0)[-1], final.v)[2]
    return BranchingResult(final, report, trace, residual, time.time() - t0, rolled_back)


def _hermitian(t):
    d = t.shape[0]
    m = t.reshape(d**3, d**3)
    return (0.5 * (m + m.conj().T)).reshape(t.shape)


def sweep_s_star(h, config: BranchingConfig, s_values, callback=None) -> dict:
    """Optimise one branching MERA per s* candidate; returns {s*: BranchingResult}."""
    out = {}
    for k, s in enumerate(s_values):
        cfg = BranchingConfig(**{**config.__dict__, "s_star": int(s), "seed": config.seed + k})
        out[int(s)] = optimize_branching(h, cfg, callback=callback)
    return out


# ---------------------------------------------------------------- analysis

def branch_entropy_profile(state: BranchingMeraState, tol: float = 1e-10) -> dict:
    """Entropies (bits) of 1, 2, 3 contiguous sites of each branch at every branch scale.

    A block of n sites at branch scale s covers n * 2^s branch sites, i.e.
    n * 2^(s + s* + 1) physical sites once the sublattice spacing is counted.
    Returns {"A": EntropyProfile, "B": EntropyProfile} with L in physical sites.
    """
    out = {}
    for b, m in state.branches.items():
        m.rho_top, _, _ = fixed_point_density(m.top, m.rho_top, tol=tol)
        rhos = densities(m, m.rho_top)
        Ls, Ss = [], []
        for s, r in enumerate(rhos):
            for n in (1, 2, 3):
                keep = list(range(n))
                Ls.append(n * 2 ** (s + state.s_star + 1))
                Ss.append(density_entropy(_reduce(r, keep)))
        order = np.argsort(Ls, kind="stable")
        out[b] = EntropyProfile(np.array(Ls)[order], np.array(Ss)[order])
    return out


def _reduce(rho, keep):
    from .mera import reduce_three_site
    return reduce_three_site(rho, keep)


def exact_v_gates(swap_kind: str = "fermionic"):
    """(u, v) of the analytic decoupler for the mu=0 XX chain on physical sites."""
    from .exact_decoupler import exact_decoupler_spec
    spec = exact_decoupler_spec(swap_kind)
    return spec.u, np.eye(4, dtype=complex)
