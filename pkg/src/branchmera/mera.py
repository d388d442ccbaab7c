"""Binary MERA with three-site operators, Z2-symmetric tensors and a scale-invariant top.

Layer convention (state side, coarse -> fine): isometries w map coarse site j
onto fine sites (2j, 2j+1); disentanglers u then act on fine pairs
(2j+1, 2j+2). Tensors keep their fine (bottom) legs first:

    w[f_a, f_b, c]            w^dag w = 1 over c
    u[f_a, f_b, t_a, t_b]     unitary, t = legs attached to the isometries

Three-site operators are (d,)*6 tensors O[out1, out2, out3, in1, in2, in3];
density matrices use the same layout with tr(O rho) = sum O[x, y] rho[y, x].
A window of six fine sites f0..f5 sits under three coarse sites; the left
(right) ascending map takes an operator on f1..f3 (f2..f4). A chain
Hamiltonian sum_x h(x, x+1, x+2) ascends to h' = A_L(h) + A_R(h) and the
energy per fine site at scale s is tr(h_s rho_s) / 2^s.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, eigs

from .spin_models import EnergyReport, TwoSiteHamiltonian
from .tensor_core import contract, polar_update, project_parity


class ConvergenceError(RuntimeError):
    """Power iteration for a fixed-point density matrix did not converge."""


class ChiMismatchError(ValueError):
    pass


@dataclass
class LayerSpec:
    """One renormalisation layer.

    ``kind`` is "W" for coarse-graining (tensors u, w) or "V" for a
    decoupling layer (tensors u, v; see ``branching``). Parities are the
    Z2 labels of the fine and coarse basis states.
    """

    kind: str
    tensors: dict
    parity_in: np.ndarray
    parity_out: np.ndarray
    swap_kind: str | None = None

    def __post_init__(self):
        if self.kind not in ("W", "V"):
            raise ValueError(f"unknown layer kind {self.kind!r}")
        self.parity_in = np.asarray(self.parity_in, dtype=int)
        self.parity_out = np.asarray(self.parity_out, dtype=int)

    @property
    def chi_in(self) -> int:
        return len(self.parity_in)

    @property
    def chi_out(self) -> int:
        return len(self.parity_out)

    @property
    def u(self) -> np.ndarray:
        return self.tensors["u"]

    @property
    def w(self) -> np.ndarray:
        return self.tensors["w"]

    @property
    def v(self) -> np.ndarray:
        return self.tensors["v"]

    def copy(self) -> "LayerSpec":
        return LayerSpec(self.kind, {k: t.copy() for k, t in self.tensors.items()},
                         self.parity_in.copy(), self.parity_out.copy(), self.swap_kind)


# ---------------------------------------------------------------- construction

def parity_labels(chi: int, n_odd: int | None = None) -> np.ndarray:
    """Z2 labels for a chi-dimensional site: even states first, then odd ones."""
    if n_odd is None:
        n_odd = chi // 2
    if not 0 <= n_odd <= chi:
        raise ValueError("n_odd must lie in [0, chi]")
    return np.array([0] * (chi - n_odd) + [1] * n_odd)


def feasible_parities(p_in: np.ndarray, chi_out: int, n_odd: int | None = None) -> np.ndarray:
    """Coarse labels for a 2-to-1 isometry, clipped to what the fine pair can hold."""
    p_in = np.asarray(p_in)
    ne, no = int(np.sum(p_in == 0)), int(np.sum(p_in == 1))
    rows_even, rows_odd = ne * ne + no * no, 2 * ne * no
    chi_out = min(chi_out, rows_even + rows_odd)
    if n_odd is None:
        n_odd = chi_out // 2
    n_odd = min(max(n_odd, chi_out - rows_even), rows_odd)
    return parity_labels(chi_out, n_odd)


def _pair_parity(p: np.ndarray) -> np.ndarray:
    return (p[:, None] + p[None, :]).reshape(-1) % 2


def _isometrize(t: np.ndarray, n_rows: int, parities) -> np.ndarray:
    # polar factor of t itself: the closest isometry in the parity-even sector
    return polar_update(-t, n_rows, parities)


def init_layer(p_in, p_out, rng: np.random.Generator, noise: float = 1e-3) -> LayerSpec:
    """Identity-like u and w plus noise of the given amplitude, made isometric."""
    p_in, p_out = np.asarray(p_in), np.asarray(p_out)
    d, chi = len(p_in), len(p_out)
    pp = _pair_parity(p_in)
    w = np.zeros((d * d, chi), dtype=complex)
    for par in (0, 1):
        rows = np.flatnonzero(pp == par)
        cols = np.flatnonzero(p_out == par)
        if cols.size > rows.size:
            raise ChiMismatchError("coarse parity sector larger than the fine one")
        w[rows[: cols.size], cols] = 1.0

    def jitter(shape):
        return noise * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))

    w = (w + jitter(w.shape)).reshape(d, d, chi)
    u = (np.eye(d * d) + jitter((d * d, d * d))).reshape(d, d, d, d)
    w = _isometrize(w, 2, [p_in, p_in, p_out])
    u = _isometrize(u, 2, [p_in] * 4)
    return LayerSpec("W", {"u": u, "w": w}, p_in, p_out)


def identity_layer(d: int, p_in=None) -> LayerSpec:
    """u = 1 and w = 1 (d^2 coarse states): a pure two-site blocking."""
    p_in = np.asarray(p_in if p_in is not None else parity_labels(d))
    u = np.eye(d * d, dtype=complex).reshape(d, d, d, d)
    w = np.eye(d * d, dtype=complex).reshape(d, d, d * d)
    return LayerSpec("W", {"u": u, "w": w}, p_in, _pair_parity(p_in))


# ---------------------------------------------------------------- networks

def _window(layer: LayerSpec, side: str, op=None, rho=None, twist: bool = False):
    """Tensors and labels of tr(A_side(op) rho) for a W layer.

    With ``op`` or ``rho`` missing their legs stay open. ``twist`` inserts
    the parity operator on the fine sites left of the operator (the string
    of a nonlocal, parity-twisted operator).
    """
    sup = (1, 2, 3) if side == "L" else (2, 3, 4)
    u, w = layer.u, layer.w
    tensors, labels = [], []

    def add(name, t, ls):
        tensors.append((name, t))
        labels.append(ls)

    fo = {i: ("fo", i) for i in range(6)}
    fi = {i: (("fi", i) if i in sup else ("fo", i)) for i in range(6)}
    if twist:
        P = np.diag(1.0 - 2.0 * (layer.parity_in % 2)).astype(complex)
        for i in range(min(sup)):
            fi[i] = ("fi", i)
            add("P", P, [fo[i], fi[i]])
    if op is not None:
        add("op", op, [fo[i] for i in sup] + [fi[i] for i in sup])
    mo, mi = dict(fo), dict(fi)
    for a in (1, 3):
        mo[a], mo[a + 1] = ("mo", a), ("mo", a + 1)
        mi[a], mi[a + 1] = ("mi", a), ("mi", a + 1)
        add("u", u, [fi[a], fi[a + 1], mi[a], mi[a + 1]])
        add("u*", u.conj(), [fo[a], fo[a + 1], mo[a], mo[a + 1]])
    for j in range(3):
        add("w", w, [mi[2 * j], mi[2 * j + 1], ("ci", j)])
        add("w*", w.conj(), [mo[2 * j], mo[2 * j + 1], ("co", j)])
    if rho is not None:
        add("rho", rho, [("ci", j) for j in range(3)] + [("co", j) for j in range(3)])
    return tensors, labels, sup, fi, fo


def _contract_open(tensors, labels, out):
    return contract([t for _, t in tensors], labels, out)


def _check_dims(op, d):
    if op.shape != (d,) * 6:
        raise ChiMismatchError(f"operator of shape {op.shape} does not fit sites of dimension {d}")


def ascend_side(op, layer: LayerSpec, side: str, twist: bool = False) -> np.ndarray:
    _check_dims(op, layer.chi_in)
    tensors, labels, *_ = _window(layer, side, op=op, twist=twist)
    out = [("co", j) for j in range(3)] + [("ci", j) for j in range(3)]
    return _contract_open(tensors, labels, out)


def descend_side(rho, layer: LayerSpec, side: str) -> np.ndarray:
    _check_dims(rho, layer.chi_out)
    tensors, labels, sup, fi, fo = _window(layer, side, rho=rho)
    out = [fi[i] for i in sup] + [fo[i] for i in sup]
    return _contract_open(tensors, labels, out)


def ascend(op, layer: LayerSpec) -> np.ndarray:
    """Coarse-grained Hamiltonian density: A_L(op) + A_R(op)."""
    return ascend_side(op, layer, "L") + ascend_side(op, layer, "R")


def descend(rho, layer: LayerSpec) -> np.ndarray:
    """Fine three-site density matrix: (D_L(rho) + D_R(rho)) / 2."""
    return 0.5 * (descend_side(rho, layer, "L") + descend_side(rho, layer, "R"))


def environments(layer: LayerSpec, h, rho) -> dict:
    """Linearised environments of u and w for tr((A_L + A_R)(h) rho).

    Each is the sum over the conjugated copies of the tensor in both
    networks, so that the energy is tr(t^dag E) per copy.
    """
    envs = {"u": 0.0, "w": 0.0}
    for side in ("L", "R"):
        tensors, labels, *_ = _window(layer, side, op=h, rho=rho)
        for k, (name, _) in enumerate(tensors):
            if name not in ("u*", "w*"):
                continue
            rest_t = tensors[:k] + tensors[k + 1:]
            rest_l = labels[:k] + labels[k + 1:]
            envs[name[0]] = envs[name[0]] + _contract_open(rest_t, rest_l, labels[k])
    return envs


def op_trace(op, rho) -> complex:
    n = op.ndim // 2
    return np.tensordot(op, rho, axes=(list(range(2 * n)), list(range(n, 2 * n)) + list(range(n))))


def _hermitize(t):
    d = t.shape[0]
    m = t.reshape(d**3, d**3)
    return (0.5 * (m + m.conj().T)).reshape(t.shape)


def fixed_point_density(layer: LayerSpec, rho0=None, tol: float = 1e-10, max_iter: int = 1000,
                        raise_on_fail: bool = True):
    """Fixed point of the scale-invariant descending map by power iteration.

    Returns (rho, iterations, last change). Raises ConvergenceError when the
    trace-norm change per step stays above ``tol`` after ``max_iter`` steps.
    """
    chi = layer.chi_out
    if layer.chi_in != chi:
        raise ChiMismatchError("scale-invariant layer must map chi to chi")
    if rho0 is None:
        rho0 = np.eye(chi**3, dtype=complex).reshape((chi,) * 6) / chi**3
    rho = rho0
    delta = np.inf
    for it in range(1, max_iter + 1):
        new = _hermitize(descend(rho, layer))
        new = new / np.real(np.trace(new.reshape(chi**3, chi**3)))
        delta = float(np.linalg.norm((new - rho).reshape(-1)))
        rho = new
        if delta < tol:
            return rho, it, delta
    if raise_on_fail:
        raise ConvergenceError(f"fixed-point density matrix not converged: change {delta:.2e}")
    return rho, max_iter, delta


# ---------------------------------------------------------------- state

@dataclass
class MeraConfig:
    chi: int = 4
    n_transitional: int = 2
    sweeps: int = 2000
    tol: float = 1e-9
    seed: int = 0
    n_odd: int | None = None
    init_noise: float = 1e-3
    u_start: int = 10          # sweeps with isometry updates only
    power_steps: int = 8       # warm-started fixed-point steps per sweep
    si_terms: int = 1          # ascended copies in the scale-invariant environment
    patience: int = 50         # sweeps above the best energy before rollback
    log_every: int = 0


@dataclass
class Mera:
    """Transitional layers (bottom first) followed by one scale-invariant layer."""

    layers: list
    rho_top: np.ndarray | None = None
    name: str = ""

    @property
    def top(self) -> LayerSpec:
        return self.layers[-1]

    @property
    def n_transitional(self) -> int:
        return len(self.layers) - 1

    @property
    def physical_parity(self) -> np.ndarray:
        return self.layers[0].parity_in

    def copy(self) -> "Mera":
        rho = None if self.rho_top is None else self.rho_top.copy()
        return Mera([l.copy() for l in self.layers], rho, self.name)

    def check(self):
        for lo, hi in zip(self.layers[:-1], self.layers[1:]):
            if lo.chi_out != hi.chi_in or np.any(lo.parity_out != hi.parity_in):
                raise ChiMismatchError("consecutive layers do not match")
        if self.top.chi_in != self.top.chi_out:
            raise ChiMismatchError("scale-invariant layer must map chi to chi")


def init_mera(p_phys, config: MeraConfig, rng: np.random.Generator | None = None) -> Mera:
    """Transitional layers grow the bond dimension as fast as the fine pairs allow."""
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    if config.n_transitional < 1:
        raise ValueError("at least one transitional layer is required")
    p = np.asarray(p_phys)
    layers = []
    for _ in range(config.n_transitional):
        q = feasible_parities(p, config.chi, config.n_odd)
        layers.append(init_layer(p, q, rng, config.init_noise))
        p = q
    if len(p) != config.chi:
        raise ChiMismatchError(f"chi={config.chi} not reached after {config.n_transitional} layers")
    layers.append(init_layer(p, p, rng, config.init_noise))
    return Mera(layers)


def _shift(h3: np.ndarray):
    d = h3.shape[0]
    m = h3.reshape(d**3, d**3)
    c = float(np.max(np.linalg.eigvalsh(0.5 * (m + m.conj().T))))
    return (m - c * np.eye(d**3)).reshape(h3.shape), c


def hamiltonians(mera: Mera, h0) -> list:
    """h_s for s = 0..T, h_T living on the scale-invariant sites."""
    hs = [h0]
    for layer in mera.layers[:-1]:
        hs.append(ascend(hs[-1], layer))
    return hs


def densities(mera: Mera, rho_top) -> list:
    """rho_s for s = 0..T from the top fixed point."""
    rhos = [rho_top]
    for layer in reversed(mera.layers[:-1]):
        rhos.append(descend(rhos[-1], layer))
    return rhos[::-1]


def _update_layer(layer: LayerSpec, h, rho, update_u: bool):
    p = layer.parity_in
    if update_u:
        env = environments(layer, h, rho)["u"]
        layer.tensors["u"] = polar_update(env, 2, [p] * 4, previous=layer.u)
    env = environments(layer, h, rho)["w"]
    layer.tensors["w"] = polar_update(env, 2, [p, p, layer.parity_out], previous=layer.w)


def _three_site(h):
    if isinstance(h, TwoSiteHamiltonian):
        return h.three_site().astype(complex)
    return np.asarray(h, dtype=complex)


def mera_energy(mera: Mera, h, tol: float = 1e-10, max_iter: int = 1000) -> EnergyReport:
    """Energy per site with the top density matrix converged to ``tol``."""
    mera.check()
    h0 = _three_site(h)
    rho, it, delta = fixed_point_density(mera.top, mera.rho_top, tol, max_iter)
    mera.rho_top = rho
    rho0 = densities(mera, rho)[0]
    e = float(np.real(op_trace(h0, rho0)))
    return EnergyReport(e, "mera", {"chi": mera.top.chi_out, "n_transitional": mera.n_transitional,
                                    "fixed_point_iterations": it})


@dataclass
class OptimizeResult:
    mera: Mera
    report: EnergyReport
    trace: list = field(default_factory=list)
    rolled_back: bool = False
    seconds: float = 0.0


def refresh_densities(mera: Mera, power_steps: int) -> list:
    """A few warm-started power steps for the top, then rho_s for every scale."""
    rho, _, _ = fixed_point_density(mera.top, mera.rho_top, tol=0.0, max_iter=power_steps,
                                    raise_on_fail=False)
    mera.rho_top = rho
    return densities(mera, rho)


def update_layers(mera: Mera, h0, rhos: list, update_u: bool = True, si_terms: int = 1):
    """One bottom-to-top pass of u and w updates for a negative semidefinite h0."""
    h_s = h0
    for s, layer in enumerate(mera.layers[:-1]):
        _update_layer(layer, h_s, rhos[s + 1], update_u)
        h_s = ascend(h_s, layer)
    top = mera.top
    h_bar = h_q = h_s
    for q in range(1, si_terms):
        h_q = ascend(h_q, top)
        h_bar = h_bar + h_q / 2**q
    _update_layer(top, h_bar, rhos[-1], update_u)


def optimize_mera(h, config: MeraConfig, mera: Mera | None = None, p_phys=None,
                  callback=None) -> OptimizeResult:
    """Variational energy minimisation of a scale-invariant binary MERA.

    Each sweep refreshes the top density matrix (a few warm-started power
    steps), descends it, then updates u and w layer by layer from the bottom,
    ascending the Hamiltonian as it goes. The Hamiltonian is shifted to be
    negative semidefinite; the shift is removed from all reported energies.
    The best state seen is kept; ``patience`` sweeps without improvement of
    more than 1e-8 roll back to it and stop.
    """
    t0 = time.time()
    h0 = _three_site(h)
    if p_phys is None:
        p_phys = parity_labels(h0.shape[0])
    if mera is None:
        mera = init_mera(p_phys, config)
    mera = mera.copy()
    mera.check()
    hs0, shift = _shift(h0)
    best, best_e, stale = mera.copy(), np.inf, 0
    trace = []
    rolled_back = False
    for sweep in range(config.sweeps):
        rhos = refresh_densities(mera, config.power_steps)
        e = float(np.real(op_trace(hs0, rhos[0]))) + shift
        trace.append(e)
        if callback is not None:
            callback(sweep, e)
        if config.log_every and sweep % config.log_every == 0:
            print(f"sweep {sweep:5d}  e = {e:.10f}")
        if e < best_e - 1e-8:
            stale = 0
        else:
            stale += 1
        if e < best_e:
            best, best_e = mera.copy(), e
        if stale >= config.patience:
            rolled_back = True
            break
        if len(trace) > 20 and abs(trace[-20] - e) < config.tol * 20:
            break
        update_layers(mera, hs0, rhos, sweep >= config.u_start, config.si_terms)
    final = best if (rolled_back or (trace and trace[-1] > best_e)) else mera
    report = mera_energy(final, h0)
    report.metadata.update({"sweeps": len(trace), "shift": shift, "rolled_back": rolled_back})
    return OptimizeResult(final, report, trace, rolled_back, time.time() - t0)


# ---------------------------------------------------------------- scaling operators

def scaling_superoperator(layer: LayerSpec, twist: bool = False) -> LinearOperator:
    """(A_L + A_R)/2 on three-site operators, optionally with a parity string."""
    chi = layer.chi_out
    if layer.chi_in != chi:
        raise ChiMismatchError("scaling superoperator needs a chi-to-chi layer")
    n = chi**6

    def mv(x):
        op = x.reshape((chi,) * 6)
        out = 0.5 * (ascend_side(op, layer, "L", twist) + ascend_side(op, layer, "R", twist))
        return out.reshape(-1)

    return LinearOperator((n, n), matvec=mv, dtype=complex)


def operator_parity(op: np.ndarray, p: np.ndarray) -> int | None:
    """0 or 1 for a parity-definite three-site operator, None otherwise."""
    norm = np.linalg.norm(op)
    even = np.linalg.norm(project_parity(op, [p] * 6, 0))
    if abs(even - norm) < 1e-6 * norm:
        return 0
    if even < 1e-6 * norm:
        return 1
    return None


@dataclass
class ScalingOperator:
    delta: float
    eigenvalue: complex
    sector: str        # "local" or "twisted"
    parity: int | None


def scaling_operators(layer: LayerSpec, n_ops: int = 12, twisted: bool = True,
                      seed: int = 0) -> list:
    """Leading eigenvalues of the scaling superoperator(s), Delta = -log2|lambda|."""
    chi = layer.chi_out
    p = layer.parity_out
    rng = np.random.default_rng(seed)
    out = []
    sectors = [("local", False)] + ([("twisted", True)] if twisted else [])
    for name, tw in sectors:
        S = scaling_superoperator(layer, tw)
        k = min(n_ops, chi**6 - 2)
        v0 = rng.standard_normal(chi**6) + 0j
        vals, vecs = eigs(S, k=k, which="LM", v0=v0, tol=1e-10, ncv=min(chi**6 - 1, max(2 * k + 1, 30)))
        for lam, vec in zip(vals, vecs.T):
            par = operator_parity(vec.reshape((chi,) * 6), p)
            out.append(ScalingOperator(float(-np.log2(abs(lam))), complex(lam), name, par))
    out.sort(key=lambda s: s.delta)
    return out


def scaling_dimensions(layer: LayerSpec, n_ops: int = 12, twisted: bool = True) -> list:
    """Scaling dimensions sorted ascending (both sectors merged), n_ops entries."""
    return [s.delta for s in scaling_operators(layer, n_ops, twisted)][:n_ops]


# ---------------------------------------------------------------- entropies

def density_entropy(rho: np.ndarray) -> float:
    """von Neumann entropy in bits of a density matrix given as a tensor or matrix."""
    dim = int(round(np.sqrt(rho.size)))
    lam = np.linalg.eigvalsh(0.5 * (rho.reshape(dim, dim) + rho.reshape(dim, dim).conj().T))
    lam = lam[lam > 1e-14]
    return float(-np.sum(lam * np.log2(lam)))


def reduce_three_site(rho: np.ndarray, keep) -> np.ndarray:
    """Partial trace of a three-site density tensor onto the sites in ``keep``."""
    keep = list(keep)
    labels = list(range(6))
    for i in range(3):
        if i not in keep:
            labels[i + 3] = labels[i]
    out = [labels[i] for i in keep] + [labels[i + 3] for i in keep]
    return contract([rho], [labels], out)
