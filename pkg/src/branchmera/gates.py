"""Two-site gates, bosonic/fermionic swaps and the decoupling circuit on finite chains.

Gates are stored in the state-side convention used throughout the package:
a circuit ``V = G_1 G_2 ... G_k`` maps the decoupled state to the physical
one, and Hamiltonians transform as ``H' = V^dagger H V``, i.e. ``G_1`` is
the first gate conjugated into ``H``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
import scipy.sparse as sps

from .spin_models import SPIN_PARITY, SizeLimitError, TwoSiteHamiltonian

DENSE_MAX_QUBITS = 12


@dataclass(frozen=True)
class SwapGate:
    kind: Literal["bosonic", "fermionic"]
    site_dim: int = 2
    parity: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("bosonic", "fermionic"):
            raise ValueError(f"unknown swap kind {self.kind!r}")
        if self.kind == "fermionic":
            if self.parity is None or len(self.parity) != self.site_dim:
                raise ValueError("fermionic swaps need a parity label for every basis state")


def swap_matrix(g: SwapGate) -> np.ndarray:
    """(d^2, d^2) matrix of swap: |i>|j> -> (-1)^f(i,j) |j>|i>.

    f(i,j) = 1 only for fermionic swaps of two odd basis states.
    """
    d = g.site_dim
    m = np.zeros((d * d, d * d))
    for i in range(d):
        for j in range(d):
            sign = -1.0 if (g.kind == "fermionic" and g.parity[i] % 2 and g.parity[j] % 2) else 1.0
            m[j * d + i, i * d + j] = sign
    return m


def fermionic_swap(d: int = 2, parity=SPIN_PARITY) -> np.ndarray:
    return swap_matrix(SwapGate("fermionic", d, np.asarray(parity)))


@dataclass(frozen=True)
class Gate:
    sites: tuple[int, int]
    matrix: np.ndarray
    label: str = ""
    swap: SwapGate | None = None


@dataclass
class DecouplerSpec:
    """Gates of one decoupling layer on a finite chain.

    ``u`` acts on cell-internal pairs (2j, 2j+1) and ``v`` on cell-boundary
    pairs (2j+1, 2j+2); lists give one gate per pair, a single matrix is
    reused. The swap network then sorts the A sites (even positions) to the
    left and the B sites (odd positions) to the right.
    """

    u: np.ndarray | Sequence[np.ndarray]
    v: np.ndarray | Sequence[np.ndarray] | None = None
    swap: SwapGate = field(default_factory=lambda: SwapGate("fermionic", 2, SPIN_PARITY))
    block_size: int = 2

    @property
    def site_dim(self) -> int:
        return self.swap.site_dim


def _pick(gates, k):
    if gates is None:
        return None
    if isinstance(gates, np.ndarray) and gates.ndim == 2:
        return gates
    return gates[k]


def routing_network(n_sites: int, block_size: int = 2) -> list[tuple[int, int]]:
    """Odd-even transposition sort moving every A site (first of each cell) left.

    Returns the adjacent transpositions in application order.
    """
    if block_size != 2:
        raise ValueError("only two-site cells (one A and one B site) are supported")
    is_a = [k % 2 == 0 for k in range(n_sites)]
    n_a = sum(is_a)
    order: list[tuple[int, int]] = []
    start = 0
    while not all(is_a[:n_a]):
        for i in range(start, n_sites - 1, 2):
            if not is_a[i] and is_a[i + 1]:
                is_a[i], is_a[i + 1] = True, False
                order.append((i, i + 1))
        start = 1 - start
    return order


def compose_decoupler(spec: DecouplerSpec, n_sites: int) -> list[Gate]:
    """Ordered gate list implementing V on an open chain of ``n_sites``."""
    if n_sites % spec.block_size:
        raise ValueError(f"n_sites={n_sites} is not divisible by block_size={spec.block_size}")
    gates = []
    for k, j in enumerate(range(0, n_sites - 1, 2)):
        gates.append(Gate((j, j + 1), np.asarray(_pick(spec.u, k)), "u"))
    if spec.v is not None:
        for k, j in enumerate(range(1, n_sites - 1, 2)):
            gates.append(Gate((j, j + 1), np.asarray(_pick(spec.v, k)), "v"))
    sm = swap_matrix(spec.swap)
    for pair in routing_network(n_sites, spec.block_size):
        gates.append(Gate(pair, sm, "swap", spec.swap))
    return gates


def sublattice_order(n_sites: int) -> list[int]:
    """Original site index sitting at each position after the swap network."""
    return list(range(0, n_sites, 2)) + list(range(1, n_sites, 2))


def _swap_signs(g: SwapGate, d: int) -> np.ndarray:
    if g.kind == "bosonic":
        return np.ones((d, d))
    p = np.asarray(g.parity) % 2
    return np.where(np.outer(p, p) == 1, -1.0, 1.0)


def _check_dense(n_sites: int, d: int):
    if n_sites * np.log2(d) > DENSE_MAX_QUBITS + 1e-9:
        raise SizeLimitError(f"dense conjugation limited to {DENSE_MAX_QUBITS} qubit-equivalents")


def apply_to_operator(H: np.ndarray, gates: Sequence[Gate], n_sites: int, d: int) -> np.ndarray:
    """V^dagger H V for the gate sequence (dense)."""
    _check_dense(n_sites, d)
    T = np.asarray(H, dtype=complex).reshape((d,) * (2 * n_sites))
    n = n_sites
    for g in gates:
        i, j = g.sites
        if g.swap is not None:
            # signed permutation: (G^dag H G)[x, y] = s(x) s(y) H[sigma x, sigma y]
            axes = list(range(2 * n))
            axes[i], axes[j] = axes[j], axes[i]
            axes[n + i], axes[n + j] = axes[n + j], axes[n + i]
            T = np.transpose(T, axes)
            s = _swap_signs(g.swap, d)
            shape_k = [1] * (2 * n)
            shape_k[i], shape_k[j] = d, d
            shape_b = [1] * (2 * n)
            shape_b[n + i], shape_b[n + j] = d, d
            T = T * s.reshape(shape_k) * s.reshape(shape_b)
            continue
        G = np.asarray(g.matrix, dtype=complex)
        if np.allclose(G, np.eye(d * d), atol=0):
            continue
        G4 = G.reshape(d, d, d, d)
        # H G on ket legs (column indices n+i, n+j)
        T = np.tensordot(T, G4, axes=([n + i, n + j], [0, 1]))
        T = np.moveaxis(T, [-2, -1], [n + i, n + j])
        # G^dag H on bra legs
        T = np.tensordot(G4.conj(), T, axes=([0, 1], [i, j]))
        T = np.moveaxis(T, [0, 1], [i, j])
    return T.reshape(d**n, d**n)


def apply_to_state(psi: np.ndarray, gates: Sequence[Gate], n_sites: int, d: int) -> np.ndarray:
    """V^dagger |psi> for the gate sequence."""
    T = np.asarray(psi, dtype=complex).reshape((d,) * n_sites)
    for g in gates:
        i, j = g.sites
        G4 = np.asarray(g.matrix, dtype=complex).reshape(d, d, d, d)
        T = np.tensordot(G4.conj(), T, axes=([0, 1], [i, j]))
        T = np.moveaxis(T, [0, 1], [i, j])
    return T.reshape(-1)


def dense_unitary(gates: Sequence[Gate], n_sites: int, d: int) -> np.ndarray:
    """Dense matrix of V = G_1 G_2 ... G_k (small chains only)."""
    _check_dense(n_sites, d)
    dim = d**n_sites
    # V^dagger applied to each basis vector gives the columns of V^dagger
    vd = np.stack([apply_to_state(e, gates, n_sites, d) for e in np.eye(dim)], axis=1)
    return vd.conj().T


def conjugate_hamiltonian(gates: Sequence[Gate], h: TwoSiteHamiltonian | np.ndarray, n_sites: int,
                          boundary: str = "open") -> np.ndarray:
    """Dense V^dagger H V on ``n_sites``."""
    if isinstance(h, TwoSiteHamiltonian):
        d = h.site_dim
        _check_dense(n_sites, d)
        H = h.dense(n_sites, boundary)
    else:
        H = np.asarray(h)
        d = int(round(H.shape[0] ** (1.0 / n_sites)))
    return apply_to_operator(H, gates, n_sites, d)


def local_terms(h: TwoSiteHamiltonian, n_sites: int, boundary: str = "open") -> list:
    """(sites, matrix) pairs whose sum is the chain Hamiltonian."""
    terms = [((r,), np.asarray(h.one_site, dtype=complex)) for r in range(n_sites)]
    bonds = [(r, r + 1) for r in range(n_sites - 1)]
    if boundary == "periodic" and n_sites > 2:
        bonds.append((n_sites - 1, 0))
    terms += [(b, np.asarray(h.two_site, dtype=complex)) for b in bonds]
    return terms


def _local_op(support: list, op: np.ndarray, new_sites, d: int):
    """Extend a local operator by identities on ``new_sites``; support kept sorted."""
    sites = sorted(set(support) | set(new_sites))
    k = len(support)
    T = op.reshape((d,) * (2 * k))
    for s in sites:
        if s not in support:
            T = np.multiply.outer(T, np.eye(d))
    cur = list(support) + [s for s in sites if s not in support]
    m = len(cur)
    order = [cur.index(s) for s in sites]
    # outer products appended (bra, ket) pairs at the end
    bra_axes = list(range(k)) + [2 * k + 2 * i for i in range(m - k)]
    ket_axes = list(range(k, 2 * k)) + [2 * k + 2 * i + 1 for i in range(m - k)]
    T = np.transpose(T, [bra_axes[i] for i in order] + [ket_axes[i] for i in order])
    return sites, T.reshape(d**m, d**m)


def conjugate_terms(terms, gates: Sequence[Gate], n_sites: int, d: int) -> np.ndarray:
    """Dense V^dagger (sum of local terms) V, conjugating each term only by the
    gates in its light cone. Swaps act as exact signed permutations."""
    _check_dense(n_sites, d)
    total = np.zeros((d**n_sites, d**n_sites), dtype=complex)
    for sites, op in terms:
        support = sorted(sites)
        if list(sites) != support:
            # reorder the term's legs into ascending site order
            k = len(sites)
            perm = [list(sites).index(s) for s in support]
            op = op.reshape((d,) * (2 * k)).transpose(perm + [k + p for p in perm]).reshape(d**k, d**k)
        for g in gates:
            if not set(g.sites) & set(support):
                continue
            support, op = _local_op(support, op, g.sites, d)
            gl = [Gate(tuple(support.index(s) for s in g.sites), g.matrix, g.label, g.swap)]
            op = apply_to_operator(op, gl, len(support), d)
        rest = [k for k in range(n_sites) if k not in support]
        basis = np.arange(d**n_sites).reshape((d,) * n_sites).transpose(support + rest).reshape(-1)
        m = sps.kron(sps.csr_matrix(op), sps.identity(d ** len(rest)), format="coo")
        np.add.at(total, (basis[m.row], basis[m.col]), m.data)
    return total


def block_terms(H: np.ndarray, sites_a: Sequence[int], n_sites: int, d: int):
    """Split H into (H_A, H_B, coupling) with H = H_A x 1 + 1 x H_B + coupling.

    The split is the Hilbert-Schmidt orthogonal one: H_A and H_B are
    normalised partial traces and the identity component is kept in H_A.
    Sites are reordered so that ``sites_a`` come first, in the given order.
    """
    sites_a = list(sites_a)
    sites_b = [k for k in range(n_sites) if k not in sites_a]
    perm = sites_a + sites_b
    na, nb = len(sites_a), len(sites_b)
    da, db = d**na, d**nb
    T = np.asarray(H).reshape((d,) * (2 * n_sites))
    T = np.transpose(T, perm + [n_sites + k for k in perm]).reshape(da, db, da, db)
    ha = np.einsum("ibjb->ij", T) / db
    hb = np.einsum("aiaj->ij", T) / da
    const = np.trace(ha) / da
    hb = hb - const * np.eye(db)
    full = T.reshape(da * db, da * db)
    coupling = full - np.kron(ha, np.eye(db)) - np.kron(np.eye(da), hb)
    return ha, hb, coupling


def cross_coupling_residual(H: np.ndarray, sites_a: Sequence[int], n_sites: int, d: int = 2) -> float:
    """Frobenius norm of the part of H that couples sublattice A to its complement."""
    return float(np.linalg.norm(block_terms(H, sites_a, n_sites, d)[2]))
