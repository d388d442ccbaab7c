"""Translation-invariant spin-chain Hamiltonians and a brute-force ground-state oracle."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import scipy.sparse as sps
from scipy.sparse.linalg import eigsh

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)

#: |0> is parity-even, |1> (spin down, occupied fermion mode) is parity-odd
SPIN_PARITY = np.array([0, 1])

MAX_QUBITS = 16
_DENSE_LIMIT = 4096


class SizeLimitError(ValueError):
    """Raised when a dense/brute-force request exceeds the supported size."""


@dataclass(frozen=True)
class TwoSiteHamiltonian:
    """H = sum_r two_site(r, r+1) + one_site(r).

    ``two_site`` is a (d^2, d^2) matrix in row-major (left site, right site)
    order and ``one_site`` a (d, d) matrix.
    """

    site_dim: int
    two_site: np.ndarray
    one_site: np.ndarray
    boundary: Literal["periodic", "infinite"] = "infinite"
    name: str = ""
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        d = self.site_dim
        if self.two_site.shape != (d * d, d * d) or self.one_site.shape != (d, d):
            raise ValueError("term shapes do not match site_dim")
        for term in (self.two_site, self.one_site):
            if not np.allclose(term, term.conj().T, atol=1e-12):
                raise ValueError("Hamiltonian terms must be Hermitian")

    def bond(self) -> np.ndarray:
        """Two-site term with the one-site field split evenly over the bond."""
        d = self.site_dim
        eye = np.eye(d)
        return self.two_site + 0.5 * (np.kron(self.one_site, eye) + np.kron(eye, self.one_site))

    def three_site(self) -> np.ndarray:
        """Three-site term h3 with sum_r h3(r, r+1, r+2) = H, as a (d,)*6 tensor."""
        d = self.site_dim
        b = self.bond()
        eye = np.eye(d)
        h3 = 0.5 * (np.kron(b, eye) + np.kron(eye, b))
        return h3.reshape((d,) * 6)

    def sparse(self, n_sites: int, boundary: str = "periodic") -> sps.csr_matrix:
        d = self.site_dim
        if n_sites * np.log2(d) > MAX_QUBITS + 1e-9:
            raise SizeLimitError(f"{n_sites} sites of dimension {d} exceed {MAX_QUBITS} qubits")
        if boundary not in ("periodic", "open"):
            raise ValueError("boundary must be 'periodic' or 'open'")
        dim = d**n_sites
        H = sps.csr_matrix((dim, dim), dtype=complex)
        one = sps.csr_matrix(self.one_site)
        two = sps.csr_matrix(self.two_site)
        for r in range(n_sites):
            H = H + _embed(one, r, 1, n_sites, d)
        bonds = n_sites if (boundary == "periodic" and n_sites > 2) else n_sites - 1
        for r in range(bonds):
            if r + 1 < n_sites:
                H = H + _embed(two, r, 2, n_sites, d)
            else:
                H = H + _wrap_bond(self.two_site, n_sites, d)
        return H.tocsr()

    def dense(self, n_sites: int, boundary: str = "periodic") -> np.ndarray:
        return self.sparse(n_sites, boundary).toarray()


def _embed(op: sps.spmatrix, start: int, width: int, n: int, d: int) -> sps.spmatrix:
    left = sps.identity(d**start, format="csr")
    right = sps.identity(d ** (n - start - width), format="csr")
    return sps.kron(sps.kron(left, op), right, format="csr")


def _wrap_bond(two: np.ndarray, n: int, d: int) -> sps.spmatrix:
    # bond (n-1, 0): conjugate the (0, 1) embedding by a cyclic shift
    t = two.reshape(d, d, d, d)
    # operator sum_k A_k (x) B_k with A on site n-1 and B on site 0
    m = t.transpose(0, 2, 1, 3).reshape(d * d, d * d)
    u, s, vh = np.linalg.svd(m)
    H = sps.csr_matrix((d**n, d**n), dtype=complex)
    for k in np.flatnonzero(s > 1e-14):
        a = (u[:, k] * s[k]).reshape(d, d)
        b = vh[k].reshape(d, d)
        H = H + sps.kron(
            sps.kron(sps.csr_matrix(b), sps.identity(d ** (n - 2))), sps.csr_matrix(a), format="csr"
        )
    return H


def build_xx(mu: float = 0.0) -> TwoSiteHamiltonian:
    """XX chain: sum_r X_r X_{r+1} + Y_r Y_{r+1} + (mu/2) Z_r."""
    return TwoSiteHamiltonian(
        2, np.kron(X, X) + np.kron(Y, Y), 0.5 * mu * Z, name="xx", params={"mu": float(mu)}
    )


def build_ising(g: float = 1.0) -> TwoSiteHamiltonian:
    """Transverse-field Ising chain sum_r X_r X_{r+1} + g Z_r (critical at g=1)."""
    return TwoSiteHamiltonian(2, np.kron(X, X), g * Z, name="ising", params={"g": float(g)})


@dataclass
class EnergyReport:
    energy_per_site: float
    method: Literal["oracle", "brute_force", "mera"]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.isfinite(self.energy_per_site):
            raise ValueError("energy_per_site must be finite")

    def as_dict(self) -> dict:
        return {"energy_per_site": float(self.energy_per_site), "method": self.method, **self.metadata}


def brute_force_ground(h: TwoSiteHamiltonian, n_sites: int, boundary: str = "periodic"):
    """Lowest eigenpair of the n-site chain.

    Returns the ground energy (total, not per site) and the normalised
    ground state as a tensor with one leg per site. Matrices up to
    dimension 4096 are diagonalised densely, larger ones with Lanczos.
    """
    H = h.sparse(n_sites, boundary)
    if H.shape[0] <= _DENSE_LIMIT:
        vals, vecs = np.linalg.eigh(H.toarray())
        e, v = vals[0], vecs[:, 0]
    else:
        vals, vecs = eigsh(H, k=1, which="SA", tol=1e-13, maxiter=100000)
        e, v = vals[0], vecs[:, 0]
    v = v / np.linalg.norm(v)
    return float(np.real(e)), v.reshape((h.site_dim,) * n_sites)
