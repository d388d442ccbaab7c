"""Exact free-fermion results for the XX and transverse-field Ising chains.

Thermodynamic-limit energies come from adaptive quadrature over the
Brillouin zone. Block entropies use the ground-state correlation matrix of
an infinite chain (complex fermions for XX, Majorana covariance for Ising).
Entropies are in bits.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.integrate import quad

from .exact_decoupler import QuadraticMajoranaHamiltonian
from .spin_models import TwoSiteHamiltonian

MAX_BLOCK = 2**14


# ---------------------------------------------------------------- energies

def xx_fermi_momentum(mu: float) -> float:
    """Occupied modes satisfy 4 cos k < mu, i.e. k in (k_F, 2 pi - k_F)."""
    return float(np.arccos(np.clip(mu / 4.0, -1.0, 1.0)))


def xx_energy_per_site(mu: float) -> float:
    """Ground energy per site of sum X X + Y Y + (mu/2) Z.

    Jordan-Wigner gives e(k) = 4 cos k - mu for the mode occupation plus a
    constant mu/2 per site.
    """
    kf = xx_fermi_momentum(mu)
    # kf = 0 fills the whole band (mu >= 4), kf = pi leaves it empty (mu <= -4)
    band, _ = quad(lambda k: 4.0 * np.cos(k) - mu, kf, 2 * np.pi - kf, epsabs=1e-13, epsrel=1e-13)
    return 0.5 * mu + band / (2 * np.pi)


def xx_filling(mu: float) -> float:
    """Fermion density <n> with n = (1 - Z)/2."""
    return 1.0 - xx_fermi_momentum(mu) / np.pi


def ising_energy_per_site(g: float = 1.0) -> float:
    """Ground energy per site of sum X X + g Z (Bogoliubov spectrum integral)."""
    val, _ = quad(lambda k: np.sqrt(1.0 + g * g - 2.0 * g * np.cos(k)), 0.0, np.pi,
                  epsabs=1e-13, epsrel=1e-13)
    return -val / np.pi


# ---------------------------------------------------------------- finite chains

def xx_majorana(n_sites: int, mu: float = 0.0) -> QuadraticMajoranaHamiltonian:
    """Open XX chain as a Majorana quadratic form."""
    A = np.zeros((2 * n_sites, 2 * n_sites))

    def add(m, k, coef):  # term i*coef*g_m g_k
        A[m, k] += coef / 2
        A[k, m] -= coef / 2

    for r in range(n_sites):
        add(2 * r, 2 * r + 1, -mu / 2)
        if r + 1 < n_sites:
            add(2 * r, 2 * r + 3, 1.0)
            add(2 * r + 1, 2 * r + 2, -1.0)
    return QuadraticMajoranaHamiltonian(A)


def ising_majorana(n_sites: int, g: float = 1.0) -> QuadraticMajoranaHamiltonian:
    """Open transverse-field Ising chain as a Majorana quadratic form."""
    A = np.zeros((2 * n_sites, 2 * n_sites))
    for r in range(n_sites):
        A[2 * r, 2 * r + 1] -= g / 2
        A[2 * r + 1, 2 * r] += g / 2
        if r + 1 < n_sites:
            A[2 * r + 1, 2 * r + 2] -= 0.5
            A[2 * r + 2, 2 * r + 1] += 0.5
    return QuadraticMajoranaHamiltonian(A)


def many_body_spectrum(hq: QuadraticMajoranaHamiltonian) -> np.ndarray:
    """All 2^N many-body energies, sorted (small N only)."""
    lam = np.linalg.eigvalsh(1j * hq.A)
    lam = np.sort(lam[lam > 0])
    lam = np.concatenate([lam, np.zeros(hq.n_modes - lam.size)])
    e0 = -2.0 * lam.sum()
    levels = [e0 + 4.0 * sum(c) for r in range(lam.size + 1) for c in itertools.combinations(lam, r)]
    return np.sort(levels)


# ---------------------------------------------------------------- correlations

def xx_correlation_matrix(mu: float, L: int) -> np.ndarray:
    """C_rs = <f_r^dag f_s> on an L-site block of the infinite XX chain."""
    kf = xx_fermi_momentum(mu)
    d = np.arange(L)
    dist = d[:, None] - d[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        C = -np.sin(kf * dist) / (np.pi * dist)
    C[dist == 0] = 1.0 - kf / np.pi
    return C


def _ising_offdiag(g: float, n: int) -> np.ndarray:
    """b_delta for delta = -n..n with <c_0 d_delta> = i*b_delta type covariance."""
    deltas = np.arange(-n, n + 1)
    if g == 1.0:
        return -2.0 / (np.pi * (2 * deltas + 1))
    out = np.empty(deltas.size)
    for i, dl in enumerate(deltas):
        # symbol: (e^{-ik} - g)/|e^{-ik} - g|; imaginary unit factored out
        def re(k):
            z = np.exp(-1j * k) - g
            return np.real(z / abs(z) * np.exp(-1j * k * dl))
        val, _ = quad(re, -np.pi, np.pi, limit=400, epsabs=1e-12)
        out[i] = val / (2 * np.pi)
    return out


def ising_covariance(L: int, g: float = 1.0) -> np.ndarray:
    """Ground-state Majorana covariance S (<g_m g_n> = delta + S) on L sites."""
    b = _ising_offdiag(g, L)
    S = np.zeros((2 * L, 2 * L), dtype=complex)
    for r in range(L):
        for s in range(L):
            val = 1j * b[(s - r) + L]
            S[2 * r, 2 * s + 1] = val
            S[2 * s + 1, 2 * r] = np.conj(val)
    return S


def _h2(p: np.ndarray) -> np.ndarray:
    p = np.clip(p, 0.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = -p * np.log2(p) - (1 - p) * np.log2(1 - p)
    return np.nan_to_num(t)


def entropy_from_correlations(C: np.ndarray) -> float:
    nu = np.linalg.eigvalsh(C)
    if nu.min() < -1e-10 or nu.max() > 1 + 1e-10:
        raise ValueError("correlation matrix eigenvalues outside [0, 1]")
    return float(np.sum(_h2(nu)))


def entropy_from_covariance(S: np.ndarray) -> float:
    nu = np.linalg.eigvalsh(S)
    return float(0.5 * np.sum(_h2((1.0 + nu) / 2.0)))


def block_entropy(model: TwoSiteHamiltonian | str, L: int, mu: float = 0.0, g: float = 1.0) -> float:
    """Entanglement entropy (bits) of L contiguous sites of the infinite chain."""
    if L < 1 or L > MAX_BLOCK:
        raise ValueError(f"block length must be in [1, {MAX_BLOCK}]")
    name = model if isinstance(model, str) else model.name
    if isinstance(model, TwoSiteHamiltonian):
        mu = model.params.get("mu", mu)
        g = model.params.get("g", g)
    if name == "xx":
        return entropy_from_correlations(xx_correlation_matrix(mu, L))
    if name == "ising":
        return entropy_from_covariance(ising_covariance(L, g))
    raise ValueError(f"no free-fermion solution for model {name!r}")


@dataclass
class EntropyProfile:
    L: np.ndarray
    S: np.ndarray

    def __post_init__(self):
        self.L = np.asarray(self.L, dtype=float)
        self.S = np.asarray(self.S, dtype=float)
        if self.L.shape != self.S.shape:
            raise ValueError("L and S must have the same length")
        if np.any(self.S < -1e-12):
            raise ValueError("entropies must be non-negative")


def entropy_profile(model, Ls, **kw) -> EntropyProfile:
    Ls = list(Ls)
    return EntropyProfile(Ls, [block_entropy(model, int(L), **kw) for L in Ls])


def fit_central_charge(profile: EntropyProfile) -> float:
    """Least-squares c in S_L = (c/3) log2 L + const."""
    L = profile.L
    if L.size < 4:
        raise ValueError("need at least 4 block sizes")
    if np.ptp(L) == 0 or L.max() / L.min() < 4:
        raise ValueError("block sizes must span at least two octaves")
    X = np.column_stack([np.log2(L) / 3.0, np.ones_like(L)])
    coef, *_ = np.linalg.lstsq(X, profile.S, rcond=None)
    return float(coef[0])
