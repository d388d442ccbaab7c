"""Dense tensor algebra used by every other module.

Tensors are plain complex numpy arrays in row-major layout. Contractions are
specified ncon-style with one label list per tensor: a label that appears on
two legs is summed over, a label that appears once is an open leg of the
result. Execution is permute + matrix multiply (``np.tensordot``) along a
pairwise order chosen by opt_einsum's greedy path search.
"""
from __future__ import annotations

import string
import warnings
from collections import Counter
from functools import lru_cache
from typing import Hashable, Sequence

import numpy as np
import opt_einsum

__all__ = [
    "contract",
    "svd_split",
    "polar_update",
    "is_isometric",
    "parity_mask",
    "project_parity",
    "DegenerateEnvironmentError",
    "DegenerateEnvironmentWarning",
]


class DegenerateEnvironmentError(ValueError):
    pass


class DegenerateEnvironmentWarning(RuntimeWarning):
    pass


_LETTERS = string.ascii_letters


@lru_cache(maxsize=4096)
def _pairwise_path(subscripts: str, shapes: tuple) -> tuple:
    path, _ = opt_einsum.contract_path(subscripts, *shapes, shapes=True, optimize="greedy")
    return tuple(tuple(p) for p in path)


def _trace_self(t: np.ndarray, labels: list) -> tuple[np.ndarray, list]:
    counts = Counter(labels)
    if all(c == 1 for c in counts.values()):
        return t, labels
    keep = [l for l in labels if counts[l] == 1]
    chars = {l: _LETTERS[i] for i, l in enumerate(dict.fromkeys(labels))}
    spec = "".join(chars[l] for l in labels) + "->" + "".join(chars[l] for l in keep)
    return np.einsum(spec, t), keep


def _pair(a, la, b, lb):
    shared = [l for l in la if l in lb]
    ia = [la.index(l) for l in shared]
    ib = [lb.index(l) for l in shared]
    out = np.tensordot(a, b, axes=(ia, ib))
    labels = [l for l in la if l not in shared] + [l for l in lb if l not in shared]
    return out, labels


def contract(
    tensors: Sequence[np.ndarray],
    labels: Sequence[Sequence[Hashable]],
    out: Sequence[Hashable] | None = None,
) -> np.ndarray:
    """Contract a tensor network.

    Parameters
    ----------
    tensors : sequence of arrays
    labels : one label sequence per tensor, one label per leg.
    out : order of the open legs in the result. Defaults to the order in
        which open labels first appear.

    Raises
    ------
    ValueError
        on a label used more than twice, a paired label with mismatched
        dimensions, or an ``out`` list that does not match the open labels.
    """
    tensors = [np.asarray(t) for t in tensors]
    labels = [list(l) for l in labels]
    if len(tensors) != len(labels):
        raise ValueError("one label list per tensor is required")
    dims: dict = {}
    counts: Counter = Counter()
    for t, ls in zip(tensors, labels):
        if t.ndim != len(ls):
            raise ValueError(f"tensor of rank {t.ndim} given {len(ls)} labels")
        for d, l in zip(t.shape, ls):
            counts[l] += 1
            if l in dims and dims[l] != d:
                raise ValueError(f"dimension mismatch on label {l!r}: {dims[l]} vs {d}")
            dims[l] = d
    bad = [l for l, c in counts.items() if c > 2]
    if bad:
        raise ValueError(f"labels used more than twice: {bad}")
    free = [l for l in dict.fromkeys(l for ls in labels for l in ls) if counts[l] == 1]
    if out is None:
        out = free
    out = list(out)
    if sorted(map(repr, out)) != sorted(map(repr, free)) or len(set(out)) != len(out):
        raise ValueError(f"output labels {out} do not match open labels {free}")

    work = [_trace_self(t, ls) for t, ls in zip(tensors, labels)]
    if len(work) > 1:
        chars = {l: _LETTERS[i % len(_LETTERS)] for i, l in enumerate(dims)}
        if len(dims) <= len(_LETTERS):
            subs = ",".join("".join(chars[l] for l in ls) for _, ls in work)
            subs += "->" + "".join(chars[l] for l in out)
            path = _pairwise_path(subs, tuple(t.shape for t, _ in work))
        else:
            path = tuple((0, 1) for _ in range(len(work) - 1))
        for step in path:
            # a step may join more than two operands; fold them pairwise
            picked = [work[k] for k in sorted(step)]
            for k in sorted(step, reverse=True):
                work.pop(k)
            a, la = picked[0]
            for b, lb in picked[1:]:
                a, la = _pair(a, la, b, lb)
            work.append((a, la))
    result, res_labels = work[0]
    if res_labels != out:
        result = np.transpose(result, [res_labels.index(l) for l in out])
    return result


def _matricize(t: np.ndarray, left: Sequence[int]):
    left = list(left)
    right = [i for i in range(t.ndim) if i not in left]
    m = np.transpose(t, left + right)
    ldims = [t.shape[i] for i in left]
    rdims = [t.shape[i] for i in right]
    return m.reshape(int(np.prod(ldims)), int(np.prod(rdims))), ldims, rdims


def svd_split(t: np.ndarray, left: Sequence[int]):
    """Split ``t`` as U @ diag(S) @ V across the bipartition ``left | rest``.

    Returns U with legs ``left + [k]``, S (descending, length k) and V with
    legs ``[k] + rest``.
    """
    left = list(left)
    if not left or len(left) >= t.ndim or len(set(left)) != len(left):
        raise ValueError("left_indices must be a nonempty strict subset of the legs")
    m, ldims, rdims = _matricize(t, left)
    u, s, vh = np.linalg.svd(m, full_matrices=False)
    return u.reshape(*ldims, -1), s, vh.reshape(-1, *rdims)


def parity_mask(leg_parities: Sequence[np.ndarray], charge: int = 0) -> np.ndarray:
    """Boolean mask of entries whose summed leg parity equals ``charge`` mod 2."""
    total = np.zeros((), dtype=int)
    for p in leg_parities:
        total = np.add.outer(total, np.asarray(p, dtype=int))
    return (total % 2) == (charge % 2)


def project_parity(t: np.ndarray, leg_parities, charge: int = 0) -> np.ndarray:
    return np.where(parity_mask(leg_parities, charge), t, 0.0)


def _polar_block(e: np.ndarray) -> np.ndarray:
    u, _, vh = np.linalg.svd(e, full_matrices=False)
    return -(u @ vh)


def polar_update(
    env: np.ndarray,
    n_rows: int,
    leg_parities: Sequence[np.ndarray] | None = None,
    charge: int = 0,
    previous: np.ndarray | None = None,
) -> np.ndarray:
    """Isometry minimising ``Re tr(w^dagger E)``.

    The first ``n_rows`` legs of ``env`` form the (larger) row space and the
    remaining legs the column space; the result satisfies ``w^dagger w = 1``
    as a matrix over that split. With ``leg_parities`` the environment is
    projected onto the parity-``charge`` sector and the update is done block
    by block, so the result conserves Z2 parity.

    A vanishing environment leaves ``previous`` unchanged (with a
    ``DegenerateEnvironmentWarning``); without ``previous`` it raises.
    """
    env = np.asarray(env, dtype=complex)
    if leg_parities is not None:
        env = project_parity(env, leg_parities, charge)
    scale = np.linalg.norm(env)
    if scale == 0.0 or not np.isfinite(scale):
        if previous is None:
            raise DegenerateEnvironmentError("environment is identically zero")
        warnings.warn("zero environment; tensor left unchanged", DegenerateEnvironmentWarning)
        return previous.copy()
    m, ldims, rdims = _matricize(env, range(n_rows))
    if m.shape[0] < m.shape[1]:
        raise ValueError(f"cannot build an isometry from {m.shape[0]} rows to {m.shape[1]} columns")
    if leg_parities is None:
        w = _polar_block(m)
    else:
        prow = parity_mask(leg_parities[:n_rows], 1).reshape(-1)
        pcol = parity_mask(leg_parities[n_rows:], 1 + charge).reshape(-1)
        w = np.zeros_like(m)
        for p in (False, True):
            r = np.flatnonzero(prow == p)
            c = np.flatnonzero(pcol == p)
            if c.size == 0:
                continue
            if r.size < c.size:
                raise ValueError("parity sector too small for an isometry")
            block = m[np.ix_(r, c)]
            if np.linalg.norm(block) == 0.0:
                if previous is None:
                    raise DegenerateEnvironmentError("environment sector is identically zero")
                prev = previous.reshape(m.shape)
                w[np.ix_(r, c)] = prev[np.ix_(r, c)]
                warnings.warn("zero environment sector; block left unchanged", DegenerateEnvironmentWarning)
                continue
            w[np.ix_(r, c)] = _polar_block(block)
    return w.reshape(*ldims, *rdims)


def is_isometric(t: np.ndarray, n_rows: int, tol: float = 1e-12) -> bool:
    """True when ``t`` matricised as (first n_rows legs) x (rest) has orthonormal columns."""
    m, _, _ = _matricize(t, range(n_rows))
    return bool(np.allclose(m.conj().T @ m, np.eye(m.shape[1]), atol=tol, rtol=0))
