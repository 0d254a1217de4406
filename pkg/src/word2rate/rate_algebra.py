"""Rate-matrix algebra: constraint projection and context composition.

A word is parameterized by a d x d rate matrix Q, the generator of a
continuous-time Markov chain: off-diagonal entries are non-negative
transition rates and every column sums to zero, so exp(eps*Q) is a
column-stochastic matrix. An ordered word sequence is composed by acting
on an initial uniform distribution p with truncations of the product of
per-word matrix exponentials exp(eps*Q_k) ... exp(eps*Q_1), where the
first word's factor sits rightmost and is applied first:

* ``compose_fos`` truncates the whole product at first order overall,
  (I + eps * sum_i Q_i) p. Additive, so word order is irrelevant.
* ``compose_fop`` truncates each factor at first order and keeps the
  product, (I + eps*Q_k) ... (I + eps*Q_1) p. Order-sensitive; expanding
  the product yields 2^k terms.
* ``compose_sos`` keeps every term of the expansion up to second order:
  the linear terms, the ordered bilinear cross terms eps^2 * Q_j Q_i for
  i before j, and the self-squares eps^2/2 * Q_i^2.

Because the all-ones row vector annihilates any rate matrix (and hence
any product of rate matrices), each of these compositions conserves the
entry sum of p.

``expand_fop_bruteforce`` evaluates the 2^k-term expansion of the
first-order product literally; it exists as an independent oracle for
the fast left-to-right evaluation in ``compose_fop``.
"""

from __future__ import annotations

import math
from collections.abc import Sequence

import numpy as np


def uniform_distribution(d: int) -> np.ndarray:
    """The length-d probability vector with every entry 1/d."""
    if d < 1:
        raise ValueError("dimension must be >= 1")
    return np.full(d, 1.0 / d)


def _clamp_offdiag_fix_diag(q: np.ndarray) -> np.ndarray:
    """Shared projection core; accepts a single matrix or a stack."""
    d = q.shape[-1]
    out = np.maximum(q, 0.0)
    idx = np.arange(d)
    out[..., idx, idx] = 0.0
    out[..., idx, idx] = 0.0 - out.sum(axis=-2)
    return out


def project_rate_matrix(q: np.ndarray) -> np.ndarray:
    """Project a square matrix onto the rate-matrix constraint set.

    Off-diagonal entries are clamped to max(entry, 0), then each diagonal
    entry is set to minus the sum of its column's off-diagonals, so the
    result has non-negative off-diagonals and exactly repaired column
    sums. Valid rate matrices are fixed points.
    """
    q = np.asarray(q, dtype=np.float64)
    if q.ndim != 2 or q.shape[0] != q.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {q.shape}")
    if not np.all(np.isfinite(q)):
        raise ValueError("rate matrix projection requires finite entries")
    return _clamp_offdiag_fix_diag(q)


def project_rate_matrices(qs: np.ndarray) -> np.ndarray:
    """Vectorized projection over a (..., d, d) stack of matrices."""
    return _clamp_offdiag_fix_diag(np.asarray(qs, dtype=np.float64))


def is_valid_rate_matrix(q: np.ndarray, tol: float = 1e-12) -> bool:
    """True when off-diagonals are >= 0 and column sums vanish within tol."""
    q = np.asarray(q, dtype=np.float64)
    d = q.shape[-1]
    off = q.copy()
    idx = np.arange(d)
    off[..., idx, idx] = 0.0
    return bool(np.all(off >= 0.0) and np.all(np.abs(q.sum(axis=-2)) <= tol))


def random_rate_matrices(
    count: int, d: int, rng: np.random.Generator, scale: float | None = None
) -> np.ndarray:
    """Draw `count` random valid rate matrices of size d x d.

    Off-diagonals are |Normal(0, scale)| with scale defaulting to 0.1/d,
    and diagonals are then fixed by projection.
    """
    if scale is None:
        scale = 0.1 / d
    draws = np.abs(rng.normal(0.0, scale, size=(count, d, d)))
    return _clamp_offdiag_fix_diag(draws)


def _check_sequence(qs: Sequence[np.ndarray], d: int) -> None:
    for q in qs:
        if q.shape != (d, d):
            raise ValueError(f"dimension mismatch: expected {(d, d)}, got {q.shape}")


def _exact_sum(vectors: Sequence[np.ndarray], d: int) -> np.ndarray:
    # fsum is exactly rounded, so the reduction is bitwise independent of
    # the order of the addends.
    return np.array([math.fsum(v[i] for v in vectors) for i in range(d)])


def compose_fos(qs: Sequence[np.ndarray], eps: float, p: np.ndarray) -> np.ndarray:
    """First-order series composition (I + eps * sum_i Q_i) p.

    The per-word contributions Q_i p are reduced with an exactly rounded
    sum, making the output bitwise invariant under any permutation of the
    input list.
    """
    p = np.asarray(p, dtype=np.float64)
    if not qs:
        return p.copy()
    _check_sequence(qs, p.shape[0])
    contribs = [q @ p for q in qs]
    return p + eps * _exact_sum(contribs, p.shape[0])


def compose_fop(qs: Sequence[np.ndarray], eps: float, p: np.ndarray) -> np.ndarray:
    """First-order product composition (I + eps*Q_k) ... (I + eps*Q_1) p.

    The first entry of `qs` is the first word of the sequence and its
    factor is applied first.
    """
    p = np.asarray(p, dtype=np.float64)
    _check_sequence(qs, p.shape[0])
    v = p.copy()
    for q in qs:
        v = v + eps * (q @ v)
    return v


def compose_sos(qs: Sequence[np.ndarray], eps: float, p: np.ndarray) -> np.ndarray:
    """Second-order series composition.

    Evaluates (I + eps*sum_i Q_i + eps^2 * sum_{i<j} Q_j Q_i
    + eps^2/2 * sum_i Q_i^2) p, where i < j means word i precedes word j
    and the later word's matrix multiplies on the left.
    """
    p = np.asarray(p, dtype=np.float64)
    if not qs:
        return p.copy()
    d = p.shape[0]
    _check_sequence(qs, d)
    us = [q @ p for q in qs]
    linear = _exact_sum(us, d)
    cross = np.zeros(d)
    prefix = np.zeros(d)
    for j, q in enumerate(qs):
        if j:
            cross += q @ prefix
        prefix += us[j]
    selfsq = np.zeros(d)
    for q, u in zip(qs, us):
        selfsq += q @ u
    return p + eps * linear + eps * eps * cross + 0.5 * eps * eps * selfsq


def compose_cbow(vs: Sequence[np.ndarray], dim: int | None = None) -> np.ndarray:
    """Elementwise sum of word vectors (exactly permutation invariant).

    `dim` is only needed for an empty list, where the sum is the zero
    vector of that dimension.
    """
    if not vs:
        if dim is None:
            raise ValueError("empty input needs an explicit dimension")
        return np.zeros(dim)
    d = vs[0].shape[0]
    for v in vs:
        if v.shape != (d,):
            raise ValueError(f"dimension mismatch: expected {(d,)}, got {v.shape}")
    return _exact_sum(vs, d)


def compose_cmow(ms: Sequence[np.ndarray], side: int | None = None) -> np.ndarray:
    """Ordered matrix product M_k ... M_1, unrolled row-major to a vector.

    The first word's matrix is the rightmost factor. An empty list is the
    identity and requires `side`.
    """
    if not ms:
        if side is None:
            raise ValueError("empty input needs an explicit matrix side")
        return np.eye(side).reshape(-1)
    s = ms[0].shape[0]
    for m in ms:
        if m.shape != (s, s):
            raise ValueError(f"dimension mismatch: expected {(s, s)}, got {m.shape}")
    prod = ms[0]
    for m in ms[1:]:
        prod = m @ prod
    return prod.reshape(-1)


def compose_hybrid(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Concatenation [a; b] of two component embeddings."""
    return np.concatenate([np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)])


def expand_fop_bruteforce(
    qs: Sequence[np.ndarray], eps: float, p: np.ndarray
) -> np.ndarray:
    """Literal 2^k-term expansion of the first-order product.

    Sums, over every subset T of sequence positions, eps^|T| times the
    product of the selected matrices in descending position order applied
    to p. Exponential in the sequence length; refuses more than 12 words.
    """
    if len(qs) > 12:
        raise ValueError("sequence too long for brute-force expansion (max 12)")
    p = np.asarray(p, dtype=np.float64)
    _check_sequence(qs, p.shape[0])
    total = np.zeros_like(p)
    for mask in range(1 << len(qs)):
        v = p.copy()
        weight = 1.0
        # ascending position order applies earlier words first, which
        # stacks later words on the left as required
        for t in range(len(qs)):
            if (mask >> t) & 1:
                v = qs[t] @ v
                weight *= eps
        total += weight * v
    return total
