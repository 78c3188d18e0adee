"""Index bookkeeping for operators on tensor products of unequal-sized legs.

Everything works on dense complex matrices over the row-major product basis
|x_0 ... x_{k-1}>, leg j running over range(dims[j]).
"""

from __future__ import annotations

import functools
import math

import numpy as np

from .errors import InputError


def kron_all(mats) -> np.ndarray:
    return functools.reduce(np.kron, mats, np.eye(1, dtype=complex))


def _digit_table(dims) -> np.ndarray:
    n = math.prod(dims)
    return np.array(np.unravel_index(np.arange(n), dims))  # (k, n)


def _block_index(dims, positions, digits) -> np.ndarray:
    if not positions:
        return np.zeros(digits.shape[1], dtype=int)
    sub = [dims[p] for p in positions]
    return np.ravel_multi_index([digits[p] for p in positions], sub)


def embed(mat: np.ndarray, positions, dims) -> np.ndarray:
    """Extend ``mat`` acting on the legs at ``positions`` by identity elsewhere.

    ``positions`` must be strictly increasing leg indices; ``mat`` acts on
    their tensor product in that order.
    """
    positions = tuple(positions)
    if list(positions) != sorted(set(positions)):
        raise InputError("positions must be strictly increasing")
    k = len(dims)
    if any(p < 0 or p >= k for p in positions):
        raise InputError("leg position out of range")
    d_s = math.prod(dims[p] for p in positions)
    if mat.shape != (d_s, d_s):
        raise InputError(f"matrix shape {mat.shape} does not match legs of size {d_s}")
    n = math.prod(dims)
    rest = [i for i in range(k) if i not in positions]
    d_r = n // d_s
    big = np.kron(np.asarray(mat, dtype=complex), np.eye(d_r, dtype=complex))
    digits = _digit_table(dims)
    perm = _block_index(dims, positions, digits) * d_r + _block_index(dims, rest, digits)
    return big[np.ix_(perm, perm)]


def transpose_legs(mat: np.ndarray, dims, order) -> np.ndarray:
    """Reorder the legs of ``mat`` so that new leg j is old leg order[j]."""
    k = len(dims)
    if sorted(order) != list(range(k)):
        raise InputError("order must be a permutation of the legs")
    n = math.prod(dims)
    m = np.asarray(mat, dtype=complex).reshape(tuple(dims) * 2)
    axes = tuple(order) + tuple(k + p for p in order)
    return np.ascontiguousarray(m.transpose(axes).reshape(n, n))


def conjugate_on_legs(mat: np.ndarray, dims, positions, u: np.ndarray) -> np.ndarray:
    """u mat u* with ``u`` acting on the legs at ``positions`` (in u's leg
    order, not necessarily sorted), without forming the embedded unitary."""
    positions = tuple(positions)
    k = len(dims)
    if len(set(positions)) != len(positions):
        raise InputError("two legs were mapped to the same slot")
    if any(p < 0 or p >= k for p in positions):
        raise InputError("leg position out of range")
    rest = [i for i in range(k) if i not in set(positions)]
    kdim = math.prod(dims[p] for p in positions)
    rdim = math.prod(dims[p] for p in rest)
    u = np.asarray(u, dtype=complex)
    if u.shape != (kdim, kdim):
        raise InputError(f"unitary shape {u.shape} does not match legs of size {kdim}")
    digits = _digit_table(dims)
    perm = _block_index(dims, positions, digits) * rdim + _block_index(dims, rest, digits)
    iperm = np.argsort(perm)
    m = np.asarray(mat, dtype=complex)[np.ix_(iperm, iperm)]
    n = kdim * rdim
    m = (u @ m.reshape(kdim, -1)).reshape(n, kdim, rdim)
    m = (m.transpose(0, 2, 1) @ u.conj().T).transpose(0, 2, 1).reshape(n, n)
    return m[np.ix_(perm, perm)]


def extract_on_legs(mat: np.ndarray, dims, positions) -> np.ndarray:
    """The small factor of ``mat = small (x) identity`` on the legs at
    ``positions`` (in that order); callers must know the factorization holds."""
    positions = tuple(positions)
    k = len(dims)
    rest = [i for i in range(k) if i not in set(positions)]
    kdim = math.prod(dims[p] for p in positions)
    rdim = math.prod(dims[p] for p in rest)
    digits = _digit_table(dims)
    perm = _block_index(dims, positions, digits) * rdim + _block_index(dims, rest, digits)
    iperm = np.argsort(perm)
    m = np.asarray(mat, dtype=complex)[np.ix_(iperm, iperm)]
    return np.ascontiguousarray(m.reshape(kdim, rdim, kdim, rdim)[:, 0, :, 0])


def leg_permutation(dims, perm) -> np.ndarray:
    """Unitary P carrying old leg perm[j] onto new leg j.

    P |x_0 ... x_{k-1}> = |y_0 ... y_{k-1}> with y_j = x_{perm[j]}; the new leg
    dimensions are dims[perm[j]].
    """
    k = len(dims)
    if sorted(perm) != list(range(k)):
        raise InputError("perm must be a permutation of the legs")
    n = math.prod(dims)
    digits = _digit_table(dims)
    new_dims = [dims[p] for p in perm]
    h = np.ravel_multi_index([digits[p] for p in perm], new_dims)
    out = np.zeros((n, n), dtype=complex)
    out[h, np.arange(n)] = 1.0
    return out


def slice_components(mat: np.ndarray, dims, keep) -> np.ndarray:
    """Slices of ``mat`` over the legs outside ``keep``.

    Returns an array S of shape (R, R, K, K) with K the kept-leg product and R
    the rest; S[m, n] is the (m, n) block in the rest-basis, so that
    mat = sum_{m,n} S[m, n] (x) |m><n| after sorting legs to (keep, rest).
    Slices compose like matrix entries: S(gh)[m,n] = sum_l S(g)[m,l] S(h)[l,n].
    """
    keep = tuple(keep)
    if list(keep) != sorted(set(keep)):
        raise InputError("keep must be strictly increasing")
    k = len(dims)
    rest = [i for i in range(k) if i not in keep]
    kdim = math.prod(dims[p] for p in keep)
    rdim = math.prod(dims[p] for p in rest)
    digits = _digit_table(dims)
    perm = _block_index(dims, keep, digits) * rdim + _block_index(dims, rest, digits)
    iperm = np.argsort(perm)  # permuted index -> natural index
    m2 = np.asarray(mat, dtype=complex)[np.ix_(iperm, iperm)]
    m4 = m2.reshape(kdim, rdim, kdim, rdim)
    return m4.transpose(1, 3, 0, 2)


def partial_trace(mat: np.ndarray, dims, keep) -> np.ndarray:
    """Trace out the legs not in ``keep`` (unnormalized)."""
    s = slice_components(mat, dims, keep)
    return np.einsum("mmab->ab", s)


def acts_trivially_on_leg(mat: np.ndarray, dims, leg: int, tol: float) -> bool:
    """Whether ``mat`` factors as A (x) 1 on the given leg."""
    others = [i for i in range(len(dims)) if i != leg]
    s = slice_components(mat, dims, others)  # rest = the probed leg
    scale = max(np.linalg.norm(mat), 1.0)
    r = s.shape[0]
    for m in range(r):
        for n in range(r):
            if m == n:
                if np.linalg.norm(s[m, n] - s[0, 0]) > tol * scale:
                    return False
            elif np.linalg.norm(s[m, n]) > tol * scale:
                return False
    return True


def support_legs(mat: np.ndarray, dims, tol: float) -> tuple:
    """Minimal leg set S with mat = A_S (x) 1 off S (per-leg triviality scan)."""
    return tuple(
        leg
        for leg in range(len(dims))
        if dims[leg] > 1 and not acts_trivially_on_leg(mat, dims, leg, tol)
    )
