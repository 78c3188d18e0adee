"""Finite-dimensional *-algebras of matrices: spans, commutants, factorizations.

Algebras are unital *-closed subspaces of M_d represented by an orthonormal
basis (Frobenius inner product) stacked as an array of shape (dim, d, d).
Rank and membership decisions go through a relative tolerance with an explicit
indeterminacy band: values inside the band raise instead of guessing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import legs
from .config import DEFAULT, GAP_FACTOR, Tolerances
from .errors import IndeterminateError, InputError, ResourceError, StructureError


def ensure_ambient(d: int, tols: Tolerances = DEFAULT) -> None:
    cap = tols.ambient_cap()
    if d > cap:
        raise ResourceError(
            f"ambient dimension {d} exceeds the configured cap {cap}"
        )


def dagger(m: np.ndarray) -> np.ndarray:
    return m.conj().T


def frob(m: np.ndarray) -> float:
    return float(np.linalg.norm(m))


def matrix_units(d: int):
    for i in range(d):
        for j in range(d):
            e = np.zeros((d, d), dtype=complex)
            e[i, j] = 1.0
            yield (i, j, e)


def haar_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    q, r = np.linalg.qr(z)
    ph = np.diag(r).copy()
    ph /= np.abs(ph)
    return q * ph


def random_hermitian(d: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return (z + z.conj().T) / 2.0


def _rank_with_band(values, cut: float, label: str) -> int:
    """Count values above the band [cut, GAP_FACTOR*cut); inside it, refuse."""
    values = np.asarray(values, dtype=float)
    hi = GAP_FACTOR * cut
    if np.any((values > cut) & (values < hi)):
        bad = values[(values > cut) & (values < hi)]
        raise IndeterminateError(
            f"{label}: values {bad[:4]!r} fall inside the tolerance band "
            f"({cut:.3e}, {hi:.3e}); tighten tolerances or rescale the input"
        )
    return int(np.sum(values >= hi))


@dataclass
class StarAlgebra:
    """Orthonormal spanning basis of a unital *-closed matrix algebra."""

    basis: np.ndarray  # (dim, d, d)
    generators: tuple = ()  # the matrices the span was built from

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def ambient(self) -> int:
        return self.basis.shape[1]

    def project(self, mat: np.ndarray) -> np.ndarray:
        v = mat.reshape(-1)
        b = self.basis.reshape(self.dim, -1)
        return (b.T @ (b.conj() @ v)).reshape(mat.shape)

    def residual(self, mat: np.ndarray) -> float:
        return frob(mat - self.project(mat))

    def contains(self, mat: np.ndarray, tols: Tolerances = DEFAULT) -> bool:
        scale = max(frob(mat), 1.0)
        r = self.residual(mat) / scale
        if tols.tol_alg < r < GAP_FACTOR * tols.tol_alg:
            raise IndeterminateError(
                f"membership residual {r:.3e} inside the tolerance band"
            )
        return r <= tols.tol_alg

    def is_full(self) -> bool:
        return self.dim == self.ambient**2

    def random_element(self, rng: np.random.Generator, hermitian: bool = False) -> np.ndarray:
        c = rng.standard_normal(self.dim) + 1j * rng.standard_normal(self.dim)
        m = np.tensordot(c, self.basis, axes=(0, 0))
        return (m + m.conj().T) / 2.0 if hermitian else m


def _span_rows(rows: np.ndarray, tols: Tolerances, label: str) -> np.ndarray:
    """Orthonormal row basis for the row span of ``rows`` via one global svd."""
    _, s, vh = np.linalg.svd(rows, full_matrices=False)
    if s.size == 0 or s[0] <= 1e-14:
        return np.zeros((0, rows.shape[1]), dtype=complex)
    rank = _rank_with_band(s / s[0], tols.tol_rank, label)
    return vh[:rank]


def algebra_from_generators(
    gens, d: int, tols: Tolerances = DEFAULT, max_dim: int | None = None
) -> StarAlgebra:
    """The unital *-algebra generated by ``gens`` inside M_d.

    Closes the span of words by repeated left multiplication with the
    *-symmetrized generator set; this reaches every word because the span
    stays *-closed and contains the identity.  Each round recomputes the
    basis from a single svd over all accumulated rows, never renormalizing a
    projected residual, so roundoff in nearly dependent products cannot
    snowball into fake directions.
    """
    ensure_ambient(d, tols)
    gens = [np.asarray(g, dtype=complex) for g in gens]
    for g in gens:
        if g.shape != (d, d):
            raise StructureError(f"generator shape {g.shape} does not match ambient {d}")
    gset = []
    for g in gens:
        n = np.linalg.norm(g)
        if n > 1e-14:
            gset.append(g / n)
            gset.append(dagger(g) / n)
    seed = [np.eye(d, dtype=complex).reshape(-1) / math.sqrt(d)]
    seed.extend(g.reshape(-1) for g in gset)
    basis = _span_rows(np.array(seed), tols, "algebra closure")
    while gset and basis.shape[0] < d * d:
        if max_dim is not None and basis.shape[0] > max_dim:
            raise ResourceError(f"algebra dimension exceeded the requested cap {max_dim}")
        mats = basis.reshape(basis.shape[0], d, d)
        cands = np.einsum("gij,bjk->gbik", np.array(gset), mats).reshape(-1, d * d)
        grown = _span_rows(np.concatenate([basis, cands], axis=0), tols, "algebra closure")
        if grown.shape[0] == basis.shape[0]:
            basis = grown
            break
        basis = grown
    if max_dim is not None and basis.shape[0] > max_dim:
        raise ResourceError(f"algebra dimension exceeded the requested cap {max_dim}")
    return StarAlgebra(basis.reshape(-1, d, d), generators=tuple(gens))


def verify_closure(alg: StarAlgebra, tols: Tolerances = DEFAULT) -> float:
    """Max relative residual of the closure witnesses: identity, adjoints,
    and generator multiples of basis elements all lie in the span."""
    worst = alg.residual(np.eye(alg.ambient, dtype=complex)) / math.sqrt(alg.ambient)
    for b in alg.basis:
        worst = max(worst, alg.residual(dagger(b)))
    for g in alg.generators:
        scale = max(frob(g), 1.0)
        for b in alg.basis:
            worst = max(worst, alg.residual(g @ b) / scale)
    return worst


def commutant(gens, d: int | None = None, tols: Tolerances = DEFAULT) -> StarAlgebra:
    """Commutant of the *-algebra generated by ``gens`` in M_d.

    ``gens`` may be a list of matrices (with ``d`` the ambient dimension) or a
    StarAlgebra, in which case its basis and ambient are used.  Accumulates
    M = sum_g L_g^* L_g with L_g = g (x) 1 - 1 (x) g^T acting on row-major
    vec(X); the commutant is the null space of M, read off an
    eigendecomposition.  Null/nonnull eigenvalues must be separated by the
    tolerance band.
    """
    if isinstance(gens, StarAlgebra):
        gens, d = list(gens.basis), gens.ambient
    if d is None:
        raise StructureError("ambient dimension required with a generator list")
    ensure_ambient(d, tols)
    eye = np.eye(d, dtype=complex)
    m = np.zeros((d * d, d * d), dtype=complex)
    gs = []
    for g in gens:
        g = np.asarray(g, dtype=complex)
        n = frob(g)
        if n > 1e-14:
            gs.append(g / n)
            gs.append(dagger(g) / n)
    for g in gs:
        lg = np.kron(g, eye) - np.kron(eye, g.T)
        m += lg.conj().T @ lg
    if not gs:
        return full_algebra(d)  # everything commutes with the scalars
    evals, evecs = np.linalg.eigh(m)
    scale = max(evals[-1], 1.0)
    cut = tols.tol_rank**2 * 1e4  # squared residual scale for the band
    nonnull = _rank_with_band(evals / scale, cut, "commutant eigenvalues")
    k = d * d - nonnull
    null_vecs = evecs[:, :k]
    basis = null_vecs.T.reshape(k, d, d)
    return StarAlgebra(np.ascontiguousarray(basis))


def full_algebra(d: int) -> StarAlgebra:
    basis = np.array([e for _, _, e in matrix_units(d)])
    return StarAlgebra(basis)


def is_full_matrix_algebra(alg: StarAlgebra, tols: Tolerances = DEFAULT):
    """(True, k) iff the algebra is all of some M_k: square dimension and
    scalar center."""
    k = math.isqrt(alg.dim)
    if k * k != alg.dim:
        return (False, None)
    if alg.dim == 1:
        return (True, 1)
    comm = commutant(list(alg.basis), alg.ambient, tols)
    if span_overlap_dim(alg, comm, tols) != 1:
        return (False, None)
    return (True, k)


def support_algebra(b_list, d1: int, d2: int, side: str = "left", tols: Tolerances = DEFAULT) -> StarAlgebra:
    """Smallest S on the chosen leg of M_{d1} (x) M_{d2} with
    span(b_list) inside S (x) M_other (or M_other (x) S for side="right").

    Computed as the algebra generated by the slices of every b against the
    matrix-unit basis of the opposite leg; generator slices suffice because
    slices of products expand into sums of products of slices.
    """
    if side not in ("left", "right"):
        raise StructureError("side must be 'left' or 'right'")
    keep = (0,) if side == "left" else (1,)
    kdim = d1 if side == "left" else d2
    ensure_ambient(kdim, tols)
    gens = []
    for b in b_list:
        b = np.asarray(b, dtype=complex)
        if b.shape != (d1 * d2, d1 * d2):
            raise StructureError(f"matrix shape {b.shape} does not match bipartition {d1}x{d2}")
        s = legs.slice_components(b, (d1, d2), keep)
        r = s.shape[0]
        gens.extend(s[m, n] for m in range(r) for n in range(r))
    return algebra_from_generators(gens, kdim, tols)


def span_overlap_dim(a: StarAlgebra, b: StarAlgebra, tols: Tolerances = DEFAULT) -> int:
    """Dimension of the intersection of two orthonormal spans (principal angles)."""
    if a.ambient != b.ambient:
        raise StructureError("ambients differ")
    ma = a.basis.reshape(a.dim, -1)
    mb = b.basis.reshape(b.dim, -1)
    s = np.linalg.svd(ma.conj() @ mb.T, compute_uv=False)
    mid = (s > 0.01) & (s < 0.99)
    if np.any(mid):
        raise IndeterminateError(
            f"principal angles {s[mid][:4]!r} between spans are ambiguous"
        )
    return int(np.sum(s >= 0.99))


def orthonormal_rows(mats, d: int, tols: Tolerances = DEFAULT) -> np.ndarray:
    """Orthonormal (Frobenius) basis of the span of ``mats``, shape (k, d, d)."""
    rows = [np.asarray(m, dtype=complex).reshape(-1) for m in mats]
    rows = [v for v in rows if np.linalg.norm(v) > 1e-14]
    if not rows:
        return np.zeros((0, d, d), dtype=complex)
    v = np.array(rows)
    _, s, vh = np.linalg.svd(v, full_matrices=False)
    k = _rank_with_band(s / s[0], tols.tol_rank, "span singular values")
    return vh[:k].reshape(k, d, d)


def span_intersection(bas_a, bas_b, d: int, tols: Tolerances = DEFAULT) -> np.ndarray:
    """Orthonormal basis of span(bas_a) ∩ span(bas_b) via principal angles.

    Inputs may be lists of matrices or (k, d, d) arrays; they are
    orthonormalized first.  Cosines must clear the tolerance band around 1.
    """
    a = orthonormal_rows(bas_a, d, tols).reshape(-1, d * d)
    b = orthonormal_rows(bas_b, d, tols).reshape(-1, d * d)
    if a.shape[0] == 0 or b.shape[0] == 0:
        return np.zeros((0, d, d), dtype=complex)
    _, s, vh = np.linalg.svd(a.conj() @ b.T, full_matrices=False)
    gap = 1.0 - s
    cut = max(tols.tol_rank, 1e-12)
    mid = (gap > cut) & (gap < GAP_FACTOR * cut * 10)
    if np.any(mid):
        raise IndeterminateError(
            f"intersection cosines {s[mid][:4]!r} inside the tolerance band"
        )
    keep = gap <= cut
    if not np.any(keep):
        return np.zeros((0, d, d), dtype=complex)
    out = vh[keep].conj() @ b
    return orthonormal_rows(out.reshape(-1, d, d), d, tols)


# ---------------------------------------------------------------------------
# tensor factorization


@dataclass
class SplitResult:
    """Outcome of a tensor-factor test for a subalgebra A of M_d.

    When ``is_factor`` holds, ``unitary`` U satisfies U^* A U = M_a (x) 1_b and
    U^* A' U = 1_a (x) M_b, with ``residual`` the worst Frobenius deviation.
    """

    is_factor: bool
    reason: str
    a_dim: int = 0
    b_dim: int = 0
    unitary: np.ndarray | None = None
    commutant_basis: np.ndarray | None = None
    residual: float = 0.0

    def inner_factor(self, mat: np.ndarray) -> np.ndarray:
        """The M_a component of an element of A (conjugate, slice off 1_b)."""
        w = dagger(self.unitary) @ mat @ self.unitary
        m4 = w.reshape(self.a_dim, self.b_dim, self.a_dim, self.b_dim)
        return np.einsum("ambm->ab", m4) / self.b_dim

    def embed_factor(self, small: np.ndarray) -> np.ndarray:
        """Inverse of ``inner_factor`` on M_a."""
        return self.unitary @ np.kron(small, np.eye(self.b_dim)) @ dagger(self.unitary)


def _spectral_clusters(evals: np.ndarray, rel_gap: float = 1e-6):
    span = max(evals[-1] - evals[0], 1.0)
    clusters = [[0]]
    for i in range(1, len(evals)):
        if evals[i] - evals[i - 1] > rel_gap * span:
            clusters.append([])
        clusters[-1].append(i)
    return clusters


def tensor_factor_split(
    alg: StarAlgebra, tols: Tolerances = DEFAULT, rng: np.random.Generator | None = None
) -> SplitResult:
    """Decide whether A is a full matrix tensor factor of M_d and produce the
    disentangling unitary.

    Checks: A and its commutant A' have square dimensions a^2, b^2 with
    ab = d and trivial intersection; then builds matrix units of A from the
    spectral projections of a generic hermitian element and assembles U from
    partial isometries.  All structural claims are verified on the output.
    """
    rng = rng or np.random.default_rng(0)
    d = alg.ambient
    ensure_ambient(d, tols)
    comm = commutant(list(alg.basis), d, tols)
    a2, b2 = alg.dim, comm.dim
    a, b = math.isqrt(a2), math.isqrt(b2)
    if a * a != a2 or b * b != b2:
        return SplitResult(False, f"dims {a2}, {b2} are not perfect squares")
    if a * b != d:
        return SplitResult(False, f"factor dims {a}x{b} do not multiply to {d}")
    if span_overlap_dim(alg, comm, tols) != 1:
        return SplitResult(False, "center is larger than the scalars")

    last_err = "spectral clustering failed"
    for attempt in range(6):
        h = alg.random_element(rng, hermitian=True)
        evals, evecs = np.linalg.eigh(h)
        clusters = _spectral_clusters(evals)
        if len(clusters) != a or any(len(c) != b for c in clusters):
            last_err = (
                f"hermitian sample split into clusters {[len(c) for c in clusters]}"
            )
            continue
        projs = [evecs[:, c] @ evecs[:, c].conj().T for c in clusters]
        if any(alg.residual(p) > GAP_FACTOR * tols.tol_alg * d for p in projs):
            last_err = "spectral projection left the algebra"
            continue
        x = alg.random_element(rng)
        isoms, ok = [projs[0]], True
        for i in range(1, a):
            v = projs[i] @ x @ projs[0]
            w = dagger(v) @ v
            wev, wvec = np.linalg.eigh(w)
            if wev[-1] <= 1e-12 or np.sum(wev > 1e-10 * wev[-1]) != b:
                ok = False
                break
            inv_sqrt = wvec @ np.diag(
                [1.0 / math.sqrt(t) if t > 1e-10 * wev[-1] else 0.0 for t in wev]
            ) @ dagger(wvec)
            isoms.append(v @ inv_sqrt)
        if not ok:
            last_err = "partial isometry construction degenerated"
            continue
        pev, pvec = np.linalg.eigh(projs[0])
        wcols = pvec[:, pev > 0.5]
        if wcols.shape[1] != b:
            last_err = "base projection rank drifted"
            continue
        u = np.zeros((d, d), dtype=complex)
        for i in range(a):
            u[:, i * b : (i + 1) * b] = isoms[i] @ wcols
        gram = dagger(u) @ u
        if frob(gram - np.eye(d)) > 1e-6:
            last_err = "assembled frame is far from unitary"
            continue
        u = u @ np.linalg.inv(scipy.linalg.sqrtm(gram).astype(complex))
        res = 0.0
        for mat in alg.basis:
            w = dagger(u) @ mat @ u
            m4 = w.reshape(a, b, a, b)
            small = np.einsum("ambm->ab", m4) / b
            res = max(res, frob(w - np.kron(small, np.eye(b))))
        for mat in comm.basis:
            w = dagger(u) @ mat @ u
            m4 = w.reshape(a, b, a, b)
            small = np.einsum("mamb->ab", m4) / a
            res = max(res, frob(w - np.kron(np.eye(a), small)))
        if res > GAP_FACTOR * tols.tol_alg * d:
            last_err = f"disentangler residual {res:.3e}"
            continue
        return SplitResult(True, "ok", a, b, u, comm.basis, res)
    raise IndeterminateError(f"tensor factor split did not stabilize: {last_err}")


# ---------------------------------------------------------------------------
# inner unitaries and commutators


def _check_star_homomorphism(phi, d: int, tols: Tolerances) -> None:
    """Reject maps that are not multiplicative or not *-preserving."""
    rng = np.random.default_rng(7)
    units = [e for _, _, e in matrix_units(d)]
    images = [phi(e) for e in units]
    for _ in range(3):
        ca = rng.standard_normal(d * d) + 1j * rng.standard_normal(d * d)
        cb = rng.standard_normal(d * d) + 1j * rng.standard_normal(d * d)
        a = sum(c * e for c, e in zip(ca, units))
        b = sum(c * e for c, e in zip(cb, units))
        fa = sum(c * m for c, m in zip(ca, images))
        fb = sum(c * m for c, m in zip(cb, images))
        scale = max(frob(fa) * frob(fb), 1.0)
        if frob(phi(a @ b) - fa @ fb) > GAP_FACTOR * tols.tol_alg * scale:
            raise InputError("map is not multiplicative; not a *-homomorphism")
        if frob(phi(dagger(a)) - dagger(fa)) > GAP_FACTOR * tols.tol_alg * max(frob(fa), 1.0):
            raise InputError("map does not preserve adjoints")


def inner_unitary(phi, d: int, tols: Tolerances = DEFAULT) -> np.ndarray:
    """Recover u with phi(x) = u x u^* from a callable automorphism of M_d.

    Reshuffles the transfer matrix R[(a,i),(b,j)] = phi(E_ij)[a,b]; for an
    inner automorphism R = vec(u) vec(u)^*, so the top singular vector is u.
    """
    if d * d > 4096:
        raise ResourceError(f"inner unitary recovery capped below ambient {d}")
    _check_star_homomorphism(phi, d, tols)
    r4 = np.zeros((d, d, d, d), dtype=complex)
    for i, j, e in matrix_units(d):
        r4[:, i, :, j] = phi(e)
    r = r4.reshape(d * d, d * d)
    uu, s, _ = np.linalg.svd(r)
    if s[0] <= 0 or s[1] / s[0] > tols.tol_rank * GAP_FACTOR * 1e2:
        raise StructureError(
            f"map is not inner: transfer matrix has singular values {s[:3]!r}"
        )
    u = uu[:, 0].reshape(d, d) * math.sqrt(d)
    # fix the global phase on the largest entry, then polar-correct
    idx = np.unravel_index(np.argmax(np.abs(u)), u.shape)
    u *= np.exp(-1j * np.angle(u[idx]))
    gram = dagger(u) @ u
    u = u @ np.linalg.inv(scipy.linalg.sqrtm(gram).astype(complex))
    worst = 0.0
    for _, _, e in matrix_units(d):
        worst = max(worst, frob(phi(e) - u @ e @ dagger(u)))
    if worst > GAP_FACTOR * tols.tol_alg * d:
        raise StructureError(f"inner unitary residual {worst:.3e}")
    return u


def commutator_decompose(u: np.ndarray, tols: Tolerances = DEFAULT):
    """Write u = lam * a b a^* b^* with unitary a, b and |lam| = 1.

    Diagonalize det-normalized u; a cyclic shift and a diagonal with
    telescoping entries realize any unit-determinant diagonal as a group
    commutator.
    """
    d = u.shape[0]
    det = np.linalg.det(u)
    lam = det ** (1.0 / d)
    u0 = u / lam
    eye = np.eye(d, dtype=complex)
    if frob(u0 - u0[0, 0] * eye) <= tols.tol_alg * d:
        return eye, eye, lam * u0[0, 0]
    t, z = scipy.linalg.schur(u0.astype(complex), output="complex")
    diag = np.diag(t).copy()
    if frob(t - np.diag(diag)) > 1e-8 * d:
        raise StructureError("input is not unitary: Schur form is not diagonal")
    delta = np.ones(d, dtype=complex)
    for k in range(1, d):
        delta[k] = delta[k - 1] / diag[k]
    b0 = np.diag(delta)
    a0 = np.zeros((d, d), dtype=complex)
    for k in range(d):
        a0[(k + 1) % d, k] = 1.0
    a = z @ a0 @ dagger(z)
    b = z @ b0 @ dagger(z)
    res = frob(u - lam * a @ b @ dagger(a) @ dagger(b))
    if res > GAP_FACTOR * tols.tol_alg * d:
        raise StructureError(f"commutator reconstruction residual {res:.3e}")
    return a, b, lam
