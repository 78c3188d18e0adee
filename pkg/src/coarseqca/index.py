"""K-theoretic invariants of local nets and their automorphisms.

Exact group completions of commutative monoids, dimension classes over
coarse components, the GNVW index of chain automorphisms computed through
support algebras, the boundary partial-shift construction, the flasque
Eilenberg-swindle witness, and the local-to-Azumaya class map.

Every dimension enters as an integer from a rank computation; all index and
class arithmetic downstream is exact rational, so invariants cannot drift.
"""

from __future__ import annotations

import itertools
import math
import operator
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import legs, matalg, nets, qca
from .coarse import (
    Entourage,
    Grid,
    Window,
    box_window,
    callable_map,
    coarse_components,
    diagonal,
    metric_ball,
    product,
    translate_map,
)
from .config import DEFAULT, GAP_FACTOR, Tolerances
from .errors import InputError, ResourceError, StructureError


# ---------------------------------------------------------------------------
# exact rationals


@dataclass(frozen=True)
class PositiveRational:
    """A reduced fraction of positive integers; multiplication is exact."""

    num: int
    den: int = 1

    def __post_init__(self):
        num, den = operator.index(self.num), operator.index(self.den)
        if num <= 0 or den <= 0:
            raise InputError(f"{num}/{den} is not a positive rational")
        g = math.gcd(num, den)
        object.__setattr__(self, "num", num // g)
        object.__setattr__(self, "den", den // g)

    def __mul__(self, other: "PositiveRational") -> "PositiveRational":
        return PositiveRational(self.num * other.num, self.den * other.den)

    def __truediv__(self, other: "PositiveRational") -> "PositiveRational":
        return PositiveRational(self.num * other.den, self.den * other.num)

    def as_fraction(self) -> Fraction:
        return Fraction(self.num, self.den)

    def __repr__(self) -> str:
        return f"{self.num}/{self.den}"


ONE = PositiveRational(1, 1)


# ---------------------------------------------------------------------------
# commutative monoids and their group completions


@dataclass(frozen=True)
class MonoidPresentation:
    """A finitely generated commutative monoid presented by named generators
    and relations between exponent vectors."""

    generators: tuple
    relations: tuple = ()  # pairs of exponent dicts (lhs, rhs)


def free_monoid(*names) -> MonoidPresentation:
    return MonoidPresentation(tuple(names))


class _NatMult:
    """Marker for the multiplicative monoid of positive integers."""

    def __repr__(self) -> str:
        return "(N>=1, *)"


NAT_MULT = _NatMult()


@dataclass(frozen=True)
class GroupElement:
    """A formal difference of monoid elements, stored in normal form."""

    pos: tuple
    neg: tuple


class _NatMultGroup:
    """Group completion of (N>=1, *): exact positive rationals.

    The monoid is free commutative on the primes, so the completion embeds
    every formal quotient as a reduced fraction.
    """

    identity = ONE

    def canonical_map(self, n: int) -> PositiveRational:
        if operator.index(n) < 1:
            raise InputError(f"{n!r} is not in the multiplicative monoid")
        return PositiveRational(n, 1)

    def difference(self, m: int, n: int) -> PositiveRational:
        return PositiveRational(m, n)

    def equal(self, a: PositiveRational, b: PositiveRational) -> bool:
        return a == b

    def is_identity(self, a: PositiveRational) -> bool:
        return a == ONE


class GroupHandle:
    """Grothendieck group of a presented commutative monoid.

    Formal differences are equal iff some witness n satisfies
    m1 + m4 + n = m3 + m2 + n in the monoid; for free presentations the
    monoid is cancellative and no witness is needed, otherwise witnesses are
    enumerated up to total degree ``witness_bound``.
    """

    def __init__(self, monoid: MonoidPresentation, witness_bound: int = 6):
        self.monoid = monoid
        self.witness_bound = witness_bound
        self._k = len(monoid.generators)
        self._index = {g: i for i, g in enumerate(monoid.generators)}
        self._rules = tuple(
            self._orient(self._vec(l), self._vec(r)) for l, r in monoid.relations
        )

    # -- element plumbing ---------------------------------------------------
    def _vec(self, elem) -> tuple:
        if isinstance(elem, tuple):
            if len(elem) != self._k:
                raise InputError(f"exponent vector of length {len(elem)}, expected {self._k}")
            vec = tuple(operator.index(v) for v in elem)
        else:
            bad = set(elem) - set(self.monoid.generators)
            if bad:
                raise InputError(f"unknown generators {sorted(map(str, bad))!r}")
            vec = tuple(operator.index(elem.get(g, 0)) for g in self.monoid.generators)
        if any(v < 0 for v in vec):
            raise InputError("monoid exponents must be nonnegative")
        return vec

    @staticmethod
    def _orient(lhs: tuple, rhs: tuple):
        lk, rk = (sum(lhs), lhs), (sum(rhs), rhs)
        if lk == rk:
            raise InputError(
                "unsupported presentation class: relation cannot be oriented"
            )
        return (lhs, rhs) if lk > rk else (rhs, lhs)

    def _nf(self, vec: tuple) -> tuple:
        """Normal form under the oriented rewriting system."""
        changed = True
        while changed:
            changed = False
            for lhs, rhs in self._rules:
                if all(v >= l for v, l in zip(vec, lhs)):
                    vec = tuple(v - l + r for v, l, r in zip(vec, lhs, rhs))
                    changed = True
        return vec

    def _add(self, a: tuple, b: tuple) -> tuple:
        return tuple(x + y for x, y in zip(a, b))

    # -- group interface ----------------------------------------------------
    @property
    def identity(self) -> GroupElement:
        zero = (0,) * self._k
        return GroupElement(zero, zero)

    def difference(self, plus, minus) -> GroupElement:
        a, b = self._nf(self._vec(plus)), self._nf(self._vec(minus))
        common = tuple(min(x, y) for x, y in zip(a, b))
        return GroupElement(
            tuple(x - c for x, c in zip(a, common)),
            tuple(y - c for y, c in zip(b, common)),
        )

    def canonical_map(self, m) -> GroupElement:
        return self.difference(m, (0,) * self._k)

    def _witnesses(self):
        gens = range(self._k)
        for deg in range(self.witness_bound + 1):
            for combo in itertools.combinations_with_replacement(gens, deg):
                vec = [0] * self._k
                for i in combo:
                    vec[i] += 1
                yield tuple(vec)

    def equal(self, g: GroupElement, h: GroupElement) -> bool:
        a = self._add(g.pos, h.neg)
        b = self._add(h.pos, g.neg)
        if not self._rules:
            return a == b
        for n in self._witnesses():
            if self._nf(self._add(a, n)) == self._nf(self._add(b, n)):
                return True
        return False

    def is_identity(self, g: GroupElement) -> bool:
        return self.equal(g, self.identity)


def group_completion(monoid, witness_bound: int = 6):
    """Group-complete a supported commutative monoid presentation.

    Supported classes: the multiplicative positive integers (``NAT_MULT``,
    completing to exact positive rationals) and finitely generated
    presentations whose relations orient into a terminating rewriting system.
    """
    if isinstance(monoid, _NatMult):
        return _NatMultGroup()
    if isinstance(monoid, MonoidPresentation):
        return GroupHandle(monoid, witness_bound)
    raise InputError(f"unsupported presentation class: {monoid!r}")


# ---------------------------------------------------------------------------
# dimension classes


@dataclass(frozen=True)
class DimensionClass:
    """One multiplicative dimension class per coarse component of a window."""

    components: tuple  # ((sites, PositiveRational), ...)

    @property
    def values(self) -> tuple:
        return tuple(v for _, v in self.components)


def dimension_class(net, space, window: Window, tols: Tolerances = DEFAULT) -> DimensionClass:
    """The product of site dimensions over each coarse component."""
    if net.space != space:
        raise InputError("net does not live on the given space")
    comps = coarse_components(space, window)
    out = []
    for comp in comps:
        total = 1
        for x in comp:
            total *= net.q(x)
        out.append((tuple(comp), PositiveRational(total, 1)))
    return DimensionClass(tuple(out))


# ---------------------------------------------------------------------------
# the GNVW index through support algebras


def _chain_blocks(sites: tuple, s: int) -> tuple:
    """Consecutive blocks of s sites; drops an incomplete tail block."""
    nb = len(sites) // s
    if nb < 6:
        raise InputError(
            f"window regroups into {nb} blocks of {s}; the index needs at least 6"
        )
    return tuple(tuple(sites[b * s : (b + 1) * s]) for b in range(nb))


def _span_rows(basis: np.ndarray, cands, cap: int, tols: Tolerances) -> np.ndarray:
    """Grow an orthonormal row span by candidate vectors.

    Candidates at machine-level projection residual are discarded outright;
    the rest are adjudicated by an svd over the stacked rows (chunked), with
    rank decisions made on the full spectrum.  Exceeding ``cap`` dimensions
    aborts with ResourceError.
    """
    cv = np.asarray(cands, dtype=complex).reshape(len(cands), -1)
    norms = np.linalg.norm(cv, axis=1)
    cv = cv[norms > 1e-13] / norms[norms > 1e-13, None]
    for i in range(0, cv.shape[0], 512):
        chunk = cv[i : i + 512]
        if basis.shape[0]:
            resid = chunk - (chunk @ basis.conj().T) @ basis
            chunk = chunk[np.linalg.norm(resid, axis=1) > 1e-12]
        if not chunk.shape[0]:
            continue
        stack = np.concatenate([basis, chunk], axis=0)
        _, sv, vh = np.linalg.svd(stack, full_matrices=False)
        r = matalg._rank_with_band(sv / sv[0], tols.tol_rank, "support algebra")
        if r > cap:
            raise ResourceError(f"support algebra exceeded the dimension cap {cap}")
        basis = np.ascontiguousarray(vh[:r])
    return basis


def _pair_images(alpha, window: Window, pair: tuple, allowed: set, tols: Tolerances) -> list:
    """Leg-granular images of the generating matrix units at the pair sites,
    with support checked against the blocked neighborhood.

    Slice components compose like matrix entries, so the slice algebra of
    every unit image is already generated by the images of the first-row and
    first-column units; the remaining units add nothing to the closure."""
    net = alpha.net
    out = []
    for x in pair:
        for i, j, e in matalg.matrix_units(net.q(x)):
            if i and j:
                continue
            probe = qca._legop_from_supported(net, qca.site_op(net, x, e))
            img = qca._apply_leg(alpha, probe, window, tols)
            if any(y not in allowed for y in img.sites):
                raise StructureError(
                    "image support escapes the blocked neighborhood; "
                    "the blocking underestimates the control radius"
                )
            out.append(img)
    return out


def _side_gens(net, images: list, f_sites: tuple, side: str, cap: int,
               tols: Tolerances) -> list:
    """Slice directions of the images on the F sites, reduced per embedding
    signature in the small space before embedding into M_dF."""
    f_set = set(f_sites)
    grouped = {}
    for img in images:
        ll = qca._leg_list(img)
        dims = qca._leg_dims(img)
        fpos = [i for i, (y, _) in enumerate(ll) if y in f_set]
        if not fpos:
            continue
        dn = math.prod(dims[i] for i in fpos)
        dc = math.prod(dims) // dn
        # image legs are ordered along the chain, so the F legs form a
        # prefix (left side) or a suffix (right side) of the leg order
        if side == "left":
            parts = legs.slice_components(img.mat, (dn, dc), (0,))
        else:
            parts = legs.slice_components(img.mat, (dc, dn), (1,))
        full, pos = [], []
        for y in f_sites:
            sh = img.shapes.get(y)
            if sh is None:
                if net.q(y) > 1:
                    full.append(net.q(y))
                continue
            pres = set(img.present[y])
            for s, d in enumerate(sh):
                if s in pres:
                    pos.append(len(full))
                full.append(d)
        gk = (tuple(pos), tuple(full))
        grouped.setdefault(gk, []).append(parts.reshape(-1, dn, dn))
    gens = []
    for (pos, full), slice_sets in grouped.items():
        dnx = math.prod(full[p] for p in pos)
        small = np.concatenate(slice_sets, axis=0)
        dirs = _span_rows(np.zeros((0, dnx * dnx), dtype=complex), small, cap, tols)
        gens.extend(legs.embed(d, pos, full) for d in dirs.reshape(-1, dnx, dnx))
    return gens


def _closed_dim(gens: list, dF: int, cap: int, tols: Tolerances) -> int:
    """Dimension of the unital algebra generated in M_dF, closing the span
    under left multiplication by the generators; ResourceError past the cap."""
    if not gens:
        return 1
    unit = np.eye(dF, dtype=complex).reshape(1, -1) / math.sqrt(dF)
    basis = _span_rows(unit, gens, cap, tols)
    garr = np.array(gens)
    while True:
        mats = basis.reshape(-1, dF, dF)
        prev = basis.shape[0]
        step = max(1, 2**23 // (mats.shape[0] * dF * dF))
        for i in range(0, garr.shape[0], step):
            cands = garr[i : i + step, None] @ mats[None, :]
            basis = _span_rows(basis, cands.reshape(-1, dF * dF), cap, tols)
        if basis.shape[0] == prev:
            break
    return int(basis.shape[0])


def _exact_root(dim: int) -> int:
    root = math.isqrt(dim)
    if root * root != dim:
        raise StructureError(
            f"support algebra dimension {dim} is not a perfect square; "
            "not a translation-uniform QCA window"
        )
    return root


def _position_index(alpha, window: Window, blocks: tuple, b: int, big_q: int,
                    tols: Tolerances) -> PositiveRational:
    """The index read off at one block position.

    Since the left and right support dimensions multiply to the pair
    dimension, the side with the smaller slice span is closed first — it is
    guaranteed to fit under the cap — and the other side follows by division.
    """
    net = alpha.net
    cap = big_q * big_q
    pair = blocks[b] + blocks[b + 1]
    allowed = set(blocks[b - 1] + pair + blocks[b + 2])
    images = _pair_images(alpha, window, pair, allowed, tols)
    f_of = {"left": blocks[b - 1] + blocks[b], "right": blocks[b + 1] + blocks[b + 2]}

    def raw_mass(side: str) -> int:
        f_set = set(f_of[side])
        tot = 0
        for img in images:
            dims = qca._leg_dims(img)
            dn = math.prod(
                d for (y, _), d in zip(qca._leg_list(img), dims) if y in f_set
            )
            if dn > 1:
                dc = math.prod(dims) // dn
                tot += dc * dc * dn * dn
        return tot

    dims = {}
    for side in sorted(("left", "right"), key=raw_mass):
        dF = math.prod(net.q(x) for x in f_of[side])
        try:
            gens = _side_gens(net, images, f_of[side], side, cap, tols)
            dims[side] = _closed_dim(gens, dF, cap, tols)
            break
        except ResourceError:
            continue
    if not dims:
        raise StructureError(
            "both support algebras exceed the pair dimension; "
            "not a translation-uniform QCA window"
        )
    if "right" in dims:
        d_right = _exact_root(dims["right"])
    else:
        d_left = _exact_root(dims["left"])
        if cap % d_left != 0:
            raise StructureError(
                f"left support dimension {d_left} does not divide the pair "
                "dimension; not a translation-uniform QCA window"
            )
        d_right = cap // d_left
    return PositiveRational(d_right, big_q)


def gnvw_index(alpha, window: Window, tols: Tolerances = DEFAULT,
               all_positions: bool = False) -> PositiveRational:
    """The GNVW index of a chain automorphism, as an exact rational.

    Regroups the window into blocks long enough that the automorphism is
    nearest-neighbor, then measures the support algebra of a blocked pair on
    the right-overlapping pair.  Since the image algebra splits as a tensor
    product of its left and right support algebras, the side dimensions
    multiply to the pair dimension; whichever side stays under the dimension
    cap determines both, and the index is (right dimension) / (block
    dimension).  Block-independence is checked at two positions (or all of
    them with ``all_positions``).
    """
    net = alpha.net
    if not net.space.has_metric:
        raise InputError("the GNVW index needs a metric chain")
    core = qca.core_sites(net, window, alpha.declared_control)
    core = tuple(sorted(core, key=net.space.site_key))
    qs = {net.q(x) for x in core}
    if not qs:
        raise InputError("window margins are smaller than the declared control")
    if len(qs) != 1:
        raise StructureError(
            "site dimensions vary over the window; not a translation-uniform QCA window"
        )
    q = qs.pop()
    if q == 1:
        return ONE

    # the evaluation already confines every image to the declared-control
    # fattening of its support, so the declared radius is a sound blocking
    e = alpha.declared_control
    radius = max(e.radius or 0, e.max_radius_on(window.sites))
    s = max(radius, 1)
    blocks = _chain_blocks(core, s)
    big_q = q ** s

    positions = range(1, len(blocks) - 2) if all_positions else (1, 2)
    values = [_position_index(alpha, window, blocks, b, big_q, tols) for b in positions]
    if any(v != values[0] for v in values[1:]):
        raise StructureError(
            "support dimensions depend on the block position; "
            "not a translation-uniform QCA window"
        )
    return values[0]


def gnvw_report(alpha, window: Window, tols: Tolerances = DEFAULT) -> dict:
    """The index with its blocking data, ready for serialization."""
    e = alpha.declared_control
    radius = max(e.radius or 0, e.max_radius_on(window.sites))
    value = gnvw_index(alpha, window, tols)
    return {
        "index": {"num": value.num, "den": value.den},
        "blocking": max(radius, 1),
        "positions": [1, 2],
        "control_radius": radius,
    }


# ---------------------------------------------------------------------------
# the boundary shift of an Azumaya presentation


def _site_splits(pre, sites, tols: Tolerances) -> dict:
    """Tensor-factor data (a, b, unitary) of the presented algebra per site."""
    space = pre.ambient.space
    out = {}
    for x in sites:
        d = pre.ambient.q(x)
        if d == 1:
            out[x] = (1, 1, np.eye(1, dtype=complex))
            continue
        w = Window(space, (x,))
        alg = matalg.algebra_from_generators(pre.generators(w), d, tols)
        split = matalg.tensor_factor_split(alg, tols)
        if not split.is_factor:
            raise StructureError(f"split failure at site {x!r}: {split.reason}")
        out[x] = (split.a_dim, split.b_dim, split.unitary)
    return out


def mv_boundary_shift(pre, chain_length: int, tols: Tolerances = DEFAULT):
    """The boundary automorphism of the Mayer–Vietoris boundary map: on each
    chain fiber the presented factor slots shift by one step while their
    commutants stay put, conjugated into the presented frame by the splitting
    witnesses."""
    if chain_length < 2:
        raise InputError("chain_length must be at least 2")
    space = pre.ambient.space
    if not hasattr(space, "sites"):
        raise InputError("the boundary shift needs a finite base space")
    splits = _site_splits(pre, space.sites, tols)

    if len(space.sites) == 1:
        x0 = space.sites[0]
        a, b, u = splits[x0]
        chain = Grid(1)
        net = nets.uniform_net(chain, a * b, label=f"mv({pre.label})")
        shift = translate_map(chain, (1,))
        word = (
            qca.SiteLocal(lambda y, _u=u: _u.conj().T),
            qca.PartialShift(shift, lambda y, _a=a, _b=b: (_a, _b)),
            qca.SiteLocal(lambda y, _u=u: _u),
        )
        alpha = qca.Automorphism(net, word, metric_ball(chain, 1), f"mv({pre.label})")
        if chain_length >= 3 and a > 1:
            _check_boundary_shift(alpha, splits[x0], chain_length, tols)
        return alpha

    prod = product(space, Grid(1))
    dims = {x: pre.ambient.q(x) for x in space.sites}

    def parts(site):
        x = site[0]
        return ((("mv", x), dims[x]),) if dims[x] > 1 else ()

    net = nets.LocalMatrixNet(prod, parts, "all", f"mv({pre.label})")
    f = callable_map(
        prod, prod,
        lambda s: (s[0], (s[1][0] + 1,)),
        preimage_fn=lambda t: ((t[0], (t[1][0] - 1,)),),
    )
    word = (
        qca.SiteLocal(lambda s: splits[s[0]][2].conj().T),
        qca.PartialShift(f, lambda s: (splits[s[0]][0], splits[s[0]][1])),
        qca.SiteLocal(lambda s: splits[s[0]][2]),
    )
    return qca.Automorphism(net, word, metric_ball(prod, 1), f"mv({pre.label})")


def _check_boundary_shift(alpha, split_data, chain_length: int, tols: Tolerances):
    """Smoke check: a presented factor element at site 1 moves to site 2."""
    a, b, u = split_data
    net = alpha.net
    hi = min(chain_length - 1, 3)
    w = box_window(Grid(1), (0,), (hi,))
    probe = np.zeros((a, a), dtype=complex)
    probe[0, 0] = 1.0
    if a > 1:
        probe[0, 1] = 1.0
    emb = u @ np.kron(probe, np.eye(b, dtype=complex)) @ u.conj().T
    img = qca.apply(alpha, qca.site_op(net, (1,), emb), w, tols)
    if img.sites != ((2,),) or not np.allclose(img.mat, emb, atol=GAP_FACTOR * tols.tol_alg):
        raise StructureError("boundary shift failed its translation smoke check")


# ---------------------------------------------------------------------------
# the flasque swindle


@dataclass(frozen=True)
class FlasqueSwindleReport:
    """Witness data for [A] = 0 over a flasque space."""

    passed: bool
    control: Entourage
    dims_rows: tuple  # (site, q_S, q_base, q_shifted)
    checked_windows: int
    notes: tuple

    @property
    def dims_consistent(self) -> bool:
        return all(qs == qb * qp for _, qs, qb, qp in self.dims_rows)


def _class_net(obj, sites, tols: Tolerances):
    """A local net representing the class of the input: local nets pass
    through; Azumaya presentations reduce to their per-site factor sizes."""
    if isinstance(obj, nets.LocalMatrixNet):
        return obj
    if isinstance(obj, nets.AzumayaPresentation):
        amb = obj.ambient
        if amb.support != "all":
            sites = tuple(x for x in amb.support)
        splits = _site_splits(obj, sites, tols)
        table = {x: a for x, (a, _, _) in splits.items() if a > 1}
        return nets.table_net(amb.space, table, label=f"class({obj.label})")
    raise InputError(f"expected a net or presentation, got {type(obj).__name__}")


def flasque_swindle_check(obj, f, window: Window, budget: int = 32,
                          tols: Tolerances = DEFAULT) -> FlasqueSwindleReport:
    """Build S(A) along a flasque shift and verify S(A) ≅ A ⊗ S(A) on the
    window: dimension bookkeeping sitewise against an independent pushforward,
    and the slot-shift isomorphism checked leg by leg on subwindows."""
    net = _class_net(obj, window.sites, tols)
    if not any(f.apply(x) in window for x in window.sites):
        raise InputError("window too small for one full shift period")
    s_net, iso = nets.shift_stabilizer(net, f, window, budget, tols)
    pushed = nets.pushforward(f, s_net)

    notes = []
    rows = []
    for x in window.sites:
        rows.append((x, s_net.q(x), net.q(x), pushed.q(x)))
    dims_ok = all(qs == qb * qp for _, qs, qb, qp in rows)
    if not dims_ok:
        notes.append("sitewise dimension bookkeeping failed")

    if all(qs == 1 for _, qs, _, _ in rows):
        notes.append("trivial class: identity isomorphism")
        return FlasqueSwindleReport(True, diagonal(net.space), tuple(rows), 0, tuple(notes))

    iso_ok = True
    checked = 0
    lm = iso.label_map or (lambda lab: lab)
    subwindows = [Window(net.space, (x,)) for x in window.sites]
    subwindows.append(window)
    for bw in subwindows:
        se = nets.evaluation(s_net, bw)
        if se.ambient > 64:
            continue
        tw = iso.target_window(bw)
        te = nets.evaluation(iso.target, tw)
        if te.ambient > 4096:
            continue
        checked += 1
        for p, (_, lab, d) in enumerate(se.legs):
            tpos = te.label_pos[lm(lab)]
            for probe in _leg_probes(d):
                img = iso.apply(se.embed_at(probe, (p,)), bw, tw)
                if not np.allclose(img, te.embed_at(probe, (tpos,)),
                                   atol=GAP_FACTOR * tols.tol_alg):
                    iso_ok = False
    if not iso_ok:
        notes.append("slot-shift isomorphism failed a windowed containment")
    return FlasqueSwindleReport(
        dims_ok and iso_ok, iso.control, tuple(rows), checked, tuple(notes)
    )


def _leg_probes(d: int) -> list:
    out = [np.diag(np.arange(1, d + 1)).astype(complex)]
    e = np.zeros((d, d), dtype=complex)
    e[0, d - 1] = 1.0
    out.append(e)
    return out


# ---------------------------------------------------------------------------
# the local-to-Azumaya class map


@dataclass(frozen=True)
class TaggedClass:
    """A dimension class remembering which category it was computed in.

    For Azumaya inputs whose window-algebra dimension is not a perfect
    square, the class is recorded as its square and flagged, staying exact
    inside the completion.
    """

    kind: str  # "local" | "azumaya"
    cls: DimensionClass
    squared: tuple


def _default_window(space, window):
    if window is not None:
        return window
    if hasattr(space, "sites"):
        return Window(space, space.sites)
    raise InputError("a window is required over an infinite space")


def k0_loc_to_az_class(obj, window: Window | None = None,
                       tols: Tolerances = DEFAULT) -> TaggedClass:
    """The K0 class of a local net, or of an Azumaya presentation through the
    injective comparison map."""
    if isinstance(obj, nets.LocalMatrixNet):
        w = _default_window(obj.space, window)
        cls = dimension_class(obj, obj.space, w, tols)
        return TaggedClass("local", cls, (False,) * len(cls.components))
    if not isinstance(obj, nets.AzumayaPresentation):
        raise InputError(f"expected a net or presentation, got {type(obj).__name__}")
    space = obj.ambient.space
    w = _default_window(space, window)
    out = []
    flags = []
    for comp in coarse_components(space, w):
        cw = Window(space, tuple(comp))
        d = math.prod(obj.ambient.q(x) for x in comp)
        if d == 1:
            out.append((tuple(comp), ONE))
            flags.append(False)
            continue
        alg = matalg.algebra_from_generators(obj.generators(cw), d, tols)
        root = math.isqrt(alg.dim)
        if root * root == alg.dim:
            out.append((tuple(comp), PositiveRational(root, 1)))
            flags.append(False)
        else:
            out.append((tuple(comp), PositiveRational(alg.dim, 1)))
            flags.append(True)
    return TaggedClass("azumaya", DimensionClass(tuple(out)), tuple(flags))
