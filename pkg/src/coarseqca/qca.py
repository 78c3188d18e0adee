"""Quantum cellular automata as controlled automorphisms of local matrix nets.

An automorphism is a word of structured atoms (site-local unitaries, circuit
layers, partial shifts, window unitaries) together with a declared control
entourage.  The module applies such words to finitely supported operators,
measures their actual control, verifies coarse-locality certificates, compiles
certified automorphisms into finite-depth circuits, and implements the
relation moves of the stable group (stabilization, local conjugation,
composition, tensor).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import legs, matalg, nets
from .coarse import (
    CoarseMap,
    Entourage,
    Window,
    _metric_dist,
    _translate_like,
    compose_entourages,
    diagonal,
    explicit_relation,
    fatten,
    invert_entourage,
    metric_ball,
    translate_map,
    union_entourages,
)
from .config import DEFAULT, GAP_FACTOR, Tolerances
from .errors import InputError, ResourceError, StructureError


def _dagger(m: np.ndarray) -> np.ndarray:
    return np.asarray(m, dtype=complex).conj().T


# ---------------------------------------------------------------------------
# word atoms


@dataclass(eq=False)
class SiteLocal:
    """One unitary per site.

    ``units`` is a dict site -> q(x) x q(x) matrix or a callable returning the
    matrix (or None) for a site; untouched sites act by the identity.
    """

    units: object

    def unit_at(self, x):
        if callable(self.units):
            return self.units(x)
        return self.units.get(x)


@dataclass(eq=False)
class BlockLayer:
    """A depth-one layer: pairwise disjoint site blocks, one unitary each."""

    blocks: tuple  # ((sites, unitary), ...)

    def __post_init__(self):
        seen = set()
        norm = []
        for sites, u in self.blocks:
            ss = tuple(sites)
            if seen & set(ss):
                raise InputError("blocks inside one layer must be pairwise disjoint")
            seen.update(ss)
            norm.append((ss, np.asarray(u, dtype=complex)))
        self.blocks = tuple(norm)


@dataclass(eq=False)
class PartialShift:
    """Move the distinguished tensor factor of every site leg along a map.

    ``factor_dims`` maps a site to (a, b) with q = a*b — the leading a-factor
    moves to shift(x) — or to (pre, a, post) when the moving factor sits
    between two fixed ones.  The string "full" moves whole legs; sites missing
    from a dict stay entirely in place.
    """

    shift: CoarseMap
    factor_dims: object = "full"

    def split_at(self, x, q: int) -> tuple:
        fd = self.factor_dims
        if fd == "full":
            v = (1, q, 1)
        elif callable(fd):
            v = fd(x)
        else:
            v = fd.get(x)
        if v is None:
            v = (1, 1, q)
        if len(v) == 2:
            v = (1, int(v[0]), int(v[1]))
        v = tuple(int(t) for t in v)
        if v[0] * v[1] * v[2] != q or any(t < 1 for t in v):
            raise InputError(f"factor split {v} does not refine q = {q} at {x!r}")
        return v


@dataclass(eq=False)
class WindowUnitary:
    """Conjugation by one unitary on the evaluation of a fixed window."""

    window: Window
    unitary: np.ndarray


@dataclass(eq=False)
class Automorphism:
    """A word of atoms applied left to right with a declared control."""

    net: nets.LocalMatrixNet
    word: tuple
    declared_control: Entourage
    label: str = ""


# ---------------------------------------------------------------------------
# supported operators


@dataclass(eq=False)
class SupportedOp:
    """An operator with explicit finite support.

    ``mat`` acts on the ordered tensor product of the support sites' legs
    (site-major row-major basis, matching the net evaluation on that window).
    """

    sites: tuple
    mat: np.ndarray


def supported_op(net, sites, mat) -> SupportedOp:
    key = net.space.site_key
    ss = tuple(sorted(set(sites), key=key))
    m = np.asarray(mat, dtype=complex)
    d = math.prod(net.q(x) for x in ss)
    if m.shape != (d, d):
        raise InputError(f"operator shape {m.shape} does not match support dimension {d}")
    return SupportedOp(ss, m)


def site_op(net, x, mat) -> SupportedOp:
    return supported_op(net, (x,), mat)


def _site_dims(net, sites) -> tuple:
    return tuple(net.q(x) for x in sites)


def _embed_sites(net, op: SupportedOp, big_sites) -> np.ndarray:
    """The matrix of ``op`` on the larger site tuple (identity elsewhere)."""
    big = tuple(big_sites)
    dims = _site_dims(net, big)
    positions = tuple(big.index(x) for x in op.sites)
    return legs.embed(op.mat, positions, dims)


def _restrict_supported(net, op: SupportedOp, target_sites, tols: Tolerances) -> SupportedOp:
    """Drop identity legs down to ``target_sites``; error if support leaks."""
    target = tuple(target_sites)
    if not set(target) <= set(op.sites):
        big = tuple(sorted(set(op.sites) | set(target), key=net.space.site_key))
        op = SupportedOp(big, _embed_sites(net, op, big))
    dims = _site_dims(net, op.sites)
    keep = tuple(i for i, x in enumerate(op.sites) if x in set(target))
    rest = math.prod(dims[i] for i in range(len(dims)) if i not in keep)
    sl = legs.slice_components(op.mat, dims, keep)
    idx = np.arange(rest)
    diag = sl[idx, idx]
    small = diag.sum(axis=0) / rest
    sl[idx, idx] = 0.0
    # |op - small (x) 1|^2 splits exactly into the off-diagonal slice mass
    # plus the spread of the diagonal slices around their mean
    resid2 = np.linalg.norm(sl) ** 2 + np.linalg.norm(diag - small) ** 2
    scale = max(1.0, float(np.linalg.norm(op.mat)))
    if math.sqrt(float(resid2)) > GAP_FACTOR * tols.tol_alg * scale:
        raise StructureError("operator is not supported on the requested sites")
    return SupportedOp(target, small)


def _require_inside(window: Window, sites, what: str) -> None:
    missing = [x for x in sites if x not in window]
    if missing:
        raise InputError(
            f"{what} needs sites {missing[:4]!r} outside the window; "
            "fatten the window by the declared control"
        )


# ---------------------------------------------------------------------------
# leg-granular operators
#
# A word evaluation never needs the full matrix over a site's leg: a partial
# shift moves a tensor factor of it, a lifted block acts on one copy of a
# product net, and probes start on a single part.  Operators are therefore
# held as matrices over the legs they genuinely act on; every absent leg is
# the identity.  Each site carries an ordered factorization ("shape") of its
# leg dimension; a slot addresses one factor in the mixed-radix row-major
# index of C^{q(x)}, so refining or regrouping a shape is pure bookkeeping
# and never touches the matrix.


_MATERIALIZE_CAP = 1 << 12


@dataclass(eq=False)
class _LegOp:
    """A finitely supported operator at tensor-leg granularity.

    ``shapes[x]`` factors the site leg C^{q(x)} into slots; ``present[x]``
    lists the slots whose legs ``mat`` carries.  The legs of ``mat`` run over
    the present slots, site-major in the space's site order; every site in
    ``sites`` has at least one present slot.
    """

    sites: tuple
    shapes: dict
    present: dict
    mat: np.ndarray


def _leg_list(op: _LegOp) -> list:
    return [(x, s) for x in op.sites for s in op.present[x]]


def _leg_dims(op: _LegOp) -> tuple:
    return tuple(op.shapes[x][s] for x in op.sites for s in op.present[x])


def _leg_index(op: _LegOp) -> dict:
    return {l: i for i, l in enumerate(_leg_list(op))}


def _legop_from_supported(net, op: SupportedOp) -> _LegOp:
    sites = tuple(x for x in op.sites if net.q(x) > 1)
    shapes = {x: tuple(d for _, d in net.site_parts(x)) for x in sites}
    present = {x: tuple(range(len(shapes[x]))) for x in sites}
    return _LegOp(sites, shapes, present, np.asarray(op.mat, dtype=complex))


def _legop_to_supported(op: _LegOp) -> SupportedOp:
    full, positions = [], []
    for x in op.sites:
        pres = set(op.present[x])
        for s, d in enumerate(op.shapes[x]):
            if s in pres:
                positions.append(len(full))
            full.append(d)
    if not full:
        return SupportedOp((), np.asarray(op.mat, dtype=complex))
    n = math.prod(full)
    if n > _MATERIALIZE_CAP:
        raise ResourceError(
            f"materializing the image needs dimension {n}; probe smaller operators"
        )
    return SupportedOp(op.sites, legs.embed(op.mat, tuple(positions), tuple(full)))


def _legop_grow(net, op: _LegOp, add, new_shapes=None) -> _LegOp:
    """Make the (site, slot) legs in ``add`` present (they join as identity);
    sites not yet tracked must come with a factorization in ``new_shapes``."""
    want = set(add) - set(_leg_list(op))
    if not want:
        return op
    shapes = dict(op.shapes)
    for x, sh in (new_shapes or {}).items():
        shapes.setdefault(x, tuple(sh))
    grown = {x: set(op.present[x]) for x in op.sites}
    for x, s in want:
        grown.setdefault(x, set()).add(s)
    key = net.space.site_key
    sites = tuple(sorted(grown, key=key))
    present = {x: tuple(sorted(grown[x])) for x in sites}
    new_ll = [(x, s) for x in sites for s in present[x]]
    old = set(_leg_list(op))
    positions = tuple(i for i, l in enumerate(new_ll) if l in old)
    dims = tuple(shapes[x][s] for x, s in new_ll)
    mat = legs.embed(op.mat, positions, dims)
    return _LegOp(sites, {x: shapes[x] for x in sites}, present, mat)


def _legop_take(op: _LegOp, keep) -> _LegOp:
    """Trace away the legs outside ``keep`` (a set of (site, slot)), dividing
    by their dimension; callers must know those legs carry the identity."""
    ll = _leg_list(op)
    keep_pos = tuple(i for i, l in enumerate(ll) if l in keep)
    if len(keep_pos) == len(ll):
        return op
    dims = _leg_dims(op)
    scale = math.prod(dims[i] for i in range(len(dims)) if i not in set(keep_pos))
    mat = legs.partial_trace(op.mat, dims, keep_pos) / scale
    present = {}
    for x in op.sites:
        kept = tuple(s for s in op.present[x] if (x, s) in keep)
        if kept:
            present[x] = kept
    sites = tuple(x for x in op.sites if x in present)
    return _LegOp(sites, {x: op.shapes[x] for x in sites}, present, mat)


def _legop_minimize(op: _LegOp, tol: float) -> _LegOp:
    dims = _leg_dims(op)
    if not dims:
        return op
    sup = legs.support_legs(op.mat, dims, tol)
    if len(sup) == len(dims):
        return op
    ll = _leg_list(op)
    return _legop_take(op, {ll[i] for i in sup})


def _legop_restrict(op: _LegOp, target_sites, tol: float) -> _LegOp:
    """Drop identity legs down to ``target_sites``; error if support leaks."""
    target = set(target_sites)
    ll = _leg_list(op)
    keep_pos = tuple(i for i, (x, _) in enumerate(ll) if x in target)
    if len(keep_pos) == len(ll):
        return op
    dims = _leg_dims(op)
    rest = math.prod(dims[i] for i in range(len(dims)) if i not in set(keep_pos))
    sl = legs.slice_components(op.mat, dims, keep_pos)
    idx = np.arange(rest)
    diag = sl[idx, idx]
    small = diag.sum(axis=0) / rest
    sl[idx, idx] = 0.0
    # |op - small (x) 1|^2 splits exactly into the off-diagonal slice mass
    # plus the spread of the diagonal slices around their mean
    resid2 = np.linalg.norm(sl) ** 2 + np.linalg.norm(diag - small) ** 2
    scale = max(1.0, float(np.linalg.norm(op.mat)))
    if math.sqrt(float(resid2)) > tol * scale:
        raise StructureError("operator is not supported on the requested sites")
    keep = {ll[i] for i in keep_pos}
    present = {}
    for x in op.sites:
        kept = tuple(s for s in op.present[x] if (x, s) in keep)
        if kept:
            present[x] = kept
    sites = tuple(x for x in op.sites if x in present)
    return _LegOp(sites, {x: op.shapes[x] for x in sites}, present, small)


def _refine_shape(shape, present, cuts):
    """Split slots so each cut (a divisor of the cumulative slot products)
    becomes a slot boundary; returns (shape, present, ok) without touching
    any matrix."""
    shape = list(shape)
    present = set(present)
    total = math.prod(shape)
    for t in sorted(set(cuts)):
        if t <= 1 or t >= total:
            continue
        c, pos = 1, None
        for s, d in enumerate(shape):
            if c == t:
                break
            if c < t < c * d:
                pos = s
                break
            c *= d
        if pos is None:
            continue
        d1, r = divmod(t, c)
        d = shape[pos]
        if r or d % d1:
            return tuple(shape), tuple(sorted(present)), False
        shape[pos:pos + 1] = [d1, d // d1]
        present = {p + 1 if p > pos else p for p in present} | (
            {pos, pos + 1} if pos in present else set()
        )
    return tuple(shape), tuple(sorted(present)), True


def _legop_refine_site(net, op: _LegOp, x, cuts) -> _LegOp:
    """Refine the tracked site ``x`` so the cuts are slot boundaries; an
    incompatible slot structure is first merged back to one site leg."""
    shape, pres, _ok = _refine_shape(op.shapes[x], op.present[x], cuts)
    if not _ok:
        op = _legop_grow(net, op, [(x, s) for s in range(len(op.shapes[x]))])
        shape, pres, _ok = _refine_shape((net.q(x),), (0,), cuts)
    shapes = dict(op.shapes)
    shapes[x] = shape
    present = dict(op.present)
    present[x] = pres
    return _LegOp(op.sites, shapes, present, op.mat)


def _split_slots(net, op: _LegOp, x, split):
    """Refine ``x`` to the (pre, a, post) split; returns (op, lo, hi) where
    slots lo..hi-1 make up the middle factor."""
    pre, a, _post = split
    op = _legop_refine_site(net, op, x, (pre, pre * a))
    cums = [1]
    for d in op.shapes[x]:
        cums.append(cums[-1] * d)
    return op, cums.index(pre), cums.index(pre * a)


# ---------------------------------------------------------------------------
# applying words


def _leg_conj_block(net, op: _LegOp, ss, u, tols: Tolerances) -> _LegOp:
    """Conjugate by a unitary on the sites ``ss``, growing the operator only
    by the legs the unitary genuinely acts on (identity tensor factors of
    ``u`` never inflate the support)."""
    gshapes, udims, ulegs = {}, [], []
    for y in ss:
        sh = op.shapes.get(y)
        if sh is None:
            sh = tuple(d for _, d in net.site_parts(y))
        gshapes[y] = sh
        for s, d in enumerate(sh):
            udims.append(d)
            ulegs.append((y, s))
    bd = math.prod(udims)
    u = np.asarray(u, dtype=complex)
    if u.shape != (bd, bd):
        raise InputError(f"block unitary on {ss!r} has shape {u.shape}, expected {bd}")
    gen = legs.support_legs(u, tuple(udims), GAP_FACTOR * tols.tol_alg)
    if not gen:
        return op
    acting = [ulegs[i] for i in gen]
    have = set(_leg_list(op))
    if not have & set(acting):
        return op
    ug = legs.extract_on_legs(u, tuple(udims), gen) if len(gen) < len(udims) else u
    op = _legop_grow(net, op, [l for l in acting if l not in have], gshapes)
    index = _leg_index(op)
    positions = tuple(index[l] for l in acting)
    mat = legs.conjugate_on_legs(op.mat, _leg_dims(op), positions, ug)
    return _LegOp(op.sites, op.shapes, op.present, mat)


def _leg_site_local(net, atom: SiteLocal, op: _LegOp, tols: Tolerances) -> _LegOp:
    for x in tuple(op.sites):
        u = atom.unit_at(x)
        if u is None:
            continue
        u = np.asarray(u, dtype=complex)
        q = net.q(x)
        if u.shape != (q, q):
            raise InputError(f"unit at {x!r} has shape {u.shape}, expected {q}")
        op = _leg_conj_block(net, op, (x,), u, tols)
    return op


def _leg_block_layer(net, atom: BlockLayer, op: _LegOp, window: Window,
                     tols: Tolerances) -> _LegOp:
    for ss, u in atom.blocks:
        if not set(ss) & set(op.sites):
            continue
        out = _leg_conj_block(net, op, ss, u, tols)
        if out is not op:
            _require_inside(window, ss, "a layer block")
        op = out
    return op


def _leg_window_unitary(net, atom: WindowUnitary, op: _LegOp, window: Window,
                        tols: Tolerances) -> _LegOp:
    wsites = tuple(atom.window.sites)
    if not set(wsites) & set(op.sites):
        return op
    out = _leg_conj_block(net, op, wsites, atom.unitary, tols)
    if out is not op:
        _require_inside(window, wsites, "the window unitary")
    return out


def _leg_partial_shift(net, atom: PartialShift, op: _LegOp, window: Window,
                       tols: Tolerances) -> _LegOp:
    f = atom.shift
    key = net.space.site_key

    # align every support site's slots with its (pre, a, post) split
    ranges = {}
    for x in tuple(op.sites):
        pre, a, post = atom.split_at(x, net.q(x))
        if a == 1:
            continue
        op, lo, hi = _split_slots(net, op, x, (pre, a, post))
        ranges[x] = (lo, hi, a)
    dest = {x: f.apply(x) for x in ranges}
    if len(set(dest.values())) != len(dest):
        raise InputError("shift is not injective on the operator's support")

    # a mover without window room or without a matching destination slot gets
    # one chance to prove it carries no content and be traced away
    tol = GAP_FACTOR * tols.tol_alg
    for x in list(ranges):
        lo, hi, a = ranges[x]
        pres = [s for s in op.present.get(x, ()) if lo <= s < hi]
        if not pres:
            continue
        y = dest[x]
        a_out = atom.split_at(y, net.q(y))[1]
        if y in window and a_out == a:
            continue
        index = _leg_index(op)
        dims = _leg_dims(op)
        if all(legs.acts_trivially_on_leg(op.mat, dims, index[(x, s)], tol) for s in pres):
            op = _legop_take(op, set(_leg_list(op)) - {(x, s) for s in pres})
            continue
        if y not in window:
            raise InputError(
                f"the shifted support needs sites {[y]!r} outside the window; "
                "fatten the window by the declared control"
            )
        raise InputError(
            f"moving factor changes dimension {a} -> {a_out} along {x!r} -> {y!r}"
        )

    # destinations that receive present legs adopt the source slot structure
    receivers = {}
    for x in ranges:
        lo, hi, _a = ranges[x]
        if any(lo <= s < hi for s in op.present.get(x, ())):
            receivers[dest[x]] = x

    leg_map = {}
    out_shapes = {}
    for z in set(op.sites) | set(receivers):
        old_shape = op.shapes.get(z)
        if z in receivers:
            x = receivers[z]
            lo_x, hi_x, _a = ranges[x]
            inc = list(op.shapes[x][lo_x:hi_x])
            if old_shape is None:
                pre, _az, post = atom.split_at(z, net.q(z))
                head = [pre] if pre > 1 else []
                tail = [post] if post > 1 else []
                lo_z, hi_z = len(head), len(head)
                old_pres = ()
            else:
                head = list(old_shape[:ranges[z][0]])
                tail = list(old_shape[ranges[z][1]:])
                lo_z, hi_z = ranges[z][0], ranges[z][1]
                old_pres = op.present.get(z, ())
            out_shapes[z] = tuple(head + inc + tail)
            shift_r = len(inc) - (hi_z - lo_z)
            for s in old_pres:
                if s < lo_z:
                    leg_map[(z, s)] = (z, s)
                elif s >= hi_z:
                    leg_map[(z, s)] = (z, s + shift_r)
            for j, s in enumerate(range(lo_x, hi_x)):
                if s in op.present.get(x, ()):
                    leg_map[(x, s)] = (z, lo_z + j)
        else:
            out_shapes[z] = old_shape
            lo_z, hi_z = ranges[z][:2] if z in ranges else (0, 0)
            for s in op.present.get(z, ()):
                if lo_z <= s < hi_z:
                    continue
                leg_map[(z, s)] = (z, s)

    order_new = sorted(leg_map.values(), key=lambda l: (key(l[0]), l[1]))
    inv = {v: k for k, v in leg_map.items()}
    old_index = _leg_index(op)
    order = tuple(old_index[inv[l]] for l in order_new)
    mat = legs.transpose_legs(op.mat, _leg_dims(op), order)
    present = {}
    for z, s in order_new:
        present.setdefault(z, []).append(s)
    sites = tuple(sorted(present, key=key))
    return _LegOp(sites, {z: out_shapes[z] for z in sites},
                  {z: tuple(ss) for z, ss in present.items()}, mat)


def _apply_atom(net, atom, op: _LegOp, window: Window, tols: Tolerances) -> _LegOp:
    if isinstance(atom, SiteLocal):
        return _leg_site_local(net, atom, op, tols)
    if isinstance(atom, BlockLayer):
        return _leg_block_layer(net, atom, op, window, tols)
    if isinstance(atom, WindowUnitary):
        return _leg_window_unitary(net, atom, op, window, tols)
    if isinstance(atom, PartialShift):
        return _leg_partial_shift(net, atom, op, window, tols)
    raise InputError(f"unknown word atom {type(atom).__name__}")


def _apply_leg(alpha: Automorphism, op: _LegOp, window: Window, tols: Tolerances) -> _LegOp:
    net = alpha.net
    _require_inside(window, op.sites, "the operator support")
    fat = fatten(op.sites, alpha.declared_control)
    _require_inside(window, [x for x in fat if net.q(x) > 1],
                    "the declared-control fattening of the support")
    cur = op
    for atom in alpha.word:
        cur = _apply_atom(net, atom, cur, window, tols)
    tol = GAP_FACTOR * tols.tol_alg
    cur = _legop_minimize(cur, tol)
    stray = [x for x in cur.sites if x not in set(fat)]
    if stray:
        cur = _legop_minimize(_legop_restrict(cur, fat, tol), tol)
    return cur


def apply(alpha: Automorphism, op: SupportedOp, window: Window, tols: Tolerances = DEFAULT) -> SupportedOp:
    """Evaluate the word on a finitely supported operator.

    The result is supported inside the declared-control fattening of the
    input support; the window must contain that fattening (up to sites with
    trivial legs, which carry no operator content).
    """
    out = _apply_leg(alpha, _legop_from_supported(alpha.net, op), window, tols)
    return _legop_to_supported(out)


def as_window_matrix(net, op: SupportedOp, window: Window) -> np.ndarray:
    """Embed a supported operator into the full window evaluation."""
    _require_inside(window, op.sites, "the operator support")
    return _embed_sites(net, op, window.sites)


# ---------------------------------------------------------------------------
# group structure


def identity_automorphism(net, label: str = "id") -> Automorphism:
    return Automorphism(net, (), diagonal(net.space), label)


def sitewise_automorphism(net, units, label: str = "") -> Automorphism:
    return Automorphism(net, (SiteLocal(units),), diagonal(net.space), label)


def _blocks_entourage(space, block_sites) -> Entourage:
    if space.has_metric:
        r = 0
        for ss in block_sites:
            for x in ss:
                for y in ss:
                    r = max(r, _metric_dist(space, x, y))
        return metric_ball(space, r)
    pairs = {(x, y) for ss in block_sites for x in ss for y in ss if x != y}
    return explicit_relation(space, pairs)


def layer_automorphism(net, blocks, control: Entourage | None = None, label: str = "") -> Automorphism:
    atom = BlockLayer(tuple(blocks))
    ctrl = control or _blocks_entourage(net.space, [ss for ss, _ in atom.blocks])
    return Automorphism(net, (atom,), ctrl, label)


def shift_automorphism(net, f: CoarseMap, factor_dims="full", control: Entourage | None = None,
                       label: str = "") -> Automorphism:
    if control is None:
        vec = _translate_like(f)
        if vec is None:
            raise InputError("a non-translation shift needs an explicit control")
        control = metric_ball(net.space, max((abs(v) for v in vec), default=0))
    return Automorphism(net, (PartialShift(f, factor_dims),), control, label)


def window_automorphism(net, window: Window, u, control: Entourage | None = None,
                        label: str = "") -> Automorphism:
    ctrl = control or _blocks_entourage(net.space, [window.sites])
    return Automorphism(net, (WindowUnitary(window, np.asarray(u, dtype=complex)),), ctrl, label)


def compose(alpha: Automorphism, beta: Automorphism) -> Automorphism:
    """alpha after beta: apply(compose(a, b), x) = apply(a, apply(b, x))."""
    if alpha.net is not beta.net and alpha.net != beta.net:
        raise InputError("can only compose automorphisms of the same net")
    control = compose_entourages(beta.declared_control, alpha.declared_control)
    return Automorphism(
        alpha.net,
        beta.word + alpha.word,
        control,
        f"{alpha.label}o{beta.label}" if alpha.label or beta.label else "",
    )


def _invert_map(f: CoarseMap) -> CoarseMap:
    if f.kind == "identity":
        return f
    if f.kind == "translate":
        return translate_map(f.domain, tuple(-v for v in f.vector))
    if f.kind == "explicit":
        inv = {}
        for s, img in f.table:
            if img in inv:
                raise InputError("map is not injective, so it has no inverse")
            inv[img] = s
        return CoarseMap(f.codomain, f.domain, "explicit", table=tuple(sorted(
            inv.items(), key=lambda kv: f.codomain.site_key(kv[0]))))
    if f.kind == "compose":
        parts = tuple(_invert_map(p) for p in reversed(f.parts))
        return CoarseMap(f.codomain, f.domain, "compose", parts=parts)
    raise StructureError("cannot invert a callable map without an explicit inverse")


def _invert_atom(atom):
    if isinstance(atom, SiteLocal):
        units = atom.units
        if callable(units):
            return SiteLocal(lambda x, _u=units: None if _u(x) is None else _dagger(_u(x)))
        return SiteLocal({x: _dagger(u) for x, u in units.items()})
    if isinstance(atom, BlockLayer):
        return BlockLayer(tuple((ss, _dagger(u)) for ss, u in atom.blocks))
    if isinstance(atom, WindowUnitary):
        return WindowUnitary(atom.window, _dagger(atom.unitary))
    if isinstance(atom, PartialShift):
        return PartialShift(_invert_map(atom.shift), atom.factor_dims)
    raise InputError(f"unknown word atom {type(atom).__name__}")


def invert(alpha: Automorphism) -> Automorphism:
    word = tuple(_invert_atom(a) for a in reversed(alpha.word))
    return Automorphism(
        alpha.net,
        word,
        invert_entourage(alpha.declared_control),
        f"{alpha.label}^-1" if alpha.label else "",
    )


# ---------------------------------------------------------------------------
# measuring control


def core_sites(net, window: Window, e: Entourage) -> tuple:
    """Window sites whose e-fattening (ignoring trivial legs) stays inside."""
    inside = set(window.sites)
    return tuple(
        x for x in window.sites
        if all(y in inside for y in fatten((x,), e) if net.q(y) > 1)
    )


def measure_control(alpha: Automorphism, window: Window, tols: Tolerances = DEFAULT) -> Entourage:
    """The semantic control: smallest normal-form entourage covering the
    supports of all single-site images."""
    net = alpha.net
    space = net.space
    core = core_sites(net, window, alpha.declared_control)
    if not core:
        raise InputError("window margins are smaller than the declared control")
    radius = 0
    pairs = set()
    for x in core:
        q = net.q(x)
        if q == 1:
            continue
        for _, _, e in matalg.matrix_units(q):
            img = apply(alpha, SupportedOp((x,), e), window, tols)
            dims = _site_dims(net, img.sites)
            sup = legs.support_legs(img.mat, dims, GAP_FACTOR * tols.tol_alg)
            for li in sup:
                y = img.sites[li]
                if space.has_metric:
                    radius = max(radius, _metric_dist(space, x, y))
                elif y != x:
                    pairs.add((y, x))
    if space.has_metric:
        return metric_ball(space, radius)
    return explicit_relation(space, pairs)


def probe_distance(alpha: Automorphism, beta: Automorphism, window: Window,
                   tols: Tolerances = DEFAULT) -> float:
    """Worst operator-norm distance between the images of single-site matrix
    units over all sites with enough margin for both words."""
    if alpha.net is not beta.net and alpha.net != beta.net:
        raise InputError("probe comparison needs a common net")
    net = alpha.net
    both = union_entourages(alpha.declared_control, beta.declared_control)
    core = core_sites(net, window, both)
    if not core:
        raise InputError("window margins are smaller than the declared controls")
    worst = 0.0
    for x in core:
        q = net.q(x)
        if q == 1:
            continue
        for _, _, e in matalg.matrix_units(q):
            ia = apply(alpha, SupportedOp((x,), e), window, tols)
            ib = apply(beta, SupportedOp((x,), e), window, tols)
            big = tuple(sorted(set(ia.sites) | set(ib.sites), key=net.space.site_key))
            ma = _embed_sites(net, ia, big)
            mb = _embed_sites(net, ib, big)
            worst = max(worst, float(np.linalg.norm(ma - mb, 2)))
    return worst


# ---------------------------------------------------------------------------
# locality certificates


@dataclass(eq=False)
class LocalityCertificate:
    """Claims the window algebra splits as a tensor product of commuting
    block factors, each preserved by the automorphism."""

    blocks: tuple  # ((sites, AzumayaPresentation), ...)
    uniform_bound: Entourage

    def __post_init__(self):
        self.blocks = tuple((tuple(ss), fac) for ss, fac in self.blocks)
        for ss, _ in self.blocks:
            for x in ss:
                for y in ss:
                    if not self.uniform_bound.contains_pair(x, y):
                        raise InputError(
                            f"block pair ({x!r}, {y!r}) escapes the uniform bound"
                        )


@dataclass(eq=False)
class CertificateReport:
    passed: bool
    commuting: bool
    generates: bool
    invariant: bool
    failures: tuple
    block_count: int
    notes: tuple = ()


def sitewise_certificate(net, sites) -> LocalityCertificate:
    """Singleton blocks carrying the full site algebras."""
    blocks = []
    for x in sites:
        q = net.q(x)
        table = {x: [e for _, _, e in matalg.matrix_units(q)]}
        fac = nets.sitewise_presentation(net, table, label=f"site {x!r}")
        blocks.append(((x,), fac))
    return LocalityCertificate(tuple(blocks), diagonal(net.space))


def block_certificate(net, block_sites, gen_lists=None) -> LocalityCertificate:
    """Blocks carrying full block algebras (or explicit generator lists)."""
    blocks = []
    for i, ss in enumerate(block_sites):
        ss = tuple(ss)
        if gen_lists is None:
            w = Window(net.space, ss)
            mats = nets.evaluation(net, w).unit_generators()
        else:
            mats = list(gen_lists[i])
        fac = nets.window_presentation(net, [(ss, mats)], _blocks_entourage(net.space, [ss]),
                                       label=f"block {i}")
        blocks.append((ss, fac))
    return LocalityCertificate(tuple(blocks),
                               _blocks_entourage(net.space, [ss for ss, _ in blocks]))


def _overlap_clusters(blocks) -> list:
    """Connected components of the block overlap graph (indices)."""
    n = len(blocks)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if set(blocks[i][0]) & set(blocks[j][0]):
                parent[find(i)] = find(j)
    out = {}
    for i in range(n):
        out.setdefault(find(i), []).append(i)
    return list(out.values())


def _product_span(bases, amb: int, tols: Tolerances) -> np.ndarray:
    """Orthonormal basis of span{a_1 ... a_k : a_i from the i-th basis}.

    For pairwise commuting *-closed spans this span is already an algebra, so
    it equals the algebra the factors generate — no word closure needed.
    """
    span = np.asarray(bases[0], dtype=complex)
    for b in bases[1:]:
        rows = np.einsum("aij,bjk->abik", span, np.asarray(b, dtype=complex))
        span = matalg.orthonormal_rows(rows.reshape(-1, amb, amb), amb, tols)
    return span


def _cluster_generates(net, blocks, block_algs, cluster, tols: Tolerances):
    """Check the cluster's factors generate the full algebra on their union.

    Works outward from each site: the units at a site must lie in the product
    span of a small subset of covering factors, so the ambient never needs to
    exceed the subset union.  The last fallback (the whole cluster) is exact
    because commuting factors generate exactly their product span.
    """
    key = net.space.site_key
    failures = []
    all_sites = sorted({x for i in cluster for x in blocks[i][0]}, key=key)
    for x in (s for s in all_sites if net.q(s) > 1):
        subset = [i for i in cluster if x in set(blocks[i][0])]
        while True:
            union = tuple(sorted({y for i in subset for y in blocks[i][0]}, key=key))
            amb = math.prod(net.q(y) for y in union)
            matalg.ensure_ambient(amb, tols)
            bases = [
                [_embed_sites(net, SupportedOp(blocks[i][0], b), union)
                 for b in block_algs[i].basis]
                for i in subset
            ]
            span = matalg.StarAlgebra(_product_span(bases, amb, tols))
            pos = union.index(x)
            dims = _site_dims(net, union)
            units = [legs.embed(e, (pos,), dims) for _, _, e in matalg.matrix_units(net.q(x))]
            if all(span.contains(u, tols) for u in units):
                break
            rest = [i for i in cluster if i not in subset]
            grow = [i for i in rest if set(blocks[i][0]) & set(union)]
            if not grow:
                failures.append(
                    f"site {x!r}: units are not generated by the covering blocks "
                    f"{sorted(subset)}"
                )
                return False, failures
            subset.append(min(grow, key=lambda i: math.prod(
                net.q(y) for y in set(blocks[i][0]) - set(union))))
    return True, failures


def verify_certificate(alpha: Automorphism, cert: LocalityCertificate, window: Window,
                       tols: Tolerances = DEFAULT) -> CertificateReport:
    """Check that the certificate's factors commute, generate the window
    algebra, and are each mapped onto themselves by the automorphism."""
    net = alpha.net
    key = net.space.site_key
    failures = []
    notes = []
    for ss, _ in cert.blocks:
        _require_inside(window, ss, "a certificate block")

    covered = {x for ss, _ in cert.blocks for x in ss}
    uncovered = [x for x in window.sites if net.q(x) > 1 and x not in covered]
    if uncovered:
        failures.append(f"sites {uncovered[:4]!r} are not covered by any block")

    block_gens = []
    for ss, fac in cert.blocks:
        gens = fac.generators(Window(net.space, ss))
        block_gens.append([np.asarray(g, dtype=complex) for g in gens])

    commuting = True
    for i in range(len(cert.blocks)):
        for j in range(i + 1, len(cert.blocks)):
            si, sj = set(cert.blocks[i][0]), set(cert.blocks[j][0])
            if not si & sj:
                continue
            big = tuple(sorted(si | sj, key=key))
            gi = [_embed_sites(net, SupportedOp(cert.blocks[i][0], g), big) for g in block_gens[i]]
            gj = [_embed_sites(net, SupportedOp(cert.blocks[j][0], g), big) for g in block_gens[j]]
            for a in gi:
                for b in gj:
                    scale = max(1.0, float(np.linalg.norm(a) * np.linalg.norm(b)))
                    if np.linalg.norm(a @ b - b @ a) > GAP_FACTOR * tols.tol_alg * scale:
                        commuting = False
                        failures.append(f"blocks {i} and {j} do not commute")
                        break
                if not commuting:
                    break
    if all(not (set(a[0]) & set(b[0]))
           for i, a in enumerate(cert.blocks) for b in cert.blocks[i + 1:]):
        notes.append("all blocks disjoint; commutation is automatic")

    block_algs = []
    for idx, (ss, _) in enumerate(cert.blocks):
        amb = math.prod(net.q(x) for x in ss)
        matalg.ensure_ambient(amb, tols)
        block_algs.append(matalg.algebra_from_generators(block_gens[idx], amb, tols))

    generates = True
    for cluster in _overlap_clusters(cert.blocks):
        ok, fails = _cluster_generates(net, cert.blocks, block_algs, cluster, tols)
        generates = generates and ok
        failures.extend(fails)

    invariant = True
    for idx, (ss, _) in enumerate(cert.blocks):
        alg = block_algs[idx]
        fat = fatten(ss, alpha.declared_control)
        _require_inside(window, [x for x in fat if net.q(x) > 1], "a block's control fattening")
        fat = tuple(x for x in fat if net.q(x) > 1 or x in set(ss))
        scale = math.sqrt(math.prod(net.q(x) for x in fat if x not in set(ss)))
        embedded = np.array([
            _embed_sites(net, SupportedOp(ss, b), fat) / scale for b in alg.basis
        ])
        span = matalg.StarAlgebra(embedded)
        for b in alg.basis:
            img = apply(alpha, SupportedOp(ss, b), window, tols)
            m = _embed_sites(net, img, fat) if set(img.sites) <= set(fat) else None
            if m is None or not span.contains(m, tols):
                invariant = False
                failures.append(f"block {idx} is not mapped onto itself")
                break

    passed = commuting and generates and invariant and not uncovered
    return CertificateReport(passed, commuting, generates, invariant,
                             tuple(failures), len(cert.blocks), tuple(notes))


def conjugate_certificate(beta: Automorphism, cert: LocalityCertificate) -> LocalityCertificate:
    """Transport a certificate along beta: blocks fatten by beta's control and
    factors become their beta-images."""
    net = beta.net
    e = beta.declared_control
    new_blocks = []
    for ss, fac in cert.blocks:
        nss = fatten(ss, e)

        def gen(w, _ss=ss, _fac=fac):
            base = Window(net.space, _ss)
            out = []
            for g in _fac.generators(base):
                img = apply(beta, SupportedOp(_ss, np.asarray(g, dtype=complex)), w)
                out.append(_embed_sites(net, img, w.sites))
            return out

        ctrl = compose_entourages(compose_entourages(invert_entourage(e), fac.control), e)
        new_blocks.append((nss, nets.AzumayaPresentation(net, ctrl, gen,
                                                         label=f"{fac.label}^conj")))
    bound = compose_entourages(
        compose_entourages(invert_entourage(e), cert.uniform_bound), e
    )
    return LocalityCertificate(tuple(new_blocks), bound)


# ---------------------------------------------------------------------------
# layering into circuits


@dataclass(eq=False)
class Circuit:
    """Layers of pairwise disjoint blocks with one unitary per block."""

    layers: tuple  # each layer: ((sites, unitary), ...)

    def __post_init__(self):
        self.layers = tuple(BlockLayer(layer).blocks for layer in self.layers)

    @property
    def depth(self) -> int:
        return len(self.layers)


def circuit_automorphism(net, circ: Circuit, control: Entourage | None = None,
                         label: str = "") -> Automorphism:
    word = tuple(BlockLayer(layer) for layer in circ.layers)
    if control is None:
        control = diagonal(net.space)
        for layer in circ.layers:
            control = compose_entourages(
                _blocks_entourage(net.space, [ss for ss, _ in layer]), control
            )
    return Automorphism(net, word, control, label)


def uniform_local_finiteness_bound(Y, e: Entourage, window: Window) -> int:
    """max over support points x in Y of #{y in Y : (y, x) in E}.

    For a symmetric entourage this is the largest patch size #(E[x] ∩ Y),
    which is exactly what bounds the greedy layering depth.
    """
    ys = [y for y in Y if y in window]
    return max(
        (sum(1 for y in ys if e.contains_pair(y, x)) for x in ys),
        default=0,
    )


def layer_circuit(alpha: Automorphism, cert: LocalityCertificate, Y, window: Window,
                  tols: Tolerances = DEFAULT) -> Circuit:
    """Compile a certified automorphism into a circuit of depth <= n + 1.

    Wellorders the support Y by site order, greedily colors it so the patches
    E[y] ∩ Y inside one layer are pairwise disjoint, places every block with
    the least dominating support point, and extracts each block unitary from
    the inner action on the block factor.
    """
    report = verify_certificate(alpha, cert, window, tols)
    if not report.passed:
        raise InputError(f"certificate does not verify: {report.failures}")
    net = alpha.net
    key = net.space.site_key
    e = cert.uniform_bound
    ys = sorted(set(Y), key=key)
    n = uniform_local_finiteness_bound(ys, e, window)

    anchored = []
    for idx, (ss, fac) in enumerate(cert.blocks):
        anchor = next((y for y in ys if set(ss) <= set(fatten((y,), e))), None)
        if anchor is None:
            raise InputError(f"no support point dominates block {idx}")
        anchored.append((key(anchor), ss, fac))
    anchored.sort(key=lambda t: t[0])

    layer_of = {}
    layer_cover = []  # union of block supports per layer
    for i, (_, ss, _) in enumerate(anchored):
        placed = False
        for l, cover in enumerate(layer_cover):
            if not (set(ss) & cover):
                layer_of[i] = l
                cover |= set(ss)
                placed = True
                break
        if not placed:
            if len(layer_cover) > n:
                raise StructureError(
                    "layer coloring exceeded the uniform local finiteness bound; "
                    "the certificate's uniform bound is inconsistent"
                )
            layer_of[i] = len(layer_cover)
            layer_cover.append(set(ss))

    layers = [[] for _ in layer_cover]
    for i, (_, ss, fac) in enumerate(anchored):
        amb = math.prod(net.q(x) for x in ss)
        gens = fac.generators(Window(net.space, ss))
        alg = matalg.algebra_from_generators(gens, amb, tols)
        split = matalg.tensor_factor_split(alg, tols)
        if not split.is_factor:
            raise StructureError(f"certificate factor {i} is not a tensor factor: {split.reason}")

        def phi(small, _ss=ss, _split=split):
            emb = _split.embed_factor(small)
            img = apply(alpha, SupportedOp(_ss, emb), window, tols)
            back = _restrict_supported(net, img, _ss, tols)
            return _split.inner_factor(back.mat)

        v = matalg.inner_unitary(phi, split.a_dim, tols)
        layers[layer_of[i]].append((ss, split.embed_factor(v)))
    return Circuit(tuple(tuple(layer) for layer in layers if layer))


# ---------------------------------------------------------------------------
# swap trick


def _swap_matrix(q: int) -> np.ndarray:
    s = np.zeros((q * q, q * q), dtype=complex)
    for i in range(q):
        for j in range(q):
            s[j * q + i, i * q + j] = 1.0
    return s


def _site_hom_unitary(phi: nets.NetHom, x, tols: Tolerances) -> np.ndarray:
    """The unitary of a site-preserving net isomorphism at one site."""
    space = phi.source.space
    wx = Window(space, (x,))
    tw = phi.target_window(wx)
    if tuple(tw.sites) != (x,):
        raise StructureError("the swap trick needs a site-preserving isomorphism")
    q = phi.source.q(x)
    if phi.target.q(x) != q:
        raise StructureError(f"isomorphism changes the site dimension at {x!r}")
    return matalg.inner_unitary(lambda a: phi.apply(a, wx), q, tols)


def swap_trick(phi: nets.NetHom, tols: Tolerances = DEFAULT) -> Automorphism:
    """The involution Phi(a (x) a') = phi^{-1}(a') (x) phi(a) of A (x) A',
    realized as a site-local unitary word on the tensor net."""
    tnet = nets.tensor(phi.source, phi.target)

    def unit(x, _phi=phi, _tols=tols):
        q = _phi.source.q(x)
        if q == 1 and _phi.target.q(x) == 1:
            return None
        u = _site_hom_unitary(_phi, x, _tols)
        return np.kron(_dagger(u), u) @ _swap_matrix(q)

    return Automorphism(tnet, (SiteLocal(unit),), diagonal(tnet.space),
                        f"swap[{phi.label}]" if phi.label else "swap")


# ---------------------------------------------------------------------------
# stable elements and relation moves


@dataclass(eq=False)
class StableElement:
    """A net together with one of its automorphisms, plus the relation moves
    that produced it."""

    net: nets.LocalMatrixNet
    alpha: Automorphism
    history: tuple = ()


def stable_element(alpha: Automorphism) -> StableElement:
    return StableElement(alpha.net, alpha, ())


def _lift_units(atom: SiteLocal, self_net, other_net, copy: int):
    def unit(x, _a=atom, _sn=self_net, _on=other_net, _c=copy):
        u = _a.unit_at(x)
        if u is None:
            return None
        other_q = _on.q(x)
        if _c == 0:
            return np.kron(np.asarray(u, dtype=complex), np.eye(other_q))
        return np.kron(np.eye(other_q), np.asarray(u, dtype=complex))

    return SiteLocal(unit)


def _lift_block_matrix(u, sites, self_net, other_net, copy: int) -> np.ndarray:
    mixed = []
    for x in sites:
        a, b = self_net.q(x), other_net.q(x)
        mixed.extend((a, b) if copy == 0 else (b, a))
    positions = tuple(2 * i + copy for i in range(len(sites)))
    return legs.embed(np.asarray(u, dtype=complex), positions, tuple(mixed))


def _lift_atom(atom, self_net, other_net, copy: int):
    if isinstance(atom, SiteLocal):
        return _lift_units(atom, self_net, other_net, copy)
    if isinstance(atom, BlockLayer):
        return BlockLayer(tuple(
            (ss, _lift_block_matrix(u, ss, self_net, other_net, copy))
            for ss, u in atom.blocks
        ))
    if isinstance(atom, WindowUnitary):
        return WindowUnitary(
            atom.window,
            _lift_block_matrix(atom.unitary, atom.window.sites, self_net, other_net, copy),
        )
    if isinstance(atom, PartialShift):
        def fd(x, _a=atom, _sn=self_net, _on=other_net, _c=copy):
            pre, mid, post = _a.split_at(x, _sn.q(x))
            oq = _on.q(x)
            return (pre, mid, post * oq) if _c == 0 else (oq * pre, mid, post)

        return PartialShift(atom.shift, fd)
    raise InputError(f"unknown word atom {type(atom).__name__}")


def _lift_word(alpha: Automorphism, other_net, copy: int) -> tuple:
    return tuple(_lift_atom(a, alpha.net, other_net, copy) for a in alpha.word)


def stabilize(elem: StableElement, other_net) -> StableElement:
    """Tensor with a fresh net, extending the automorphism by the identity."""
    if other_net.space != elem.net.space:
        raise InputError("stabilization needs a net over the same space")
    tnet = nets.tensor(elem.net, other_net)
    alpha = Automorphism(tnet, _lift_word(elem.alpha, other_net, 0),
                         elem.alpha.declared_control, elem.alpha.label)
    return StableElement(tnet, alpha, elem.history + (("stabilize", other_net.label),))


def conjugate_local(elem: StableElement, phi: nets.NetHom,
                    tols: Tolerances = DEFAULT) -> StableElement:
    """Replace (net, alpha) by (net', phi o alpha o phi^{-1}) for a diagonally
    controlled isomorphism phi."""
    if phi.source is not elem.net and phi.source != elem.net:
        raise InputError("the isomorphism must start at the element's net")
    if phi.control.pairs or (phi.control.radius or 0) != 0:
        raise InputError("local conjugation needs a diagonally controlled isomorphism")
    cache = {}

    def u_of(x, _phi=phi, _tols=tols, _cache=cache):
        if x not in _cache:
            q = _phi.source.q(x)
            _cache[x] = None if q == 1 else _site_hom_unitary(_phi, x, _tols)
        return _cache[x]

    word = (
        (SiteLocal(lambda x, _u=u_of: None if _u(x) is None else _dagger(_u(x))),)
        + elem.alpha.word
        + (SiteLocal(u_of),)
    )
    alpha = Automorphism(phi.target, word, elem.alpha.declared_control,
                         f"{phi.label}*{elem.alpha.label}" if phi.label else elem.alpha.label)
    return StableElement(phi.target, alpha, elem.history + (("conjugate", phi.label),))


def multiply(elem: StableElement, other: StableElement) -> StableElement:
    """The group product: compose the automorphisms on a common net."""
    alpha = compose(elem.alpha, other.alpha)
    return StableElement(elem.net, alpha, elem.history + (("multiply", other.alpha.label),))


def eh_tensor(elem: StableElement, other: StableElement) -> StableElement:
    """The second monoid operation: [A, a] * [B, b] = [A (x) B, a (x) b]."""
    if other.net.space != elem.net.space:
        raise InputError("tensor needs nets over the same space")
    tnet = nets.tensor(elem.net, other.net)
    word = _lift_word(elem.alpha, other.net, 0) + tuple(
        _lift_atom(a, other.net, elem.net, 1) for a in other.alpha.word
    )
    control = union_entourages(elem.alpha.declared_control, other.alpha.declared_control)
    alpha = Automorphism(tnet, word, control,
                         f"{elem.alpha.label}(x){other.alpha.label}")
    return StableElement(tnet, alpha, elem.history + (("tensor", other.alpha.label),))


def stable_ops(elem: StableElement) -> dict:
    """The relation moves available on a stable element."""
    return {
        "stabilize": lambda other_net: stabilize(elem, other_net),
        "conjugate_local": lambda phi, tols=DEFAULT: conjugate_local(elem, phi, tols),
        "multiply": lambda other: multiply(elem, other),
        "eh_tensor": lambda other: eh_tensor(elem, other),
    }
