"""Nets of matrix algebras over coarse spaces.

A local matrix net assigns to each site a finite list of tensor "parts"
(label, dimension); the window algebra is the tensor product of all parts of
all window sites, ordered by the global site order and the per-site part
order.  Part labels are globally unique, which lets every structural
isomorphism (tensor interleaving, pushforward transport, swindle slot shifts)
be realized as an explicit leg permutation computed by label matching.

Azumaya subnets are represented by presentations inside a local matrix net:
a window-indexed family of generators plus a control entourage.  All global
statements are replaced by window-relative ones with a stabilization margin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import legs, matalg
from .coarse import (
    CoarseMap,
    Entourage,
    Window,
    _metric_dist,
    _translate_like,
    are_close,
    check_flasque,
    compose_entourages,
    diagonal,
    explicit_relation,
    invert_entourage,
    metric_ball,
    union_entourages,
)
from .config import DEFAULT, Tolerances
from .errors import IndeterminateError, InputError, ResourceError, StructureError


# ---------------------------------------------------------------------------
# local matrix nets


@dataclass(frozen=True)
class LocalMatrixNet:
    """Sitewise tensor parts over a coarse space.

    ``parts_fn(x)`` returns a tuple of (label, dim) pairs for the site x;
    labels must be globally unique across all sites.  ``support`` is "all"
    (consult parts_fn everywhere) or a frozenset of sites outside of which the
    local dimension is 1.
    """

    space: object
    parts_fn: object
    support: object = "all"
    label: str = ""

    def site_parts(self, x) -> tuple:
        if self.support != "all" and x not in self.support:
            return ()
        out = []
        for lab, d in self.parts_fn(x):
            d = int(d)
            if d < 1:
                raise InputError(f"local dimension {d} at site {x!r}")
            if d >= 2:
                out.append((lab, d))
        return tuple(out)

    def q(self, x) -> int:
        return math.prod(d for _, d in self.site_parts(x))

    def dims_table(self, sites) -> dict:
        return {x: self.q(x) for x in sites}


def uniform_net(space, q: int, support=None, label: str = "") -> LocalMatrixNet:
    """The net with local dimension q on every site of ``support`` (or all)."""
    sup = "all" if support is None else frozenset(support)
    return LocalMatrixNet(space, lambda x: ((x, q),), sup, label or f"q={q}")


def table_net(space, dims, label: str = "") -> LocalMatrixNet:
    """Net from an explicit site -> dimension (or parts tuple) table."""
    entries = {}
    for site, val in (dims.items() if isinstance(dims, dict) else dims):
        if isinstance(val, int):
            entries[site] = ((site, val),)
        else:
            entries[site] = tuple(val)
    return LocalMatrixNet(
        space, lambda x: entries.get(x, ()), frozenset(entries), label
    )


def materialize(net: LocalMatrixNet, sites) -> LocalMatrixNet:
    """Freeze the computed parts on ``sites`` into an explicit table net."""
    entries = {x: net.site_parts(x) for x in sites}
    entries = {x: p for x, p in entries.items() if p}
    return LocalMatrixNet(
        net.space, lambda x: entries.get(x, ()), frozenset(entries), net.label
    )


# ---------------------------------------------------------------------------
# window evaluations


@dataclass(frozen=True)
class Evaluation:
    """The matrix-algebra picture of a net on one window: an ordered leg list."""

    net: LocalMatrixNet
    window: Window
    legs: tuple  # ((site, label, dim), ...)

    @cached_property
    def dims(self) -> tuple:
        return tuple(d for _, _, d in self.legs)

    @cached_property
    def ambient(self) -> int:
        return math.prod(self.dims)

    @cached_property
    def label_pos(self) -> dict:
        return {lab: i for i, (_, lab, _) in enumerate(self.legs)}

    def site_positions(self, site) -> tuple:
        return tuple(i for i, (s, _, _) in enumerate(self.legs) if s == site)

    def positions_of_window(self, sub: Window) -> tuple:
        return tuple(i for i, (s, _, _) in enumerate(self.legs) if s in sub)

    def embed_at(self, mat: np.ndarray, positions) -> np.ndarray:
        return legs.embed(np.asarray(mat, dtype=complex), tuple(positions), self.dims)

    def unit_generators(self, positions=None) -> list:
        """Per-leg matrix units, embedded; they generate the block algebra."""
        if positions is None:
            positions = range(len(self.legs))
        out = []
        for p in positions:
            d = self.dims[p]
            for _, _, e in matalg.matrix_units(d):
                out.append(self.embed_at(e, (p,)))
        return out


def evaluation(net: LocalMatrixNet, window: Window) -> Evaluation:
    if window.space != net.space:
        raise InputError("window space does not match the net's space")
    lg = []
    for x in window.sites:
        for lab, d in net.site_parts(x):
            lg.append((x, lab, d))
    ev = Evaluation(net, window, tuple(lg))
    if len(set(lab for _, lab, _ in lg)) != len(lg):
        raise StructureError("part labels collide inside the window")
    return ev


def relabel_matrix(
    mat: np.ndarray, src: Evaluation, dst: Evaluation, label_map=None
) -> np.ndarray:
    """Transport an operator between evaluations by matching leg labels."""
    lm = label_map or (lambda lab: lab)
    mat = np.asarray(mat, dtype=complex)
    if mat.shape != (src.ambient, src.ambient):
        raise InputError(f"matrix shape {mat.shape} does not match ambient {src.ambient}")
    pos = []
    for site, lab, d in src.legs:
        tgt = lm(lab)
        if tgt not in dst.label_pos:
            raise StructureError(f"target window is missing the leg {tgt!r}")
        p = dst.label_pos[tgt]
        if dst.dims[p] != d:
            raise StructureError(f"leg {tgt!r} changes dimension {d} -> {dst.dims[p]}")
        pos.append(p)
    order = sorted(range(len(pos)), key=lambda i: pos[i])
    if order != list(range(len(pos))):
        q = legs.leg_permutation(src.dims, order)
        mat = q @ mat @ q.conj().T
    return legs.embed(mat, sorted(pos), dst.dims)


# ---------------------------------------------------------------------------
# Azumaya presentations and net homomorphisms


@dataclass(frozen=True)
class AzumayaPresentation:
    """A subnet presented by window generators inside a local matrix net.

    ``gen_fn(window)`` returns generator matrices living in the ambient
    net's evaluation on that window; generators of subwindows are implicitly
    included by evaluating gen_fn there.
    """

    ambient: LocalMatrixNet
    control: Entourage
    gen_fn: object
    label: str = ""

    def generators(self, window: Window) -> list:
        return [np.asarray(g, dtype=complex) for g in self.gen_fn(window)]


def full_presentation(net: LocalMatrixNet) -> AzumayaPresentation:
    def gen(w):
        return evaluation(net, w).unit_generators()

    return AzumayaPresentation(net, diagonal(net.space), gen, "full")


def scalars_presentation(net: LocalMatrixNet) -> AzumayaPresentation:
    return AzumayaPresentation(net, diagonal(net.space), lambda w: [], "scalars")


def sitewise_presentation(
    net: LocalMatrixNet, table: dict, control: Entourage | None = None, label: str = ""
) -> AzumayaPresentation:
    """Generators given per site, each acting on that site's full local block."""

    def gen(w):
        ev = evaluation(net, w)
        out = []
        for x, mats in table.items():
            if x in w:
                pos = ev.site_positions(x)
                for m in mats:
                    out.append(ev.embed_at(m, pos))
        return out

    return AzumayaPresentation(net, control or diagonal(net.space), gen, label)


def window_presentation(
    net: LocalMatrixNet, entries, control: Entourage, label: str = ""
) -> AzumayaPresentation:
    """Generators attached to finite site tuples (sites in global site order);
    an entry contributes exactly when all its sites lie in the window."""
    entries = tuple((tuple(sites), tuple(mats)) for sites, mats in entries)

    def gen(w):
        ev = evaluation(net, w)
        out = []
        for sites, mats in entries:
            if all(s in w for s in sites):
                pos = [p for s in sites for p in ev.site_positions(s)]
                if pos != sorted(pos):
                    raise StructureError("entry sites must follow the global site order")
                for m in mats:
                    out.append(ev.embed_at(m, pos))
        return out

    return AzumayaPresentation(net, control, gen, label)


@dataclass(frozen=True)
class NetHom:
    """A controlled homomorphism between nets.

    The structural part is a label map (slot shuffle realized by a leg
    permutation); an optional window unitary conjugates afterwards.  The
    control entourage bounds how far legs may move.
    """

    source: object
    target: object
    control: Entourage
    inverse_control: Entourage | None = None
    label_map: object = None
    window_unitary: object = None
    label: str = ""

    def target_window(self, src_window: Window) -> Window:
        return src_window.fatten(self.control)

    def source_window_for(self, dst_window: Window) -> Window:
        """The largest source window whose legs all land inside ``dst_window``."""
        e = self.inverse_control or invert_entourage(self.control)
        cand = dst_window.fatten(e)
        te = evaluation(self.target, dst_window)
        lm = self.label_map or (lambda lab: lab)
        keep = [
            x
            for x in cand.sites
            if self.source.space.contains(x)
            and all(lm(lab) in te.label_pos for lab, _ in self.source.site_parts(x))
        ]
        if not keep:
            raise StructureError("no source site maps into the target window")
        return Window(self.source.space, tuple(keep))

    def apply(self, mat: np.ndarray, src_window: Window, dst_window: Window | None = None):
        dst_window = dst_window or self.target_window(src_window)
        se = evaluation(self.source, src_window)
        te = evaluation(self.target, dst_window)
        out = relabel_matrix(mat, se, te, self.label_map)
        if self.window_unitary is not None:
            u = self.window_unitary(te)
            out = u @ out @ u.conj().T
        return out


def identity_hom(net: LocalMatrixNet) -> NetHom:
    e = diagonal(net.space)
    return NetHom(net, net, e, e, label="id")


def conjugation_hom(
    net: LocalMatrixNet, site_unitaries: dict, control: Entourage | None = None
) -> NetHom:
    """Conjugation by a product of one-site unitaries (control Δ by default)."""

    def wu(te: Evaluation):
        u = np.eye(te.ambient, dtype=complex)
        for x, ux in site_unitaries.items():
            pos = te.site_positions(x)
            if pos:
                u = u @ te.embed_at(ux, pos)
        return u

    e = control or diagonal(net.space)
    return NetHom(net, net, e, invert_entourage(e), window_unitary=wu, label="conj")


# ---------------------------------------------------------------------------
# core operations


def evaluate(net, window: Window, tols: Tolerances = DEFAULT) -> matalg.StarAlgebra:
    """The window algebra: full tensor product for local nets, generated
    subalgebra for presentations."""
    if isinstance(net, AzumayaPresentation):
        ev = evaluation(net.ambient, window)
        matalg.ensure_ambient(ev.ambient, tols)
        return matalg.algebra_from_generators(net.generators(window), ev.ambient, tols)
    ev = evaluation(net, window)
    matalg.ensure_ambient(ev.ambient, tols)
    return matalg.full_algebra(ev.ambient)


def tensor(a, b):
    """Sitewise tensor product; parts keep their origin in the label."""
    if isinstance(a, AzumayaPresentation) or isinstance(b, AzumayaPresentation):
        if not (isinstance(a, AzumayaPresentation) and isinstance(b, AzumayaPresentation)):
            raise InputError("tensor mixes a presentation with a bare net")
        amb = tensor(a.ambient, b.ambient)
        control = union_entourages(a.control, b.control)

        def gen(w):
            ev = evaluation(amb, w)
            out = []
            for sub, tag in ((a, 0), (b, 1)):
                se = evaluation(sub.ambient, w)
                for g in sub.generators(w):
                    out.append(relabel_matrix(g, se, ev, lambda lab, t=tag: (t, lab)))
            return out

        return AzumayaPresentation(amb, control, gen, f"{a.label}(x){b.label}")
    if a.space != b.space:
        raise InputError("tensor factors live over different spaces")

    def parts(x):
        pa = tuple(((0, lab), d) for lab, d in a.site_parts(x))
        pb = tuple(((1, lab), d) for lab, d in b.site_parts(x))
        return pa + pb

    if a.support == "all" or b.support == "all":
        sup = "all"
    else:
        sup = a.support | b.support
    return LocalMatrixNet(a.space, parts, sup, f"{a.label}(x){b.label}")


def transport_entourage(f: CoarseMap, e: Entourage) -> Entourage:
    """An entourage containing (f x f)(E), kept in normal form."""
    space = f.codomain
    if _translate_like(f) is not None:
        if e.radius is not None and not e.pairs:
            return metric_ball(space, e.radius)
        pairs = frozenset((f.apply(x), f.apply(y)) for x, y in e.pairs)
        return Entourage(space, e.radius, pairs)
    if e.radius is None:
        pairs = frozenset((f.apply(x), f.apply(y)) for x, y in e.pairs)
        return explicit_relation(space, pairs)
    if not space.has_metric:
        raise StructureError("cannot transport a metric entourage through this map")
    sites = {x for p in e.pairs for x in p}
    bound = f.displacement_bound(sites) if sites else 0
    pairs = frozenset((f.apply(x), f.apply(y)) for x, y in e.pairs)
    return Entourage(space, e.radius + 2 * bound, pairs)


def pushforward(f: CoarseMap, net):
    """Transport a net along a coarse map; preimages multiply sitewise."""
    if isinstance(net, AzumayaPresentation):
        amb = pushforward(f, net.ambient)
        control = transport_entourage(f, net.control)

        def gen(w):
            pre = f.preimage_sites(w.sites)
            if pre is None:
                raise StructureError(
                    f"pushforward along an improper map: preimage of {w.sites!r}"
                    " is infinite or undecidable"
                )
            ev = evaluation(amb, w)
            if not pre:
                return []
            sw = Window(f.domain, pre)
            se = evaluation(net.ambient, sw)
            return [relabel_matrix(g, se, ev) for g in net.generators(sw)]

        return AzumayaPresentation(amb, control, gen, f"push({net.label})")

    def parts(y):
        pre = f.preimage_sites((y,))
        if pre is None:
            raise StructureError(
                f"pushforward along an improper map: preimage of {y!r}"
                " is infinite or undecidable"
            )
        out = []
        for x in pre:
            out.extend(net.site_parts(x))
        return tuple(out)

    if net.support == "all":
        sup = "all"
    else:
        sup = frozenset(f.apply(x) for x in net.support)
    return LocalMatrixNet(f.codomain, parts, sup, f"push({net.label})")


def restrict(net, sites):
    """Zero the net outside ``sites`` (None restricts to the whole space)."""
    if sites is None:
        return net
    keep = frozenset(sites)
    if isinstance(net, AzumayaPresentation):
        amb = restrict(net.ambient, sites)

        def gen(w):
            inner = [s for s in w.sites if s in keep]
            if not inner:
                return []
            iw = Window(w.space, tuple(inner))
            se = evaluation(net.ambient, iw)
            ev = evaluation(amb, w)
            return [relabel_matrix(g, se, ev) for g in net.generators(iw)]

        return AzumayaPresentation(amb, net.control, gen, f"{net.label}|Y")

    def parts(x):
        return net.site_parts(x) if x in keep else ()

    sup = keep if net.support == "all" else (net.support & keep)
    return LocalMatrixNet(net.space, parts, sup, f"{net.label}|Y")


def closeness_iso(f: CoarseMap, g: CoarseMap, net: LocalMatrixNet, probe: Window) -> NetHom:
    """The identity-on-elements isomorphism f_* net -> g_* net for close maps."""
    ok, witness = are_close(f, g, probe)
    if not ok:
        raise StructureError("maps are not close on the probe window")
    return NetHom(
        pushforward(f, net),
        pushforward(g, net),
        witness,
        invert_entourage(witness),
        label="closeness",
    )


# ---------------------------------------------------------------------------
# windowed commutants, images, factor checks


def _algebra_on(
    sub: AzumayaPresentation, w: Window, ev: Evaluation, tols: Tolerances
) -> matalg.StarAlgebra:
    """The subnet's algebra on window w, embedded into the evaluation ev."""
    se = evaluation(sub.ambient, w)
    gens = [relabel_matrix(g, se, ev) for g in sub.generators(w)]
    return matalg.algebra_from_generators(gens, ev.ambient, tols)


def _block_intersection(vbasis, ev: Evaluation, bw: Window, tols: Tolerances):
    """Intersect a span inside M_D with the window block M_B (x) 1; returns the
    pulled-back orthonormal basis in M_{D_B}."""
    positions = ev.positions_of_window(bw)
    db = math.prod(ev.dims[p] for p in positions) if positions else 1
    rdim = ev.ambient // db
    vlist = [np.asarray(v, dtype=complex) for v in vbasis]
    if not vlist:
        return np.zeros((0, db, db), dtype=complex)
    rows = []
    for v in vlist:
        small = legs.partial_trace(v, ev.dims, positions) / rdim
        proj = legs.embed(small, positions, ev.dims)
        rows.append((v - proj).reshape(-1))
    w = np.array(rows)
    u, s, _ = np.linalg.svd(w, full_matrices=False)
    if s.size == 0 or s[0] < 1e-12:
        nonnull = 0
    else:
        nonnull = matalg._rank_with_band(s / s[0], tols.tol_rank, "block intersection")
    combos = u[:, nonnull:].conj()  # columns: coefficient vectors of null directions
    smalls = []
    for j in range(combos.shape[1]):
        m = sum(c * v for c, v in zip(combos[:, j], vlist))
        smalls.append(legs.partial_trace(m, ev.dims, positions) / rdim)
    return matalg.orthonormal_rows(smalls, db, tols)


def _windowed_commutant_basis(sub: AzumayaPresentation, bw: Window, tols: Tolerances):
    e = sub.control
    w1 = bw.fatten(e)
    w2 = w1.fatten(e)
    ev = evaluation(sub.ambient, w2)
    matalg.ensure_ambient(ev.ambient, tols)
    outs = []
    for w in (w1, w2):
        a = _algebra_on(sub, w, ev, tols)
        c = matalg.commutant(a, tols=tols)
        outs.append(_block_intersection(c.basis, ev, bw, tols))
    if len(outs[0]) != len(outs[1]):
        raise IndeterminateError(
            f"commutant on window {bw.sites!r} did not stabilize under fattening"
            f" ({len(outs[0])} vs {len(outs[1])})"
        )
    return outs[1]


def commutant_net(sub: AzumayaPresentation, tols: Tolerances = DEFAULT) -> AzumayaPresentation:
    """The commutant subnet, window by window, with a stabilization check."""

    def gen(w):
        return list(_windowed_commutant_basis(sub, w, tols))

    return AzumayaPresentation(sub.ambient, sub.control, gen, f"comm({sub.label})")


def image_net(phi: NetHom, sub: AzumayaPresentation, tols: Tolerances = DEFAULT) -> AzumayaPresentation:
    """The image subnet phi(A) ∩ block, carried with control F∘E∘F."""
    fef = compose_entourages(
        phi.control, compose_entourages(sub.control, phi.control)
    )

    def gen(bw):
        w1 = bw.fatten(fef)
        w2 = w1.fatten(fef)
        ev = evaluation(phi.target, w2)
        matalg.ensure_ambient(ev.ambient, tols)
        outs = []
        for w in (w1, w2):
            sw = phi.source_window_for(w)
            se = evaluation(sub.ambient, sw)
            imgs = [phi.apply(g, sw, w) for g in sub.generators(sw)]
            te = evaluation(phi.target, w)
            embedded = [relabel_matrix(m, te, ev) for m in imgs]
            a = matalg.algebra_from_generators(embedded, ev.ambient, tols)
            outs.append(_block_intersection(a.basis, ev, bw, tols))
        if len(outs[0]) != len(outs[1]):
            raise IndeterminateError(
                f"image on window {bw.sites!r} did not stabilize under fattening"
            )
        return list(outs[1])

    return AzumayaPresentation(phi.target, fef, gen, f"img({sub.label})")


def subwindows(window: Window) -> list:
    """Deterministic subwindow family: singletons, 1d intervals, full window."""
    space = window.space
    sites = window.sites
    seen = set()
    out = []

    def add(ss):
        key = tuple(ss)
        if key and key not in seen:
            seen.add(key)
            out.append(Window(space, key))

    for s in sites:
        add((s,))
    if space.has_metric and sites and len(sites[0]) == 1:
        xs = sorted(s[0] for s in sites)
        for i in range(len(xs)):
            for j in range(i + 1, len(xs)):
                add(tuple((x,) for x in xs[i : j + 1]))
    add(sites)
    return out


@dataclass(frozen=True)
class FactorReport:
    passed: bool
    injective: bool
    product_rank: int
    expected_rank: int
    failures: tuple
    tested: int
    notes: tuple = ()


def is_tensor_factor_windowed(
    sub: AzumayaPresentation, e: Entourage, window: Window, tols: Tolerances = DEFAULT
) -> FactorReport:
    """Windowed tensor-factor test: multiplication injectivity plus the block
    containment B_block ⊆ A_{B_E} · A'_{B_E} over a subwindow family."""
    w1 = window.fatten(e)
    w2 = w1.fatten(e)
    ev = evaluation(sub.ambient, w2)
    matalg.ensure_ambient(ev.ambient, tols)
    a1 = _algebra_on(sub, w1, ev, tols)
    a2 = _algebra_on(sub, w2, ev, tols)
    c1 = matalg.commutant(a1, tols=tols)
    c2 = matalg.commutant(a2, tols=tols)
    failures = []
    notes = []
    injective = True
    product_rank = expected_rank = 0
    tested = 0
    for b in subwindows(window):
        be = b.fatten(e)
        a_be = _algebra_on(sub, be, ev, tols)
        i1 = _block_intersection(c1.basis, ev, be, tols)
        i2 = _block_intersection(c2.basis, ev, be, tols)
        if len(i1) != len(i2):
            raise IndeterminateError(
                f"windowed commutant at {be.sites!r} did not stabilize"
            )
        eve = evaluation(sub.ambient, be)
        c_emb = [relabel_matrix(m, eve, ev) for m in i2]
        if a_be.dim * max(len(c_emb), 1) > 20000:
            raise ResourceError("product span too large for the factor test")
        prods = [x @ y for x in a_be.basis for y in c_emb]
        pr = matalg.orthonormal_rows(prods, ev.ambient, tols)
        exp = a_be.dim * len(c_emb)
        if len(pr) != exp:
            injective = False
        if b.sites == window.sites:
            product_rank, expected_rank = len(pr), exp
        span = matalg.StarAlgebra(pr) if len(pr) else None
        ok = span is not None and all(
            span.contains(u, tols) for u in ev.unit_generators(ev.positions_of_window(b))
        )
        if not ok:
            failures.append(b.sites)
        tested += 1
    passed = injective and not failures
    return FactorReport(
        passed, injective, product_rank, expected_rank, tuple(failures), tested, tuple(notes)
    )


def nested_factor(
    sub_a: AzumayaPresentation,
    sub_b: AzumayaPresentation,
    window: Window,
    tols: Tolerances = DEFAULT,
) -> AzumayaPresentation:
    """Relative commutant A' ∩ B with reconstruction B ≅ A ⊗ (A' ∩ B) verified
    on the given window."""
    if sub_a.ambient.space != sub_b.ambient.space:
        raise StructureError("presentations live over different spaces")
    e = compose_entourages(sub_a.control, sub_b.control)

    def gen(bw):
        w1 = bw.fatten(sub_a.control)
        w2 = w1.fatten(sub_a.control)
        ev = evaluation(sub_a.ambient, w2)
        matalg.ensure_ambient(ev.ambient, tols)
        b_alg = _algebra_on(sub_b, bw, ev, tols)
        outs = []
        for w in (w1, w2):
            a = _algebra_on(sub_a, w, ev, tols)
            ca = matalg.commutant(a, tols=tols)
            inter = matalg.span_intersection(ca.basis, b_alg.basis, ev.ambient, tols)
            outs.append(inter)
        if len(outs[0]) != len(outs[1]):
            raise IndeterminateError(
                f"relative commutant at {bw.sites!r} did not stabilize"
            )
        return list(_block_intersection(outs[1], ev, bw, tols))

    pres = AzumayaPresentation(sub_a.ambient, e, gen, f"rel({sub_a.label},{sub_b.label})")

    # reconstruction check on the probe window
    ev = evaluation(sub_a.ambient, window)
    matalg.ensure_ambient(ev.ambient, tols)
    a = matalg.algebra_from_generators(sub_a.generators(window), ev.ambient, tols)
    b = matalg.algebra_from_generators(sub_b.generators(window), ev.ambient, tols)
    for g in a.basis:
        if not b.contains(g, tols):
            raise StructureError("A is not contained in B on the window")
    rc = matalg.algebra_from_generators(pres.generators(window), ev.ambient, tols)
    prods = [x @ y for x in a.basis for y in rc.basis]
    pr = matalg.orthonormal_rows(prods, ev.ambient, tols)
    if len(pr) != a.dim * rc.dim or len(pr) != b.dim:
        raise StructureError(
            f"nested reconstruction failed: ranks {len(pr)} vs {a.dim}x{rc.dim} vs {b.dim}"
        )
    if matalg.span_overlap_dim(matalg.StarAlgebra(pr), b, tols) != b.dim:
        raise StructureError("product span does not match B on the window")
    return pres


# ---------------------------------------------------------------------------
# shift stabilizer (Eilenberg swindle along a flasque map)


def _accumulated_control(f: CoarseMap, witness: Entourage, window: Window, nmax: int) -> Entourage:
    space = f.codomain
    if (
        _translate_like(f) is not None
        and space.has_metric
        and witness.radius is not None
        and not witness.pairs
    ):
        return witness  # translations preserve sup-displacement exactly
    base = [
        (a, b)
        for a in window.sites
        for b in window.sites
        if witness.contains_pair(a, b)
    ]
    if space.has_metric:
        rmax = witness.radius or 0
        for n in range(nmax + 1):
            fn = f.iterate(n)
            for a, b in base:
                rmax = max(rmax, _metric_dist(space, fn.apply(a), fn.apply(b)))
        return metric_ball(space, rmax)
    acc = set()
    for n in range(nmax + 1):
        fn = f.iterate(n)
        for a, b in base:
            fa, fb = fn.apply(a), fn.apply(b)
            acc.add((fa, fb))
            acc.add((fb, fa))
    return union_entourages(witness, explicit_relation(space, acc))


def shift_stabilizer(
    net: LocalMatrixNet,
    f: CoarseMap,
    window: Window,
    budget: int,
    tols: Tolerances = DEFAULT,
):
    """The stabilized net S(net) = ⊗_{n≥0} (f^n)_* net truncated to the window,
    together with the slot-shift isomorphism S(net) ≅ net ⊗ S(net).

    Iterate n contributes the parts of the window sites in the n-fold
    preimage; the truncation keeps exactly the iterates with a nonempty
    window-preimage, which is finite by the evacuation condition.
    """
    rep = check_flasque(net.space, f, window, budget)
    if not rep.passed:
        raise StructureError("flasqueness evidence absent on this window/budget")
    nmax = rep.evacuation_step

    def s_parts(y):
        out = []
        for n in range(nmax + 1):
            pre = f.iterate(n).preimage_sites((y,))
            if pre is None:
                raise StructureError(
                    f"stabilizer preimage of {y!r} is infinite or undecidable"
                )
            for x in pre:
                if x in window:
                    for lab, d in net.site_parts(x):
                        out.append(((n, lab), d))
        return tuple(out)

    s_net = LocalMatrixNet(net.space, s_parts, "all", f"S({net.label})")
    tens = tensor(net, s_net)

    def slot_shift(lab):
        n, inner = lab
        if n == 0:
            return (0, inner)
        return (1, (n - 1, inner))

    control = _accumulated_control(f, rep.closeness_witness, window, nmax)
    iso = NetHom(
        s_net,
        tens,
        control,
        invert_entourage(control),
        label_map=slot_shift,
        label="swindle",
    )
    return s_net, iso
