"""Coarse spaces, entourages, windows and coarse maps.

A space is either a symbolic integer lattice (``Grid``/``HalfGrid``, with the
sup-metric coarse structure), a finite labelled site set with explicit
entourage generators (``FiniteSpace``), or a product.  Entourages are kept in
the normal form ``(radius, pairs)``: an optional sup-metric ball part plus a
finite set of explicit off-diagonal pairs; the diagonal is always adjoined
during evaluation.  All global statements (closeness, controlledness,
flasqueness) are evaluated window-relatively and report explicit witnesses.

On grids every finite pair set lies in the coarse structure, so verdicts about
global properties compare the needed radius on the full probe window with the
needed radius on a shrunken core: a radius that keeps growing with the window
fails, a saturated one passes with the metric-ball witness.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .errors import InputError

Site = object  # int tuple (grids), str (finite spaces), or nested pair (products)


# ---------------------------------------------------------------------------
# spaces


@dataclass(frozen=True)
class Grid:
    """The lattice Z^ndim with the sup-metric coarse structure."""

    ndim: int
    generator_radii: tuple[int, ...] = (1,)

    def contains(self, site) -> bool:
        return (
            isinstance(site, tuple)
            and len(site) == self.ndim
            and all(isinstance(c, int) for c in site)
        )

    def site_key(self, site):
        return site

    @property
    def has_metric(self) -> bool:
        return True


@dataclass(frozen=True)
class HalfGrid:
    """Z^ndim with selected axes restricted to non-negative coordinates."""

    ndim: int
    nonneg: tuple[bool, ...] = ()
    generator_radii: tuple[int, ...] = (1,)

    def __post_init__(self):
        if not self.nonneg:
            object.__setattr__(self, "nonneg", (True,) * self.ndim)
        if len(self.nonneg) != self.ndim:
            raise InputError("nonneg mask length must match ndim")

    def contains(self, site) -> bool:
        return (
            isinstance(site, tuple)
            and len(site) == self.ndim
            and all(isinstance(c, int) for c in site)
            and all(c >= 0 for c, m in zip(site, self.nonneg) if m)
        )

    def site_key(self, site):
        return site

    @property
    def has_metric(self) -> bool:
        return True


@dataclass(frozen=True)
class FiniteSpace:
    """Finite labelled site set; coarse structure generated by explicit pairs."""

    sites: tuple
    generator_pairs: tuple = ()  # tuple of frozensets of (site, site) pairs

    def __post_init__(self):
        object.__setattr__(self, "sites", tuple(sorted(self.sites)))
        gens = tuple(frozenset(p) for p in self.generator_pairs)
        for g in gens:
            for x, y in g:
                if x not in self.sites or y not in self.sites:
                    raise InputError(f"generator pair ({x!r}, {y!r}) references unknown sites")
        object.__setattr__(self, "generator_pairs", gens)

    def contains(self, site) -> bool:
        return site in self.sites

    def site_key(self, site):
        return site

    @property
    def has_metric(self) -> bool:
        return False


@dataclass(frozen=True)
class ProductSpace:
    """Product coarse structure; sites are (left_site, right_site) pairs."""

    left: object
    right: object

    def contains(self, site) -> bool:
        return (
            isinstance(site, tuple)
            and len(site) == 2
            and self.left.contains(site[0])
            and self.right.contains(site[1])
        )

    def site_key(self, site):
        return (self.left.site_key(site[0]), self.right.site_key(site[1]))

    @property
    def has_metric(self) -> bool:
        # the ball part of an entourage acts on the right component only
        return self.right.has_metric


def product(left, right):
    """Product space, normalized so Grid(a) x Grid(b) is exactly Grid(a+b)."""
    if isinstance(left, Grid) and isinstance(right, Grid):
        return Grid(left.ndim + right.ndim)
    if isinstance(left, (Grid, HalfGrid)) and isinstance(right, (Grid, HalfGrid)):
        lmask = left.nonneg if isinstance(left, HalfGrid) else (False,) * left.ndim
        rmask = right.nonneg if isinstance(right, HalfGrid) else (False,) * right.ndim
        return HalfGrid(left.ndim + right.ndim, lmask + rmask)
    return ProductSpace(left, right)


def _metric_dist(space, x, y) -> int:
    if isinstance(space, (Grid, HalfGrid)):
        return max(abs(a - b) for a, b in zip(x, y)) if x else 0
    if isinstance(space, ProductSpace):
        if x[0] != y[0]:
            raise InputError("no metric across the left component of a product")
        return _metric_dist(space.right, x[1], y[1])
    raise InputError(f"space {space!r} carries no metric")


def ball_sites(space, center, radius: int) -> list:
    """All sites within sup-distance ``radius`` of ``center``."""
    if isinstance(space, (Grid, HalfGrid)):
        ranges = [range(c - radius, c + radius + 1) for c in center]
        return [s for s in itertools.product(*ranges) if space.contains(s)]
    if isinstance(space, ProductSpace):
        return [
            (center[0], r)
            for r in ball_sites(space.right, center[1], radius)
        ]
    raise InputError(f"space {space!r} carries no metric")


# ---------------------------------------------------------------------------
# entourages


@dataclass(frozen=True)
class Entourage:
    """Normal form: optional metric-ball radius plus explicit off-diagonal pairs.

    Membership always includes the diagonal.  On products the ball part pairs
    sites with equal left components and right components within ``radius``.
    """

    space: object
    radius: int | None = None
    pairs: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.radius is not None:
            if not self.space.has_metric:
                raise InputError("metric ball on a space without metric")
            if self.radius < 0:
                raise InputError("radius must be >= 0")
        clean = frozenset((x, y) for x, y in self.pairs if x != y)
        for x, y in clean:
            if not (self.space.contains(x) and self.space.contains(y)):
                raise InputError(f"pair ({x!r}, {y!r}) not in space")
        object.__setattr__(self, "pairs", clean)

    def contains_pair(self, x, y) -> bool:
        if x == y:
            return True
        if (x, y) in self.pairs:
            return True
        if self.radius is not None:
            try:
                return _metric_dist(self.space, x, y) <= self.radius
            except InputError:
                return False
        return False

    def fatten(self, sites) -> tuple:
        """The fattening {x : exists y in sites with (x, y) in E} (diagonal included)."""
        out = set(sites)
        if self.radius is not None:
            for y in sites:
                out.update(ball_sites(self.space, y, self.radius))
        for x, y in self.pairs:
            if y in sites:
                out.add(x)
        return tuple(sorted(out, key=self.space.site_key))

    def max_radius_on(self, sites) -> int:
        """Largest sup-displacement this entourage realizes among ``sites``."""
        r = self.radius or 0
        for x, y in self.pairs:
            if x in sites and y in sites:
                r = max(r, _metric_dist(self.space, x, y))
        return r


def diagonal(space) -> Entourage:
    return Entourage(space, 0 if space.has_metric else None, frozenset())


def metric_ball(space, radius: int) -> Entourage:
    return Entourage(space, radius, frozenset())


def explicit_relation(space, pairs) -> Entourage:
    return Entourage(space, None, frozenset(pairs))


def union_entourages(e: Entourage, f: Entourage) -> Entourage:
    if e.space != f.space:
        raise InputError("entourages belong to different spaces")
    radii = [r for r in (e.radius, f.radius) if r is not None]
    return Entourage(e.space, max(radii) if radii else None, e.pairs | f.pairs)


def invert_entourage(e: Entourage) -> Entourage:
    return Entourage(e.space, e.radius, frozenset((y, x) for x, y in e.pairs))


def compose_entourages(e: Entourage, f: Entourage) -> Entourage:
    """E o F = {(x, z) : exists y with (x, y) in F and (y, z) in E}.

    Both operands are taken with the diagonal adjoined, so the result contains
    E, F and all genuine two-step pairs.
    """
    if e.space != f.space:
        raise InputError("entourages belong to different spaces")
    space = e.space
    re_, rf = e.radius, f.radius
    radius = None
    if re_ is not None or rf is not None:
        radius = (re_ or 0) + (rf or 0)
    pairs = set(e.pairs) | set(f.pairs)
    # two-step pairs through explicit relations
    for x, y in f.pairs:
        for y2, z in e.pairs:
            if y2 == y and x != z:
                pairs.add((x, z))
    # explicit pair then ball, and ball then explicit pair
    if re_ is not None:
        for x, y in f.pairs:
            for z in ball_sites(space, y, re_):
                if x != z:
                    pairs.add((x, z))
    if rf is not None:
        for y, z in e.pairs:
            for x in ball_sites(space, y, rf):
                if x != z:
                    pairs.add((x, z))
    return Entourage(space, radius, frozenset(pairs))


# ---------------------------------------------------------------------------
# windows


@dataclass(frozen=True)
class Window:
    space: object
    sites: tuple

    def __post_init__(self):
        seen = []
        for s in self.sites:
            if not self.space.contains(s):
                raise InputError(f"site {s!r} not in space")
            seen.append(s)
        object.__setattr__(
            self, "sites", tuple(sorted(set(seen), key=self.space.site_key))
        )

    def __contains__(self, site) -> bool:
        return site in self.sites

    def __len__(self) -> int:
        return len(self.sites)

    def fatten(self, e: Entourage) -> "Window":
        return Window(self.space, e.fatten(self.sites))


def fatten(sites, e: Entourage):
    """Module-level fattening: accepts a Window or a bare site iterable."""
    if isinstance(sites, Window):
        return sites.fatten(e)
    return e.fatten(tuple(sites))


def box_window(space, lo, hi) -> Window:
    """All lattice sites with lo <= x <= hi componentwise."""
    lo, hi = tuple(lo), tuple(hi)
    ranges = [range(a, b + 1) for a, b in zip(lo, hi)]
    sites = [s for s in itertools.product(*ranges) if space.contains(s)]
    if not sites:
        raise InputError("empty window")
    return Window(space, tuple(sites))


def full_window(space: FiniteSpace) -> Window:
    return Window(space, space.sites)


def _core_window(window: Window) -> Window:
    """A deterministically shrunken core used for radius-stability verdicts."""
    sites = window.sites
    if len(sites) <= 2 or not window.space.has_metric:
        return window
    coords = list(sites)
    lo = tuple(min(s[a] for s in coords) for a in range(len(coords[0])))
    hi = tuple(max(s[a] for s in coords) for a in range(len(coords[0])))
    margin = [max(1, (h - l) // 4) if h > l else 0 for l, h in zip(lo, hi)]
    new_lo = tuple(l + m for l, m in zip(lo, margin))
    new_hi = tuple(h - m for h, m in zip(hi, margin))
    core = [s for s in sites if all(a <= c <= b for a, c, b in zip(new_lo, s, new_hi))]
    if not core:
        return window
    return Window(window.space, tuple(core))


# ---------------------------------------------------------------------------
# coarse maps


@dataclass(frozen=True)
class CoarseMap:
    """A map between spaces; kinds: identity, translate, explicit, callable, compose."""

    domain: object
    codomain: object
    kind: str
    vector: tuple | None = None
    table: tuple = ()  # ((site, image), ...) for explicit maps
    parts: tuple = ()  # inner-to-outer for compose
    func: object = None  # site -> site, for callable maps
    preimage_fn: object = None  # site -> candidate preimage iterable, or None

    def apply(self, site):
        if self.kind == "identity":
            return site
        if self.kind == "translate":
            img = _translate_site(self.codomain, site, self.vector)
            if img is None or not self.codomain.contains(img):
                raise InputError(f"translate leaves the space at {site!r}")
            return img
        if self.kind == "explicit":
            for s, img in self.table:
                if s == site:
                    return img
            raise InputError(f"site {site!r} not in explicit map table")
        if self.kind == "callable":
            img = self.func(site)
            if not self.codomain.contains(img):
                raise InputError(f"callable map leaves the codomain at {site!r}")
            return img
        out = site
        for p in self.parts:
            out = p.apply(out)
        return out

    def image_sites(self, sites) -> tuple:
        return tuple(sorted({self.apply(s) for s in sites}, key=self.codomain.site_key))

    def preimage_sites(self, sites):
        """Exact preimage of a finite site set, or None when symbolically infinite."""
        target = set(sites)
        if self.kind == "identity":
            return tuple(sorted(target & _enumerable(self.domain, target), key=self.domain.site_key))
        if self.kind == "translate":
            pre = set()
            for t in target:
                s = _translate_site(self.domain, t, tuple(-v for v in self.vector))
                if s is not None and self.domain.contains(s) and self.apply(s) == t:
                    pre.add(s)
            return tuple(sorted(pre, key=self.domain.site_key))
        if self.kind == "explicit":
            pre = {s for s, img in self.table if img in target}
            return tuple(sorted(pre, key=self.domain.site_key))
        if self.kind == "callable":
            if self.preimage_fn is None:
                return None
            pre = {
                s
                for t in target
                for s in self.preimage_fn(t)
                if self.domain.contains(s) and self.apply(s) == t
            }
            return tuple(sorted(pre, key=self.domain.site_key))
        out = tuple(target)
        for p in reversed(self.parts):
            out = p.preimage_sites(out)
            if out is None:
                return None
        return out

    def iterate(self, n: int) -> "CoarseMap":
        if self.domain != self.codomain:
            raise InputError("can only iterate endomaps")
        if n == 0:
            return identity_map(self.domain)
        f = self
        for _ in range(n - 1):
            f = compose_maps(self, f)
        return f

    def displacement_bound(self, sites) -> int:
        """Max sup-distance between a site and its image over ``sites``."""
        return max(
            (_metric_dist(self.domain, s, self.apply(s)) for s in sites),
            default=0,
        )


def _translate_site(space, site, vector):
    if isinstance(space, (Grid, HalfGrid)):
        return tuple(c + v for c, v in zip(site, vector))
    if isinstance(space, ProductSpace):
        inner = _translate_site(space.right, site[1], vector)
        return (site[0], inner) if inner is not None else None
    return None


def _enumerable(space, fallback):
    if isinstance(space, FiniteSpace):
        return set(space.sites)
    return set(fallback)


def identity_map(space) -> CoarseMap:
    return CoarseMap(space, space, "identity")


def translate_map(space, vector) -> CoarseMap:
    vector = tuple(vector)
    if isinstance(space, HalfGrid):
        for v, m in zip(vector, space.nonneg):
            if m and v < 0:
                raise InputError("translate is not total on a nonneg axis with negative shift")
    if isinstance(space, ProductSpace) and not space.right.has_metric:
        raise InputError("translate on a product needs a metric right component")
    return CoarseMap(space, space, "translate", vector=vector)


def axis_shift(space, axis: int, amount: int) -> CoarseMap:
    ndim = space.right.ndim if isinstance(space, ProductSpace) else space.ndim
    vec = tuple(amount if a == axis else 0 for a in range(ndim))
    return translate_map(space, vec)


def callable_map(domain, codomain, func, preimage_fn=None) -> CoarseMap:
    """A map given by an arbitrary site function.

    ``preimage_fn`` should return an iterable of candidate preimages of a site;
    without it, preimages (hence properness verdicts) are undecidable and
    reported as failures with a note.
    """
    return CoarseMap(domain, codomain, "callable", func=func, preimage_fn=preimage_fn)


def explicit_map(domain, codomain, mapping: dict) -> CoarseMap:
    if not isinstance(domain, FiniteSpace):
        raise InputError("explicit maps need a finite domain")
    missing = set(domain.sites) - set(mapping)
    if missing:
        raise InputError(f"explicit map is not total; missing {sorted(missing)!r}")
    for s, img in mapping.items():
        if not codomain.contains(img):
            raise InputError(f"image {img!r} not in codomain")
    return CoarseMap(domain, codomain, "explicit", table=tuple(sorted(mapping.items())))


def compose_maps(g: CoarseMap, f: CoarseMap) -> CoarseMap:
    """g after f."""
    if f.codomain != g.domain:
        raise InputError("maps do not compose")
    if f.kind == "identity":
        return g
    if g.kind == "identity":
        return f
    if f.kind == "translate" and g.kind == "translate":
        vec = tuple(a + b for a, b in zip(f.vector, g.vector))
        return CoarseMap(f.domain, g.codomain, "translate", vector=vec)
    parts = (f.parts if f.kind == "compose" else (f,)) + (
        g.parts if g.kind == "compose" else (g,)
    )
    return CoarseMap(f.domain, g.codomain, "compose", parts=parts)


def _translate_like(f: CoarseMap):
    """The single translation vector realizing f, or None."""
    if f.kind == "identity":
        return ()
    if f.kind == "translate":
        return f.vector
    if f.kind == "compose":
        vec = None
        for p in f.parts:
            v = _translate_like(p)
            if v is None:
                return None
            if v == ():
                continue
            vec = v if vec is None else tuple(a + b for a, b in zip(vec, v))
        return vec if vec is not None else ()
    return None


# ---------------------------------------------------------------------------
# verdict operations


def are_close(f: CoarseMap, g: CoarseMap, probe: Window):
    """Window-relative closeness: is (f x g)(diagonal) an entourage?

    Returns ``(verdict, witness)``.  On grids the needed radius must saturate
    between the core and the full probe window; on finite spaces membership in
    the generated coarse structure is exact.
    """
    if f.domain != g.domain or f.codomain != g.codomain:
        raise InputError("maps must share domain and codomain")
    space = f.codomain

    def disp_pairs(window):
        return {(f.apply(x), g.apply(x)) for x in window.sites}

    pairs = disp_pairs(probe)
    if space.has_metric:
        r_full = max((_metric_dist(space, x, y) for x, y in pairs), default=0)
        core = _core_window(probe)
        r_core = max((_metric_dist(space, x, y) for x, y in disp_pairs(core)), default=0)
        witness = metric_ball(space, r_full)
        return (r_full == r_core, witness)
    witness = explicit_relation(space, pairs)
    comp = _component_lookup(space)
    ok = all(comp[x] == comp[y] for x, y in pairs)
    return (ok, witness)


@dataclass(frozen=True)
class CoarseMapReport:
    proper: bool
    controlled: bool
    control_images: tuple
    preimage_sizes: tuple
    notes: tuple = ()


def check_coarse_map(f: CoarseMap, probes) -> CoarseMapReport:
    """Properness and controlledness of ``f`` evaluated on codomain probes."""
    probes = list(probes)
    if not probes:
        raise InputError("at least one probe window is required")
    proper = True
    sizes = []
    notes = []
    for w in probes:
        pre = f.preimage_sites(w.sites)
        if pre is None:
            proper = False
            sizes.append(-1)
            notes.append(f"preimage of {len(w)}-site probe is infinite or undecidable")
            continue
        sizes.append(len(pre))
        if isinstance(f.domain, FiniteSpace):
            whole_domain = set(pre) == set(f.domain.sites)
            probe_is_whole_codomain = (
                isinstance(f.codomain, FiniteSpace) and set(w.sites) == set(f.codomain.sites)
            )
            if whole_domain and not probe_is_whole_codomain:
                proper = False
                notes.append("preimage of a proper probe saturates the domain")
    controlled = True
    images = []
    for w in probes:
        pre = f.preimage_sites(w.sites)
        if pre is None:
            pre = w.sites if f.domain == f.codomain else ()
        dom_window = Window(f.domain, pre) if pre else None
        for gen in _space_generators(f.domain):
            ok, img = _controlled_one(f, gen, dom_window)
            images.append(img)
            controlled = controlled and ok
    return CoarseMapReport(proper, controlled, tuple(images), tuple(sizes), tuple(notes))


def _space_generators(space):
    if isinstance(space, FiniteSpace):
        return [explicit_relation(space, p) for p in space.generator_pairs]
    radii = getattr(space, "generator_radii", (1,))
    return [metric_ball(space, r) for r in radii]


def _gen_pairs_on(space, gen: Entourage, sites):
    out = set(gen.pairs & {(x, y) for x in sites for y in sites})
    if gen.radius is not None:
        for x in sites:
            for y in ball_sites(space, x, gen.radius):
                if y in set(sites):
                    out.add((x, y))
    return out


def _controlled_one(f: CoarseMap, gen: Entourage, dom_window):
    space = f.codomain
    if dom_window is None or not dom_window.sites:
        return True, diagonal(space)

    def image_pairs(window):
        sites = set(window.sites)
        return {(f.apply(x), f.apply(y)) for x, y in _gen_pairs_on(f.domain, gen, sites)}

    pairs = image_pairs(dom_window)
    if space.has_metric:
        r_full = max((_metric_dist(space, x, y) for x, y in pairs), default=0)
        core = _core_window(dom_window)
        r_core = max((_metric_dist(space, x, y) for x, y in image_pairs(core)), default=0)
        return (r_full == r_core, metric_ball(space, r_full))
    comp = _component_lookup(space)
    ok = all(comp[x] == comp[y] for x, y in pairs)
    return ok, explicit_relation(space, pairs)


def _component_lookup(space: FiniteSpace) -> dict:
    if not isinstance(space, FiniteSpace):
        raise InputError("component lookup needs a finite space")
    parent = {s: s for s in space.sites}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for genset in space.generator_pairs:
        for x, y in genset:
            parent[find(x)] = find(y)
    return {s: find(s) for s in space.sites}


def coarse_components(space, window: Window) -> tuple:
    """Partition of the window by the symmetric-transitive closure of the generators.

    Grid windows form a single component: arbitrarily large metric balls lie in
    the coarse structure.
    """
    if space.has_metric:
        return (window.sites,)
    comp = _component_lookup(space)
    groups: dict = {}
    for s in window.sites:
        groups.setdefault(comp[s], []).append(s)
    return tuple(tuple(g) for _, g in sorted(groups.items(), key=lambda kv: str(kv[0])))


@dataclass(frozen=True)
class FlasqueReport:
    close_to_identity: bool
    evacuates: bool
    images_controlled: bool
    evacuation_step: int | None
    closeness_witness: Entourage
    image_witnesses: tuple

    @property
    def passed(self) -> bool:
        return self.close_to_identity and self.evacuates and self.images_controlled

    # short aliases for the three conditions, in the conventional order
    @property
    def cond1(self) -> bool:
        return self.close_to_identity

    @property
    def cond2(self) -> bool:
        return self.evacuates

    @property
    def cond3(self) -> bool:
        return self.images_controlled


def _in_iterated_image(f: CoarseMap, x, n: int) -> bool:
    """Whether x lies in f^n(X), decided exactly."""
    vec = _translate_like(f)
    if vec is not None:
        if vec == ():
            return True
        space = f.domain
        if isinstance(space, ProductSpace):
            probe = tuple(c - n * v for c, v in zip(x[1], vec))
            return space.right.contains(probe)
        probe = tuple(c - n * v for c, v in zip(x, vec))
        return space.contains(probe)
    if isinstance(f.domain, FiniteSpace):
        current = set(f.domain.sites)
        for _ in range(n):
            current = {f.apply(s) for s in current}
        return x in current
    raise InputError("cannot decide iterated images for this map symbolically")


def check_flasque(space, f: CoarseMap, window: Window, budget: int) -> FlasqueReport:
    """The three flasqueness conditions, window-relative with an iteration budget.

    (1) f is close to the identity; (2) some iterate f^n (n <= budget) has
    image disjoint from the window, hence from every bounded subset of it;
    (3) the union over n <= budget of (f^n x f^n)(E) stays an entourage for
    each generator E.
    """
    if budget <= 0:
        raise InputError("budget must be positive")
    if f.domain != space or f.codomain != space:
        raise InputError("map must be an endomap of the given space")
    close, witness = are_close(f, identity_map(space), window)

    step = None
    for n in range(1, budget + 1):
        if all(not _in_iterated_image(f, x, n) for x in window.sites):
            step = n
            break

    image_witnesses = []
    controlled = True
    for gen in _space_generators(space):
        if space.has_metric:
            radii = []
            sites = set(window.sites)
            for n in range(budget + 1):
                fn = f.iterate(n)
                pairs = {
                    (fn.apply(x), fn.apply(y))
                    for x, y in _gen_pairs_on(space, gen, sites)
                }
                radii.append(max((_metric_dist(space, x, y) for x, y in pairs), default=0))
            r = max(radii)
            stable = len(set(radii[max(1, len(radii) // 2):])) == 1
            controlled = controlled and stable
            image_witnesses.append(metric_ball(space, r))
        else:
            comp = _component_lookup(space)
            pairs = set()
            sites = set(window.sites)
            for n in range(budget + 1):
                fn = f.iterate(n)
                pairs |= {
                    (fn.apply(x), fn.apply(y))
                    for x, y in _gen_pairs_on(space, gen, sites)
                }
            ok = all(comp[x] == comp[y] for x, y in pairs)
            controlled = controlled and ok
            image_witnesses.append(explicit_relation(space, pairs))

    return FlasqueReport(
        close_to_identity=close,
        evacuates=step is not None,
        images_controlled=controlled,
        evacuation_step=step,
        closeness_witness=witness,
        image_witnesses=tuple(image_witnesses),
    )


# ---------------------------------------------------------------------------
# big families


@dataclass(frozen=True)
class BigFamily:
    """The family of all entourage-fattenings of a generating subset."""

    space: object
    base_sites: frozenset

    def member_witness(self, sites, window: Window | None = None) -> Entourage | None:
        """An entourage E with ``sites`` contained in the E-fattening of the base.

        Returns None when no witness exists (finite spaces: some site lies in a
        component not meeting the base).
        """
        base = set(self.base_sites)
        extra = [s for s in sites if s not in base]
        if not extra:
            return diagonal(self.space)
        if self.space.has_metric:
            r = max(
                min(_metric_dist(self.space, s, b) for b in base) for s in extra
            )
            return metric_ball(self.space, r)
        comp = _component_lookup(self.space)
        reachable = {comp[b] for b in base}
        if any(comp[s] not in reachable for s in extra):
            return None
        pairs = set()
        for s in extra:
            b = next(b for b in base if comp[b] == comp[s])
            pairs.add((s, b))
        return explicit_relation(self.space, pairs)
