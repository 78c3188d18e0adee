"""Tests for exact invariants: group completions, dimension classes, the
GNVW index, the boundary partial shift, and the flasque swindle witness."""

import math
from fractions import Fraction

import numpy as np
import pytest

from coarseqca import legs, matalg, nets, qca
from coarseqca.coarse import (
    FiniteSpace,
    Grid,
    HalfGrid,
    Window,
    box_window,
    explicit_map,
    full_window,
    translate_map,
)
from coarseqca.errors import InputError, StructureError
from coarseqca.index import (
    NAT_MULT,
    MonoidPresentation,
    PositiveRational,
    dimension_class,
    flasque_swindle_check,
    free_monoid,
    gnvw_index,
    group_completion,
    k0_loc_to_az_class,
    mv_boundary_shift,
)

LINE = Grid(1)
HALF = HalfGrid(1)


# ---------------------------------------------------------------------------
# positive rationals


def test_positive_rational_reduces():
    r = PositiveRational(6, 4)
    assert (r.num, r.den) == (3, 2)
    assert repr(r) == "3/2"
    assert PositiveRational(5) == PositiveRational(10, 2)


def test_positive_rational_rejects_nonpositive():
    with pytest.raises(InputError):
        PositiveRational(0, 3)
    with pytest.raises(InputError):
        PositiveRational(2, -4)


def test_positive_rational_arithmetic():
    a, b = PositiveRational(2, 3), PositiveRational(9, 4)
    assert a * b == PositiveRational(3, 2)
    assert a / b == PositiveRational(8, 27)
    assert a.as_fraction() == Fraction(2, 3)


# ---------------------------------------------------------------------------
# group completions


def test_nat_mult_completion_examples():
    G = group_completion(NAT_MULT)
    assert G.canonical_map(7) == PositiveRational(7, 1)
    assert G.difference(2, 3) == PositiveRational(2, 3)
    assert G.equal(G.difference(4, 6), G.difference(2, 3))
    assert G.is_identity(G.difference(5, 5))
    with pytest.raises(InputError):
        G.canonical_map(0)


def test_free_completion_normal_form():
    G = group_completion(free_monoid("x"))
    g = G.difference({"x": 3}, {"x": 5})
    assert g.pos == (0,) and g.neg == (2,)
    assert G.equal(g, G.difference({"x": 1}, {"x": 3}))
    assert not G.equal(g, G.difference({"x": 5}, {"x": 3}))


def test_free_completion_matches_integer_oracle():
    # one free generator completes to the integers under addition
    G = group_completion(free_monoid("x"))
    rng = np.random.default_rng(11)
    for _ in range(500):
        m1, n1, m2, n2 = rng.integers(0, 9, size=4)
        lhs = G.difference({"x": int(m1)}, {"x": int(n1)})
        rhs = G.difference({"x": int(m2)}, {"x": int(n2)})
        assert G.equal(lhs, rhs) == (int(m1) - int(n1) == int(m2) - int(n2))


def test_two_generator_free_completion_random():
    G = group_completion(free_monoid("x", "y"))
    rng = np.random.default_rng(12)
    for _ in range(300):
        a = rng.integers(0, 5, size=4)
        b = rng.integers(0, 5, size=4)
        lhs = G.difference((int(a[0]), int(a[1])), (int(a[2]), int(a[3])))
        rhs = G.difference((int(b[0]), int(b[1])), (int(b[2]), int(b[3])))
        want = (a[0] - a[2], a[1] - a[3]) == (b[0] - b[2], b[1] - b[3])
        assert G.equal(lhs, rhs) == bool(want)


def _oracle_equal(rules, k, a, b, bound):
    """Brute-force witness search: reduce by the oriented rules and compare
    a + n with b + n over the full exponent grid up to ``bound``."""

    def nf(v):
        v = list(v)
        changed = True
        while changed:
            changed = False
            for lhs, rhs in rules:
                if all(x >= l for x, l in zip(v, lhs)):
                    v = [x - l + r for x, l, r in zip(v, lhs, rhs)]
                    changed = True
        return tuple(v)

    grid = [()]
    for _ in range(k):
        grid = [g + (e,) for g in grid for e in range(bound + 1)]
    return any(
        nf(tuple(x + n for x, n in zip(a, w))) == nf(tuple(y + n for y, n in zip(b, w)))
        for w in grid
    )


def test_absorbing_relation_matches_witness_oracle():
    # a + x = a absorbs x, so [x] dies in the completion
    M = MonoidPresentation(("a", "x"), relations=(({"a": 1, "x": 1}, {"a": 1}),))
    G = group_completion(M)
    assert G.is_identity(G.canonical_map({"x": 3}))
    rules = (((1, 1), (1, 0)),)
    for pa in ((0, 0), (1, 0), (0, 2), (2, 1), (1, 3)):
        for pb in ((0, 0), (1, 0), (0, 1), (2, 0), (1, 2)):
            got = G.equal(G.canonical_map(pa), G.canonical_map(pb))
            want = _oracle_equal(rules, 2, pa, pb, 3)
            assert got == want, (pa, pb)


def test_unorientable_relation_rejected():
    M = MonoidPresentation(("x",), relations=(({"x": 2}, {"x": 2}),))
    with pytest.raises(InputError, match="unsupported presentation class"):
        group_completion(M)


def test_group_completion_rejects_unknown_input():
    with pytest.raises(InputError, match="unsupported presentation class"):
        group_completion(object())


# ---------------------------------------------------------------------------
# dimension classes


def test_dimension_class_single_component():
    net = nets.uniform_net(LINE, 2)
    w = box_window(LINE, (0,), (3,))
    dc = dimension_class(net, LINE, w)
    assert len(dc.components) == 1
    assert dc.values == (PositiveRational(16),)


def test_dimension_class_splits_over_components():
    fs = FiniteSpace(
        (0, 1, 2, 3),
        generator_pairs=({(0, 1), (1, 0)}, {(2, 3), (3, 2)}),
    )
    net = nets.table_net(fs, {0: 2, 1: 3, 2: 5})
    dc = dimension_class(net, fs, full_window(fs))
    by_sites = {sites: val for sites, val in dc.components}
    assert by_sites[(0, 1)] == PositiveRational(6)
    assert by_sites[(2, 3)] == PositiveRational(5)


def test_dimension_class_space_mismatch():
    net = nets.uniform_net(LINE, 2)
    with pytest.raises(InputError):
        dimension_class(net, HALF, box_window(HALF, (0,), (3,)))


def test_dimension_class_pushforward_invariant():
    fs = FiniteSpace((0, 1, 2, 3))
    net = nets.table_net(fs, {0: 2, 1: 3, 2: 4})
    rot = explicit_map(fs, fs, {i: (i + 1) % 4 for i in range(4)})
    pushed = nets.pushforward(rot, net)
    w = full_window(fs)
    before = sorted(v.as_fraction() for v in dimension_class(net, fs, w).values)
    after = sorted(v.as_fraction() for v in dimension_class(pushed, fs, w).values)
    assert before == after


# ---------------------------------------------------------------------------
# the GNVW index


def test_gnvw_identity_is_one():
    w = box_window(LINE, (0,), (7,))
    for d in (2, 3, 4, 5):
        net = nets.uniform_net(LINE, d)
        assert gnvw_index(qca.identity_automorphism(net), w) == PositiveRational(1)


def test_gnvw_unit_shift_is_d():
    w = box_window(LINE, (0,), (7,))
    for d in (2, 3, 4, 5):
        net = nets.uniform_net(LINE, d)
        sh = qca.shift_automorphism(net, translate_map(LINE, (1,)))
        assert gnvw_index(sh, w) == PositiveRational(d)
        assert gnvw_index(qca.invert(sh), w) == PositiveRational(1, d)


def test_gnvw_partial_shift_counts_moved_factor():
    net = nets.uniform_net(LINE, 6)
    w = box_window(LINE, (0,), (7,))
    right = translate_map(LINE, (1,))
    two = qca.shift_automorphism(net, right, factor_dims=lambda x: (2, 3))
    three = qca.shift_automorphism(net, right, factor_dims=lambda x: (3, 2))
    assert gnvw_index(two, w) == PositiveRational(2)
    assert gnvw_index(three, w) == PositiveRational(3)


def test_gnvw_depth_one_circuit_is_one():
    rng = np.random.default_rng(5)
    net = nets.uniform_net(LINE, 3)
    w = box_window(LINE, (0,), (7,))
    for offset in (0, 1):
        blocks = tuple(
            (((2 * k + offset,), (2 * k + offset + 1,)), matalg.haar_unitary(9, rng))
            for k in range(-1, 5)
        )
        layer = qca.layer_automorphism(net, blocks)
        assert gnvw_index(layer, w) == PositiveRational(1)


def test_gnvw_shift_support_dims_oracle():
    # independent check of the blocked support-algebra dimensions behind the
    # index of the qubit shift: images of the pair units generate the full
    # algebra of the right overlap, and nothing of the left one
    net = nets.uniform_net(LINE, 2)
    w = box_window(LINE, (0,), (7,))
    alpha = qca.shift_automorphism(net, translate_map(LINE, (1,)))
    pair = ((2,), (3,))
    right = ((3,), (4,))
    gens = []
    touches_left = False
    for x in pair:
        for _, _, e in matalg.matrix_units(2):
            img = qca.apply(alpha, qca.site_op(net, x, e), w)
            assert set(img.sites) <= set(right)
            touches_left = touches_left or bool(set(img.sites) & {(1,), (2,)})
            pos = tuple(right.index(y) for y in img.sites)
            gens.append(legs.embed(img.mat, pos, (2, 2)))
    alg = matalg.algebra_from_generators(gens, 4)
    assert alg.dim == 16  # d_right = 4, whole pair dimension
    assert not touches_left  # d_left = 1
    assert gnvw_index(alpha, w) == PositiveRational(4, 2)


def _chain_library(net, d, rng):
    right = translate_map(LINE, (1,))
    sh = qca.shift_automorphism(net, right)
    blocks = tuple(
        (((2 * k,), (2 * k + 1,)), matalg.haar_unitary(d * d, rng)) for k in range(-2, 10)
    )
    return [sh, qca.invert(sh), qca.layer_automorphism(net, blocks),
            qca.identity_automorphism(net)]


def test_gnvw_composition_is_multiplicative():
    rng = np.random.default_rng(23)
    w = box_window(LINE, (0,), (15,))
    for d in (2, 3):
        net = nets.uniform_net(LINE, d)
        lib = _chain_library(net, d, rng)
        for _ in range(6):
            a, b = (lib[i] for i in rng.integers(0, len(lib), size=2))
            assert gnvw_index(qca.compose(a, b), w) == gnvw_index(a, w) * gnvw_index(b, w)


def test_gnvw_tensor_is_multiplicative():
    rng = np.random.default_rng(29)
    w = box_window(LINE, (0,), (11,))
    net2, net3 = nets.uniform_net(LINE, 2), nets.uniform_net(LINE, 3)
    lib2 = _chain_library(net2, 2, rng)
    lib3 = _chain_library(net3, 3, rng)
    for _ in range(4):
        a = lib2[int(rng.integers(0, len(lib2)))]
        b = lib3[int(rng.integers(0, len(lib3)))]
        tensored = qca.eh_tensor(qca.stable_element(a), qca.stable_element(b)).alpha
        assert gnvw_index(tensored, w) == gnvw_index(a, w) * gnvw_index(b, w)


def test_gnvw_all_positions_agree_for_shift():
    net = nets.uniform_net(LINE, 2)
    w = box_window(LINE, (0,), (9,))
    sh = qca.shift_automorphism(net, translate_map(LINE, (1,)))
    assert gnvw_index(sh, w, all_positions=True) == PositiveRational(2)


def test_gnvw_window_too_small():
    net = nets.uniform_net(LINE, 2)
    sh = qca.shift_automorphism(net, translate_map(LINE, (1,)))
    with pytest.raises(InputError, match="at least 6"):
        gnvw_index(sh, box_window(LINE, (0,), (5,)))


def test_gnvw_rejects_nonuniform_window():
    net = nets.table_net(LINE, {(x,): (2 if x % 2 else 3) for x in range(12)})
    w = box_window(LINE, (0,), (11,))
    with pytest.raises(StructureError, match="translation-uniform"):
        gnvw_index(qca.identity_automorphism(net), w)


def test_gnvw_trivial_net_is_one():
    net = nets.table_net(LINE, {})
    w = box_window(LINE, (0,), (7,))
    assert gnvw_index(qca.identity_automorphism(net), w) == PositiveRational(1)


# ---------------------------------------------------------------------------
# the boundary shift


def _subfactor_presentation(d, a, rng, space=None, site=0, label=""):
    """M_a inside M_d, rotated by a Haar frame."""
    sp = space or FiniteSpace((site,))
    amb = nets.table_net(sp, {site: d})
    u = matalg.haar_unitary(d, rng)
    gens = [
        u @ np.kron(g, np.eye(d // a, dtype=complex)) @ u.conj().T
        for _, _, g in matalg.matrix_units(a)
    ]
    return nets.sitewise_presentation(amb, {site: gens}, label=label or f"M{a}<M{d}"), u


def test_mv_full_inclusion_probes_like_unit_shift():
    rng = np.random.default_rng(31)
    pre, _ = _subfactor_presentation(3, 3, rng)
    alpha = mv_boundary_shift(pre, 6)
    sh = qca.shift_automorphism(alpha.net, translate_map(LINE, (1,)))
    w = box_window(LINE, (0,), (5,))
    assert qca.probe_distance(alpha, sh, w) < 1e-9


def test_mv_scalar_inclusion_probes_like_identity():
    rng = np.random.default_rng(32)
    pre, _ = _subfactor_presentation(4, 1, rng)
    alpha = mv_boundary_shift(pre, 6)
    w = box_window(LINE, (0,), (5,))
    assert qca.probe_distance(alpha, qca.identity_automorphism(alpha.net), w) < 1e-9


def test_mv_round_trip_small():
    rng = np.random.default_rng(33)
    w = box_window(LINE, (0,), (7,))
    for a, b in ((2, 3), (3, 2), (4, 2)):
        pre, _ = _subfactor_presentation(a * b, a, rng)
        assert gnvw_index(mv_boundary_shift(pre, 8), w) == PositiveRational(a)


def test_mv_moves_presented_factor_only():
    # a presented-factor probe translates; a commutant probe stays put
    rng = np.random.default_rng(34)
    pre, u = _subfactor_presentation(6, 2, rng)
    alpha = mv_boundary_shift(pre, 6)
    net = alpha.net
    w = box_window(LINE, (0,), (4,))
    e12 = np.zeros((2, 2), dtype=complex)
    e12[0, 1] = 1.0
    moved = u @ np.kron(e12, np.eye(3, dtype=complex)) @ u.conj().T
    img = qca.apply(alpha, qca.site_op(net, (1,), moved), w)
    assert img.sites == ((2,),)
    assert np.allclose(img.mat, moved, atol=1e-9)
    c = np.zeros((3, 3), dtype=complex)
    c[0, 2] = 1.0
    stays = u @ np.kron(np.eye(2, dtype=complex), c) @ u.conj().T
    img2 = qca.apply(alpha, qca.site_op(net, (1,), stays), w)
    assert img2.sites == ((1,),)
    assert np.allclose(img2.mat, stays, atol=1e-9)


def test_mv_rejects_short_chain():
    rng = np.random.default_rng(35)
    pre, _ = _subfactor_presentation(4, 2, rng)
    with pytest.raises(InputError, match="chain_length"):
        mv_boundary_shift(pre, 1)


def test_mv_split_failure_on_nonfactor():
    fs = FiniteSpace((0,))
    amb = nets.table_net(fs, {0: 2})
    pre = nets.sitewise_presentation(
        amb, {0: [np.diag([1.0, -1.0]).astype(complex)]}, label="diagonal"
    )
    with pytest.raises(StructureError, match="split failure"):
        mv_boundary_shift(pre, 6)


def test_mv_multisite_space_shifts_each_fiber():
    rng = np.random.default_rng(36)
    fs = FiniteSpace((0, 1))
    amb = nets.table_net(fs, {0: 2, 1: 6})
    u = matalg.haar_unitary(6, rng)
    gens1 = [
        u @ np.kron(g, np.eye(2, dtype=complex)) @ u.conj().T
        for _, _, g in matalg.matrix_units(3)
    ]
    gens0 = [g for _, _, g in matalg.matrix_units(2)]
    pre = nets.sitewise_presentation(amb, {0: gens0, 1: gens1}, label="mixed")
    alpha = mv_boundary_shift(pre, 6)
    prod_site = (1, (1,))
    w = Window(alpha.net.space, tuple((x, (n,)) for x in (0, 1) for n in range(4)))
    probe = u @ np.kron(np.diag([1.0, 2.0, 3.0]).astype(complex), np.eye(2)) @ u.conj().T
    img = qca.apply(alpha, qca.site_op(alpha.net, prod_site, probe), w)
    assert img.sites == ((1, (2,)),)
    assert np.allclose(img.mat, probe, atol=1e-9)


# ---------------------------------------------------------------------------
# the flasque swindle


def test_flasque_swindle_matrix_block_at_origin():
    net = nets.table_net(HALF, {(0,): 2}, label="M2@0")
    f = translate_map(HALF, (1,))
    w = box_window(HALF, (0,), (9,))
    rep = flasque_swindle_check(net, f, w)
    assert rep.passed
    assert rep.dims_consistent
    assert rep.checked_windows > 0
    # the stabilized net repeats one qubit on every site of the orbit
    for site, q_s, q_base, q_pushed in rep.dims_rows:
        assert q_s == q_base * q_pushed
        assert q_s == 2


def test_flasque_swindle_dims_oracle():
    # independent bookkeeping: the stabilized dimension at site n is the
    # product of the base dimensions over the backward orbit 0..n
    net = nets.table_net(HALF, {(0,): 2, (1,): 3}, label="mixed")
    f = translate_map(HALF, (1,))
    w = box_window(HALF, (0,), (7,))
    rep = flasque_swindle_check(net, f, w)
    assert rep.passed
    expect = {}
    for (n,) in w.sites:
        expect[(n,)] = math.prod(net.q((k,)) for k in range(n + 1))
    for site, q_s, _, _ in rep.dims_rows:
        assert q_s == expect[site]


def test_flasque_swindle_trivial_class():
    net = nets.table_net(HALF, {})
    rep = flasque_swindle_check(net, translate_map(HALF, (1,)), box_window(HALF, (0,), (5,)))
    assert rep.passed
    assert any("trivial" in n for n in rep.notes)
    assert rep.control.radius in (0, None) and not rep.control.pairs


def test_flasque_swindle_presentation_input():
    rng = np.random.default_rng(41)
    amb = nets.table_net(HALF, {(0,): 6})
    u = matalg.haar_unitary(6, rng)
    gens = [
        u @ np.kron(g, np.eye(3, dtype=complex)) @ u.conj().T
        for _, _, g in matalg.matrix_units(2)
    ]
    pre = nets.sitewise_presentation(amb, {(0,): gens}, label="M2<M6")
    rep = flasque_swindle_check(pre, translate_map(HALF, (1,)), box_window(HALF, (0,), (9,)))
    assert rep.passed
    assert rep.dims_rows[0][1] == 2  # the presented factor, not the ambient 6


def test_flasque_swindle_window_too_small():
    net = nets.table_net(HALF, {(0,): 2})
    far = qca  # noqa: F841  (keep the import grouping honest)
    f = translate_map(HALF, (20,))
    with pytest.raises(InputError, match="window"):
        flasque_swindle_check(net, f, box_window(HALF, (0,), (5,)))


# ---------------------------------------------------------------------------
# the class comparison map


def test_k0_local_matches_dimension_class():
    net = nets.uniform_net(LINE, 3)
    w = box_window(LINE, (0,), (2,))
    tagged = k0_loc_to_az_class(net, w)
    assert tagged.kind == "local"
    assert tagged.cls.values == (PositiveRational(27),)
    assert tagged.squared == (False,)


def test_k0_full_presentation_agrees_with_local():
    fs = FiniteSpace((0, 1))
    net = nets.table_net(fs, {0: 2, 1: 3})
    local = k0_loc_to_az_class(net)
    az = k0_loc_to_az_class(nets.full_presentation(net))
    assert az.kind == "azumaya"
    assert local.cls.values == az.cls.values
    assert az.squared == (False,) * len(az.cls.components)


def test_k0_azumaya_subfactor_root():
    rng = np.random.default_rng(43)
    pre, _ = _subfactor_presentation(6, 2, rng)
    tagged = k0_loc_to_az_class(pre)
    assert tagged.cls.values == (PositiveRational(2),)
    assert tagged.squared == (False,)


def test_k0_nonsquare_dimension_flagged():
    fs = FiniteSpace((0,))
    amb = nets.table_net(fs, {0: 2})
    pre = nets.sitewise_presentation(
        amb, {0: [np.diag([1.0, -1.0]).astype(complex)]}, label="abelian"
    )
    tagged = k0_loc_to_az_class(pre)
    assert tagged.squared == (True,)
    assert tagged.cls.values == (PositiveRational(2),)


def test_k0_distinguishes_small_tables():
    # the comparison map stays injective on a small family of classes
    fs = FiniteSpace((0, 1))
    seen = {}
    for d0 in (1, 2, 3):
        for d1 in (1, 2):
            net = nets.table_net(fs, {0: d0, 1: d1})
            az = k0_loc_to_az_class(nets.full_presentation(net))
            key = tuple(v.as_fraction() for v in az.cls.values)
            assert key not in seen or seen[key] == (d0 * d1)
            seen[key] = d0 * d1


def test_k0_needs_window_over_infinite_space():
    net = nets.uniform_net(LINE, 2)
    with pytest.raises(InputError, match="window"):
        k0_loc_to_az_class(net)
