"""Controlled automorphisms: word application, control measurement,
locality certificates, circuit layering, the swap trick, and stable moves.

Word application is checked against dense global-unitary conjugation oracles
built independently with explicit leg embeddings; shifts are checked against
hand-placed kron expectations.
"""

import numpy as np
import pytest

from coarseqca import legs
from coarseqca.coarse import (
    FiniteSpace,
    Grid,
    Window,
    box_window,
    diagonal,
    explicit_map,
    explicit_relation,
    metric_ball,
    translate_map,
)
from coarseqca.errors import InputError, StructureError
from coarseqca.matalg import haar_unitary, matrix_units, random_hermitian
from coarseqca.nets import conjugation_hom, identity_hom, tensor, table_net, uniform_net
from coarseqca.qca import (
    Automorphism,
    BlockLayer,
    Circuit,
    SiteLocal,
    SupportedOp,
    WindowUnitary,
    apply,
    as_window_matrix,
    block_certificate,
    circuit_automorphism,
    compose,
    conjugate_certificate,
    conjugate_local,
    eh_tensor,
    identity_automorphism,
    invert,
    layer_automorphism,
    layer_circuit,
    measure_control,
    multiply,
    probe_distance,
    shift_automorphism,
    site_op,
    sitewise_automorphism,
    sitewise_certificate,
    stabilize,
    stable_element,
    stable_ops,
    supported_op,
    swap_trick,
    uniform_local_finiteness_bound,
    verify_certificate,
    window_automorphism,
)

X = np.array([[0, 1], [1, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
I2 = np.eye(2, dtype=complex)

LINE = Grid(1)


def qubit_sites(*xs):
    return frozenset((x,) for x in xs)


def qubit_net(*xs):
    return uniform_net(LINE, 2, support=qubit_sites(*xs))


def global_unitary(net, alpha, window):
    """Dense oracle: multiply the embedded atom unitaries over the window."""
    dims = tuple(net.q(x) for x in window.sites)
    u = np.eye(int(np.prod(dims)), dtype=complex)
    for atom in alpha.word:
        if isinstance(atom, SiteLocal):
            for i, x in enumerate(window.sites):
                v = atom.unit_at(x)
                if v is not None:
                    u = legs.embed(np.asarray(v, dtype=complex), (i,), dims) @ u
        elif isinstance(atom, BlockLayer):
            for ss, v in atom.blocks:
                pos = tuple(window.sites.index(s) for s in ss)
                u = legs.embed(v, pos, dims) @ u
        elif isinstance(atom, WindowUnitary):
            pos = tuple(window.sites.index(s) for s in atom.window.sites)
            u = legs.embed(atom.unitary, pos, dims) @ u
        else:
            raise AssertionError("oracle only covers unitary atoms")
    return u


def pair_layer(net, pairs, rng):
    return layer_automorphism(
        net, [(ss, haar_unitary(4, rng)) for ss in pairs]
    )


# ---------------------------------------------------------------------------
# applying words


def test_apply_identity_word_returns_probe():
    net = qubit_net(0, 1, 2, 3)
    w = box_window(LINE, (0,), (3,))
    out = apply(identity_automorphism(net), site_op(net, (3,), X), w)
    assert out.sites == ((3,),)
    assert np.allclose(out.mat, X)


def test_apply_full_shift_moves_site_operator():
    net = uniform_net(LINE, 2)
    alpha = shift_automorphism(net, translate_map(LINE, (1,)))
    w = box_window(LINE, (-1,), (2,))
    out = apply(alpha, site_op(net, (0,), X), w)
    assert out.sites == ((1,),)
    assert np.allclose(out.mat, X)


def test_apply_partial_shift_moves_only_first_factor():
    net = table_net(LINE, {(i,): 4 for i in range(4)})
    alpha = shift_automorphism(net, translate_map(LINE, (1,)), lambda x: (2, 2))
    w = box_window(LINE, (0,), (3,))

    out = apply(alpha, site_op(net, (0,), np.kron(X, I2)), w)
    assert out.sites == ((1,),)
    assert np.allclose(out.mat, np.kron(X, I2))

    out = apply(alpha, site_op(net, (0,), np.kron(I2, Z)), w)
    assert out.sites == ((0,),)
    assert np.allclose(out.mat, np.kron(I2, Z))

    out = apply(alpha, site_op(net, (0,), np.kron(X, Z)), w)
    assert out.sites == ((0,), (1,))
    expected = np.kron(np.kron(I2, Z), np.kron(X, I2))
    assert np.allclose(out.mat, expected)


def test_apply_circuit_matches_dense_oracle():
    rng = np.random.default_rng(11)
    net = qubit_net(0, 1, 2, 3, 4, 5)
    w = box_window(LINE, (0,), (5,))
    l0 = pair_layer(net, [((0,), (1,)), ((2,), (3,)), ((4,), (5,))], rng)
    l1 = pair_layer(net, [((1,), (2,)), ((3,), (4,))], rng)
    alpha = compose(l1, l0)
    u = global_unitary(net, alpha, w)
    for x, probe in [((0,), X), ((3,), Z), ((5,), random_hermitian(2, rng))]:
        img = apply(alpha, site_op(net, x, probe), w)
        lhs = as_window_matrix(net, img, w)
        rhs = u @ as_window_matrix(net, site_op(net, x, probe), w) @ u.conj().T
        assert np.linalg.norm(lhs - rhs, 2) < 1e-9


def test_apply_rejects_margin_escape():
    net = qubit_net(0, 1, 2, 3, 4, 5)
    alpha = pair_layer(net, [((1,), (2,))], np.random.default_rng(0))
    w = box_window(LINE, (0,), (2,))
    with pytest.raises(InputError, match="fatten the window"):
        apply(alpha, site_op(net, (2,), X), w)


def test_compose_is_word_concatenation_on_probes():
    rng = np.random.default_rng(5)
    net = qubit_net(0, 1, 2, 3)
    w = box_window(LINE, (0,), (3,))
    alpha = pair_layer(net, [((0,), (1,))], rng)
    beta = sitewise_automorphism(net, {x: haar_unitary(2, rng) for x in w.sites})
    gamma = compose(alpha, beta)
    for x in [(0,), (1,), (3,)]:
        two = apply(alpha, apply(beta, site_op(net, x, X), w), w)
        one = apply(gamma, site_op(net, x, X), w)
        big = box_window(LINE, (0,), (3,))
        assert np.allclose(
            as_window_matrix(net, one, big), as_window_matrix(net, two, big)
        )


def test_compose_shift_controls_add():
    net = qubit_net(0)
    alpha = shift_automorphism(net, translate_map(LINE, (1,)))
    assert compose(alpha, alpha).declared_control.radius == 2


def test_invert_roundtrip_identity_on_probes():
    rng = np.random.default_rng(3)
    net = qubit_net(0, 1, 2, 3)
    w = box_window(LINE, (-2,), (5,))
    alpha = compose(
        pair_layer(net, [((1,), (2,))], rng),
        sitewise_automorphism(net, {(0,): haar_unitary(2, rng), (3,): haar_unitary(2, rng)}),
    )
    assert probe_distance(compose(invert(alpha), alpha), identity_automorphism(net), w) < 1e-9
    assert probe_distance(compose(alpha, invert(alpha)), identity_automorphism(net), w) < 1e-9


def test_invert_partial_shift_roundtrip():
    fs = FiniteSpace(tuple(range(5)))
    everything = explicit_relation(fs, {(a, b) for a in fs.sites for b in fs.sites})
    net = table_net(fs, {i: 4 for i in range(5)})
    cycle = explicit_map(fs, fs, {i: (i + 1) % 5 for i in range(5)})
    alpha = shift_automorphism(net, cycle, lambda x: (2, 2), control=everything)
    w = Window(fs, fs.sites)
    assert probe_distance(compose(invert(alpha), alpha), identity_automorphism(net), w) < 1e-12


def test_invert_explicit_map_requires_bijection():
    fs = FiniteSpace((0, 1, 2))
    net = table_net(fs, {0: 2, 1: 2, 2: 2})
    f = explicit_map(fs, fs, {0: 1, 1: 1, 2: 0})
    alpha = shift_automorphism(net, f, "full",
                               control=explicit_relation(fs, {(1, 0), (0, 2)}))
    with pytest.raises(InputError, match="not injective"):
        invert(alpha)


# ---------------------------------------------------------------------------
# measuring control


def test_measure_control_sitewise_is_diagonal():
    rng = np.random.default_rng(2)
    net = qubit_net(0, 1, 2)
    alpha = sitewise_automorphism(net, {(i,): haar_unitary(2, rng) for i in range(3)})
    e = measure_control(alpha, box_window(LINE, (0,), (2,)))
    assert e.radius == 0 and not e.pairs


def test_measure_control_unit_shift_is_ball_one():
    net = uniform_net(LINE, 2)
    alpha = shift_automorphism(net, translate_map(LINE, (1,)))
    e = measure_control(alpha, box_window(LINE, (-3,), (3,)))
    assert e.radius == 1 and not e.pairs


def test_measure_control_within_declared():
    rng = np.random.default_rng(9)
    net = qubit_net(0, 1, 2, 3, 4)
    alpha = compose(
        pair_layer(net, [((1,), (2,)), ((3,), (4,))], rng),
        pair_layer(net, [((0,), (1,)), ((2,), (3,))], rng),
    )
    w = box_window(LINE, (0,), (4,))
    measured = measure_control(alpha, w)
    assert measured.radius <= alpha.declared_control.radius


def test_measure_control_tensor_is_union():
    a_net = uniform_net(LINE, 2)
    b_net = uniform_net(LINE, 3, label="b")
    rng = np.random.default_rng(4)
    alpha = shift_automorphism(a_net, translate_map(LINE, (1,)))
    beta = sitewise_automorphism(b_net, {(0,): haar_unitary(3, rng)})
    both = eh_tensor(stable_element(alpha), stable_element(beta)).alpha
    e = measure_control(both, box_window(LINE, (-3,), (3,)))
    assert e.radius == 1


def test_measure_control_compose_bounded_by_composition():
    net = uniform_net(LINE, 2)
    alpha = shift_automorphism(net, translate_map(LINE, (1,)))
    squared = compose(alpha, alpha)
    e = measure_control(squared, box_window(LINE, (-4,), (4,)))
    assert e.radius == 2 <= squared.declared_control.radius


# ---------------------------------------------------------------------------
# uniform local finiteness


def test_uniform_bound_on_interval():
    w = box_window(LINE, (-5,), (5,))
    assert uniform_local_finiteness_bound(w.sites, metric_ball(LINE, 2), w) == 5


def test_uniform_bound_on_evens():
    w = box_window(LINE, (-4,), (4,))
    evens = [(x,) for x in range(-4, 5, 2)]
    assert uniform_local_finiteness_bound(evens, metric_ball(LINE, 1), w) == 1


def test_uniform_bound_matches_bruteforce():
    rng = np.random.default_rng(17)
    fs = FiniteSpace(tuple(range(8)))
    w = Window(fs, tuple(range(8)))
    for _ in range(10):
        y = [int(s) for s in rng.choice(8, size=4, replace=False)]
        pairs = {(int(a), int(b)) for a, b in rng.integers(0, 8, size=(6, 2))}
        e = explicit_relation(fs, pairs)
        expect = max(
            sum(1 for yy in y if yy == x or (yy, x) in e.pairs) for x in y
        )
        assert uniform_local_finiteness_bound(y, e, w) == expect


# ---------------------------------------------------------------------------
# locality certificates


def test_certificate_sitewise_passes():
    rng = np.random.default_rng(21)
    net = qubit_net(0, 1, 2, 3)
    w = box_window(LINE, (0,), (3,))
    alpha = sitewise_automorphism(net, {x: haar_unitary(2, rng) for x in w.sites})
    cert = sitewise_certificate(net, w.sites)
    report = verify_certificate(alpha, cert, w)
    assert report.passed and report.commuting and report.generates and report.invariant


def test_certificate_shift_fails_invariance():
    net = uniform_net(LINE, 2)
    alpha = shift_automorphism(net, translate_map(LINE, (1,)))
    w = box_window(LINE, (-3,), (3,))
    cert = sitewise_certificate(net, [(x,) for x in range(-2, 3)])
    report = verify_certificate(alpha, cert, w)
    assert not report.invariant and not report.passed


def test_certificate_disjoint_pairs_pass():
    rng = np.random.default_rng(23)
    net = qubit_net(0, 1, 2, 3)
    w = box_window(LINE, (0,), (3,))
    alpha = pair_layer(net, [((0,), (1,)), ((2,), (3,))], rng)
    cert = block_certificate(net, [((0,), (1,)), ((2,), (3,))])
    report = verify_certificate(alpha, cert, w)
    assert report.passed
    assert any("disjoint" in n for n in report.notes)


def test_certificate_detects_non_generating_factors():
    net = qubit_net(0, 1)
    w = box_window(LINE, (0,), (1,))
    cert = block_certificate(
        net, [((0,),), ((1,),)],
        gen_lists=[[Z], [e for _, _, e in matrix_units(2)]],
    )
    report = verify_certificate(identity_automorphism(net), cert, w)
    assert not report.generates and not report.passed
    assert any("not generated" in f for f in report.failures)


def conjugated_pair_setup(rng, n_qubits=6):
    """An automorphism with genuinely overlapping invariant factors.

    W is an odd-pairs layer; the factors are W-conjugates of the even pair
    algebras, so their supports overlap; alpha conjugates a random even-pairs
    layer by W and therefore maps each factor onto itself.
    """
    net = qubit_net(*range(n_qubits))
    w_big = box_window(LINE, (-1,), (n_qubits,))
    odd = [((x,), (x + 1,)) for x in range(1, n_qubits - 1, 2)]
    even = [((x,), (x + 1,)) for x in range(0, n_qubits, 2)]
    w_auto = pair_layer(net, odd, rng)
    inner = pair_layer(net, even, rng)
    alpha = compose(compose(w_auto, inner), invert(w_auto))

    blocks, gens = [], []
    for ss in even:
        fat = tuple((x,) for x in range(ss[0][0] - 1, ss[1][0] + 2))
        blocks.append(fat)
        units = []
        for _, _, e in matrix_units(4):
            op = supported_op(net, ss, e)
            img = apply(w_auto, op, w_big)
            units.append(as_window_matrix(net, img, Window(LINE, fat)))
        gens.append(units)
    cert = block_certificate(net, blocks, gen_lists=gens)
    return net, w_big, alpha, cert


def test_certificate_overlapping_blocks_pass():
    rng = np.random.default_rng(31)
    net, w, alpha, cert = conjugated_pair_setup(rng)
    report = verify_certificate(alpha, cert, w)
    assert report.passed, report.failures


def test_conjugate_certificate_by_identity_keeps_blocks():
    rng = np.random.default_rng(6)
    net = qubit_net(0, 1, 2, 3)
    w = box_window(LINE, (0,), (3,))
    alpha = sitewise_automorphism(net, {x: haar_unitary(2, rng) for x in w.sites})
    cert = sitewise_certificate(net, w.sites)
    moved = conjugate_certificate(identity_automorphism(net), cert)
    assert [ss for ss, _ in moved.blocks] == [ss for ss, _ in cert.blocks]
    assert verify_certificate(alpha, moved, w).passed


def test_conjugate_certificate_shift_moves_blocks():
    net = uniform_net(LINE, 2)
    beta = shift_automorphism(net, translate_map(LINE, (1,)))
    cert = sitewise_certificate(net, [(0,)])
    moved = conjugate_certificate(beta, cert)
    (ss, fac), = moved.blocks
    assert (1,) in ss
    w = box_window(LINE, (-2,), (2,))
    for g in fac.generators(w):
        dims = tuple(net.q(x) for x in w.sites)
        sup = legs.support_legs(g, dims, 1e-8)
        assert [w.sites[i] for i in sup] == [(1,)]


def test_conjugate_certificate_normality():
    rng = np.random.default_rng(41)
    net = qubit_net(0, 1, 2, 3)
    alpha = pair_layer(net, [((0,), (1,)), ((2,), (3,))], rng)
    cert = block_certificate(net, [((0,), (1,)), ((2,), (3,))])
    beta = compose(
        pair_layer(net, [((1,), (2,))], rng),
        sitewise_automorphism(net, {(0,): haar_unitary(2, rng)}),
    )
    conj = compose(compose(beta, alpha), invert(beta))
    moved = conjugate_certificate(beta, cert)
    w = box_window(LINE, (-4,), (7,))
    report = verify_certificate(conj, moved, w)
    assert report.passed, report.failures


# ---------------------------------------------------------------------------
# layering


def test_layer_circuit_sitewise_depth_one():
    rng = np.random.default_rng(13)
    net = qubit_net(0, 1, 2, 3)
    w = box_window(LINE, (0,), (3,))
    alpha = sitewise_automorphism(net, {x: haar_unitary(2, rng) for x in w.sites})
    cert = sitewise_certificate(net, w.sites)
    circ = layer_circuit(alpha, cert, w.sites, w)
    assert circ.depth == 1
    assert sorted(ss for ss, _ in circ.layers[0]) == [((0,),), ((1,),), ((2,),), ((3,),)]
    rebuilt = circuit_automorphism(net, circ)
    assert probe_distance(rebuilt, alpha, w) < 1e-9


def test_layer_circuit_disjoint_pairs_depth_one():
    rng = np.random.default_rng(14)
    net = qubit_net(0, 1, 2, 3)
    w = box_window(LINE, (0,), (3,))
    alpha = pair_layer(net, [((0,), (1,)), ((2,), (3,))], rng)
    cert = block_certificate(net, [((0,), (1,)), ((2,), (3,))])
    circ = layer_circuit(alpha, cert, w.sites, w)
    assert circ.depth == 1
    n = uniform_local_finiteness_bound(w.sites, cert.uniform_bound, w)
    assert circ.depth <= n + 1
    rebuilt = circuit_automorphism(net, circ)
    assert probe_distance(rebuilt, alpha, w) < 1e-9


def test_layer_circuit_overlapping_blocks_roundtrip():
    rng = np.random.default_rng(15)
    net, w, alpha, cert = conjugated_pair_setup(rng)
    support = [(x,) for x in range(6)]
    circ = layer_circuit(alpha, cert, support, w)
    n = uniform_local_finiteness_bound(support, cert.uniform_bound, w)
    assert circ.depth <= n + 1
    assert circ.depth <= 4  # blocks have radius 1: depth at most 2R + 2
    rebuilt = circuit_automorphism(net, circ)
    assert probe_distance(rebuilt, alpha, w) < 1e-9


def test_layer_circuit_rejects_failing_certificate():
    net = uniform_net(LINE, 2)
    alpha = shift_automorphism(net, translate_map(LINE, (1,)))
    w = box_window(LINE, (-3,), (3,))
    cert = sitewise_certificate(net, [(x,) for x in range(-2, 3)])
    with pytest.raises(InputError, match="certificate does not verify"):
        layer_circuit(alpha, cert, w.sites, w)


# ---------------------------------------------------------------------------
# swap trick


def test_swap_trick_on_identity_is_swap():
    net = qubit_net(0)
    phi = identity_hom(net)
    theta = swap_trick(phi)
    tnet = theta.net
    w = Window(LINE, ((0,),))
    out = apply(theta, site_op(tnet, (0,), np.kron(X, Z)), w)
    assert np.allclose(as_window_matrix(tnet, out, w), np.kron(Z, X))
    unit = theta.word[0].unit_at((0,))
    swap = np.zeros((4, 4), dtype=complex)
    for i in range(2):
        for j in range(2):
            swap[j * 2 + i, i * 2 + j] = 1
    assert np.allclose(unit, swap)


def test_swap_trick_is_involution():
    rng = np.random.default_rng(8)
    net = qubit_net(0, 1)
    phi = conjugation_hom(net, {(0,): haar_unitary(2, rng), (1,): haar_unitary(2, rng)})
    theta = swap_trick(phi)
    w = box_window(LINE, (0,), (1,))
    ident = identity_automorphism(theta.net)
    assert probe_distance(compose(theta, theta), ident, w) < 1e-9


def test_swap_trick_intertwines_conjugation():
    rng = np.random.default_rng(19)
    net = qubit_net(0)
    u = haar_unitary(2, rng)
    phi = conjugation_hom(net, {(0,): u})
    alpha = sitewise_automorphism(net, {(0,): haar_unitary(2, rng)})
    theta = swap_trick(phi)
    w = Window(LINE, ((0,),))

    lifted = eh_tensor(stable_element(alpha), stable_element(identity_automorphism(net))).alpha
    lifted = Automorphism(theta.net, lifted.word, lifted.declared_control)
    lhs = compose(theta, compose(lifted, theta))

    conj = conjugate_local(stable_element(alpha), phi).alpha
    other = eh_tensor(stable_element(identity_automorphism(net)), stable_element(conj)).alpha
    rhs = Automorphism(theta.net, other.word, other.declared_control)
    assert probe_distance(lhs, rhs, w) < 1e-9


# ---------------------------------------------------------------------------
# stable moves


def test_stabilize_extends_by_identity():
    rng = np.random.default_rng(25)
    net = qubit_net(0, 1)
    spare = uniform_net(LINE, 3, support=qubit_sites(0, 1), label="spare")
    w = box_window(LINE, (0,), (1,))
    alpha = pair_layer(net, [((0,), (1,))], rng)
    elem = stabilize(stable_element(alpha), spare)

    orig = apply(alpha, site_op(net, (0,), X), w)
    m = as_window_matrix(net, orig, w)
    lifted = apply(elem.alpha, site_op(elem.net, (0,), np.kron(X, np.eye(3))), w)
    big = as_window_matrix(elem.net, lifted, w)
    expected = legs.embed(m, (0, 2), (2, 3, 2, 3))
    assert np.linalg.norm(big - expected) < 1e-9


def test_multiply_with_inverse_is_identity_on_probes():
    rng = np.random.default_rng(26)
    net = qubit_net(0, 1, 2)
    w = box_window(LINE, (-1,), (3,))
    alpha = compose(pair_layer(net, [((1,), (2,))], rng),
                    sitewise_automorphism(net, {(0,): haar_unitary(2, rng)}))
    prod = multiply(stable_element(alpha), stable_element(invert(alpha)))
    assert probe_distance(prod.alpha, identity_automorphism(net), w) < 1e-9


def test_eh_tensor_acts_factorwise():
    rng = np.random.default_rng(27)
    a_net = qubit_net(0)
    b_net = uniform_net(LINE, 3, support=qubit_sites(0), label="b")
    ua, ub = haar_unitary(2, rng), haar_unitary(3, rng)
    alpha = sitewise_automorphism(a_net, {(0,): ua})
    beta = sitewise_automorphism(b_net, {(0,): ub})
    both = eh_tensor(stable_element(alpha), stable_element(beta))
    w = Window(LINE, ((0,),))
    a, b = random_hermitian(2, rng), random_hermitian(3, rng)
    out = apply(both.alpha, site_op(both.net, (0,), np.kron(a, b)), w)
    expected = np.kron(ua @ a @ ua.conj().T, ub @ b @ ub.conj().T)
    assert np.allclose(as_window_matrix(both.net, out, w), expected)


def test_conjugate_local_requires_diagonal_control():
    net = qubit_net(0, 1)
    phi = conjugation_hom(net, {(0,): X}, control=metric_ball(LINE, 1))
    alpha = sitewise_automorphism(net, {(0,): Z})
    with pytest.raises(InputError, match="diagonally controlled"):
        conjugate_local(stable_element(alpha), phi)


def test_conjugate_local_conjugates_the_action():
    rng = np.random.default_rng(28)
    net = qubit_net(0, 1, 2)
    u = haar_unitary(2, rng)
    v = haar_unitary(2, rng)
    phi = conjugation_hom(net, {(1,): u})
    alpha = sitewise_automorphism(net, {(1,): v})
    moved = conjugate_local(stable_element(alpha), phi)
    w = box_window(LINE, (0,), (2,))
    target = sitewise_automorphism(net, {(1,): u @ v @ u.conj().T})
    assert probe_distance(moved.alpha, target, w) < 1e-9
    assert moved.history[-1][0] == "conjugate"


def test_stable_ops_exposes_the_moves():
    net = qubit_net(0)
    elem = stable_element(identity_automorphism(net))
    ops = stable_ops(elem)
    assert set(ops) == {"stabilize", "conjugate_local", "multiply", "eh_tensor"}
    grown = ops["eh_tensor"](stable_element(identity_automorphism(qubit_net(0))))
    assert grown.net.q((0,)) == 4


# ---------------------------------------------------------------------------
# window unitaries


def test_window_unitary_equals_block_action():
    rng = np.random.default_rng(29)
    net = qubit_net(0, 1, 2, 3)
    u = haar_unitary(4, rng)
    wu = window_automorphism(net, box_window(LINE, (1,), (2,)), u)
    bl = layer_automorphism(net, [(((1,), (2,)), u)])
    w = box_window(LINE, (-1,), (4,))
    assert probe_distance(wu, bl, w) < 1e-12
