import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neuraltm import circuits, wcm
from neuraltm.circuits import CircuitError, DnfSpec, dnf_layers, embed_gate, full_adder, half_adder
from neuraltm.linalg import activate


def run_all(layers, X):
    """Rows of X through the layers; returns every intermediate output."""
    outs = []
    for layer in layers:
        X = activate(layer.activation, X @ layer.W.T + layer.b)
        outs.append(X)
    return outs


def binary_rows(d):
    return np.array(list(itertools.product((0, 1), repeat=d)), dtype=float)


def gate_closure(layers, X):
    return all(np.all((Y == 0) | (Y == 1)) for Y in run_all(layers, X))


def test_and_truth_table():
    layers = embed_gate("AND", 2, [0, 1], 0)
    X = binary_rows(2)
    assert run_all(layers, X)[-1][:, 0].tolist() == [0, 0, 0, 1]


def test_three_input_and():
    layers = embed_gate("AND", 4, [0, 1, 2], 3)
    assert len(layers) == 1
    out = run_all(layers, np.array([[1, 1, 1, 0], [1, 1, 0, 0]], dtype=float))[-1]
    assert out[:, 3].tolist() == [1, 0]


def test_xor_truth_table():
    layers = embed_gate("XOR", 3, [0, 1], 2)
    assert len(layers) == 3
    X = np.c_[binary_rows(2), np.zeros(4)]
    assert run_all(layers, X)[-1][:, 2].tolist() == [0, 1, 1, 0]


@pytest.mark.parametrize("kind, n_layers", [("NOT", 1), ("AND", 1), ("NOR", 1), ("OR", 2),
                                            ("NAND", 2), ("XOR", 3)])
def test_layer_counts_and_closure(kind, n_layers):
    inputs = [1] if kind == "NOT" else [1, 4]
    layers = embed_gate(kind, 6, inputs, 2)
    assert len(layers) == n_layers
    X = binary_rows(6)
    assert gate_closure(layers, X)
    Y = run_all(layers, X)[-1]
    untouched = [i for i in range(6) if i not in inputs + [2]]
    assert np.array_equal(Y[:, untouched], X[:, untouched])
    if kind != "XOR":
        assert np.array_equal(Y[:, inputs], X[:, inputs])


def test_gate_errors():
    with pytest.raises(CircuitError) as e:
        embed_gate("AND", 4, [0, 0], 1)
    assert e.value.code == "index-collision"
    with pytest.raises(CircuitError) as e:
        embed_gate("AND", 4, [0, 4], 1)
    assert e.value.code == "index-out-of-range"
    with pytest.raises(CircuitError) as e:
        embed_gate("XOR", 4, [0, 1, 2], 3)
    assert e.value.code == "bad-arity"
    with pytest.raises(CircuitError) as e:
        embed_gate("IMPLIES", 4, [0, 1], 3)
    assert e.value.code == "unknown-gate"


def test_dnf_two_clauses():
    spec = DnfSpec([([0, 1], []), ([0], [1])], [[2], [3]], exclusive=True)
    layers = dnf_layers(spec, 4)
    X = np.c_[binary_rows(2), np.zeros((4, 2))]
    Y = run_all(layers, X)[-1]
    assert np.array_equal(Y[:, 2], X[:, 0] * X[:, 1])
    assert np.array_equal(Y[:, 3], X[:, 0] * (1 - X[:, 1]))
    assert np.array_equal(Y[:, :2], X[:, :2])


def test_dnf_empty_is_identity():
    layers = dnf_layers(DnfSpec([], [], exclusive=True), 5)
    X = binary_rows(5)
    assert np.array_equal(run_all(layers, X)[-1], X)


def test_dnf_requires_exclusive():
    with pytest.raises(CircuitError) as e:
        dnf_layers(DnfSpec([([0], [])], [[1]]), 2)
    assert e.value.code == "non-exclusive-clauses-unsupported"


def test_bp_transition_fires_one_detector(bp_tm):
    layout = wcm.build_layout(bp_tm, 100)
    first, _ = wcm.build_transition(bp_tm, layout)
    w = layout.width
    st, sym1 = layout["st"], layout["sym1"]
    for q, a in itertools.product(bp_tm.states, bp_tm.alphabet):
        x = np.zeros(w)
        x[st[bp_tm.states.index(q)]] = 1
        x[sym1[bp_tm.alphabet.index(a)]] = 1
        fired = first(x)[w:].sum()
        assert fired == (1 if (q, a) in bp_tm.delta else 0)


@pytest.mark.parametrize("a, b, s, c", [(1, 1, 0, 1), (1, 0, 1, 0), (0, 0, 0, 0), (0, 1, 1, 0)])
def test_half_adder(a, b, s, c):
    y = run_all(half_adder(2, 0, 1), np.array([[a, b]], dtype=float))[-1][0]
    assert y.tolist() == [s, c]


def test_half_adder_passthrough_d10():
    layers = half_adder(10, 3, 5)
    X = binary_rows(10)
    outs = run_all(layers, X)
    Y = outs[-1]
    others = [0, 1, 2, 4, 6, 7, 8, 9]
    assert np.array_equal(Y[:, others], X[:, others])
    assert np.array_equal(Y[:, 3], (X[:, 3] + X[:, 5]) % 2)
    assert np.array_equal(Y[:, 5], X[:, 3] * X[:, 5])
    assert gate_closure(layers, X)


def test_full_adder_truth_table():
    layers = full_adder(3, 0, 1, 2)
    assert len(layers) == 8
    X = binary_rows(3)
    Y = run_all(layers, X)[-1]
    a, b, cin = X.T
    assert np.array_equal(Y[:, 0], (a + b + cin) % 2)
    assert np.array_equal(Y[:, 2], np.maximum(a * b, cin * ((a + b) % 2)))
    assert np.array_equal(Y[:, 1], np.zeros(8))
    assert gate_closure(layers, X)


def encode(n, k):
    return [(n >> i) & 1 for i in range(k)]


def add(k, x, y, carry=False):
    d = 2 * k + carry
    layers = circuits.ripple_adder(d, range(k), range(k, 2 * k), 2 * k if carry else None)
    row = np.array(encode(x, k) + encode(y, k) + [0] * carry, dtype=float)
    out = run_all(layers, row[None, :])[-1][0]
    return sum(int(v) << i for i, v in enumerate(out[:k]))


@pytest.mark.parametrize("x, y, want", [(3, 1, 4), (5, 127, 4), (127, 1, 0)])
def test_ripple_examples(x, y, want):
    assert add(7, x, y) == want
    assert add(7, x, y, carry=True) == want


@pytest.mark.parametrize("k", range(1, 9))
def test_increment_and_decrement(k):
    n = 2 ** k
    layers = circuits.ripple_adder(2 * k, range(k), range(k, 2 * k))
    xs = np.arange(n)
    bits_x = (xs[:, None] >> np.arange(k)) & 1
    for y, want in ((1, (xs + 1) % n), (n - 1, (xs - 1) % n)):
        X = np.c_[bits_x, np.tile(encode(y, k), (n, 1))].astype(float)
        outs = run_all(layers, X)
        got = (outs[-1][:, :k] * 2 ** np.arange(k)).sum(axis=1)
        assert np.array_equal(got, want)
        assert all(np.all((Y == 0) | (Y == 1)) for Y in outs)


def test_ripple_errors():
    with pytest.raises(CircuitError) as e:
        circuits.ripple_adder(6, [0, 1, 2], [2, 3, 4])
    assert e.value.code == "overlapping-slices"
    with pytest.raises(CircuitError) as e:
        circuits.ripple_adder(6, [0, 1], [2, 3, 4])
    assert e.value.code == "width-mismatch"


@settings(max_examples=60, deadline=None)
@given(st.integers(8, 24), st.data())
def test_passthrough_randomized(d, data):
    i, j, o = data.draw(st.lists(st.integers(0, d - 1), min_size=3, max_size=3, unique=True))
    kind = data.draw(st.sampled_from(["AND", "NOR", "OR", "NAND", "XOR"]))
    rng = np.random.default_rng(data.draw(st.integers(0, 2**32 - 1)))
    X = rng.integers(0, 2, (32, d)).astype(float)
    layers = embed_gate(kind, d, [i, j], o)
    Y = run_all(layers, X)[-1]
    keep = [n for n in range(d) if n not in (i, j, o)]
    assert np.array_equal(Y[:, keep], X[:, keep])
    ref = {"AND": lambda a, b: a * b, "NOR": lambda a, b: (1 - a) * (1 - b),
           "OR": lambda a, b: np.maximum(a, b), "NAND": lambda a, b: 1 - a * b,
           "XOR": lambda a, b: (a + b) % 2}[kind]
    assert np.array_equal(Y[:, o], ref(X[:, i], X[:, j]))
