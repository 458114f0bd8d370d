"""Boolean gates, DNF formulas and binary adders as ReLU layers.

Every builder returns full-width square layers that start from the identity,
so gates can be stacked onto any state vector.  Inputs are assumed to be
exactly 0 or 1; under that assumption every intermediate activation stays
in {0, 1}.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .linalg import RELU, Activation
from .network import LinearLayer

GATES = ("NOT", "AND", "NOR", "OR", "NAND", "XOR")


class CircuitError(ValueError):
    def __init__(self, code, message):
        super().__init__(f"{code}: {message}")
        self.code = code


def identity(d: int):
    return np.eye(d), np.zeros(d)


def relu_layer(W, b, tag="") -> LinearLayer:
    return LinearLayer(W, b, Activation(RELU), tag)


def and_row(W, b, out, pos=(), neg=()):
    """Overwrite neuron ``out`` with the conjunction of literals.

    ``ReLU(sum(pos) + sum(1 - x for neg) - (k - 1))`` with ``k`` literals;
    the negative literals only move the bias, so no NOT layer is needed.
    """
    pos, neg = list(pos), list(neg)
    k = len(pos) + len(neg)
    W[out, :] = 0.0
    for i in pos:
        W[out, i] += 1.0
    for i in neg:
        W[out, i] -= 1.0
    b[out] = len(neg) - (k - 1)


def not_row(W, b, out, src):
    W[out, :] = 0.0
    W[out, src] = -1.0
    b[out] = 1.0


def _check(d, indices, what="inputs"):
    for i in indices:
        if not 0 <= i < d:
            raise CircuitError("index-out-of-range", f"{what} index {i} not in [0, {d})")
    if len(set(indices)) != len(indices):
        raise CircuitError("index-collision", f"{what} {list(indices)} repeat an index")


def embed_gate(kind: str, d: int, inputs: Sequence[int], output: int, tag="") -> list:
    """Layers computing ``kind(inputs)`` into ``output``.

    NOT, AND and NOR take one layer, OR and NAND two, XOR three.  XOR uses its
    two input positions as workspace; every other gate leaves its inputs
    intact unless ``output`` is one of them.
    """
    kind = kind.upper()
    if kind not in GATES:
        raise CircuitError("unknown-gate", kind)
    inputs = list(inputs)
    _check(d, inputs)
    _check(d, [output], "output")
    arity_ok = len(inputs) == 1 if kind == "NOT" else (
        len(inputs) == 2 if kind == "XOR" else len(inputs) >= 2)
    if not arity_ok:
        raise CircuitError("bad-arity", f"{kind} with {len(inputs)} inputs")

    if kind == "NOT":
        W, b = identity(d)
        not_row(W, b, output, inputs[0])
        return [relu_layer(W, b, tag)]
    if kind in ("AND", "NOR"):
        W, b = identity(d)
        if kind == "AND":
            and_row(W, b, output, pos=inputs)
        else:
            and_row(W, b, output, neg=inputs)
        return [relu_layer(W, b, tag)]
    if kind in ("OR", "NAND"):
        first = embed_gate("NOR" if kind == "OR" else "AND", d, inputs, output, tag)
        return first + embed_gate("NOT", d, [output], output, tag)

    i, j = inputs
    layers = half_adder(d, i, j, tag)[:2]  # NAND at i, OR at j
    W, b = identity(d)
    and_row(W, b, output, pos=[i, j])
    return layers + [relu_layer(W, b, tag)]


@dataclass
class DnfSpec:
    """Clauses over input positions and where each clause writes a 1.

    ``clauses[c]`` is ``(positive_indices, negative_indices)`` and
    ``routes[c]`` lists the output positions set when clause ``c`` fires.
    Every routed position (plus ``clear``) is overwritten, not accumulated.
    """

    clauses: list
    routes: list
    exclusive: bool = False
    clear: tuple = field(default_factory=tuple)


def dnf_layers(spec: DnfSpec, d_in: int, d_out: int | None = None, tag=""):
    """Two layers: one AND detector per clause, then routed sums.

    Only mutually exclusive clauses are supported; with at most one detector
    active, the OR over clauses is a plain sum.
    """
    d_out = d_in if d_out is None else d_out
    if not spec.exclusive:
        raise CircuitError(
            "non-exclusive-clauses-unsupported",
            "only mutually exclusive clauses have a two-layer form",
        )
    if len(spec.routes) != len(spec.clauses):
        raise CircuitError("bad-spec", "one route list per clause")
    m = len(spec.clauses)

    W1 = np.zeros((d_in + m, d_in))
    W1[:d_in, :d_in] = np.eye(d_in)
    b1 = np.zeros(d_in + m)
    for c, (pos, neg) in enumerate(spec.clauses):
        _check(d_in, list(pos) + list(neg), "literal")
        and_row(W1, b1, d_in + c, pos, neg)

    W2 = np.zeros((d_out, d_in + m))
    n = min(d_in, d_out)
    W2[:n, :n] = np.eye(n)
    b2 = np.zeros(d_out)
    targets = {o for route in spec.routes for o in route} | set(spec.clear)
    _check(d_out, sorted(targets), "output")
    for o in targets:
        W2[o, :] = 0.0
    for c, route in enumerate(spec.routes):
        for o in route:
            W2[o, d_in + c] = 1.0
    return relu_layer(W1, b1, tag), relu_layer(W2, b2, tag)


def half_adder(d: int, i: int, j: int, tag="") -> list:
    """Sum ``x_i ^ x_j`` into ``i`` and carry ``x_i & x_j`` into ``j``."""
    _check(d, [i, j])
    # AND at i, NOR at j
    W1, b1 = identity(d)
    W1[i, j] = 1; b1[i] = -1
    W1[j, i] = -1; W1[j, j] = -1; b1[j] = 1
    # NAND at i, OR at j
    W2, b2 = identity(d)
    W2[i, i] = -1; b2[i] = 1
    W2[j, j] = -1; b2[j] = 1
    # XOR at i, AND at j
    W3, b3 = identity(d)
    W3[i, j] = 1; b3[i] = -1
    W3[j, i] = -1; W3[j, j] = 0; b3[j] = 1
    return [relu_layer(W1, b1, tag), relu_layer(W2, b2, tag), relu_layer(W3, b3, tag)]


def full_adder(d: int, a: int, b: int, cin: int, tag="") -> list:
    """Sum into ``a``, carry-out into ``cin``; ``b`` is cleared to 0.

    Two half adders, then OR of the two partial carries as NOR followed by
    NOT (the NOT layer also clears ``b``).
    """
    _check(d, [a, b, cin])
    layers = half_adder(d, a, b, tag) + half_adder(d, a, cin, tag)
    W, bias = identity(d)
    and_row(W, bias, cin, neg=[b, cin])
    layers.append(relu_layer(W, bias, tag))
    W, bias = identity(d)
    not_row(W, bias, cin, cin)
    W[b, :] = 0.0
    layers.append(relu_layer(W, bias, tag))
    return layers


def ripple_adder(d: int, x_slice: Sequence[int], y_slice: Sequence[int],
                 carry: int | None = None, tag="full_adder") -> list:
    """``x := (x + y) mod 2**k`` over LSB-first bit positions.

    ``y`` is consumed: afterwards it holds only the final carry in its top bit.
    With a zero-valued ``carry`` position every bit gets a full adder;
    without one, bit 0 uses a half adder instead.
    """
    x, y = list(x_slice), list(y_slice)
    if len(x) != len(y):
        raise CircuitError("width-mismatch", f"{len(x)} vs {len(y)} bits")
    extra = [] if carry is None else [carry]
    if set(x) & set(y) or set(extra) & (set(x) | set(y)):
        raise CircuitError("overlapping-slices", "x, y and carry must be disjoint")
    _check(d, x + y + extra)

    layers = []
    if carry is None:
        layers += half_adder(d, x[0], y[0], f"half_adder[0]")
        carry_at, start = y[0], 1
    else:
        carry_at, start = carry, 0
    for i in range(start, len(x)):
        # y[i] plays carry-in; the running carry plays the second addend
        layers += full_adder(d, x[i], carry_at, y[i], f"{tag}[{i}]")
        carry_at = y[i]
    return layers
