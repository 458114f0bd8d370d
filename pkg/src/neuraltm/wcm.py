"""Encoder-decoder transformer that simulates a Turing machine.

One pass of ``step_net`` is one machine step.  The decoder vector is split
into named slices (see :class:`SliceLayout`); every entry is exactly 0 or 1
at every layer boundary.

Attention scores compare bits: query bits map to ``2x - 1`` and key bits to
``(2y - 1) / 2``, so an ``m``-bit comparison scores ``m/2`` on a perfect
match and loses exactly 1 per mismatched bit.  The null row scores
``m/2 - 1/2``.  At gain 9999 every row more than 1/2 below the best has
weight exactly 0 in float64.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .circuits import DnfSpec, and_row, dnf_layers, identity, relu_layer, ripple_adder
from .linalg import IDENTITY, SATLIN, Activation
from .machine import (
    LEFT,
    Configuration,
    Outcome,
    SimulationError,
    Trace,
    TuringMachine,
    validate_turing,
)
from .network import HARD_GAIN, AttentionLayer, LinearLayer, Network, iter_layers

SLICES = ("st", "sym1", "sym2", "pos1", "pos2", "pos3",
          "scr1", "scr2", "scr3", "scr4", "scr5")


def bits(n: int, k: int) -> np.ndarray:
    """LSB-first binary digits of ``n``."""
    return np.array([(n >> i) & 1 for i in range(k)], dtype=np.float64)


def unbits(v) -> int:
    return sum(int(b) << i for i, b in enumerate(v))


def steps_to_bits(T: int) -> int:
    if T < 2:
        raise ValueError(f"T must be >= 2, got {T}")
    return (T - 1).bit_length()  # ceil(log2 T)


@dataclass(frozen=True)
class SliceLayout:
    n_states: int
    n_symbols: int
    k: int

    @property
    def sizes(self) -> dict:
        q, g, k = self.n_states, self.n_symbols, self.k
        return {"st": q, "sym1": g, "sym2": g, "pos1": k, "pos2": k, "pos3": k,
                "scr1": g, "scr2": g, "scr3": k, "scr4": 2, "scr5": 3}

    @property
    def offsets(self) -> dict:
        out, at = {}, 0
        for name in SLICES:
            out[name] = at
            at += self.sizes[name]
        return out

    @property
    def width(self) -> int:
        return sum(self.sizes.values())

    def __getitem__(self, name) -> range:
        start = self.offsets[name]
        return range(start, start + self.sizes[name])


def build_layout(m: TuringMachine, T: int) -> SliceLayout:
    return SliceLayout(len(m.states), len(m.alphabet), steps_to_bits(T))


def build_encoder(m: TuringMachine, layout: SliceLayout, tape) -> np.ndarray:
    """Row ``i`` is ``one_hot(tape[i])`` followed by ``i`` in binary."""
    tape = m.check_input(tape)
    if len(tape) > 2 ** layout.k:
        raise SimulationError(
            "tape-too-long", f"{len(tape)} cells do not fit in {layout.k} position bits"
        )
    g = len(m.alphabet)
    E = np.zeros((len(tape), g + layout.k))
    for i, s in enumerate(tape):
        E[i, m.alphabet.index(s)] = 1.0
        E[i, g:] = bits(i, layout.k)
    return E


# --------------------------------------------------------------------------
# stages
# --------------------------------------------------------------------------


def build_transition(m: TuringMachine, layout: SliceLayout):
    st, sym1, sym2, scr5 = layout["st"], layout["sym1"], layout["sym2"], layout["scr5"]
    clauses, routes = [], []
    for (q, a), (nxt, write, move) in m.delta.items():
        clauses.append(([st[m.states.index(q)], sym1[m.alphabet.index(a)]], []))
        routes.append([st[m.states.index(nxt)], sym2[m.alphabet.index(write)],
                       scr5[0] if move == LEFT else scr5[1]])
    spec = DnfSpec(clauses, routes, exclusive=True, clear=tuple(st) + tuple(sym2) + tuple(scr5))
    return list(dnf_layers(spec, layout.width, tag="transition"))


def build_adder_stage(layout: SliceLayout) -> list:
    """Copy pos2 to pos3, add +1 or -1 from the direction bits, drop the addend."""
    w, k = layout.width, layout.k
    pos2, pos3, scr5 = layout["pos2"], layout["pos3"], layout["scr5"]
    left, right, spare = scr5
    addend = range(w, w + k)

    W = np.zeros((w + k, w))
    W[:w] = np.eye(w)
    for i in range(k):
        W[pos3[i], :] = 0.0
        W[pos3[i], pos2[i]] = 1.0
        W[addend[i], left] = 1.0  # all ones: two's complement -1
    W[addend[0], right] = 1.0
    pre = LinearLayer(W, np.zeros(w + k), Activation(IDENTITY), "preprocess")

    # the spare direction bit is always 0 here and serves as the initial carry
    adder = ripple_adder(w + k, pos3, addend, carry=spare)

    P = np.zeros((w, w + k))
    P[:, :w] = np.eye(w)
    down = LinearLayer(P, np.zeros(w), Activation(IDENTITY), "project_down")
    return [pre] + adder + [down]


def _match_attention(layout, kind, pairs, constants, mem_width, value_cols, targets, tag,
                     constant_value=False):
    """Attention that selects memory rows whose bits equal the query bits.

    ``pairs`` are ``(query_index, key_column)`` comparisons, ``constants`` are
    ``(bit, key_column)`` comparisons against a fixed bit.  The attended value
    (memory ``value_cols``, or the constant 1) is sharpened into ``targets``
    with ``satlin(2a - 1/2)``.
    """
    w = layout.width
    m = len(pairs) + len(constants)
    wq, bq = np.zeros((m + 1, w)), np.zeros(m + 1)
    wk, bk = np.zeros((m + 1, mem_width)), np.zeros(m + 1)
    for r, (qi, kc) in enumerate(pairs):
        wq[r, qi], bq[r] = 2.0, -1.0
        wk[r, kc], bk[r] = 1.0, -0.5
    for r, (bit, kc) in enumerate(constants, start=len(pairs)):
        bq[r] = 2.0 * bit - 1.0
        wk[r, kc], bk[r] = 1.0, -0.5
    bq[m] = 1.0
    null_key = np.zeros(m + 1)
    null_key[m] = m / 2 - 0.5

    n_val = 1 if constant_value else len(value_cols)
    wv, bv = np.zeros((n_val, mem_width)), np.zeros(n_val)
    if constant_value:
        bv[0] = 1.0
    else:
        for r, c in enumerate(value_cols):
            wv[r, c] = 1.0

    merge_w = np.zeros((w, w + n_val))
    merge_w[:, :w] = np.eye(w)
    merge_b = np.zeros(w)
    for r, t in enumerate(targets):
        merge_w[t, :] = 0.0
        merge_w[t, w + r] = 2.0
        merge_b[t] = -0.5
    return AttentionLayer(kind, wq, bq, wk, bk, wv, bv, null_key, np.zeros(n_val),
                          merge_w, merge_b, HARD_GAIN, Activation(SATLIN), tag)


def build_visited_flag(layout: SliceLayout) -> list:
    pairs = list(zip(layout["pos3"], layout["pos2"]))
    return [_match_attention(layout, "self", pairs, [], layout.width, [],
                             [layout["scr4"][0]], "visited", constant_value=True)]


def build_binary_search(layout: SliceLayout) -> list:
    """Most recent step that wrote to pos3, one step-number bit per layer.

    Layer for bit ``j`` (MSB first) asks whether some earlier row wrote at
    pos3 with a step number whose higher bits equal the prefix already in
    scr3 and whose bit ``j`` is 1.
    """
    pos1, pos2, pos3, scr3 = layout["pos1"], layout["pos2"], layout["pos3"], layout["scr3"]
    layers = []
    for j in reversed(range(layout.k)):
        pairs = list(zip(pos3, pos2)) + [(scr3[i], pos1[i]) for i in range(j + 1, layout.k)]
        layers.append(_match_attention(layout, "self", pairs, [(1, pos1[j])], layout.width,
                                       [], [scr3[j]], f"binary_search[{j}]",
                                       constant_value=True))
    return layers


def build_get_last_written(layout: SliceLayout) -> list:
    pairs = list(zip(layout["pos3"], layout["pos2"])) + list(zip(layout["scr3"], layout["pos1"]))
    return [_match_attention(layout, "self", pairs, [], layout.width, list(layout["sym2"]),
                             list(layout["scr1"]), "last_written")]


def build_get_initial(layout: SliceLayout) -> list:
    g = layout.n_symbols
    pairs = [(p, g + i) for i, p in enumerate(layout["pos3"])]
    return [_match_attention(layout, "cross", pairs, [], g + layout.k, list(range(g)),
                             list(layout["scr2"]), "initial_symbol")]


def build_assemble(layout: SliceLayout, blank: int) -> list:
    """Priority select into sym1: last write, else original tape, else blank.

    Also moves pos3 into pos2 and clears everything the next step expects to
    start at zero.
    """
    w = layout.width
    sym1, scr1, scr2 = layout["sym1"], layout["scr1"], layout["scr2"]
    visited, use_blank = layout["scr4"]

    W, b = identity(w)  # GetV
    for a in range(layout.n_symbols):
        and_row(W, b, scr1[a], pos=[scr1[a], visited])
        and_row(W, b, scr2[a], pos=[scr2[a]], neg=[visited])
        W[sym1[a], :] = 0.0
    and_row(W, b, use_blank, neg=[visited, *scr2])
    get_v = relu_layer(W, b, "get_v")

    W, b = identity(w)  # ArrangeSymbols
    for a in range(layout.n_symbols):
        W[sym1[a], [scr1[a], scr2[a]]] = 1.0
    W[sym1[blank], use_blank] = 1.0
    for p2, p3 in zip(layout["pos2"], layout["pos3"]):
        W[p2, :] = 0.0
        W[p2, p3] = 1.0
    arrange = relu_layer(W, b, "arrange_symbols")

    W, b = identity(w)  # CombineSymbols
    for name in ("sym2", "pos1", "pos3", "scr1", "scr2", "scr3", "scr4", "scr5"):
        for i in layout[name]:
            W[i, :] = 0.0
    combine = relu_layer(W, b, "combine_symbols")
    return [get_v, arrange, combine]


# --------------------------------------------------------------------------
# compiled network
# --------------------------------------------------------------------------


@dataclass(eq=False)
class WcmNetwork:
    machine: TuringMachine
    T: int
    layout: SliceLayout
    step_net: Network
    n_detectors: int = field(default=0)

    def encoder(self, tape) -> np.ndarray:
        return build_encoder(self.machine, self.layout, tape)

    def step_embedding(self, t: int) -> np.ndarray:
        beta = np.zeros(self.layout.width)
        beta[list(self.layout["pos1"])] = bits(t, self.layout.k)
        return beta

    def initial_state(self, tape) -> np.ndarray:
        h = np.zeros(self.layout.width)
        h[self.layout["st"][self.machine.states.index(self.machine.initial)]] = 1.0
        h[self.layout["sym1"][self.machine.alphabet.index(tape[0])]] = 1.0
        return h

    def with_network(self, net: Network) -> "WcmNetwork":
        return WcmNetwork(self.machine, self.T, self.layout, net, self.n_detectors)

    def census(self) -> dict:
        tags = [layer.tag for layer in self.step_net.layers]
        kinds = [getattr(layer, "kind", None) for layer in self.step_net.layers]
        w, k = self.layout.width, self.layout.k
        return {
            "width": w,
            "detectors": self.n_detectors,
            "transition": [w, w + self.n_detectors, w],
            "preprocess": [w, w + k],
            "full_adders": len({t for t in tags if t.startswith("full_adder[")}),
            "project_down": [w + k, w],
            "self_attention": kinds.count("self"),
            "cross_attention": kinds.count("cross"),
            "assembly_feedforwards": sum(
                t in ("get_v", "arrange_symbols", "combine_symbols") for t in tags),
            "layers": len(tags),
        }

    def simulate(self, input, T=None, check=True):
        return simulate(self, input, T, check)


def compile(m: TuringMachine, T: int) -> WcmNetwork:
    layout = build_layout(m, T)
    transition = build_transition(m, layout)
    feedforward = transition + build_adder_stage(layout)
    lookup = (build_visited_flag(layout) + build_binary_search(layout)
              + build_get_last_written(layout) + build_get_initial(layout))
    assemble = build_assemble(layout, m.alphabet.index(m.blank))
    meta = {"arch": "wcm21", "T": T, "machine_hash": m.digest(), "machine": m.to_dict()}
    net = Network(feedforward + lookup + assemble, tap=len(feedforward), meta=meta)
    return WcmNetwork(m, T, layout, net, n_detectors=len(m.delta))


def from_network(net: Network) -> WcmNetwork:
    """Rebuild the simulator around a (possibly loaded) step network."""
    if net.meta.get("arch") != "wcm21":
        raise ValueError(f"not a wcm21 network: {net.meta.get('arch')!r}")
    m = validate_turing(net.meta["machine"])
    T = int(net.meta["T"])
    return WcmNetwork(m, T, build_layout(m, T), net, n_detectors=len(m.delta))


def _one_hot(v, names, what):
    hot = np.flatnonzero(v)
    if len(hot) == 0:
        return None
    if len(hot) != 1 or v[hot[0]] != 1.0:
        raise SimulationError("non-binary-activation", f"{what} is not one-hot: {v}")
    return names[hot[0]]


def _advance(net, h, t, history, E, cells, config, check):
    """Run one step and decode it.

    Returns ``(h, history, configuration)`` or an :class:`Outcome` when the
    run ends.  ``cells`` (the tape as last written) is updated in place.
    """
    m, layout = net.machine, net.layout
    st, sym1, sym2 = layout["st"], layout["sym1"], layout["sym2"]
    pos2, scr5 = layout["pos2"], layout["scr5"]
    x = h + net.step_embedding(t)
    row = None
    for i, layer, inp, out in iter_layers(net.step_net, x, history, E):
        if i == net.step_net.tap:
            row = inp
        if check and not np.all((out == 0.0) | (out == 1.0)):
            raise SimulationError(
                "non-binary-activation", f"step {t}, layer {i} ({layer.tag})")
    h = out
    history = np.vstack([history, row])
    here = config.tape[config.head]

    state = _one_hot(h[list(st)], m.states, "state")
    if state is None:
        return Outcome("undefined-transition", config.state, here)
    old, head = unbits(row[list(pos2)]), unbits(h[list(pos2)])
    cells[old] = _one_hot(row[list(sym2)], m.alphabet, "written symbol")
    if row[scr5[1]] and head < old:
        head += 2 ** layout.k  # ran off the top of the position range
    elif row[scr5[0]] and head > old:
        head -= 2 ** layout.k
    tape = list(cells)
    if 0 <= head < len(cells):
        tape[head] = _one_hot(h[list(sym1)], m.alphabet, "current symbol")
    elif state not in m.terminals:
        return Outcome("head-out-of-range", config.state, here)
    return h, history, Configuration(state, head, tuple(tape), t + 1)


def simulate(net: WcmNetwork, input, T=None, check=True):
    """Run the network from the initial tape; returns ``(trace, answer)``.

    The trace is decoded from the network alone: state and head from the
    output vector, the written cell from the history row, and the cell under
    the head from ``sym1``.  A failure raises :class:`SimulationError` with
    ``step`` set to the configuration it would have produced.
    """
    m = net.machine
    T = net.T if T is None else T
    if T > net.T:
        raise ValueError(f"network compiled for {net.T} steps, asked for {T}")
    tape = m.check_input(input)
    if not tape:
        raise ValueError("tape must hold at least one cell")
    E = net.encoder(tape)

    h = net.initial_state(tape)
    cells = list(tape)
    config = Configuration(m.initial, 0, tape, 0)
    configs = [config]
    history = np.zeros((0, net.layout.width))
    outcome = None
    for t in range(T):
        if config.state in m.terminals:
            break
        try:
            result = _advance(net, h, t, history, E, cells, config, check)
        except SimulationError as e:
            e.step = t + 1
            raise
        if isinstance(result, Outcome):
            outcome = result
            break
        h, history, config = result
        configs.append(config)

    if outcome is None:
        if config.state in m.terminals:
            outcome = Outcome("halted", config.state)
        else:
            outcome = Outcome("step-limit-exceeded")
    trace = Trace(configs, outcome)
    return trace, trace.answer
