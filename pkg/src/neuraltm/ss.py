"""Recurrent stack-machine simulators over Cantor-encoded stacks.

A binary stack ``a1 a2 ... ak`` (``a1`` on top) is stored as the single
number ``sum_i c(a_i) / b**i`` with digit ``c(a) = b - 1 + 4*rho*(a - 1)``.
Push and pop are affine in the encoded value, so a saturated-linear network
can run the machine with one-hot states and one real number per stack.

Two compilations are provided:

* ``compile4`` -- four satlin layers per machine step (read tops, detect the
  configuration, apply the rule, reassemble), base 4.
* ``compile1`` -- one satlin layer per machine step, base ``10 p**2``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .linalg import SATLIN, Activation, lstsq
from .machine import (
    EMPTY,
    STACK_OPS,
    Outcome,
    SimulationError,
    StackConfiguration,
    StackMachine,
    Trace,
    encode_input_to_stacks,
    top_name,
    validate_stack,
)
from .network import LinearLayer, Network, forward_step

CLASSES = (EMPTY, 0, 1)  # per-stack top class, in detector order
SYNTHETIC_REJECT = "_reject"


@dataclass(frozen=True)
class CantorCodec:
    b: int = 4
    rho: Fraction = Fraction(1, 2)

    def __post_init__(self):
        if self.b < 4:
            raise ValueError(f"base must be >= 4, got {self.b}")

    def digit(self, a) -> Fraction:
        """Numerator contributed by symbol ``a`` at its depth."""
        return self.b - 1 + 4 * self.rho * (a - 1)

    # decision points, all halfway across the gaps between encoding intervals
    @property
    def min_nonempty(self) -> Fraction:
        return self.digit(0) / self.b

    @property
    def empty_threshold(self) -> float:
        return float(self.min_nonempty / 2)

    @property
    def top_gap(self) -> tuple:
        """``(lo, hi)``: top-0 encodings lie below ``lo``, top-1 at or above ``hi``."""
        return (self.digit(0) + 1) / self.b, self.digit(1) / self.b

    @property
    def top_threshold(self) -> float:
        lo, hi = self.top_gap
        return float((lo + hi) / 2)

    def encode(self, stack) -> float:
        v = 0.0
        for a in reversed(tuple(stack)):
            v = self.push(v, a)
        return v

    def encode_exact(self, stack) -> Fraction:
        return sum((self.digit(a) / Fraction(self.b) ** i
                    for i, a in enumerate(stack, start=1)), Fraction(0))

    def push(self, v, a):
        return (v + float(self.digit(a))) / self.b

    def top(self, v) -> int:
        return int(v >= self.top_threshold)

    def nonempty(self, v) -> float:
        return float(np.clip(self.b * v, 0.0, 1.0))

    def pop(self, v):
        if v < self.empty_threshold:
            raise SimulationError("pop-on-empty", "pop on an empty stack")
        return self.b * v - float(self.digit(self.top(v)))

    def decode(self, value, max_len=64) -> tuple:
        if not -self.empty_threshold < value < 1.0:
            raise ValueError(f"value-out-of-range: {value}")
        out = []
        while value >= self.empty_threshold and len(out) < max_len:
            a = self.top(value)
            out.append(a)
            value = self.pop(value)
        return tuple(out)


def satlin(x):
    return np.clip(x, 0.0, 1.0)


# --------------------------------------------------------------------------
# configurations and routing
# --------------------------------------------------------------------------


def compile_states(m: StackMachine) -> tuple:
    """Declared states, plus a synthetic reject state when none is declared."""
    return m.states if m.reject is not None else m.states + (SYNTHETIC_REJECT,)


def configurations(states, p=2) -> list:
    """All ``(state, class_0, ..., class_{p-1})`` in detector order."""
    return [(q,) + cs for q in states for cs in itertools.product(CLASSES, repeat=p)]


def target_rule(m: StackMachine, config) -> tuple:
    """``(next_state, *ops)`` for any configuration, total over all combos."""
    q, *tops = config
    if q in m.terminals or q == SYNTHETIC_REJECT:
        return (q,) + ("noop",) * m.p
    rule = m.lookup(q, tuple(tops))
    if rule is None:
        return (SYNTHETIC_REJECT,) + ("noop",) * m.p
    return rule


@dataclass
class RoutingWeights:
    beta: np.ndarray   # |Q| x |Q| 3^p, next-state one-hot
    gamma: np.ndarray  # 4p x |Q| 3^p, per-stack op one-hots
    residual: float
    states: tuple
    configs: list


def solve_routing(m: StackMachine, tol=1e-9) -> RoutingWeights:
    """Least-squares fit of detector one-hots to rule outputs.

    Rows of the design matrix are the detector outputs for every
    configuration, so the fit must reproduce the full rule table.
    """
    states = compile_states(m)
    configs = configurations(states, m.p)
    n, nq = len(configs), len(states)
    A = np.eye(n)
    B = np.zeros((n, nq + 4 * m.p))
    for i, c in enumerate(configs):
        nxt, *ops = target_rule(m, c)
        B[i, states.index(nxt)] = 1.0
        for s, op in enumerate(ops):
            B[i, nq + 4 * s + STACK_OPS.index(op)] = 1.0
    X, residual = lstsq(A, B)
    if residual >= tol:
        raise ArithmeticError(f"residual-too-large: {residual:.3e}")
    beta, gamma = X[:, :nq].T.copy(), X[:, nq:].T.copy()
    recon = np.vstack([beta, gamma]) @ A.T
    if not np.array_equal(recon, B.T):
        raise ArithmeticError("routing does not reproduce the rule table exactly")
    return RoutingWeights(beta, gamma, residual, states, configs)


# --------------------------------------------------------------------------
# four-layer network
# --------------------------------------------------------------------------


def build_detector(m: StackMachine, codec: CantorCodec) -> list:
    """F4 (tops and non-empty bits) and F3 (configuration one-hot).

    F4 maps ``[state, v]`` to ``[state, v, top, nonempty]``; F3 maps that to
    ``[d, v, top]`` where ``d`` has one entry per configuration.
    """
    states = compile_states(m)
    nq, p = len(states), m.p
    lo, hi = codec.top_gap
    width4 = nq + 3 * p
    W = np.zeros((width4, nq + p))
    bias = np.zeros(width4)
    W[: nq + p, : nq + p] = np.eye(nq + p)
    for s in range(p):
        top, ne = nq + p + 2 * s, nq + p + 2 * s + 1
        W[top, nq + s] = float(1 / (hi - lo))
        bias[top] = -float(lo / (hi - lo))
        W[ne, nq + s] = codec.b
    f4 = LinearLayer(W, bias, Activation(SATLIN), "F4")

    configs = configurations(states, p)
    n = len(configs)
    W = np.zeros((n + 2 * p, width4))
    bias = np.zeros(n + 2 * p)
    for i, (q, *cls) in enumerate(configs):
        W[i, states.index(q)] = 1.0
        bias[i] = -p
        for s, c in enumerate(cls):
            top, ne = nq + p + 2 * s, nq + p + 2 * s + 1
            if c is EMPTY:
                W[i, ne] -= 1.0
                bias[i] += 1.0
            elif c == 0:
                W[i, ne] += 1.0
                W[i, top] -= 1.0
            else:
                W[i, top] += 1.0
    for s in range(p):
        W[n + s, nq + s] = 1.0
        W[n + p + s, nq + p + 2 * s] = 1.0
    f3 = LinearLayer(W, bias, Activation(SATLIN), "F3")
    return [f4, f3]


def _candidates(codec: CantorCodec):
    """Affine maps ``(coef_v, coef_top, const)`` for noop, push0, push1, pop."""
    b, d0, d1 = codec.b, float(codec.digit(0)), float(codec.digit(1))
    return {
        "noop": (1.0, 0.0, 0.0),
        "push0": (1.0 / b, 0.0, d0 / b),
        "push1": (1.0 / b, 0.0, d1 / b),
        "pop": (float(b), -(d1 - d0), -d0),
    }


def compile4(m: StackMachine, codec: CantorCodec | None = None) -> "SsNetwork":
    codec = codec or CantorCodec(4, Fraction(1, 2))
    routing = solve_routing(m)
    states, p = routing.states, m.p
    nq, n = len(states), len(routing.configs)
    f4, f3 = build_detector(m, codec)

    # F2: next state and gated candidates satlin(candidate + gate - 1)
    cands = _candidates(codec)
    W = np.zeros((nq + 4 * p, n + 2 * p))
    bias = np.zeros(nq + 4 * p)
    W[:nq, :n] = routing.beta
    for s in range(p):
        for o, op in enumerate(STACK_OPS):
            row = nq + 4 * s + o
            cv, ct, c0 = cands[op]
            W[row, :n] = routing.gamma[4 * s + o]
            W[row, n + s] = cv
            W[row, n + p + s] = ct
            bias[row] = c0 - 1.0
    f2 = LinearLayer(W, bias, Activation(SATLIN), "F2")

    # F1: sum the gated candidates back into one value per stack
    W = np.zeros((nq + p, nq + 4 * p))
    W[:nq, :nq] = np.eye(nq)
    for s in range(p):
        W[nq + s, nq + 4 * s: nq + 4 * s + 4] = 1.0
    f1 = LinearLayer(W, np.zeros(nq + p), Activation(SATLIN), "F1")

    meta = {"arch": "ss95-4", "b": codec.b, "rho": str(codec.rho),
            "machine_hash": m.digest(), "machine": m.to_dict()}
    net = Network([f4, f3, f2, f1], meta=meta)
    R = np.eye(nq + p)
    return SsNetwork(m, 4, codec, states, net, R[:nq], R[nq:], routing=routing,
                     n_detectors=n)


# --------------------------------------------------------------------------
# one-layer network
# --------------------------------------------------------------------------


def _real_time_parts(m: StackMachine, codec: CantorCodec):
    """Neuron inventory and readouts for the one-layer network.

    Every neuron is gated on the configuration ``d`` that held at the previous
    step.  ``A[d]`` is the indicator of ``d``; ``P[s, d]`` is the new value of
    stack ``s`` when ``d`` held (else 0); for stacks that ``d`` pops, ``Y[s, d]``
    holds ``nonempty`` and ``top`` of the popped value.  The state, the stack
    classes and the stack values at the new step are all linear in these
    neurons, which is what lets detection and update share one layer.
    """
    states = compile_states(m)
    configs = configurations(states, m.p)
    p = m.p
    index = {}

    def add(key):
        index[key] = len(index)

    for d in configs:
        add(("A", d))
    for s in range(p):
        for d in configs:
            add(("P", s, d))
    for d in configs:
        _, *ops = target_rule(m, d)
        for s, op in enumerate(ops):
            if op == "pop":
                add(("Yne", s, d))
                add(("Ytop", s, d))
    for q in states:
        add(("init_q", q))
    for s in range(p):
        for c in CLASSES:
            add(("init_c", s, c))
    for s in range(p):
        add(("init_v", s))

    width = len(index)
    Rq = np.zeros((len(states), width))
    Rc = np.zeros((p, len(CLASSES), width))
    Rv = np.zeros((p, width))
    for q in states:
        Rq[states.index(q), index[("init_q", q)]] = 1.0
    for s in range(p):
        Rv[s, index[("init_v", s)]] = 1.0
        for ci, c in enumerate(CLASSES):
            Rc[s, ci, index[("init_c", s, c)]] = 1.0
    e, zero, one = (CLASSES.index(c) for c in CLASSES)
    for d in configs:
        nxt, *ops = target_rule(m, d)
        a = index[("A", d)]
        Rq[states.index(nxt), a] += 1.0
        for s, op in enumerate(ops):
            Rv[s, index[("P", s, d)]] = 1.0
            if op == "pop":
                yne, ytop = index[("Yne", s, d)], index[("Ytop", s, d)]
                Rc[s, e, a] += 1.0
                Rc[s, e, yne] -= 1.0
                Rc[s, zero, yne] += 1.0
                Rc[s, zero, ytop] -= 1.0
                Rc[s, one, ytop] += 1.0
            else:
                c = d[1 + s] if op == "noop" else int(op[-1])
                Rc[s, CLASSES.index(c), a] += 1.0
    return states, configs, index, Rq, Rc, Rv


def compile1(m: StackMachine, codec: CantorCodec | None = None) -> "SsNetwork":
    if m.p != 2:
        raise ValueError("the one-layer network is built for two stacks")
    codec = codec or CantorCodec(10 * m.p ** 2, Fraction(1, 2))
    states, configs, index, Rq, Rc, Rv = _real_time_parts(m, codec)
    p, b = m.p, codec.b
    width = len(index)
    cands = _candidates(codec)

    # Thresholds on the popped value w, each pulled a quarter-gap inward so
    # that rounding noise below a quarter of the gap cannot move a decision:
    #   nonempty(w): w = 0 versus w >= digit(0)/b
    #   top(w):      w < (digit(0)+1)/b versus w >= digit(1)/b
    ne_lo, ne_hi = 0.0, float(codec.min_nonempty)
    top_lo, top_hi = (float(x) for x in codec.top_gap)

    def ramp(lo, hi):
        margin = (hi - lo) / 4
        lo, hi = lo + margin, hi - margin
        return 1.0 / (hi - lo), -lo / (hi - lo)  # satlin(slope * w + offset)

    ne_ramp, top_ramp = ramp(ne_lo, ne_hi), ramp(top_lo, top_hi)
    # gate strengths: each must push the largest possible pre-activation to <= 0.
    # A popped candidate never exceeds b - digit(0) = 1 + 4 rho; keeping this gate
    # small keeps the pre-activation magnitude, and so its rounding, small.
    gate_p = float(2 ** int(np.ceil(np.log2(float(1 + 4 * codec.rho) + 1))))
    gate_y = (b + 1) * max(ne_ramp[0], top_ramp[0])

    lits = {}
    for d in configs:
        q, *cls = d
        L = Rq[states.index(q)].copy()
        for s, c in enumerate(cls):
            L += Rc[s, CLASSES.index(c)]
        lits[d] = L  # equals p + 1 exactly when d holds, at most p otherwise

    W = np.zeros((width, width))
    bias = np.zeros(width)

    def gated(row, strength, d):
        W[row] += strength * lits[d]
        bias[row] -= strength * (p + 1)

    for d in configs:
        _, *ops = target_rule(m, d)
        row = index[("A", d)]
        gated(row, 1.0, d)
        bias[row] += 1.0
        for s, op in enumerate(ops):
            cv, ct, c0 = cands[op]
            top = d[1 + s] if op == "pop" else 0
            row = index[("P", s, d)]
            gated(row, gate_p, d)
            W[row] += cv * Rv[s]
            bias[row] += c0 + ct * top
            if op == "pop":
                # w = b v - digit(top), with top known from d
                for key, (slope, offset) in (("Yne", ne_ramp), ("Ytop", top_ramp)):
                    row = index[(key, s, d)]
                    gated(row, gate_y, d)
                    W[row] += slope * cv * Rv[s]
                    bias[row] += slope * (c0 + ct * top) + offset

    layer = LinearLayer(W, bias, Activation(SATLIN), "real_time")
    meta = {"arch": "ss95-1", "b": codec.b, "rho": str(codec.rho),
            "machine_hash": m.digest(), "machine": m.to_dict()}
    net = Network([layer], meta=meta)
    return SsNetwork(m, 1, codec, states, net, Rq, Rv, Rc=Rc, index=index,
                     n_detectors=len(configs))


# --------------------------------------------------------------------------
# simulation
# --------------------------------------------------------------------------


@dataclass(eq=False)
class SsNetwork:
    machine: StackMachine
    version: int
    codec: CantorCodec
    states: tuple
    step_net: Network
    Rq: np.ndarray  # state one-hot readout
    Rv: np.ndarray  # stack value readout
    Rc: np.ndarray | None = None
    index: dict | None = None
    routing: RoutingWeights | None = None
    n_detectors: int = 0

    @property
    def layers_per_step(self) -> int:
        return len(self.step_net.layers)

    def census(self) -> dict:
        return {
            "arch": self.step_net.meta["arch"],
            "b": self.codec.b,
            "layers_per_step": self.layers_per_step,
            "detector_width": self.n_detectors,
            "width": self.step_net.d_in,
        }

    def initial_state(self, c: StackConfiguration) -> np.ndarray:
        values = [self.codec.encode(s) for s in c.stacks]
        if self.version == 4:
            x = np.zeros(len(self.states) + self.machine.p)
            x[self.states.index(c.state)] = 1.0
            x[len(self.states):] = values
            return x
        x = np.zeros(self.step_net.d_in)
        x[self.index[("init_q", c.state)]] = 1.0
        for s, stack in enumerate(c.stacks):
            cls = stack[0] if stack else EMPTY
            x[self.index[("init_c", s, cls)]] = 1.0
            x[self.index[("init_v", s)]] = values[s]
        return x

    def readout(self, x):
        """``(state one-hot, stack values)`` held in network vector ``x``."""
        return self.Rq @ x, self.Rv @ x

    def decode(self, x, step: int) -> StackConfiguration:
        q, v = self.readout(x)
        hot = np.flatnonzero(q)
        if len(hot) != 1 or q[hot[0]] != 1.0:
            raise SimulationError("non-binary-activation", f"state readout {q}", step=step)
        try:
            stacks = tuple(self.codec.decode(float(val)) for val in v)
        except ValueError:
            raise SimulationError("value-out-of-range", f"stack values {v.tolist()} outside [0, 1)",
                                  step=step) from None
        return StackConfiguration(self.states[hot[0]], stacks, step)

    def with_network(self, net: Network) -> "SsNetwork":
        return from_network(net)

    def simulate(self, input, T: int):
        """Run from the encoded input for at most ``T`` steps."""
        if T < 1:
            raise ValueError("T must be >= 1")
        m = self.machine
        c = encode_input_to_stacks(m, input)
        x = self.initial_state(c)
        configs = [c]
        outcome = None
        for t in range(T):
            if c.state in m.terminals:
                break
            x = forward_step(self.step_net, x)
            nxt = self.decode(x, t + 1)
            if nxt.state == SYNTHETIC_REJECT:
                tops = tuple(s[0] if s else EMPTY for s in c.stacks)
                outcome = Outcome("undefined-transition", c.state, tops)
                break
            c = nxt
            configs.append(c)
        if outcome is None:
            outcome = (Outcome("halted", c.state) if c.state in m.terminals
                       else Outcome("step-limit-exceeded"))
        trace = Trace(configs, outcome)
        return trace, trace.answer


def from_network(net: Network) -> SsNetwork:
    arch = net.meta.get("arch")
    if arch not in ("ss95-4", "ss95-1"):
        raise ValueError(f"not an ss95 network: {arch!r}")
    m = validate_stack(net.meta["machine"])
    codec = CantorCodec(int(net.meta["b"]), Fraction(net.meta["rho"]))
    fresh = compile4(m, codec) if arch == "ss95-4" else compile1(m, codec)
    fresh.step_net = net
    return fresh


def precision_probe(b: int, max_pops: int, n_stacks=1000, seed=0):
    """Pop random stacks in float64 and watch the decoded bits.

    Each stack holds ``max_pops`` random bits.  Row ``k`` of the table gives
    the worst ``|v_k - encode(remaining)|`` after ``k`` pops over all stacks,
    and how many stacks returned a wrong bit on pop ``k``.  Returns
    ``(rows, first_flip)`` with ``first_flip`` None when no bit flipped.
    """
    codec = CantorCodec(b)
    rng = np.random.default_rng(seed)
    errors = np.zeros(max_pops + 1)
    flips = np.zeros(max_pops + 1, dtype=int)
    for _ in range(n_stacks):
        stack = tuple(int(a) for a in rng.integers(0, 2, max_pops))
        v = codec.encode(stack)
        for k in range(1, max_pops + 1):
            if v < codec.empty_threshold or codec.top(v) != stack[k - 1]:
                flips[k] += 1
                break
            v = codec.pop(v)
            errors[k] = max(errors[k], abs(v - codec.encode(stack[k:])))
    rows = [(k, float(errors[k]), int(flips[k])) for k in range(max_pops + 1)]
    first = next((k for k, _, f in rows if f), None)
    return rows, first


def describe_stack(stack) -> str:
    return "".join(map(str, stack)) or top_name(EMPTY)
