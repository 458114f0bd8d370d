"""Machine descriptions and the reference interpreters.

The interpreters here are the ground truth every compiled network is checked
against.  Declaration order of states and symbols is the canonical one-hot
order used by the compilers.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Mapping, Sequence

import numpy as np
import yaml

LEFT, RIGHT = -1, +1
STACK_OPS = ("noop", "push0", "push1", "pop")
EMPTY = None  # stack-top class for an empty stack


class ValidationError(ValueError):
    """A machine description violates one or more invariants.

    ``violations`` is a list of ``(code, message)`` pairs.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(f"{c}: {m}" for c, m in self.violations))

    @property
    def codes(self):
        return [c for c, _ in self.violations]


class SimulationError(RuntimeError):
    def __init__(self, code, message, state=None, symbol=None, step=None):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.state = state
        self.symbol = symbol
        self.step = step  # configuration index the failure would have produced


class UnknownSymbolError(ValueError):
    def __init__(self, symbol, code="unknown-symbol", why="is not in the alphabet"):
        super().__init__(f"{code}: symbol {symbol!r} in input {why}")
        self.code = code
        self.symbol = symbol


@dataclass(frozen=True)
class Outcome:
    kind: str  # halted | step-limit-exceeded | undefined-transition | head-out-of-range | pop-on-empty
    state: str | None = None
    symbol: object = None

    def __str__(self):
        if self.kind == "halted":
            return f"halted({self.state})"
        if self.state is None:
            return self.kind
        return f"{self.kind}({self.state}, {self.symbol})"


@dataclass(frozen=True)
class Configuration:
    state: str
    head: int
    tape: tuple[str, ...]
    step: int

    def format(self) -> str:
        cells = [f"[{s}]" if i == self.head else s for i, s in enumerate(self.tape)]
        return f"{self.step}\t{self.state}\t{''.join(cells)}"


@dataclass(frozen=True)
class StackConfiguration:
    state: str
    stacks: tuple[tuple[int, ...], ...]  # index 0 is the top
    step: int

    def format(self) -> str:
        stacks = "\t".join("".join(map(str, s)) or "-" for s in self.stacks)
        return f"{self.step}\t{self.state}\t{stacks}"


@dataclass
class Trace:
    configs: list
    outcome: Outcome

    @property
    def answer(self):
        return self.outcome.state if self.outcome.kind == "halted" else None

    def format(self) -> str:
        return "\n".join(c.format() for c in self.configs)


# --------------------------------------------------------------------------
# Turing machines
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TuringMachine:
    states: tuple[str, ...]
    alphabet: tuple[str, ...]
    delta: Mapping[tuple[str, str], tuple[str, str, int]]
    initial: str
    terminals: frozenset[str]
    blank: str = field(default=None)

    def __post_init__(self):
        if self.blank is None:
            object.__setattr__(self, "blank", self.alphabet[0])

    def to_dict(self) -> dict:
        return {
            "kind": "turing",
            "states": list(self.states),
            "alphabet": list(self.alphabet),
            "initial": self.initial,
            "terminals": [q for q in self.states if q in self.terminals],
            "blank": self.blank,
            "transitions": [
                {"state": q, "read": a, "next": n, "write": w, "move": d}
                for (q, a), (n, w, d) in self.delta.items()
            ],
        }

    def digest(self) -> str:
        return description_hash(self.to_dict())

    def check_input(self, tape: Iterable[str]) -> tuple[str, ...]:
        tape = tuple(tape)
        for s in tape:
            if s not in self.alphabet:
                raise UnknownSymbolError(s)
        return tape


def description_hash(raw: dict) -> str:
    text = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _parse_move(value):
    if value in (1, "+1", "R", "r", "right"):
        return RIGHT
    if value in (-1, "-1", "L", "l", "left"):
        return LEFT
    return None


def _names(raw, key, violations):
    value = raw.get(key)
    if not isinstance(value, (list, tuple)) or not value:
        violations.append(("missing-field", f"{key!r} must be a non-empty list"))
        return ()
    names = tuple(str(v) for v in value)
    if len(set(names)) != len(names):
        violations.append(("duplicate-name", f"{key!r} has repeated entries"))
    return names


def validate_turing(raw: Mapping) -> TuringMachine:
    """Build a :class:`TuringMachine` from a parsed description.

    Raises :class:`ValidationError` carrying every violation found.
    """
    violations = []
    states = _names(raw, "states", violations)
    alphabet = _names(raw, "alphabet", violations)
    initial = str(raw.get("initial"))
    terminals = frozenset(str(q) for q in raw.get("terminals") or ())
    blank = raw.get("blank")
    blank = None if blank is None else str(blank)

    if initial not in states:
        violations.append(("unknown-state", f"initial state {initial!r}"))
    for q in sorted(terminals - set(states)):
        violations.append(("unknown-state", f"terminal state {q!r}"))
    if blank is not None and blank not in alphabet:
        violations.append(("unknown-symbol", f"blank symbol {blank!r}"))

    delta = {}
    for i, row in enumerate(raw.get("transitions") or ()):
        try:
            q, a = str(row["state"]), str(row["read"])
            n, w = str(row["next"]), str(row["write"])
            d = _parse_move(row["move"])
        except (KeyError, TypeError):
            violations.append(("malformed-transition", f"row {i}: {row!r}"))
            continue
        for s in (q, n):
            if s not in states:
                violations.append(("unknown-state", f"row {i}: {s!r}"))
        for s in (a, w):
            if s not in alphabet:
                violations.append(("unknown-symbol", f"row {i}: {s!r}"))
        if d is None:
            violations.append(("malformed-transition", f"row {i}: bad move {row['move']!r}"))
        if q in terminals:
            violations.append(("terminal-has-outgoing", f"row {i}: terminal {q!r} reads {a!r}"))
        if (q, a) in delta:
            violations.append(("duplicate-transition", f"row {i}: ({q}, {a}) defined twice"))
            continue
        delta[(q, a)] = (n, w, d)

    if violations:
        raise ValidationError(violations)
    return TuringMachine(states, alphabet, delta, initial, terminals, blank)


def tm_step(m: TuringMachine, c: Configuration) -> Configuration:
    if c.state in m.terminals:
        raise SimulationError("terminal-state", f"{c.state} is terminal", c.state)
    if not 0 <= c.head < len(c.tape):
        raise SimulationError("head-out-of-range", f"head {c.head}", c.state)
    symbol = c.tape[c.head]
    try:
        nxt, write, move = m.delta[(c.state, symbol)]
    except KeyError:
        raise SimulationError(
            "undefined-transition", f"no rule for ({c.state}, {symbol})", c.state, symbol
        ) from None
    head = c.head + move
    # a halting move may step one cell past the end; the head is never read again
    if not 0 <= head < len(c.tape) and nxt not in m.terminals:
        raise SimulationError(
            "head-out-of-range", f"move {move:+d} from {c.head} leaves the tape", c.state, symbol
        )
    tape = c.tape[: c.head] + (write,) + c.tape[c.head + 1 :]
    return Configuration(nxt, head, tape, c.step + 1)


def tm_run(m: TuringMachine, input: Sequence[str], T: int) -> Trace:
    if T < 1:
        raise ValueError("T must be >= 1")
    tape = m.check_input(input)
    if not tape:
        raise ValueError("tape must hold at least one cell")
    c = Configuration(m.initial, 0, tape, 0)
    configs = [c]
    while True:
        if c.state in m.terminals:
            return Trace(configs, Outcome("halted", c.state))
        if c.step >= T:
            return Trace(configs, Outcome("step-limit-exceeded"))
        try:
            c = tm_step(m, c)
        except SimulationError as e:
            return Trace(configs, Outcome(e.code, e.state, e.symbol))
        configs.append(c)


def random_turing_machine(rng: np.random.Generator, n_states=None, n_symbols=None):
    """A random machine with a complete transition table.

    The last declared state is the only terminal.
    """
    n_states = n_states or int(rng.integers(2, 5))
    n_symbols = n_symbols or int(rng.integers(2, 4))
    states = [f"q{i}" for i in range(n_states)]
    alphabet = "abc"[:n_symbols]
    transitions = []
    for q in states[:-1]:
        for a in alphabet:
            transitions.append({
                "state": q,
                "read": a,
                "next": states[int(rng.integers(n_states))],
                "write": alphabet[int(rng.integers(n_symbols))],
                "move": int(rng.choice([LEFT, RIGHT])),
            })
    return validate_turing({
        "states": states,
        "alphabet": list(alphabet),
        "initial": states[0],
        "terminals": [states[-1]],
        "transitions": transitions,
    })


# --------------------------------------------------------------------------
# Stack machines
# --------------------------------------------------------------------------


def _parse_top(value):
    if value in (0, "0"):
        return 0
    if value in (1, "1"):
        return 1
    if value in (None, "e", "empty", "-"):
        return EMPTY
    raise ValueError(value)


def top_name(top) -> str:
    return "empty" if top is EMPTY else str(top)


@dataclass(frozen=True)
class StackMachine:
    states: tuple[str, ...]
    initial: str
    terminals: frozenset[str]
    rules: Mapping[tuple, tuple]  # (state, top0, top1) -> (next, op0, op1)
    input_encoding: Mapping[str, int]
    p: int = 2
    reject: str | None = None  # state taken when no rule matches

    def to_dict(self) -> dict:
        return {
            "kind": "stack",
            "states": list(self.states),
            "initial": self.initial,
            "terminals": [q for q in self.states if q in self.terminals],
            "reject": self.reject,
            "input_encoding": dict(self.input_encoding),
            "rules": [
                {"state": q, "top0": top_name(t0), "top1": top_name(t1),
                 "next": n, "op0": o0, "op1": o1}
                for (q, t0, t1), (n, o0, o1) in self.rules.items()
            ],
        }

    def digest(self) -> str:
        return description_hash(self.to_dict())

    def lookup(self, state, tops):
        """Rule for ``(state, *tops)``, falling back to ``reject`` if declared."""
        key = (state, *tops)
        if key in self.rules:
            return self.rules[key]
        if self.reject is not None:
            return (self.reject,) + ("noop",) * self.p
        return None


def validate_stack(raw: Mapping) -> StackMachine:
    violations = []
    states = _names(raw, "states", violations)
    initial = str(raw.get("initial"))
    terminals = frozenset(str(q) for q in raw.get("terminals") or ())
    reject = raw.get("reject")
    reject = None if reject is None else str(reject)
    p = 2
    if initial not in states:
        violations.append(("unknown-state", f"initial state {initial!r}"))
    for q in sorted(terminals - set(states)):
        violations.append(("unknown-state", f"terminal state {q!r}"))
    if reject is not None and reject not in states:
        violations.append(("unknown-state", f"reject state {reject!r}"))

    encoding = {}
    for ch, bit in dict(raw.get("input_encoding") or {}).items():
        if bit not in (0, 1, "0", "1"):
            violations.append(("bad-encoding", f"{ch!r} -> {bit!r}"))
            continue
        encoding[str(ch)] = int(bit)

    rules = {}
    for i, row in enumerate(raw.get("rules") or ()):
        try:
            q = str(row["state"])
            tops = (_parse_top(row["top0"]), _parse_top(row["top1"]))
            n, ops = str(row["next"]), (str(row["op0"]), str(row["op1"]))
        except (KeyError, TypeError, ValueError):
            violations.append(("malformed-rule", f"row {i}: {row!r}"))
            continue
        for s in (q, n):
            if s not in states:
                violations.append(("unknown-state", f"row {i}: {s!r}"))
        for s, (op, top) in enumerate(zip(ops, tops)):
            if op not in STACK_OPS:
                violations.append(("unknown-op", f"row {i}: {op!r}"))
            elif op == "pop" and top is EMPTY:
                violations.append(("pop-on-empty", f"row {i}: pop on empty stack {s}"))
        if q in terminals:
            violations.append(("terminal-has-outgoing", f"row {i}: terminal {q!r}"))
        key = (q, *tops)
        if key in rules:
            violations.append(("duplicate-transition", f"row {i}: {key} defined twice"))
            continue
        rules[key] = (n, *ops)

    if violations:
        raise ValidationError(violations)
    return StackMachine(states, initial, terminals, rules, encoding, p, reject)


def encode_input_to_stacks(m: StackMachine, input: str) -> StackConfiguration:
    bits = []
    for ch in input:
        if ch not in m.input_encoding:
            raise UnknownSymbolError(ch, "unmapped-character", "has no input encoding")
        bits.append(m.input_encoding[ch])
    stacks = (tuple(bits),) + ((),) * (m.p - 1)
    return StackConfiguration(m.initial, stacks, 0)


def apply_op(stack: tuple[int, ...], op: str) -> tuple[int, ...]:
    if op == "noop":
        return stack
    if op == "push0":
        return (0,) + stack
    if op == "push1":
        return (1,) + stack
    if op == "pop":
        if not stack:
            raise SimulationError("pop-on-empty", "pop on an empty stack")
        return stack[1:]
    raise ValueError(op)


def sm_step(m: StackMachine, c: StackConfiguration) -> StackConfiguration:
    tops = tuple(s[0] if s else EMPTY for s in c.stacks)
    rule = m.lookup(c.state, tops)
    if rule is None:
        raise SimulationError(
            "undefined-transition", f"no rule for ({c.state}, {tops})", c.state, tops
        )
    nxt, *ops = rule
    try:
        stacks = tuple(apply_op(s, op) for s, op in zip(c.stacks, ops))
    except SimulationError as e:
        raise SimulationError(e.code, str(e), c.state, tops) from None
    return StackConfiguration(nxt, stacks, c.step + 1)


def sm_run(m: StackMachine, c0: StackConfiguration, T: int) -> Trace:
    if T < 1:
        raise ValueError("T must be >= 1")
    c = c0
    configs = [c]
    while True:
        if c.state in m.terminals:
            return Trace(configs, Outcome("halted", c.state))
        if c.step - c0.step >= T:
            return Trace(configs, Outcome("step-limit-exceeded"))
        try:
            c = sm_step(m, c)
        except SimulationError as e:
            return Trace(configs, Outcome(e.code, e.state, e.symbol))
        configs.append(c)


# --------------------------------------------------------------------------
# Description files
# --------------------------------------------------------------------------


def parse_description(raw: Mapping):
    """Validate a parsed description as a Turing or stack machine."""
    if not isinstance(raw, Mapping):
        raise ValidationError([("malformed-document", "top level must be a mapping")])
    kind = raw.get("kind")
    if kind is None:
        kind = "stack" if "rules" in raw else "turing"
    if kind == "turing":
        return validate_turing(raw)
    if kind == "stack":
        return validate_stack(raw)
    raise ValidationError([("malformed-document", f"unknown kind {kind!r}")])


def load_machine(path):
    with open(path, encoding="utf-8") as f:
        try:
            raw = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ValidationError([("malformed-document", str(e))]) from None
    return parse_description(raw)


def _builtin(name):
    text = resources.files("neuraltm").joinpath("machines", name).read_text("utf-8")
    return parse_description(yaml.safe_load(text))


def balanced_parens() -> TuringMachine:
    """The balanced-parentheses Turing machine (states I R M V T F)."""
    return _builtin("balanced_parens.yaml")


def balanced_parens_stack() -> StackMachine:
    """Two-stack program for balanced parentheses, ``(`` -> 1, ``)`` -> 0."""
    return _builtin("balanced_parens_stack.yaml")
