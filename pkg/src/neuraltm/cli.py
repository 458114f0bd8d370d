"""Command-line entry point.

    neuraltm compile   --machine FILE --arch wcm21 --out net.json
    neuraltm run       --machine FILE --arch wcm21 --input "B()E" --trace
    neuraltm verify    --machine FILE --arch ss95-4 --exhaustive 10 --symbols "()"
    neuraltm precision --b 40 --pops 15
    neuraltm oracle    --machine FILE --input "B()E"

Results go to stdout, diagnostics to stderr.  Exit status:

    0  success
    1  a simulation failed or diverged from the reference interpreter
    2  bad arguments, or an invalid machine file or weight document
"""
from __future__ import annotations

import argparse
import itertools
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import ss, wcm
from .machine import (
    SimulationError,
    StackMachine,
    TuringMachine,
    UnknownSymbolError,
    ValidationError,
    encode_input_to_stacks,
    load_machine,
    random_turing_machine,
    sm_run,
    tm_run,
)
from .network import DocumentError, deserialize, serialize

ARCHS = ("wcm21", "ss95-4", "ss95-1")
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def default_T(arch, input):
    if arch == "wcm21":
        return 100
    return max(4 * len(input), 4)


def compile_machine(m, arch, T=None):
    if arch == "wcm21":
        if not isinstance(m, TuringMachine):
            raise UsageError("arch wcm21 needs a Turing machine description")
        return wcm.compile(m, T or 100)
    if not isinstance(m, StackMachine):
        raise UsageError(f"arch {arch} needs a stack machine description")
    return ss.compile4(m) if arch == "ss95-4" else ss.compile1(m)


def load_network(path, arch=None):
    try:
        net = deserialize(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise UsageError(str(e)) from None
    found = net.meta.get("arch")
    if arch is not None and found != arch:
        raise UsageError(f"weight document is for {found!r}, not {arch!r}")
    return wcm.from_network(net) if found == "wcm21" else ss.from_network(net)


def check_hash(compiled, m):
    found = compiled.step_net.meta.get("machine_hash")
    if found != m.digest():
        raise UsageError(f"weight document was compiled from another machine ({found})")


def oracle_trace(m, input, T):
    if isinstance(m, TuringMachine):
        return tm_run(m, input, T)
    return sm_run(m, encode_input_to_stacks(m, input), T)


def network_trace(compiled, input, T):
    return compiled.simulate(input, T)[0]


@dataclass
class Divergence:
    case: int
    input: str
    step: int
    expected: str
    got: str


@dataclass
class VerifyReport:
    cases: int
    divergence: Divergence | None

    @property
    def exit_status(self):
        return EXIT_OK if self.divergence is None else EXIT_FAIL

    def format(self):
        lines = [f"cases\t{self.cases}"]
        d = self.divergence
        if d is None:
            lines.append("divergences\t0")
        else:
            lines += ["divergences\t1+", f"case\t{d.case}", f"input\t{d.input}",
                      f"step\t{d.step}", f"expected\t{d.expected}", f"got\t{d.got}"]
        return "\n".join(lines)


def first_divergence(expected, got):
    """``(step, expected, got)`` of the first mismatch between two traces."""
    for i, (a, b) in enumerate(zip(expected.configs, got.configs)):
        if a != b:
            return i, a.format(), b.format()
    n = min(len(expected.configs), len(got.configs))
    if len(expected.configs) != len(got.configs) or expected.outcome != got.outcome:
        def at(trace):
            if n < len(trace.configs):
                return trace.configs[n].format()
            return f"end: {trace.outcome}"
        return n, at(expected), at(got)
    return None


def verify_cases(cases, T=None):
    """Run ``(machine, compiled, input)`` cases in order; stop at first divergence."""
    count = 0
    for case_id, (m, compiled, input) in enumerate(cases):
        count += 1
        arch = "wcm21" if isinstance(compiled, wcm.WcmNetwork) else "ss95"
        steps = T or (compiled.T if arch == "wcm21" else default_T(arch, input))
        expected = oracle_trace(m, input, steps)
        try:
            got = network_trace(compiled, input, steps)
        except SimulationError as e:
            expect = (expected.configs[e.step].format() if e.step is not None
                      and e.step < len(expected.configs) else f"end: {expected.outcome}")
            return VerifyReport(count, Divergence(case_id, input, e.step, expect, f"error: {e}"))
        diff = first_divergence(expected, got)
        if diff is not None:
            return VerifyReport(count, Divergence(case_id, input, *diff))
    return VerifyReport(count, None)


def input_symbols(m):
    if isinstance(m, TuringMachine):
        return list(m.alphabet)
    return sorted(m.input_encoding)


def random_inputs(rng, symbols, n, max_len, min_len=0):
    out = []
    for _ in range(n):
        length = int(rng.integers(min_len, max_len + 1))
        out.append("".join(symbols[int(i)] for i in rng.integers(0, len(symbols), length)))
    return out


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_compile(args, out):
    m = load_machine(args.machine)
    compiled = compile_machine(m, args.arch, args.T)
    Path(args.out).write_text(serialize(compiled.step_net), encoding="utf-8")
    for key, value in compiled.census().items():
        print(f"{key}\t{value}", file=out)
    return EXIT_OK


def cmd_run(args, out):
    if args.net:
        compiled = load_network(args.net, args.arch)
        if args.machine:
            check_hash(compiled, load_machine(args.machine))
    elif args.machine:
        m = load_machine(args.machine)
        compiled = compile_machine(m, args.arch, args.T)
    else:
        raise UsageError("run needs --machine or --net")
    T = args.T or default_T(args.arch, args.input)
    trace = network_trace(compiled, args.input, T)
    return _report_trace(trace, args.trace, out)


def cmd_oracle(args, out):
    m = load_machine(args.machine)
    arch = "wcm21" if isinstance(m, TuringMachine) else "ss95"
    trace = oracle_trace(m, args.input, args.T or default_T(arch, args.input))
    return _report_trace(trace, args.trace, out)


def _report_trace(trace, show, out):
    if show:
        print(trace.format(), file=out)
    if trace.answer is None:
        print(f"no answer: {trace.outcome}", file=sys.stderr)
        return EXIT_FAIL
    print(trace.answer, file=out)
    return EXIT_OK


def cmd_verify(args, out):
    rng = np.random.default_rng(args.seed)
    if args.random_machines:
        if args.arch != "wcm21":
            raise UsageError("--random-machines generates Turing machines (arch wcm21)")
        cases = random_machine_cases(rng, args.random_machines, args.random or 20,
                                     args.max_len, args.T or 30)
    else:
        if not args.machine:
            raise UsageError("verify needs --machine or --random-machines")
        m = load_machine(args.machine)
        if args.net:
            compiled = load_network(args.net, args.arch)
            check_hash(compiled, m)
        else:
            compiled = compile_machine(m, args.arch, args.T)
        cases = ((m, compiled, s) for s in _inputs(rng, m, args))
    report = verify_cases(cases, args.T)
    print(report.format(), file=out)
    return report.exit_status


def _inputs(rng, m, args):
    if args.inputs:
        lines = Path(args.inputs).read_text(encoding="utf-8").splitlines()
        return [line.rstrip("\r") for line in lines]
    symbols = list(args.symbols) if args.symbols else input_symbols(m)
    if args.exhaustive is not None:
        bodies = ("".join(p) for n in range(args.exhaustive + 1)
                  for p in itertools.product(symbols, repeat=n))
    elif args.random:
        bodies = random_inputs(rng, symbols, args.random, args.max_len)
    else:
        raise UsageError("verify needs --inputs, --exhaustive or --random")
    return [args.prefix + b + args.suffix for b in bodies]


def random_machine_cases(rng, n_machines, n_inputs=20, max_len=8, T=30):
    """Seeded ``(machine, network, input)`` cases over random Turing machines."""
    for _ in range(n_machines):
        m = random_turing_machine(rng)
        compiled = wcm.compile(m, T)
        for s in random_inputs(rng, list(m.alphabet), n_inputs, max_len, min_len=1):
            yield m, compiled, s


def cmd_precision(args, out):
    if args.b < 4:
        raise UsageError("--b must be >= 4")
    rows, first = ss.precision_probe(args.b, args.pops, args.stacks, args.seed)
    print("pops\tmax_error\tflips", file=out)
    for k, err, flips in rows:
        print(f"{k}\t{err:.3e}\t{flips}", file=out)
    print(f"first_flip\t{first if first is not None else 'none'}", file=out)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="neuraltm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile", help="compile a machine to a weight document")
    p.add_argument("--machine", required=True)
    p.add_argument("--arch", choices=ARCHS, required=True)
    p.add_argument("--T", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("run", help="simulate a machine with its compiled network")
    p.add_argument("--machine")
    p.add_argument("--net", help="weight document to use instead of compiling")
    p.add_argument("--arch", choices=ARCHS, required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--T", type=int)
    p.add_argument("--trace", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify", help="compare network and reference traces")
    p.add_argument("--machine")
    p.add_argument("--net")
    p.add_argument("--arch", choices=ARCHS, required=True)
    p.add_argument("--inputs", help="file with one input per line")
    p.add_argument("--exhaustive", type=int, metavar="L",
                   help="every string over --symbols up to length L")
    p.add_argument("--random", type=int, metavar="N", help="N seeded random inputs")
    p.add_argument("--random-machines", type=int, metavar="M",
                   help="M seeded random Turing machines (N inputs each, default 20)")
    p.add_argument("--symbols", help="input symbols (default: the machine's)")
    p.add_argument("--prefix", default="")
    p.add_argument("--suffix", default="")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-len", type=int, default=8)
    p.add_argument("--T", type=int)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("precision", help="float64 error growth of repeated pops")
    p.add_argument("--b", type=int, required=True)
    p.add_argument("--pops", type=int, required=True)
    p.add_argument("--stacks", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_precision)

    p = sub.add_parser("oracle", help="run the reference interpreter")
    p.add_argument("--machine", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--T", type=int)
    p.add_argument("--trace", action="store_true")
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None, out=None):
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    try:
        return args.func(args, out)
    except (UsageError, ValidationError, DocumentError, UnknownSymbolError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (SimulationError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
