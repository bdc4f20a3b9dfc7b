"""Command line front end.

Exit codes: 0 when every requested check passes, 1 when a check fails,
2 for unreadable input (malformed JSON, bad arguments, violated
preconditions).
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import export
from .errors import UncertainMarkovError, ParameterError, ShapeError
from .ergodicity import (
    certify_nonlinear_ergodicity,
    convergence_probe,
    is_ergodic_linear,
    sandwich_check,
    stationary_distributions,
)
from .models import SpeedFunction, build_uncertain_generator, speed_from_dict
from .oracle import MarkovPolicy, estimate_expectation, exact_expectation
from .selection import verify_selection
from .semigroup import check_semigroup, evolve
from .statespace import site_sum, up_set_indicator

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    pass


def load_model(path: str) -> SpeedFunction:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read model file: {exc}") from None
    try:
        desc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return speed_from_dict(desc)


def parse_state_function(text: str, n_sites: int) -> np.ndarray:
    """``sum``, ``upset:INDEX``, ``const:C`` or ``file:PATH`` (CSV, one value per state)."""
    kind, _, arg = text.partition(":")
    N = 1 << n_sites
    if kind == "sum" and not arg:
        return site_sum(n_sites)
    if kind == "upset":
        return up_set_indicator(int(arg), n_sites)
    if kind == "const":
        return np.full(N, float(arg))
    if kind == "file":
        with open(arg, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r]
        if rows and not _is_number(rows[0][-1]):
            rows = rows[1:]
        values = np.array([float(r[-1]) for r in rows])
        if values.shape != (N,):
            raise ShapeError(f"{arg}: expected {N} values, found {len(values)}")
        return values
    raise ParameterError(f"cannot parse state function {text!r}")


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


@contextlib.contextmanager
def _output(path: str | None):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _report(obj) -> None:
    export.write_json(obj, sys.stdout)


def _control_index(speed: SpeedFunction, text: str) -> int:
    if text in speed.grid.labels:
        return speed.grid.labels.index(text)
    try:
        g = int(text)
    except ValueError:
        raise ParameterError(f"unknown control {text!r}") from None
    if not 0 <= g < speed.n_controls:
        raise ParameterError(f"control index {g} out of range")
    return g


def cmd_evolve(args, speed):
    gen = build_uncertain_generator(speed)
    f = parse_state_function(args.f, speed.n_sites)
    run = evolve(gen, f, args.t, args.step)
    with _output(args.out) as out:
        export.write_run_csv(run, out)
    return EXIT_OK


def cmd_check_semigroup(args, speed):
    gen = build_uncertain_generator(speed)
    f = parse_state_function(args.f, speed.n_sites)
    rep = check_semigroup(gen, f, args.s, args.t, args.step, args.tol)
    _report({"check": "semigroup", "s": args.s, "t": args.t, "max_abs_gap": rep.max_abs_gap,
             "tol": args.tol, "pass": rep.passed})
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_select(args, speed):
    gen = build_uncertain_generator(speed)
    f = parse_state_function(args.f, speed.n_sites)
    rep = verify_selection(gen, f, args.t, args.step, args.tol)
    if args.out and rep.policy is not None:
        with _output(args.out) as out:
            export.write_policy_csv(rep.policy, speed.grid.labels, out)
    _report({"check": "selection", "t": args.t, "max_gap": rep.max_gap, "tol": args.tol,
             "pass": rep.passed, "hjb": rep.hjb.tolist(), "selected": rep.selected.tolist()})
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_sandwich(args, speed):
    f = parse_state_function(args.f, speed.n_sites)
    rep = sandwich_check(speed, f, args.t, args.step, args.tol)
    _report({
        "check": "sandwich", "t": args.t, "tol": args.tol, "pass": rep.passed,
        "status": rep.status.value if rep.status else None,
        "max_violation": rep.max_violation if rep.passed or rep.status is None else None,
        "diagnostics": rep.diagnostics,
        "lower": None if rep.lower is None else rep.lower.tolist(),
        "value": None if rep.value is None else rep.value.tolist(),
        "upper": None if rep.upper is None else rep.upper.tolist(),
    })
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_certify(args, speed):
    verdict = certify_nonlinear_ergodicity(speed)
    with _output(args.out) as out:
        export.write_json(verdict.to_dict(), out)
    return EXIT_OK if verdict.certified else EXIT_FAIL


def cmd_probe(args, speed):
    f = parse_state_function(args.f, speed.n_sites)
    horizons = [float(h) for h in args.horizons.split(",") if h.strip()]
    rep = convergence_probe(speed, f, horizons, args.step)
    with _output(args.out) as out:
        export.write_probe_csv(rep.horizons, rep.gaps, out)
    return EXIT_OK


def cmd_oracle(args, speed):
    gen = build_uncertain_generator(speed)
    f = parse_state_function(args.f, speed.n_sites)
    if args.policy:
        with open(args.policy, newline="") as fh:
            policy = export.read_policy_csv(fh, speed.grid.labels, gen.n_states)
    else:
        policy = MarkovPolicy.constant(args.t, gen.n_states, _control_index(speed, args.control))
    exact = exact_expectation(gen, policy, f, step=args.step, t=args.t)
    result = {"exact": exact.tolist()}
    ok = True
    if args.mc:
        states = range(gen.n_states) if args.state is None else [args.state]
        estimates = [estimate_expectation(gen, policy, f, k, args.t, args.mc, args.seed) for k in states]
        if args.out:
            with _output(args.out) as out:
                export.write_estimates_csv(estimates, out)
        checks = []
        for e in estimates:
            z_ok = abs(e.mean - exact[e.state]) <= 3 * e.stderr + 1e-12
            checks.append({"state": e.state, "mean": e.mean, "stderr": e.stderr, "exact": float(exact[e.state]),
                           "within_3_stderr": bool(z_ok)})
            ok &= z_ok
        result["monte_carlo"] = checks
    _report(result)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_stationary(args, speed):
    g = _control_index(speed, args.control)
    Q = build_uncertain_generator(speed).matrix(g)
    dists = stationary_distributions(Q)
    erg = is_ergodic_linear(Q)
    result = {"control": speed.grid.labels[g], "ergodic": erg.ergodic,
              "distributions": [d.tolist() for d in dists]}
    with _output(args.out) as out:
        export.write_json(result, out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="uncertain-markov", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, *, f=True, t=True, tol=None, out=False):
        sp = sub.add_parser(name)
        sp.add_argument("--model", required=True, help="model description (JSON)")
        if f:
            sp.add_argument("--f", default="sum", help="sum | upset:INDEX | const:C | file:PATH")
        if t:
            sp.add_argument("--t", type=float, required=True)
        sp.add_argument("--step", type=float, default=None)
        if tol is not None:
            sp.add_argument("--tol", type=float, default=tol)
        if out:
            sp.add_argument("--out", default=None)
        sp.set_defaults(func=func)
        return sp

    add("evolve", cmd_evolve, out=True)
    sg = add("check-semigroup", cmd_check_semigroup, tol=1e-6)
    sg.add_argument("--s", type=float, required=True)
    add("select", cmd_select, tol=1e-4, out=True)
    add("sandwich", cmd_sandwich, tol=1e-8)
    add("certify", cmd_certify, f=False, t=False, out=True)
    pr = add("probe", cmd_probe, t=False, out=True)
    pr.add_argument("--horizons", default="1,5,20,50")
    orc = add("oracle", cmd_oracle, out=True)
    orc.add_argument("--policy", default=None, help="policy CSV (as written by select)")
    orc.add_argument("--control", default="0", help="constant control when no policy is given")
    orc.add_argument("--mc", type=int, default=0, help="Monte Carlo samples per state")
    orc.add_argument("--seed", type=int, default=42)
    orc.add_argument("--state", type=int, default=None)
    st = add("stationary", cmd_stationary, f=False, t=False, out=True)
    st.add_argument("--control", default="0")
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        speed = load_model(args.model)
        return args.func(args, speed)
    except (InputError, UncertainMarkovError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
