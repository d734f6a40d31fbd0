"""Batch command-line front door.

Subcommands: validate, reduce, hitting, expect, simulate, verify.  All
commands are read-only on the model file; reports go to stdout as JSON or
aligned text, diagnostics to stderr.  Exit codes: 0 success, 1 validation or
verification failure, 2 algorithm precondition failure, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from fractions import Fraction

from .asymptotics import ComparableFn, NonpositiveValueError
from .hitting import (HittingResult, expectation_summary, extend_to_interior,
                      hitting_probabilities, hitting_summary)
from .laplace import MissingMeanError, expr_to_json, lt_eval, pretty
from .model import SchemaError, parse_model, validate_model
from .oracle import (SingularSystemError, StepBudgetExceeded, convergence_check,
                     simulate_hitting)
from .reduction import ReductionError, reduce

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_PRECONDITION = 2
EXIT_IO = 3


def _leading_json(f: ComparableFn) -> dict:
    lead = f.leading()
    return {"a": str(lead.coeff), "b": str(lead.b), "c": str(lead.c), "d": str(lead.d)}


def _frac(x) -> str | float:
    return str(x) if isinstance(x, Fraction) else float(x)


def _hitting_json(result: HittingResult, with_expectations: bool) -> dict:
    entries = {}
    for (i, j), e in sorted(result.entries.items()):
        row: dict = {
            "psi": {"tree": expr_to_json(e.psi), "pretty": pretty(e.psi)},
            "check_v": _leading_json(e.check_v),
            "hit_prob": _frac(e.hit_prob),
            "switch_index": e.switch_index,
        }
        if e.phi is not None:
            row["phi"] = {"tree": expr_to_json(e.phi), "pretty": pretty(e.phi)}
        if with_expectations and e.bar_v is not None:
            row["bar_v"] = _leading_json(e.bar_v)
            row["bar_E"] = _frac(e.bar_E)
            row["E_check"] = "infinite" if e.e_check_infinite else _frac(e.e_check)
            row["moment_match"] = e.moment_match
        entries[f"{i}->{j}"] = row
    return {"domain": list(result.domain), "entries": entries}


def _hitting_text(result: HittingResult, with_expectations: bool) -> str:
    lines = []
    for (i, j), e in sorted(result.entries.items()):
        lead = e.check_v.leading()
        lines.append(f"{i} -> {j}:")
        lines.append(f"  psi        = {pretty(e.psi)}")
        lines.append(f"  hit_prob   = {e.hit_prob}")
        lines.append(f"  check_v    ~ {lead.pretty()}   (switch index {e.switch_index})")
        if with_expectations and e.bar_v is not None:
            blead = e.bar_v.leading()
            ev = "infinite" if e.e_check_infinite else e.e_check
            lines.append(f"  bar_v      ~ {blead.pretty()}")
            lines.append(f"  bar_E      = {e.bar_E}")
            lines.append(f"  E(check_v) = {ev}   moment_match={e.moment_match}")
    return "\n".join(lines)


def _emit(doc, fmt: str, text_renderer) -> None:
    if fmt == "json":
        print(json.dumps(doc, indent=2, sort_keys=True))
    else:
        print(text_renderer())


def _floats(text: str) -> tuple[float, ...]:
    try:
        values = tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad numeric list {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("empty numeric list")
    if any(v < 0 for v in values):
        raise argparse.ArgumentTypeError("grid values must be nonnegative")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smreduce",
        description="Hitting-time asymptotics for perturbed semi-Markov models",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("model", help="path to the JSON model file")
        p.add_argument("--format", choices=("json", "text"), default="text")

    p_validate = sub.add_parser("validate", help="check the standing conditions")
    common(p_validate)

    p_reduce = sub.add_parser("reduce", help="run the phase-space reduction")
    common(p_reduce)
    p_reduce.add_argument("--trace", action="store_true",
                          help="emit the full step-by-step JSON trace")

    p_hitting = sub.add_parser("hitting", help="limiting hitting laws")
    common(p_hitting)

    p_expect = sub.add_parser("expect", help="limiting hitting-time expectations")
    common(p_expect)

    p_sim = sub.add_parser("simulate", help="Monte Carlo hitting-time samples")
    common(p_sim)
    p_sim.add_argument("--eps", type=_floats, default=(1e-3,),
                       help="perturbation values; the first is simulated")
    p_sim.add_argument("--samples", type=int, default=100_000)
    p_sim.add_argument("--seed", type=int, default=20240811)
    p_sim.add_argument("--start", default=None, help="initial state (default: first exterior)")
    p_sim.add_argument("--s", type=_floats, default=(0.5, 1.0, 2.0),
                       help="transform evaluation points")
    p_sim.add_argument("--csv", default=None, help="write raw samples to this CSV file")

    p_verify = sub.add_parser("verify", help="validate, reduce, and check convergence")
    common(p_verify)
    p_verify.add_argument("--eps", type=_floats, default=(1e-2, 1e-3, 1e-4))
    p_verify.add_argument("--s", type=_floats, default=(0.5, 1.0, 2.0))
    p_verify.add_argument("--skip-validate", action="store_true",
                          help="run the convergence check even if validation fails")
    return parser


def _load(path: str):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        print(f"error: cannot read {path}: {exc}", file=sys.stderr)
        return None
    return parse_model(text)


def run(args: argparse.Namespace) -> int:
    try:
        model = _load(args.model)
    except SchemaError as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    if model is None:
        return EXIT_IO

    try:
        if args.command == "validate":
            report = validate_model(model)
            _emit(report.to_json(), args.format, lambda: _render_report_text(report))
            return EXIT_OK if report.all_ok else EXIT_VALIDATION

        if args.command == "reduce":
            trace = reduce(model)
            doc = trace.to_json(symbolic=args.trace)
            if not args.trace:
                doc = {"order": doc["order"], "final_state": doc["final_state"],
                       "steps": [{k: s[k] for k in s if k not in ("after_exclusion",)}
                                 for s in doc["steps"]]}
            _emit(doc, args.format, lambda: _render_trace_text(trace))
            return EXIT_OK

        if args.command == "hitting":
            trace = reduce(model)
            result = _with_interior(trace, model, hitting_summary(trace))
            _emit(_hitting_json(result, False), args.format,
                  lambda: _hitting_text(result, False))
            return EXIT_OK

        if args.command == "expect":
            trace = reduce(model)
            result = _with_interior(trace, model, expectation_summary(trace))
            _emit(_hitting_json(result, True), args.format,
                  lambda: _hitting_text(result, True))
            return EXIT_OK

        if args.command == "simulate":
            return _run_simulate(model, args)

        if args.command == "verify":
            return _run_verify(model, args)
    except (ReductionError, MissingMeanError, SingularSystemError,
            StepBudgetExceeded, NonpositiveValueError) as exc:
        print(f"precondition error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    raise AssertionError(f"unhandled command {args.command}")  # pragma: no cover


def _with_interior(trace, model, result: HittingResult) -> HittingResult:
    """Merge in entries for initial states inside the domain when the model
    carries genuine interior rows."""
    if not model.interior_given:
        return result
    if any(e.bar_v is None for e in result.entries.values()):
        exterior = expectation_summary(trace, result)
    else:
        exterior = result
    interior, _ = extend_to_interior(trace, model, exterior)
    merged = HittingResult(result.domain,
                           tuple(result.initial_states) + tuple(interior.initial_states))
    merged.entries.update(result.entries)
    merged.entries.update(interior.entries)
    return merged


def _render_report_text(report) -> str:
    lines = []
    for name, entry in report.to_json().items():
        if name == "all_ok":
            continue
        status = "pass" if entry["ok"] else "FAIL"
        lines.append(f"{name:>20}: {status}")
        for w in entry["witnesses"]:
            lines.append(f"{'':>22}{w}")
    lines.append(f"{'overall':>20}: {'pass' if report.all_ok else 'FAIL'}")
    return "\n".join(lines)


def _render_trace_text(trace) -> str:
    lines = [f"exclusion order: {', '.join(trace.order[:-1]) or '(none)'}",
             f"final exterior state: {trace.final_state}"]
    for rec in trace.steps:
        st = rec.after_removal
        title = "initial removal" if rec.excluded is None else f"excluded {rec.excluded}"
        lines.append(f"step {rec.index} ({title}): exterior {{{', '.join(st.dbar)}}}")
        for (i, j), val in sorted(st.p0.items()):
            lines.append(f"    p0[{i}->{j}] = {val}")
        for i, f in sorted(st.v.items()):
            lines.append(f"    v[{i}] ~ {f.leading().pretty()}")
    return "\n".join(lines)


def _run_simulate(model, args) -> int:
    eps = args.eps[0]
    start = args.start or model.dbar[0]
    samples = simulate_hitting(model, eps, start, args.samples, args.seed)
    taus = [t for t, _ in samples]
    n = len(taus)
    mean = math.fsum(taus) / n
    var = math.fsum((t - mean) ** 2 for t in taus) / max(n - 1, 1)
    entry_counts: dict[str, int] = {}
    for _, j in samples:
        entry_counts[j] = entry_counts.get(j, 0) + 1
    transform = {str(s): math.fsum(math.exp(-s * t) for t in taus) / n for s in args.s}
    doc = {
        "eps": eps,
        "start": start,
        "samples": n,
        "seed": args.seed,
        "mean": mean,
        "std_error": math.sqrt(var / n),
        "entry_frequencies": {j: c / n for j, c in sorted(entry_counts.items())},
        "empirical_transform": transform,
    }
    if args.csv:
        try:
            with open(args.csv, "w", encoding="utf-8") as fh:
                fh.write("tau,entry_state\n")
                for t, j in samples:
                    fh.write(f"{t!r},{j}\n")
        except OSError as exc:
            print(f"error: cannot write {args.csv}: {exc}", file=sys.stderr)
            return EXIT_IO

    def text() -> str:
        lines = [f"eps={eps} start={start} samples={n} seed={args.seed}",
                 f"mean tau = {mean:.6g} (s.e. {doc['std_error']:.3g})"]
        for j, freq in sorted(doc["entry_frequencies"].items()):
            lines.append(f"entry {j}: {freq:.4f}")
        for s, val in doc["empirical_transform"].items():
            lines.append(f"E exp(-{s} tau) = {val:.6g}")
        return "\n".join(lines)

    _emit(doc, args.format, text)
    return EXIT_OK


def _run_verify(model, args) -> int:
    report = validate_model(model)
    if not report.all_ok:
        print(_render_report_text(report), file=sys.stderr)
        if not args.skip_validate:
            return EXIT_VALIDATION
    trace = reduce(model)
    result = expectation_summary(trace)
    probs = hitting_probabilities(trace)
    cross = max(abs(lt_eval(result.psi(i, j), 0.0) - float(probs[(i, j)]))
                for (i, j) in probs)
    conv = convergence_check(model, trace, result,
                             eps_grid=tuple(args.eps), s_grid=tuple(args.s))
    doc = {
        "order": list(trace.order),
        "hitting": _hitting_json(result, True),
        "probability_cross_check": cross,
        "convergence": conv.to_json(),
        "passed": conv.all_ok and cross <= 1e-12,
    }

    def text() -> str:
        lines = [f"exclusion order: {', '.join(trace.order)}"]
        for (i, j), e in sorted(result.entries.items()):
            lines.append(f"psi[{i}->{j}] = {pretty(e.psi)}   P0 = {e.hit_prob}")
        lines.append(f"probability cross-check gap: {cross:.2e}")
        lines.append(conv.render_text())
        lines.append("verification " + ("PASSED" if doc["passed"] else "FAILED"))
        return "\n".join(lines)

    _emit(doc, args.format, text)
    return EXIT_OK if doc["passed"] else EXIT_VALIDATION


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return run(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
