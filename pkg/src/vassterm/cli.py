"""Command-line entry point: ``vassterm <command> ...``.

Exit codes: 0 Linear / success / valid, 1 NotLinear / invalid certificate,
2 UnsupportedStructure, 3 input error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from fractions import Fraction
from importlib import resources

from .decision import (RankingCertificate, Verdict, VerdictTag, certificate_violations,
                       decide_angelic, decide_demonic)
from .graph import classify_structure, format_cycle, mec_decomposition
from .model import ModelError, VassMdp, induced_submodel, load_model, model_digest, parse_model
from .oracle import ResourceLimit, increments_with_witnesses
from .scheme import NonnegCombination, anchors, build_scheme, scheme_constants
from .simulator import (SafetyEvent, SimulationError, csv_text, estimate_statistics, fit_exponent,
                        nondecreasing_within_ci, tail_points)
from .strategies import (MdFactory, SchemeFactory, ScriptError, ScriptFactory, angelic_opt,
                         compile_script, demonic_opt)

EXIT_OK, EXIT_NOT_LINEAR, EXIT_UNSUPPORTED, EXIT_INPUT = 0, 1, 2, 3
BUNDLED = ("a1", "a2", "fig4", "countdown")


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


# -- encoding -------------------------------------------------------------------------

def frac(x) -> str:
    x = Fraction(x)
    return f"{x.numerator}/{x.denominator}"


def render(obj, fmt: str) -> str:
    if fmt == "canonical":
        return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return json.dumps(obj, indent=2, ensure_ascii=False)


def certificate_to_json(cert: RankingCertificate) -> dict:
    return {"w": [frac(x) for x in cert.w],
            "z": {q: frac(v) for q, v in cert.potentials.items()},
            "slack": frac(cert.slack)}


def certificate_from_json(data) -> RankingCertificate:
    try:
        w = tuple(Fraction(x) for x in data["w"])
        z = {str(q): Fraction(v) for q, v in data["z"].items()}
        slack = Fraction(data["slack"])
    except (KeyError, TypeError, ValueError, ZeroDivisionError, AttributeError) as exc:
        raise InputError(f"malformed certificate: {exc}") from None
    return RankingCertificate(w, z, slack)


def combination_to_json(combo: NonnegCombination) -> dict:
    return {"coefficients": list(combo.coefficients),
            "increments": [[frac(x) for x in it.value] for it in combo.items],
            "bsccs": [sorted(it.bscc) for it in combo.items],
            "strategies": [dict(it.strategy.choice) if it.strategy else None for it in combo.items],
            "sum": [frac(x) for x in combo.total()]}


def evidence_to_json(ev):
    if isinstance(ev, RankingCertificate):
        return {"certificate": certificate_to_json(ev)}
    if isinstance(ev, NonnegCombination):
        return {"combination": combination_to_json(ev)}
    if isinstance(ev, tuple):  # per-counter min mean payoff solutions
        return {"min_mean_payoff": [frac(s.value) for s in ev]}
    return None


# -- model lookup -----------------------------------------------------------------------

def resolve_model(path: str) -> VassMdp:
    """Load a model file; bare names of shipped examples also work."""
    for cand in (path, path + ".json"):
        if os.path.isfile(cand):
            return load_model(cand)
    stem = os.path.splitext(os.path.basename(path))[0]
    if stem in BUNDLED:
        text = resources.files("vassterm.models").joinpath(stem + ".json").read_text("utf-8")
        return parse_model(text)
    raise InputError(f"no such model: {path}")


def read_json(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None


# -- commands ----------------------------------------------------------------------------

def _verdict_exit(v: Verdict) -> int:
    return {VerdictTag.LINEAR: EXIT_OK, VerdictTag.NOT_LINEAR: EXIT_NOT_LINEAR,
            VerdictTag.UNSUPPORTED: EXIT_UNSUPPORTED}[v.tag]


def cmd_analyze(args, out) -> int:
    model = resolve_model(args.model)
    decomp = mec_decomposition(model)
    cls = classify_structure(model, decomp)
    verdict = decide_demonic(model) if args.mode == "demonic" else decide_angelic(model)
    report = {
        "digest": model_digest(model),
        "mode": args.mode,
        "verdict": verdict.tag.value,
        "structure": cls.tag.value,
        "evidence": evidence_to_json(verdict.evidence),
        "mecs": [{"index": i, "states": sorted(decomp.mecs[i]), "verdict": v.tag.value,
                  "evidence": evidence_to_json(v.evidence)}
                 for i, v in sorted(verdict.per_mec.items())],
    }
    if verdict.diagnostic:
        report["diagnostic"] = verdict.diagnostic
    if args.emit_certificate:
        if isinstance(verdict.evidence, RankingCertificate):
            with open(args.emit_certificate, "w", encoding="utf-8") as fh:
                fh.write(render(certificate_to_json(verdict.evidence), "text") + "\n")
            report["certificate_path"] = args.emit_certificate
        else:
            report["certificate_path"] = None
    out.write(render(report, args.format) + "\n")
    return _verdict_exit(verdict)


def cmd_certify(args, out) -> int:
    model = resolve_model(args.model)
    cert = certificate_from_json(read_json(args.certificate))
    problems = certificate_violations(model, cert)
    report = {"digest": model_digest(model), "valid": not problems}
    if problems:
        report["violation"] = problems[0]
    out.write(render(report, args.format) + "\n")
    return EXIT_OK if not problems else EXIT_NOT_LINEAR


def cmd_mec(args, out) -> int:
    model = resolve_model(args.model)
    decomp = mec_decomposition(model)
    cls = classify_structure(model, decomp)
    report = {
        "mecs": [sorted(m) for m in decomp.mecs],
        "transient": sorted(decomp.transient),
        "mec_graph": sorted([list(e) for e in decomp.mec_graph]),
        "self_reentrant": sorted(decomp.self_reentrant),
        "structure": cls.tag.value,
        "bottom": sorted(cls.bottom),
    }
    if cls.cycle:
        report["cycle"] = format_cycle(decomp, cls.cycle)
    out.write(render(report, args.format) + "\n")
    return EXIT_OK


def cmd_increments(args, out) -> int:
    model = resolve_model(args.model)
    incs = increments_with_witnesses(model, args.cap)
    report = {"increments": [{"value": [frac(x) for x in i.value],
                              "strategy": dict(i.strategy.choice),
                              "bscc": sorted(i.bscc)} for i in incs]}
    out.write(render(report, args.format) + "\n")
    return EXIT_OK


def scheme_context(model: VassMdp):
    """(sub-model, combination, constants) of the first non-linear MEC."""
    verdict = decide_demonic(model)
    decomp = mec_decomposition(model)
    for i, v in sorted(verdict.per_mec.items()):
        if v.tag is VerdictTag.NOT_LINEAR:
            sub = induced_submodel(model, decomp.mecs[i])
            return sub, v.evidence, scheme_constants(sub, v.evidence)
    raise InputError("every MEC is linear; no scheme exists")


def cmd_scheme(args, out) -> int:
    model = resolve_model(args.model)
    try:
        sub, combo, consts = scheme_context(model)
    except InputError as exc:
        out.write(render({"error": str(exc)}, args.format) + "\n")
        return EXIT_NOT_LINEAR
    scheme = build_scheme(combo, consts, args.n)
    report = {
        "combination": combination_to_json(combo),
        "anchors": list(anchors(combo)),
        "constants": {"xi": frac(consts.xi), "min_update": consts.min_update,
                      "x_min": frac(consts.x_min), "lambda": frac(consts.lam),
                      "denominator": consts.denominator},
        "n": args.n,
        "L": scheme.length,
        "skeleton": scheme.skeleton(),
        "increment_steps": scheme.increment_steps,
        "switches": scheme.switch_count,
    }
    out.write(render(report, args.format) + "\n")
    return EXIT_OK


def _int_list(text: str) -> list:
    try:
        vals = [int(x) for x in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _factory(args, model: VassMdp):
    """(simulated model, factory) for the --strategy flag."""
    kind, _, arg = args.strategy.partition(":")
    counters = tuple(_int_list(args.counters)) if args.counters else None
    if counters and any(c < 0 for c in counters):
        raise InputError("start counters must be nonnegative")
    if kind == "scheme":
        sub, combo, consts = scheme_context(model)
        return sub, SchemeFactory(combo, consts, args.size or f"{args.scale}*n")
    if kind in ("demonic-opt", "angelic-opt"):
        choice, start = (demonic_opt if kind == "demonic-opt" else angelic_opt)(model)
        state = args.start or model.state_ids[start]
        return model, MdFactory(choice, state, args.size or "n", counters)
    state = args.start or model.state_ids[0]
    if kind == "md":
        raw = read_json(arg)
        vec = []
        for i, s in enumerate(model.states):
            if s.probabilistic:
                vec.append(-1)
                continue
            if s.id not in raw:
                raise InputError(f"MD strategy file has no choice for {s.id}")
            out = model.outgoing(i)
            j = raw[s.id]
            if not isinstance(j, int) or not 0 <= j < len(out):
                raise InputError(f"choice for {s.id} must be 0..{len(out) - 1}")
            vec.append(out[j])
        return model, MdFactory(tuple(vec), state, args.size or "n", counters)
    if kind == "script":
        return model, ScriptFactory(compile_script(model, read_json(arg)), state,
                                    args.size or "n", counters)
    raise InputError(f"unknown strategy {args.strategy!r}")


def cmd_simulate(args, out) -> int:
    model = resolve_model(args.model)
    sim_model, factory = _factory(args, model)
    event = SafetyEvent.parse(args.event) if args.event else None
    stats = estimate_statistics(sim_model, factory, args.n, args.trials, args.seed,
                                horizon=args.horizon, event=event, jobs=args.jobs)
    text = csv_text(stats)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    summary = {"seed": args.seed, "strategy": args.strategy, "horizon": args.horizon,
               "rows": [{"n": r.n, "mean_term": f"{float(r.mean):.6f}", "censored": r.censored}
                        for r in stats.records]}
    pts = tail_points(stats.points(), args.fit_from)
    if len(pts) >= 3:
        summary["exponent"] = round(fit_exponent(pts), 6)
        summary["fit_points"] = [n for n, _ in pts]
    if event is not None:
        rows = [(r.n, r.event_freq, r.event_ci) for r in stats.records]
        summary["event"] = event.kind + ":" + event.expr
        summary["event_nondecreasing"] = nondecreasing_within_ci(rows)
    if not args.out:
        out.write(text)
    out.write(render(summary, args.format) + "\n")
    return EXIT_OK


# -- parser ------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="vassterm", description="Termination complexity of VASS MDPs.")
    p.add_argument("--format", choices=("text", "canonical"), default="text")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for simulation")
    # the global flags are also accepted after the subcommand
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("text", "canonical"), default=argparse.SUPPRESS)
    common.add_argument("--jobs", type=int, default=argparse.SUPPRESS)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("analyze", parents=[common], help="decide linear termination")
    a.add_argument("model")
    a.add_argument("--mode", choices=("demonic", "angelic"), default="demonic")
    a.add_argument("--emit-certificate", metavar="PATH")
    a.set_defaults(run=cmd_analyze)

    c = sub.add_parser("certify", parents=[common], help="check a ranking certificate")
    c.add_argument("model")
    c.add_argument("certificate")
    c.set_defaults(run=cmd_certify)

    m = sub.add_parser("mec", parents=[common], help="MEC decomposition and structure")
    m.add_argument("model")
    m.set_defaults(run=cmd_mec)

    i = sub.add_parser("increments", parents=[common], help="enumerate increments of MD strategies")
    i.add_argument("model")
    i.add_argument("--cap", type=int, default=10 ** 6)
    i.set_defaults(run=cmd_increments)

    s = sub.add_parser("scheme", parents=[common], help="combination, constants and scheme skeleton")
    s.add_argument("model")
    s.add_argument("--n", type=int, required=True)
    s.set_defaults(run=cmd_scheme)

    r = sub.add_parser("simulate", parents=[common], help="Monte-Carlo termination statistics")
    r.add_argument("model")
    r.add_argument("--strategy", required=True,
                   help="md:<file> | scheme | script:<file> | angelic-opt | demonic-opt")
    r.add_argument("--n", type=_int_list, required=True, help="grid, e.g. 100,200,400")
    r.add_argument("--trials", type=int, default=100)
    r.add_argument("--seed", type=int, required=True)
    r.add_argument("--event", help="term:<expr> or msafe:<expr> over n, L, N")
    r.add_argument("--out", help="CSV path (default: standard output)")
    r.add_argument("--scale", type=int, default=8, help="scheme start size factor r")
    r.add_argument("--size", help="start counter expression over n and L")
    r.add_argument("--start", help="start state (MD and script strategies)")
    r.add_argument("--counters", help="explicit start counters, e.g. 0,8")
    r.add_argument("--horizon", default="64*n**2", help="horizon expression over n, L, N")
    r.add_argument("--fit-from", type=int, help="fit the exponent on n >= this value")
    r.set_defaults(run=cmd_simulate)
    return p


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    try:
        return args.run(args, out)
    except (InputError, ModelError, ScriptError, ResourceLimit, SimulationError,
            ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
