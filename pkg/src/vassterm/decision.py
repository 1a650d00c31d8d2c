"""Polynomial-time termination decisions: mean-payoff LPs and verdicts."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction

from .graph import (StructureTag, classify_structure, format_cycle, is_strongly_connected,
                    mec_decomposition)
from .lp import EQ, GE, LE, LinearProgram, solve_lp
from .model import (ModelValidationError, ScalarMdp, VassMdp, induced_submodel,
                    validate, weight_by)
from .oracle import Increment, MdStrategy, bsccs, chain_moves, stationary


class NotStronglyConnected(Exception):
    pass


class VerdictTag(str, Enum):
    LINEAR = "Linear"
    NOT_LINEAR = "NotLinear"
    UNSUPPORTED = "UnsupportedStructure"


class Mode(str, Enum):
    DEMONIC = "demonic"
    ANGELIC = "angelic"


@dataclass(frozen=True)
class MeanPayoffSolution:
    value: Fraction
    potentials: dict
    direction: str  # "max" or "min"


@dataclass(frozen=True)
class RankingCertificate:
    w: tuple
    potentials: dict
    slack: Fraction = Fraction(1)


@dataclass(frozen=True)
class Verdict:
    tag: VerdictTag
    mode: Mode
    evidence: object = None
    per_mec: dict = field(default_factory=dict)
    diagnostic: str | None = None

    @property
    def linear(self) -> bool:
        return self.tag is VerdictTag.LINEAR


def _require_sc(model: VassMdp) -> None:
    if not is_strongly_connected(model):
        raise NotStronglyConnected("model is not strongly connected")


# -- mean payoff ------------------------------------------------------------------

def _mean_payoff(m: ScalarMdp, direction: str) -> MeanPayoffSolution:
    base = m.base
    _require_sc(base)
    lp = LinearProgram()
    x = lp.add_var("x", lower=None)
    lower = None if direction == "max" else 0
    z = [lp.add_var(f"z:{s.id}", lower=lower) for s in base.states]
    # max: z_q >= -x + c + z_p ; min: z_q <= -x + c + z_p
    rel = GE if direction == "max" else LE
    for q, s in enumerate(base.states):
        if s.probabilistic:
            row = {z[q]: Fraction(1), x: Fraction(1)}
            rhs = Fraction(0)
            for k in base.outgoing(q):
                p = base.prob(k)
                rhs += p * m.label(k)
                zp = z[base.target_index(k)]
                row[zp] = row.get(zp, Fraction(0)) - p
            lp.add_constraint(row, rel, rhs)
        else:
            for k in base.outgoing(q):
                row = {x: Fraction(1)}
                zp = z[base.target_index(k)]
                row[z[q]] = Fraction(1)
                row[zp] = row.get(zp, Fraction(0)) - 1
                lp.add_constraint(row, rel, m.label(k))
    if direction == "max":
        lp.minimize({x: 1})
    else:
        lp.maximize({x: 1})
    res = solve_lp(lp)
    if not res.ok:  # pragma: no cover - both LPs are always feasible and bounded
        raise ArithmeticError(f"mean-payoff LP returned {res.status}")
    pots = {s.id: res[f"z:{s.id}"] for s in base.states}
    return MeanPayoffSolution(res["x"], pots, direction)


def max_mean_payoff(m: ScalarMdp) -> MeanPayoffSolution:
    """Supremum of the expected mean payoff over strategies and start states."""
    return _mean_payoff(m, "max")


def min_mean_payoff(m: ScalarMdp) -> MeanPayoffSolution:
    """Infimum of the expected mean payoff; potentials are nonnegative."""
    return _mean_payoff(m, "min")


# -- transition frequencies -------------------------------------------------------

def frequency_lp(model: VassMdp):
    """Flow polytope of stationary transition frequencies.

    Returns the LP and the variable index of every transition.
    """
    lp = LinearProgram()
    f = [lp.add_var(f"f{k}") for k in range(len(model.transitions))]
    into = {i: [] for i in range(len(model.states))}
    for k in range(len(model.transitions)):
        into[model.target_index(k)].append(k)
    for q in range(len(model.states)):
        row = {}
        for k in into[q]:
            row[f[k]] = row.get(f[k], Fraction(0)) + 1
        for k in model.outgoing(q):
            row[f[k]] = row.get(f[k], Fraction(0)) - 1
        lp.add_constraint(row, EQ, 0)
        if model.is_prob(q):
            out = model.outgoing(q)
            for k in out[:-1]:
                row = {f[j]: -model.prob(k) for j in out}
                row[f[k]] += 1
                lp.add_constraint(row, EQ, 0)
    lp.add_constraint({v: 1 for v in f}, EQ, 1)
    return lp, f


def _drift_row(model: VassMdp, f: list, counter: int) -> dict:
    return {f[k]: Fraction(t.update[counter]) for k, t in enumerate(model.transitions)
            if t.update[counter]}


def zero_frequencies(model: VassMdp):
    """Frequencies with nonnegative drift in every counter, or None."""
    _require_sc(model)
    lp, f = frequency_lp(model)
    for c in range(model.dimension):
        lp.add_constraint(_drift_row(model, f, c), GE, 0)
    res = solve_lp(lp)
    if not res.ok:
        return None
    return {k: res[f"f{k}"] for k in range(len(f))}


def zero_achievable(model: VassMdp) -> bool:
    return zero_frequencies(model) is not None


def decompose_frequencies(model: VassMdp, freq: dict) -> list:
    """Split a stationary flow into BSCC increments of MD strategies.

    Returns ``(Increment, weight)`` pairs whose weighted flows sum to ``freq``.
    """
    ids = model.state_ids
    rest = {k: Fraction(v) for k, v in freq.items() if v}
    parts = []
    while rest:
        choice = []
        for q in model.nondet:
            out = model.outgoing(q)
            choice.append((ids[q], next((k for k in out if k in rest), out[0])))
        sigma = MdStrategy(tuple(choice))
        active = {model.source_index(k) for k in rest}
        moves = chain_moves(model, sigma)
        comp = min((c for c in bsccs(model, moves) if c <= active), key=min)
        eta = stationary(model, moves, comp)
        flow = {k: eta[s] * p for s in comp for k, p in moves[s]}
        theta = min(rest[k] / g for k, g in flow.items())
        value = [Fraction(0)] * model.dimension
        for k, g in flow.items():
            for c, u in enumerate(model.label(k)):
                value[c] += g * u
            left = rest[k] - theta * g
            if left:
                rest[k] = left
            else:
                del rest[k]
        inc = Increment(tuple(value), sigma, frozenset(ids[s] for s in comp),
                        tuple((ids[s], eta[s]) for s in sorted(comp)))
        parts.append((inc, theta))
    return parts


# -- ranking certificates ----------------------------------------------------------

def ranking_witness(model: VassMdp):
    """Joint LP for a weight vector and potentials with slack 1, or None."""
    _require_sc(model)
    d = model.dimension
    lp = LinearProgram()
    w = [lp.add_var(f"w{i}", lower=1) for i in range(d)]
    z = [lp.add_var(f"z:{s.id}") for s in model.states]

    def add(row, key, coeff):
        row[key] = row.get(key, Fraction(0)) + coeff

    for q, s in enumerate(model.states):
        if s.probabilistic:
            row = {}
            add(row, z[q], 1)
            for k in model.outgoing(q):
                p = model.prob(k)
                for c, u in enumerate(model.label(k)):
                    add(row, w[c], -p * u)
                add(row, z[model.target_index(k)], -p)
            lp.add_constraint(row, GE, 1)
        else:
            for k in model.outgoing(q):
                row = {}
                add(row, z[q], 1)
                for c, u in enumerate(model.label(k)):
                    add(row, w[c], -u)
                add(row, z[model.target_index(k)], -1)
                lp.add_constraint(row, GE, 1)
    lp.minimize({v: 1 for v in w + z})
    res = solve_lp(lp)
    if not res.ok:
        return None
    return RankingCertificate(tuple(res[f"w{i}"] for i in range(d)),
                              {s.id: res[f"z:{s.id}"] for s in model.states},
                              Fraction(1))


def certificate_violations(model: VassMdp, cert: RankingCertificate) -> list:
    """Every failed certificate condition, in a fixed order."""
    bad = []
    if len(cert.w) != model.dimension:
        return [f"w has length {len(cert.w)}, expected {model.dimension}"]
    if cert.slack < 1:
        bad.append("slack must be ≥ 1")
    for i, x in enumerate(cert.w):
        if x < 1:
            bad.append(f"w[{i + 1}] = {x} must be ≥ 1")
    z = cert.potentials
    missing = [s.id for s in model.states if s.id not in z]
    if missing:
        bad.extend(f"missing potential for state {q}" for q in missing)
        return bad

    def dot(u):
        return sum((Fraction(a) * b for a, b in zip(u, cert.w)), Fraction(0))

    for q, s in enumerate(model.states):
        if s.probabilistic:
            rhs = cert.slack + sum((model.prob(k) * (dot(model.label(k)) + z[model.transitions[k].target])
                                    for k in model.outgoing(q)), Fraction(0))
            if z[s.id] < rhs:
                bad.append(f"probabilistic state {s.id}: z = {z[s.id]} < {rhs}")
        else:
            for k in model.outgoing(q):
                t = model.transitions[k]
                rhs = cert.slack + dot(t.update) + z[t.target]
                if z[s.id] < rhs:
                    bad.append(f"transition {k} ({t.source}->{t.target}): z = {z[s.id]} < {rhs}")
    return bad


def check_ranking_certificate(model: VassMdp, cert: RankingCertificate) -> bool:
    return not certificate_violations(model, cert)


# -- verdicts ------------------------------------------------------------------------

def _validated(model: VassMdp) -> None:
    problems = validate(model)
    if problems:
        raise ModelValidationError(problems)


def _demonic_sc(model: VassMdp) -> Verdict:
    from .scheme import nonneg_combination

    cert = ranking_witness(model)
    if cert is not None:
        return Verdict(VerdictTag.LINEAR, Mode.DEMONIC, cert)
    freq = zero_frequencies(model)
    parts = decompose_frequencies(model, freq)
    combo = nonneg_combination([inc for inc, _ in parts])
    return Verdict(VerdictTag.NOT_LINEAR, Mode.DEMONIC, combo)


def decide_demonic(model: VassMdp) -> Verdict:
    _validated(model)
    decomp = mec_decomposition(model)
    cls = classify_structure(model, decomp)
    per_mec = {}
    for i, mec in enumerate(decomp.mecs):
        per_mec[i] = _demonic_sc(induced_submodel(model, mec))
    if cls.tag is StructureTag.GENERAL:
        return Verdict(VerdictTag.UNSUPPORTED, Mode.DEMONIC, None, per_mec,
                       "MEC graph cycle " + format_cycle(decomp, cls.cycle))
    bad = [i for i in per_mec if not per_mec[i].linear]
    if bad:
        return Verdict(VerdictTag.NOT_LINEAR, Mode.DEMONIC, per_mec[bad[0]].evidence, per_mec)
    evidence = per_mec[0].evidence if cls.tag is StructureTag.STRONGLY_CONNECTED else None
    return Verdict(VerdictTag.LINEAR, Mode.DEMONIC, evidence, per_mec)


def counter_min_payoffs(model: VassMdp) -> list:
    """min_mean_payoff of every unit-weight projection of a strongly connected model."""
    d = model.dimension
    return [min_mean_payoff(weight_by(model, [int(i == c) for i in range(d)]))
            for c in range(d)]


def decide_angelic(model: VassMdp) -> Verdict:
    _validated(model)
    decomp = mec_decomposition(model)
    cls = classify_structure(model, decomp)
    per_mec = {}
    for i in sorted(cls.bottom):
        sols = counter_min_payoffs(induced_submodel(model, decomp.mecs[i]))
        tag = VerdictTag.LINEAR if any(s.value < 0 for s in sols) else VerdictTag.NOT_LINEAR
        per_mec[i] = Verdict(tag, Mode.ANGELIC, tuple(sols))
    linear = all(v.linear for v in per_mec.values())
    tag = VerdictTag.LINEAR if linear else VerdictTag.NOT_LINEAR
    evidence = per_mec[0].evidence if cls.tag is StructureTag.STRONGLY_CONNECTED else None
    return Verdict(tag, Mode.ANGELIC, evidence, per_mec)
