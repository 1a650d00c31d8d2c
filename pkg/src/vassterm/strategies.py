"""Concrete strategies and the picklable factories the simulator runs."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction

from .decision import NotStronglyConnected, frequency_lp
from .graph import is_strongly_connected, reach_strategy
from .lp import GE, solve_lp
from .model import Config, VassMdp
from .scheme import (NonnegCombination, Phase, SchemeConstants, SchemePlan, SchemeStrategy,
                     anchors, build_scheme, choice_vector)
from .simulator import MdPolicy, TrialSetup, evaluate


class ScriptError(Exception):
    pass


# -- optimal MD strategies from the frequency LP --------------------------------------

def _support_choice(model: VassMdp, freq: dict) -> tuple:
    """Most frequent transition at every supported nondeterministic state.

    Unsupported nondeterministic states head for the support along a
    shortest expected path.
    """
    support = {model.source_index(k) for k, f in freq.items() if f}
    choice = {}
    for q in model.nondet:
        if q in support:
            out = model.outgoing(q)
            choice[model.state_ids[q]] = max(out, key=lambda k: (freq[k], -k))
    entry = min(support)
    gamma = reach_strategy(model, model.state_ids[entry]).choice
    for q in model.nondet:
        sid = model.state_ids[q]
        if sid not in choice:
            choice[sid] = gamma[sid]
    return choice_vector(model, choice), entry


def _require_sc(model: VassMdp) -> None:
    if not is_strongly_connected(model):
        raise NotStronglyConnected("optimal strategies need a strongly connected model")


def demonic_opt(model: VassMdp) -> tuple:
    """MD strategy maximising the least per-counter drift; (choice, start index)."""
    _require_sc(model)
    lp, f = frequency_lp(model)
    t = lp.add_var("t", lower=None)
    for c in range(model.dimension):
        row = {f[k]: Fraction(u.update[c]) for k, u in enumerate(model.transitions) if u.update[c]}
        row[t] = Fraction(-1)
        lp.add_constraint(row, GE, 0)
    lp.maximize({t: 1})
    res = solve_lp(lp)
    return _support_choice(model, {k: res[f"f{k}"] for k in range(len(f))})


def angelic_opt(model: VassMdp) -> tuple:
    """MD strategy driving the most negative counter down fastest."""
    _require_sc(model)
    best = None
    for c in range(model.dimension):
        lp, f = frequency_lp(model)
        lp.minimize({f[k]: Fraction(u.update[c]) for k, u in enumerate(model.transitions)})
        res = solve_lp(lp)
        if best is None or res.value < best[0]:
            best = (res.value, {k: res[f"f{k}"] for k in range(len(f))})
    return _support_choice(model, best[1])


# -- scripts --------------------------------------------------------------------------

_ATOM = re.compile(r"^\s*([A-Za-z_]\w*|-?\d+)\s*(<=|>=|==|!=|<|>)\s*([A-Za-z_]\w*|-?\d+)\s*$")
_OPS = {"<": lambda a, b: a < b, "<=": lambda a, b: a <= b, ">": lambda a, b: a > b,
        ">=": lambda a, b: a >= b, "==": lambda a, b: a == b, "!=": lambda a, b: a != b}


@dataclass(frozen=True)
class Rule:
    state: int
    guard: tuple          # ((lhs, op, rhs), ...) with operands ("c", i) | ("v", name) | ("k", int)
    take: int             # global transition index
    sets: tuple = ()      # ((variable, operand), ...)


@dataclass(frozen=True)
class ScriptProgram:
    model: VassMdp
    rules: tuple
    variables: tuple      # ((name, initial value), ...)
    base: tuple           # default choice vector
    vectors: dict = field(default_factory=dict)  # transition index -> choice vector


def _operand(tok: str, dim: int, names: set, where: str):
    if re.fullmatch(r"-?\d+", tok):
        return ("k", int(tok))
    m = re.fullmatch(r"c(\d+)", tok)
    if m:
        i = int(m.group(1))
        if not 1 <= i <= dim:
            raise ScriptError(f"{where}: counter {tok} out of range 1..{dim}")
        return ("c", i - 1)
    if tok not in names:
        raise ScriptError(f"{where}: unknown variable {tok!r}")
    return ("v", tok)


def compile_script(model: VassMdp, script) -> ScriptProgram:
    """Compile a rule list into an executable program.

    ``script`` is a mapping (or JSON text) with ``rules``: a list of
    ``{"state", "when"?, "take", "set"?}`` tried in order, and optional
    ``vars`` giving initial variable values.  ``take`` indexes the state's
    outgoing transitions from 0; ``when`` joins comparisons with ``and``.
    """
    if isinstance(script, str):
        script = json.loads(script)
    names = dict(script.get("vars", {}))
    rules = []
    for i, r in enumerate(script.get("rules", [])):
        where = f"rule {i}"
        try:
            q = model.index(str(r["state"]))
        except KeyError:
            raise ScriptError(f"{where}: unknown or missing state") from None
        if model.is_prob(q):
            raise ScriptError(f"{where}: state {r['state']} is probabilistic")
        out = model.outgoing(q)
        take = r.get("take")
        if not isinstance(take, int) or not 0 <= take < len(out):
            raise ScriptError(f"{where}: take must be 0..{len(out) - 1}")
        guard = []
        when = r.get("when", "").strip()
        for atom in (re.split(r"\s+and\s+", when) if when else []):
            m = _ATOM.match(atom)
            if not m:
                raise ScriptError(f"{where}: cannot parse condition {atom!r}")
            guard.append((_operand(m.group(1), model.dimension, set(names), where), m.group(2),
                          _operand(m.group(3), model.dimension, set(names), where)))
        sets = tuple((name, _operand(str(val), model.dimension, set(names), where))
                     for name, val in r.get("set", {}).items())
        for name, _ in sets:
            if name not in names:
                raise ScriptError(f"{where}: assignment to undeclared variable {name!r}")
        rules.append(Rule(q, tuple(guard), out[take], sets))
    base = choice_vector(model, {})
    vectors = {}
    for r in rules:
        vec = list(base)
        vec[r.state] = r.take
        vectors[r.take] = tuple(vec)
    return ScriptProgram(model, tuple(rules), tuple(names.items()), base, vectors)


class ScriptedStrategy:
    sim_len = None

    def __init__(self, program: ScriptProgram):
        self.program = program
        self.vars = dict(program.variables)

    def start(self, state: int) -> None:
        self.vars = dict(self.program.variables)

    def _value(self, operand, counters):
        kind, x = operand
        if kind == "c":
            return counters[x]
        if kind == "v":
            return self.vars[x]
        return x

    def phase(self, state: int, counters):
        p = self.program
        if p.model.is_prob(state):
            return Phase(p.base, limit=1)
        for r in p.rules:
            if r.state == state and all(_OPS[op](self._value(a, counters), self._value(b, counters))
                                        for a, op, b in r.guard):
                for name, operand in r.sets:
                    self.vars[name] = self._value(operand, counters)
                return Phase(p.vectors[r.take], limit=1)
        raise ScriptError(f"no rule fires at state {p.model.state_ids[state]} with counters {tuple(counters)}")

    def finish(self, state: int, steps: int) -> None:
        pass


# -- factories -------------------------------------------------------------------------

def _counters(model: VassMdp, size: str, counters, variables: dict) -> tuple:
    if counters is not None:
        return tuple(counters)
    n_size = int(evaluate(size, variables))
    return (n_size,) * model.dimension


@dataclass(frozen=True)
class MdFactory:
    """Fixed MD choice vector, started at ``state`` with every counter = size(n)."""

    choice: tuple
    state: str
    size: str = "n"
    counters: tuple | None = None

    def __call__(self, model: VassMdp, n: int) -> TrialSetup:
        variables = {"n": n}
        start = Config(self.state, _counters(model, self.size, self.counters, variables))
        variables["N"] = max(start.counters)
        choice = self.choice
        return TrialSetup(lambda: MdPolicy(choice), start, variables)


@dataclass(frozen=True)
class ScriptFactory:
    program: ScriptProgram
    state: str
    size: str = "n"
    counters: tuple | None = None

    def __call__(self, model: VassMdp, n: int) -> TrialSetup:
        variables = {"n": n}
        start = Config(self.state, _counters(model, self.size, self.counters, variables))
        variables["N"] = max(start.counters)
        program = self.program
        return TrialSetup(lambda: ScriptedStrategy(program), start, variables)


@dataclass(frozen=True)
class SchemeFactory:
    """The scheme strategy for parameter n, started at the first anchor.

    ``size`` gives the start counters in terms of n and L (e.g. ``8*n`` or
    ``ceil(n**1.2)``).
    """

    combo: NonnegCombination
    consts: SchemeConstants
    size: str = "8*n"

    def __call__(self, model: VassMdp, n: int) -> TrialSetup:
        scheme = build_scheme(self.combo, self.consts, n)
        plan = SchemePlan.create(model, self.combo, scheme)
        variables = {"n": n, "L": scheme.length}
        size = int(evaluate(self.size, variables))
        variables["N"] = size
        start = Config(anchors(self.combo)[0], (size,) * model.dimension)
        return TrialSetup(lambda: SchemeStrategy(plan), start, variables, scheme=True)


def size_for_epsilon(eps: float) -> str:
    """Start-size expression n^(1+gamma) with gamma = eps/(3-eps)."""
    gamma = eps / (3 - eps)
    return f"ceil(n**{1 + gamma!r})"


def gamma_for_epsilon(eps: float) -> float:
    return eps / (3 - eps)


def ceil_pow(n: int, power: float) -> int:
    return math.ceil(n ** power)
