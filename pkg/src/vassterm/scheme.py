"""Quadratic lower-bound apparatus: increment combinations, schemes and the
history-dependent strategy that follows a scheme."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .graph import reach_strategy
from .lp import EQ, GE, LinearProgram, solve_lp
from .model import VassMdp
from .oracle import MdStrategy


class SchemeError(ValueError):
    pass


@dataclass(frozen=True)
class CombinationItem:
    value: tuple
    strategy: MdStrategy
    bscc: frozenset
    coefficient: int


@dataclass(frozen=True)
class NonnegCombination:
    items: tuple

    @property
    def coefficients(self) -> tuple:
        return tuple(it.coefficient for it in self.items)

    def total(self) -> tuple:
        d = len(self.items[0].value)
        return tuple(sum((it.coefficient * it.value[c] for it in self.items), Fraction(0))
                     for c in range(d))


def nonneg_combination(increments):
    """Positive integers a_i with sum a_i * j_i >= 0, over a subset of increments.

    Accepts Increment objects (keeping strategy and BSCC) or bare vectors.
    Returns None when no such combination exists.
    """
    incs = list(increments)
    if not incs:
        return None
    values = [getattr(i, "value", i) for i in incs]
    d = len(values[0])
    lp = LinearProgram()
    a = [lp.add_var(f"a{i}") for i in range(len(incs))]
    lp.add_constraint({v: 1 for v in a}, EQ, 1)
    for c in range(d):
        lp.add_constraint({a[i]: Fraction(v[c]) for i, v in enumerate(values) if v[c]}, GE, 0)
    res = solve_lp(lp)
    if not res.ok:
        return None
    coeffs = [res[f"a{i}"] for i in range(len(incs))]
    scale = math.lcm(*(c.denominator for c in coeffs if c))
    ints = [int(c * scale) for c in coeffs]
    g = math.gcd(*ints)
    items = []
    for inc, v, x in zip(incs, values, ints):
        if x:
            items.append(CombinationItem(tuple(Fraction(t) for t in v),
                                         getattr(inc, "strategy", None),
                                         getattr(inc, "bscc", frozenset()),
                                         x // g))
    return NonnegCombination(tuple(items))


# -- constants --------------------------------------------------------------------

@dataclass(frozen=True)
class SchemeConstants:
    xi: Fraction
    min_update: int
    x_min: Fraction
    lam: Fraction
    denominator: int

    def length(self, n: int) -> int:
        """Number of cycles (and per-cycle repetition unit) for parameter n."""
        return n // self.denominator


def anchors(combo: NonnegCombination) -> tuple:
    """Entry state of every segment: the smallest state id of its BSCC."""
    return tuple(min(it.bscc) for it in combo.items)


def switch_change_bound(model: VassMdp, combo: NonnegCombination, absolute: bool = False) -> Fraction:
    """Largest expected counter change of any switch the scheme can perform.

    Sources range over the BSCC being left, targets over the BSCC being
    entered.  ``absolute`` takes magnitudes instead of signed values.
    """
    ell = len(combo.items)
    if ell == 1:
        return Fraction(0)
    best = None
    cache = {}
    for i in range(ell):
        src, dst = combo.items[i].bscc, combo.items[(i + 1) % ell].bscc
        for target in sorted(dst):
            if target not in cache:
                cache[target] = reach_strategy(model, target)
            change = cache[target].expected_change
            for q in sorted(src):
                for x in change[q]:
                    v = abs(x) if absolute else x
                    best = v if best is None else max(best, v)
    return best


def scheme_constants(model: VassMdp, combo: NonnegCombination, absolute_xi: bool = False) -> SchemeConstants:
    ell = len(combo.items)
    xi = switch_change_bound(model, combo, absolute_xi)
    min_a = model.min_update()
    x_min = model.min_probability()
    q = len(model.states)
    lam = Fraction(q - 1) / x_min ** (q - 1)
    raw = ell * xi - sum(combo.coefficients) * min_a + 1
    return SchemeConstants(xi, min_a, x_min, lam, max(1, math.ceil(raw)))


# -- schemes ----------------------------------------------------------------------

@dataclass(frozen=True)
class Scheme:
    n: int
    length: int            # L(n): number of cycles
    repeats: tuple         # steps per segment, L(n) * a_i

    @property
    def ell(self) -> int:
        return len(self.repeats)

    @property
    def increment_steps(self) -> int:
        return self.length * sum(self.repeats)

    @property
    def switch_count(self) -> int:
        return self.length * self.ell

    def cycle(self) -> list:
        """Tokens of one cycle, e.g. ['j1', 'j1', 's1', 'j2', 'j2', 's2']."""
        out = []
        for i, r in enumerate(self.repeats, 1):
            out += [f"j{i}"] * r + [f"s{i}"]
        return out

    def skeleton(self) -> str:
        one = " ".join(f"j{i}^{r} s{i}" for i, r in enumerate(self.repeats, 1))
        return f"{self.length} x ({one})"


def build_scheme(combo: NonnegCombination, consts: SchemeConstants, n: int) -> Scheme:
    length = consts.length(n)
    if length < 1:
        raise SchemeError(f"n = {n} is below the denominator {consts.denominator}")
    return Scheme(n, length, tuple(length * a for a in combo.coefficients))


def replay_symbolic(combo: NonnegCombination, consts: SchemeConstants, scheme: Scheme, start) -> list:
    """Counter vectors after every segment and switch, with switches costing xi.

    Increments are applied in whole; the result is the sequence of
    expected-value checkpoints of one run of the scheme.
    """
    v = [Fraction(x) for x in start]
    points = [tuple(v)]
    for _ in range(scheme.length):
        for it, r in zip(combo.items, scheme.repeats):
            for _ in range(r):
                v = [x + y for x, y in zip(v, it.value)]
                points.append(tuple(v))
            v = [x + consts.xi for x in v]
            points.append(tuple(v))
    return points


# -- the strategy -----------------------------------------------------------------

@dataclass(frozen=True)
class Phase:
    """A stretch of play under a fixed MD choice.

    ``choice`` maps state index to transition index (probabilistic states are
    ignored).  The phase ends after ``limit`` steps or on arriving at
    ``until``, whichever comes first; ``None`` disables either bound.
    """

    choice: tuple
    limit: int | None = None
    until: int | None = None
    scheme: bool = False


def choice_vector(model: VassMdp, choice: dict) -> tuple:
    """Per-state transition index from a {state id: transition} mapping."""
    out = []
    for i, s in enumerate(model.states):
        out.append(-1 if s.probabilistic else choice.get(s.id, model.outgoing(i)[0]))
    return tuple(out)


@dataclass(frozen=True)
class SchemePlan:
    """Everything a run of the scheme strategy needs, precomputed once."""

    model: VassMdp
    scheme: Scheme
    sigma: tuple           # per segment, choice vector of sigma_i
    anchors: tuple         # per segment, anchor state index
    gamma: dict            # target state index -> choice vector reaching it

    @classmethod
    def create(cls, model: VassMdp, combo: NonnegCombination, scheme: Scheme) -> "SchemePlan":
        sigma = tuple(choice_vector(model, it.strategy.as_dict) for it in combo.items)
        anc = tuple(model.index(a) for a in anchors(combo))
        targets = set(anc)
        for it in combo.items:
            targets |= {model.index(s) for s in it.bscc}
        gamma = {}
        for t in sorted(targets):
            rs = reach_strategy(model, model.state_ids[t])
            gamma[t] = choice_vector(model, rs.choice)
        return cls(model, scheme, sigma, anc, gamma)


class SchemeStrategy:
    """Controller following a scheme, then repeating sigma_1 forever.

    Switch i of cycle 1 heads for the next anchor.  In later cycles switch i
    heads for the state where segment i+1 of the previous cycle ended, and
    the last switch of a cycle heads for where segment 1 of that cycle ended.
    """

    def __init__(self, plan: SchemePlan):
        self.plan = plan
        self.cycle = 0
        self.segment = 0
        self.mode = "start"
        self.ends = {}       # (cycle, segment) -> state index at segment end
        self.steps = 0
        self.sim_len = None
        self.log = []        # (kind, cycle, segment, step at phase start, target)

    def start(self, state: int) -> None:
        self.mode = "start"
        self.steps = 0

    def _switch_target(self) -> int:
        c, i, ell = self.cycle, self.segment, self.plan.scheme.ell
        if i == ell - 1:
            return self.ends[(c, 0)]
        if c == 0:
            return self.plan.anchors[i + 1]
        return self.ends[(c - 1, i + 1)]

    def phase(self, state: int, counters) -> Phase:
        p = self.plan
        if self.mode == "start":
            self.mode = "simulate"
            if state != p.anchors[0]:
                self.mode = "enter"
                self.log.append(("switch", 0, -1, self.steps, p.anchors[0]))
                return Phase(p.gamma[p.anchors[0]], until=p.anchors[0], scheme=True)
            self.log.append(("segment", 0, 0, self.steps, None))
        if self.mode == "done":
            return Phase(p.sigma[0])
        if self.mode == "simulate":
            r = p.scheme.repeats[self.segment]
            return Phase(p.sigma[self.segment], limit=r, scheme=True)
        target = self._switch_target() if self.mode == "switch" else p.anchors[0]
        return Phase(p.gamma[target], until=target, scheme=True)

    def finish(self, state: int, steps: int) -> None:
        p = self.plan
        self.steps += steps
        if self.mode == "enter":
            self.mode = "simulate"
            self.log.append(("segment", 0, 0, self.steps, None))
        elif self.mode == "simulate":
            self.ends[(self.cycle, self.segment)] = state
            self.mode = "switch"
            self.log.append(("switch", self.cycle, self.segment, self.steps, self._switch_target()))
        elif self.mode == "switch":
            self.segment += 1
            if self.segment == p.scheme.ell:
                self.segment = 0
                self.cycle += 1
                # segment ends from two cycles back are never consulted again
                for key in [k for k in self.ends if k[0] < self.cycle - 1]:
                    del self.ends[key]
            if self.cycle == p.scheme.length:
                self.mode = "done"
                self.sim_len = self.steps
                self.log.append(("done", self.cycle, 0, self.steps, None))
            else:
                self.mode = "simulate"
                self.log.append(("segment", self.cycle, self.segment, self.steps, None))


def scheme_strategy(model: VassMdp, combo: NonnegCombination, scheme: Scheme) -> SchemeStrategy:
    return SchemeStrategy(SchemePlan.create(model, combo, scheme))
