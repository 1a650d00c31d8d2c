"""Brute-force ground truth: MD strategies, their BSCCs and increments.

Exponential in the number of nondeterministic states; meant for tests and
small models, not for the polynomial decision path.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

from .graph import sccs
from .linalg import solve
from .lp import LinearProgram, solve_lp
from .model import VassMdp

DEFAULT_CAP = 10 ** 6


class ResourceLimit(Exception):
    pass


@dataclass(frozen=True)
class MdStrategy:
    choice: tuple  # ((state id, transition index), ...) in state declaration order

    @property
    def as_dict(self) -> dict:
        return dict(self.choice)

    def __getitem__(self, state_id: str) -> int:
        return self.as_dict[state_id]


@dataclass(frozen=True)
class Increment:
    value: tuple
    strategy: MdStrategy
    bscc: frozenset
    stationary: tuple = ()  # ((state id, probability), ...)


def strategy_count(model: VassMdp) -> int:
    return math.prod(len(model.outgoing(s)) for s in model.nondet)


def enumerate_md_strategies(model: VassMdp, cap: int = DEFAULT_CAP) -> list:
    count = strategy_count(model)
    if count > cap:
        raise ResourceLimit(f"{count} MD strategies exceed the cap of {cap}")
    nd = model.nondet
    ids = model.state_ids
    return [MdStrategy(tuple(zip((ids[s] for s in nd), pick)))
            for pick in itertools.product(*(model.outgoing(s) for s in nd))]


def chain_moves(model: VassMdp, strategy: MdStrategy) -> dict:
    """State index -> [(transition index, probability)] under ``strategy``."""
    chosen = strategy.as_dict
    moves = {}
    for i, s in enumerate(model.states):
        if s.probabilistic:
            moves[i] = [(k, model.prob(k)) for k in model.outgoing(i)]
        else:
            moves[i] = [(chosen[s.id], Fraction(1))]
    return moves


def bsccs(model: VassMdp, moves: dict) -> list:
    edges = [(s, model.target_index(k)) for s, mv in moves.items() for k, _ in mv]
    out = []
    for comp in sccs(moves.keys(), edges):
        if all(model.target_index(k) in comp for s in comp for k, _ in moves[s]):
            out.append(comp)
    return sorted(out, key=min)


def stationary(model: VassMdp, moves: dict, comp) -> dict:
    """Exact stationary distribution of the closed class ``comp``."""
    states = sorted(comp)
    pos = {s: i for i, s in enumerate(states)}
    n = len(states)
    flow = [[Fraction(0)] * n for _ in range(n)]  # flow[t][s] = P(s -> t)
    for s in states:
        for k, p in moves[s]:
            flow[pos[model.target_index(k)]][pos[s]] += p
    a = []
    for t in range(n - 1):
        row = list(flow[t])
        row[t] -= 1
        a.append(row)
    a.append([Fraction(1)] * n)
    eta = solve(a, [Fraction(0)] * (n - 1) + [Fraction(1)])
    return {s: eta[pos[s]] for s in states}


def bscc_increments(model: VassMdp, strategy: MdStrategy) -> list:
    moves = chain_moves(model, strategy)
    ids = model.state_ids
    out = []
    for comp in bsccs(model, moves):
        eta = stationary(model, moves, comp)
        value = [Fraction(0)] * model.dimension
        for s in comp:
            for k, p in moves[s]:
                w = eta[s] * p
                for c, u in enumerate(model.label(k)):
                    value[c] += w * u
        out.append(Increment(tuple(value), strategy, frozenset(ids[s] for s in comp),
                             tuple((ids[s], eta[s]) for s in sorted(comp))))
    return out


def increments_with_witnesses(model: VassMdp, cap: int = DEFAULT_CAP) -> list:
    """One Increment per distinct value, first witness in enumeration order."""
    seen = {}
    for sigma in enumerate_md_strategies(model, cap):
        for inc in bscc_increments(model, sigma):
            seen.setdefault(inc.value, inc)
    return list(seen.values())


def all_increments(model: VassMdp, cap: int = DEFAULT_CAP) -> set:
    return {inc.value for inc in increments_with_witnesses(model, cap)}


def separating_normal_bruteforce(increments, d: int):
    """Some w with w >= 1 and i.w <= -1 for every increment, else None."""
    incs = list(increments)
    if not incs:
        raise ValueError("need at least one increment")
    lp = LinearProgram()
    ws = [lp.add_var(f"w{i}", lower=1) for i in range(d)]
    for inc in incs:
        lp.add_constraint({w: inc[c] for c, w in enumerate(ws)}, "<=", -1)
    lp.minimize({w: 1 for w in ws})
    res = solve_lp(lp)
    if not res.ok:
        return None
    return tuple(res[f"w{i}"] for i in range(d))
