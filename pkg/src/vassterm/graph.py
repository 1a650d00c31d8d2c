"""MEC decomposition, structural classification and almost-sure reachability."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

import networkx as nx

from .linalg import solve
from .model import VassMdp


class StructureTag(str, Enum):
    STRONGLY_CONNECTED = "StronglyConnected"
    DAG_LIKE = "DagLike"
    GENERAL = "General"


class NotAlmostSurelyReachable(Exception):
    def __init__(self, state: str, target: str):
        super().__init__(f"state {state} cannot reach {target} with probability 1")
        self.state = state
        self.target = target


@dataclass(frozen=True)
class MecDecomposition:
    mecs: tuple            # tuple of frozensets of state ids, ordered by first member
    transient: frozenset
    mec_graph: frozenset   # (i, j) pairs, i != j, j reachable from i
    self_reentrant: frozenset

    def mec_of(self, state: str):
        return next((i for i, m in enumerate(self.mecs) if state in m), None)


@dataclass(frozen=True)
class StructureClass:
    tag: StructureTag
    bottom: frozenset
    cycle: tuple | None = None  # MEC indices of a witnessing cycle for General


@dataclass(frozen=True)
class ReachStrategy:
    target: str
    choice: dict           # nondeterministic state id -> transition index
    expected_steps: dict   # state id -> Fraction
    expected_change: dict  # state id -> tuple of Fraction


def sccs(nodes, edges) -> list:
    g = nx.DiGraph()
    g.add_nodes_from(nodes)
    g.add_edges_from(edges)
    return [frozenset(c) for c in nx.strongly_connected_components(g)]


def is_strongly_connected(model: VassMdp) -> bool:
    n = len(model.states)
    edges = [(model.source_index(k), model.target_index(k)) for k in range(len(model.transitions))]
    return len(sccs(range(n), edges)) == 1


def _mec_indices(model: VassMdp, candidate=None) -> list:
    """MECs (as sets of state indices) of the sub-MDP on ``candidate``."""
    alive = set(range(len(model.states))) if candidate is None else set(candidate)
    allowed = {s: [k for k in model.outgoing(s)] for s in alive}
    while True:
        edges = [(s, model.target_index(k)) for s in alive for k in allowed[s]
                 if model.target_index(k) in alive]
        comp = {}
        for c in sccs(alive, edges):
            for s in c:
                comp[s] = c
        changed = False
        for s in sorted(alive):
            c = comp[s]
            inside = [k for k in allowed[s] if model.target_index(k) in c]
            if model.is_prob(s):
                if len(inside) != len(model.outgoing(s)):
                    alive.discard(s)
                    changed = True
            else:
                if not inside:
                    alive.discard(s)
                    changed = True
                elif len(inside) != len(allowed[s]):
                    allowed[s] = inside
                    changed = True
        if not changed:
            break
    result = []
    seen = set()
    for s in sorted(alive):
        if s in seen:
            continue
        c = comp[s]
        seen |= c
        result.append(frozenset(c))
    return result


def mec_decomposition(model: VassMdp) -> MecDecomposition:
    ids = model.state_ids
    mecs_idx = sorted(_mec_indices(model), key=min)
    mecs = tuple(frozenset(ids[i] for i in m) for m in mecs_idx)
    members = set().union(*mecs_idx) if mecs_idx else set()
    transient = frozenset(ids[i] for i in range(len(ids)) if i not in members)

    g = nx.DiGraph()
    g.add_nodes_from(range(len(ids)))
    g.add_edges_from((model.source_index(k), model.target_index(k)) for k in range(len(model.transitions)))
    reach = {s: nx.descendants(g, s) | {s} for s in range(len(ids))}
    edges, reentrant = set(), set()
    for i, m in enumerate(mecs_idx):
        from_m = set().union(*(reach[s] for s in m))
        for j, m2 in enumerate(mecs_idx):
            if i != j and from_m & m2:
                edges.add((i, j))
        # leave m to an outside state and come back
        exits = {model.target_index(k) for s in m for k in model.outgoing(s)} - m
        if any(reach[x] & m for x in exits):
            reentrant.add(i)
    return MecDecomposition(mecs, transient, frozenset(edges), frozenset(reentrant))


def classify_structure(model: VassMdp, decomp: MecDecomposition) -> StructureClass:
    n = len(decomp.mecs)
    bottom = frozenset(i for i in range(n) if not any(a == i for a, _ in decomp.mec_graph))
    if n == 1 and len(decomp.mecs[0]) == len(model.states):
        return StructureClass(StructureTag.STRONGLY_CONNECTED, bottom)
    # mec_graph is transitively closed, so any cycle shows up as a 2-cycle
    for i, j in sorted(decomp.mec_graph):
        if i < j and (j, i) in decomp.mec_graph:
            return StructureClass(StructureTag.GENERAL, bottom, (i, j, i))
    return StructureClass(StructureTag.DAG_LIKE, bottom)


def format_cycle(decomp: MecDecomposition, cycle) -> str:
    return "→".join("{" + ",".join(sorted(decomp.mecs[i])) + "}" for i in cycle)


# -- almost-sure reachability ----------------------------------------------------

def almost_sure_set(model: VassMdp, target: int) -> set:
    """States from which some strategy reaches ``target`` with probability 1."""
    alive = set(range(len(model.states)))
    while True:
        # prune states that cannot stay inside alive
        stable = False
        while not stable:
            stable = True
            for s in sorted(alive):
                if s == target:
                    continue
                tg = [model.target_index(k) for k in model.outgoing(s)]
                if model.is_prob(s):
                    ok = all(t in alive for t in tg)
                else:
                    ok = any(t in alive for t in tg)
                if not ok:
                    alive.discard(s)
                    stable = False
        reached = _backward(model, target, alive)
        if reached == alive:
            return alive
        alive = reached


def _backward(model: VassMdp, target: int, alive: set) -> set:
    reached = {target}
    frontier = [target]
    preds = {}
    for k in range(len(model.transitions)):
        s, t = model.source_index(k), model.target_index(k)
        if s in alive and t in alive:
            preds.setdefault(t, set()).add(s)
    while frontier:
        x = frontier.pop()
        for p in preds.get(x, ()):
            if p not in reached:
                reached.add(p)
                frontier.append(p)
    return reached


def _evaluate(model: VassMdp, target: int, states: list, choice: dict):
    """Expected steps and counter change to reach ``target`` under ``choice``."""
    pos = {s: i for i, s in enumerate(states)}
    n = len(states)
    d = model.dimension
    a = [[Fraction(0)] * n for _ in range(n)]
    b = []
    for s in states:
        i = pos[s]
        a[i][i] += 1
        if s == target:
            b.append((Fraction(0),) * (d + 1))
            continue
        ks = [choice[s]] if not model.is_prob(s) else list(model.outgoing(s))
        rhs = [Fraction(1)] + [Fraction(0)] * d
        for k in ks:
            p = model.prob(k) if model.is_prob(s) else Fraction(1)
            t = model.target_index(k)
            a[i][pos[t]] -= p
            for c, u in enumerate(model.label(k)):
                rhs[c + 1] += p * u
        b.append(tuple(rhs))
    sol = solve(a, b)
    return {s: sol[pos[s]][0] for s in states}, {s: sol[pos[s]][1:] for s in states}


def reach_strategy(model: VassMdp, target: str) -> ReachStrategy:
    """MD strategy minimising the expected hitting time of ``target``.

    Policy iteration from a proper initial policy; values are exact.  Among
    optimal transitions the first in declaration order is chosen.
    """
    ids = model.state_ids
    t_idx = model.index(target)
    good = almost_sure_set(model, t_idx)
    for s in range(len(ids)):
        if s not in good:
            raise NotAlmostSurelyReachable(ids[s], target)
    states = list(range(len(ids)))

    # proper initial policy: step to a state strictly closer in graph distance
    g = nx.DiGraph()
    g.add_nodes_from(states)
    g.add_edges_from((model.source_index(k), model.target_index(k)) for k in range(len(model.transitions)))
    dist = nx.single_source_shortest_path_length(g.reverse(copy=False), t_idx)
    choice = {}
    for s in model.nondet:
        if s == t_idx:
            continue
        choice[s] = min((k for k in model.outgoing(s) if model.target_index(k) in dist),
                        key=lambda k: (dist[model.target_index(k)], k))

    def q(s, k, steps):
        return 1 + steps[model.target_index(k)]

    while True:
        steps, _ = _evaluate(model, t_idx, states, choice)
        improved = False
        for s in choice:
            best = min(model.outgoing(s), key=lambda k: (q(s, k, steps), k))
            if q(s, best, steps) < q(s, choice[s], steps):
                choice[s] = best
                improved = True
        if not improved:
            break
    for s in choice:
        opt = min(q(s, k, steps) for k in model.outgoing(s))
        choice[s] = next(k for k in model.outgoing(s) if q(s, k, steps) == opt)
    steps, change = _evaluate(model, t_idx, states, choice)
    return ReachStrategy(
        target,
        {ids[s]: k for s, k in choice.items()},
        {ids[s]: steps[s] for s in states},
        {ids[s]: change[s] for s in states},
    )
