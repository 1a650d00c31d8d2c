"""Seeded random VASS MDPs for oracle comparisons."""

from __future__ import annotations

import random
from fractions import Fraction

from .model import Kind, State, Transition, VassMdp


def _probabilities(rng: random.Random, k: int, max_den: int) -> list:
    den = rng.randint(k, max(k, max_den))
    cuts = sorted(rng.sample(range(1, den), k - 1)) if k > 1 else []
    parts = [b - a for a, b in zip([0] + cuts, cuts + [den])]
    return [Fraction(p, den) for p in parts]


def random_model(rng: random.Random, max_states: int = 5, max_dim: int = 3, max_update: int = 2,
                 max_den: int = 4, max_out: int = 3, strongly_connected: bool = True) -> VassMdp:
    """A random model; strong connectivity comes from a random Hamiltonian cycle."""
    n = rng.randint(1, max_states)
    d = rng.randint(1, max_dim)
    ids = [f"s{i}" for i in range(n)]
    kinds = [rng.choice((Kind.NONDET, Kind.PROB)) for _ in range(n)]
    order = ids[:]
    rng.shuffle(order)
    succ = {order[i]: order[(i + 1) % n] for i in range(n)}
    transitions = []
    for i, sid in enumerate(ids):
        k = rng.randint(1, max_out)
        targets = [rng.choice(ids) for _ in range(k)]
        if strongly_connected:
            targets[0] = succ[sid]
        probs = _probabilities(rng, k, max_den) if kinds[i] is Kind.PROB else [None] * k
        for t, p in zip(targets, probs):
            upd = tuple(rng.randint(-max_update, max_update) for _ in range(d))
            transitions.append(Transition(sid, upd, t, p))
    return VassMdp(d, tuple(State(s, k) for s, k in zip(ids, kinds)), tuple(transitions))


def strongly_connected_corpus(count: int = 200, seed: int = 2024, **kw) -> list:
    rng = random.Random(seed)
    return [random_model(rng, **kw) for _ in range(count)]


def general_corpus(count: int = 200, seed: int = 7, max_states: int = 6) -> list:
    rng = random.Random(seed)
    return [random_model(rng, max_states=max_states, strongly_connected=False) for _ in range(count)]
