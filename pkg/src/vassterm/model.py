"""VASS MDP data model, model-file format and label transforms."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Iterable, Sequence


class Kind(str, Enum):
    NONDET = "n"
    PROB = "p"


class ModelError(Exception):
    """Raised for malformed or invalid model input."""


class ModelSyntaxError(ModelError):
    def __init__(self, message: str, where: str):
        super().__init__(f"{where}: {message}")
        self.where = where


class ModelValidationError(ModelError):
    def __init__(self, violations: Sequence[str]):
        super().__init__("; ".join(violations))
        self.violations = list(violations)


@dataclass(frozen=True)
class State:
    id: str
    kind: Kind

    @property
    def probabilistic(self) -> bool:
        return self.kind is Kind.PROB


@dataclass(frozen=True)
class Transition:
    source: str
    update: tuple
    target: str
    probability: Fraction | None = None


@dataclass(frozen=True)
class VassMdp:
    """A d-dimensional VASS MDP.

    States and transitions keep declaration order; integer indices used by the
    analyses are positions in these tuples.  Construction does not validate,
    so that :func:`validate` can report problems as data.
    """

    dimension: int
    states: tuple
    transitions: tuple
    _index: dict = field(init=False, repr=False, compare=False, hash=False)
    _out: tuple = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "transitions", tuple(self.transitions))
        index = {}
        for i, s in enumerate(self.states):
            index.setdefault(s.id, i)
        out = [[] for _ in self.states]
        for k, t in enumerate(self.transitions):
            if t.source in index:
                out[index[t.source]].append(k)
        object.__setattr__(self, "_index", index)
        object.__setattr__(self, "_out", tuple(tuple(o) for o in out))

    def index(self, state_id: str) -> int:
        try:
            return self._index[state_id]
        except KeyError:
            raise KeyError(f"unknown state {state_id!r}") from None

    def outgoing(self, state: int | str) -> tuple:
        """Transition indices leaving ``state`` in declaration order."""
        if isinstance(state, str):
            state = self.index(state)
        return self._out[state]

    def target_index(self, k: int) -> int:
        return self._index[self.transitions[k].target]

    def source_index(self, k: int) -> int:
        return self._index[self.transitions[k].source]

    def prob(self, k: int) -> Fraction:
        """Probability of transition ``k``; 1 for nondeterministic sources."""
        p = self.transitions[k].probability
        src = self.states[self.source_index(k)]
        return p if (src.probabilistic and p is not None) else Fraction(1)

    @property
    def state_ids(self) -> list:
        return [s.id for s in self.states]

    @property
    def nondet(self) -> list:
        return [i for i, s in enumerate(self.states) if not s.probabilistic]

    def is_prob(self, i: int) -> bool:
        return self.states[i].probabilistic

    def successors(self, i: int) -> set:
        return {self.target_index(k) for k in self._out[i]}

    def label(self, k: int):
        return self.transitions[k].update

    def min_update(self) -> int:
        return min(min(t.update) for t in self.transitions)

    def min_probability(self) -> Fraction:
        probs = [self.prob(k) for k in range(len(self.transitions))
                 if self.is_prob(self.source_index(k))]
        return min(probs, default=Fraction(1))


@dataclass(frozen=True)
class ScalarMdp:
    """Same graph as a VassMdp but with one rational label per transition."""

    base: VassMdp
    labels: tuple

    @property
    def states(self):
        return self.base.states

    @property
    def transitions(self):
        return self.base.transitions

    def label(self, k: int) -> Fraction:
        return self.labels[k]


@dataclass(frozen=True)
class Config:
    state: str
    counters: tuple

    @property
    def terminal(self) -> bool:
        return any(c < 0 for c in self.counters)

    @property
    def size(self) -> int:
        return max((abs(c) for c in self.counters), default=0)


# -- validation ---------------------------------------------------------------

def validate(model: VassMdp) -> list:
    """Return human-readable invariant violations (empty when valid)."""
    problems = []
    if not isinstance(model.dimension, int) or model.dimension < 1:
        problems.append(f"dimension must be a positive integer, got {model.dimension!r}")
    if not model.states:
        problems.append("model has no states")
    seen = set()
    for s in model.states:
        if s.id in seen:
            problems.append(f"duplicate state id {s.id}")
        seen.add(s.id)
    for k, t in enumerate(model.transitions):
        where = f"transition {k} ({t.source}->{t.target})"
        if t.source not in seen:
            problems.append(f"{where}: unknown source state {t.source}")
            continue
        if t.target not in seen:
            problems.append(f"{where}: unknown target state {t.target}")
        if len(t.update) != model.dimension:
            problems.append(f"{where}: update has length {len(t.update)}, expected {model.dimension}")
        src = model.states[model.index(t.source)]
        if src.probabilistic:
            if t.probability is None:
                problems.append(f"{where}: missing probability on probabilistic transition")
            elif t.probability <= 0 or t.probability > 1:
                problems.append(f"{where}: probability {t.probability} outside (0,1]")
        elif t.probability is not None:
            problems.append(f"{where}: probability on nondeterministic transition")
    for i, s in enumerate(model.states):
        if s.id not in model._index or model._index[s.id] != i:
            continue
        out = model.outgoing(i)
        if not out:
            problems.append(f"state {s.id} has no outgoing transition")
        elif s.probabilistic:
            probs = [model.transitions[k].probability for k in out]
            if all(p is not None for p in probs) and sum(probs) != 1:
                problems.append(f"state {s.id}: probabilities sum ≠ 1 (sum is {sum(probs)})")
    return problems


# -- model file format ----------------------------------------------------------

def _parse_probability(value, where: str) -> Fraction:
    if not isinstance(value, str):
        raise ModelSyntaxError(f"probability must be a string 'a/b', got {value!r}", where)
    text = value.strip()
    num, sep, den = text.partition("/")
    if not num.isdigit() or (sep and not den.isdigit()):
        raise ModelSyntaxError(f"malformed probability {value!r}", where)
    d = int(den) if sep else 1
    if int(num) <= 0 or d <= 0:
        raise ModelSyntaxError(f"probability {value!r} must use positive integers", where)
    return Fraction(int(num), d)


def from_dict(data) -> VassMdp:
    if not isinstance(data, dict):
        raise ModelSyntaxError("top level must be an object", "$")
    for key in ("dimension", "states", "transitions"):
        if key not in data:
            raise ModelSyntaxError(f"missing key {key!r}", "$")
    d = data["dimension"]
    if not isinstance(d, int) or isinstance(d, bool):
        raise ModelSyntaxError("dimension must be an integer", "$.dimension")
    states = []
    for i, s in enumerate(data["states"]):
        where = f"$.states[{i}]"
        if not isinstance(s, dict) or "id" not in s or "kind" not in s:
            raise ModelSyntaxError("state needs 'id' and 'kind'", where)
        if s["kind"] not in ("n", "p"):
            raise ModelSyntaxError(f"kind must be 'n' or 'p', got {s['kind']!r}", where)
        states.append(State(str(s["id"]), Kind(s["kind"])))
    transitions = []
    for i, t in enumerate(data["transitions"]):
        where = f"$.transitions[{i}]"
        if not isinstance(t, dict):
            raise ModelSyntaxError("transition must be an object", where)
        for key in ("from", "to", "update"):
            if key not in t:
                raise ModelSyntaxError(f"missing key {key!r}", where)
        upd = t["update"]
        if not isinstance(upd, list) or not all(isinstance(x, int) and not isinstance(x, bool) for x in upd):
            raise ModelSyntaxError("update must be a list of integers", where + ".update")
        prob = _parse_probability(t["prob"], where + ".prob") if "prob" in t else None
        transitions.append(Transition(str(t["from"]), tuple(upd), str(t["to"]), prob))
    return VassMdp(d, tuple(states), tuple(transitions))


def parse_model(text: str) -> VassMdp:
    """Parse and validate a model file."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelSyntaxError(exc.msg, f"line {exc.lineno} column {exc.colno}") from None
    model = from_dict(data)
    problems = validate(model)
    if problems:
        raise ModelValidationError(problems)
    return model


def to_dict(model: VassMdp) -> dict:
    trans = []
    for t in model.transitions:
        entry = {"from": t.source, "update": list(t.update), "to": t.target}
        if t.probability is not None:
            p = t.probability
            entry["prob"] = f"{p.numerator}/{p.denominator}"
        trans.append(entry)
    return {
        "dimension": model.dimension,
        "states": [{"id": s.id, "kind": s.kind.value} for s in model.states],
        "transitions": trans,
    }


def serialize_model(model: VassMdp) -> str:
    return json.dumps(to_dict(model), separators=(",", ":"))


def model_digest(model: VassMdp) -> str:
    return hashlib.sha256(serialize_model(model).encode()).hexdigest()


def load_model(path) -> VassMdp:
    with open(path, encoding="utf-8") as fh:
        return parse_model(fh.read())


def build(dimension: int, states: Iterable, transitions: Iterable) -> VassMdp:
    """Convenience constructor from plain tuples.

    ``states`` holds ``(id, "n"|"p")`` pairs, ``transitions`` holds
    ``(source, update, target)`` or ``(source, update, target, prob)``; a
    probability may be a Fraction, int or ``"a/b"`` string.
    """
    st = tuple(State(i, Kind(k)) for i, k in states)
    tr = []
    for t in transitions:
        src, upd, dst = t[:3]
        p = t[3] if len(t) > 3 else None
        if isinstance(p, str):
            p = Fraction(p)
        elif p is not None:
            p = Fraction(p)
        tr.append(Transition(src, tuple(upd), dst, p))
    return VassMdp(dimension, st, tuple(tr))


# -- label transforms -----------------------------------------------------------

def project_counter(model: VassMdp, j: int) -> VassMdp:
    """One-dimensional copy keeping only counter ``j`` (1-based)."""
    if not 1 <= j <= model.dimension:
        raise IndexError(f"counter index {j} out of range 1..{model.dimension}")
    trans = tuple(Transition(t.source, (t.update[j - 1],), t.target, t.probability)
                  for t in model.transitions)
    return VassMdp(1, model.states, trans)


def weight_by(model: VassMdp, w: Sequence) -> ScalarMdp:
    if len(w) != model.dimension:
        raise ValueError(f"weight vector has length {len(w)}, expected {model.dimension}")
    w = [Fraction(x) for x in w]
    labels = tuple(sum((Fraction(u) * x for u, x in zip(t.update, w)), Fraction(0))
                   for t in model.transitions)
    return ScalarMdp(model, labels)


def as_scalar(m) -> ScalarMdp:
    """Accept a ScalarMdp or a one-dimensional VassMdp."""
    if isinstance(m, ScalarMdp):
        return m
    if m.dimension != 1:
        raise ValueError("expected a scalar-labelled model")
    return weight_by(m, (1,))


def induced_submodel(model: VassMdp, states: Iterable) -> VassMdp:
    """Restrict ``model`` to ``states`` keeping only internal transitions."""
    keep = set(states)
    st = tuple(s for s in model.states if s.id in keep)
    tr = tuple(t for t in model.transitions if t.source in keep and t.target in keep)
    return VassMdp(model.dimension, st, tr)
