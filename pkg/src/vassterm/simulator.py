"""Monte-Carlo execution of strategies on VASS MDPs.

Randomness comes from numpy's counter-based Philox generator.  Every trial
owns the substream keyed by ``(seed, n, trial)``, so serial and parallel
runs draw identical numbers.
"""

from __future__ import annotations

import ast
import math
import operator
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .model import Config, VassMdp
from .scheme import Phase

BLOCK = 4096
Z95 = 1.959963984540054


class SimulationError(Exception):
    pass


class EventError(SimulationError):
    pass


def trial_generator(seed: int, n: int, trial: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, n, trial])))


# -- compiled model ----------------------------------------------------------------

class Compiled:
    """Flat lookup tables used by the inner simulation loop."""

    def __init__(self, model: VassMdp):
        self.model = model
        self.dim = model.dimension
        self.target = [model.target_index(k) for k in range(len(model.transitions))]
        self.deltas = [tuple((c, u) for c, u in enumerate(t.update) if u) for t in model.transitions]
        self.is_prob = [s.probabilistic for s in model.states]
        self.table = []
        for i, s in enumerate(model.states):
            if not s.probabilistic:
                self.table.append(None)
                continue
            acc, rows = Fraction(0), []
            out = model.outgoing(i)
            for j, k in enumerate(out):
                acc += model.prob(k)
                rows.append((1.0 if j == len(out) - 1 else float(acc), k))
            self.table.append(tuple(rows))


_COMPILED = {}


def compiled(model: VassMdp) -> Compiled:
    key = id(model)
    hit = _COMPILED.get(key)
    if hit is None or hit.model is not model:
        hit = Compiled(model)
        _COMPILED[key] = hit
    return hit


# -- strategies ----------------------------------------------------------------------

class MdPolicy:
    """Memoryless deterministic play, optionally stopping on arrival at a state."""

    sim_len = None

    def __init__(self, choice: tuple, until: int | None = None):
        self.choice = choice
        self.until = until
        self.arrived = False

    def start(self, state: int) -> None:
        self.arrived = False

    def phase(self, state: int, counters):
        if self.arrived:
            return None
        return Phase(self.choice, until=self.until)

    def finish(self, state: int, steps: int) -> None:
        self.arrived = True


@dataclass(frozen=True)
class RunTrace:
    initial: Config
    term: int                 # first terminal index, or the horizon when censored
    censored: bool
    final: Config
    change: tuple             # accumulated counter change
    steps: tuple | None = None        # ((transition, counters), ...) when recorded
    sim_len: int | None = None
    scheme_low: tuple | None = None   # least accumulated change during the scheme

    @property
    def stopped(self) -> bool:
        """Ended because the strategy had nothing more to play."""
        return not self.censored and not self.final.terminal


def run_once(model: VassMdp, strategy, start: Config, horizon: int, seed=None,
             record: bool = False, rng: np.random.Generator | None = None) -> RunTrace:
    """Play ``strategy`` from ``start`` for at most ``horizon`` steps."""
    if horizon < 1:
        raise SimulationError("horizon must be at least 1")
    cm = compiled(model)
    if len(start.counters) != cm.dim:
        raise SimulationError(f"start has {len(start.counters)} counters, model has {cm.dim}")
    if rng is None:
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    s = model.index(start.state)
    v = list(start.counters)
    v0 = tuple(v)
    target, deltas, is_prob, table = cm.target, cm.deltas, cm.is_prob, cm.table
    steps = [] if record else None
    buf, ui = [], 0
    t = 0
    low = None
    dead = any(x < 0 for x in v)
    strategy.start(s)
    while not dead and t < horizon:
        ph = strategy.phase(s, tuple(v))
        if ph is None:
            break
        choice, until = ph.choice, ph.until
        stop = horizon if ph.limit is None else min(horizon, t + ph.limit)
        track = ph.scheme
        if track and low is None:
            low = list(v)
        t0 = t
        while t < stop and s != until:
            if is_prob[s]:
                if ui == len(buf):
                    buf = rng.random(BLOCK).tolist()
                    ui = 0
                u = buf[ui]
                ui += 1
                for th, k in table[s]:
                    if u < th:
                        break
            else:
                k = choice[s]
            for c, du in deltas[k]:
                x = v[c] + du
                v[c] = x
                if x < 0:
                    dead = True
                if track and x < low[c]:
                    low[c] = x
            s = target[k]
            t += 1
            if record:
                steps.append((k, tuple(v)))
            if dead:
                break
        if dead or t >= horizon:
            break
        strategy.finish(s, t - t0)
    ids = model.state_ids
    return RunTrace(
        initial=start,
        term=t,
        censored=not dead and t >= horizon,
        final=Config(ids[s], tuple(v)),
        change=tuple(a - b for a, b in zip(v, v0)),
        steps=tuple(steps) if record else None,
        sim_len=getattr(strategy, "sim_len", None),
        scheme_low=None if low is None else tuple(a - b for a, b in zip(low, v0)),
    )


def audit_trace(model: VassMdp, trace: RunTrace) -> list:
    """Independent check of a recorded trace; returns problems found."""
    problems = []
    v = list(trace.initial.counters)
    state = trace.initial.state
    first_terminal = 0 if any(x < 0 for x in v) else None
    for j, (k, counters) in enumerate(trace.steps or (), 1):
        t = model.transitions[k]
        if t.source != state:
            problems.append(f"step {j}: transition {k} does not leave {state}")
        v = [a + b for a, b in zip(v, t.update)]
        if tuple(v) != tuple(counters):
            problems.append(f"step {j}: counters {counters} != {tuple(v)}")
        state = t.target
        if first_terminal is None and any(x < 0 for x in v):
            first_terminal = j
    if first_terminal is not None and first_terminal != trace.term:
        problems.append(f"term {trace.term} but first terminal index is {first_terminal}")
    if first_terminal is None and not (trace.censored or trace.stopped):
        problems.append("trace ends without a terminal configuration")
    return problems


# -- hitting times -------------------------------------------------------------------

def sample_hitting_times(model: VassMdp, choice: tuple, start: str, target: str,
                         trials: int, seed: int, cap: int = 10 ** 7) -> list:
    """Steps to reach ``target`` under an MD choice, ignoring counters."""
    cm = compiled(model)
    s0, goal = model.index(start), model.index(target)
    out = []
    for trial in range(trials):
        rng = trial_generator(seed, 0, trial)
        s, t = s0, 0
        buf, ui = [], 0
        while s != goal:
            if t >= cap:
                raise SimulationError("hitting time exceeded the cap")
            if cm.is_prob[s]:
                if ui == len(buf):
                    buf = rng.random(BLOCK).tolist()
                    ui = 0
                u = buf[ui]
                ui += 1
                for th, k in cm.table[s]:
                    if u < th:
                        break
            else:
                k = choice[s]
            s = cm.target[k]
            t += 1
        out.append(t)
    return out


# -- expressions -----------------------------------------------------------------------

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.FloorDiv: operator.floordiv, ast.Pow: operator.pow}
_FUNCS = {"ceil": math.ceil, "floor": math.floor, "sqrt": math.sqrt, "min": min, "max": max}


def evaluate(expr: str, variables: dict):
    """Arithmetic over numbers and named variables; nothing else is allowed."""
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"bad expression {expr!r}: {exc.msg}") from None

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return node.value
        if isinstance(node, ast.Name):
            if node.id not in variables:
                raise ValueError(f"unknown name {node.id!r} in {expr!r}")
            return variables[node.id]
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            x = ev(node.operand)
            return -x if isinstance(node.op, ast.USub) else x
        if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
                and node.func.id in _FUNCS and not node.keywords):
            return _FUNCS[node.func.id](*(ev(a) for a in node.args))
        raise ValueError(f"unsupported syntax in {expr!r}")

    return ev(tree)


@dataclass(frozen=True)
class SafetyEvent:
    """``term``: Term >= threshold.  ``msafe``: the scheme prefix is m-safe."""

    kind: str
    expr: str

    def __post_init__(self):
        if self.kind not in ("term", "msafe"):
            raise ValueError(f"unknown event kind {self.kind!r}")

    @classmethod
    def parse(cls, spec: str) -> "SafetyEvent":
        kind, sep, expr = spec.partition(":")
        if not sep or not expr.strip():
            raise ValueError(f"event must look like term:<expr> or msafe:<expr>, got {spec!r}")
        return cls(kind.strip(), expr.strip())

    def threshold(self, variables: dict):
        return evaluate(self.expr, variables)

    def holds(self, trace: RunTrace, threshold) -> bool:
        if self.kind == "term":
            return trace.term >= threshold
        if trace.scheme_low is None:
            return True
        return all(x >= -threshold for x in trace.scheme_low)


# -- statistics ----------------------------------------------------------------------------

@dataclass
class Accumulator:
    count: int = 0
    total: int = 0
    total_sq: int = 0
    values: list = field(default_factory=list)
    censored: int = 0
    events: int = 0

    def add(self, term: int, censored: bool, event: bool) -> None:
        self.count += 1
        self.total += term
        self.total_sq += term * term
        self.values.append(term)
        self.censored += censored
        self.events += event

    def merge(self, other: "Accumulator") -> "Accumulator":
        return Accumulator(self.count + other.count, self.total + other.total,
                           self.total_sq + other.total_sq, self.values + other.values,
                           self.censored + other.censored, self.events + other.events)


def quantile(sorted_values: list, q: float) -> int:
    """Nearest-rank quantile."""
    rank = max(1, math.ceil(q * len(sorted_values)))
    return sorted_values[rank - 1]


def wilson(successes: int, n: int, z: float = Z95) -> tuple:
    if n == 0:
        return (0.0, 1.0)
    p = successes / n
    den = 1 + z * z / n
    mid = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    lo = 0.0 if successes == 0 else max(0.0, mid - half)
    hi = 1.0 if successes == n else min(1.0, mid + half)
    return (lo, hi)


@dataclass(frozen=True)
class Record:
    n: int
    trials: int
    total: int
    total_sq: int
    q50: int
    q90: int
    q99: int
    censored: int
    events: int | None = None
    variables: dict = field(default_factory=dict)

    @property
    def mean(self) -> Fraction:
        return Fraction(self.total, self.trials)

    @property
    def stderr(self) -> float:
        if self.trials < 2:
            return 0.0
        var = Fraction(self.total_sq * self.trials - self.total ** 2, self.trials * (self.trials - 1))
        return math.sqrt(var / self.trials)

    @property
    def event_freq(self) -> Fraction | None:
        return None if self.events is None else Fraction(self.events, self.trials)

    @property
    def event_ci(self) -> tuple | None:
        return None if self.events is None else wilson(self.events, self.trials)

    @classmethod
    def from_acc(cls, n: int, acc: Accumulator, with_event: bool, variables: dict) -> "Record":
        vals = sorted(acc.values)
        return cls(n, acc.count, acc.total, acc.total_sq, quantile(vals, 0.5), quantile(vals, 0.9),
                   quantile(vals, 0.99), acc.censored, acc.events if with_event else None, variables)


@dataclass(frozen=True)
class SimStats:
    records: tuple
    seed: int
    horizon: str

    def points(self) -> list:
        return [(r.n, float(r.mean)) for r in self.records]


@dataclass(frozen=True)
class TrialSetup:
    make: object          # zero-argument callable returning a fresh strategy
    start: Config
    variables: dict
    scheme: bool = False


def _horizon(horizon, n: int, variables: dict) -> int:
    if isinstance(horizon, int):
        return horizon
    return int(evaluate(horizon, {**variables, "n": n}))


def _run_chunk(model, factory, n, first, last, seed, horizon, event):
    setup = factory(model, n)
    if event is not None and event.kind == "msafe" and not setup.scheme:
        raise EventError("msafe events need a scheme strategy")
    h = _horizon(horizon, n, setup.variables)
    thr = event.threshold(setup.variables) if event is not None else None
    acc = Accumulator()
    for trial in range(first, last):
        trace = run_once(model, setup.make(), setup.start, h, rng=trial_generator(seed, n, trial))
        acc.add(trace.term, trace.censored, event.holds(trace, thr) if event is not None else False)
    return acc, setup.variables


def estimate_statistics(model: VassMdp, factory, n_grid, trials: int, seed: int,
                        horizon="64*n**2", event: SafetyEvent | None = None,
                        jobs: int = 1) -> SimStats:
    """Per-n termination statistics over independent seeded trials.

    ``factory(model, n)`` returns a TrialSetup; it must be picklable when
    ``jobs > 1``.  Results do not depend on ``jobs``.
    """
    if trials < 1:
        raise SimulationError("trials must be at least 1")
    grid = list(n_grid)
    if jobs <= 1:
        parts = {n: [_run_chunk(model, factory, n, 0, trials, seed, horizon, event)] for n in grid}
    else:
        size = max(1, math.ceil(trials / jobs))
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futs = {n: [pool.submit(_run_chunk, model, factory, n, a, min(trials, a + size),
                                    seed, horizon, event)
                        for a in range(0, trials, size)] for n in grid}
            parts = {n: [f.result() for f in fs] for n, fs in futs.items()}
    records = []
    for n in grid:
        acc = Accumulator()
        for part, _ in parts[n]:
            acc = acc.merge(part)
        records.append(Record.from_acc(n, acc, event is not None, parts[n][0][1]))
    return SimStats(tuple(records), seed, str(horizon))


def estimate_event(model: VassMdp, factory, n_grid, event: SafetyEvent, trials: int,
                   seed: int, horizon="64*n**2", jobs: int = 1) -> list:
    """(n, frequency, (ci_low, ci_high)) per grid point."""
    stats = estimate_statistics(model, factory, n_grid, trials, seed, horizon, event, jobs)
    return [(r.n, r.event_freq, r.event_ci) for r in stats.records]


def nondecreasing_within_ci(rows) -> bool:
    """Each frequency is at least the previous one, or their intervals overlap."""
    for (_, f0, (lo0, hi0)), (_, f1, (lo1, hi1)) in zip(rows, rows[1:]):
        if f1 < f0 and hi1 < lo0:
            return False
    return True


# -- exponent fitting ---------------------------------------------------------------------

def fit_exponent(points) -> float:
    """Least-squares slope of log(mean) against log(n)."""
    pts = list(points)
    if len(pts) < 3:
        raise ValueError("need at least 3 points")
    if any(n <= 0 or m <= 0 for n, m in pts):
        raise ValueError("points must be positive")
    xs = [math.log(n) for n, _ in pts]
    ys = [math.log(m) for _, m in pts]
    if len(set(xs)) < 2:
        raise ValueError("need at least two distinct n")
    mx, my = sum(xs) / len(xs), sum(ys) / len(ys)
    num = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    den = sum((x - mx) ** 2 for x in xs)
    return num / den


def tail_points(points, fit_from: int | None = None) -> list:
    """The largest half of a grid, but never fewer than three points."""
    pts = sorted(points)
    if fit_from is not None:
        return [p for p in pts if p[0] >= fit_from]
    keep = max(3, math.ceil(len(pts) / 2))
    return pts[-keep:]


# -- CSV -------------------------------------------------------------------------------

CSV_COLUMNS = ("n", "trials", "mean_term", "stderr", "q50", "q90", "q99", "censored",
               "event_freq", "event_ci_low", "event_ci_high")


def csv_text(stats: SimStats) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for r in stats.records:
        if r.events is None:
            ev = ["", "", ""]
        else:
            lo, hi = r.event_ci
            ev = [f"{float(r.event_freq):.6f}", f"{lo:.6f}", f"{hi:.6f}"]
        lines.append(",".join([str(r.n), str(r.trials), f"{float(r.mean):.6f}", f"{r.stderr:.6f}",
                               str(r.q50), str(r.q90), str(r.q99), str(r.censored)] + ev))
    return "\n".join(lines) + "\n"
