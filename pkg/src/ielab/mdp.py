"""Tabular MDP hypotheses and exact dynamic-programming primitives.

States, actions and stages are 1-based everywhere (x in [S], a in [A],
h in [H]). All probabilities and reward values are stored as exact
`Fraction`s; every operation takes an ``exact`` flag selecting Fraction
arithmetic (for the oracle) or float arithmetic (for simulation, with
1e-12 tolerances).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, NamedTuple

import numpy as np

from .errors import CapExceeded
from .rng import sample_index

POLICY_CAP = 10**6
TRAJECTORY_CAP = 10**7

Triple = tuple[int, int, int]
TripleSet = frozenset  # of (x, a, h)


def as_fraction(v) -> Fraction:
    """Coerce a number to an exact Fraction.

    Floats are read through their shortest decimal repr, so an authored
    0.8 means exactly 4/5. Strings accept "p/q" and decimal forms.
    """
    if isinstance(v, Fraction):
        return v
    if isinstance(v, bool):
        raise TypeError("bool is not a probability")
    if isinstance(v, int):
        return Fraction(v)
    if isinstance(v, float):
        return Fraction(str(v))
    if isinstance(v, str):
        return Fraction(v)
    raise TypeError(f"cannot interpret {v!r} as a rational")


def all_triples(S: int, A: int, H: int) -> TripleSet:
    return frozenset(
        (x, a, h) for x in range(1, S + 1) for a in range(1, A + 1) for h in range(1, H + 1)
    )


def complement_triples(U: TripleSet, S: int, A: int, H: int) -> TripleSet:
    return all_triples(S, A, H) - U


@dataclass(frozen=True)
class DiscreteDist:
    """Finite discrete distribution over rational values."""

    support: tuple[Fraction, ...]
    probs: tuple[Fraction, ...]

    def __post_init__(self):
        if len(self.support) != len(self.probs) or not self.support:
            raise ValueError("support/probs length mismatch")
        if any(p < 0 for p in self.probs):
            raise ValueError("negative probability")
        if sum(self.probs) != 1:
            raise ValueError("probabilities must sum to 1 exactly")
        if len(set(self.support)) != len(self.support):
            raise ValueError("duplicate support values")

    @staticmethod
    def point(v) -> "DiscreteDist":
        return DiscreteDist((as_fraction(v),), (Fraction(1),))

    @staticmethod
    def of(pairs: Iterable[tuple]) -> "DiscreteDist":
        vs, ps = zip(*[(as_fraction(v), as_fraction(p)) for v, p in pairs])
        return DiscreteDist(tuple(vs), tuple(ps))

    def mean(self) -> Fraction:
        return sum(v * p for v, p in zip(self.support, self.probs))

    def mass(self, value) -> Fraction:
        value = as_fraction(value)
        for v, p in zip(self.support, self.probs):
            if v == value:
                return p
        return Fraction(0)

    def is_point(self) -> bool:
        return sum(1 for p in self.probs if p > 0) == 1

    def sample(self, rng) -> Fraction:
        return self.support[sample_index(self.probs, rng)]


class Step(NamedTuple):
    """One trajectory step; ``r`` is None in censored trajectories."""

    x: int
    a: int
    h: int
    r: object  # Fraction | None


@dataclass(frozen=True)
class Trajectory:
    """Raw H-step trajectory; every step carries its realized reward."""

    steps: tuple[Step, ...]

    def __post_init__(self):
        if any(s.r is None for s in self.steps):
            raise ValueError("raw trajectory has no censored rewards")

    @property
    def horizon(self) -> int:
        return len(self.steps)

    def triples(self) -> list[Triple]:
        return [(s.x, s.a, s.h) for s in self.steps]

    def reward_sum(self) -> Fraction:
        return sum(s.r for s in self.steps)


def _check_prob_vector(vec: tuple[Fraction, ...], what: str) -> None:
    if any(p < 0 for p in vec):
        raise ValueError(f"{what}: negative entry")
    if sum(vec) != 1:
        raise ValueError(f"{what}: does not sum to 1")


@dataclass(frozen=True)
class MarkovPolicy:
    """Deterministic Markov policy; actions[x-1][h-1] in [A].

    The canonical integer encoding reads the action table in row-major
    (x, h) order as base-A digits, most significant first, so encoding
    order coincides with lexicographic order of the table.
    """

    actions: tuple[tuple[int, ...], ...]
    num_actions: int

    def action(self, x: int, h: int) -> int:
        return self.actions[x - 1][h - 1]

    @property
    def encoding(self) -> int:
        code = 0
        for row in self.actions:
            for a in row:
                code = code * self.num_actions + (a - 1)
        return code

    @staticmethod
    def from_table(table, num_actions: int) -> "MarkovPolicy":
        return MarkovPolicy(tuple(tuple(row) for row in table), num_actions)

    @staticmethod
    def from_encoding(code: int, S: int, A: int, H: int) -> "MarkovPolicy":
        digits = []
        for _ in range(S * H):
            digits.append(code % A)
            code //= A
        digits.reverse()
        table = tuple(
            tuple(digits[x * H + h] + 1 for h in range(H)) for x in range(S)
        )
        return MarkovPolicy(table, A)

    def __lt__(self, other: "MarkovPolicy") -> bool:
        return self.actions < other.actions


@dataclass(frozen=True)
class TabularModel:
    """One MDP hypothesis: initial distribution, transitions, reward laws.

    ``trans[x-1][a-1][h-1]`` is the next-state probability vector; the
    stage-H row exists but only feeds the inconsequential terminal state
    (builders default it to a point mass on state 1). ``rewards`` maps the
    same index to a DiscreteDist over [0,1] supported inside the shared
    ``reward_support`` of the experiment's model class.
    """

    S: int
    A: int
    H: int
    init: tuple[Fraction, ...]
    trans: tuple  # [x][a][h] -> tuple[Fraction,...] over next states
    rewards: tuple  # [x][a][h] -> DiscreteDist
    reward_support: tuple[Fraction, ...]
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if min(self.S, self.A, self.H) < 1:
            raise ValueError("S, A, H must be positive")
        if len(self.init) != self.S:
            raise ValueError("init length != S")
        _check_prob_vector(self.init, "init")
        for x in range(self.S):
            for a in range(self.A):
                for h in range(self.H):
                    vec = self.trans[x][a][h]
                    if len(vec) != self.S:
                        raise ValueError("transition row length != S")
                    _check_prob_vector(vec, f"transitions({x+1},{a+1},{h+1})")
                    dist = self.rewards[x][a][h]
                    for v, p in zip(dist.support, dist.probs):
                        if not 0 <= v <= 1:
                            raise ValueError("reward support outside [0,1]")
                        if p > 0 and v not in self.reward_support:
                            raise ValueError("reward value outside global support")

    def transition(self, x: int, a: int, h: int) -> tuple[Fraction, ...]:
        return self.trans[x - 1][a - 1][h - 1]

    def reward_dist(self, x: int, a: int, h: int) -> DiscreteDist:
        return self.rewards[x - 1][a - 1][h - 1]

    def mean_reward(self, x: int, a: int, h: int) -> Fraction:
        key = ("mr", x, a, h)
        if key not in self._cache:
            self._cache[key] = self.reward_dist(x, a, h).mean()
        return self._cache[key]

    @property
    def is_deterministic(self) -> bool:
        if "det" not in self._cache:
            det = all(p in (0, 1) for p in self.init)
            if det:
                for x in range(self.S):
                    for a in range(self.A):
                        for h in range(self.H):
                            if any(p not in (0, 1) for p in self.trans[x][a][h]):
                                det = False
                            if not self.rewards[x][a][h].is_point():
                                det = False
            self._cache["det"] = det
        return self._cache["det"]

    def init_f(self) -> np.ndarray:
        if "init_f" not in self._cache:
            self._cache["init_f"] = np.array([float(p) for p in self.init])
        return self._cache["init_f"]

    def trans_f(self) -> np.ndarray:
        """Float transition tensor, shape (S, A, H, S)."""
        if "trans_f" not in self._cache:
            t = np.empty((self.S, self.A, self.H, self.S))
            for x in range(self.S):
                for a in range(self.A):
                    for h in range(self.H):
                        t[x, a, h] = [float(p) for p in self.trans[x][a][h]]
            self._cache["trans_f"] = t
        return self._cache["trans_f"]

    def mean_rewards_f(self) -> np.ndarray:
        """Float mean-reward tensor, shape (S, A, H)."""
        if "mr_f" not in self._cache:
            r = np.empty((self.S, self.A, self.H))
            for x in range(self.S):
                for a in range(self.A):
                    for h in range(self.H):
                        r[x, a, h] = float(self.rewards[x][a][h].mean())
            self._cache["mr_f"] = r
        return self._cache["mr_f"]


def build_model(S, A, H, init, transitions, rewards, reward_support=None, sink_state=1):
    """Construct a TabularModel from 1-based mappings.

    ``transitions``: {(x,a,h): vector} — stage-H entries may be omitted
    and default to a point mass on ``sink_state``. ``rewards``:
    {(x,a,h): DiscreteDist | value} (bare values become point masses).
    """
    init_t = tuple(as_fraction(p) for p in init)
    sink = tuple(Fraction(1) if i == sink_state - 1 else Fraction(0) for i in range(S))
    trans, rews = [], []
    support = set()
    for x in range(1, S + 1):
        tx, rx = [], []
        for a in range(1, A + 1):
            ta, ra = [], []
            for h in range(1, H + 1):
                vec = transitions.get((x, a, h))
                if vec is None:
                    if h < H:
                        raise ValueError(f"missing transition ({x},{a},{h})")
                    ta.append(sink)
                else:
                    ta.append(tuple(as_fraction(p) for p in vec))
                dist = rewards[(x, a, h)]
                if not isinstance(dist, DiscreteDist):
                    dist = DiscreteDist.point(dist)
                ra.append(dist)
                support.update(v for v, p in zip(dist.support, dist.probs) if p > 0)
            tx.append(tuple(ta))
            rx.append(tuple(ra))
        trans.append(tuple(tx))
        rews.append(tuple(rx))
    if reward_support is None:
        reward_support = tuple(sorted(support))
    else:
        reward_support = tuple(sorted(as_fraction(v) for v in reward_support))
    return TabularModel(S, A, H, init_t, tuple(trans), tuple(rews), reward_support)


# ---------------------------------------------------------------------------
# exact DP primitives


def _zero(exact: bool):
    return Fraction(0) if exact else 0.0


def _num(v: Fraction, exact: bool):
    return v if exact else float(v)


def policy_value(model: TabularModel, policy: MarkovPolicy, exact: bool = False):
    """E^pi[sum of rewards] by backward DP over mean rewards; in [0, H]."""
    S, H = model.S, model.H
    value = [_zero(exact)] * S  # value-to-go from stage h
    for h in range(H, 0, -1):
        nxt = []
        for x in range(1, S + 1):
            a = policy.action(x, h)
            v = _num(model.mean_reward(x, a, h), exact)
            if h < H:
                row = model.transition(x, a, h)
                v = v + sum(_num(row[y], exact) * value[y] for y in range(S))
            nxt.append(v)
        value = nxt
    return sum(_num(model.init[x], exact) * value[x] for x in range(S))


def optimal_value(model: TabularModel, exact: bool = False):
    """max over Markov policies of policy_value, by backward max-DP."""
    S, A, H = model.S, model.A, model.H
    value = [_zero(exact)] * S
    for h in range(H, 0, -1):
        nxt = []
        for x in range(1, S + 1):
            best = None
            for a in range(1, A + 1):
                v = _num(model.mean_reward(x, a, h), exact)
                if h < H:
                    row = model.transition(x, a, h)
                    v = v + sum(_num(row[y], exact) * value[y] for y in range(S))
                best = v if best is None or v > best else best
            nxt.append(best)
        value = nxt
    return sum(_num(model.init[x], exact) * value[x] for x in range(S))


def trajectory_probability(model, policy, trajectory: Trajectory, exact: bool = False):
    """Exact mass of a raw trajectory under P^pi; 0 if inconsistent with pi."""
    prob = _num(Fraction(1), exact)
    steps = trajectory.steps
    if len(steps) != model.H:
        raise ValueError("trajectory length != H")
    prob *= _num(model.init[steps[0].x - 1], exact)
    for i, s in enumerate(steps):
        if s.h != i + 1:
            raise ValueError("stages must be 1..H in order")
        if policy.action(s.x, s.h) != s.a:
            return _zero(exact)
        prob *= _num(model.reward_dist(s.x, s.a, s.h).mass(s.r), exact)
        if i + 1 < len(steps):
            prob *= _num(model.transition(s.x, s.a, s.h)[steps[i + 1].x - 1], exact)
    return prob


def sample_trajectory(model, policy, rng) -> Trajectory:
    """Roll out one trajectory; identical streams give identical output."""
    steps = []
    x = 1 + sample_index(model.init, rng)
    for h in range(1, model.H + 1):
        a = policy.action(x, h)
        r = model.reward_dist(x, a, h).sample(rng)
        steps.append(Step(x, a, h, r))
        if h < model.H:
            x = 1 + sample_index(model.transition(x, a, h), rng)
    return Trajectory(tuple(steps))


def enumerate_policies(S: int, A: int, H: int, cap: int = POLICY_CAP) -> list[MarkovPolicy]:
    """All A^(S·H) deterministic Markov policies in canonical-encoding order."""
    n = A ** (S * H)
    if n > cap:
        raise CapExceeded(f"policy space {A}^{S * H} = {n} exceeds cap {cap}")
    out = []
    for digits in itertools.product(range(1, A + 1), repeat=S * H):
        table = tuple(tuple(digits[x * H + h] for h in range(H)) for x in range(S))
        out.append(MarkovPolicy(table, A))
    return out


def enumerate_trajectories(model, policy, cap: int = TRAJECTORY_CAP) -> Iterator[tuple[Trajectory, Fraction]]:
    """Yield (trajectory, exact probability) over the support of P^pi."""
    count = 0

    def rec(h: int, x: int, prob: Fraction, steps: list):
        nonlocal count
        a = policy.action(x, h)
        rdist = model.reward_dist(x, a, h)
        for rv, rp in zip(rdist.support, rdist.probs):
            if rp == 0:
                continue
            p1 = prob * rp
            new_steps = steps + [Step(x, a, h, rv)]
            if h == model.H:
                count += 1
                if count > cap:
                    raise CapExceeded(f"trajectory enumeration exceeds cap {cap}")
                yield Trajectory(tuple(new_steps)), p1
            else:
                row = model.transition(x, a, h)
                for y in range(model.S):
                    if row[y] == 0:
                        continue
                    yield from rec(h + 1, y + 1, p1 * row[y], new_steps)

    for x0 in range(model.S):
        if model.init[x0] == 0:
            continue
        yield from rec(1, x0 + 1, model.init[x0], [])


def reach_probability(model, x: int, h: int, exact: bool = True):
    """max over policies of P^pi[x_h = x], by backward max-DP."""
    S = model.S
    g = [_num(Fraction(1 if y == x - 1 else 0), exact) for y in range(S)]
    for tau in range(h - 1, 0, -1):
        nxt = []
        for s in range(1, S + 1):
            best = None
            for a in range(1, model.A + 1):
                row = model.transition(s, a, tau)
                v = sum(_num(row[y], exact) * g[y] for y in range(S))
                best = v if best is None or v > best else best
            nxt.append(best)
        g = nxt
    return sum(_num(model.init[y], exact) * g[y] for y in range(S))


def reach_set(model, rho) -> TripleSet:
    """All (x,a,h) with reach probability >= rho (exact comparison).

    Reachability is a property of the (x,h) pair; every action at a
    reachable pair is included.
    """
    rho = as_fraction(rho)
    if not 0 < rho <= 1:
        raise ValueError("rho must lie in (0, 1]")
    out = set()
    for x in range(1, model.S + 1):
        for h in range(1, model.H + 1):
            if reach_probability(model, x, h, exact=True) >= rho:
                out.update((x, a, h) for a in range(1, model.A + 1))
    return frozenset(out)


def event_visit_probability(model, policy, U: TripleSet, exact: bool = False):
    """P^pi[some step's (x,a,h) lands in U], via an absorbing visited flag."""
    S = model.S
    # alpha[x] = P[x_h = x, no U-visit strictly before h]
    alpha = {x: _num(model.init[x - 1], exact) for x in range(1, S + 1)}
    hit = _zero(exact)
    for h in range(1, model.H + 1):
        nxt = {x: _zero(exact) for x in range(1, S + 1)}
        for x, mass in alpha.items():
            if not mass:
                continue
            a = policy.action(x, h)
            if (x, a, h) in U:
                hit += mass
                continue
            if h < model.H:
                row = model.transition(x, a, h)
                for y in range(S):
                    if row[y]:
                        nxt[y + 1] += mass * _num(row[y], exact)
        alpha = nxt
    return hit


def occupancy_omega(model, policy, U: TripleSet, exact: bool = False) -> dict:
    """For each (x,a,h) in U: P[visit (x,a,h) at h, staying in U^c before h].

    Summing the mapping over U reproduces event_visit_probability.
    """
    S = model.S
    alpha = {x: _num(model.init[x - 1], exact) for x in range(1, S + 1)}
    omega = {}
    for h in range(1, model.H + 1):
        nxt = {x: _zero(exact) for x in range(1, S + 1)}
        for x, mass in alpha.items():
            if not mass:
                continue
            a = policy.action(x, h)
            if (x, a, h) in U:
                omega[(x, a, h)] = omega.get((x, a, h), _zero(exact)) + mass
                continue
            if h < model.H:
                row = model.transition(x, a, h)
                for y in range(S):
                    if row[y]:
                        nxt[y + 1] += mass * _num(row[y], exact)
        alpha = nxt
    return omega


def deterministic_trajectory(model, policy) -> Trajectory:
    """The unique trajectory of a deterministic model (means as rewards)."""
    if not model.is_deterministic:
        raise ValueError("model is not deterministic")
    traj, prob = next(iter(enumerate_trajectories(model, policy)))
    assert prob == 1
    return traj
