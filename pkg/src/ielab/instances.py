"""Fixed desk-scale instances and random families used by tests and demos."""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .mdp import DiscreteDist, TabularModel, as_fraction, build_model
from .priors import FactoredRewardPrior


def micro_det_1() -> FactoredRewardPrior:
    """2-state / 2-action / 2-stage deterministic class, shared transitions.

    One point-mass transition structure known to every atom; each of the
    8 triples has a mean reward uniform on {0, 0.8} (deterministic
    rewards). Six triples are reachable: state 2 cannot occur at h=1.
    Prior parameters: r_min = 0.4, f_min(0.1) = 0.5.
    """
    S = A = H = 2
    init = [1, 0]
    transitions = {
        (1, 1, 1): [1, 0],  # stay
        (1, 2, 1): [0, 1],  # switch
        (2, 1, 1): [0, 1],
        (2, 2, 1): [0, 1],
    }
    marginals = {
        (x, a, h): DiscreteDist.of([(0, Fraction(1, 2)), ("0.8", Fraction(1, 2))])
        for x in range(1, S + 1)
        for a in range(1, A + 1)
        for h in range(1, H + 1)
    }
    return FactoredRewardPrior(
        S, A, H,
        transition_atoms=((init, transitions, Fraction(1)),),
        reward_marginals=marginals,
    )


def _bernoulli_of_mean(mean: Fraction) -> DiscreteDist:
    if mean == 0:
        return DiscreteDist.of([(0, 1)])
    if mean == 1:
        return DiscreteDist.of([(1, 1)])
    return DiscreteDist.of([(0, 1 - mean), (1, mean)])


def micro_stoch_1() -> FactoredRewardPrior:
    """2-state / 2-action / 2-stage stochastic class, two transition atoms.

    Atom T1 has uniform transitions everywhere; T2 tilts the stage-1 rows
    of state 1 to (3/4, 1/4) and (1/4, 3/4). Rewards are Bernoulli with
    per-triple means uniform on {0, 0.7}; r_min = 0.35, f_min(eps) = 0.5
    for eps < 0.7. Every triple is 1/4-reachable under both atoms.
    """
    S = A = H = 2
    half = Fraction(1, 2)
    init = [half, half]
    uniform = {
        (x, a, 1): [half, half] for x in range(1, S + 1) for a in range(1, A + 1)
    }
    tilted = dict(uniform)
    tilted[(1, 1, 1)] = [Fraction(3, 4), Fraction(1, 4)]
    tilted[(1, 2, 1)] = [Fraction(1, 4), Fraction(3, 4)]
    marginals = {
        (x, a, h): DiscreteDist.of([(0, half), ("0.7", half)])
        for x in range(1, S + 1)
        for a in range(1, A + 1)
        for h in range(1, H + 1)
    }
    return FactoredRewardPrior(
        S, A, H,
        transition_atoms=((init, uniform, half), (init, tilted, half)),
        reward_marginals=marginals,
        dist_of_mean=_bernoulli_of_mean,
        reward_support=(0, 1),
    )


def _random_prob_vector(rng: np.random.Generator, n: int, grid: int = 64) -> list[Fraction]:
    """Random rational probability vector on a 1/grid lattice."""
    cuts = sorted(int(rng.integers(0, grid + 1)) for _ in range(n - 1))
    parts = []
    prev = 0
    for c in cuts:
        parts.append(Fraction(c - prev, grid))
        prev = c
    parts.append(Fraction(grid - prev, grid))
    return parts


def random_model(rng: np.random.Generator, S: int, A: int, H: int,
                 support=(0, Fraction(1, 2), 1)) -> TabularModel:
    """Random rational tabular model (for property tests)."""
    support = tuple(as_fraction(v) for v in support)
    init = _random_prob_vector(rng, S)
    transitions = {}
    rewards = {}
    for x in range(1, S + 1):
        for a in range(1, A + 1):
            for h in range(1, H + 1):
                if h < H:
                    transitions[(x, a, h)] = _random_prob_vector(rng, S)
                probs = _random_prob_vector(rng, len(support))
                while all(p == 0 for p in probs):
                    probs = _random_prob_vector(rng, len(support))
                pairs = [(v, p) for v, p in zip(support, probs)]
                rewards[(x, a, h)] = DiscreteDist.of(pairs)
    return build_model(S, A, H, init, transitions, rewards, reward_support=support)


def perturb_model(rng: np.random.Generator, model: TabularModel, scale: Fraction,
                  grid: int = 64) -> TabularModel:
    """A model with transitions (and init) perturbed by at most ~scale in l1.

    Rewards are redrawn independently; similarity ignores rewards.
    """
    def shift(vec):
        vec = list(vec)
        n = len(vec)
        if n == 1:
            return vec
        budget = as_fraction(scale) / 2
        i, j = rng.integers(0, n), rng.integers(0, n)
        if i == j:
            return vec
        amount = min(budget, vec[i]) * Fraction(int(rng.integers(0, grid + 1)), grid)
        vec[i] -= amount
        vec[j] += amount
        return vec

    init = shift(model.init)
    transitions = {}
    rewards = {}
    for x in range(1, model.S + 1):
        for a in range(1, model.A + 1):
            for h in range(1, model.H + 1):
                if h < model.H:
                    transitions[(x, a, h)] = shift(model.transition(x, a, h))
                rewards[(x, a, h)] = model.reward_dist(x, a, h)
    return build_model(
        model.S, model.A, model.H, init, transitions, rewards,
        reward_support=model.reward_support,
    )
