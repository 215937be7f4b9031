"""Numerical verifiers for the analysis-side identities: similarity,
simulation gaps, performance differences, good-model sets, estimators."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .errors import PreconditionViolated
from .mdp import (
    MarkovPolicy,
    TabularModel,
    TripleSet,
    as_fraction,
    enumerate_policies,
    event_visit_probability,
)


def eps_r_bound(delta: float, n_lrn: int) -> float:
    """Reward concentration radius sqrt(2 log(1/delta) / n_lrn)."""
    return math.sqrt(2.0 * math.log(1.0 / delta) / n_lrn)


def eps_p_bound(delta: float, n_lrn: int, S: int) -> float:
    """l1 transition radius 2 sqrt(2 (S log 5 + log(1/delta)) / n_lrn)."""
    return 2.0 * math.sqrt(2.0 * (S * math.log(5.0) + math.log(1.0 / delta)) / n_lrn)


def is_punished(model: TabularModel, fully_explored: TripleSet, eps) -> bool:
    """All mean rewards on the fully-explored set are <= eps."""
    eps = as_fraction(eps)
    return all(model.mean_reward(x, a, h) <= eps for (x, a, h) in fully_explored)


def _l1(p, q) -> Fraction:
    return sum(abs(a - b) for a, b in zip(p, q))


@dataclass(frozen=True)
class SimilarityReport:
    init_distance: Fraction
    transition_distances: dict  # triple -> Fraction, over the fully-explored set

    def max_distance(self) -> Fraction:
        dists = [self.init_distance, *self.transition_distances.values()]
        return max(dists)

    def is_similar(self, eps) -> bool:
        eps = as_fraction(eps)
        return self.max_distance() <= eps


def similarity(model1: TabularModel, model2: TabularModel, fully_explored: TripleSet,
               eps=None) -> SimilarityReport:
    """l1 closeness of initial distributions and of transitions on the set.

    Similarity concerns transitions only, never rewards. The optional eps
    is informational; callers query ``report.is_similar(eps)``.
    """
    dists = {
        t: _l1(model1.transition(*t), model2.transition(*t)) for t in fully_explored
    }
    return SimilarityReport(_l1(model1.init, model2.init), dists)


def truncated_expected_sum(model: TabularModel, policy: MarkovPolicy, U: TripleSet,
                           rtilde, exact: bool = False):
    """E^pi[ sum_h rtilde(x_h,a_h,h) * 1{no U-visit strictly before h} ].

    ``rtilde`` maps (x,a,h) to [0,1]; the step-h term is still counted
    when the U-visit happens at step h itself.
    """
    S = model.S
    zero = Fraction(0) if exact else 0.0

    def num(v):
        return v if exact else float(v)

    alpha = {x: num(model.init[x - 1]) for x in range(1, S + 1)}
    total = zero
    for h in range(1, model.H + 1):
        nxt = {x: zero for x in range(1, S + 1)}
        for x, mass in alpha.items():
            if not mass:
                continue
            a = policy.action(x, h)
            total += mass * num(as_fraction(rtilde((x, a, h))))
            if (x, a, h) in U:
                continue
            if h < model.H:
                row = model.transition(x, a, h)
                for y in range(S):
                    if row[y]:
                        nxt[y + 1] += mass * num(row[y])
        alpha = nxt
    return total


def simulation_gap(model: TabularModel, model_star: TabularModel, U: TripleSet,
                   rtilde, policy: MarkovPolicy, eps):
    """(lhs, bound) for the truncated-reward comparison of similar models.

    lhs is the exact-DP absolute difference of the truncated expected
    sums; bound is C(H,2) * eps. Raises PreconditionViolated unless the
    pair is eps-similar on the complement of U.
    """
    eps = as_fraction(eps)
    fully_explored = frozenset(
        t for t in _triples_of(model) if t not in U
    )
    rep = similarity(model, model_star, fully_explored)
    if not rep.is_similar(eps):
        raise PreconditionViolated(
            f"models are not {eps}-similar on the complement of U "
            f"(max distance {rep.max_distance()})"
        )
    lhs = abs(
        truncated_expected_sum(model, policy, U, rtilde)
        - truncated_expected_sum(model_star, policy, U, rtilde)
    )
    bound = float(eps) * math.comb(model.H, 2)
    return lhs, bound


def _triples_of(model: TabularModel):
    return (
        (x, a, h)
        for x in range(1, model.S + 1)
        for a in range(1, model.A + 1)
        for h in range(1, model.H + 1)
    )


# ---------------------------------------------------------------------------
# Markov reward processes and the performance-difference identity


@dataclass(frozen=True)
class MRP:
    """Finite-horizon Markov reward process (dynamics only; reward shared)."""

    S: int
    H: int
    init: tuple  # length S
    trans: tuple  # [h][x] -> row over next states, for h in 1..H-1

    def transition(self, x: int, h: int):
        return self.trans[h - 1][x - 1]


def mrp_value_functions(mrp: MRP, reward) -> list:
    """V_h(x) = E[sum_{tau=h..H} r(x_tau,tau) | x_h = x], h = 1..H+1."""
    V = [[0.0] * mrp.S for _ in range(mrp.H + 2)]
    for h in range(mrp.H, 0, -1):
        for x in range(1, mrp.S + 1):
            v = float(as_fraction(reward((x, h))))
            if h < mrp.H:
                row = mrp.transition(x, h)
                v += sum(float(row[y]) * V[h + 1][y] for y in range(mrp.S))
            V[h][x - 1] = v
    return V


def mrp_expected_sum(mrp: MRP, reward) -> float:
    V = mrp_value_functions(mrp, reward)
    return sum(float(mrp.init[x]) * V[1][x] for x in range(mrp.S))


def performance_difference(mrp1: MRP, mrp2: MRP, reward):
    """Both sides of the MRP performance-difference identity.

    lhs = E_1[sum r] - E_2[sum r];
    rhs = (init_1 - init_2) . V2_1 + sum_h E_1[(P1 - P2)(.|x_h,h) . V2_{h+1}].
    Returns (lhs, rhs, decomposition dict).
    """
    V2 = mrp_value_functions(mrp2, reward)
    lhs = mrp_expected_sum(mrp1, reward) - mrp_expected_sum(mrp2, reward)
    init_term = sum(
        (float(mrp1.init[x]) - float(mrp2.init[x])) * V2[1][x] for x in range(mrp1.S)
    )
    # occupancy of mrp1 at each (x, h)
    occ = [float(p) for p in mrp1.init]
    trans_terms = []
    for h in range(1, mrp1.H):
        term = 0.0
        nxt = [0.0] * mrp1.S
        for x in range(1, mrp1.S + 1):
            mass = occ[x - 1]
            if not mass:
                continue
            row1 = mrp1.transition(x, h)
            row2 = mrp2.transition(x, h)
            term += mass * sum(
                (float(row1[y]) - float(row2[y])) * V2[h + 1][y] for y in range(mrp1.S)
            )
            for y in range(mrp1.S):
                nxt[y] += mass * float(row1[y])
        trans_terms.append(term)
        occ = nxt
    rhs = init_term + sum(trans_terms)
    return lhs, rhs, {"init_term": init_term, "transition_terms": trans_terms}


def mrp_of(model: TabularModel, policy: MarkovPolicy) -> tuple[MRP, object]:
    """Collapse (model, policy) into an MRP plus its reward function."""
    trans = tuple(
        tuple(model.transition(x, policy.action(x, h), h) for x in range(1, model.S + 1))
        for h in range(1, model.H)
    )
    mrp = MRP(model.S, model.H, model.init, trans)

    def reward(key):
        x, h = key
        return model.mean_reward(x, policy.action(x, h), h)

    return mrp, reward


# ---------------------------------------------------------------------------
# good models, estimators, deterministic helpers


def good_model_predicate(model, model_star, U, eps_pun, eps_r, eps_p) -> bool:
    """(eps_pun + 2 eps_r)-punished on U^c and 2 eps_p-similar to the truth there."""
    S, A, H = model.S, model.A, model.H
    from .mdp import complement_triples

    explored = complement_triples(U, S, A, H)
    if not is_punished(model, explored, as_fraction(eps_pun) + 2 * as_fraction(eps_r)):
        return False
    return similarity(model, model_star, explored).is_similar(2 * as_fraction(eps_p))


@dataclass
class Estimators:
    theta_r: dict  # triple -> float mean of first n_lrn reward samples
    theta_p: dict  # triple -> list[float] next-state frequencies (h < H only)
    theta_p0: list | None  # initial-state frequencies over first n_lrn phases
    undefined: set  # triples with fewer than n_lrn hallucination visits


def empirical_estimators(game_log, n_lrn: int) -> Estimators:
    """Per-triple empirical means over the first n_lrn hallucination visits.

    Transition frequencies are defined for h < H (the stage-H transition
    only feeds the designated sink). The initial-state estimator uses the
    first n_lrn hallucination episodes and is None before that.
    """
    history = game_log.hallucination_history()
    samples_r: dict = {}
    samples_p: dict = {}
    inits = []
    S = None
    for _, _, steps in history:
        if steps is None:
            continue
        inits.append(steps[0][0])
        for i, (x, a, h, r) in enumerate(steps):
            t = (x, a, h)
            samples_r.setdefault(t, [])
            if len(samples_r[t]) < n_lrn:
                samples_r[t].append(float(Fraction(r)))
            if i + 1 < len(steps):
                samples_p.setdefault(t, [])
                if len(samples_p[t]) < n_lrn:
                    samples_p[t].append(steps[i + 1][0])
            S = max(S or 0, x)
    theta_r, theta_p = {}, {}
    undefined = set()
    for t, vals in samples_r.items():
        if len(vals) >= n_lrn:
            theta_r[t] = sum(vals) / n_lrn
        else:
            undefined.add(t)
    for t, nexts in samples_p.items():
        if len(nexts) >= n_lrn and S is not None:
            theta_p[t] = [sum(1 for y in nexts if y == s) / n_lrn for s in range(1, S + 1)]
    theta_p0 = None
    if len(inits) >= n_lrn and S is not None:
        first = inits[:n_lrn]
        theta_p0 = [sum(1 for y in first if y == s) / n_lrn for s in range(1, S + 1)]
    return Estimators(theta_r, theta_p, theta_p0, undefined)


def first_unexplored_stage(model: TabularModel, policy: MarkovPolicy, U: TripleSet) -> int:
    """First stage at which the unique trajectory enters U; H+1 if never."""
    if not model.is_deterministic:
        raise PreconditionViolated("first_unexplored_stage needs a deterministic model")
    x = 1 + max(range(model.S), key=lambda y: model.init[y])
    for h in range(1, model.H + 1):
        a = policy.action(x, h)
        if (x, a, h) in U:
            return h
        if h < model.H:
            row = model.transition(x, a, h)
            x = 1 + max(range(model.S), key=lambda y: row[y])
    return model.H + 1


def sufficiently_visiting_policies(model_star: TabularModel, U: TripleSet, rho_0,
                                   exact: bool = True) -> list[MarkovPolicy]:
    """Policies whose probability of visiting U is at least rho_0."""
    rho_0 = as_fraction(rho_0)
    out = []
    for pol in enumerate_policies(model_star.S, model_star.A, model_star.H):
        p = event_visit_probability(model_star, pol, U, exact=exact)
        if (p >= rho_0) if exact else (p >= float(rho_0) - 1e-12):
            out.append(pol)
    return out
