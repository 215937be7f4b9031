from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest

from ielab import (
    MechanismConfig,
    PreconditionViolated,
    all_triples,
    canonical_posterior,
    complement_triples,
    empirical_estimators,
    enumerate_policies,
    event_visit_probability,
    first_unexplored_stage,
    good_model_predicate,
    is_punished,
    make_agent,
    performance_difference,
    run_game,
    similarity,
    simulation_gap,
    sufficiently_visiting_policies,
    truncated_expected_sum,
)
from ielab.analysis import eps_p_bound, eps_r_bound, mrp_of
from ielab.harness import sample_similar_pair
from ielab.instances import random_model


def test_is_punished(det_prior):
    m_high = det_prior.atoms[255]  # reward 0.8 everywhere
    assert is_punished(m_high, frozenset(), "0.1")
    assert is_punished(m_high, all_triples(2, 2, 2), 1)
    assert not is_punished(m_high, frozenset({(1, 1, 1)}), "0.1")
    assert is_punished(det_prior.atoms[0], all_triples(2, 2, 2), "0.1")


def test_similarity_self_and_disjoint(stoch_prior):
    m = stoch_prior.atoms[42]
    rep = similarity(m, m, all_triples(2, 2, 2))
    assert rep.init_distance == 0
    assert all(d == 0 for d in rep.transition_distances.values())
    assert rep.is_similar(0)
    # disjoint point masses have l1 distance 2
    from ielab.mdp import DiscreteDist, build_model

    def point_chain(target):
        return build_model(
            2, 1, 2, [1, 0],
            {(x, 1, 1): ([1, 0] if target == 1 else [0, 1]) for x in (1, 2)},
            {(x, 1, h): DiscreteDist.point(0) for x in (1, 2) for h in (1, 2)},
            reward_support=(0, 1),
        )
    rep2 = similarity(point_chain(1), point_chain(2), frozenset({(1, 1, 1)}))
    assert rep2.transition_distances[(1, 1, 1)] == 2


def test_similarity_micro_stoch_hand_value(stoch_prior, stoch_factored):
    # uniform vs tilted transition structures differ by 1/2 at the two tilted rows
    uniform = stoch_prior.atoms[0]
    tilted = stoch_prior.atoms[256]
    rep = similarity(uniform, tilted, all_triples(2, 2, 2))
    assert rep.init_distance == 0
    assert rep.transition_distances[(1, 1, 1)] == Fraction(1, 2)
    assert rep.transition_distances[(1, 2, 1)] == Fraction(1, 2)
    assert rep.transition_distances[(2, 1, 1)] == 0


def test_simulation_gap_identical_models(stoch_prior):
    m = stoch_prior.atoms[77]
    pol = enumerate_policies(2, 2, 2)[4]
    U = frozenset({(1, 1, 2)})
    lhs, bound = simulation_gap(m, m, U, lambda t: Fraction(1, 2), pol, 0)
    assert lhs == 0 and bound == 0


def test_simulation_gap_indicator_recovers_visit_probability(stoch_prior):
    """With the indicator reward, the truncated sum is exactly the U-visit
    event probability (the lemma's 'in particular' clause)."""
    m1 = stoch_prior.atoms[10]
    m2 = stoch_prior.atoms[266]
    U = frozenset({(2, 1, 2), (1, 2, 1)})
    indicator = lambda t: 1 if t in U else 0
    for pol in enumerate_policies(2, 2, 2)[::3]:
        v1 = truncated_expected_sum(m1, pol, U, indicator)
        assert v1 == pytest.approx(event_visit_probability(m1, pol, U), abs=1e-12)
        rep = similarity(m1, m2, complement_triples(U, 2, 2, 2))
        eps = rep.max_distance()
        lhs, bound = simulation_gap(m1, m2, U, indicator, pol, eps)
        assert lhs == pytest.approx(
            abs(event_visit_probability(m1, pol, U) - event_visit_probability(m2, pol, U)),
            abs=1e-12,
        )
        assert lhs <= bound + 1e-12


def test_simulation_gap_precondition():
    rng = np.random.default_rng(0)
    m1 = random_model(rng, 2, 1, 2)
    m2 = random_model(rng, 2, 1, 2)
    pol = enumerate_policies(2, 1, 2)[0]
    with pytest.raises(PreconditionViolated):
        simulation_gap(m1, m2, frozenset(), lambda t: 1, pol, 0)


def test_simulation_gap_randomized_bound():
    rng = np.random.default_rng(13)
    done = 0
    while done < 200:
        base, other, U, rt, pol, eps = sample_similar_pair(rng)
        if eps == 0:
            continue
        done += 1
        lhs, bound = simulation_gap(base, other, U, lambda t: rt[t], pol, eps)
        assert lhs <= bound + 1e-12


def test_performance_difference_identity_cases():
    rng = np.random.default_rng(5)
    m = random_model(rng, 3, 1, 3)
    pol = enumerate_policies(3, 1, 3)[0]
    mrp1, reward = mrp_of(m, pol)
    lhs, rhs, parts = performance_difference(mrp1, mrp1, reward)
    assert lhs == 0 and rhs == pytest.approx(0, abs=1e-15)

    # differ only in the initial distribution: transition terms vanish
    m2 = random_model(rng, 3, 1, 3)
    mrp2, _ = mrp_of(m2, pol)
    from ielab.analysis import MRP

    mrp_mixed = MRP(mrp1.S, mrp1.H, mrp2.init, mrp1.trans)
    lhs, rhs, parts = performance_difference(mrp_mixed, mrp1, reward)
    assert all(t == pytest.approx(0, abs=1e-15) for t in parts["transition_terms"])
    assert lhs == pytest.approx(parts["init_term"], abs=1e-12)


def test_performance_difference_random_pairs():
    rng = np.random.default_rng(99)
    for _ in range(100):
        S = int(rng.integers(2, 4))
        H = int(rng.integers(2, 4))
        m1 = random_model(rng, S, 1, H)
        m2 = random_model(rng, S, 1, H)
        pol = enumerate_policies(S, 1, H)[0]
        mrp1, reward = mrp_of(m1, pol)
        mrp2, _ = mrp_of(m2, pol)
        lhs, rhs, _ = performance_difference(mrp1, mrp2, reward)
        assert abs(lhs - rhs) <= 1e-10


def test_good_model_predicate(det_prior):
    m = det_prior.atoms[255]  # reward 0.8 everywhere
    # reflexive with eps_pun at the max reward; fails below it
    assert good_model_predicate(m, m, frozenset(), "0.8", 0, 0)
    assert not good_model_predicate(m, m, frozenset(), "0.1", 0, 0)
    # punished but dissimilar
    from ielab.instances import micro_stoch_1

    sp = micro_stoch_1().expand()
    punished_uniform = sp.atoms[0]
    punished_tilted = sp.atoms[256]
    U = frozenset()  # everything fully explored
    assert is_punished(punished_uniform, all_triples(2, 2, 2), 0)
    assert not good_model_predicate(punished_tilted, punished_uniform, U, "0.01", 0, "0.1")


def test_error_bound_formulas():
    assert eps_r_bound(0.1, 64) == pytest.approx(math.sqrt(2 * math.log(10) / 64), abs=1e-15)
    assert eps_p_bound(0.1, 64, 2) == pytest.approx(
        2 * math.sqrt(2 * (2 * math.log(5) + math.log(10)) / 64), abs=1e-15
    )


def test_empirical_estimators_deterministic(det_prior, det_config, det_tables):
    agent = make_agent("fully_rational", det_prior, det_config, tables=det_tables)
    log = run_game(det_config, det_prior, agent, seed=2, episode_log="hallucination",
                   tables=det_tables)
    est = empirical_estimators(log, n_lrn=1)
    m = det_prior.atoms[log.true_atom]
    for t, val in est.theta_r.items():
        assert val == float(m.mean_reward(*t))
    for t, freq in est.theta_p.items():
        assert sum(freq) == pytest.approx(1.0, abs=1e-12)
        expected = [float(p) for p in m.transition(*t)]
        assert freq == expected
    assert est.theta_p0 is not None
    assert sum(est.theta_p0) == pytest.approx(1.0, abs=1e-12)


def test_first_unexplored_stage(det_prior):
    m = det_prior.atoms[7]
    pol = enumerate_policies(2, 2, 2)[0]
    assert first_unexplored_stage(m, pol, all_triples(2, 2, 2)) == 1
    assert first_unexplored_stage(m, pol, frozenset()) == 3
    from ielab.mdp import enumerate_trajectories

    traj = next(iter(enumerate_trajectories(m, pol)))[0]
    t2 = traj.triples()[1]
    assert first_unexplored_stage(m, pol, frozenset({t2})) == 2


def test_sufficiently_visiting_policies(stoch_prior):
    m = stoch_prior.atoms[111]
    pols = enumerate_policies(2, 2, 2)
    assert len(sufficiently_visiting_policies(m, all_triples(2, 2, 2), 1)) == len(pols)
    # an unreachable U: nothing visits state-2 at stage 1 with probability 1/4
    # under a model... state 2 at h=1 ix reachable via init here, so use an
    # empty U instead for the unreachable case
    assert sufficiently_visiting_policies(m, frozenset(), "1/100") == []
    rho0 = Fraction(1, 3)
    U = frozenset({(2, 2, 2)})
    expected = [
        p for p in pols if event_visit_probability(m, p, U, exact=True) >= rho0
    ]
    assert sufficiently_visiting_policies(m, U, rho0) == expected


def test_deterministic_simulation_lemma_invariant(det_prior, det_config, det_tables):
    """Atoms in the support of the posterior given the hallucinated ledger
    agree with the truth up to the first unexplored stage and are punished
    before it."""
    agent = make_agent("fully_rational", det_prior, det_config, tables=det_tables)
    log = run_game(det_config, det_prior, agent, seed=6, episode_log="hallucination",
                   tables=det_tables, keep_signals=True)
    m_star = det_prior.atoms[log.true_atom]
    from ielab.mdp import deterministic_trajectory

    for p in log.phases:
        lam_hal = log.signals[p.ell]["hallucinated"]
        post = canonical_posterior(det_prior, lam_hal, exact=True)
        U = frozenset(tuple(t) for t in p.U)
        for pol in det_tables.policies[::3]:
            h_cut = first_unexplored_stage(m_star, pol, U)
            star_traj = deterministic_trajectory(m_star, pol)
            for i in post.support():
                mu = det_prior.atoms[i]
                traj = deterministic_trajectory(mu, pol)
                for h in range(1, min(h_cut, 2) + 1):
                    if h <= 2:
                        s_mu, s_star = traj.steps[h - 1], star_traj.steps[h - 1]
                        assert (s_mu.x, s_mu.a) == (s_star.x, s_star.a)
                for h in range(1, min(h_cut, 3)):
                    if h <= 2:
                        s_mu = traj.steps[h - 1]
                        assert mu.mean_reward(s_mu.x, s_mu.a, h) <= det_config.eps_pun


def test_value_bounds_on_good_models(stoch_prior, stoch_tables):
    """Posterior atoms given a hallucinated ledger obey the good-model value
    bounds at generous tolerances."""
    cfg = MechanismConfig(70218, 4, Fraction(7, 2880), 60, rho=Fraction(1, 4))
    agent = make_agent("canonical_truster", stoch_prior, cfg, tables=stoch_tables)
    log = run_game(cfg, stoch_prior, agent, seed=8, episode_log="hallucination",
                   tables=stoch_tables, keep_signals=True)
    m_star = stoch_prior.atoms[log.true_atom]
    eps_r, eps_p = 0.25, 0.2
    checked = 0
    for p in log.phases[-10:]:
        U = frozenset(tuple(t) for t in p.U)
        lam_hal = log.signals[p.ell]["hallucinated"]
        post = canonical_posterior(stoch_prior, lam_hal)
        H = 2
        for i, w in enumerate(post.weights):
            if w < 1e-6:
                continue
            mu = stoch_prior.atoms[i]
            if not good_model_predicate(mu, m_star, U, cfg.eps_pun, eps_r, eps_p):
                continue
            checked += 1
            for pol in stoch_tables.policies[::5]:
                value = float(stoch_tables.value_matrix[i, stoch_tables.policy_col(pol)])
                p_star = event_visit_probability(m_star, pol, U)
                upper = (H * p_star + H * (2 * eps_r + float(cfg.eps_pun))
                         + H * (H - 1) * eps_p)
                assert value <= upper + 1e-9
                from ielab.mdp import occupancy_omega

                omega = occupancy_omega(m_star, pol, U)
                lower = sum(
                    float(mu.mean_reward(*t)) * v for t, v in omega.items()
                ) - H * (H - 1) * eps_p
                assert value >= lower - 1e-9
    assert checked > 0
