"""The rational-arithmetic oracle: hygiene, distribution equality, p_hal.

Enumerates the entire game measure for three phases of the deterministic
micro instance and verifies, with exact rationals:

  * ledger hygiene — the true posterior given the censored or honest
    ledger equals the canonical posterior (TV exactly 0), while two
    deliberately leaky toy mechanisms fail with TV >= 1/2;
  * the honest ledger conditioned on the punish event has exactly the
    law of the hallucinated ledger;
  * the agent's suspicion p_hal never exceeds 1/(1 + q(1-p0)/p0);
  * whenever the phase-length condition holds, every exact-posterior
    maximizer visits an unexplored triple.
"""

from ielab import (
    det_parameters,
    enumerate_game,
    fabricated_rewards_case,
    hallucination_distribution_check,
    hygiene_tv,
    hygiene_tv_pairs,
    micro_det_1,
    one_step_audit,
    p_hal_audit,
    policy_selection_case,
)
from ielab.harness import _det_target_provider

factored = micro_det_1()
prior = factored.expand()
config, _ = det_parameters(factored)

table = enumerate_game(config, prior, 3)
print(f"joint table: nodes per phase "
      f"{ {ell: len(nodes) for ell, nodes in table.nodes.items()} }, "
      f"total mass = {table.total_mass()}")

print("\nhygiene (TV between mechanism and canonical posteriors):")
for ell in (1, 2, 3):
    print(f"  phase {ell}: censored TV = {hygiene_tv(table, 'censored', ell)}, "
          f"honest TV = {hygiene_tv(table, 'honest', ell)}")

fab_prior, fab_pairs = fabricated_rewards_case()
sel_prior, sel_pairs = policy_selection_case()
print("negative controls (non-hygienic mechanisms):")
print(f"  fabricated rewards: TV = {hygiene_tv_pairs(fab_prior, fab_pairs)}")
print(f"  policy selection:   TV = {hygiene_tv_pairs(sel_prior, sel_pairs)}")

print("\nhonest-given-punish vs hallucinated distribution equality:")
for ell in (2, 3):
    print(f"  phase {ell}: TV = {hallucination_distribution_check(table, ell)}")
mutated = enumerate_game(config, prior, 2, variant="hallucinate_unconditioned")
print(f"  mutated (unconditioned) mechanism, phase 2: "
      f"TV = {hallucination_distribution_check(mutated, 2)} > 0")

print("\nagent suspicion vs its bound:")
for ell in (1, 2, 3):
    for audit in p_hal_audit(table, ell):
        print(f"  phase {ell}: p_hal = {audit['p_hal']} "
              f"(bound {audit['bound']}, slack {audit['slack']})")

print("\none-step incentive audit:")
provider = _det_target_provider(prior)
for ell in (1, 2, 3):
    rep = one_step_audit(table, ell, provider)
    strict = [e for e in rep.entries if not e.vacuous]
    if not strict:
        print(f"  phase {ell}: every policy explores (nothing visited yet) — vacuous")
        continue
    for e in strict:
        print(f"  phase {ell}: condition 1/n_phase <= q*gap/3H holds: "
              f"{e.condition_holds} (gap {e.gap}); argmax inside target: {e.in_target}")
