"""JSON schemas for models, priors, and ledgers.

Indices are 1-based on the wire. Numbers may be ints, decimal floats, or
"p/q" strings; everything is parsed into exact rationals (floats through
their shortest decimal repr).
"""

from __future__ import annotations

import json
from fractions import Fraction

from .errors import ConfigError
from .ledgers import CensoredTrajectory, Ledger
from .mdp import DiscreteDist, MarkovPolicy, Step, TabularModel, as_fraction, build_model
from .priors import DiscretePrior, FactoredRewardPrior


def _num_out(v: Fraction):
    """Emit ints as ints, dyadic-free rationals as 'p/q' strings."""
    if v.denominator == 1:
        return v.numerator
    return str(v)


def _triple_key(t) -> str:
    return f"{t[0]},{t[1]},{t[2]}"


def _parse_triple(key: str) -> tuple[int, int, int]:
    x, a, h = (int(p) for p in key.split(","))
    return x, a, h


def dist_to_dict(d: DiscreteDist) -> dict:
    return {
        "support": [_num_out(v) for v in d.support],
        "probs": [_num_out(p) for p in d.probs],
    }


def dist_from_dict(d: dict) -> DiscreteDist:
    return DiscreteDist.of(zip(d["support"], d["probs"]))


def model_to_dict(m: TabularModel) -> dict:
    out = {
        "S": m.S,
        "A": m.A,
        "H": m.H,
        "init": [_num_out(p) for p in m.init],
        "transitions": {},
        "rewards": {},
    }
    for x in range(1, m.S + 1):
        for a in range(1, m.A + 1):
            for h in range(1, m.H + 1):
                out["transitions"][_triple_key((x, a, h))] = [
                    _num_out(p) for p in m.transition(x, a, h)
                ]
                out["rewards"][_triple_key((x, a, h))] = dist_to_dict(m.reward_dist(x, a, h))
    return out


def model_from_dict(d: dict, reward_support=None) -> TabularModel:
    try:
        S, A, H = d["S"], d["A"], d["H"]
        transitions = {_parse_triple(k): v for k, v in d["transitions"].items()}
        rewards = {_parse_triple(k): dist_from_dict(v) for k, v in d["rewards"].items()}
        return build_model(S, A, H, d["init"], transitions, rewards,
                           reward_support=reward_support)
    except KeyError as e:
        raise ConfigError(f"model JSON missing field {e}") from e


def prior_to_dict(prior: DiscretePrior) -> dict:
    return {
        "atoms": [
            {"model": model_to_dict(m), "weight": _num_out(w)}
            for m, w in zip(prior.atoms, prior.weights)
        ]
    }


def factored_to_dict(fp: FactoredRewardPrior) -> dict:
    return {
        "factored": {
            "S": fp.S, "A": fp.A, "H": fp.H,
            "transition_prior": [
                {
                    "init": [_num_out(as_fraction(p)) for p in init],
                    "transitions": {
                        _triple_key(t): [_num_out(as_fraction(p)) for p in vec]
                        for t, vec in sorted(trans.items())
                    },
                    "weight": _num_out(as_fraction(w)),
                }
                for init, trans, w in fp.transition_atoms
            ],
            "reward_marginals": {
                _triple_key(t): dist_to_dict(d) for t, d in sorted(fp.reward_marginals.items())
            },
        }
    }


def prior_from_dict(d: dict, dist_of_mean=None) -> DiscretePrior | FactoredRewardPrior:
    if "atoms" in d:
        support = set()
        models = []
        weights = []
        for entry in d["atoms"]:
            for rv in entry["model"]["rewards"].values():
                support.update(as_fraction(v) for v in rv["support"])
        support = tuple(sorted(support))
        for entry in d["atoms"]:
            models.append(model_from_dict(entry["model"], reward_support=support))
            weights.append(as_fraction(entry["weight"]))
        return DiscretePrior(tuple(models), tuple(weights))
    if "factored" in d:
        f = d["factored"]
        transition_atoms = tuple(
            (
                [as_fraction(p) for p in atom["init"]],
                {_parse_triple(k): [as_fraction(p) for p in vec]
                 for k, vec in atom["transitions"].items()},
                as_fraction(atom["weight"]),
            )
            for atom in f["transition_prior"]
        )
        marginals = {
            _parse_triple(k): dist_from_dict(v) for k, v in f["reward_marginals"].items()
        }
        return FactoredRewardPrior(f["S"], f["A"], f["H"], transition_atoms, marginals,
                                   dist_of_mean=dist_of_mean)
    raise ConfigError("prior JSON needs 'atoms' or 'factored'")


# ---------------------------------------------------------------------------
# ledger JSONL


def ledger_to_jsonl(ledger: Ledger) -> str:
    header = {
        "S": ledger.S, "A": ledger.A, "H": ledger.H,
        "censor_set": [list(t) for t in sorted(ledger.censor_set)],
    }
    lines = [json.dumps(header, sort_keys=True, separators=(",", ":"))]
    for pol, traj in ledger.entries:
        rec = {
            "policy": [list(row) for row in pol.actions],
            "steps": [
                [s.x, s.a, s.h, None if s.r is None else _num_out(s.r)]
                for s in traj.steps
            ],
        }
        lines.append(json.dumps(rec, sort_keys=True, separators=(",", ":")))
    return "\n".join(lines) + "\n"


def ledger_from_jsonl(text: str) -> Ledger:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    header = json.loads(lines[0])
    U = frozenset(tuple(t) for t in header["censor_set"])
    A = header["A"]
    entries = []
    for ln in lines[1:]:
        rec = json.loads(ln)
        pol = MarkovPolicy.from_table(rec["policy"], A)
        steps = tuple(
            Step(x, a, h, None if r is None else as_fraction(r))
            for x, a, h, r in rec["steps"]
        )
        entries.append((pol, CensoredTrajectory(steps, U)))
    return Ledger(header["S"], A, header["H"], U, tuple(entries))
