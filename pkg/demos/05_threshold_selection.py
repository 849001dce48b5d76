"""
Choosing an operating threshold for the candidate
==================================================

B was deployed at a low threshold. Raising it afterwards throws away some of
B's collected accepts and makes B stricter offline on A's data, so the whole
trade-off curve can be explored from one deployment.
"""

import numpy as np

from abba import Dataset, select_threshold, threshold_sweep
from abba.simulation import AbbaSimConfig, simulate_abba

sim, _, _ = simulate_abba(AbbaSimConfig(
    p_positive=0.3, recall_A=0.8, fpr_A=0.1, recall_B=0.9, fpr_B=0.14,
    cross_tp_given_A=0.97, cross_fp_given_A=0.7, n_streams=200_000, seed=5, threshold=0.1))

# The simulator's scores carry no label information above the threshold.
# Give B's scores some: true accepts skew high, false accepts low.
rng = np.random.default_rng(0)
lab = sim.hard_label == 1


def skewed(accepted):
    hi = 0.1 + 0.9 * np.where(lab, rng.beta(4, 1, len(sim)), rng.beta(1, 3, len(sim)))
    return np.where(accepted, hi, 0.1 * rng.random(len(sim)))


b_collector = np.where(sim.is_b, skewed(np.ones(len(sim), bool)), sim.collector_score)
b_cross = np.where(sim.is_b, sim.cross_score, skewed(sim.cross_score > 0.1))
dataset = Dataset.from_arrays(ids=sim.ids, arm=sim.is_b, collector_score=b_collector,
                              cross_score=b_cross, hard_label=sim.hard_label)

rows = threshold_sweep(dataset, t_A=0.1, t_B_grid=[0.1, 0.2, 0.3, 0.4, 0.5], deployed_t_B=0.1)
print(f"{'t_B':>5} {'rFPR':>7} {'rRecall':>8}  region")
for r in rows:
    print(f"{r.t_B:>5.1f} {r.rFPR.point:>7.3f} {r.rRecall.point:>8.3f}  {r.region.value}")

#########################################################################
# Three ways to pick: keep B's false accepts at A's level and take the
# recall gain, keep recall and cut false accepts, or demand both.

for goal in ("match_fpr", "match_recall", "dominate"):
    row = select_threshold(rows, goal)
    print(f"{goal:<13}", "none" if row is None else f"t_B={row.t_B}")
