"""
Replacing annotators with a label machine
==========================================

Instead of human labels, each collected utterance gets a probability of
being a true accept from a larger offline model. Counts become sums of those
probabilities.

Three simulated label machines: one accurate, one that rates arm A's false
accepts too highly, one that rates arm A's true accepts too low.
"""

from abba import Thresholds, build_counts, rfpr_direct, rrecall_direct, ss_rfpr, ss_rrecall
from abba.simulation import MACHINES, SsSimConfig, simulate_ss

th = Thresholds(0.5, 0.5)
# A collects 40% true accepts, B 20%; cross-acceptance chosen so that
# the expected ratios are rRecall 0.9/0.8 and rFPR 0.3/0.6.
base = dict(tp_fraction_A=0.4, tp_fraction_B=0.2, cross_tp_A=0.9, cross_fp_A=0.3,
            cross_tp_B=0.8, cross_fp_B=0.6, n_per_arm=50_000, seed=3)

print(f"{'machine':<16} {'ss rRecall':>10} {'ss rFPR':>8}")
for name, machine in MACHINES.items():
    ds = simulate_ss(SsSimConfig(**base, machine=machine))
    print(f"{name:<16} {ss_rrecall(ds, th).point:>10.3f} {ss_rfpr(ds, th).point:>8.3f}")

#########################################################################
# The simulator keeps the true labels, so the supervised estimators give a
# reference on the same records.

c = build_counts(ds, th)
print(f"{'true labels':<16} {rrecall_direct(c).point:>10.3f} {rfpr_direct(c).point:>8.3f}")

#########################################################################
# Overscoring A's false accepts inflates A's apparent recall, pulling the
# recall ratio down. Underscoring A's true accepts moves A's probability
# mass onto negatives and pushes the FPR ratio up.
