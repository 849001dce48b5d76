"""
Turning machine scores into probabilities
==========================================

A label machine produces raw scores, here on a 0 to 50 scale. A small
annotated set is enough to fit a cubic map from score to probability of a
true accept; the map is then applied to everything else.
"""

import warnings

import numpy as np

from abba import calibration

rng = np.random.default_rng(0)
scores = rng.uniform(0, 50, 2000)
truth = 1 / (1 + np.exp(-0.2 * (scores - 25)))
labels = (rng.random(scores.size) < truth).astype(int)

with warnings.catch_warnings(record=True) as caught:
    warnings.simplefilter("always")
    model = calibration.fit(np.column_stack([scores, labels]))

print("coefficients:", np.round(model.coefficients, 6))
print("monotone on", model.score_domain, ":", model.monotone_on_domain)
for w in caught:
    print("warning:", w.message)

grid = np.linspace(0, 50, 11)
generator = 1 / (1 + np.exp(-0.2 * (grid - 25)))
for m, p, g in zip(grid, model(grid), generator):
    print(f"score {m:5.1f}  fitted {p:.3f}  generator {g:.3f}")

#########################################################################
# A cubic cannot follow a sigmoid's flat tails exactly, so it may turn
# slightly near the ends of the range. That is reported, not fixed; the
# output is clamped to [0, 1] and scores outside the fitted range are
# clamped to it.

fine = np.linspace(0, 50, 501)
mae = np.abs(model(fine) - 1 / (1 + np.exp(-0.2 * (fine - 25)))).mean()
print(f"mean absolute error vs generator: {mae:.4f}")
print(model.to_json())
