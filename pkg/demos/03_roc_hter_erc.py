"""Verification metrics on two synthetic matchers.

A decent matcher and a coin-flip matcher, side by side: ROC area,
half-total error rate at the best fixed threshold, and the error-versus-
reject curve showing how much residual FNMR a quality-based rejector
could remove.
"""

import numpy as np

from veriq.metrics import auc, erc, hter, roc, select_hter_threshold

rng = np.random.default_rng(42)
N = 5000

# matcher A separates the classes by two standard deviations
match_a = rng.normal(2.0, 1.0, N)
nonmatch_a = rng.normal(0.0, 1.0, N)
# matcher B is guessing
match_b = rng.normal(0.0, 1.0, N)
nonmatch_b = rng.normal(0.0, 1.0, N)

for name, m, n in (("matcher A", match_a, nonmatch_a),
                   ("matcher B", match_b, nonmatch_b)):
    curve = roc(m, n)
    t = select_hter_threshold(m, n)
    print(f"{name}: AUC {auc(curve):.4f}  HTER {hter(m, n, t):.4f} at t={t:.3f}")

# ERC: predicted error is the true one plus noise, so rejection is
# informative but imperfect
threshold = select_hter_threshold(match_a, nonmatch_a)
erring = match_a < threshold
predicted = erring.astype(float) + rng.normal(0.0, 0.4, N)
attempts = [(float(s), "match", float(p)) for s, p in zip(match_a, predicted)]
curve = erc(attempts, threshold)

print(f"\nbaseline FNMR {curve.residual[0]:.4f}")
print("reject   residual   ideal")
for frac in (0.05, 0.10, 0.20, 0.40):
    i = int(np.flatnonzero(np.isclose(curve.fractions, frac))[0])
    print(f"  {frac:.2f}   {curve.residual[i]:8.4f}  {curve.ideal[i]:6.4f}")
