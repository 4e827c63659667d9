"""Calibrate biased quality measurements against known capture conditions.

Measured (q1, q2) drift with head tilt and lighting angle. Given rows of
measurements tagged with their capture angles, the least-squares fit
recovers a map to an unbiased quality space where the frontal cell is
simply the centered measurement.
"""

import numpy as np

from veriq.quality import apply_iqa_calibration, fit_iqa_calibration

rng = np.random.default_rng(31)

# capture cells: tilt angle x lighting angle, 30 measurements each
rows = []
for tilt in (0.0, 10.0, 20.0):
    for light in (0.0, 18.0):
        true_q = rng.normal(0.0, 1.0, (30, 2))
        # the sensor adds an angle-dependent bias to each axis
        q1 = true_q[:, 0] + 0.08 * tilt + rng.normal(0, 0.02, 30)
        q2 = true_q[:, 1] - 0.03 * light + rng.normal(0, 0.02, 30)
        rows.extend([q1v, q2v, tilt, light] for q1v, q2v in zip(q1, q2))

calibration = fit_iqa_calibration(np.array(rows))
print("4x2 least-squares solution (rows: q1, q2, tilt, light):")
print(np.array_str(calibration.solution, precision=4, suppress_small=True))
print(f"residual orthogonality: {calibration.residual_orthogonality():.2e}")

probe = [0.4, -0.2, 20.0, 18.0]
mapped = apply_iqa_calibration(calibration, probe)
print(f"\nmeasured {probe[:2]} at tilt=20 light=18 -> calibrated "
      f"({mapped[0]:.3f}, {mapped[1]:.3f})")

frontal = apply_iqa_calibration(calibration, [0.4, -0.2, 0.0, 0.0])
print(f"same measurement frontal, no flash        -> calibrated "
      f"({frontal[0]:.3f}, {frontal[1]:.3f})")
