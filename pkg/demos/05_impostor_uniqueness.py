"""Impostor-score uniqueness, and whether it is a stable subject trait.

u near 1 means most impostor scores crowd the subject's maximum (a
"wolf-prone" subject); u near 0.5 is a balanced impostor distribution.
Two sessions with the same per-subject score shape should agree; adding
score noise erodes the agreement.
"""

import numpy as np

from veriq.uniqueness import ium, ium_correlation

rng = np.random.default_rng(13)
n_subjects, n_impostors = 80, 100
skew = rng.uniform(-1.0, 1.0, n_subjects)  # per-subject impostor tail shape


def session(seed, noise_level=0.0):
    srng = np.random.default_rng(seed)
    out = []
    for i in range(n_subjects):
        z = srng.standard_normal(n_impostors)
        tail = srng.exponential(1.0, n_impostors) - 1.0
        scores = z + 1.5 * skew[i] * tail
        if noise_level > 0.0:
            scores = scores + noise_level * np.random.default_rng(
                (2000, i)
            ).standard_normal(n_impostors)
        out.append(ium(list(scores), f"subject{i:02d}"))
    return out


a = session(1001)
b = session(1002)

print("five subjects from session one:")
for r in a[:5]:
    print(f"  {r.subject_id}: u={r.u:.3f} over {r.n_impostors} impostors "
          f"(scores {r.s_min:.2f}..{r.s_max:.2f})")

base = ium_correlation(a, b)
print(f"\ncross-session Pearson r: {base.r:.3f} over {base.n_joined} subjects")

print("\nnoise    r")
for eps in (0.0, 0.5, 1.0, 2.0, 4.0):
    noisy = session(1002, noise_level=eps)
    print(f" {eps:4.1f}  {ium_correlation(a, noisy).r:.3f}")
