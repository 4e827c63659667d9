"""End-to-end quality-performance model: synthesize, fit, predict.

Uses the command-line entry points in process, exactly as a shell user
would, then compares the predicted false-non-match rate against the
closed-form truth of the synthesis model on a held-out quality grid.
"""

import tempfile
from pathlib import Path

import numpy as np

from veriq import cli
from veriq.dataio import ScoreModel
from veriq.mixture import load_model_json

out = Path(tempfile.mkdtemp(prefix="veriq_demo2_"))
records = out / "records.csv"

cli.main([
    "synth", "--out", str(records),
    "--axes", "2", "--anchors-per-axis", "8",
    "--scores-per-cell", "40", "--n-subjects", "64",
    "--quality-jitter", "0.06",
    "--match-base", "0.8", "--match-gain", "2.0", "--match-spread", "0.6",
    "--seed", "77",
])

print("\nfitting (12 quantiles per axis -> 100 regions, 20 draws each) ...")
cli.main([
    "fit", str(records),
    "--out-model", str(out / "model.json"),
    "--out-bic", str(out / "bic.csv"),
    "--out-grid", str(out / "grid.csv"),
    "--out-posteriors", str(out / "posteriors.csv"),
    "--n-qs", "12", "--n-rand", "20", "--fmr", "0.05",
    "--cov-models", "EII,VII,VVI,VVV",
    "--seed", "11",
])

axis = np.linspace(0.2, 0.8, 7)
held_out = [(float(a), float(b)) for a in axis for b in axis]
queries = out / "queries.csv"
queries.write_text("q1,q2\n" + "\n".join(f"{a!r},{b!r}" for a, b in held_out) + "\n")
cli.main(["predict", str(out / "model.json"), str(queries),
          "--out", str(out / "predictions.csv")])

model, point = load_model_json((out / "model.json").read_text())
truth = ScoreModel(match_base=0.8, match_gain=2.0, match_spread=0.6)
rows = (out / "predictions.csv").read_text().splitlines()[1:]
predicted = np.array([float(r.split(",")[3]) for r in rows])
expected = np.array([truth.fnmr(q, point.threshold) for q in held_out])

print(f"\nselected {model.n_components} components, {model.parametrization}")
print(f"held-out FNMR MAE: {np.mean(np.abs(predicted - expected)):.4f}")
print("\n   q1    q2   predicted   true")
for (a, b), p, t in list(zip(held_out, predicted, expected))[::8]:
    print(f" {a:.2f}  {b:.2f}   {p:9.4f}  {t:.4f}")
print(f"\nartifacts in {out}")
