"""Fidelity against photon number and the T-V diagram.

Runs the complete benchmark at a few mean photon numbers, plus one point with
excess noise tuned to 93% fidelity and a classical measure-and-resend memory
for comparison. Only the T-V analysis is run for the scan (no reconstruction),
so the fidelities shown are the closed-form values for the simulated channel;
see tests/test_acceptance.py for reconstructed fidelities.
"""

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from qmemtomo.benchmark import CLASSICAL_LIMIT, NOCLONING_LIMIT, noise_for_fidelity_target, noisy_copy_fidelity, tv_analysis
from qmemtomo.gaussian_sim import DetectionChain, QuadratureDataset, SimulationConfig, simulate_experiment

OUT = Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)
G = math.sqrt(0.78)


def run(nbar, eta=0.78, xi=0.0, n=100_000, seed=7):
    cfg = SimulationConfig(alpha_re=math.sqrt(nbar), eta=eta, xi_plus=xi, xi_minus=xi, n_pulses=n, seed=seed)
    trains = simulate_experiment(cfg)
    inp = QuadratureDataset.concat([trains["input"], trains["vacuum"]])
    out = QuadratureDataset.concat([trains["output"], trains["vacuum"], trains["reference"]])
    return tv_analysis(inp, out, DetectionChain()).corrected


nbars = np.logspace(math.log10(0.5), math.log10(25), 40)
ceiling = [noisy_copy_fidelity(math.sqrt(m), G, 0.0) for m in nbars]

# separate seeds, so the points carry independent sampling noise (about 0.03 on T+ + T-)
points = {f"<N>={m:g}": run(m, seed=s) for s, m in enumerate((0.67, 3.4, 16.0), start=1)}
xi93 = noise_for_fidelity_target(math.sqrt(3.4), G, 0.93)
points[f"F=0.93 (xi={xi93:.3f})"] = run(3.4, xi=xi93, seed=4)
points["measure and resend"] = run(3.4, eta=1.0, xi=2.0, seed=5)
for label, t in points.items():
    print(f"{label:>22}: T+ + T- = {t.T_sum:.3f}, V+cv V-cv = {t.V_product:.3f}")

fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
ax1.plot(nbars, ceiling, "k-", label="loss-only ceiling, eta = 0.78")
ax1.axhline(CLASSICAL_LIMIT, color="r", ls=":", label="classical limit")
ax1.axhline(NOCLONING_LIMIT, color="g", ls=":", label="no-cloning limit")
ax1.set_xscale("log")
ax1.set_xlabel("mean photon number")
ax1.set_ylabel("fidelity")
ax1.legend()

for label, t in points.items():
    ax2.plot(t.T_sum, t.V_product, "o", label=label)
ax2.axvline(1.0, color="g", ls=":")
ax2.axhline(1.0, color="g", ls=":")
ax2.fill_between([1, 2], 0, 1, color="g", alpha=0.1)
ax2.set_xlim(0, 2)
ax2.set_ylim(0, 4.5)
ax2.set_xlabel("T+ + T-")
ax2.set_ylabel("V+cv V-cv")
ax2.legend(fontsize=7)
fig.tight_layout()
fig.savefig(OUT / "benchmarks.png", dpi=150)
print(f"wrote {OUT / 'benchmarks.png'}")
