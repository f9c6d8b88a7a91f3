"""Density matrices, photon statistics and Wigner functions of input and echo.

Reconstructs both pulse trains by iterative maximum likelihood and compares
the photon-number distributions with a Poissonian of the same mean, together
with the statistics of a copy degraded by Gaussian noise down to the
classical (0.5) and no-cloning (0.68) fidelity limits.

Pass --full for 100,000 records per train without phase binning (a minute or
two); the default uses 20,000 records and 64 phase bins.
"""

import math
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
from scipy.stats import poisson

from qmemtomo import fockspace as fs
from qmemtomo.benchmark import (
    CLASSICAL_LIMIT,
    NOCLONING_LIMIT,
    calibrate,
    degraded_photon_distribution,
    noise_for_fidelity_target,
    poisson_fit,
)
from qmemtomo.gaussian_sim import DetectionChain, QuadratureDataset, SimulationConfig, simulate_experiment
from qmemtomo.tomography import ReconstructionConfig, reconstruct

OUT = Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)
full = "--full" in sys.argv

n = 100_000 if full else 20_000
config = SimulationConfig(alpha_re=math.sqrt(3.4), eta=0.78, n_pulses=n, seed=7, detection=DetectionChain.ideal())
data = calibrate(QuadratureDataset.concat(list(simulate_experiment(config).values())))
recon = ReconstructionConfig(dim=25, phase_bins=None if full else 64)

rho = {}
for role in ("input", "output"):
    res = reconstruct(data.select(role), recon)
    rho[role] = res.rho
    print(f"{role:>6}: <N> = {res.rho.mean_photon_number():.3f}, {res.iterations_used} iterations")
print(f"fidelity(input, output) = {fs.fidelity(rho['input'], rho['output']):.4f}")

# density-matrix moduli, as in the bar plots of the reconstructed states
fig, axes = plt.subplots(1, 2, figsize=(9, 4))
for ax, role in zip(axes, rho):
    im = ax.imshow(np.abs(rho[role].entries[:10, :10]), cmap="viridis", origin="lower")
    ax.set_title(f"|rho_mn|, {role}")
    ax.set_xlabel("n")
    ax.set_ylabel("m")
    fig.colorbar(im, ax=ax, shrink=0.8)
fig.tight_layout()
fig.savefig(OUT / "density_matrices.png", dpi=150)

# photon statistics with the degradation limits
alpha = rho["input"].expect_a()
gain = abs(rho["output"].expect_a()) / abs(alpha)
k = np.arange(12)
fig, axes = plt.subplots(1, 2, figsize=(9, 4), sharey=True)
for ax, role in zip(axes, rho):
    p = fs.photon_distribution(rho[role])
    mean, tv = poisson_fit(p)
    ax.bar(k, p[: k.size], color="tab:blue", alpha=0.7, label="reconstructed")
    ax.plot(k, poisson.pmf(k, mean), "ko-", ms=3, label=f"Poisson, TV {tv:.3f}")
    if role == "output":
        for target, style in ((CLASSICAL_LIMIT, "r:"), (NOCLONING_LIMIT, "g:")):
            xi = noise_for_fidelity_target(alpha, gain, target)
            q = degraded_photon_distribution(alpha, gain, xi, 64)
            ax.plot(k, q[: k.size], style, lw=2, label=f"F = {target}")
    ax.set_title(role)
    ax.set_xlabel("photon number")
    ax.legend()
fig.tight_layout()
fig.savefig(OUT / "photon_statistics.png", dpi=150)

fig, axes = plt.subplots(1, 2, figsize=(9, 4))
for ax, role in zip(axes, rho):
    half = 2 * math.sqrt(rho[role].mean_photon_number()) + 6.5
    grid = np.linspace(-half, half, 161)
    w = fs.wigner(rho[role], grid, grid)
    ax.contourf(grid, grid, w, 30, cmap="RdBu_r")
    ax.set_aspect("equal")
    ax.set_title(f"Wigner function, {role}")
    ax.set_xlabel("x")
    ax.set_ylabel("p")
fig.tight_layout()
fig.savefig(OUT / "wigner.png", dpi=150)
print(f"wrote density_matrices.png, photon_statistics.png and wigner.png to {OUT}")
