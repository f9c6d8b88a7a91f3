"""Memory benchmarks: fidelity bounds, T-V diagram and photon statistics.

Conditional variances are inferred from the per-quadrature gain and the input
and output variances, ``Vcv = V_out - g^2 V_in``. Input and output pulses are
never measured jointly, so this is a model-based estimate valid for a channel
that adds noise uncorrelated with the signal.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np
from scipy.stats import poisson

from . import fockspace as fs
from .fockspace import FockDensityMatrix, TruncationError
from .gaussian_sim import (
    TWO_PI,
    DetectionChain,
    FitError,
    QuadratureDataset,
    estimate_efficiency,
    estimate_phase,
    fit_fringe,
)
from .tomography import ReconstructionConfig, reconstruct


CLASSICAL_LIMIT = 0.5
NOCLONING_LIMIT = 0.68
APPLICABILITY_NOISE = 0.1
RESOLUTION_MIN = 5.0
MIN_WINDOW_RECORDS = 10

VCV_NOTE = (
    "Vcv = V_out - g^2 V_in, inferred from fringe gains and variances under an "
    "uncorrelated-added-noise channel model; input and output are not jointly measured."
)


@dataclass(frozen=True)
class PulseStatistics:
    """Fringe amplitudes and variances on the amplitude (x) and phase (p) quadratures."""

    signal_amp_x: float
    signal_amp_p: float
    var_x: float
    var_p: float
    n_records: int
    signal_amp_x_se: float = 0.0
    signal_amp_p_se: float = 0.0

    def __post_init__(self):
        if self.var_x <= 0 or self.var_p <= 0:
            raise ValueError("variances must be > 0")
        if self.n_records < 2:
            raise ValueError("need at least 2 records")

    def resolution(self, quadrature: str) -> float:
        s, v = (self.signal_amp_x, self.var_x) if quadrature == "x" else (self.signal_amp_p, self.var_p)
        return abs(s) / math.sqrt(v / self.n_records)


def _circular_distance(a, b):
    d = np.mod(a - b, TWO_PI)
    return np.minimum(d, TWO_PI - d)


def pulse_statistics(records: QuadratureDataset, phase_reference: float, window: float = 0.1) -> PulseStatistics:
    """Signal amplitudes and noise variances of a pulse train.

    S+ and S- are the fitted fringe projected on ``phase_reference`` and
    ``phase_reference + pi/2``. V+ and V- are variances of the fit residuals
    for records within ``window`` radians of either extremum (V+) or either
    zero crossing (V-) of the fringe.
    """
    fit = fit_fringe(records.lo_phase, records.value, min_snr=0.0)
    resid = records.value - fit.model(records.lo_phase)
    variances = []
    for centre in (phase_reference, phase_reference + 0.5 * math.pi):
        sel = (_circular_distance(records.lo_phase, centre) <= window) | (
            _circular_distance(records.lo_phase, centre + math.pi) <= window
        )
        if np.count_nonzero(sel) < MIN_WINDOW_RECORDS:
            raise FitError(f"only {np.count_nonzero(sel)} records within +-{window} rad of {centre:.3f}")
        variances.append(float(np.var(resid[sel], ddof=1)))
    return PulseStatistics(
        signal_amp_x=fit.projected(phase_reference),
        signal_amp_p=fit.projected(phase_reference + 0.5 * math.pi),
        var_x=variances[0],
        var_p=variances[1],
        n_records=len(records),
        signal_amp_x_se=fit.projected_se(phase_reference),
        signal_amp_p_se=fit.projected_se(phase_reference + 0.5 * math.pi),
    )


def correct_for_detection(stats: PulseStatistics, chain: DetectionChain) -> PulseStatistics:
    """Extrapolate amplitudes and variances to the state before detection losses."""
    eta = chain.total_efficiency
    if not 0.0 < eta <= 1.0:
        raise ValueError("total detection efficiency must lie in (0, 1]")
    scale = 1.0 / math.sqrt(eta)
    vx = (stats.var_x - (1.0 - eta)) / eta
    vp = (stats.var_p - (1.0 - eta)) / eta
    if vx <= 0 or vp <= 0:
        raise ValueError("corrected variance <= 0; calibration is inconsistent with the detection chain")
    return replace(
        stats,
        signal_amp_x=stats.signal_amp_x * scale,
        signal_amp_p=stats.signal_amp_p * scale,
        var_x=vx,
        var_p=vp,
        signal_amp_x_se=stats.signal_amp_x_se * scale,
        signal_amp_p_se=stats.signal_amp_p_se * scale,
    )


@dataclass(frozen=True)
class TVMetrics:
    T_plus: float
    T_minus: float
    Vcv_plus: float
    Vcv_minus: float
    gain_plus: float
    gain_minus: float
    warnings: tuple = ()

    @property
    def T_sum(self) -> float:
        return self.T_plus + self.T_minus

    @property
    def V_product(self) -> float:
        return self.Vcv_plus * self.Vcv_minus


def tv_metrics(inp: PulseStatistics, out: PulseStatistics) -> TVMetrics:
    """Signal-transfer coefficients and conditional variances per quadrature.

    g = S_out / S_in, T = g^2 V_in / V_out, Vcv = V_out - g^2 V_in (clamped at 0).
    A phase quadrature without resolvable input signal borrows the amplitude
    gain (phase-insensitive channel).
    """
    notes = []
    if inp.resolution("x") <= RESOLUTION_MIN:
        raise ValueError("input amplitude-quadrature signal is not resolved; gain is undefined")
    g_plus = out.signal_amp_x / inp.signal_amp_x
    if inp.resolution("p") > RESOLUTION_MIN:
        g_minus = out.signal_amp_p / inp.signal_amp_p
    else:
        g_minus = g_plus
        notes.append("phase-quadrature input signal unresolved; using amplitude gain for g-")
    t_plus = g_plus**2 * inp.var_x / out.var_x
    t_minus = g_minus**2 * inp.var_p / out.var_p
    vcv = []
    for label, v_out, g, v_in in (("+", out.var_x, g_plus, inp.var_x), ("-", out.var_p, g_minus, inp.var_p)):
        v = v_out - g * g * v_in
        if v < 0:
            notes.append(f"Vcv{label} estimate {v:.4g} < 0 clamped to 0")
            v = 0.0
        vcv.append(v)
    for note in notes:
        warnings.warn(note, stacklevel=2)
    return TVMetrics(t_plus, t_minus, vcv[0], vcv[1], g_plus, g_minus, tuple(notes))


def nocloning_verdict(t_plus: float, t_minus: float, vcv_plus: float, vcv_minus: float) -> bool:
    """True iff T+ + T- >= 1 and V+cv * V-cv <= 1 (both inclusive)."""
    return bool(t_plus + t_minus >= 1.0 and vcv_plus * vcv_minus <= 1.0)


def max_noiseless_fidelity(rho_in: FockDensityMatrix, eta: float) -> float:
    """Fidelity ceiling of a memory that only loses photons."""
    return fs.fidelity(rho_in, fs.loss_channel(rho_in, eta))


def _target_state_params(alpha: complex, gain: float):
    alpha = complex(alpha)
    mean = 2.0 * gain * np.array([alpha.real, alpha.imag])
    return alpha, mean


def noisy_copy_fidelity(alpha: complex, gain: float, xi: float, dim: int | None = None) -> float:
    """Fidelity between |alpha> and the Gaussian copy (mean gain*alpha, cov (1+xi) I).

    Evaluated in the Fock basis; since the input is pure this is <alpha|sigma|alpha>.
    """
    alpha, mean = _target_state_params(alpha, gain)
    dim = dim or fs.default_dim(abs(alpha) ** 2)
    psi = fs.coherent_amplitudes(alpha, dim)
    if 1.0 - float(np.sum(np.abs(psi) ** 2)) > 1e-9:
        raise TruncationError(f"dim={dim} too small for |alpha|^2={abs(alpha) ** 2:.3f}")
    sigma = fs.gaussian_fock(mean, (1.0 + xi) * np.eye(2), dim)
    return float(np.real(psi.conj() @ sigma @ psi))


def noise_for_fidelity_target(alpha: complex, gain: float, target_fidelity: float, dim: int | None = None) -> float:
    """Symmetric excess noise xi that degrades the copy's fidelity to ``target_fidelity``.

    Bisection on xi in [0, 100].

    Raises
    ------
    ValueError
        If the target exceeds the noiseless fidelity or is not reached by xi = 100.
    """
    if not 0.0 < target_fidelity <= 1.0:
        raise ValueError("target fidelity must lie in (0, 1]")

    def f(xi):
        return noisy_copy_fidelity(alpha, gain, xi, dim)

    lo, hi = 0.0, 100.0
    f_lo = f(lo)
    if target_fidelity > f_lo + 1e-12:
        raise ValueError(f"target {target_fidelity} exceeds noiseless fidelity {f_lo:.6f}")
    if abs(f_lo - target_fidelity) <= 1e-12:
        return 0.0
    if f(hi) > target_fidelity:
        raise ValueError("target not reached for xi <= 100")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if abs(fm - target_fidelity) < 1e-9 or hi - lo < 1e-12:
            return mid
        if fm > target_fidelity:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def degraded_photon_distribution(alpha: complex, gain: float, xi: float, dim: int) -> np.ndarray:
    """Photon statistics of the noisy copy (mean gain*alpha, cov (1+xi) I).

    Coherent-state Poissonians averaged over the Gaussian displacement
    distribution by tensor Gauss-Hermite quadrature.
    """
    if xi < 0:
        raise ValueError("xi must be >= 0")
    _, mean = _target_state_params(alpha, gain)
    p = np.real(np.diag(fs.gaussian_fock(mean, (1.0 + xi) * np.eye(2), dim)))
    if p.sum() < 1.0 - 1e-6:
        raise TruncationError(f"dim={dim} captures only {p.sum():.8f} of the degraded distribution")
    return np.clip(p, 0.0, None)


def poisson_fit(distribution) -> tuple[float, float]:
    """Mean photon number and total-variation distance to Poisson(mean).

    The Poisson tail beyond the truncation counts towards the distance.
    """
    p = np.asarray(distribution, dtype=float)
    if abs(p.sum() - 1.0) > 1e-6:
        raise ValueError("distribution does not sum to 1")
    n = np.arange(p.size)
    mean = float(n @ p)
    q = poisson.pmf(n, mean)
    tv = 0.5 * (np.abs(p - q).sum() + max(1.0 - q.sum(), 0.0))
    return mean, float(tv)


@dataclass(frozen=True)
class BenchmarkConfig:
    reconstruction: ReconstructionConfig | None = None
    window: float = 0.1
    applicability_noise: float = APPLICABILITY_NOISE
    label: str = ""


@dataclass
class BenchmarkReport:
    efficiency: float
    efficiency_se: float
    fidelity: float
    fidelity_corrected: float
    max_noiseless_fidelity: float
    T_plus: float
    T_minus: float
    Vcv_plus: float
    Vcv_minus: float
    tv_nocloning_pass: bool
    fidelity_nocloning_pass: bool
    coherent_benchmark_applicable: bool
    fidelity_classical_limit: float = CLASSICAL_LIMIT
    fidelity_nocloning_limit: float = NOCLONING_LIMIT
    label: str = ""
    mean_photon_number_in: float = float("nan")
    mean_photon_number_out: float = float("nan")
    input_excess_noise: float = 0.0
    raw_tv: dict = field(default_factory=dict)
    corrected_stats: dict = field(default_factory=dict)
    raw_stats: dict = field(default_factory=dict)
    detection_efficiency: float = 1.0
    reconstruction: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    partial: bool = False
    notes: str = VCV_NOTE
    reconstructions: tuple = field(default=(), repr=False, compare=False)

    @property
    def T_sum(self) -> float:
        return self.T_plus + self.T_minus

    @property
    def V_product(self) -> float:
        return self.Vcv_plus * self.Vcv_minus

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "reconstructions"}
        d = json.loads(json.dumps(d))
        d["T_sum"] = self.T_sum
        d["V_product"] = self.V_product
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"


TV_HEADER = ["label", "T_sum", "V_product", "T_plus", "T_minus", "Vcv_plus", "Vcv_minus"]
FIDELITY_HEADER = [
    "label",
    "mean_photon_number",
    "fidelity",
    "fidelity_corrected",
    "max_noiseless_fidelity",
    "efficiency",
    "classical_limit",
    "nocloning_limit",
]


def _fmt(v):
    return f"{v:.17g}" if isinstance(v, float) else str(v)


def write_tv_csv(reports, path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(TV_HEADER)
        for r in reports:
            out.writerow([_fmt(v) for v in (r.label, r.T_sum, r.V_product, r.T_plus, r.T_minus, r.Vcv_plus, r.Vcv_minus)])


def write_fidelity_csv(reports, path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(FIDELITY_HEADER)
        for r in reports:
            row = (
                r.label,
                r.mean_photon_number_in,
                r.fidelity,
                r.fidelity_corrected,
                r.max_noiseless_fidelity,
                r.efficiency,
                r.fidelity_classical_limit,
                r.fidelity_nocloning_limit,
            )
            out.writerow([_fmt(v) for v in row])


def calibrate(dataset: QuadratureDataset) -> QuadratureDataset:
    """Normalize values to the dataset's own vacuum (shot-noise) records."""
    vac = dataset.select("vacuum")
    if len(vac) < 2:
        raise ValueError("dataset has no vacuum calibration records")
    mu = float(vac.value.mean())
    sd = float(vac.value.std(ddof=1))
    return dataset.with_values((dataset.value - mu) / sd)


def _gaussian_model_fidelity(inp: PulseStatistics, out: PulseStatistics) -> float:
    """Fidelity of the Gaussian states implied by the corrected moments."""
    states = []
    for s in (inp, out):
        mean = np.array([s.signal_amp_x, s.signal_amp_p])
        cov = np.diag([max(s.var_x, 1.0), max(s.var_p, 1.0)])
        states.append((mean, cov))
    nbar = max((m @ m + np.trace(c) - 2.0) / 4.0 for m, c in states)
    dim = fs.MAX_DEFAULT_DIM
    for d in range(fs.default_dim(nbar), fs.MAX_DEFAULT_DIM + 1, 8):
        if all(np.trace(fs.gaussian_fock(m, c, d)).real > 1.0 - 1e-6 for m, c in states):
            dim = d
            break
    rhos = [fs.gaussian_state_fock(m, c, dim, tolerance=1e-3) for m, c in states]
    return fs.fidelity(*rhos)


def _stats_dict(s: PulseStatistics) -> dict:
    return asdict(s)


@dataclass(frozen=True)
class TVAnalysis:
    """Pulse statistics and T-V metrics of one memory run, before and after detection correction."""

    records_in: QuadratureDataset
    records_out: QuadratureDataset
    raw_in: PulseStatistics
    raw_out: PulseStatistics
    corrected_in: PulseStatistics
    corrected_out: PulseStatistics
    raw: TVMetrics
    corrected: TVMetrics
    efficiency: float
    efficiency_se: float
    notes: tuple = ()


def tv_analysis(
    input_dataset: QuadratureDataset,
    output_dataset: QuadratureDataset,
    chain: DetectionChain | None = None,
    window: float = 0.1,
) -> TVAnalysis:
    """Calibrate, fit fringes, estimate efficiency and compute raw and corrected T-V metrics.

    Reference pulses (off-resonant, same size as the input) are looked up in
    the output dataset, then the input dataset; without them the efficiency
    falls back to the amplitude gain squared.
    """
    chain = chain or DetectionChain()
    notes = []
    cin = calibrate(input_dataset)
    cout = calibrate(output_dataset)
    rec_in = cin.select("input")
    rec_out = cout.select("output")
    if len(rec_in) == 0 or len(rec_out) == 0:
        raise ValueError("need input records in the input dataset and output records in the output dataset")

    phi_in, _ = estimate_phase(rec_in)
    phi_out, _ = estimate_phase(rec_out)
    raw_in = pulse_statistics(rec_in, phi_in, window)
    raw_out = pulse_statistics(rec_out, phi_out, window)

    ref = cout.select("reference")
    if len(ref) == 0:
        ref = cin.select("reference")
    fit_out = fit_fringe(rec_out.lo_phase, rec_out.value, min_snr=0.0)
    if len(ref):
        eta_hat, eta_se = estimate_efficiency(fit_out, fit_fringe(ref.lo_phase, ref.value))
    else:
        fit_in = fit_fringe(rec_in.lo_phase, rec_in.value)
        eta_hat, eta_se = estimate_efficiency(fit_out, fit_in)
        notes.append("no reference pulses; efficiency taken from input/output amplitude ratio")

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        tv_raw = tv_metrics(raw_in, raw_out)
        corr_in = correct_for_detection(raw_in, chain)
        corr_out = correct_for_detection(raw_out, chain)
        tv = tv_metrics(corr_in, corr_out)
    notes.extend(dict.fromkeys(str(w.message) for w in caught))
    return TVAnalysis(rec_in, rec_out, raw_in, raw_out, corr_in, corr_out, tv_raw, tv, eta_hat, eta_se, tuple(notes))


def full_report(
    input_dataset: QuadratureDataset,
    output_dataset: QuadratureDataset,
    chain: DetectionChain | None = None,
    config: BenchmarkConfig | None = None,
) -> BenchmarkReport:
    """Complete benchmark of one memory run: T-V analysis plus MLE on both trains.

    Both datasets need vacuum records; see ``tv_analysis`` for the efficiency estimate.
    """
    chain = chain or DetectionChain()
    config = config or BenchmarkConfig()
    tva = tv_analysis(input_dataset, output_dataset, chain, config.window)
    notes = list(tva.notes)
    rec_in, rec_out = tva.records_in, tva.records_out
    raw_in, raw_out, corr_in, corr_out = tva.raw_in, tva.raw_out, tva.corrected_in, tva.corrected_out
    tv_raw, tv = tva.raw, tva.corrected
    eta_hat, eta_se = tva.efficiency, tva.efficiency_se

    recon_cfg = config.reconstruction
    if recon_cfg is None:
        nbar_guess = (raw_in.signal_amp_x**2 + raw_in.signal_amp_p**2) / 4.0
        recon_cfg = ReconstructionConfig(dim=max(fs.default_dim(nbar_guess), 2))
    res_in = reconstruct(rec_in, recon_cfg)
    res_out = reconstruct(rec_out, recon_cfg)
    partial = not (res_in.converged and res_out.converged)
    if partial:
        notes.append("maximum-likelihood reconstruction hit max_iterations")

    fid = fs.fidelity(res_in.rho, res_out.rho)
    f_max = max_noiseless_fidelity(res_in.rho, min(max(eta_hat, 0.0), 1.0))
    try:
        f_corr = _gaussian_model_fidelity(corr_in, corr_out)
    except (TruncationError, ValueError) as exc:
        f_corr = float("nan")
        notes.append(f"corrected fidelity unavailable: {exc}")

    excess = max(corr_in.var_x, corr_in.var_p) - 1.0
    applicable = excess < config.applicability_noise
    if not applicable:
        notes.append(
            f"input excess noise {excess:.3f} >= {config.applicability_noise}: coherent-state "
            "fidelity benchmarks not applicable"
        )

    return BenchmarkReport(
        efficiency=eta_hat,
        efficiency_se=eta_se,
        fidelity=fid,
        fidelity_corrected=f_corr,
        max_noiseless_fidelity=f_max,
        T_plus=tv.T_plus,
        T_minus=tv.T_minus,
        Vcv_plus=tv.Vcv_plus,
        Vcv_minus=tv.Vcv_minus,
        tv_nocloning_pass=nocloning_verdict(tv.T_plus, tv.T_minus, tv.Vcv_plus, tv.Vcv_minus),
        fidelity_nocloning_pass=bool(fid >= NOCLONING_LIMIT),
        coherent_benchmark_applicable=bool(applicable),
        label=config.label,
        mean_photon_number_in=res_in.rho.mean_photon_number(),
        mean_photon_number_out=res_out.rho.mean_photon_number(),
        input_excess_noise=excess,
        raw_tv={
            "T_plus": tv_raw.T_plus,
            "T_minus": tv_raw.T_minus,
            "Vcv_plus": tv_raw.Vcv_plus,
            "Vcv_minus": tv_raw.Vcv_minus,
            "nocloning_pass": nocloning_verdict(tv_raw.T_plus, tv_raw.T_minus, tv_raw.Vcv_plus, tv_raw.Vcv_minus),
        },
        corrected_stats={"input": _stats_dict(corr_in), "output": _stats_dict(corr_out)},
        raw_stats={"input": _stats_dict(raw_in), "output": _stats_dict(raw_out)},
        detection_efficiency=chain.total_efficiency,
        reconstruction={
            "dim": recon_cfg.dim,
            "iterations_in": res_in.iterations_used,
            "iterations_out": res_out.iterations_used,
            "converged": not partial,
        },
        warnings=notes,
        partial=partial,
        reconstructions=(res_in, res_out),
    )
