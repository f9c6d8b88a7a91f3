"""Gaussian-moment simulation of a homodyne quantum-memory experiment.

The memory is a phase-insensitive Gaussian channel (efficiency ``eta`` plus
excess noise ``xi_plus``/``xi_minus`` in vacuum units). Quadrature values are
already-integrated pulse amplitudes, one scalar per pulse, normalized so that
the vacuum variance is 1.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

CONVENTION = "x=a+adag, Vvac=1"
ROLES = ("input", "output", "vacuum", "reference")
TWO_PI = 2.0 * math.pi
DEFAULT_JITTER = 0.029


class ConfigError(ValueError):
    """Invalid simulation or detection parameters."""


class FitError(RuntimeError):
    """Fringe fit did not produce a usable estimate."""


def rotation(phi: float) -> np.ndarray:
    c, s = math.cos(phi), math.sin(phi)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class GaussianState:
    """Single-mode Gaussian state: quadrature means and covariance matrix."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(2)
        cov = np.asarray(self.cov, dtype=float).reshape(2, 2)
        if abs(cov[0, 1] - cov[1, 0]) > 1e-12:
            raise ValueError("covariance matrix is not symmetric")
        cov = 0.5 * (cov + cov.T)
        if np.linalg.eigvalsh(cov)[0] < 1.0 - 1e-9:
            raise ValueError("covariance below the vacuum level")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @classmethod
    def vacuum(cls) -> "GaussianState":
        return cls(np.zeros(2), np.eye(2))

    @classmethod
    def coherent(cls, alpha: complex, excess_noise: float = 0.0) -> "GaussianState":
        """Coherent state, optionally with symmetric excess noise on both quadratures."""
        alpha = complex(alpha)
        return cls(np.array([2.0 * alpha.real, 2.0 * alpha.imag]), (1.0 + excess_noise) * np.eye(2))

    @property
    def alpha(self) -> complex:
        return complex(self.mean[0], self.mean[1]) / 2.0

    @property
    def amplitude(self) -> float:
        """Fringe amplitude S = |mean|."""
        return float(np.hypot(*self.mean))

    def mean_photon_number(self) -> float:
        return float((self.mean @ self.mean + np.trace(self.cov) - 2.0) / 4.0)

    def quadrature_moments(self, theta):
        """Mean and variance of x_theta = x cos(theta) + p sin(theta)."""
        c, s = np.cos(theta), np.sin(theta)
        mean = self.mean[0] * c + self.mean[1] * s
        var = self.cov[0, 0] * c * c + 2.0 * self.cov[0, 1] * c * s + self.cov[1, 1] * s * s
        return mean, var


@dataclass(frozen=True)
class ChannelModel:
    eta: float
    xi_plus: float = 0.0
    xi_minus: float = 0.0
    phase_offset: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ConfigError(f"eta={self.eta} outside [0, 1]")
        if self.xi_plus < 0 or self.xi_minus < 0:
            raise ConfigError("excess noise must be >= 0")


@dataclass(frozen=True)
class DetectionChain:
    eta_detector: float = 0.90
    visibility: float = 0.97
    eta_filter: float = 0.70
    visibility_power: int = 2

    def __post_init__(self):
        for name in ("eta_detector", "visibility", "eta_filter"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ConfigError(f"{name}={v} outside (0, 1]")
        if self.visibility_power not in (1, 2):
            raise ConfigError("visibility_power must be 1 or 2")

    @property
    def total_efficiency(self) -> float:
        return self.eta_detector * self.visibility**self.visibility_power * self.eta_filter

    @classmethod
    def ideal(cls) -> "DetectionChain":
        return cls(1.0, 1.0, 1.0)


def apply_channel(state: GaussianState, channel: ChannelModel) -> GaussianState:
    """Propagate moments through loss, rotation and additive noise.

    mean -> sqrt(eta) R mean,  cov -> eta R cov R^T + (1 - eta) I + diag(xi+, xi-)
    """
    r = rotation(channel.phase_offset)
    mean = math.sqrt(channel.eta) * (r @ state.mean)
    cov = channel.eta * (r @ state.cov @ r.T) + (1.0 - channel.eta) * np.eye(2)
    cov = cov + np.diag([channel.xi_plus, channel.xi_minus])
    return GaussianState(mean, cov)


def detect(state: GaussianState, chain: DetectionChain) -> GaussianState:
    """Moments seen by the homodyne after the detection chain losses."""
    return apply_channel(state, ChannelModel(chain.total_efficiency))


@dataclass
class QuadratureDataset:
    """Tagged homodyne records.

    Parallel arrays ``pulse_index``, ``lo_phase`` (in [0, 2 pi)), ``value`` and
    ``role``. Simulated datasets also carry the per-record moments they were
    drawn from, which ``apply_detection`` transforms before re-sampling.
    """

    pulse_index: np.ndarray
    lo_phase: np.ndarray
    value: np.ndarray
    role: np.ndarray
    metadata: dict = field(default_factory=dict)
    true_mean: np.ndarray | None = field(default=None, repr=False)
    true_var: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.pulse_index = np.asarray(self.pulse_index, dtype=np.int64)
        self.lo_phase = np.asarray(self.lo_phase, dtype=float)
        self.value = np.asarray(self.value, dtype=float)
        self.role = np.asarray(self.role, dtype=object)
        n = self.value.size
        if not (self.pulse_index.size == self.lo_phase.size == self.role.size == n):
            raise ValueError("record arrays differ in length")
        if n and (np.any(self.lo_phase < 0) or np.any(self.lo_phase >= TWO_PI)):
            raise ValueError("lo_phase must lie in [0, 2 pi)")
        bad = set(self.role.tolist()) - set(ROLES)
        if bad:
            raise ValueError(f"unknown roles {sorted(bad)}")

    def __len__(self) -> int:
        return self.value.size

    @property
    def counts(self) -> dict:
        return {r: int(np.count_nonzero(self.role == r)) for r in ROLES if np.any(self.role == r)}

    @property
    def roles(self) -> list[str]:
        return list(self.counts)

    def _subset(self, mask) -> "QuadratureDataset":
        return QuadratureDataset(
            self.pulse_index[mask],
            self.lo_phase[mask],
            self.value[mask],
            self.role[mask],
            dict(self.metadata),
            None if self.true_mean is None else self.true_mean[mask],
            None if self.true_var is None else self.true_var[mask],
        )

    def select(self, role: str) -> "QuadratureDataset":
        if role not in ROLES:
            raise ValueError(f"unknown role {role!r}")
        return self._subset(self.role == role)

    def take(self, idx) -> "QuadratureDataset":
        return self._subset(np.asarray(idx))

    def with_values(self, values) -> "QuadratureDataset":
        return replace(self, value=np.asarray(values, dtype=float), true_mean=None, true_var=None)

    @staticmethod
    def concat(parts) -> "QuadratureDataset":
        parts = list(parts)
        has_moments = all(p.true_mean is not None for p in parts)
        meta = {}
        for p in parts:
            meta.update(p.metadata)
        out = QuadratureDataset(
            np.concatenate([p.pulse_index for p in parts]),
            np.concatenate([p.lo_phase for p in parts]),
            np.concatenate([p.value for p in parts]),
            np.concatenate([p.role for p in parts]),
            meta,
            np.concatenate([p.true_mean for p in parts]) if has_moments else None,
            np.concatenate([p.true_var for p in parts]) if has_moments else None,
        )
        out.metadata["n_per_role"] = out.counts
        return out

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["pulse_index", "lo_phase_rad", "value", "role"])
            for i, ph, v, r in zip(self.pulse_index, self.lo_phase, self.value, self.role):
                out.writerow([int(i), f"{ph:.17g}", f"{v:.17g}", r])

    @classmethod
    def from_csv(cls, path) -> "QuadratureDataset":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0] != ["pulse_index", "lo_phase_rad", "value", "role"]:
            raise ValueError(f"{path}: missing or wrong header")
        body = rows[1:]
        for k, row in enumerate(body, start=2):
            if len(row) != 4:
                raise ValueError(f"{path}:{k}: expected 4 fields, got {len(row)}")
        try:
            idx = [int(r[0]) for r in body]
            phase = [float(r[1]) for r in body]
            value = [float(r[2]) for r in body]
        except ValueError as exc:
            raise ValueError(f"{path}: {exc}") from None
        if not np.all(np.isfinite(value)):
            raise ValueError(f"{path}: non-finite quadrature value")
        ds = cls(idx, phase, value, [r[3] for r in body])
        sidecar = metadata_path(path)
        if sidecar.exists():
            ds.metadata = json.loads(sidecar.read_text())
        return ds


def metadata_path(csv_path) -> Path:
    p = Path(csv_path)
    return p.with_name(p.stem + ".meta.json")


def write_metadata(path, metadata: dict) -> None:
    Path(path).write_text(json.dumps(metadata, indent=1, sort_keys=True) + "\n")


def phase_schedule(n_pulses: int, kind: str = "linear", rng=None) -> np.ndarray:
    """LO phases for a pulse train: a linear sweep over [0, 2 pi) or uniform-random."""
    if kind == "linear":
        return TWO_PI * np.arange(n_pulses) / n_pulses
    if kind == "random":
        if rng is None:
            raise ValueError("random schedule needs a generator")
        return np.mod(rng.uniform(0.0, TWO_PI, n_pulses), TWO_PI)
    raise ConfigError(f"unknown phase schedule {kind!r}")


def _role_seed(seed: int, role: str) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), ROLES.index(role)])


def simulate_pulse_train(
    state: GaussianState,
    n_pulses: int,
    phase_schedule_kind="linear",
    phase_jitter_sigma: float = DEFAULT_JITTER,
    seed: int = 0,
    role: str = "input",
) -> QuadratureDataset:
    """Draw one integrated homodyne value per pulse.

    The recorded ``lo_phase`` is the scheduled phase; the value is drawn at the
    effective phase ``lo_phase + eps`` with ``eps ~ N(0, sigma^2)``.
    ``phase_schedule_kind`` is ``"linear"``, ``"random"`` or an explicit array.
    """
    if n_pulses < 1:
        raise ConfigError("n_pulses must be >= 1")
    if phase_jitter_sigma < 0:
        raise ConfigError("phase jitter must be >= 0")
    phase_rng, jitter_rng, noise_rng = (
        np.random.default_rng(s) for s in _role_seed(seed, role).spawn(3)
    )
    if isinstance(phase_schedule_kind, str):
        lo = phase_schedule(n_pulses, phase_schedule_kind, phase_rng)
    else:
        lo = np.mod(np.asarray(phase_schedule_kind, dtype=float), TWO_PI)
        if lo.size != n_pulses:
            raise ConfigError("explicit schedule length differs from n_pulses")
    theta = lo + phase_jitter_sigma * jitter_rng.standard_normal(n_pulses)
    mean, var = state.quadrature_moments(theta)
    value = mean + np.sqrt(var) * noise_rng.standard_normal(n_pulses)
    meta = {
        "seed": int(seed),
        "n_per_role": {role: int(n_pulses)},
        "convention": CONVENTION,
        "phase_jitter_sigma": float(phase_jitter_sigma),
    }
    return QuadratureDataset(
        np.arange(n_pulses), lo, value, np.full(n_pulses, role, dtype=object), meta, mean, var
    )


def apply_detection(dataset: QuadratureDataset, chain: DetectionChain, seed: int = 0) -> QuadratureDataset:
    """Pass records through the detection losses.

    The per-record moments are transformed (mean * sqrt(eta), var * eta + 1 - eta)
    and the values re-drawn. Datasets without moments (read from disk) get the
    equivalent single-shot beam-splitter mixing with a fresh vacuum sample.
    """
    eta = chain.total_efficiency
    if eta == 1.0:
        return replace(dataset, metadata=dict(dataset.metadata))
    out_values = np.empty_like(dataset.value)
    out_mean = None if dataset.true_mean is None else math.sqrt(eta) * dataset.true_mean
    out_var = None if dataset.true_var is None else eta * dataset.true_var + (1.0 - eta)
    for role in ROLES:
        mask = dataset.role == role
        if not np.any(mask):
            continue
        z = np.random.default_rng(_role_seed(seed, role).spawn(4)[3]).standard_normal(np.count_nonzero(mask))
        if out_mean is not None:
            out_values[mask] = out_mean[mask] + np.sqrt(out_var[mask]) * z
        else:
            out_values[mask] = math.sqrt(eta) * dataset.value[mask] + math.sqrt(1.0 - eta) * z
    meta = dict(dataset.metadata)
    meta["detection_efficiency"] = eta
    return replace(dataset, value=out_values, metadata=meta, true_mean=out_mean, true_var=out_var)


@dataclass(frozen=True)
class FringeFit:
    """Least-squares fit ``value ~ amplitude * cos(lo_phase - phase)``."""

    amplitude: float
    phase: float
    amplitude_se: float
    phase_se: float
    cos_coef: float
    sin_coef: float
    coef_cov: np.ndarray = field(repr=False)
    residual_var: float
    n: int

    def projected(self, phi: float) -> float:
        """Signal amplitude along the quadrature at angle ``phi``."""
        return self.cos_coef * math.cos(phi) + self.sin_coef * math.sin(phi)

    def projected_se(self, phi: float) -> float:
        u = np.array([math.cos(phi), math.sin(phi)])
        return float(math.sqrt(max(u @ self.coef_cov @ u, 0.0)))

    def model(self, lo_phase) -> np.ndarray:
        return self.cos_coef * np.cos(lo_phase) + self.sin_coef * np.sin(lo_phase)


def _phase_span(phases: np.ndarray) -> float:
    ph = np.sort(np.mod(phases, TWO_PI))
    gaps = np.diff(np.concatenate([ph, [ph[0] + TWO_PI]]))
    return TWO_PI - float(gaps.max())


def fit_fringe(lo_phase, value, min_snr: float = 3.0) -> FringeFit:
    """Linear least-squares fringe fit with standard errors.

    Raises
    ------
    FitError
        Fewer than 8 records, phases spanning less than pi, or an amplitude
        within ``min_snr`` standard errors of zero.
    """
    lo_phase = np.asarray(lo_phase, dtype=float)
    value = np.asarray(value, dtype=float)
    if lo_phase.size < 8:
        raise FitError("need at least 8 records for a fringe fit")
    if _phase_span(lo_phase) < math.pi - 1e-12:
        raise FitError("records must span at least pi of LO phase")
    design = np.column_stack([np.cos(lo_phase), np.sin(lo_phase)])
    coef, _, rank, _ = np.linalg.lstsq(design, value, rcond=None)
    if rank < 2:
        raise FitError("degenerate phase coverage")
    resid = value - design @ coef
    dof = max(value.size - 2, 1)
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(design.T @ design)
    a, b = float(coef[0]), float(coef[1])
    amp = math.hypot(a, b)
    if amp == 0.0:
        raise FitError("fringe amplitude is exactly zero")
    amp_se = math.sqrt(max((a * a * cov[0, 0] + 2 * a * b * cov[0, 1] + b * b * cov[1, 1]) / amp**2, 0.0))
    phase_se = math.sqrt(max((b * b * cov[0, 0] - 2 * a * b * cov[0, 1] + a * a * cov[1, 1]) / amp**4, 0.0))
    fit = FringeFit(amp, math.atan2(b, a) % TWO_PI, amp_se, phase_se, a, b, cov, s2, value.size)
    if amp < min_snr * amp_se:
        raise FitError(f"fringe amplitude {amp:.3g} is indistinguishable from noise (se {amp_se:.3g})")
    return fit


def estimate_phase(records: QuadratureDataset) -> tuple[float, float]:
    """Fringe phase in [0, 2 pi) and its standard error."""
    fit = fit_fringe(records.lo_phase, records.value)
    return fit.phase, fit.phase_se


def estimate_efficiency(stored: FringeFit, reference: FringeFit) -> tuple[float, float]:
    """Memory efficiency (S_stored / S_reference)^2 with a propagated standard error."""
    if reference.amplitude <= 3.0 * reference.amplitude_se:
        raise FitError("reference amplitude is consistent with zero")
    ratio = stored.amplitude / reference.amplitude
    eta = ratio * ratio
    rel = math.hypot(
        stored.amplitude_se / stored.amplitude if stored.amplitude > 0 else 0.0,
        reference.amplitude_se / reference.amplitude,
    )
    return eta, 2.0 * eta * rel


@dataclass(frozen=True)
class SimulationConfig:
    alpha_re: float
    alpha_im: float = 0.0
    eta: float = 0.78
    xi_plus: float = 0.0
    xi_minus: float = 0.0
    n_pulses: int = 100_000
    phase_jitter_sigma: float = DEFAULT_JITTER
    detection: DetectionChain = field(default_factory=DetectionChain)
    seed: int = 0
    phase_offset: float = 0.0
    input_noise: float = 0.0
    phase_schedule: str = "linear"
    n_vacuum: int | None = None
    n_reference: int | None = None

    def __post_init__(self):
        if int(self.n_pulses) != self.n_pulses or self.n_pulses < 1:
            raise ConfigError("n_pulses must be a positive integer")
        for name in ("n_vacuum", "n_reference"):
            v = getattr(self, name)
            if v is not None and (int(v) != v or v < 1):
                raise ConfigError(f"{name} must be a positive integer")
        if self.phase_jitter_sigma < 0:
            raise ConfigError("phase_jitter_sigma must be >= 0")
        if self.input_noise < 0:
            raise ConfigError("input_noise must be >= 0")
        if self.phase_schedule not in ("linear", "random"):
            raise ConfigError(f"unknown phase schedule {self.phase_schedule!r}")
        for name in ("alpha_re", "alpha_im", "phase_offset"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite")
        ChannelModel(self.eta, self.xi_plus, self.xi_minus)

    @property
    def alpha(self) -> complex:
        return complex(self.alpha_re, self.alpha_im)

    @property
    def channel(self) -> ChannelModel:
        return ChannelModel(self.eta, self.xi_plus, self.xi_minus, self.phase_offset)

    @classmethod
    def from_dict(cls, d: dict) -> "SimulationConfig":
        d = dict(d)
        d.pop("schema_version", None)
        # shorthand keys: alpha (real or [re, im]), xi (symmetric), n
        if "alpha" in d:
            alpha = d.pop("alpha")
            re_im = alpha if isinstance(alpha, (list, tuple)) else (alpha, 0.0)
            if len(re_im) != 2:
                raise ConfigError("alpha must be a number or [re, im]")
            d.setdefault("alpha_re", re_im[0])
            d.setdefault("alpha_im", re_im[1])
        if "xi" in d:
            xi = d.pop("xi")
            d.setdefault("xi_plus", xi)
            d.setdefault("xi_minus", xi)
        if "n" in d:
            d.setdefault("n_pulses", d.pop("n"))
        det = d.pop("detection", None) or {}
        if not isinstance(det, dict):
            raise ConfigError("detection must be an object")
        known = {f for f in cls.__dataclass_fields__} - {"detection"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        if "alpha_re" not in d:
            raise ConfigError("alpha_re is required")
        for key in ("n_pulses", "seed", "n_vacuum", "n_reference"):
            if key in d and d[key] is not None:
                if isinstance(d[key], bool) or not float(d[key]).is_integer():
                    raise ConfigError(f"{key} must be an integer")
                d[key] = int(d[key])
        for key, v in d.items():
            if key != "phase_schedule" and v is not None and not isinstance(v, (int, float)):
                raise ConfigError(f"{key} must be a number")
        try:
            return cls(detection=DetectionChain(**det), **d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["schema_version"] = "1"
        return d


def simulate_experiment(config: SimulationConfig) -> dict[str, QuadratureDataset]:
    """Input, echo, vacuum and off-resonant reference pulse trains.

    Every train passes the same detection chain. Reference pulses have the
    input's size but bypass the memory, so (S_output / S_reference)^2 measures
    the memory efficiency alone.
    """
    source = GaussianState.coherent(config.alpha, config.input_noise)
    stored = apply_channel(source, config.channel)
    n_vac = config.n_vacuum or config.n_pulses
    n_ref = config.n_reference or config.n_pulses
    plan = {
        "input": (source, config.n_pulses),
        "output": (stored, config.n_pulses),
        "vacuum": (GaussianState.vacuum(), n_vac),
        "reference": (source, n_ref),
    }
    out = {}
    for role, (state, n) in plan.items():
        ds = simulate_pulse_train(
            detect(state, config.detection),
            n,
            config.phase_schedule,
            config.phase_jitter_sigma,
            config.seed,
            role,
        )
        ds.metadata["detection_efficiency"] = config.detection.total_efficiency
        out[role] = ds
    return out
