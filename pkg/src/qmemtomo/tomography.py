"""Iterative maximum-likelihood (R rho R) reconstruction from homodyne records."""

from __future__ import annotations

import logging
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from .fockspace import FockDensityMatrix, fidelity, hermite_functions, photon_distribution
from .gaussian_sim import QuadratureDataset

log = logging.getLogger(__name__)

CHUNK = 8192
TRACE_TOL = 1e-10
PSD_TOL = 1e-10
MONOTONE_TOL = 1e-10
X_BIN = 0.02


class ReconstructionError(RuntimeError):
    pass


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class ReconstructionConfig:
    dim: int = 25
    max_iterations: int = 2000
    ll_rel_tolerance: float = 1e-9
    probability_floor: float = 1e-12
    phase_bins: int | None = None
    check_iterates: bool = True

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError("dim must be >= 2")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.ll_rel_tolerance <= 0 or self.probability_floor <= 0:
            raise ValueError("tolerances must be > 0")
        if self.phase_bins is not None and self.phase_bins < 1:
            raise ValueError("phase_bins must be >= 1")


@dataclass
class ReconstructionResult:
    rho: FockDensityMatrix
    log_likelihood_trace: list = field(default_factory=list)
    iterations_used: int = 0
    converged: bool = False
    n_records: int = 0

    def trace_rows(self):
        return list(enumerate(self.log_likelihood_trace))


def support_limit(dim: int) -> float:
    """|x| beyond which every psi_n with n < dim is numerically zero."""
    return 2.0 * math.sqrt(dim) + 40.0


def projector_vector(theta, x, dim: int) -> np.ndarray:
    """Fock components e^{i n theta} psi_n(x) of the quadrature eigenstate |x, theta>.

    Vectorized: with array ``theta``/``x`` of shape (N,), returns (N, dim).
    """
    theta = np.asarray(theta, dtype=float)
    x = np.asarray(x, dtype=float)
    psi = np.moveaxis(hermite_functions(x, dim), 0, -1)
    return psi * np.exp(1j * np.multiply.outer(theta, np.arange(dim)))


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("QMEM_THREADS", "1")))
    except ValueError:
        return 1


class _Likelihood:
    """Projector vectors and weights, evaluated chunk by chunk.

    Partial sums are reduced in fixed chunk order so results do not depend on
    the worker count.
    """

    def __init__(self, vectors: np.ndarray, weights: np.ndarray, floor: float):
        self.vectors = vectors
        self.weights = weights
        self.total = float(weights.sum())
        self.floor = floor
        n = vectors.shape[0]
        self.chunks = [slice(i, min(i + CHUNK, n)) for i in range(0, n, CHUNK)]
        self.threads = _threads()

    def _probs(self, sl, rho):
        v = self.vectors[sl]
        return np.einsum("jn,jn->j", v.conj() @ rho, v).real

    def _chunk(self, sl, rho):
        pr = np.maximum(self._probs(sl, rho), self.floor)
        w = self.weights[sl]
        ll = float(w @ np.log(pr))
        v = self.vectors[sl]
        r = (v.T * (w / pr)) @ v.conj()
        return ll, r

    def _map(self, fn, rho):
        if self.threads > 1 and len(self.chunks) > 1:
            with ThreadPoolExecutor(self.threads) as pool:
                return list(pool.map(lambda sl: fn(sl, rho), self.chunks))
        return [fn(sl, rho) for sl in self.chunks]

    def log_likelihood(self, rho) -> float:
        parts = self._map(lambda sl, r: float(self.weights[sl] @ np.log(np.maximum(self._probs(sl, r), self.floor))), rho)
        return math.fsum(parts)

    def r_operator(self, rho):
        parts = self._map(self._chunk, rho)
        ll = math.fsum(p[0] for p in parts)
        r = parts[0][1].copy()
        for p in parts[1:]:
            r += p[1]
        return ll, r / self.total


def _design(dataset: QuadratureDataset, config: ReconstructionConfig):
    x = dataset.value
    if x.size == 0:
        raise InsufficientDataError("no records to reconstruct from")
    if not np.all(np.isfinite(x)):
        raise ReconstructionError("non-finite quadrature value")
    lim = support_limit(config.dim)
    if np.any(np.abs(x) > lim):
        raise ReconstructionError(f"record outside wavefunction support |x| <= {lim:.1f}")
    if x.size < config.dim**2:
        warnings.warn(f"only {x.size} records for dim={config.dim}; at least dim^2 recommended", stacklevel=3)
    theta = dataset.lo_phase
    if config.phase_bins is None:
        return projector_vector(theta, x, config.dim), np.ones(x.size)
    # binned: records sharing a phase bin and an x cell become one weighted projector
    width = 2.0 * math.pi / config.phase_bins
    pbin = np.minimum((theta / width).astype(np.int64), config.phase_bins - 1)
    xbin = np.rint(x / X_BIN).astype(np.int64)
    keys, counts = np.unique(np.column_stack([pbin, xbin]), axis=0, return_counts=True)
    return projector_vector((keys[:, 0] + 0.5) * width, keys[:, 1] * X_BIN, config.dim), counts.astype(float)


def _check_state(rho: np.ndarray, it: int) -> None:
    tr = np.trace(rho).real
    if abs(tr - 1.0) > TRACE_TOL:
        raise ReconstructionError(f"iterate {it}: trace {tr!r}")
    lam = np.linalg.eigvalsh(rho)[0]
    if lam < -PSD_TOL:
        raise ReconstructionError(f"iterate {it}: min eigenvalue {lam:.3e}")


def _update(rho, r):
    new = r @ rho @ r
    new = 0.5 * (new + new.conj().T)
    return new / np.trace(new).real


def reconstruct(dataset: QuadratureDataset, config: ReconstructionConfig | None = None) -> ReconstructionResult:
    """Maximum-likelihood density matrix from quadrature records.

    Starts from the maximally mixed state and iterates
    ``rho <- R rho R / Tr(R rho R)`` with ``R = (1/N) sum_j Pi_j / pr_j``.
    If a plain step would lower the log-likelihood, the step is diluted,
    ``R -> (I + eps R) / (1 + eps)``, halving ``eps`` until it does not.
    Stops when the relative log-likelihood change falls below
    ``config.ll_rel_tolerance``.
    """
    config = config or ReconstructionConfig()
    vectors, weights = _design(dataset, config)
    # single-threaded BLAS keeps every chunk sum bit-identical across machines
    with threadpool_limits(limits=1, user_api="blas"):
        return _iterate(_Likelihood(vectors, weights, config.probability_floor), config)


def _iterate(lik: _Likelihood, config: ReconstructionConfig) -> ReconstructionResult:
    dim = config.dim
    eye = np.eye(dim)
    rho = eye / dim + 0j
    ll, r = lik.r_operator(rho)
    if not math.isfinite(ll):
        raise ReconstructionError("non-finite log-likelihood")
    trace = [ll]
    converged = False
    it = 0
    for it in range(1, config.max_iterations + 1):
        cand = _update(rho, r)
        ll_new, r_new = lik.r_operator(cand)
        eps = 1.0
        while ll_new < ll - MONOTONE_TOL * abs(ll) and eps > 1e-8:
            eps *= 0.5
            rd = (eye + eps * r) / (1.0 + eps)
            cand = _update(rho, rd)
            ll_new, r_new = lik.r_operator(cand)
        if not math.isfinite(ll_new):
            raise ReconstructionError("non-finite log-likelihood")
        if ll_new < ll - MONOTONE_TOL * abs(ll):
            raise ReconstructionError(f"iteration {it}: log-likelihood decreased from {ll!r} to {ll_new!r}")
        if config.check_iterates:
            _check_state(cand, it)
        rel = abs(ll_new - ll) / max(abs(ll), 1e-300)
        rho, r, ll = cand, r_new, ll_new
        trace.append(ll)
        if rel < config.ll_rel_tolerance:
            converged = True
            break
    log.debug("reconstruction: %d iterations, converged=%s, logL=%.6f", it, converged, ll)
    return ReconstructionResult(FockDensityMatrix(rho), trace, it, converged, int(round(lik.total)))


def r_operator(dataset: QuadratureDataset, rho: FockDensityMatrix, config: ReconstructionConfig | None = None) -> np.ndarray:
    """The R operator of the iteration, evaluated at ``rho``."""
    config = config or ReconstructionConfig(dim=rho.dim)
    vectors, weights = _design(dataset, config)
    return _Likelihood(vectors, weights, config.probability_floor).r_operator(rho.entries)[1]


def log_likelihood(dataset: QuadratureDataset, rho: FockDensityMatrix, config: ReconstructionConfig | None = None) -> float:
    config = config or ReconstructionConfig(dim=rho.dim)
    vectors, weights = _design(dataset, config)
    return _Likelihood(vectors, weights, config.probability_floor).log_likelihood(rho.entries)


@dataclass
class BootstrapResult:
    photon_distribution_se: np.ndarray
    mean_photon_number_se: float
    fidelity_se: float | None
    element_se: np.ndarray
    mean_photon_numbers: np.ndarray
    fidelities: np.ndarray | None


def bootstrap_uncertainty(
    dataset: QuadratureDataset,
    config: ReconstructionConfig | None = None,
    n_subsets: int = 100,
    reference: FockDensityMatrix | None = None,
) -> BootstrapResult:
    """Spread of reconstructions over ``n_subsets`` disjoint subsets.

    Records are dealt round-robin so every subset covers the full phase sweep.
    """
    config = config or ReconstructionConfig()
    n = len(dataset)
    if n_subsets < 2:
        raise ValueError("n_subsets must be >= 2")
    if n < n_subsets * config.dim:
        raise InsufficientDataError(f"{n} records < n_subsets * dim = {n_subsets * config.dim}")
    rhos = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for k in range(n_subsets):
            sub = dataset.take(np.arange(k, n, n_subsets))
            rhos.append(reconstruct(sub, config).rho)
    mats = np.array([r.entries for r in rhos])
    dists = np.array([photon_distribution(r) for r in rhos])
    nbar = dists @ np.arange(config.dim)
    fids = None
    if reference is not None:
        fids = np.array([fidelity(reference, r) for r in rhos])
    return BootstrapResult(
        photon_distribution_se=dists.std(axis=0, ddof=1),
        mean_photon_number_se=float(nbar.std(ddof=1)),
        fidelity_se=None if fids is None else float(fids.std(ddof=1)),
        element_se=mats.std(axis=0, ddof=1),
        mean_photon_numbers=nbar,
        fidelities=fids,
    )
