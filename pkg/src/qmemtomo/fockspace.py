"""Truncated Fock-basis state algebra.

Quadrature convention used throughout the package::

    x = a + a^dag,    p = -i (a - a^dag),    Var_vacuum(x) = Var_vacuum(p) = 1

so a coherent state |alpha> has quadrature means (2 Re alpha, 2 Im alpha).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import gammaln

TRACE_TOL = 1e-10
PSD_TOL = 1e-10
EIG_CLAMP = 1e-10
MAX_DEFAULT_DIM = 64


class TruncationError(ValueError):
    """Raised when a Fock truncation cannot hold the requested state."""


class GridError(ValueError):
    """Raised when a phase-space or quadrature grid is too narrow."""


def default_dim(mean_photon_number: float) -> int:
    """Default truncation ``ceil(N + 5 sqrt(N) + 10)``, capped at 64."""
    n = max(float(mean_photon_number), 0.0)
    return min(int(math.ceil(n + 5.0 * math.sqrt(n) + 10.0)), MAX_DEFAULT_DIM)


@dataclass(frozen=True)
class FockDensityMatrix:
    """Density operator on the basis |0>, ..., |dim-1>.

    The matrix is symmetrized on construction; unit trace and positivity are
    checked against ``TRACE_TOL`` / ``PSD_TOL`` unless ``validate=False``.
    """

    entries: np.ndarray
    validate: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        rho = np.array(self.entries, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1] or rho.shape[0] < 1:
            raise ValueError(f"density matrix must be square, got shape {rho.shape}")
        rho = 0.5 * (rho + rho.conj().T)
        rho.setflags(write=False)
        object.__setattr__(self, "entries", rho)
        if self.validate:
            tr = np.trace(rho).real
            if abs(tr - 1.0) > TRACE_TOL:
                raise ValueError(f"trace {tr!r} differs from 1")
            lam = np.linalg.eigvalsh(rho)[0]
            if lam < -PSD_TOL:
                raise ValueError(f"minimum eigenvalue {lam:.3e} is negative")

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def mean_photon_number(self) -> float:
        return float(np.real(np.diag(self.entries)) @ np.arange(self.dim))

    def expect_a(self) -> complex:
        """<a> = Tr(rho a)."""
        return complex(np.sum(np.sqrt(np.arange(1, self.dim)) * np.diag(self.entries, -1)))

    def quadrature_means(self) -> tuple[float, float]:
        a = self.expect_a()
        return 2.0 * a.real, 2.0 * a.imag

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "re": [float(v) for v in self.entries.real.ravel()],
            "im": [float(v) for v in self.entries.imag.ravel()],
        }

    @classmethod
    def from_dict(cls, d: dict, validate: bool = True) -> "FockDensityMatrix":
        dim = int(d["dim"])
        re = np.asarray(d["re"], dtype=float)
        im = np.asarray(d["im"], dtype=float)
        if re.size != dim * dim or im.size != dim * dim:
            raise ValueError("entry arrays do not match dim")
        return cls((re + 1j * im).reshape(dim, dim), validate=validate)


def save_density_matrix(rho: FockDensityMatrix, path) -> None:
    """Write ``{dim, re, im}`` JSON with round-trip float formatting."""
    Path(path).write_text(json.dumps(rho.to_dict(), indent=1) + "\n")


def load_density_matrix(path, validate: bool = True) -> FockDensityMatrix:
    return FockDensityMatrix.from_dict(json.loads(Path(path).read_text()), validate=validate)


def as_matrix(rho) -> np.ndarray:
    if isinstance(rho, FockDensityMatrix):
        return rho.entries
    return np.asarray(rho, dtype=complex)


def number_operator(dim: int) -> np.ndarray:
    return np.diag(np.arange(dim, dtype=float))


def annihilation_operator(dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1)


def fock_state(n: int, dim: int) -> FockDensityMatrix:
    if not 0 <= n < dim:
        raise TruncationError(f"|{n}> does not fit in dim={dim}")
    rho = np.zeros((dim, dim), dtype=complex)
    rho[n, n] = 1.0
    return FockDensityMatrix(rho)


def coherent_amplitudes(alpha: complex, dim: int) -> np.ndarray:
    """Fock amplitudes <n|alpha> = exp(-|alpha|^2/2) alpha^n / sqrt(n!)."""
    alpha = complex(alpha)
    n = np.arange(dim)
    r = abs(alpha)
    if r == 0.0:
        amp = np.zeros(dim, dtype=complex)
        amp[0] = 1.0
        return amp
    log_mag = -0.5 * r * r + n * math.log(r) - 0.5 * gammaln(n + 1)
    return np.exp(log_mag) * np.exp(1j * n * np.angle(alpha))


def coherent_state(alpha: complex, dim: int) -> FockDensityMatrix:
    """Truncated coherent-state projector |alpha><alpha|.

    Raises
    ------
    TruncationError
        If the truncation keeps less than ``1 - 1e-6`` of the probability.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    psi = coherent_amplitudes(alpha, dim)
    captured = float(np.sum(np.abs(psi) ** 2))
    if captured < 1.0 - 1e-6:
        raise TruncationError(
            f"dim={dim} captures only {captured:.8f} of |alpha|^2={abs(alpha) ** 2:.3f}"
        )
    psi = psi / math.sqrt(captured)
    return FockDensityMatrix(np.outer(psi, psi.conj()))


def thermal_state(nbar: float, dim: int) -> FockDensityMatrix:
    """Thermal state p_n = nbar^n / (1 + nbar)^(n+1), renormalized after truncation."""
    if nbar < 0:
        raise ValueError("nbar must be >= 0")
    n = np.arange(dim)
    if nbar == 0:
        p = (n == 0).astype(float)
    else:
        p = np.exp(n * math.log(nbar) - (n + 1) * math.log1p(nbar))
    captured = p.sum()
    if captured < 1.0 - 1e-6:
        raise TruncationError(f"dim={dim} captures only {captured:.8f} of thermal nbar={nbar}")
    return FockDensityMatrix(np.diag(p / captured))


def _binomial_sqrt(n: np.ndarray, k: int) -> np.ndarray:
    return np.exp(0.5 * (gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)))


def loss_kraus(eta: float, dim: int) -> list[np.ndarray]:
    """Beam-splitter (pure loss) Kraus operators A_0 ... A_{dim-1}.

    A_k |n> = sqrt(C(n, k)) eta^((n-k)/2) (1-eta)^(k/2) |n-k>.
    """
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta={eta} outside [0, 1]")
    ops = []
    for k in range(dim):
        n = np.arange(k, dim)
        # 0**0 = 1 handles the eta in {0, 1} endpoints
        coef = _binomial_sqrt(n, k) * np.power(eta, 0.5 * (n - k)) * np.power(1.0 - eta, 0.5 * k)
        a_k = np.zeros((dim, dim))
        a_k[n - k, n] = coef
        ops.append(a_k)
    return ops


def loss_channel(rho: FockDensityMatrix, eta: float) -> FockDensityMatrix:
    """Apply a pure-loss channel of transmissivity ``eta``."""
    m = as_matrix(rho)
    out = sum(a @ m @ a.T for a in loss_kraus(eta, m.shape[0]))
    return FockDensityMatrix(out)


def sqrtm_psd(m: np.ndarray, clamp: float = EIG_CLAMP) -> np.ndarray:
    """Square root of a Hermitian PSD matrix, eigenvalues below ``clamp`` set to 0."""
    w, v = np.linalg.eigh(0.5 * (m + m.conj().T))
    w = np.where(w < clamp, 0.0, w)
    return (v * np.sqrt(w)) @ v.conj().T


def fidelity(rho_in, rho_out) -> float:
    """Uhlmann fidelity ``(Tr sqrt(sqrt(rho_in) rho_out sqrt(rho_in)))**2``, computed as ``||sqrt(rho_in) sqrt(rho_out)||_1**2``."""
    a = as_matrix(rho_in)
    b = as_matrix(rho_out)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    for m in (a, b):
        lam = np.linalg.eigvalsh(0.5 * (m + m.conj().T))[0]
        if lam < -PSD_TOL:
            raise ValueError(f"input is not positive semidefinite (min eigenvalue {lam:.3e})")
    # nuclear norm of sqrt(a) sqrt(b): symmetric in the arguments by construction
    sv = np.linalg.svd(sqrtm_psd(a, 0.0) @ sqrtm_psd(b, 0.0), compute_uv=False)
    f = float(np.sum(sv) ** 2)
    return min(max(f, 0.0), 1.0)


def photon_distribution(rho) -> np.ndarray:
    """Diagonal readout p_n = Re(rho_nn), clamped at zero."""
    p = np.clip(np.real(np.diag(as_matrix(rho))), 0.0, None)
    return p / p.sum()


def hermite_functions(x, dim: int) -> np.ndarray:
    """Quadrature wavefunctions psi_n(x) for n < dim, shape ``(dim,) + x.shape``.

    Stable three-term recurrence from psi_0 = (2 pi)^(-1/4) exp(-x^2/4).
    """
    x = np.asarray(x, dtype=float)
    out = np.empty((dim,) + x.shape)
    out[0] = (2.0 * np.pi) ** -0.25 * np.exp(-0.25 * x * x)
    if dim > 1:
        out[1] = x * out[0]
    for n in range(1, dim - 1):
        out[n + 1] = (x * out[n] - math.sqrt(n) * out[n - 1]) / math.sqrt(n + 1)
    return out


@dataclass(frozen=True)
class QuadratureWavefunctionTable:
    """psi_n(x) tabulated on a sorted grid."""

    grid: np.ndarray
    values: np.ndarray

    @classmethod
    def build(cls, grid, dim: int) -> "QuadratureWavefunctionTable":
        grid = np.asarray(grid, dtype=float)
        if grid.ndim != 1 or np.any(np.diff(grid) <= 0):
            raise GridError("grid must be a strictly increasing 1-D array")
        return cls(grid, hermite_functions(grid, dim))

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    def norms(self) -> np.ndarray:
        return np.trapezoid(self.values**2, self.grid, axis=1)


def quadrature_pdf(rho, theta: float, grid) -> np.ndarray:
    """Homodyne outcome density pr(x | theta) on ``grid``.

    pr(x|theta) = sum_mn rho_mn exp(i (n - m) theta) psi_m(x) psi_n(x).
    """
    m = as_matrix(rho)
    grid = np.asarray(grid, dtype=float)
    psi = hermite_functions(grid, m.shape[0])
    v = psi * np.exp(1j * np.arange(m.shape[0]) * theta)[:, None]
    pdf = np.real(np.einsum("mi,mn,ni->i", v.conj(), m, v))
    if grid.ndim == 1 and grid.size > 1 and np.all(np.diff(grid) > 0):
        total = np.trapezoid(pdf, grid)
        if total < 0.999:
            raise GridError(f"grid captures only {total:.5f} of the quadrature distribution")
    return pdf


def wigner(rho, x_grid, p_grid) -> np.ndarray:
    """Wigner function W[i, j] = W(x_grid[j], p_grid[i]).

    Built from the Laguerre series of the |m><n| Wigner functions, evaluated
    with the stable upward recurrence in m and n. Normalized so that
    ``integral W dx dp = 1``.
    """
    m_rho = as_matrix(rho)
    dim = m_rho.shape[0]
    x_grid = np.asarray(x_grid, dtype=float)
    p_grid = np.asarray(p_grid, dtype=float)
    reach = 2.0 * math.sqrt(max(FockDensityMatrix(m_rho, validate=False).mean_photon_number(), 0.0)) + 6.0
    for g, name in ((x_grid, "x"), (p_grid, "p")):
        if g.min() > -reach or g.max() < reach:
            raise GridError(f"{name} grid must span at least +-{reach:.2f}")

    xx, pp = np.meshgrid(x_grid, p_grid)
    a2 = xx + 1j * pp  # 2 alpha
    w_list = [np.exp(-0.5 * np.abs(a2) ** 2) / (2.0 * np.pi) + 0j]
    w = np.real(m_rho[0, 0]) * np.real(w_list[0])
    for n in range(1, dim):
        w_list.append(a2 * w_list[n - 1] / math.sqrt(n))
        w += 2.0 * np.real(m_rho[0, n] * w_list[n])
    for m in range(1, dim):
        temp = w_list[m].copy()
        w_list[m] = (np.conj(a2) * temp - math.sqrt(m) * w_list[m - 1]) / math.sqrt(m)
        w += np.real(m_rho[m, m] * w_list[m])
        for n in range(m + 1, dim):
            nxt = (a2 * w_list[n - 1] - math.sqrt(m) * temp) / math.sqrt(n)
            temp = w_list[n].copy()
            w_list[n] = nxt
            w += 2.0 * np.real(m_rho[m, n] * w_list[n])
    return w


def save_wigner_csv(path, x_grid, p_grid, w) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["x", "p", "W"])
        for i, p in enumerate(p_grid):
            for j, x in enumerate(x_grid):
                out.writerow([f"{x:.17g}", f"{p:.17g}", f"{w[i, j]:.17g}"])


def load_wigner_csv(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    x_grid = np.unique(data[:, 0])
    p_grid = np.unique(data[:, 1])
    return x_grid, p_grid, data[:, 2].reshape(p_grid.size, x_grid.size)


def gaussian_fock(mean, cov, dim: int, n_nodes: int | None = None) -> np.ndarray:
    """Unnormalized truncated Fock matrix of a classical Gaussian state.

    The state is the coherent-state mixture whose displacement (x, p) is
    Normal(``mean``, ``cov - I``); ``cov - I`` must be positive semidefinite.
    The factor exp(-|beta|^2) of each projector is folded into the Gaussian
    weight, leaving a polynomial of degree <= 2 (dim - 1) that tensor
    Gauss-Hermite quadrature with ``n_nodes >= dim`` per axis integrates exactly.
    The returned matrix holds the exact elements for n, m < dim; its trace is
    the captured probability.
    """
    mean = np.asarray(mean, dtype=float).reshape(2)
    p_cov = np.asarray(cov, dtype=float).reshape(2, 2) - np.eye(2)
    p_cov = 0.5 * (p_cov + p_cov.T)
    w, u = np.linalg.eigh(p_cov)
    if w[0] < -1e-9:
        raise ValueError("covariance is below the vacuum level (non-classical state)")
    lchol = u * np.sqrt(np.clip(w, 0.0, None))  # displacement = mean + lchol @ z
    a_mat = np.eye(2) + 0.5 * lchol.T @ lchol
    b_vec = -0.5 * lchol.T @ mean
    z0 = np.linalg.solve(a_mat, b_vec)
    log_pref = -0.25 * mean @ mean + 0.5 * b_vec @ z0 - 0.5 * math.log(np.linalg.det(a_mat))
    wa, ua = np.linalg.eigh(a_mat)
    a_inv_sqrt = (ua / np.sqrt(wa)) @ ua.T

    k = n_nodes or max(24, dim + 4)
    nodes, weights = np.polynomial.hermite_e.hermegauss(k)
    weights = weights / math.sqrt(2.0 * math.pi)
    g1, g2 = np.meshgrid(nodes, nodes, indexing="ij")
    wgt = np.outer(weights, weights).ravel()
    wvec = np.vstack([g1.ravel(), g2.ravel()])
    z = z0[:, None] + a_inv_sqrt @ wvec
    disp = mean[:, None] + lchol @ z
    beta = 0.5 * (disp[0] + 1j * disp[1])

    # beta^n / sqrt(n!) by recurrence, one column per node
    powers = np.empty((dim, beta.size), dtype=complex)
    powers[0] = 1.0
    for j in range(1, dim):
        powers[j] = powers[j - 1] * beta / math.sqrt(j)
    rho = (powers * wgt) @ powers.conj().T
    return math.exp(log_pref) * rho


def gaussian_state_fock(mean, cov, dim: int, tolerance: float = 1e-6) -> FockDensityMatrix:
    """Normalized Fock rendering of a classical Gaussian state.

    Raises
    ------
    TruncationError
        If less than ``1 - tolerance`` of the probability fits in ``dim``.
    """
    m = gaussian_fock(mean, cov, dim)
    captured = float(np.trace(m).real)
    if captured < 1.0 - tolerance:
        raise TruncationError(f"dim={dim} captures only {captured:.8f} of the Gaussian state")
    return FockDensityMatrix(m / captured)
