import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qmemtomo import fockspace as fs
from qmemtomo.fockspace import FockDensityMatrix


def random_density(rng, dim, rank=None):
    rank = rank or dim
    g = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    m = g @ g.conj().T
    return FockDensityMatrix(m / np.trace(m).real)


def assert_valid(rho):
    m = rho.entries
    assert np.array_equal(m, m.conj().T)
    assert abs(np.trace(m).real - 1) < 1e-10
    assert np.linalg.eigvalsh(m)[0] >= -1e-10


# coherent_state

def test_vacuum_coherent_state():
    rho = fs.coherent_state(0, 10)
    expected = np.zeros((10, 10))
    expected[0, 0] = 1
    np.testing.assert_allclose(rho.entries, expected, atol=1e-15)


def test_coherent_poissonian_diagonal():
    rho = fs.coherent_state(math.sqrt(3.4), 25)
    p = np.real(np.diag(rho.entries))
    expected = [math.exp(-3.4) * 3.4**n / math.factorial(n) for n in range(25)]
    np.testing.assert_allclose(p, expected, atol=1e-6)


def test_coherent_mean_photon_number_series_oracle():
    # direct series summation over the untruncated Poisson weights
    nbar = 0.67
    oracle = sum(n * math.exp(-nbar) * nbar**n / math.factorial(n) for n in range(15))
    assert abs(oracle - 0.67) < 1e-8
    rho = fs.coherent_state(math.sqrt(nbar), 15)
    assert abs(rho.mean_photon_number() - oracle) < 1e-8
    assert abs(rho.mean_photon_number() - 0.67) < 1e-8


def test_coherent_quadrature_mean():
    alpha = 1.2 - 0.7j
    x, p = fs.coherent_state(alpha, 30).quadrature_means()
    assert x == pytest.approx(2.4, abs=1e-9)
    assert p == pytest.approx(-1.4, abs=1e-9)


def test_coherent_truncation_error():
    with pytest.raises(fs.TruncationError):
        fs.coherent_state(3.0, 10)


# loss_channel

def test_loss_identity_and_full_loss():
    rho = fs.coherent_state(1.1 + 0.4j, 20)
    np.testing.assert_allclose(fs.loss_channel(rho, 1.0).entries, rho.entries, atol=1e-14)
    vac = fs.loss_channel(rho, 0.0).entries
    assert abs(vac[0, 0] - 1) < 1e-14
    assert np.abs(vac).sum() - 1 < 1e-12


def test_loss_single_photon_by_hand():
    # A_0|1> = sqrt(eta)|1>, A_1|1> = sqrt(1-eta)|0>
    out = fs.loss_channel(fs.fock_state(1, 2), 0.78).entries
    np.testing.assert_allclose(out, np.diag([0.22, 0.78]), atol=1e-15)


def test_loss_mean_photon_number_scales():
    rho = fs.coherent_state(math.sqrt(3.4), 30)
    assert abs(fs.loss_channel(rho, 0.78).mean_photon_number() - 0.78 * rho.mean_photon_number()) < 1e-9


def test_loss_domain_error():
    with pytest.raises(ValueError):
        fs.loss_channel(fs.fock_state(0, 3), 1.2)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 12), st.floats(0, 1), st.floats(0, 1))
def test_loss_composition(seed, dim, eta1, eta2):
    rho = random_density(np.random.default_rng(seed), dim)
    twice = fs.loss_channel(fs.loss_channel(rho, eta1), eta2)
    once = fs.loss_channel(rho, eta1 * eta2)
    assert_valid(twice)
    assert np.abs(twice.entries - once.entries).max() < 1e-9


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 12), st.floats(0, 1))
def test_loss_preserves_invariants(seed, dim, eta):
    rho = random_density(np.random.default_rng(seed), dim)
    out = fs.loss_channel(rho, eta)
    assert_valid(out)
    assert abs(out.mean_photon_number() - eta * rho.mean_photon_number()) < 1e-9


# fidelity

def test_self_and_orthogonal_fidelity():
    rho = random_density(np.random.default_rng(1), 8)
    assert fs.fidelity(rho, rho) == pytest.approx(1, abs=1e-9)
    assert fs.fidelity(fs.fock_state(0, 4), fs.fock_state(1, 4)) < 1e-12


def test_coherent_loss_fidelity_closed_form():
    rho = fs.coherent_state(math.sqrt(3.4), 25)
    f = fs.fidelity(rho, fs.coherent_state(math.sqrt(0.78 * 3.4), 25))
    assert f == pytest.approx(math.exp(-((1 - math.sqrt(0.78)) ** 2) * 3.4), abs=1e-6)
    assert f == pytest.approx(0.9547, abs=1e-4)


@pytest.mark.parametrize(
    "alpha,beta",
    [(0, 3), (1.5, -1.5), (2 + 1j, 2.1 + 0.8j), (3j, 1.2 - 0.3j), (-2.2, 0.5)],
)
def test_coherent_fidelity_matches_overlap(alpha, beta):
    f = fs.fidelity(fs.coherent_state(alpha, 40), fs.coherent_state(beta, 40))
    assert f == pytest.approx(math.exp(-abs(alpha - beta) ** 2), abs=1e-6)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 12), st.integers(1, 12))
def test_fidelity_symmetric(seed, dim, rank):
    rng = np.random.default_rng(seed)
    a = random_density(rng, dim, min(rank, dim))
    b = random_density(rng, dim, min(rank, dim))
    assert abs(fs.fidelity(a, b) - fs.fidelity(b, a)) < 1e-9
    assert 0 <= fs.fidelity(a, b) <= 1


def test_fidelity_pure_states_overlap():
    rng = np.random.default_rng(3)
    u = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    v = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    u /= np.linalg.norm(u)
    v /= np.linalg.norm(v)
    f = fs.fidelity(np.outer(u, u.conj()), np.outer(v, v.conj()))
    assert f == pytest.approx(abs(np.vdot(u, v)) ** 2, abs=1e-8)


def test_fidelity_errors():
    with pytest.raises(ValueError):
        fs.fidelity(fs.fock_state(0, 3), fs.fock_state(0, 4))
    bad = np.diag([1.5, -0.5])
    with pytest.raises(ValueError):
        fs.fidelity(bad, fs.fock_state(0, 2))


# photon_distribution

def test_photon_distribution_examples():
    np.testing.assert_allclose(fs.photon_distribution(fs.fock_state(0, 5)), [1, 0, 0, 0, 0])
    mix = FockDensityMatrix(np.diag([0.5, 0, 0.5]))
    np.testing.assert_allclose(fs.photon_distribution(mix), [0.5, 0, 0.5])
    p = fs.photon_distribution(fs.coherent_state(math.sqrt(3.4), 25))
    assert abs(p.sum() - 1) < 1e-8
    assert p @ np.arange(25) == pytest.approx(3.4, abs=1e-5)


# wavefunctions and quadrature distributions

def test_wavefunction_table_norms_and_recurrence():
    dim = 30
    grid = np.linspace(-6 * math.sqrt(2 * dim + 1), 6 * math.sqrt(2 * dim + 1), 4001)
    table = fs.QuadratureWavefunctionTable.build(grid, dim)
    np.testing.assert_allclose(table.norms(), 1, atol=1e-6)
    psi = table.values
    for n in range(1, dim - 1):
        rhs = (grid * psi[n] - math.sqrt(n) * psi[n - 1]) / math.sqrt(n + 1)
        assert np.abs(psi[n + 1] - rhs).max() < 1e-9


def test_wavefunction_stable_at_high_n():
    psi = fs.hermite_functions(np.linspace(-25, 25, 2001), 64)
    assert np.all(np.isfinite(psi))
    assert np.abs(psi).max() < 1


def test_vacuum_quadrature_pdf():
    x = np.linspace(-8, 8, 801)
    for theta in (0, 0.7, math.pi / 2, 4.0):
        pdf = fs.quadrature_pdf(fs.fock_state(0, 6), theta, x)
        np.testing.assert_allclose(pdf, np.exp(-x * x / 2) / math.sqrt(2 * math.pi), atol=1e-14)


@pytest.mark.parametrize("theta,mean", [(0.0, 2 * 1.3), (math.pi / 2, 0.0), (math.pi, -2 * 1.3)])
def test_coherent_quadrature_pdf_moments(theta, mean):
    x = np.linspace(-12, 12, 2401)
    pdf = fs.quadrature_pdf(fs.coherent_state(1.3, 25), theta, x)
    assert np.trapezoid(pdf, x) == pytest.approx(1, abs=1e-4)
    gauss = np.exp(-((x - mean) ** 2) / 2) / math.sqrt(2 * math.pi)
    np.testing.assert_allclose(pdf, gauss, atol=1e-7)


def test_quadrature_pdf_grid_too_narrow():
    with pytest.raises(fs.GridError):
        fs.quadrature_pdf(fs.coherent_state(2, 25), 0, np.linspace(-1, 1, 50))


# Wigner function

def test_vacuum_wigner():
    x = np.linspace(-7, 7, 141)
    w = fs.wigner(fs.fock_state(0, 5), x, x)
    xx, pp = np.meshgrid(x, x)
    np.testing.assert_allclose(w, np.exp(-(xx**2 + pp**2) / 2) / (2 * math.pi), atol=1e-15)
    assert w[70, 70] == pytest.approx(1 / (2 * math.pi), abs=1e-6)


def test_coherent_wigner_is_translated_gaussian():
    alpha = 1.1 - 0.6j
    x = np.linspace(-9, 9, 181)
    w = fs.wigner(fs.coherent_state(alpha, 30), x, x)
    xx, pp = np.meshgrid(x, x)
    expected = np.exp(-((xx - 2 * alpha.real) ** 2 + (pp - 2 * alpha.imag) ** 2) / 2) / (2 * math.pi)
    np.testing.assert_allclose(w, expected, atol=1e-9)


def test_wigner_marginals_and_normalization():
    x = np.linspace(-13, 13, 521)
    for seed, dim in ((0, 4), (1, 7), (2, 10)):
        rho = random_density(np.random.default_rng(seed), dim)
        w = fs.wigner(rho, x, x)
        assert np.trapezoid(np.trapezoid(w, x, axis=1), x) == pytest.approx(1, abs=1e-3)
        assert np.abs(np.trapezoid(w, x, axis=0) - fs.quadrature_pdf(rho, 0, x)).max() < 1e-6
        assert np.abs(np.trapezoid(w, x, axis=1) - fs.quadrature_pdf(rho, math.pi / 2, x)).max() < 1e-6


def test_wigner_grid_coverage_error():
    with pytest.raises(fs.GridError):
        fs.wigner(fs.coherent_state(math.sqrt(3.4), 25), np.linspace(-5, 5, 11), np.linspace(-12, 12, 11))


# type invariants and serialization

def test_density_matrix_validation():
    with pytest.raises(ValueError):
        FockDensityMatrix(np.diag([0.5, 0.4]))
    with pytest.raises(ValueError):
        FockDensityMatrix(np.diag([1.2, -0.2]))
    rho = FockDensityMatrix(np.array([[0.5, 0.1 + 0.2j], [0.1 - 0.2j + 1e-14, 0.5]]))
    assert np.array_equal(rho.entries, rho.entries.conj().T)


def test_density_matrix_json_round_trip(tmp_path):
    rho = random_density(np.random.default_rng(5), 6)
    path = tmp_path / "rho.json"
    fs.save_density_matrix(rho, path)
    back = fs.load_density_matrix(path)
    assert np.array_equal(back.entries, rho.entries)
    assert set(__import__("json").loads(path.read_text())) == {"dim", "re", "im"}


def test_wigner_csv_round_trip(tmp_path):
    x = np.linspace(-7, 7, 27)
    p = np.linspace(-7, 7, 31)
    w = fs.wigner(fs.coherent_state(0.3j, 10), x, p)
    fs.save_wigner_csv(tmp_path / "w.csv", x, p, w)
    gx, gp, gw = fs.load_wigner_csv(tmp_path / "w.csv")
    assert np.array_equal(gx, x) and np.array_equal(gp, p) and np.array_equal(gw, w)


def test_default_dim():
    assert fs.default_dim(3.4) == math.ceil(3.4 + 5 * math.sqrt(3.4) + 10)
    assert fs.default_dim(0) == 10
    assert fs.default_dim(500) == 64


# classical Gaussian states in the Fock basis

def test_gaussian_fock_coherent_and_thermal():
    a = math.sqrt(3.4)
    np.testing.assert_allclose(
        fs.gaussian_fock([2 * a, 0], np.eye(2), 25), fs.coherent_state(a, 25).entries, atol=1e-12
    )
    nbar = 1.0  # cov (1 + xi) I with xi = 2
    p = np.real(np.diag(fs.gaussian_fock([0, 0], 3 * np.eye(2), 40)))
    np.testing.assert_allclose(p, [nbar**n / (1 + nbar) ** (n + 1) for n in range(40)], atol=1e-12)


def test_gaussian_state_fock_is_valid_and_rejects_squeezing():
    rho = fs.gaussian_state_fock([1.0, -0.5], np.array([[1.5, 0.2], [0.2, 2.0]]), 40)
    assert_valid(rho)
    with pytest.raises(ValueError):
        fs.gaussian_fock([0, 0], np.diag([0.5, 2.0]), 10)
