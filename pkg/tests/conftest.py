import functools
import math
import time

import pytest

from qmemtomo.benchmark import BenchmarkConfig, full_report
from qmemtomo.gaussian_sim import DetectionChain, QuadratureDataset, SimulationConfig, simulate_experiment
from qmemtomo.tomography import ReconstructionConfig

ACCEPTANCE_LINES = []
REPORT_SECONDS = {}


@functools.lru_cache(maxsize=None)
def experiment(nbar, eta=0.78, xi=0.0, seed=7, n=100_000, detection=None, input_noise=0.0):
    """Simulated input/output datasets, each merged with its vacuum (and reference) records."""
    chain = DetectionChain(**dict(detection)) if detection else DetectionChain.ideal()
    cfg = SimulationConfig(
        alpha_re=math.sqrt(nbar),
        eta=eta,
        xi_plus=xi,
        xi_minus=xi,
        n_pulses=n,
        seed=seed,
        detection=chain,
        input_noise=input_noise,
    )
    ds = simulate_experiment(cfg)
    inp = QuadratureDataset.concat([ds["input"], ds["vacuum"]])
    out = QuadratureDataset.concat([ds["output"], ds["vacuum"], ds["reference"]])
    return inp, out, chain


@functools.lru_cache(maxsize=None)
def report(nbar, eta=0.78, xi=0.0, seed=7, n=100_000, dim=25, detection=None, input_noise=0.0):
    start = time.perf_counter()
    inp, out, chain = experiment(nbar, eta, xi, seed, n, detection, input_noise)
    cfg = BenchmarkConfig(reconstruction=ReconstructionConfig(dim=dim))
    rep = full_report(inp, out, chain, cfg)
    REPORT_SECONDS[(nbar, eta, xi, seed, n, dim, detection, input_noise)] = time.perf_counter() - start
    return rep


def record_acceptance(number, passed, detail):
    ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {detail}")


@pytest.fixture
def acceptance():
    return record_acceptance


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
