import csv
import hashlib
import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from qmemtomo import fockspace as fs
from qmemtomo.cli import main
from qmemtomo.gaussian_sim import QuadratureDataset

IDEAL = {"eta_detector": 1.0, "visibility": 1.0, "eta_filter": 1.0}


def write_config(path, **kw):
    cfg = {"alpha": math.sqrt(3.4), "eta": 0.78, "xi": 0.0, "n": 5000, "seed": 7}
    cfg.update(kw)
    path.write_text(json.dumps(cfg))
    return path


def simulate(tmp_path, name="sim", **kw):
    out = tmp_path / name
    code = main(["simulate", "--config", str(write_config(tmp_path / f"{name}.json", **kw)), "--out", str(out), "--quiet"])
    assert code == 0
    return out


def digests(directory):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(directory.iterdir())}


def benchmark(tmp_path, sim, name="bench", dim=15, extra=()):
    out = tmp_path / name
    args = ["benchmark", "--input", str(sim / "input.csv"), str(sim / "vacuum.csv"),
            "--output", str(sim / "output.csv"), str(sim / "vacuum.csv"), str(sim / "reference.csv"),
            "--dim", str(dim), "--out", str(out), "--quiet", *extra]
    return main(args), out


# simulate

def test_simulate_writes_four_datasets(tmp_path):
    out = simulate(tmp_path)
    for role in ("input", "output", "vacuum", "reference"):
        ds = QuadratureDataset.from_csv(out / f"{role}.csv")
        assert ds.counts == {role: 5000}
        meta = json.loads((out / f"{role}.meta.json").read_text())
        assert meta["seed"] == 7 and meta["convention"] == "x=a+adag, Vvac=1"
        assert meta["n_per_role"] == {role: 5000}


def test_simulate_is_byte_deterministic(tmp_path):
    a = simulate(tmp_path, "a")
    b = simulate(tmp_path, "b")
    assert digests(a) == digests(b)
    c = simulate(tmp_path, "c", seed=8)
    assert digests(a)["input.csv"] != digests(c)["input.csv"]


def test_simulate_seed_flag_overrides_config(tmp_path):
    cfg = write_config(tmp_path / "c.json")
    assert main(["simulate", "--config", str(cfg), "--seed", "11", "--out", str(tmp_path / "o"), "--quiet"]) == 0
    assert json.loads((tmp_path / "o" / "input.meta.json").read_text())["seed"] == 11


@pytest.mark.parametrize("bad", [{"n": 0}, {"eta": 1.2}, {"xi": -1}, {"bogus": 1}])
def test_simulate_invalid_config(tmp_path, bad):
    cfg = write_config(tmp_path / "c.json", **bad)
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o"), "--quiet"]) == 2


def test_simulate_requires_seed(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"alpha": 1.0, "n": 100}))
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o"), "--quiet"]) == 2


def test_simulate_missing_or_malformed_config(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "none.json"), "--out", str(tmp_path), "--quiet"]) == 3
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path), "--quiet"]) == 2


# reconstruct

def test_reconstruct_vacuum(tmp_path):
    sim = simulate(tmp_path, n=20_000)
    out = tmp_path / "rec"
    assert main(["reconstruct", str(sim / "vacuum.csv"), "--role", "vacuum", "--dim", "6", "--out", str(out), "--quiet"]) == 0
    rho = fs.load_density_matrix(out / "rho_vacuum.json")
    assert fs.fidelity(rho, fs.fock_state(0, 6)) > 0.99
    rows = list(csv.reader(open(out / "convergence_vacuum.csv")))
    assert rows[0] == ["iteration", "log_likelihood"]
    ll = [float(r[1]) for r in rows[1:]]
    assert all(b >= a - 1e-10 * abs(a) for a, b in zip(ll, ll[1:]))


def test_reconstruct_input_mean_photon_number(tmp_path):
    sim = simulate(tmp_path, n=20_000, detection=IDEAL)
    out = tmp_path / "rec"
    code = main(["reconstruct", str(sim / "input.csv"), str(sim / "vacuum.csv"), "--role", "input",
                 "--dim", "20", "--phase-bins", "64", "--out", str(out), "--quiet"])
    assert code == 0
    rho = fs.load_density_matrix(out / "rho_input.json")
    assert rho.mean_photon_number() == pytest.approx(3.4, abs=0.15)


def test_reconstruct_not_converged_still_writes(tmp_path):
    sim = simulate(tmp_path)
    out = tmp_path / "rec"
    code = main(["reconstruct", str(sim / "input.csv"), "--dim", "8", "--max-iterations", "2", "--out", str(out), "--quiet"])
    assert code == 4
    assert fs.load_density_matrix(out / "rho_input.json").dim == 8


def test_reconstruct_truncated_file(tmp_path):
    sim = simulate(tmp_path)
    text = (sim / "input.csv").read_text()
    broken = tmp_path / "broken.csv"
    broken.write_text(text[: len(text) // 2].rsplit(",", 1)[0])
    assert main(["reconstruct", str(broken), "--dim", "6", "--out", str(tmp_path / "r"), "--quiet"]) == 2


def test_reconstruct_needs_role_for_mixed_file(tmp_path):
    sim = simulate(tmp_path)
    ds = QuadratureDataset.concat([QuadratureDataset.from_csv(sim / f"{r}.csv") for r in ("input", "output")])
    ds.to_csv(tmp_path / "mixed.csv")
    assert main(["reconstruct", str(tmp_path / "mixed.csv"), "--dim", "6", "--out", str(tmp_path / "r"), "--quiet"]) == 2


# benchmark

def test_benchmark_loss_only_passes(tmp_path):
    sim = simulate(tmp_path, n=10_000, detection=IDEAL)
    cfg = tmp_path / "b.json"
    cfg.write_text(json.dumps({"detection": IDEAL, "label": "N=3.4"}))
    code, out = benchmark(tmp_path, sim, extra=("--config", str(cfg)))
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["tv_nocloning_pass"] and rep["fidelity_nocloning_pass"]
    assert rep["label"] == "N=3.4"
    rows = list(csv.DictReader(open(out / "tv.csv")))
    assert rows[0]["label"] == "N=3.4"
    assert float(rows[0]["T_sum"]) == pytest.approx(1.56, abs=0.1)
    for name in ("fidelity.csv", "rho_input.json", "rho_output.json"):
        assert (out / name).exists()


def test_benchmark_identity_memory(tmp_path):
    sim = simulate(tmp_path, n=10_000, eta=1.0, detection=IDEAL)
    cfg = tmp_path / "b.json"
    cfg.write_text(json.dumps({"detection": IDEAL}))
    code, out = benchmark(tmp_path, sim, extra=("--config", str(cfg)))
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["fidelity"] > 0.97
    assert rep["T_plus"] + rep["T_minus"] == pytest.approx(2, abs=0.15)
    assert rep["Vcv_plus"] * rep["Vcv_minus"] < 0.01


def test_benchmark_measure_and_resend_fails(tmp_path):
    sim = simulate(tmp_path, n=10_000, eta=1.0, xi=2.0, detection=IDEAL)
    cfg = tmp_path / "b.json"
    cfg.write_text(json.dumps({"detection": IDEAL}))
    code, out = benchmark(tmp_path, sim, dim=25, extra=("--config", str(cfg)))
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    assert not rep["tv_nocloning_pass"]
    assert rep["T_plus"] + rep["T_minus"] < 1
    assert rep["Vcv_plus"] * rep["Vcv_minus"] > 1


def test_benchmark_bad_detection_config(tmp_path):
    sim = simulate(tmp_path)
    cfg = tmp_path / "b.json"
    cfg.write_text(json.dumps({"detection": {"eta_detector": 1.5}}))
    code, _ = benchmark(tmp_path, sim, extra=("--config", str(cfg)))
    assert code == 2


# analyze

def test_analyze_vacuum_wigner_peak(tmp_path):
    fs.save_density_matrix(fs.fock_state(0, 5), tmp_path / "vac.json")
    assert main(["analyze", str(tmp_path / "vac.json"), "--out", str(tmp_path / "a"), "--quiet"]) == 0
    x, p, w = fs.load_wigner_csv(tmp_path / "a" / "wigner_in.csv")
    i, j = np.argmin(np.abs(p)), np.argmin(np.abs(x))
    assert w[i, j] == pytest.approx(1 / (2 * math.pi), abs=1e-6)


def test_analyze_pair_overlays(tmp_path, capsys):
    a = math.sqrt(3.4)
    fs.save_density_matrix(fs.coherent_state(a, 25), tmp_path / "in.json")
    fs.save_density_matrix(fs.coherent_state(math.sqrt(0.78) * a, 25), tmp_path / "out.json")
    out = tmp_path / "a"
    assert main(["analyze", str(tmp_path / "in.json"), str(tmp_path / "out.json"), "--out", str(out), "--quiet"]) == 0
    printed = float(capsys.readouterr().out.strip())
    assert printed == pytest.approx(math.exp(-((1 - math.sqrt(0.78)) ** 2) * 3.4), abs=1e-6)
    summary = json.loads((out / "analysis.json").read_text())
    assert summary["overlay_xi"]["classical"] > summary["overlay_xi"]["nocloning"] > 0
    rows = list(csv.DictReader(open(out / "photon_distribution.csv")))
    assert {"n", "p_in", "poisson_in", "p_out", "poisson_out", "classical_limit", "nocloning_limit"} <= set(rows[0])
    for col in ("classical_limit", "nocloning_limit"):
        assert sum(float(r[col]) for r in rows) == pytest.approx(1, abs=1e-4)


def test_analyze_dimension_mismatch(tmp_path):
    fs.save_density_matrix(fs.fock_state(0, 5), tmp_path / "a.json")
    fs.save_density_matrix(fs.fock_state(0, 6), tmp_path / "b.json")
    assert main(["analyze", str(tmp_path / "a.json"), str(tmp_path / "b.json"), "--out", str(tmp_path / "o"), "--quiet"]) == 2


def test_analyze_outputs_round_trip(tmp_path):
    rho = fs.coherent_state(0.8j, 12)
    fs.save_density_matrix(rho, tmp_path / "r.json")
    assert np.array_equal(fs.load_density_matrix(tmp_path / "r.json").entries, rho.entries)
    assert main(["analyze", str(tmp_path / "r.json"), "--out", str(tmp_path / "o"), "--quiet"]) == 0
    x, p, w = fs.load_wigner_csv(tmp_path / "o" / "wigner_in.csv")
    assert np.array_equal(w, fs.wigner(rho, x, p))


# process-level behaviour

def run_module(args, env_threads):
    env = dict(os.environ, QMEM_THREADS=str(env_threads))
    return subprocess.run([sys.executable, "-m", "qmemtomo", *args], env=env, capture_output=True, text=True)


def test_pipeline_bytes_independent_of_thread_count(tmp_path):
    cfg = write_config(tmp_path / "c.json", n=20_000)
    hashes = []
    for threads in (1, 4):
        out = tmp_path / f"t{threads}"
        assert run_module(["simulate", "--config", str(cfg), "--out", str(out / "sim"), "--quiet"], threads).returncode == 0
        rec = run_module(["reconstruct", str(out / "sim" / "input.csv"), "--dim", "12", "--out", str(out / "rec"), "--quiet"], threads)
        assert rec.returncode == 0, rec.stderr
        hashes.append({**digests(out / "sim"), **digests(out / "rec")})
    assert hashes[0] == hashes[1]


def test_logging_goes_to_stderr(tmp_path):
    cfg = write_config(tmp_path / "c.json", n=100)
    res = run_module(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")], 1)
    assert res.returncode == 0
    assert res.stdout == ""
    assert "wrote" in res.stderr


def test_usage_error_exit_code():
    res = run_module(["reconstruct"], 1)
    assert res.returncode == 2
