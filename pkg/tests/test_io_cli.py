import json

import numpy as np
import pytest

from mixvi import io
from mixvi.cavi import fit
from mixvi.cli import main
from mixvi.errors import DatasetValidationError
from mixvi.gibbs import ChainConfig, run_chain
from mixvi.model import MixedDataset, default_priors
from mixvi.simulation import ScenarioSpec, simulate


def strip_clock(doc):
    if isinstance(doc, dict):
        return {k: strip_clock(v) for k, v in doc.items() if k != "wall_clock"}
    if isinstance(doc, list):
        return [strip_clock(v) for v in doc]
    return doc


# ---------------------------------------------------------------- file formats


def test_dataset_csv_round_trip(tmp_path):
    truth, data = simulate(ScenarioSpec("s2", 50, seed=3))
    io.write_dataset_csv(tmp_path / "d.csv", data)
    io.dump_json(tmp_path / "m.json", io.column_manifest(data))
    back = io.read_dataset_csv(tmp_path / "d.csv", tmp_path / "m.json")
    assert np.array_equal(back.x, data.x)
    assert np.array_equal(back.c, data.c)
    assert back.cards == data.cards
    text = (tmp_path / "d.csv").read_text().splitlines()
    assert text[0].startswith("f:x1,") and ",c:c1," in text[0]
    assert set(text[1].split(",")[-10:]) <= {"1", "2"}


def test_csv_problems_reported_together(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("f:a,c:b,zz\n1.0,1,3\nfoo,x,2\n")
    with pytest.raises(DatasetValidationError) as exc:
        io.read_dataset_csv(p)
    msgs = exc.value.violations
    assert any("zz" in m for m in msgs)
    assert any("non-numeric" in m for m in msgs)
    assert any("non-integer" in m for m in msgs)


def test_csv_out_of_range_code(tmp_path):
    (tmp_path / "d.csv").write_text("f:a,c:b\n1.0,1\n2.0,4\n")
    io.dump_json(tmp_path / "m.json", {"columns": [{"name": "a", "kind": "cont"},
                                                   {"name": "b", "kind": "cat", "card": 3}]})
    with pytest.raises(DatasetValidationError) as exc:
        io.read_dataset_csv(tmp_path / "d.csv", tmp_path / "m.json")
    assert exc.value.violations == ["category out of range at (1,0)"]


def test_truth_vp_chain_round_trips():
    truth, data = simulate(ScenarioSpec("onedim", 300, seed=1))
    t2 = io.truth_from_dict(json.loads(json.dumps(io.truth_to_dict(truth))))
    assert np.array_equal(t2.z, truth.z) and np.array_equal(t2.sigma, truth.sigma)
    priors = default_priors(data, 3)
    vp = fit(data, priors).vp
    vp2 = io.vp_from_dict(json.loads(json.dumps(io.vp_to_dict(vp))))
    assert np.array_equal(vp2.phi_hat, vp.phi_hat) and np.array_equal(vp2.eta_hat[0], vp.eta_hat[0])
    p2 = io.priors_from_dict(io.priors_to_dict(priors))
    assert np.array_equal(p2.phi, priors.phi) and p2.nu == priors.nu
    chain = run_chain(data, priors, ChainConfig(sweeps=30, burn_in=10, thin=5))
    c2 = io.chain_from_dict(json.loads(json.dumps(io.chain_to_dict(chain, priors, None, include_samples=True))))
    assert np.array_equal(c2.mu, chain.mu) and np.array_equal(c2.z_last, chain.z_last)
    assert c2.samples["sigma"].shape == chain.samples["sigma"].shape


def test_run_manifest_hash_is_order_free():
    a = io.RunManifest("fit", {"a": 1, "b": 2}, 0)
    b = io.RunManifest("fit", {"b": 2, "a": 1}, 0)
    assert a.config_hash == b.config_hash and len(a.config_hash) == 16
    assert set(a.to_dict()) >= {"command", "config_hash", "seed", "wall_clock", "version"}


# ---------------------------------------------------------------- CLI


@pytest.fixture(scope="module")
def onedim_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("onedim")
    assert main(["simulate", "--scenario", "onedim", "--n", "5000", "--seed", "7", "--out", str(d)]) == 0
    return d


def test_simulate_outputs(onedim_dir):
    assert sorted(p.name for p in onedim_dir.iterdir()) == ["data.csv", "manifest.json", "truth.json"]
    truth = io.load_json(onedim_dir / "truth.json")
    assert truth["mu"] == [[0.0], [2.0], [5.0]] and truth["pi"] == [0.4, 0.35, 0.25]
    assert min(truth["z"]) == 1


def test_simulate_s2_columns(tmp_path):
    assert main(["simulate", "--scenario", "s2", "--n", "2500", "--seed", "1", "--out", str(tmp_path)]) == 0
    cols = io.read_column_manifest(tmp_path / "manifest.json")
    cats = [c for c in cols if c["kind"] == "cat"]
    assert len(cats) == 10 and all(c["card"] == 2 for c in cats)


def test_unknown_scenario_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--scenario", "s9", "--n", "10", "--out", str(tmp_path)])
    assert exc.value.code == 2


def test_fit_evaluate_summarize_predict(onedim_dir, tmp_path):
    model = tmp_path / "model.json"
    assert main(["fit", "--method", "cavi", "--k", "3", "--data", str(onedim_dir / "data.csv"),
                 "--seed", "7", "--out", str(model)]) == 0
    doc = io.load_json(model)
    v = np.asarray(doc["elbo_trace"]["values"])
    assert np.all(np.diff(v) >= -1e-8 * np.abs(v[1:]))
    metrics = tmp_path / "metrics.json"
    assert main(["evaluate", "--model", str(model), "--truth", str(onedim_dir / "truth.json"),
                 "--out", str(metrics)]) == 0
    m = io.load_json(metrics)
    assert m["prop_z"] > 0.95 and m["error_mu"] < 0.05 and m["error_logppd"] is not None
    summ = tmp_path / "summary.json"
    assert main(["summarize", "--model", str(model), "--out", str(summ)]) == 0
    s = io.load_json(summ)
    assert len(s["clusters"]) == 3
    assert all(sum(cl["categorical"]["c1"]) == pytest.approx(1.0) for cl in s["clusters"])
    pred = tmp_path / "pred.json"
    assert main(["predict", "--model", str(model), "--data", str(onedim_dir / "data.csv"), "--out", str(pred)]) == 0
    assert len(io.load_json(pred)["labels"]) == 5000


def test_fit_is_byte_reproducible(onedim_dir, tmp_path):
    outs = []
    for _ in range(2):
        assert main(["fit", "--k", "3", "--data", str(onedim_dir / "data.csv"), "--seed", "3",
                     "--out", str(tmp_path / "m.json")]) == 0
        outs.append(strip_clock(io.load_json(tmp_path / "m.json")))
    assert json.dumps(outs[0]) == json.dumps(outs[1])


def test_seed_env_override(onedim_dir, tmp_path, monkeypatch):
    monkeypatch.setenv("MIXVI_SEED", "11")
    assert main(["fit", "--k", "3", "--data", str(onedim_dir / "data.csv"), "--out", str(tmp_path / "m.json"),
                 "--max-sweeps", "5"]) == 0
    assert io.load_json(tmp_path / "m.json")["run_manifest"]["seed"] == 11
    monkeypatch.setenv("MIXVI_SEED", "abc")
    assert main(["fit", "--k", "3", "--data", str(onedim_dir / "data.csv"), "--out", str(tmp_path / "m.json")]) == 2


def test_overspecified_k_leaves_tiny_components(onedim_dir, tmp_path):
    model = tmp_path / "k6.json"
    assert main(["fit", "--k", "6", "--data", str(onedim_dir / "data.csv"), "--seed", "7", "--out", str(model)]) == 0
    doc = io.load_json(model)
    w = np.asarray(doc["alpha_hat"]) / np.sum(doc["alpha_hat"])
    assert np.sum(w < 0.02) >= 2
    truth = str(onedim_dir / "truth.json")
    assert main(["evaluate", "--model", str(model), "--truth", truth]) == 2
    assert main(["evaluate", "--model", str(model), "--truth", truth, "--allow-overspecified",
                 "--out", str(tmp_path / "e.json")]) == 0


def test_gibbs_fit_and_evaluate(onedim_dir, tmp_path):
    model = tmp_path / "g.json"
    assert main(["fit", "--method", "gibbs", "--k", "3", "--data", str(onedim_dir / "data.csv"),
                 "--sweeps", "60", "--burn-in", "20", "--out", str(model)]) == 0
    doc = io.load_json(model)
    assert doc["method"] == "gibbs" and doc["n_samples"] == 40
    assert main(["evaluate", "--model", str(model), "--truth", str(onedim_dir / "truth.json")]) == 0


def test_perfect_model_has_zero_error(onedim_dir, tmp_path):
    truth = io.truth_from_dict(io.load_json(onedim_dir / "truth.json"))
    n = 1e9
    doc = {"method": "cavi", "K": 3, "q": 1, "alpha_hat": (truth.pi * n).tolist(), "m_hat": truth.mu.tolist(),
           "beta_hat": [n] * 3, "nu_hat": [n] * 3, "phi_hat": (truth.sigma * (n - 2)).tolist(),
           "eta_hat": [(truth.psi[0] * n).tolist()], "transform": None}
    io.dump_json(tmp_path / "perfect.json", doc)
    assert main(["evaluate", "--model", str(tmp_path / "perfect.json"), "--truth", str(onedim_dir / "truth.json"),
                 "--out", str(tmp_path / "e.json")]) == 0
    m = io.load_json(tmp_path / "e.json")
    for key in ("error_mu", "error_sigma", "error_pi", "error_psi"):
        assert m[key] == pytest.approx(0.0, abs=1e-12)
    assert m["error_logppd"] == pytest.approx(0.0, abs=1e-6)


def test_usage_errors(tmp_path, onedim_dir):
    assert main(["coverage", "--scenario", "s1", "--n", "500", "--reps", "5"]) == 2
    assert main(["evaluate", "--model", str(tmp_path / "none.json"), "--truth", str(tmp_path / "t.json")]) == 2
    assert main(["fit", "--data", str(onedim_dir / "data.csv")]) == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("f:a\nnan\n1\n")
    assert main(["fit", "--k", "1", "--data", str(bad), "--out", str(tmp_path / "o.json")]) == 1


def test_help_lists_subcommands(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    for cmd in ("simulate", "fit", "evaluate", "coverage", "summarize", "predict"):
        assert cmd in out
