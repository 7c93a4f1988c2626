import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from knnperc import harness
from knnperc.cli import main
from knnperc.harness import ConfigError, ExperimentConfig


def read_csv(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# config_hash=")
    return lines[0], list(csv.DictReader(lines[1:]))


def test_default_seeds_and_validation():
    cfg = ExperimentConfig(experiment="table1", seed=5)
    assert cfg.seeds == list(range(5, 15))
    with pytest.raises(ConfigError):
        ExperimentConfig(experiment="nope")
    with pytest.raises(ConfigError):
        ExperimentConfig(seeds=[])
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"experiment": "table1", "inner_fracton": 0.5})


def test_config_hash_ignores_output_location():
    a = ExperimentConfig(out="/tmp/a", threads=1)
    b = ExperimentConfig(out="/tmp/b", threads=4)
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != ExperimentConfig(seed=1).config_hash()


def test_unknown_config_key_exits_2(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"n": 100, "kk": 3}))
    assert main(["table1", "--config", str(cfg)]) == 2
    assert "kk" in capsys.readouterr().err
    cfg.write_text("{not json")
    assert main(["table1", "--config", str(cfg)]) == 2


def test_invalid_values_exit_2():
    assert main(["fit-sweep", "--k-list", "2,3,4"]) == 2
    assert main(["table1", "--cases", "10:10"]) == 2
    assert main(["table1", "--inner-fraction", "1.5"]) == 2


def test_bound_search_not_found_exits_3(capsys):
    assert main(["bound-search", "--threshold", "0.999999"]) == 3
    assert "best=(500" in capsys.readouterr().err
    # 0.99 is reachable below k = 500 (large a makes every region likely occupied)
    assert main(["bound-search", "--threshold", "0.99", "--k-max", "300"]) == 3


def test_threshold_099_is_reachable():
    res = harness.run_bound_search(ExperimentConfig(experiment="bound-search", threshold=0.99))
    assert res.k_star == 492 and res.p_star > 0.99


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"cases": [[60, 4]], "seeds": [1, 2], "inner_fraction": 0.9}))
    out = tmp_path / "o"
    assert main(["table1", "--config", str(cfg), "--inner-fraction", "0.8", "--out", str(out)]) == 0
    _, rows = read_csv(out / "table1.csv")
    assert [r["seed"] for r in rows] == ["1", "2"]
    assert {r["inner_fraction"] for r in rows} == {"0.8"}


def test_table1_outputs_are_deterministic(tmp_path):
    args = ["table1", "--cases", "300:4,300:5", "--seeds", "3,4,5"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b"), "--threads", "3"]) == 0
    for name in ("table1.csv", "table1_summary.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    head, rows = read_csv(tmp_path / "a" / "table1.csv")
    assert "seeds=3,4,5" in head
    assert list(rows[0])[:9] == ["n", "k", "seed", "inner_fraction", "pairs", "avg", "max", "pct_le_2", "pct_le_2x_avg"]
    assert len(rows) == 6
    _, summary = read_csv(tmp_path / "a" / "table1_summary.csv")
    assert [(s["n"], s["k"]) for s in summary] == [("300", "4"), ("300", "5")]
    mean4 = np.mean([float(r["avg"]) for r in rows if r["k"] == "4"])
    assert float(summary[0]["mean_avg"]) == pytest.approx(mean4)


def test_complete_graph_distortion_is_one():
    cfg = ExperimentConfig(experiment="table1", cases=[(12, 11)], seeds=[0, 1], inner_fraction=1.0)
    rows, summary = harness.run_table1(cfg)
    assert all(r["avg"] == 1.0 and r["max"] == 1.0 for r in rows)


def test_degenerate_rows_are_marked():
    cfg = ExperimentConfig(experiment="table1", cases=[(4, 2)], seeds=list(range(6)), inner_fraction=0.05)
    rows, summary = harness.run_table1(cfg)
    assert len(rows) == 6
    assert any(r["degenerate"] for r in rows)
    assert all(math.isnan(r["avg"]) for r in rows if r["degenerate"])


def test_fit_sweep_outputs(tmp_path):
    out = tmp_path / "fit"
    assert main(["fit-sweep", "--n", "300", "--k-list", "3,5,8", "--seeds", "0,1", "--out", str(out)]) == 0
    doc = json.loads((out / "fit.json").read_text())
    assert set(doc) == {"a_fit", "rss", "points", "config_hash", "seeds"}
    assert [p["k"] for p in doc["points"]] == [3, 5, 8]
    _, rows = read_csv(out / "fit_sweep.csv")
    assert list(rows[0]) == ["k", "k2", "avg", "fitted"]
    assert rows[1]["k2"] == "25"
    assert float(rows[0]["fitted"]) == pytest.approx(1 + doc["a_fit"] / 9)
    assert "1 + a / x" in (out / "fit.gnuplot").read_text()


def test_fit_residuals_shrink_with_more_seeds():
    def rss(nseeds):
        cfg = ExperimentConfig(experiment="fit-sweep", n=1000, seeds=list(range(nseeds)))
        return harness.run_fit_sweep(cfg)[0].rss

    assert rss(10) < rss(3)


def test_bound_search_report(tmp_path):
    out = tmp_path / "b"
    assert main(["bound-search", "--out", str(out)]) == 0
    doc = json.loads((out / "bound.json").read_text())
    assert doc["k_star"] == 188 and 0.88 <= doc["a_star"] <= 0.91
    for key in ("e_area", "e_area_resolution", "e_area_halving_change", "lambda", "threshold", "scan", "config_hash", "seeds"):
        assert key in doc
    assert doc["e_area_resolution"] == 2000


def test_coupling_verify_small_grid(tmp_path):
    out = tmp_path / "c"
    assert main(["coupling-verify", "--tiles", "6", "--n-sources", "3", "--out", str(out)]) == 0
    doc = json.loads((out / "coupling.json").read_text())
    for key in ("adjacent_checked", "valid_paths", "max_hop_ratio", "c_tiles_estimate", "alpha_hat",
                "failures", "open_fraction", "analytic_p", "config_hash", "seeds"):
        assert key in doc
    assert doc["valid_paths"] == doc["adjacent_checked"]
    lat = (out / "lattice.csv").read_text().splitlines()
    assert lat[0] == "tx,ty,open,rep_idx,count" and len(lat) == 37


def test_kc_probe(tmp_path):
    cfg = ExperimentConfig(experiment="kc-probe", n=1000, k_list=[1, 2, 3, 4, 5, 6], out=str(tmp_path))
    rows = harness.run_kc_probe(cfg)
    frac = [r["fraction"] for r in rows]
    assert all(b >= a for a, b in zip(frac, frac[1:]))
    assert frac[2] >= 0.5
    head, csv_rows = read_csv(tmp_path / "kc_probe.csv")
    assert list(csv_rows[0]) == ["k", "fraction"]
    full = harness.run_kc_probe(ExperimentConfig(experiment="kc-probe", n=30, k_list=[29], seeds=[0, 1]))
    assert full[0]["fraction"] == 1.0


def test_sample_subcommand(tmp_path):
    assert main(["sample", "--n", "50", "--seed", "9", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "points.csv").read_text().startswith("idx,x,y")
    meta = json.loads((tmp_path / "points.csv.json").read_text())
    assert meta["n"] == 50 and meta["seed"] == 9


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "knnperc", "table1", "--unknown-flag"], capture_output=True)
    assert res.returncode == 2
    res = subprocess.run([sys.executable, "-m", "knnperc", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "coupling-verify" in res.stdout
