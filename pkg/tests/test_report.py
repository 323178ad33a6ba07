import json

import numpy as np

from neubrdf.plotting import plot_energy_histogram, plot_image_pair, plot_loss_curves, plot_metric_bars
from neubrdf.report import REPORT_FIELDS, collect_run, make_report, metric_entry, read_report, write_entries_csv, \
    write_report


def test_entries_sorted_and_non_finite_kept(tmp_path):
    rep = make_report([metric_entry("psnr", float("inf"), 4, 0, "b"), metric_entry("dssim", 0.1, 4, 0, "b"),
                       {"metric": "psnr", "value": 30.0, "source": "a"}])
    assert [(e["source"], e["metric"]) for e in rep["entries"]] == [("a", "psnr"), ("b", "dssim"), ("b", "psnr")]
    assert rep["entries"][2]["value"] == "inf"
    assert rep["entries"][0]["samples"] is None
    write_report(tmp_path / "r.json", rep)
    assert read_report(tmp_path / "r.json") == rep
    write_entries_csv(tmp_path / "r.csv", rep)
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == ",".join(REPORT_FIELDS) and len(lines) == 4


def test_collect_run(tmp_path):
    run = tmp_path / "run1"
    run.mkdir()
    (run / "metrics.json").write_text(json.dumps({"psnr": 41.0, "dssim": 0.01, "rmse_cbrt": 0.02, "seed": 3,
                                                  "n_images": 6, "reciprocity_rmse": 0.5,
                                                  "reciprocity_pairs": 100}))
    (run / "physics.json").write_text(json.dumps({
        "seed": 3, "reciprocity": {"rmse": 0.0, "pairs": 50},
        "energy": {"pairs": 10, "fraction_above_one": 0.0, "median_above_one": float("nan"),
                   "violations_3sigma": 0, "max_estimate": 0.9}}))
    (run / "train.json").write_text(json.dumps({"final_loss": 1e-4, "iterations": 10, "seed": 3}))
    entries = collect_run(run)
    names = sorted(e["metric"] for e in entries)
    assert names.count("reciprocity_rmse") == 2
    assert {"psnr", "dssim", "rmse_cbrt", "final_train_loss", "energy_median_above_one"} <= set(names)
    assert all(e["source"] == "run1" and e["seed"] == 3 for e in entries)
    assert collect_run(tmp_path / "empty") == []


def test_plots_are_deterministic(tmp_path):
    rng = np.random.default_rng(0)
    img = rng.random((12, 12, 3))
    for d in ("a", "b"):
        out = tmp_path / d
        out.mkdir()
        plot_loss_curves({"x": np.linspace(1, 0.1, 50)}, out / "loss.png")
        plot_energy_histogram({"x": np.linspace(0.2, 1.1, 30)}, out / "e.png")
        plot_image_pair(img, img * 0.9, out / "pair.png", "pair")
        plot_metric_bars([metric_entry("psnr", 40.0, 1, 0, "x"), metric_entry("psnr", "inf", 1, 0, "y")],
                         "psnr", out / "bars.png")
    for name in ("loss.png", "e.png", "pair.png", "bars.png"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
