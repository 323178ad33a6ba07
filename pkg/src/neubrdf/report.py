"""Machine-readable summaries of runs: one JSON document plus flat CSV."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

from . import SCHEMA_VERSIONS, __version__

REPORT_FIELDS = ("metric", "value", "samples", "seed", "source")


def metric_entry(metric: str, value, samples: int | None = None, seed: int | None = None,
                 source: str = "") -> dict:
    return {"metric": metric, "value": _finite_or_str(value), "samples": samples, "seed": seed,
            "source": source}


def _finite_or_str(x):
    # JSON has no inf/nan; keep them as explicit strings
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


def make_report(results: list[dict], provenance: dict | None = None) -> dict:
    """Deterministic report document from metric entries (see :func:`metric_entry`)."""
    entries = sorted((dict(r) for r in results), key=lambda r: (str(r.get("source", "")), r["metric"]))
    for e in entries:
        for k in REPORT_FIELDS:
            e.setdefault(k, None)
        e["value"] = _finite_or_str(e["value"])
    return {"schema": SCHEMA_VERSIONS["report"], "version": __version__,
            "provenance": provenance or {}, "entries": entries}


def write_report(path: str | Path, report: dict) -> None:
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")


def read_report(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())


def write_entries_csv(path: str | Path, report: dict) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_FIELDS)
        for e in report["entries"]:
            w.writerow([e.get(k) for k in REPORT_FIELDS])


def collect_run(run_dir: str | Path) -> list[dict]:
    """Metric entries from the JSON files a CLI command leaves in ``run_dir``."""
    run_dir = Path(run_dir)
    entries = []
    name = run_dir.name
    if (run_dir / "metrics.json").exists():
        m = json.loads((run_dir / "metrics.json").read_text())
        seed = m.get("seed")
        n = m.get("n_images")
        for key in ("psnr", "dssim", "rmse_cbrt"):
            if key in m:
                entries.append(metric_entry(key, m[key], n, seed, name))
        if "reciprocity_rmse" in m:
            entries.append(metric_entry("reciprocity_rmse", m["reciprocity_rmse"], m.get("reciprocity_pairs"),
                                        seed, name))
    if (run_dir / "physics.json").exists():
        p = json.loads((run_dir / "physics.json").read_text())
        seed = p.get("seed")
        rec = p.get("reciprocity", {})
        if rec:
            entries.append(metric_entry("reciprocity_rmse", rec["rmse"], rec["pairs"], seed, name))
        en = p.get("energy", {})
        if en:
            for key in ("fraction_above_one", "median_above_one", "violations_3sigma", "max_estimate"):
                entries.append(metric_entry(f"energy_{key}", en[key], en["pairs"], seed, name))
    if (run_dir / "train.json").exists():
        t = json.loads((run_dir / "train.json").read_text())
        entries.append(metric_entry("final_train_loss", t["final_loss"], t["iterations"], t.get("seed"), name))
    return entries
