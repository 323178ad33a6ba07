"""Command-line entry point: ``neubrdf <command> [options]``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
Every setting resolves as CLI flag > ``--config`` JSON > built-in default and
the outcome is written to the ``provenance`` block of the command's output.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

from . import SCHEMA_VERSIONS, __version__

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
RECIPROCITY_FLAGS = {"none": "none", "swap": "random_swap", "mapping": "mapping"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def bundled_scene_path() -> Path:
    return Path(str(resources.files("neubrdf") / "data" / "sphere_scene.json"))


# -- settings -----------------------------------------------------------------
def resolve(args: argparse.Namespace, config: dict, defaults: dict) -> tuple[dict, dict]:
    """Merge flag, config and default values; returns (values, provenance)."""
    values, prov = {}, {}
    for key, default in defaults.items():
        flag = getattr(args, key, None)
        if flag is not None:
            values[key], src = flag, "flag"
        elif key in config:
            values[key], src = config[key], "config"
        else:
            values[key], src = default, "default"
        prov[key] = {"value": _jsonable(values[key]), "source": src}
    return values, prov


def _jsonable(x):
    if isinstance(x, tuple):
        return list(x)
    if isinstance(x, Path):
        return str(x)
    return x


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"config file {p} does not exist")
    try:
        cfg = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"config file {p}: {exc}") from None
    if not isinstance(cfg, dict):
        raise ValueError(f"config file {p}: expected a JSON object")
    return cfg


def _parse_clamp(text: str):
    if text == "default":
        from .neural import SRGB_ALBEDO_CLAMP
        return SRGB_ALBEDO_CLAMP
    try:
        lo, hi = (float(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected LO,HI or 'default'") from None
    return (lo, hi)


def _dump(path: Path, obj: dict) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n")


def _provenance(command: str, prov: dict) -> dict:
    return {"command": command, "version": __version__, "settings": prov}


# -- commands -----------------------------------------------------------------
def cmd_gen_data(args, config) -> int:
    from .dataset import SceneSpec, generate, split

    # the config file is a scene description; without one the bundled sphere scene is used
    base = Path(args.config).parent if args.config else bundled_scene_path().parent
    bundled = json.loads(bundled_scene_path().read_text())
    spec = SceneSpec.from_dict(config or bundled, base)
    defaults = {"seed": bundled["seed"], "mesh": bundled["mesh"], "all_pairs": False}
    vals, prov = resolve(args, {k: v for k, v in config.items() if k in ("seed", "mesh")}, defaults)
    spec.seed, spec.mesh = int(vals["seed"]), vals["mesh"]
    if args.mesh is not None:
        spec.base_dir = "."
    out = Path(args.out)
    pairs = None
    if not vals["all_pairs"]:
        sp = split(spec.camera_count, spec.light_count, spec.split, spec.seed)
        pairs = sp.train + sp.test
    t0 = time.perf_counter()
    ds = generate(spec, out, pairs)
    _dump(out / "provenance.json", _provenance("gen-data", prov))
    n = len(ds.records(ds.split.train)) + len(ds.records(ds.split.test))
    print(f"gen-data: {len(pairs) if pairs else spec.camera_count * spec.light_count} images, "
          f"{n} split records, encoder {ds.scene.encoder.kind}({ds.scene.encoder.dim}) -> {out} "
          f"[{time.perf_counter() - t0:.1f}s]")
    return EXIT_OK


TRAIN_DEFAULTS = {
    "model": "single_mlp", "reciprocity": "none", "enhanced": False, "dir_feed_layer": None,
    "albedo_clamp": None, "spec_channels": "rgb", "width": 128,
    "iterations": 2000, "batch_size": 1 << 15, "lr": 5e-4, "reg_diffuse": 5e-4, "reg_specular": 5e-4,
    "checkpoint_every": 0, "seed": 0,
}


def cmd_train(args, config) -> int:
    from .dataset import Dataset
    from .neural import ModelSpec, NeuralBRDF
    from .train import TrainConfig, TrainingPool, train_model, write_loss_csv

    vals, prov = resolve(args, config, TRAIN_DEFAULTS)
    recip = RECIPROCITY_FLAGS.get(vals["reciprocity"], vals["reciprocity"])
    ds = Dataset(args.data)
    clamp = vals["albedo_clamp"]
    spec = ModelSpec(vals["model"], ds.scene.encoder.dim, recip, bool(vals["enhanced"]), vals["spec_channels"],
                     tuple(clamp) if clamp is not None else None, vals["dir_feed_layer"], int(vals["width"]))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = int(vals["seed"])
    cfg = TrainConfig(iterations=int(vals["iterations"]), batch_size=int(vals["batch_size"]), lr=float(vals["lr"]),
                      reg_diffuse=float(vals["reg_diffuse"]), reg_specular=float(vals["reg_specular"]), seed=seed,
                      checkpoint_every=int(vals["checkpoint_every"]), checkpoint_dir=str(out / "checkpoints"))
    rec = ds.records(ds.split.train)
    pool = TrainingPool.from_records(rec, ds.encode(rec))
    model = NeuralBRDF(spec, seed=seed)
    t0 = time.perf_counter()
    res = train_model(model, pool, cfg, log_every=args.log_every)
    model.save(out / "model.ckpt", res.optimizer.state, {"iteration": cfg.iterations, "seed": seed})
    write_loss_csv(out / "loss.csv", res.losses)
    final = res.losses[-1]["loss"] if res.losses else float("nan")
    _dump(out / "train.json", {"schema": SCHEMA_VERSIONS["report"], "model": spec.to_dict(), "train": cfg.to_dict(),
                               "seed": seed, "iterations": cfg.iterations, "final_loss": final,
                               "pool_size": len(pool), "parameters": model.parameter_count(),
                               "data": str(args.data), "provenance": _provenance("train", prov)})
    print(f"train: {spec.kind} ({model.parameter_count()} params, reciprocity {recip}) "
          f"{cfg.iterations} iters on {len(pool)} values, final loss {final:.4e} -> {out} "
          f"[{time.perf_counter() - t0:.1f}s]")
    return EXIT_OK


def cmd_eval(args, config) -> int:
    from .audit import model_evaluator, reciprocity_rmse
    from .dataset import Dataset
    from .evaluate import evaluate_model
    from .hdrio import write_pfm, write_png_preview
    from .neural import NeuralBRDF

    vals, prov = resolve(args, config, {"seed": 0, "pairs": 10_000, "keep_images": 1})
    ds = Dataset(args.data)
    model, _ = NeuralBRDF.load(args.checkpoint)
    if model.spec.x_dim != ds.scene.encoder.dim:
        raise ValueError(f"checkpoint expects {model.spec.x_dim} position features, dataset has "
                         f"{ds.scene.encoder.dim}")
    res = evaluate_model(model, ds, keep_images=int(vals["keep_images"]))
    rr = reciprocity_rmse(model_evaluator(model, ds.scene.encoder), ds.scene.mesh, int(vals["pairs"]),
                          int(vals["seed"]))
    out = Path(args.out)
    (out / "images").mkdir(parents=True, exist_ok=True)
    for im in res.images:
        name = f"v{im.view:03d}_l{im.light:03d}"
        write_pfm(out / "images" / f"{name}_pred.pfm", im.pred)
        write_pfm(out / "images" / f"{name}_gt.pfm", im.gt)
        write_png_preview(out / "images" / f"{name}_pred.png", im.pred)
        write_png_preview(out / "images" / f"{name}_gt.png", im.gt)
    doc = res.to_dict()
    doc.update({"schema": SCHEMA_VERSIONS["report"], "seed": int(vals["seed"]), "reciprocity_rmse": rr,
                "reciprocity_pairs": int(vals["pairs"]), "model": model.spec.to_dict(),
                "provenance": _provenance("eval", prov)})
    _dump(out / "metrics.json", doc)
    with open(out / "per_image.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["view", "light", "psnr", "dssim"])
        for r in res.per_image:
            w.writerow([r["view"], r["light"], repr(r["psnr"]), repr(r["dssim"])])
    print(f"eval: {res.n_images} held-out images  PSNR {res.psnr:.2f} dB  DSSIM {res.dssim:.4f}  "
          f"RMSE-cbrt {res.rmse_cbrt:.4f}  reciprocity {rr:.3e} -> {out}")
    return EXIT_OK


PHYSICS_DEFAULTS = {"model": "rp", "pairs": 1000, "mc_samples": 4000, "recip_pairs": 10_000, "seed": 0,
                    "mesh": None, "reciprocity": "none", "enhanced": False, "dir_feed_layer": None,
                    "albedo_clamp": None, "spec_channels": "rgb", "width": 128}


def cmd_validate_physics(args, config) -> int:
    from .audit import energy_audit, model_evaluator, reciprocity_rmse
    from .dataset import Dataset
    from .lbo import make_encoder
    from .mesh import icosphere, load_mesh
    from .neural import ModelSpec, NeuralBRDF

    vals, prov = resolve(args, config, PHYSICS_DEFAULTS)
    seed = int(vals["seed"])
    if args.checkpoint:
        model, _ = NeuralBRDF.load(args.checkpoint)
        if args.data is None:
            raise UsageError("--checkpoint needs --data to rebuild the position encoder")
        ds = Dataset(args.data)
        mesh, encoder = ds.scene.mesh, ds.scene.encoder
        source = str(args.checkpoint)
    else:
        # untrained model: each surface point gets seeded random weights' output,
        # i.e. a spatially varying random parameterization
        mesh = load_mesh(vals["mesh"]) if vals["mesh"] else icosphere(3)
        encoder = make_encoder(mesh, "xyz")
        clamp = vals["albedo_clamp"]
        spec = ModelSpec(vals["model"], encoder.dim, RECIPROCITY_FLAGS.get(vals["reciprocity"], vals["reciprocity"]),
                         bool(vals["enhanced"]), vals["spec_channels"], tuple(clamp) if clamp is not None else None,
                         vals["dir_feed_layer"], int(vals["width"]))
        model = NeuralBRDF(spec, seed=seed)
        source = f"untrained:{spec.kind}"
    ev = model_evaluator(model, encoder)
    t0 = time.perf_counter()
    rr = reciprocity_rmse(ev, mesh, int(vals["recip_pairs"]), seed)
    audit = energy_audit(ev, mesh, int(vals["pairs"]), int(vals["mc_samples"]), seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.energy_csv:
        audit.write_csv(out / "energy.csv")
    summary = audit.summary()
    _dump(out / "physics.json", {
        "schema": SCHEMA_VERSIONS["report"], "seed": seed, "source": source, "model": model.spec.to_dict(),
        "reciprocity": {"rmse": rr, "pairs": int(vals["recip_pairs"]),
                        "sampling": "x area-uniform, v and l cosine-weighted"},
        "energy": summary, "provenance": _provenance("validate-physics", prov)})
    print(f"validate-physics: {source}  reciprocity RMSE {rr:.3e}  energy: {summary['pairs']} pairs x "
          f"{summary['mc_samples']} samples, {100 * summary['fraction_above_one']:.1f}% > 1, "
          f"{summary['violations_3sigma']} above 1+3sigma -> {out} [{time.perf_counter() - t0:.1f}s]")
    return EXIT_OK


def cmd_render(args, config) -> int:
    from .dataset import Dataset, noise_rng, render_records
    from .hdrio import write_pfm, write_png_preview
    from .neural import NeuralBRDF
    from .render import material_brdf

    vals, prov = resolve(args, config, {"view": 0, "light": 0, "seed": 0})
    ds = Dataset(args.data)
    v, l = int(vals["view"]), int(vals["light"])
    if not (0 <= v < len(ds.scene.cameras) and 0 <= l < len(ds.scene.light_dirs_cam)):
        raise ValueError(f"view {v} / light {l} out of range")
    if args.checkpoint:
        model, _ = NeuralBRDF.load(args.checkpoint)
        enc = ds.scene.encoder

        def brdf(geom, hits, idx):
            return model.predict(enc.encode(hits.face[idx], hits.bary[idx]), geom)
        label = "model"
    else:
        brdf = material_brdf(ds.spec.material)
        label = "ground truth"
    img, res, _ = render_records(ds.scene, v, l, brdf, None, noise_rng(int(vals["seed"]), v, l), 0.0)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_pfm(out / "render.pfm", img)
    write_png_preview(out / "render.png", img)
    _dump(out / "render.json", {"view": v, "light": l, "source": label, "pixels": int(res.mask.sum()),
                                "provenance": _provenance("render", prov)})
    print(f"render: {label} view {v} light {l}, {int(res.mask.sum())} object pixels -> {out}")
    return EXIT_OK


def cmd_report(args, config) -> int:
    from . import plotting
    from .hdrio import read_pfm
    from .report import collect_run, make_report, write_entries_csv, write_report

    vals, prov = resolve(args, config, {"runs": []})
    runs = [Path(r) for r in vals["runs"]]
    for r in runs:
        if not r.is_dir():
            raise FileNotFoundError(f"run directory {r} does not exist")
    entries = [e for r in runs for e in collect_run(r)]
    doc = make_report(entries, _provenance("report", prov))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_report(out / "report.json", doc)
    write_entries_csv(out / "report.csv", doc)
    curves, energy, pairs_shown = {}, {}, []
    for r in runs:
        if (r / "loss.csv").exists():
            with open(r / "loss.csv") as fh:
                curves[r.name] = np.array([float(row["loss"]) for row in csv.DictReader(fh)])
        if (r / "energy.csv").exists():
            with open(r / "energy.csv") as fh:
                energy[r.name] = np.array([float(row["estimate"]) for row in csv.DictReader(fh)])
        if (r / "images").is_dir() and len(pairs_shown) < 4:
            for pred_path in sorted((r / "images").glob("*_pred.pfm"))[:1]:
                gt_path = pred_path.with_name(pred_path.name.replace("_pred", "_gt"))
                if gt_path.exists():
                    name = f"{r.name}_{pred_path.stem.replace('_pred', '')}"
                    plotting.plot_image_pair(read_pfm(pred_path), read_pfm(gt_path), out / f"{name}.png", name)
                    pairs_shown.append(name)
    if curves:
        plotting.plot_loss_curves(curves, out / "loss_curves.png")
    if energy:
        plotting.plot_energy_histogram(energy, out / "energy_hist.png")
    if any(e["metric"] == "psnr" for e in doc["entries"]):
        plotting.plot_metric_bars(doc["entries"], "psnr", out / "psnr.png")
    print(f"report: {len(doc['entries'])} entries from {len(runs)} runs -> {out / 'report.json'}")
    return EXIT_OK


# -- parser -----------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="neubrdf", description="Neural and parametric SVBRDF fitting on fixed geometry.")
    p.add_argument("--version", action="version",
                   version=f"neubrdf {__version__} schemas " + json.dumps(SCHEMA_VERSIONS, sort_keys=True))
    sub = p.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")
    sub.required = True

    def common(sp, out_required=True):
        sp.add_argument("--config", help="JSON file with settings (flags take precedence)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", required=out_required, help="output directory")
        sp.add_argument("--threads", type=int, default=None, help="BLAS/OpenMP threads; 1 = deterministic")

    def model_flags(sp):
        from .neural import KINDS
        sp.add_argument("--model", choices=KINDS)
        sp.add_argument("--reciprocity", choices=sorted(RECIPROCITY_FLAGS))
        sp.add_argument("--enhanced", action="store_const", const=True)
        sp.add_argument("--dir-feed-layer", type=int)
        sp.add_argument("--albedo-clamp", type=_parse_clamp, nargs="?", const=_parse_clamp("default"),
                        metavar="LO,HI", help="clamp the diffuse albedo; without a value uses the sRGB range")
        sp.add_argument("--spec-channels", choices=["rgb", "scalar"])
        sp.add_argument("--width", type=int)

    sp = sub.add_parser("gen-data", help="render a semi-synthetic dataset")
    common(sp)
    sp.add_argument("--mesh", help="OBJ path or builtin:icosphere (overrides the scene)")
    sp.add_argument("--all-pairs", action="store_const", const=True,
                    help="render every view/light pair instead of only split pairs")
    sp.set_defaults(func=cmd_gen_data)

    sp = sub.add_parser("train", help="fit a model to a dataset")
    common(sp)
    sp.add_argument("--data", required=True, help="dataset directory from gen-data")
    model_flags(sp)
    sp.add_argument("--iterations", type=int)
    sp.add_argument("--batch-size", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--reg-diffuse", type=float)
    sp.add_argument("--reg-specular", type=float)
    sp.add_argument("--checkpoint-every", type=int)
    sp.add_argument("--log-every", type=int, default=0)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="held-out image and BRDF metrics")
    common(sp)
    sp.add_argument("--data", required=True)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--pairs", type=int, help="reciprocity sample pairs")
    sp.add_argument("--keep-images", type=int)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("validate-physics", help="reciprocity and energy audits")
    common(sp)
    model_flags(sp)
    sp.add_argument("--checkpoint")
    sp.add_argument("--data", help="dataset the checkpoint was trained on")
    sp.add_argument("--mesh", help="OBJ for untrained-model audits (default: icosphere)")
    sp.add_argument("--pairs", type=int, help="energy audit point-light pairs")
    sp.add_argument("--mc-samples", type=int)
    sp.add_argument("--recip-pairs", type=int)
    sp.add_argument("--energy-csv", action="store_true", help="write per-pair estimates to energy.csv")
    sp.set_defaults(func=cmd_validate_physics)

    sp = sub.add_parser("render", help="render one view/light pair")
    common(sp)
    sp.add_argument("--data", required=True)
    sp.add_argument("--checkpoint")
    sp.add_argument("--view", type=int)
    sp.add_argument("--light", type=int)
    sp.set_defaults(func=cmd_render)

    sp = sub.add_parser("report", help="collect run outputs into report.json and figures")
    common(sp)
    sp.add_argument("--runs", nargs="*", help="directories written by train/eval/validate-physics")
    sp.set_defaults(func=cmd_report)
    return p


def _data_errors() -> tuple:
    from .dataset import RecordFormatError, SplitError
    from .hdrio import PFMError
    from .lbo import BudgetError, NonManifoldError
    from .mesh import MeshError
    from .nn.checkpoint import CheckpointError
    return (FileNotFoundError, NotADirectoryError, RecordFormatError, SplitError, PFMError, BudgetError,
            NonManifoldError, MeshError, CheckpointError, ValueError, KeyError)


def main(argv: list[str] | None = None) -> int:
    from .train import DivergenceError

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    try:
        config = load_config(args.config)
        if args.threads is not None:
            if args.threads < 1:
                raise UsageError("--threads must be >= 1")
            from threadpoolctl import threadpool_limits
            with threadpool_limits(limits=args.threads):
                return args.func(args, config)
        return args.func(args, config)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"neubrdf: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DivergenceError, FloatingPointError) as exc:
        print(f"neubrdf: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except _data_errors() as exc:
        print(f"neubrdf: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
