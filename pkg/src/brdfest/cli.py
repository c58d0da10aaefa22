"""Command-line driver: dataset generation, training, evaluation,
coverage sweeps, rendered comparisons, model reports, the regularizer
ablation, and the gradient-check battery.

Flag values win over --config JSON entries, which win over built-in
defaults. Failures print a machine-readable JSON object on stderr and
exit nonzero; usage errors exit 2.
"""

import argparse
import csv
import json
import sys
from pathlib import Path

from .errors import BrdfestError

PAPER_BUDGET_NOTE = "the full published budgets are 100K (hemicnn) / 13K (grouplet) minibatches"


def _load_config(path):
    if not path:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise BrdfestError(f"cannot read config {path}: {exc}") from exc


def _resolve(args, config, key, default):
    value = getattr(args, key, None)
    if value is not None:
        return value
    if key in config:
        return config[key]
    return default


def _write_json(path, payload):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True))
    return path


def _require_out(args):
    if not args.out:
        raise BrdfestError("--out is required for this command")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_dataset(path):
    from .dataset import load_dataset

    if not path:
        raise BrdfestError("--dataset is required for this command")
    try:
        return load_dataset(path)
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise BrdfestError(f"cannot load dataset {path}: {exc}") from exc


def cmd_gen_data(args, config):
    from .dataset import DatasetConfig, generate_dataset

    out = _require_out(args)
    cfg_kwargs = dict(config.get("dataset", {}))
    cfg_kwargs.update(
        n_scenes=_resolve(args, cfg_kwargs, "scenes", 300),
        n_views=_resolve(args, cfg_kwargs, "views", 40),
        n_voxels=_resolve(args, cfg_kwargs, "voxels", 400),
        resolution=_resolve(args, cfg_kwargs, "resolution", 64),
        val_fraction=_resolve(args, cfg_kwargs, "val_fraction", 0.08),
        seed=args.seed,
    )
    for alias in ("scenes", "views", "voxels"):
        cfg_kwargs.pop(alias, None)
    cfg = DatasetConfig(**cfg_kwargs)
    ds = generate_dataset(cfg, out, dump_images=args.dump_images, log=lambda m: print(m, flush=True))
    print(f"wrote {len(ds.records)} scenes to {out} "
          f"({ds.manifest['n_train']} train / {ds.manifest['n_val']} val)")
    return 0


def cmd_train(args, config):
    from .evaluation import save_training_checkpoint
    from .losses import LossConfig
    from .training import PAPER_BUDGETS, TrainConfig, fit_model

    out = _require_out(args)
    ds = _load_dataset(args.dataset)
    model = _resolve(args, config, "model", "grouplet-fast")
    budget = _resolve(args, config, "minibatches", 2000)
    if args.paper_budget:
        budget = PAPER_BUDGETS[model]
    tcfg = TrainConfig(
        model=model,
        n_minibatches=budget,
        batch_size=_resolve(args, config, "batch_size", 16),
        seed=args.seed,
        dtype=_resolve(args, config, "dtype", "float32"),
        learning_rate=_resolve(args, config, "lr", None),
        val_interval=_resolve(args, config, "val_interval", 200),
    )
    lcfg = LossConfig(
        metric=_resolve(args, config, "metric", "rmse1"),
        lambda_ec=_resolve(args, config, "lambda_ec", 0.01),
        lambda_g=_resolve(args, config, "lambda_g", 1.0),
    )
    log_path = out / "train_log.jsonl"
    result = fit_model(
        ds.split_records("train"),
        ds.split_records("val"),
        tcfg,
        lcfg,
        log_path=log_path,
        progress=lambda m: print(m, flush=True),
    )
    final = save_training_checkpoint(out / "final.ckpt", tcfg, lcfg, result, which="final")
    best = save_training_checkpoint(out / "best.ckpt", tcfg, lcfg, result, which="best")
    print(f"final checkpoint: {final}")
    print(f"best-validation checkpoint: {best} (val rmse {result.best_val_rmse:.4f})")
    print(f"log: {log_path}")
    return 0


def cmd_eval(args, config):
    from .checkpoint import load_checkpoint
    from .evaluation import eval_rmse

    ds = _load_dataset(args.dataset)
    ckpt = load_checkpoint(args.checkpoint)
    records = ds.split_records(args.split)
    report = eval_rmse(ckpt, records, seed=args.seed, n_nodes=args.n_nodes)
    print(f"{ckpt.architecture} normalized RMSE over {report['n_scenes']} "
          f"{args.split} scenes: {report['rmse_overall']:.4f}")
    if args.out:
        path = _write_json(Path(args.out) / "eval_report.json", report)
        print(f"report: {path}")
    return 0


def cmd_sweep(args, config):
    from .checkpoint import load_checkpoint
    from .evaluation import coverage_sweep

    ds = _load_dataset(args.dataset)
    ckpt = load_checkpoint(args.checkpoint)
    counts = [int(v) for v in args.counts.split(",")]
    out = coverage_sweep(
        ckpt, ds.split_records(args.split), counts, seed=args.seed, sweep=args.by,
        n_nodes=args.n_nodes,
    )
    for row in out["curve"]:
        print(f"{args.by:>6} {row['count']:4d}: rmse {row['rmse']:.4f} ({row['n_scenes']} scenes)")
    if args.out:
        out_dir = _require_out(args)
        _write_json(out_dir / f"sweep_{args.by}.json", out)
        with open(out_dir / f"sweep_{args.by}.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["count", "rmse", "n_scenes"])
            for row in out["curve"]:
                writer.writerow([row["count"], row["rmse"], row["n_scenes"]])
        print(f"wrote sweep_{args.by}.csv / .json to {out_dir}")
    return 0


def cmd_render(args, config):
    from .checkpoint import load_checkpoint
    from .evaluation import render_comparison
    from .scene import Environment

    ds = _load_dataset(args.dataset)
    ckpt = load_checkpoint(args.checkpoint)
    out = _require_out(args)
    by_id = {r.scene_id: r for r in ds.records}
    scene_id = args.scene_id or ds.split_records("val")[0].scene_id
    if scene_id not in by_id:
        raise BrdfestError(f"scene {scene_id!r} not in dataset")
    environment = None
    if args.env:
        environment = Environment.from_json(json.loads(Path(args.env).read_text()))
    result = render_comparison(
        ckpt, by_id[scene_id], out, environment=environment, seed=args.seed,
        resolution=_resolve(args, config, "resolution", 128),
    )
    print(f"mean pixel error {result['mean_pixel_error']:.4f}")
    for name, path in result["paths"].items():
        print(f"{name}: {path}")
    _write_json(out / f"{scene_id}_comparison.json", result)
    return 0


def cmd_report(args, config):
    from .evaluation import model_report

    ds = _load_dataset(args.dataset) if args.dataset else None
    report = model_report(
        args.checkpoint,
        ds.split_records("val") if ds else None,
        seed=args.seed,
    )
    print(json.dumps(report, indent=2, sort_keys=True))
    if args.out:
        _write_json(Path(args.out) / "model_report.json", report)
    return 0


def cmd_ablate_ec(args, config):
    from .evaluation import ablate_ec

    ds = _load_dataset(args.dataset)
    out = _require_out(args)
    result = ablate_ec(
        ds,
        out,
        n_minibatches=_resolve(args, config, "minibatches", 2000),
        seed=args.seed,
        lambda_ec=_resolve(args, config, "lambda_ec", 0.01),
        progress=lambda m: print(m, flush=True),
    )
    print(f"scale error with regularizer:    {result['with_ec']['scale_error_perturbed']:.4f}")
    print(f"scale error without regularizer: {result['without_ec']['scale_error_perturbed']:.4f}")
    print(f"regularizer helps: {result['regularizer_helps']}")
    _write_json(out / "ablation.json", result)
    return 0


def cmd_gradcheck(args, config):
    from .gradcheck import run_gradient_checks

    rows = run_gradient_checks(seed=args.seed)
    for row in rows:
        status = "PASS" if row["passed"] else "FAIL"
        print(f"{status}  {row['name']:26s} {row['max_rel_error']:.3e} (tol {row['tolerance']:.0e})")
    if args.out:
        _write_json(Path(args.out) / "gradcheck.json", rows)
    return 0 if all(r["passed"] for r in rows) else 1


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="seed for all randomized paths")
    common.add_argument("--config", help="JSON file with defaults for unset flags")
    common.add_argument("--out", help="output directory")

    parser = argparse.ArgumentParser(prog="brdfest", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", parents=[common], help="render a synthetic dataset")
    p.add_argument("--scenes", type=int)
    p.add_argument("--views", type=int)
    p.add_argument("--voxels", type=int)
    p.add_argument("--resolution", type=int)
    p.add_argument("--val-fraction", dest="val_fraction", type=float)
    p.add_argument("--dump-images", action="store_true", help="write per-view PPM dumps")
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train", parents=[common], help="train a regressor")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", choices=["hemicnn", "grouplet-fast", "grouplet-slow"])
    p.add_argument("--metric", choices=["rmse1", "rmse2", "cuberoot"])
    p.add_argument("--lambda", dest="lambda_ec", type=float,
                   help="weight of the image-statistics regularizer")
    p.add_argument("--lambda-g", dest="lambda_g", type=float)
    p.add_argument("--minibatches", type=int)
    p.add_argument("--paper-budget", action="store_true", help=PAPER_BUDGET_NOTE)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--dtype", choices=["float32", "float64"])
    p.add_argument("--val-interval", dest="val_interval", type=int)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="normalized-RMSE evaluation")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", default="val", choices=["train", "val"])
    p.add_argument("--n-nodes", dest="n_nodes", type=int)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("sweep", parents=[common], help="coverage sweep over views or voxels")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--counts", default="5,10,20,30,40")
    p.add_argument("--by", default="views", choices=["views", "voxels"])
    p.add_argument("--split", default="val", choices=["train", "val"])
    p.add_argument("--n-nodes", dest="n_nodes", type=int)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("render", parents=[common], help="render truth vs prediction")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--scene-id", dest="scene_id")
    p.add_argument("--env", help="JSON file describing the novel environment")
    p.add_argument("--resolution", type=int)
    p.set_defaults(fn=cmd_render)

    p = sub.add_parser("report", parents=[common], help="parameter count, size, timing")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", help="dataset for timing passes")
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("ablate-ec", parents=[common],
                       help="train with and without the regularizer, compare scale error")
    p.add_argument("--dataset", required=True)
    p.add_argument("--minibatches", type=int)
    p.add_argument("--lambda", dest="lambda_ec", type=float)
    p.set_defaults(fn=cmd_ablate_ec)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient battery")
    p.set_defaults(fn=cmd_gradcheck)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config(args.config)
        return args.fn(args, config)
    except BrdfestError as exc:
        json.dump({"error": type(exc).__name__, "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
