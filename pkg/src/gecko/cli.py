"""Command-line experiment runner.

Every subcommand takes ``--config`` (a JSON file or a bundled preset name),
runs once per configured seed and writes its artifacts atomically into the
output directory. Reruns with the same config are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

from gecko import serialize
from gecko.compress import prune_sweep, std_scaled_taus, sweep_to_csv
from gecko.config import ConfigError, ExperimentConfig, load_config
from gecko.data import DataFormatError
from gecko.distill import DistillConfig, distill_train, model_row, run_phase1_phase2
from gecko.efficiency import compare, measure, rows_to_csv
from gecko.nn import MlpModel, evaluate, sgd_train
from gecko.privacy import AttackInput, audit_model, balance, load_confidence_csv, threshold_attack
from gecko.quantize import BinarizedModel, ste_train

DEFAULT_TAU_MULTIPLIERS = [0.0, 0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0]


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _map_seeds(fn, args_list, jobs: int):
    if jobs <= 1 or len(args_list) <= 1:
        return [fn(*a) for a in args_list]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, *zip(*args_list)))


def _sizes(cfg: ExperimentConfig, train, hidden) -> list[int]:
    return [train.dim, *hidden, train.num_classes]


def _train_fp(cfg: ExperimentConfig, seed: int, train):
    init = MlpModel.init(_sizes(cfg, train, cfg.architecture), seed)
    return sgd_train(init, train, cfg.train_cfg("train", seed))


# per-seed workers (top level so they pickle for --jobs)


def _train_worker(cfg: ExperimentConfig, seed: int):
    train, test = cfg.load_splits(seed)
    model = _train_fp(cfg, seed, train)
    tr_acc, tr_loss = evaluate(model, train)
    te_acc, te_loss = evaluate(model, test)
    metrics = {"seed": seed, "train_acc": tr_acc, "train_loss": tr_loss, "test_acc": te_acc, "test_loss": te_loss}
    return model, metrics


def _prune_worker(cfg: ExperimentConfig, seed: int, model_path):
    train, test = cfg.load_splits(seed)
    baseline = serialize.load_model(model_path) if model_path else _train_fp(cfg, seed, train)
    if not isinstance(baseline, MlpModel):
        raise ValueError("pruning needs a full-precision model")
    taus = cfg.taus or std_scaled_taus(baseline, cfg.tau_multipliers or DEFAULT_TAU_MULTIPLIERS)
    plain = prune_sweep(baseline, (train, test), taus, retrain=False, cfg=cfg.train_cfg("train", seed))
    retrained = prune_sweep(baseline, (train, test), taus, retrain=True, cfg=cfg.train_cfg("retrain", seed))
    return plain, retrained


def _binarize_worker(cfg: ExperimentConfig, seed: int):
    train, test = cfg.load_splits(seed)
    init = MlpModel.init(_sizes(cfg, train, cfg.architecture), seed)
    fp = sgd_train(init, train, cfg.train_cfg("train", seed))
    binary = ste_train(init, train, cfg.train_cfg("binarize", seed))
    rows = [
        model_row("full-precision", "full_precision", fp, train, test, seed),
        model_row("xnor", "phase1_standalone", binary, train, test, seed),
    ]
    return fp, binary, rows


def _teacher_arch(cfg: ExperimentConfig) -> list[int]:
    return cfg.teacher_architecture or cfg.architecture


def _distill_worker(cfg: ExperimentConfig, seed: int, teacher_path):
    train, test = cfg.load_splits(seed)
    if teacher_path:
        teacher = serialize.load_model(teacher_path)
    else:
        init = MlpModel.init(_sizes(cfg, train, _teacher_arch(cfg)), seed)
        teacher = sgd_train(init, train, cfg.train_cfg("teacher", seed))
    student_init = MlpModel.init(_sizes(cfg, train, cfg.architecture), seed + 1)
    student = distill_train(student_init, teacher, train, DistillConfig(cfg.train_cfg("student", seed)))
    rows = [
        model_row("teacher", "full_precision", teacher, train, test, seed),
        model_row("student", "phase2_distilled", student, train, test, seed),
    ]
    return teacher, student, rows


def _gecko_worker(cfg: ExperimentConfig, seed: int):
    train, test = cfg.load_splits(seed)
    cfgs = {
        "teacher": cfg.train_cfg("teacher", seed),
        "phase1": cfg.train_cfg("binarize", seed),
        "phase2": cfg.train_cfg("student", seed),
    }
    standalone = ste_train(MlpModel.init(_sizes(cfg, train, cfg.architecture), seed + 1), train, cfgs["phase1"])
    homo = run_phase1_phase2(cfg.architecture, cfg.architecture, (train, test), cfgs, seed, standalone=standalone)
    hetero = run_phase1_phase2(cfg.architecture, _teacher_arch(cfg), (train, test), cfgs, seed, standalone=standalone)
    return homo, hetero


# commands


def cmd_train(cfg: ExperimentConfig, out: Path, jobs: int = 1) -> list[Path]:
    results = _map_seeds(_train_worker, [(cfg, s) for s in cfg.seeds], jobs)
    paths = []
    for seed, (model, _) in zip(cfg.seeds, results):
        path = out / f"fp-s{seed}.gecko"
        serialize.save_model(model, path)
        paths += [path, serialize.sidecar_path(path)]
    metrics = out / "train_metrics.json"
    serialize.atomic_write(metrics, _dump({"command": "train", "runs": [m for _, m in results]}))
    return paths + [metrics]


def cmd_prune(cfg: ExperimentConfig, out: Path, jobs: int = 1, model_path=None) -> list[Path]:
    results = _map_seeds(_prune_worker, [(cfg, s, model_path) for s in cfg.seeds], jobs)
    paths = []
    for name, pick in (("prune_noretrain.csv", 0), ("prune_retrain.csv", 1)):
        points = [p for r in results for p in r[pick]]
        path = out / name
        serialize.atomic_write(path, sweep_to_csv(points))
        paths.append(path)
    return paths


def cmd_binarize(cfg: ExperimentConfig, out: Path, jobs: int = 1) -> list[Path]:
    results = _map_seeds(_binarize_worker, [(cfg, s) for s in cfg.seeds], jobs)
    paths, runs = [], []
    for seed, (fp, binary, rows) in zip(cfg.seeds, results):
        for tag, model in (("fp", fp), ("xnor", binary)):
            path = out / f"{tag}-s{seed}.gecko"
            serialize.save_model(model, path)
            paths += [path, serialize.sidecar_path(path)]
        runs.append({"seed": seed, "models": [asdict(r) for r in rows]})
    report = out / "binarize_report.json"
    serialize.atomic_write(report, _dump({"command": "binarize", "runs": runs}))
    return paths + [report]


def cmd_distill(cfg: ExperimentConfig, out: Path, jobs: int = 1, teacher_path=None) -> list[Path]:
    results = _map_seeds(_distill_worker, [(cfg, s, teacher_path) for s in cfg.seeds], jobs)
    paths, runs = [], []
    for seed, (teacher, student, rows) in zip(cfg.seeds, results):
        for tag, model in (("teacher", teacher), ("student", student)):
            path = out / f"{tag}-s{seed}.gecko"
            serialize.save_model(model, path)
            paths += [path, serialize.sidecar_path(path)]
        runs.append({"seed": seed, "models": [asdict(r) for r in rows]})
    report = out / "distill_report.json"
    serialize.atomic_write(report, _dump({"command": "distill", "runs": runs}))
    return paths + [report]


def cmd_gecko(cfg: ExperimentConfig, out: Path, jobs: int = 1) -> list[Path]:
    results = _map_seeds(_gecko_worker, [(cfg, s) for s in cfg.seeds], jobs)
    paths = []
    standalone, homogeneous, heterogeneous = [], [], []
    for seed, (homo, hetero) in zip(cfg.seeds, results):
        models = {
            "standalone": homo.models["standalone"],
            "homogeneous-teacher": homo.models["teacher"],
            "homogeneous-student": homo.models["distilled"],
            "heterogeneous-teacher": hetero.models["teacher"],
            "heterogeneous-student": hetero.models["distilled"],
        }
        for tag, model in models.items():
            path = out / f"{tag}-s{seed}.gecko"
            serialize.save_model(model, path)
            paths += [path, serialize.sidecar_path(path)]
        standalone.append({"seed": seed, **asdict(homo.row("phase1_standalone"))})
        for bucket, rep in ((homogeneous, homo), (heterogeneous, hetero)):
            bucket.append({
                "seed": seed,
                "teacher": asdict(rep.row("full_precision")),
                "student": asdict(rep.row("phase2_distilled")),
            })

    def med(rows, key):
        return statistics.median(r[key] for r in rows)

    summary = {
        "phase1_test_acc_median": med(standalone, "test_acc"),
        "phase1_attack_acc_median": med(standalone, "attack_acc"),
        "homogeneous_test_acc_median": med([r["student"] for r in homogeneous], "test_acc"),
        "heterogeneous_test_acc_median": med([r["student"] for r in heterogeneous], "test_acc"),
        "full_precision_attack_acc_median": med([r["teacher"] for r in homogeneous], "attack_acc"),
    }
    report = out / "gecko_report.json"
    serialize.atomic_write(report, _dump({
        "command": "gecko",
        "seeds": list(cfg.seeds),
        "standalone": standalone,
        "homogeneous": homogeneous,
        "heterogeneous": heterogeneous,
        "summary": summary,
    }))
    return paths + [report]


def cmd_attack(out: Path, cfg: ExperimentConfig | None = None, model_path=None, csv_path=None, seed: int = 0) -> list[Path]:
    if (model_path is None) == (csv_path is None):
        raise ValueError("attack needs exactly one of --model or --csv")
    if csv_path is not None:
        inp = load_confidence_csv(csv_path)
        members, nonmembers = balance(inp.member_confidences, inp.nonmember_confidences, seed)
        report = threshold_attack(AttackInput(members, nonmembers))
    else:
        if cfg is None:
            raise ValueError("attacking a model needs --config to define the member/non-member splits")
        train, test = cfg.load_splits(seed)
        report = audit_model(serialize.load_model(model_path), train, test, seed=seed)
    path = out / "attack.json"
    serialize.atomic_write(path, report.to_json() + "\n")
    return [path]


def _config_models(cfg: ExperimentConfig) -> list:
    ds = cfg.dataset
    if ds["source"] == "synth":
        d, c = ds.get("dim", 100), ds.get("classes", 10)
    else:
        train, _ = cfg.load_splits(cfg.seeds[0])
        d, c = train.dim, train.num_classes
    fp = MlpModel.init([d, *cfg.architecture, c], cfg.seeds[0])
    return [fp, BinarizedModel.from_mlp(fp)]


def cmd_report(out: Path, model_paths=(), cfg: ExperimentConfig | None = None) -> list[Path]:
    models, names = [], []
    if cfg is not None:
        models += _config_models(cfg)
        names += ["config-full-precision", "config-binarized"]
    for p in model_paths:
        models.append(serialize.load_model(p))
        names.append(Path(p).name)
    if not models:
        raise ValueError("report needs --model paths or a --config")
    rows = compare(models, names)
    reports = [{"name": n, **measure(m).to_dict()} for n, m in zip(names, models)]
    jpath, cpath = out / "efficiency.json", out / "efficiency.csv"
    serialize.atomic_write(jpath, _dump({"command": "report", "models": reports, "comparison": rows}))
    serialize.atomic_write(cpath, rows_to_csv(rows))
    return [jpath, cpath]


def validate_outputs(paths) -> None:
    """Re-read every written artifact; raise if any is missing or unparsable."""
    for p in paths:
        p = Path(p)
        if not p.exists():
            raise RuntimeError(f"expected output missing: {p}")
        if p.suffix == ".json":
            json.loads(p.read_text())
        elif p.suffix == ".csv":
            rows = list(csv.reader(io.StringIO(p.read_text())))
            if not rows:
                raise RuntimeError(f"empty CSV: {p}")
        elif p.suffix == ".gecko":
            serialize.loads(p.read_bytes())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gecko", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        p.add_argument("--config", required=needs_config, help="JSON config path or preset name")
        p.add_argument("--seed", type=int, help="run a single seed instead of the config's list")
        p.add_argument("--out", help="output directory (overrides config output_dir)")
        p.add_argument("--jobs", type=int, default=int(os.environ.get("GECKO_JOBS", "1")),
                       help="parallel seed workers (default: $GECKO_JOBS or 1)")

    common(sub.add_parser("train", help="train full-precision models"))
    p = sub.add_parser("prune", help="pruning sweep with and without retraining")
    common(p)
    p.add_argument("--model", help="baseline model file (default: train one per seed)")
    common(sub.add_parser("binarize", help="Phase I: full precision vs binarized XNOR model"))
    p = sub.add_parser("distill", help="Phase II: distil a binarized student from a teacher")
    common(p)
    p.add_argument("--teacher", help="teacher model file (default: train one per seed)")
    common(sub.add_parser("gecko", help="two-phase pipeline, homogeneous and heterogeneous teachers"))
    p = sub.add_parser("attack", help="confidence-threshold membership inference")
    common(p, needs_config=False)
    p.add_argument("--model", help="model file to attack (needs --config for splits)")
    p.add_argument("--csv", help="confidence dump: record_id,max_posterior,is_member")
    p = sub.add_parser("report", help="memory and operation-count report")
    common(p, needs_config=False)
    p.add_argument("--model", action="append", default=[], help="model file (repeatable)")
    return parser


def run(argv=None) -> list[Path]:
    args = build_parser().parse_args(argv)
    cfg = load_config(args.config) if args.config else None
    if cfg is not None and args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if cfg is not None:
        cfg.check_paths()
    out = Path(args.out) if args.out else Path(cfg.output_dir if cfg else "runs")
    jobs = max(1, args.jobs)
    if args.command == "train":
        paths = cmd_train(cfg, out, jobs)
    elif args.command == "prune":
        paths = cmd_prune(cfg, out, jobs, args.model)
    elif args.command == "binarize":
        paths = cmd_binarize(cfg, out, jobs)
    elif args.command == "distill":
        paths = cmd_distill(cfg, out, jobs, args.teacher)
    elif args.command == "gecko":
        paths = cmd_gecko(cfg, out, jobs)
    elif args.command == "attack":
        seed = args.seed if args.seed is not None else (cfg.seeds[0] if cfg else 0)
        paths = cmd_attack(out, cfg, args.model, args.csv, seed)
    else:
        paths = cmd_report(out, args.model, cfg)
    validate_outputs(paths)
    return paths


def main(argv=None) -> int:
    try:
        paths = run(argv)
    except (ConfigError, DataFormatError, serialize.ModelFormatError, FileNotFoundError, ValueError, RuntimeError) as exc:
        print(f"gecko: error: {exc}", file=sys.stderr)
        return 2
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
