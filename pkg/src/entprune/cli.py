"""entprune command line.

Subcommands: train, collect, stats, score, prune, 2pfpce, compare,
noise-sweep, bench, report. Runs are driven by a JSON config (--config) with
a handful of flag overrides; unknown config keys are rejected. Every command
echoes its effective config into the output directory so runs are
reproducible from the artifacts alone.

Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import engine
from .criteria import (
    CriteriaError,
    PRUNE_DIRECTION,
    PrunePlan,
    rank_and_select,
    score_act_ent,
    score_apoz,
    score_cond_ent,
    score_l1,
    score_taylor,
)
from .data import DataError, Dataset, NoiseSpec, add_gaussian_noise, load_idx, synthetic_blobs
from .driver import (
    PhaseConfig,
    bench_inference,
    criteria_comparison,
    finetune,
    run_2pfpce,
    train,
)
from .entstats import (
    EntstatsError,
    QuantSpec,
    activation_entropy,
    conditional_entropy,
    mutual_information,
)
from .models import PRESETS, build_preset
from .surgery import SurgeryError, bias_compensate, mark_freeze, remove_filters
from .trace import TraceFormatError, accumulators_from_trace, capture, read_trace, trace_restrict, write_trace

DATA_DIR_ENV = "ENTPRUNE_DATA_DIR"

_CRITERION_FLAGS = {
    "cond-ent": "cond_ent",
    "act-ent": "act_ent",
    "l1": "l1",
    "apoz": "apoz",
    "taylor": "taylor",
}


class ConfigError(Exception):
    pass


# --------------------------------------------------------------------------
# Configuration
# --------------------------------------------------------------------------

DEFAULT_CONFIG = {
    "seed": 0,
    "out_dir": "runs/default",
    "workers": 1,
    "dataset": {
        "name": "synthetic",
        "data_dir": None,
        "train_size": 10000,
        "test_size": 2000,
        "num_classes": 10,
        "image_size": 28,
        "noise_std": 0.0,
    },
    "model": {
        "preset": "mnist2conv",
        "layers": None,
        "input_shape": [1, 28, 28],
    },
    "train": {
        "epochs": 3,
    },
    "sgd": {
        "learning_rate": 1e-4,
        "momentum": 0.9,
        "weight_decay": 1e-4,
        "batch_size": 32,
        "seed": 0,
    },
    "phase": {
        "phase1_drop_threshold": 0.01,
        "phase2_drop_threshold": 0.02,
        "phase1_step": 1,
        "phase2_fraction": 1.0 / 16.0,
        "finetune_updates": 20,
        "phase2_finetune_every": 4,
        "val_fraction": 0.1,
        "trace_limit": None,
        "compensate_bias": True,
        "freeze_max_ent": True,
    },
    "quant": {
        "eps_h": 1e4,
    },
}


def _merge_validated(base: dict, override: dict, path: str = "") -> dict:
    out = dict(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict) and base[key] and isinstance(value, dict):
            out[key] = _merge_validated(base[key], value, where)
        else:
            out[key] = value
    return out


def load_config(path: str | None, args: argparse.Namespace) -> dict:
    cfg = json.loads(json.dumps(DEFAULT_CONFIG))  # deep copy
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as f:
                user = json.load(f)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {path} is not valid JSON: {e}")
        if not isinstance(user, dict):
            raise ConfigError("config root must be a JSON object")
        cfg = _merge_validated(cfg, user)
    # flag overrides
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    if getattr(args, "out_dir", None) is not None:
        cfg["out_dir"] = args.out_dir
    if getattr(args, "dataset", None) is not None:
        cfg["dataset"]["name"] = args.dataset
    if getattr(args, "data_dir", None) is not None:
        cfg["dataset"]["data_dir"] = args.data_dir
    if getattr(args, "preset", None) is not None:
        cfg["model"]["preset"] = args.preset
    if getattr(args, "epochs", None) is not None:
        cfg["train"]["epochs"] = args.epochs
    if getattr(args, "workers", None) is not None:
        cfg["workers"] = args.workers
    _check_config(cfg)
    return cfg


def _check_config(cfg: dict) -> None:
    if cfg["dataset"]["name"] not in ("mnist", "synthetic"):
        raise ConfigError(f"dataset.name must be mnist or synthetic, got {cfg['dataset']['name']!r}")
    preset = cfg["model"]["preset"]
    if preset is not None and preset not in PRESETS:
        raise ConfigError(f"model.preset must be one of {sorted(PRESETS)}, got {preset!r}")
    if preset is None and not cfg["model"]["layers"]:
        raise ConfigError("model needs either a preset or a layers list")
    if cfg["quant"]["eps_h"] <= 0:
        raise ConfigError("quant.eps_h must be > 0")


def sgd_from_config(cfg: dict) -> engine.SgdConfig:
    try:
        return engine.SgdConfig(**cfg["sgd"])
    except ValueError as e:
        raise ConfigError(f"sgd config: {e}")


def phase_from_config(cfg: dict) -> PhaseConfig:
    p = dict(cfg["phase"])
    try:
        return PhaseConfig(
            finetune=sgd_from_config(cfg),
            quant=QuantSpec(eps_h=cfg["quant"]["eps_h"]),
            workers=cfg["workers"],
            **p,
        )
    except (ValueError, TypeError) as e:
        raise ConfigError(f"phase config: {e}")


def build_datasets(cfg: dict) -> tuple[Dataset, Dataset]:
    d = cfg["dataset"]
    seed = cfg["seed"]
    if d["name"] == "mnist":
        data_dir = d["data_dir"] or os.environ.get(DATA_DIR_ENV)
        if not data_dir:
            raise DataError(
                f"mnist needs --data-dir, dataset.data_dir, or ${DATA_DIR_ENV} pointing at the IDX files"
            )
        root = Path(data_dir)
        train_ds = load_idx(root / "train-images-idx3-ubyte", root / "train-labels-idx1-ubyte", "mnist")
        test_ds = load_idx(root / "t10k-images-idx3-ubyte", root / "t10k-labels-idx1-ubyte", "mnist")
        train_ds = train_ds.subset(np.arange(min(d["train_size"], len(train_ds))))
        test_ds = test_ds.subset(np.arange(min(d["test_size"], len(test_ds))))
    else:
        full = synthetic_blobs(
            d["train_size"] + d["test_size"],
            num_classes=d["num_classes"],
            image_size=d["image_size"],
            seed=seed,
        )
        train_ds = full.subset(np.arange(d["train_size"]))
        test_ds = full.subset(np.arange(d["train_size"], len(full)))
    if d["noise_std"]:
        train_ds = add_gaussian_noise(train_ds, NoiseSpec(d["noise_std"], seed))
        test_ds = add_gaussian_noise(test_ds, NoiseSpec(d["noise_std"], seed + 1))
    return train_ds, test_ds


def build_model(cfg: dict) -> engine.Network:
    m = cfg["model"]
    if m["preset"] is not None:
        return build_preset(m["preset"], cfg["seed"], num_classes=cfg["dataset"]["num_classes"])
    layers = [engine.spec_from_dict(d) for d in m["layers"]]
    return engine.init_network(layers, tuple(m["input_shape"]), cfg["seed"])


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "config.json", "w", encoding="utf-8") as f:
        json.dump(cfg, f, indent=2, sort_keys=True)
    return out


def _write_csv(path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------

def cmd_train(args) -> int:
    cfg = load_config(args.config, args)
    out = _out_dir(cfg)
    train_ds, test_ds = build_datasets(cfg)
    if args.init_from:
        net = engine.load_checkpoint(args.init_from)
    else:
        net = build_model(cfg)
    sgd = sgd_from_config(cfg)
    rows = []
    for epoch in range(cfg["train"]["epochs"]):
        net, hist = train(net, train_ds, sgd, epochs=1, shuffle_seed=sgd.seed + 10_000 * epoch)
        acc = engine.evaluate(net, test_ds, workers=cfg["workers"])
        rows.append((epoch, hist[0][1], acc))
        print(f"epoch {epoch}: mean loss {hist[0][1]:.4f}, test accuracy {acc:.4f}")
    ckpt = out / "model.ckpt"
    engine.save_checkpoint(net, ckpt)
    _write_csv(out / "train_log.csv", ["epoch", "mean_loss", "test_accuracy"], rows)
    print(f"checkpoint: {ckpt}")
    return 0


def cmd_collect(args) -> int:
    cfg = load_config(args.config, args)
    net = engine.load_checkpoint(args.model)
    train_ds, test_ds = build_datasets(cfg)
    ds = test_ds if args.split == "test" else train_ds
    tf = capture(net, ds, reduction=args.reduce, workers=cfg["workers"])
    write_trace(tf, args.out)
    print(f"{len(tf.records)} records -> {args.out}")
    return 0


def cmd_stats(args) -> int:
    tf = read_trace(args.trace)
    quant = QuantSpec(eps_h=args.eps_h)
    accs = accumulators_from_trace(tf, quant)
    rows = []
    for li, layer in enumerate(accs):
        for fi, acc in enumerate(layer):
            ce = conditional_entropy(acc)
            max_ent = ce.ent[ce.argmax_bin]
            rows.append(
                (
                    li,
                    fi,
                    activation_entropy(acc),
                    ce.con_ent,
                    max_ent,
                    ce.argmax_activation,
                    acc.c_val.get(0, 0),
                )
            )
    _write_csv(
        args.out,
        ["layer", "filter", "act_ent", "con_ent", "max_ent_i", "argmax_activation", "zero_activations"],
        rows,
    )
    print(f"{len(rows)} filters -> {args.out}")
    return 0


def cmd_score(args) -> int:
    criterion = _CRITERION_FLAGS[args.criterion]
    quant = QuantSpec(eps_h=args.eps_h)
    tf = None
    if criterion in ("cond_ent", "act_ent"):
        if not args.trace:
            raise ConfigError(f"--criterion {args.criterion} needs --trace")
        tf = read_trace(args.trace)
        scores = score_cond_ent(tf, quant) if criterion == "cond_ent" else score_act_ent(tf, quant)
    else:
        if not args.model:
            raise ConfigError(f"--criterion {args.criterion} needs --model")
        net = engine.load_checkpoint(args.model)
        if criterion == "l1":
            scores = score_l1(net)
        else:
            cfg = load_config(args.config, args)
            train_ds, _ = build_datasets(cfg)
            scores = score_apoz(net, train_ds) if criterion == "apoz" else score_taylor(net, train_ds)

    _write_csv(
        args.out,
        ["layer", "filter", "criterion", "score", "rank"],
        [(s.layer, s.filter, s.criterion, s.score, s.prune_rank) for s in scores],
    )
    print(f"{len(scores)} scores -> {args.out}")
    if args.plan_out:
        amount = _parse_amount(args.amount)
        scope = "per-layer" if args.scope == "layer" else "global"
        plan = rank_and_select(scores, layer_scope=scope, amount=amount, direction=args.direction)
        if criterion == "cond_ent" and tf is not None:
            plan.a_star = _plan_a_star(tf, plan, quant)
        with open(args.plan_out, "w", encoding="utf-8") as f:
            json.dump(plan.to_json_dict(), f, indent=2)
        print(f"plan removing {plan.n_removed()} filters -> {args.plan_out}")
    return 0


def _parse_amount(text: str):
    if "/" in text:
        num, den = text.split("/", 1)
        return float(num) / float(den)
    if "." in text:
        return float(text)
    return int(text)


def _plan_a_star(tf, plan: PrunePlan, quant: QuantSpec):
    accs = accumulators_from_trace(tf, quant)
    return {
        (li, fi): conditional_entropy(accs[li][fi]).argmax_activation
        for li, gone in plan.removed.items()
        for fi in gone
    }


def cmd_prune(args) -> int:
    net = engine.load_checkpoint(args.model)
    with open(args.plan, "r", encoding="utf-8") as f:
        plan = PrunePlan.from_json_dict(json.load(f))
    if args.compensate_bias:
        if plan.a_star is None:
            raise ConfigError("plan has no a_star values; cannot compensate biases")
        triples = [(li, fi, plan.a_star[(li, fi)]) for li, gone in plan.removed.items() for fi in gone]
        net = bias_compensate(net, triples)
    pruned = remove_filters(net, plan)
    if args.freeze_max_ent:
        if not args.trace:
            raise ConfigError("--freeze-max-ent needs --trace")
        tf = trace_restrict(read_trace(args.trace), plan.removed)
        layers = [li for li, gone in plan.removed.items() if gone]
        pruned = mark_freeze(pruned, tf, layers=layers)
    engine.save_checkpoint(pruned, args.out)
    print(
        f"removed {plan.n_removed()} filters: "
        f"{net.total_filters()} -> {pruned.total_filters()}, "
        f"flops {engine.count_flops(net)} -> {engine.count_flops(pruned)} -> {args.out}"
    )
    return 0


def cmd_2pfpce(args) -> int:
    cfg = load_config(args.config, args)
    out = _out_dir(cfg)
    train_ds, test_ds = build_datasets(cfg)
    if args.model:
        net = engine.load_checkpoint(args.model)
    else:
        net = build_model(cfg)
        net, _ = train(net, train_ds, sgd_from_config(cfg), epochs=cfg["train"]["epochs"])
    phase_cfg = phase_from_config(cfg)
    pruned, log, report = run_2pfpce(net, train_ds, phase_cfg, seed=cfg["seed"], test=test_ds)
    engine.save_checkpoint(pruned, out / "pruned.ckpt")
    _write_csv(
        out / "prune_log.csv",
        ["iteration", "phase", "filters_remaining", "flops", "bytes", "accuracy", "wall_time_ms"],
        [
            (e.iteration, e.phase, e.filters_remaining, e.flops, e.bytes, e.accuracy, e.wall_time_ms)
            for e in log
        ],
    )
    with open(out / "report.json", "w", encoding="utf-8") as f:
        json.dump(report, f, indent=2, sort_keys=True)
    with open(out / "report.md", "w", encoding="utf-8") as f:
        f.write(_report_markdown(report))
    print(_report_markdown(report))
    return 0


def _report_markdown(report: dict) -> str:
    b, a = report["before"], report["after"]
    lines = [
        "# Two-phase pruning report",
        "",
        "| metric | before | after |",
        "|---|---|---|",
        f"| filters | {b['filters']} | {a['filters']} |",
        f"| FLOPs | {b['flops']} | {a['flops']} |",
        f"| conv bytes | {b['bytes']} | {a['bytes']} |",
        f"| accuracy | {b['accuracy']:.4f} | {a['accuracy']:.4f} |",
        f"| inference ms (batch {report['bench_batch_size']}) | {b['bench_ms']:.2f} | {a['bench_ms']:.2f} |",
        "",
        f"pruning ratio: {report['pruning_ratio']:.3f}",
        f"FLOPs reduction: {report['flops_reduction']:.2f}x",
        f"speedup: {report['speedup']:.2f}x",
        f"phase 1 iterations: {report['phase1_iterations']}, phase 2 iterations: {report['phase2_iterations']}",
        "",
    ]
    return "\n".join(lines)


def cmd_compare(args) -> int:
    cfg = load_config(args.config, args)
    out = _out_dir(cfg)
    train_ds, test_ds = build_datasets(cfg)
    if args.model:
        net = engine.load_checkpoint(args.model)
    else:
        net = build_model(cfg)
        net, _ = train(net, train_ds, sgd_from_config(cfg), epochs=cfg["train"]["epochs"])
    names = (
        list(_CRITERION_FLAGS.values())
        if args.criteria == "all"
        else [_CRITERION_FLAGS[c] for c in args.criteria.split(",")]
    )
    ratios = [float(r) for r in args.ratios.split(",")]
    result = criteria_comparison(
        net, train_ds, names, ratios, phase_from_config(cfg), seed=cfg["seed"], test=test_ds
    )
    rows = [
        (name, ratio, result["grid"][name][ratio])
        for name in names
        for ratio in result["ratios"]
    ]
    _write_csv(out / "compare.csv", ["criterion", "ratio", "accuracy"], rows)
    with open(out / "compare.json", "w", encoding="utf-8") as f:
        json.dump(result, f, indent=2, sort_keys=True)
    print(f"baseline accuracy {result['baseline_accuracy']:.4f}")
    for name, ratio, acc in rows:
        print(f"  {name:10s} ratio {ratio:.2f}: {acc:.4f}")
    return 0


def cmd_noise_sweep(args) -> int:
    cfg = load_config(args.config, args)
    out = _out_dir(cfg)
    _, test_ds = build_datasets(cfg)
    net = engine.load_checkpoint(args.model)
    quant = QuantSpec(eps_h=cfg["quant"]["eps_h"])
    stds = [float(s) for s in args.stds.split(",")]
    rows = []
    for si, std in enumerate(stds):
        noised = add_gaussian_noise(test_ds, NoiseSpec(std, cfg["seed"] + 1_000 + si))
        tf = capture(net, noised, workers=cfg["workers"])
        accs = accumulators_from_trace(tf, quant)
        for li, layer in enumerate(accs):
            act = float(np.mean([activation_entropy(a) for a in layer]))
            mi = float(np.mean([mutual_information(a) for a in layer]))
            rows.append((std, li, act, mi))
    _write_csv(out / "noise_sweep.csv", ["std", "layer", "act_ent_mean", "mi_mean"], rows)
    for std, li, act, mi in rows:
        print(f"std {std:5.2f} layer {li}: act_ent {act:8.4f} bits, MI {mi:8.4f} bits")
    return 0


def cmd_bench(args) -> int:
    cfg = load_config(args.config, args)
    _, test_ds = build_datasets(cfg)
    net = engine.load_checkpoint(args.model)
    ms = bench_inference(net, test_ds, repeats=args.repeats, batch_size=args.batch_size)
    print(
        f"median {ms:.2f} ms over {args.repeats} repeats "
        f"(batch {args.batch_size}, {len(test_ds)} samples, flops {engine.count_flops(net)})"
    )
    return 0


def cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    report_path = run_dir / "report.json"
    log_path = run_dir / "prune_log.csv"
    if not run_dir.is_dir() or not (report_path.exists() or log_path.exists()):
        raise DataError(f"no runs found in {run_dir}")
    sections = []
    summary_rows = []
    if report_path.exists():
        with open(report_path, "r", encoding="utf-8") as f:
            report = json.load(f)
        sections.append(_report_markdown(report))
        b, a = report["before"], report["after"]
        summary_rows.append(("filters", b["filters"], a["filters"]))
        summary_rows.append(("flops", b["flops"], a["flops"]))
        summary_rows.append(("bytes", b["bytes"], a["bytes"]))
        summary_rows.append(("accuracy", b["accuracy"], a["accuracy"]))
        summary_rows.append(("bench_ms", b["bench_ms"], a["bench_ms"]))
    if log_path.exists():
        with open(log_path, "r", encoding="utf-8") as f:
            entries = list(csv.DictReader(f))
        if entries:
            first_filters = float(entries[0]["filters_remaining"])
            initial = report["before"]["filters"] if report_path.exists() else first_filters
            curve = sorted(
                (1.0 - float(e["filters_remaining"]) / initial, float(e["accuracy"]))
                for e in entries
            )
            _write_csv(run_dir / "accuracy_vs_ratio.csv", ["pruning_ratio", "accuracy"], curve)
            sections.append(
                "## Accuracy vs pruning ratio\n\nsee accuracy_vs_ratio.csv "
                f"({len(curve)} points, final ratio {curve[-1][0]:.3f})\n"
            )
    compare_path = run_dir / "compare.csv"
    if compare_path.exists():
        with open(compare_path, "r", encoding="utf-8") as f:
            sections.append("## Criteria comparison\n\n```\n" + f.read() + "```\n")
    final_ckpt = run_dir / "pruned.ckpt"
    if final_ckpt.exists():
        net = engine.load_checkpoint(final_ckpt)
        counts = ", ".join(str(c) for c in net.filter_counts())
        sections.append(f"## Per-layer filter counts\n\n{counts}\n")
    md = "\n".join(sections) if sections else "(empty)\n"
    with open(run_dir / "summary.md", "w", encoding="utf-8") as f:
        f.write(md)
    if summary_rows:
        _write_csv(run_dir / "summary.csv", ["metric", "before", "after"], summary_rows)
    print(md)
    return 0


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--dataset", choices=["mnist", "synthetic"], default=None)
    p.add_argument("--data-dir", default=None, help=f"IDX directory (default ${DATA_DIR_ENV})")
    p.add_argument("--preset", choices=sorted(PRESETS), default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--workers", type=int, default=None, help="engine batch parallelism")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="entprune", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a preset or configured model")
    _add_common(p)
    p.add_argument("--init-from", default=None, help="resume from a checkpoint")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("collect", help="capture a per-sample activation/loss trace")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--reduce", choices=["mean", "max"], default="mean")
    p.add_argument("--split", choices=["train", "test"], default="train")
    p.set_defaults(func=cmd_collect)

    p = sub.add_parser("stats", help="per-filter entropy statistics from a trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--eps-h", type=float, default=1e4)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("score", help="score filters under a criterion")
    _add_common(p)
    p.add_argument("--criterion", choices=sorted(_CRITERION_FLAGS), required=True)
    p.add_argument("--scope", choices=["global", "layer"], default="global")
    p.add_argument("--amount", default="0", help="count, fraction (0.25), or ratio (1/16)")
    p.add_argument("--direction", choices=["auto", "asc", "desc"], default="auto")
    p.add_argument("--trace", default=None)
    p.add_argument("--model", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--plan-out", default=None)
    p.add_argument("--eps-h", type=float, default=1e4)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("prune", help="apply a prune plan to a checkpoint")
    p.add_argument("--model", required=True)
    p.add_argument("--plan", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--compensate-bias", action="store_true")
    p.add_argument("--freeze-max-ent", action="store_true")
    p.add_argument("--trace", default=None, help="trace for freeze marking")
    p.set_defaults(func=cmd_prune)

    p = sub.add_parser("2pfpce", help="run the full two-phase procedure")
    _add_common(p)
    p.add_argument("--model", default=None, help="pretrained checkpoint (else trains first)")
    p.set_defaults(func=cmd_2pfpce)

    p = sub.add_parser("compare", help="criteria-vs-ratio accuracy grid")
    _add_common(p)
    p.add_argument("--model", default=None)
    p.add_argument("--criteria", default="all", help="all or comma list (cond-ent,act-ent,l1,apoz)")
    p.add_argument("--ratios", default="0.25,0.5")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("noise-sweep", help="entropy vs input noise level")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--stds", default="0,0.05,0.1,0.2,0.4")
    p.set_defaults(func=cmd_noise_sweep)

    p = sub.add_parser("bench", help="median inference latency")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=32)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("report", help="consolidate a run directory")
    p.add_argument("--run-dir", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, CriteriaError, SurgeryError, KeyError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (DataError, TraceFormatError, engine.CheckpointError, FileNotFoundError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except (engine.NumericError, EntstatsError, FloatingPointError) as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    raise SystemExit(main())
