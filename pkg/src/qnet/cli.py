"""Command-line entry point: train, eval, analyze, gradcheck, noise-sweep.

Configuration is a flat JSON document mirroring :class:`RunConfig`; every
field can be overridden on the command line with ``--key value``.  Exit
codes: 0 success, 1 runtime or check failure, 2 configuration error.  Each
training run writes a directory named by timestamp and seed containing the
resolved config snapshot, the per-step metrics stream (one JSON object per
line), and the final checkpoint.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import encoder, gradients, model as model_mod
from .circuit import analyze_depth, count_gates
from .data import (DataError, load_dataset, prepare_sentence_dataset,
                   prepare_token_dataset, synthetic_corpora)
from .encoder import QNetConfig, build_qnet, build_qnet_template
from .model import Model, ModelConfig, default_loss_kind, evaluate
from .sim import NoiseSpec, init_zero
from .train import LrSchedule, TrainConfig, TrainRun, train

GRADCHECK_TOLERANCE = 1e-6


class ConfigError(ValueError):
    """Invalid run configuration; maps to exit code 2."""


@dataclass
class RunConfig:
    """Everything a run needs; defaults follow the experiment protocol."""

    model: str = "qnet"
    n: int = 8
    d: int = 2
    blocks: int = 1
    head: str = "auto"           # auto | sentence-classify | regress | token-classify
    dataset: str | None = None   # path to a dataset file
    format: str = "jsonl_text_label"
    synthetic: str | None = None  # keyword_presence | tag_copy
    synthetic_size: int = 2000
    ablation: str = "full"
    epochs: int = 5
    steps_per_epoch: int = 100
    batch_size: int = 128
    initial_lr: float = 3e-4
    alpha: float = 1e-2
    num_nodes: int = 1
    test_fraction: float = 0.27
    noise_p: float = 0.0
    trajectories: int = 8
    seed: int = 0
    out: str = "runs"

    def validate(self) -> None:
        if self.model not in ("qnet", "resqnet"):
            raise ConfigError(f"model: expected 'qnet' or 'resqnet', got {self.model!r}")
        if self.n < 1:
            raise ConfigError(f"n: must be >= 1, got {self.n}")
        if self.d < 1:
            raise ConfigError(f"d: must be >= 1, got {self.d}")
        if self.blocks < 1:
            raise ConfigError(f"blocks: must be >= 1, got {self.blocks}")
        if self.n * self.d > 26:
            raise ConfigError(f"n*d: exceeds the 26-qubit cap, got {self.n * self.d}")
        if self.ablation not in encoder.ABLATIONS:
            raise ConfigError(f"ablation: expected one of {encoder.ABLATIONS}, "
                              f"got {self.ablation!r}")
        if self.head not in ("auto",) + model_mod.HEAD_KINDS:
            raise ConfigError(f"head: unknown head kind {self.head!r}")
        if not 0.0 <= self.noise_p <= 1.0:
            raise ConfigError(f"noise_p: must be in [0, 1], got {self.noise_p}")
        if self.epochs < 1 or self.steps_per_epoch < 1 or self.batch_size < 1:
            raise ConfigError("epochs, steps_per_epoch, batch_size: must be >= 1")
        if self.dataset is None and self.synthetic is None:
            pass  # analyze/gradcheck need no data; train validates later

    def noise(self) -> NoiseSpec | None:
        # p = 0 takes the exact noise-free path, keeping runs bit-identical
        # with plain training.
        if self.noise_p > 0.0:
            return NoiseSpec(self.noise_p, self.seed)
        return None


def _config_from(namespace: argparse.Namespace) -> RunConfig:
    values = dataclasses.asdict(RunConfig())
    if namespace.config:
        try:
            with open(namespace.config, encoding="utf-8") as fh:
                file_values = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"config file: {exc}") from exc
        for key, val in file_values.items():
            if key not in values:
                raise ConfigError(f"config file: unknown field {key!r}")
            values[key] = val
    for key in values:
        override = getattr(namespace, key, None)
        if override is not None:
            values[key] = override
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


# --- dataset assembly ---------------------------------------------------------

def _build_task(cfg: RunConfig):
    """Resolve records into model-ready splits plus head/class metadata."""
    token_task = False
    if cfg.dataset is not None:
        records = load_dataset(cfg.dataset, cfg.format)
        token_task = cfg.format == "conll_bio"
    elif cfg.synthetic is not None:
        records = synthetic_corpora(cfg.synthetic, cfg.synthetic_size,
                                    cfg.seed, length=cfg.n)
        token_task = cfg.synthetic == "tag_copy"
    else:
        raise ConfigError("dataset: provide a dataset path or a synthetic kind")

    if token_task:
        if cfg.head not in ("auto", "token-classify"):
            raise ConfigError(f"head: {cfg.head!r} incompatible with token data")
        train_ex, test_ex, vocab, tag_vocab = prepare_token_dataset(
            records, cfg.n, cfg.test_fraction, cfg.seed)
        return {"train": train_ex, "test": test_ex, "vocab": vocab,
                "head": "token-classify", "num_classes": len(tag_vocab),
                "tag_vocab": tag_vocab}
    regression = cfg.head == "regress"
    train_ex, test_ex, vocab, classes = prepare_sentence_dataset(
        records, cfg.n, cfg.test_fraction, cfg.seed, regression=regression)
    if regression:
        return {"train": train_ex, "test": test_ex, "vocab": vocab,
                "head": "regress", "num_classes": 1}
    num_classes = 1 if len(classes) <= 2 else len(classes)
    return {"train": train_ex, "test": test_ex, "vocab": vocab,
            "head": "sentence-classify", "num_classes": num_classes,
            "classes": classes}


def _model_config(cfg: RunConfig, task: dict) -> ModelConfig:
    return ModelConfig(cfg.model, cfg.n, cfg.d, cfg.blocks, task["head"],
                       task["num_classes"], cfg.ablation)


def _make_run_dir(cfg: RunConfig) -> str:
    stamp = time.strftime("%Y%m%d-%H%M%S")
    base = os.path.join(cfg.out, f"{stamp}-seed{cfg.seed}")
    path = base
    suffix = 0
    while os.path.exists(path):
        suffix += 1
        path = f"{base}.{suffix}"
    os.makedirs(path)
    return path


def _write_metrics(path: str, metrics: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in metrics:
            fh.write(json.dumps(record) + "\n")


def _write_resolved_config(run_dir: str, cfg: RunConfig, extra: dict) -> None:
    doc = dataclasses.asdict(cfg)
    doc.update(extra)
    with open(os.path.join(run_dir, "config.json"), "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)


# --- commands -------------------------------------------------------------------

def cmd_train(cfg: RunConfig) -> str:
    """Train per config; returns the run directory."""
    task = _build_task(cfg)
    mconfig = _model_config(cfg, task)
    net = Model.init(mconfig, len(task["vocab"]), cfg.seed)
    total_steps = cfg.epochs * cfg.steps_per_epoch
    schedule = LrSchedule(total_steps, cfg.batch_size, cfg.initial_lr,
                          cfg.num_nodes, cfg.alpha)
    tconfig = TrainConfig(cfg.epochs, cfg.steps_per_epoch, cfg.batch_size,
                          cfg.seed, cfg.noise(), cfg.trajectories)
    run = train(net, task["train"], tconfig, schedule,
                eval_data=task["test"] or None)
    run_dir = _make_run_dir(cfg)
    _write_metrics(os.path.join(run_dir, "metrics.jsonl"), run.metrics)
    model_mod.save_checkpoint(net, os.path.join(run_dir, "checkpoint.json"))
    _write_resolved_config(run_dir, cfg, {
        "resolved_head": mconfig.head,
        "resolved_num_classes": mconfig.num_classes,
        "vocab_size": len(task["vocab"]),
        "total_steps": total_steps,
    })
    last_eval = run.metrics[-1].get("eval")
    print(f"run directory: {run_dir}")
    print(f"final training loss: {run.metrics[-1]['loss']:.6f}")
    if last_eval:
        print(f"final eval: {json.dumps(last_eval)}")
    return run_dir


def cmd_eval(run_dir: str, split_name: str = "test") -> dict:
    """Evaluate a run's checkpoint on its (reproducibly rebuilt) data split."""
    config_path = os.path.join(run_dir, "config.json")
    try:
        with open(config_path, encoding="utf-8") as fh:
            stored = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"run directory: {exc}") from exc
    fields = {f.name for f in dataclasses.fields(RunConfig)}
    cfg = RunConfig(**{k: v for k, v in stored.items() if k in fields})
    cfg.validate()
    task = _build_task(cfg)
    net = model_mod.load_checkpoint(os.path.join(run_dir, "checkpoint.json"))
    if split_name not in ("train", "test"):
        raise ConfigError(f"split: expected train or test, got {split_name!r}")
    result = evaluate(net, task[split_name])
    print(json.dumps({"split": split_name, **result}))
    return result


def _segment_depths(report) -> dict:
    depths = {"enc": report.per_layer_depth.get("enc", 0), "mix": 0, "ff": 0}
    for tag, depth in report.per_layer_depth.items():
        if tag.startswith("mix["):
            depths["mix"] = max(depths["mix"], depth)
        elif tag.startswith("ff["):
            depths["ff"] = max(depths["ff"], depth)
    return depths


def _analyze_row(model_kind: str, n: int, d: int, blocks: int,
                 ablation: str) -> dict:
    qcfg = QNetConfig(n, d, blocks)
    circuit = build_qnet(qcfg, np.zeros((n, d)), ablation)
    report = analyze_depth(circuit)
    depths = _segment_depths(report)
    segment_gates = {"enc": 0, "mix": 0, "ff": 0}
    for op in circuit.ops:
        if op.tag == "enc":
            segment_gates["enc"] += 1
        elif op.tag and op.tag.startswith("mix["):
            segment_gates["mix"] += 1
        elif op.tag and op.tag.startswith("ff["):
            segment_gates["ff"] += 1
    params_qnet = encoder.count_parameters(qcfg)
    params_resqnet = model_mod.encoder_parameter_count(
        ModelConfig("resqnet", n, d, blocks))
    return {
        "model": model_kind, "n": n, "d": d, "blocks": blocks,
        "qubits": n * d,
        "params_qnet": params_qnet,
        "params_resqnet": params_resqnet,
        "parameters": params_qnet if model_kind == "qnet" else params_resqnet,
        "depth_total": report.total_depth,
        "depth_encoding": depths["enc"],
        "depth_mixture": depths["mix"],
        "depth_feedforward": depths["ff"],
        "gate_counts": report.gate_count,
        "segment_gates": segment_gates,
    }


def cmd_analyze(cfg: RunConfig, sweep_n: list[int] | None = None,
                sweep_d: list[int] | None = None,
                json_path: str | None = None) -> dict:
    """Parameter counts, scheduled depths, and gate counts; optional sweeps."""
    rows = []
    for n in sweep_n or [cfg.n]:
        for d in sweep_d or [cfg.d]:
            rows.append(_analyze_row(cfg.model, n, d, cfg.blocks, cfg.ablation))
    report = {"model": cfg.model, "blocks": cfg.blocks,
              "ablation": cfg.ablation, "rows": rows}
    header = (f"{'n':>4} {'d':>4} {'qubits':>7} {'params':>7} "
              f"{'depth':>6} {'enc':>4} {'mix':>5} {'ff':>5} gates")
    print(header)
    for row in rows:
        total_gates = sum(row["gate_counts"].values())
        print(f"{row['n']:>4} {row['d']:>4} {row['qubits']:>7} "
              f"{row['parameters']:>7} {row['depth_total']:>6} "
              f"{row['depth_encoding']:>4} {row['depth_mixture']:>5} "
              f"{row['depth_feedforward']:>5} {total_gates}")
    if json_path is None:
        os.makedirs(cfg.out, exist_ok=True)
        json_path = os.path.join(cfg.out, "analyze.json")
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
    print(f"report written to {json_path}")
    return report


def cmd_gradcheck(cfg: RunConfig) -> tuple[bool, int, float]:
    """Adjoint vs parameter-shift vs finite differences on one random QNet.

    Returns (passed, worst parameter index, max pairwise deviation); a probe
    slot no gate references is appended and must get gradient exactly 0.
    """
    if cfg.n * cfg.d > 8:
        raise ConfigError(f"n*d: gradcheck requires n*d <= 8, got {cfg.n * cfg.d}")
    qcfg = QNetConfig(cfg.n, cfg.d, cfg.blocks)
    template = build_qnet_template(qcfg, cfg.ablation)
    rng = np.random.default_rng(cfg.seed)
    used = template.num_parameters
    params = np.concatenate([rng.uniform(-np.pi, np.pi, used), [0.4]])
    cot = rng.normal(0.0, 1.0, qcfg.num_qubits)
    state = init_zero(qcfg.num_qubits)

    adj = gradients.adjoint_gradient(template, params, state, cot)
    shift = gradients.parameter_shift_gradient(template, params, state, cot)
    fd = gradients.finite_difference_gradient(template, params, state, cot,
                                              step=1e-5)
    pairs = {"adjoint-vs-shift": np.abs(adj - shift),
             "adjoint-vs-fd": np.abs(adj - fd),
             "shift-vs-fd": np.abs(shift - fd)}
    worst_index = 0
    max_dev = 0.0
    print(f"parameters: {used} circuit slots + 1 unused probe")
    for name, dev in pairs.items():
        print(f"max |{name}| = {dev.max():.3e}")
        if dev.max() > max_dev:
            max_dev = float(dev.max())
            worst_index = int(np.argmax(dev))
    probe = max(abs(adj[-1]), abs(shift[-1]), abs(fd[-1]))
    print(f"unused-slot gradient magnitude = {probe:.3e}")
    passed = max_dev <= GRADCHECK_TOLERANCE and probe == 0.0
    if passed:
        print(f"PASS (tolerance {GRADCHECK_TOLERANCE:g})")
    else:
        print(f"FAIL at parameter index {worst_index}: deviation {max_dev:.3e} "
              f"exceeds {GRADCHECK_TOLERANCE:g}")
    return passed, worst_index, max_dev


def loss_jitter(losses: list[float]) -> float:
    """Step-to-step variability: std of the first differences of the curve.

    Differencing removes the descending trend so the statistic measures
    roughness, not the overall drop.
    """
    if len(losses) < 3:
        return 0.0
    return float(np.std(np.diff(np.asarray(losses))))


def cmd_noise_sweep(cfg: RunConfig, p_list: list[float]) -> dict:
    """One training run per noise level, shared seed; writes per-p metrics
    streams and a jitter/final-loss summary table."""
    for p in p_list:
        if not 0.0 <= p <= 1.0:
            raise ConfigError(f"p: noise probabilities must be in [0, 1], got {p}")
    task = _build_task(cfg)
    mconfig = _model_config(cfg, task)
    total_steps = cfg.epochs * cfg.steps_per_epoch
    schedule = LrSchedule(total_steps, cfg.batch_size, cfg.initial_lr,
                          cfg.num_nodes, cfg.alpha)
    run_dir = _make_run_dir(cfg)
    summary = []
    for p in p_list:
        net = Model.init(mconfig, len(task["vocab"]), cfg.seed)
        noise = NoiseSpec(p, cfg.seed) if p > 0.0 else None
        tconfig = TrainConfig(cfg.epochs, cfg.steps_per_epoch, cfg.batch_size,
                              cfg.seed, noise, cfg.trajectories)
        run = train(net, task["train"], tconfig, schedule)
        losses = [record["loss"] for record in run.metrics]
        _write_metrics(os.path.join(run_dir, f"metrics-p{p:g}.jsonl"),
                       run.metrics)
        k = max(1, min(10, len(losses) // 4))
        summary.append({
            "p": p,
            "jitter": loss_jitter(losses),
            "initial_loss": float(np.mean(losses[:k])),
            "final_loss": float(np.mean(losses[-k:])),
        })
    _write_resolved_config(run_dir, cfg, {"p_list": p_list,
                                          "total_steps": total_steps})
    with open(os.path.join(run_dir, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
    print(f"{'p':>6} {'jitter':>10} {'initial':>10} {'final':>10}")
    for row in summary:
        print(f"{row['p']:>6g} {row['jitter']:>10.4f} "
              f"{row['initial_loss']:>10.4f} {row['final_loss']:>10.4f}")
    print(f"run directory: {run_dir}")
    return {"run_dir": run_dir, "summary": summary}


# --- argument parsing -------------------------------------------------------------

def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--model", choices=["qnet", "resqnet"])
    parser.add_argument("--n", type=int)
    parser.add_argument("--d", type=int)
    parser.add_argument("--blocks", type=int)
    parser.add_argument("--head")
    parser.add_argument("--dataset")
    parser.add_argument("--format", choices=["csv_text_label",
                                             "jsonl_text_label", "conll_bio"])
    parser.add_argument("--synthetic", choices=["keyword_presence", "tag_copy"])
    parser.add_argument("--synthetic-size", dest="synthetic_size", type=int)
    parser.add_argument("--ablation", choices=list(encoder.ABLATIONS))
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--steps-per-epoch", dest="steps_per_epoch", type=int)
    parser.add_argument("--batch-size", dest="batch_size", type=int)
    parser.add_argument("--initial-lr", dest="initial_lr", type=float)
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--num-nodes", dest="num_nodes", type=int)
    parser.add_argument("--test-fraction", dest="test_fraction", type=float)
    parser.add_argument("--noise-p", dest="noise_p", type=float)
    parser.add_argument("--trajectories", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qnet", description="QNet/ResQNet training and analysis")
    sub = parser.add_subparsers(dest="command", required=True)

    for name in ("train", "noise-sweep", "analyze", "gradcheck"):
        p = sub.add_parser(name)
        _add_config_flags(p)
        if name == "noise-sweep":
            p.add_argument("--p-list", dest="p_list", default="0.1,0.5",
                           help="comma-separated noise probabilities")
        if name == "analyze":
            p.add_argument("--sweep-n", dest="sweep_n",
                           help="comma-separated n values")
            p.add_argument("--sweep-d", dest="sweep_d",
                           help="comma-separated d values")
            p.add_argument("--json", dest="json_path",
                           help="report output path")

    p_eval = sub.add_parser("eval")
    p_eval.add_argument("--run", required=True, help="run directory")
    p_eval.add_argument("--split", default="test", choices=["train", "test"])
    return parser


def _parse_number_list(text: str, convert) -> list:
    try:
        return [convert(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise ConfigError(f"list argument: {exc}") from exc


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "eval":
            cmd_eval(args.run, args.split)
            return 0
        cfg = _config_from(args)
        if args.command == "train":
            cmd_train(cfg)
            return 0
        if args.command == "analyze":
            sweep_n = _parse_number_list(args.sweep_n, int) if args.sweep_n else None
            sweep_d = _parse_number_list(args.sweep_d, int) if args.sweep_d else None
            cmd_analyze(cfg, sweep_n, sweep_d, args.json_path)
            return 0
        if args.command == "gradcheck":
            passed, _, _ = cmd_gradcheck(cfg)
            return 0 if passed else 1
        if args.command == "noise-sweep":
            p_list = _parse_number_list(args.p_list, float)
            if not p_list:
                raise ConfigError("p-list: needs at least one probability")
            cmd_noise_sweep(cfg, p_list)
            return 0
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (DataError, ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
