"""Experiment driver: config handling, training/eval loops, sweeps, export.

Configs are YAML files (nested key/value; see README for the schema); every
run is fully determined by (config, seed) and writes three artifacts into
its output directory: metrics.csv, energy_report.csv/.json, and
entropy_summary.csv, plus a final checkpoint.
"""

from __future__ import annotations

import copy
import csv
import os
import time
from dataclasses import dataclass, field

import numpy as np
import yaml

from .analysis import EnergyConstants, FiringStats, energy_report, entropy
from .attention import AttentionConfig, Variant
from .data import gen_synthetic_temporal, load_cifar10_binary
from .model import (
    ModelConfig,
    Recorder,
    SpikingClassifier,
    cross_entropy,
    evaluate,
    save_checkpoint,
)
from .neuron import LifParams
from .optim import AdamW


class ConfigError(Exception):
    pass


@dataclass
class OptimizerConfig:
    lr: float = 3e-4
    weight_decay: float = 0.01
    epochs: int = 10
    batch_size: int = 32


@dataclass
class DataConfig:
    train_size: int = 1024
    test_size: int = 256
    noise: float = 0.1
    cifar_dir: str | None = None
    subsample_train: int = 5000
    subsample_test: int = 1000


@dataclass
class ExperimentConfig:
    task: str = "synthetic"  # "synthetic" | "sequential_image" | "static_image"
    model: ModelConfig = field(default_factory=ModelConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    data: DataConfig = field(default_factory=DataConfig)
    seed: int = 0
    output_dir: str = "runs/default"

    def __post_init__(self):
        if self.task not in ("synthetic", "sequential_image", "static_image"):
            raise ConfigError(f"unknown task {self.task}")


@dataclass
class MetricsRecord:
    epoch: int
    split: str
    loss: float
    accuracy: float
    firing_rates: dict = field(default_factory=dict)
    entropies: dict = field(default_factory=dict)
    wall_clock: float = 0.0  # informational; excluded from the metrics CSV


def config_from_dict(doc) -> ExperimentConfig:
    """Build an ExperimentConfig from a plain nested dict (YAML document)."""
    doc = copy.deepcopy(doc or {})
    try:
        mdoc = doc.pop("model", {})
        adoc = mdoc.pop("attention", {})
        ldoc = adoc.pop("lif", {})
        # attention dims follow the model shape, so fill them in before the
        # AttentionConfig validates B against T
        if "timesteps" in mdoc:
            adoc.setdefault("T", mdoc["timesteps"])
        if "dim" in mdoc:
            adoc.setdefault("D", mdoc["dim"])
        att = AttentionConfig(lif=LifParams(**ldoc), **adoc)
        model = ModelConfig(attention=att, **mdoc)
        att.T = model.timesteps
        att.N = model.tokens
        att.D = model.dim
        opt = OptimizerConfig(**doc.pop("optimizer", {}))
        data = DataConfig(**doc.pop("data", {}))
        return ExperimentConfig(model=model, optimizer=opt, data=data, **doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path, overrides=None) -> ExperimentConfig:
    """Read a YAML config; ``overrides`` are dotted key=value strings that
    win over file values (values parsed as YAML scalars)."""
    with open(path) as f:
        doc = yaml.safe_load(f) or {}
    for ov in overrides or []:
        if "=" not in ov:
            raise ConfigError(f"override '{ov}' is not key=value")
        key, val = ov.split("=", 1)
        node = doc
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = yaml.safe_load(val)
    return config_from_dict(doc)


def parse_combo(text):
    """Parse temporal-combination notation into per-block index lists.

    Blocks are separated by ';', each block is 'q/k/v' ranges where a range
    is either '[a,b]' (1-indexed inclusive) or '[a:b]' (0-indexed
    half-open), matching the two notations used in the ablation tables.
    """

    def parse_range(r):
        r = r.strip()
        if not (r.startswith("[") and r.endswith("]")):
            raise ConfigError(f"bad range '{r}'")
        body = r[1:-1]
        if ":" in body:
            a, b = (int(x) for x in body.split(":"))
            steps = list(range(a, b))
        else:
            a, b = (int(x) for x in body.split(","))
            steps = list(range(a - 1, b))
        if not steps:
            raise ConfigError(f"empty range '{r}'")
        return steps

    combo = []
    for block in text.split(";"):
        parts = block.split("/")
        if len(parts) != 3:
            raise ConfigError(f"block '{block}' must be q/k/v ranges")
        combo.append(tuple(parse_range(p) for p in parts))
    return combo


# -- data ------------------------------------------------------------------


def build_datasets(config: ExperimentConfig):
    """Returns (train_x, train_y, test_x, test_y) for the configured task."""
    m, d = config.model, config.data
    if config.task == "synthetic":
        train = gen_synthetic_temporal(
            m.num_classes, m.timesteps, d.noise, seed=config.seed * 2 + 1,
            num_samples=d.train_size, spatial=m.in_spatial,
        )
        test = gen_synthetic_temporal(
            m.num_classes, m.timesteps, d.noise, seed=config.seed * 2 + 2,
            num_samples=d.test_size, spatial=m.in_spatial,
        )
        return train.inputs, train.labels, test.inputs, test.labels
    if not d.cifar_dir:
        raise ConfigError(f"task {config.task} needs data.cifar_dir")
    xs, ys = [], []
    for name in sorted(os.listdir(d.cifar_dir)):
        if name.startswith("data_batch") and name.endswith(".bin"):
            x, y = load_cifar10_binary(os.path.join(d.cifar_dir, name))
            xs.append(x)
            ys.append(y)
    if not xs:
        raise ConfigError(f"no data_batch*.bin files under {d.cifar_dir}")
    train_x, train_y = np.concatenate(xs), np.concatenate(ys)
    test_path = os.path.join(d.cifar_dir, "test_batch.bin")
    test_x, test_y = load_cifar10_binary(test_path)
    rng = np.random.default_rng(config.seed)
    tr = rng.permutation(len(train_y))[: d.subsample_train]
    te = rng.permutation(len(test_y))[: d.subsample_test]
    return train_x[tr], train_y[tr], test_x[te], test_y[te]


# -- metrics export --------------------------------------------------------


def _metric_columns(records):
    rate_keys = sorted({k for r in records for k in r.firing_rates})
    ent_keys = sorted({k for r in records for k in r.entropies})
    return rate_keys, ent_keys


def write_metrics_csv(records, path):
    """Stable-schema CSV; floats via repr for bit-exact reproducibility."""
    rate_keys, ent_keys = _metric_columns(records)
    header = (["epoch", "split", "loss", "accuracy"]
              + [f"entropy_{k}" for k in ent_keys]
              + [f"rate_{k}" for k in rate_keys])
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for r in records:
            row = [r.epoch, r.split, repr(r.loss), repr(r.accuracy)]
            row += [repr(r.entropies.get(k, 0.0)) for k in ent_keys]
            row += [repr(r.firing_rates.get(k, 0.0)) for k in rate_keys]
            w.writerow(row)


# -- experiment loop -------------------------------------------------------


def _eval_record(model, test_x, test_y, epoch, batch_size):
    """Evaluation pass with instrumentation: rates over the full set, plus
    attention entropy measured on the first batch."""
    t0 = time.perf_counter()
    recorder = Recorder(trace=False)
    acc, loss = evaluate(model, test_x, test_y, batch_size=batch_size,
                         record=recorder)
    tracer = Recorder(trace=True)
    model.forward(test_x[:batch_size], training=False, record=tracer)
    ents = {}
    for i in range(1, model.config.depth + 1):
        key = f"enc{i}.attn_out"
        if key in tracer.arrays:
            ents[f"enc{i}"] = entropy(tracer.arrays[key])
    return MetricsRecord(
        epoch=epoch, split="test", loss=loss, accuracy=acc,
        firing_rates=dict(recorder.rates), entropies=ents,
        wall_clock=time.perf_counter() - t0,
    ), recorder


def run_experiment(config: ExperimentConfig, model=None):
    """Train (or eval-only when epochs=0) and emit all artifacts.

    Returns (records, model, final_energy_report).
    """
    os.makedirs(config.output_dir, exist_ok=True)
    train_x, train_y, test_x, test_y = build_datasets(config)
    if model is None:
        model = SpikingClassifier(config.model, seed=config.seed)
    opt_cfg = config.optimizer
    steps_per_epoch = max(1, len(train_y) // opt_cfg.batch_size)
    optimizer = AdamW(
        model.parameters(), lr=opt_cfg.lr, weight_decay=opt_cfg.weight_decay,
        cosine_steps=max(1, opt_cfg.epochs * steps_per_epoch),
    )
    rng = np.random.default_rng(config.seed + 7919)
    records = []

    for epoch in range(1, opt_cfg.epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(len(train_y))
        loss_sum, correct, seen = 0.0, 0, 0
        for s in range(steps_per_epoch):
            idx = order[s * opt_cfg.batch_size : (s + 1) * opt_cfg.batch_size]
            xb, yb = train_x[idx], train_y[idx]
            logits = model.forward(xb, training=True)
            loss = cross_entropy(logits, yb)
            if not np.isfinite(loss.data):
                raise RuntimeError(f"non-finite loss at epoch {epoch} step {s}")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            loss_sum += loss.item() * len(yb)
            correct += int((logits.data.argmax(axis=1) == yb).sum())
            seen += len(yb)
        records.append(MetricsRecord(
            epoch=epoch, split="train",
            loss=loss_sum / seen, accuracy=correct / seen,
            wall_clock=time.perf_counter() - t0,
        ))
        rec, recorder = _eval_record(model, test_x, test_y, epoch,
                                     opt_cfg.batch_size)
        records.append(rec)

    if opt_cfg.epochs == 0:
        rec, recorder = _eval_record(model, test_x, test_y, 0, opt_cfg.batch_size)
        records.append(rec)

    write_metrics_csv(records, os.path.join(config.output_dir, "metrics.csv"))
    report = energy_report(model, FiringStats.from_recorder(recorder),
                           EnergyConstants())
    report.to_csv(os.path.join(config.output_dir, "energy_report.csv"))
    report.to_json(os.path.join(config.output_dir, "energy_report.json"))
    with open(os.path.join(config.output_dir, "entropy_summary.csv"), "w",
              newline="") as f:
        w = csv.writer(f)
        w.writerow(["layer", "entropy_nats"])
        final_test = [r for r in records if r.split == "test"][-1]
        for k in sorted(final_test.entropies):
            w.writerow([k, repr(final_test.entropies[k])])
    save_checkpoint(model, os.path.join(config.output_dir, "checkpoint.bin"))
    return records, model, report


def final_test_accuracy(records):
    return [r for r in records if r.split == "test"][-1].accuracy


# -- sweeps ----------------------------------------------------------------


def sweep_blocksize(config: ExperimentConfig, block_sizes):
    """Train one run per block size; emits comparison.csv in output_dir.

    Invalid block sizes (not dividing T) are kept as warning rows rather
    than aborting the sweep.
    """
    os.makedirs(config.output_dir, exist_ok=True)
    rows = []
    for b in block_sizes:
        if b < 1 or b > config.model.timesteps or config.model.timesteps % b:
            rows.append({"block_size": b, "status": "skipped_invalid",
                         "accuracy": "", "entropy": "", "energy_pj": ""})
            continue
        sub = copy.deepcopy(config)
        sub.model.attention.variant = Variant.STATTEN
        sub.model.attention.B = b
        sub.output_dir = os.path.join(config.output_dir, f"B{b}")
        records, _, report = run_experiment(sub)
        final = [r for r in records if r.split == "test"][-1]
        ent = (sum(final.entropies.values()) / len(final.entropies)
               if final.entropies else 0.0)
        rows.append({"block_size": b, "status": "ok",
                     "accuracy": repr(final.accuracy),
                     "entropy": repr(ent),
                     "energy_pj": repr(report.total_pj)})
    path = os.path.join(config.output_dir, "blocksize_comparison.csv")
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=["block_size", "status", "accuracy",
                                          "entropy", "energy_pj"])
        w.writeheader()
        w.writerows(rows)
    return rows


def sweep_temporal_combination(config: ExperimentConfig, combo_texts):
    """Train one run per temporal Q/K/V combination; emits comparison CSV.

    Each entry of ``combo_texts`` is the notation accepted by
    :func:`parse_combo`; the notation is echoed verbatim in the output.
    """
    os.makedirs(config.output_dir, exist_ok=True)
    rows = []
    for i, text in enumerate(combo_texts):
        combo = parse_combo(text)
        sub = copy.deepcopy(config)
        sub.model.attention.variant = Variant.STATTEN
        sub.model.attention.combo = combo
        sub.output_dir = os.path.join(config.output_dir, f"combo{i}")
        records, _, _ = run_experiment(sub)
        rows.append({"combo": text,
                     "accuracy": repr(final_test_accuracy(records))})
    path = os.path.join(config.output_dir, "combo_comparison.csv")
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=["combo", "accuracy"])
        w.writeheader()
        w.writerows(rows)
    return rows
