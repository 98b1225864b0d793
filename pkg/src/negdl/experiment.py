"""End-to-end runs: encode, generate NDBs, sketch, decode, train, evaluate.

Seed schedule (all derived from the config's master seed with
:func:`negdl.seeding.derive_seed`):

=================  =========================================
stage              index
=================  =========================================
``split``          0 (train/test permutation)
``ndb/<part>``     instance position within ``<part>``
``init``           0 (weight initialisation)
``train``          0 (batch order and dropout masks)
=================  =========================================

``<part>`` is ``all`` when one file is split into train and test (the index is
then the row in the file) and ``train``/``test`` when the dataset ships as two
files.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import nn
from .data import AttributeCodec, Dataset, load_breast_cancer, load_idx_images, read_jsonl
from .ndbgen import DEFAULT_P, DEFAULT_R, QKParams, generate_ndb
from .presets import preset_q
from .seeding import derive_seed
from .sketch import bit_posteriors, diff_profile, extract_sketch

log = logging.getLogger(__name__)

MODES = ("plaintext", "negdl")


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending field path."""


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        super().__init__(f"stage {stage!r} failed: {cause}")


@dataclass
class DatasetSpec:
    name: str = "breast-cancer"
    path: str = ""
    labels_path: str = ""
    test_path: str = ""
    test_labels_path: str = ""
    limit: int | None = None
    test_limit: int | None = None
    train_fraction: float = 0.7
    bits: int | None = None
    attributes: int | None = None


@dataclass
class QKSpec:
    preset: str | None = "Q1"
    q: list[float] | None = None
    p: list[float] = field(default_factory=lambda: list(DEFAULT_P))
    r: float = DEFAULT_R


@dataclass
class NetworkSpec:
    hidden: list[int] = field(default_factory=lambda: [100, 60])
    activation: str = "relu"
    dropout_layers: list[int] = field(default_factory=list)


@dataclass
class TrainSpec:
    learning_rate: float = 0.01
    batch_size: int = 8
    max_epochs: int = 50
    dropout_rate: float = 0.0
    tolerance: float | None = 1e-6


@dataclass
class ExperimentConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    qk: QKSpec = field(default_factory=QKSpec)
    network: NetworkSpec = field(default_factory=NetworkSpec)
    train: TrainSpec = field(default_factory=TrainSpec)
    mode: str = "plaintext"
    out: str = "runs/experiment"
    seed: int = 0
    threads: int = 1

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | None = None) -> ExperimentConfig:
        cfg = _build(cls, d, "")
        if base_dir is not None:
            ds = cfg.dataset
            for name in ("path", "labels_path", "test_path", "test_labels_path"):
                value = getattr(ds, name)
                if value and not Path(value).is_absolute():
                    setattr(ds, name, str(base_dir / value))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{path}: {exc}") from None
        return cls.from_dict(raw, base_dir=path.parent)

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode: must be one of {MODES}, got {self.mode!r}")
        if self.threads < 1:
            raise ConfigError(f"threads: must be >= 1, got {self.threads}")
        ds = self.dataset
        if ds.name not in ("breast-cancer", "mnist", "jsonl"):
            raise ConfigError(f"dataset.name: unknown dataset {ds.name!r}")
        if not ds.path:
            raise ConfigError("dataset.path: required")
        needed = ["path"]
        if ds.name == "mnist":
            needed += ["labels_path"]
            if ds.test_path or ds.test_labels_path:
                needed += ["test_path", "test_labels_path"]
        for name in needed:
            if not Path(getattr(ds, name)).exists():
                raise ConfigError(f"dataset.{name}: file not found: {getattr(ds, name)}")
        if ds.name == "jsonl" and (ds.bits is None or ds.attributes is None):
            raise ConfigError("dataset.bits: jsonl datasets need bits and attributes")
        if not 0 < ds.train_fraction < 1:
            raise ConfigError(f"dataset.train_fraction: must be in (0, 1), got {ds.train_fraction}")
        for name in ("limit", "test_limit"):
            v = getattr(ds, name)
            if v is not None and v < 1:
                raise ConfigError(f"dataset.{name}: must be positive, got {v}")
        if self.qk.preset is None and self.qk.q is None:
            raise ConfigError("qk.preset: give a preset name or an explicit q")
        try:
            self.qk_params(self.codec_bits(), self.codec_attributes())
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"qk: {exc}") from None
        if any(h < 1 for h in self.network.hidden):
            raise ConfigError(f"network.hidden: sizes must be positive, got {self.network.hidden}")
        if self.network.activation not in ("sigmoid", "relu", "tanh"):
            raise ConfigError(f"network.activation: unknown activation {self.network.activation!r}")
        try:
            self.train_config(1.0)
        except ValueError as exc:
            raise ConfigError(f"train: {exc}") from None

    def codec_bits(self) -> int:
        return {"breast-cancer": 4, "mnist": 8}.get(self.dataset.name, self.dataset.bits)

    def codec_attributes(self) -> int:
        return {"breast-cancer": 9, "mnist": 784}.get(self.dataset.name, self.dataset.attributes)

    def qk_params(self, bits: int, attributes: int) -> QKParams:
        q = self.qk.q if self.qk.q is not None else preset_q(self.qk.preset, bits)
        if len(q) != bits:
            raise ValueError(f"q has {len(q)} entries, attributes have {bits} bits")
        return QKParams(q=tuple(q), attributes=attributes, p=tuple(self.qk.p), r=self.qk.r)

    def train_config(self, normalizer: float) -> nn.TrainConfig:
        t = self.train
        return nn.TrainConfig(
            learning_rate=t.learning_rate,
            batch_size=t.batch_size,
            max_epochs=t.max_epochs,
            dropout_rate=t.dropout_rate,
            seed=derive_seed(self.seed, "train"),
            input_normalizer=normalizer,
            tolerance=t.tolerance,
        )


def _build(cls, d, prefix: str):
    if not isinstance(d, dict):
        raise ConfigError(f"{prefix or 'config'}: expected an object, got {type(d).__name__}")
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in d.items():
        path = f"{prefix}.{key}" if prefix else key
        if key not in known:
            raise ConfigError(f"{path}: unknown field")
        sub = {"dataset": DatasetSpec, "qk": QKSpec, "network": NetworkSpec, "train": TrainSpec}
        if cls is ExperimentConfig and key in sub:
            kwargs[key] = _build(sub[key], value, path)
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{prefix or 'config'}: {exc}") from None


@dataclass
class Prepared:
    train: Dataset
    test: Dataset
    # Stage names and instance indices used to seed each NDB.
    train_keys: tuple[str, np.ndarray]
    test_keys: tuple[str, np.ndarray]


def load_data(cfg: ExperimentConfig) -> Prepared:
    ds = cfg.dataset
    if ds.name == "mnist" and ds.test_path:
        train = load_idx_images(ds.path, ds.labels_path, ds.limit)
        test = load_idx_images(ds.test_path, ds.test_labels_path, ds.test_limit)
        return Prepared(
            train, test,
            ("ndb/train", np.arange(len(train))),
            ("ndb/test", np.arange(len(test))),
        )
    if ds.name == "breast-cancer":
        full = load_breast_cancer(ds.path)
    elif ds.name == "mnist":
        full = load_idx_images(ds.path, ds.labels_path, ds.limit)
    else:
        full = read_jsonl(ds.path, AttributeCodec(ds.bits, ds.attributes), name="jsonl")
    split = full.split(cfg.seed, ds.train_fraction)
    train_idx = split.train if ds.limit is None or ds.name == "mnist" else split.train[: ds.limit]
    test_idx = split.test if ds.test_limit is None else split.test[: ds.test_limit]
    return Prepared(
        full.subset(train_idx), full.subset(test_idx),
        ("ndb/all", train_idx), ("ndb/all", test_idx),
    )


def negdl_features(
    bits: np.ndarray, params: QKParams, codec: AttributeCodec, master_seed: int,
    stage: str, indices, threads: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Expected attribute values and G (bits) decoded from one fresh NDB per row."""
    profile = diff_profile(params)

    def one(k):
        sketch = extract_sketch(generate_ndb(bits[k], params, derive_seed(master_seed, stage, int(indices[k]))))
        pz = bit_posteriors(sketch.counts, profile).reshape(codec.attributes, codec.bits)
        expected = (1.0 - pz) @ codec.weights
        g = -np.log2(np.maximum(pz, 1.0 - pz)).sum()
        return expected, g

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(one, range(len(bits))))
    else:
        results = [one(k) for k in range(len(bits))]
    features = np.array([r[0] for r in results]).reshape(len(bits), codec.attributes)
    return features, np.array([r[1] for r in results])


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (ConfigError, PipelineError):
        raise
    except Exception as exc:
        raise PipelineError(name, exc) from exc


@dataclass
class Features:
    data: Prepared
    x_train: np.ndarray
    x_test: np.ndarray
    summary: dict = field(default_factory=dict)


def build_features(cfg: ExperimentConfig, data: Prepared, parts=("train", "test")) -> Features:
    """Network inputs for the chosen mode, before normalisation."""
    if cfg.mode == "plaintext":
        return Features(
            data,
            data.train.instances.astype(np.float64),
            data.test.instances.astype(np.float64),
        )
    codec = data.train.codec
    params = _stage("params", cfg.qk_params, codec.bits, codec.attributes)
    empty = np.zeros((0, codec.attributes))
    out, gs = {}, []
    for part in ("train", "test"):
        ds, (stage, index) = (data.train, data.train_keys) if part == "train" else (data.test, data.test_keys)
        if part not in parts:
            out[part] = empty
            continue
        log.info("generating %d %s NDBs", len(ds), part)
        out[part], g = _stage(
            "ndb", negdl_features, ds.bit_strings(), params, codec, cfg.seed, stage, index, cfg.threads
        )
        gs.append(g)
    all_g = np.concatenate(gs)
    summary = {
        "qk_params": params.to_dict(),
        "p_diff": diff_profile(params).p_diff.tolist(),
        "security": {"mean_G": float(all_g.mean()), "min_G": float(all_g.min()), "max_G": float(all_g.max())},
    }
    return Features(data, out["train"], out["test"], summary)


def evaluate(net: nn.Network, features, labels, normalizer: float, n_classes: int) -> dict:
    pred, _ = nn.predict(net, features, normalizer)
    y = np.asarray(labels)
    return {
        "test_accuracy": float(np.mean(pred == y)),
        "per_class_accuracy": {
            str(c): (float(np.mean(pred[y == c] == c)) if np.any(y == c) else None)
            for c in range(n_classes)
        },
    }


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> dict:
    """Run one configuration. Returns the metrics written to ``metrics.json``.

    Everything except ``wall_clock_s`` is a deterministic function of the
    config (including its master seed).
    """
    started = time.perf_counter()
    data = _stage("load", load_data, cfg)
    codec = data.train.codec
    normalizer = data.train.normalizer
    feats = build_features(cfg, data)
    metrics: dict = {
        "dataset": data.train.name,
        "mode": cfg.mode,
        "seed": cfg.seed,
        "n_train": len(data.train),
        "n_test": len(data.test),
        **feats.summary,
    }

    sizes = [codec.attributes, *cfg.network.hidden, data.train.n_classes]
    net = nn.Network.build(
        sizes, cfg.network.activation, seed=derive_seed(cfg.seed, "init"),
        dropout_layers=tuple(cfg.network.dropout_layers),
    )
    net, history = _stage("train", nn.train, net, feats.x_train, data.train.labels, cfg.train_config(normalizer))

    metrics.update(evaluate(net, feats.x_test, data.test.labels, normalizer, data.train.n_classes))
    metrics["loss_curve"] = history.loss
    metrics["epochs"] = history.epochs
    metrics["architecture"] = sizes
    metrics["wall_clock_s"] = time.perf_counter() - started

    if write:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        nn.save_checkpoint(net, out / "model.ckpt", normalizer)
        (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2))
        (out / "metrics.json").write_text(json.dumps(metrics, indent=2))
    return metrics


def evaluate_checkpoint(cfg: ExperimentConfig, checkpoint) -> dict:
    """Score a saved model on the config's test part, regenerating its NDBs in negdl mode."""
    net, header = _stage("load", nn.load_checkpoint, checkpoint)
    data = _stage("load", load_data, cfg)
    if net.input_dim != data.test.codec.attributes:
        raise PipelineError("eval", ValueError(
            f"model expects {net.input_dim} features, dataset has {data.test.codec.attributes}"
        ))
    feats = build_features(cfg, data, parts=("test",))
    metrics = {"mode": cfg.mode, "seed": cfg.seed, "n_test": len(data.test), **feats.summary}
    metrics.update(evaluate(net, feats.x_test, data.test.labels, header["normalizer"], net.output_dim))
    return metrics


SWEEP_FIELDS = ["preset", "p_diff", "abs_p_diff1_minus_half", "accuracy", "mean_G"]


def run_sweep(cfg: ExperimentConfig, presets, write: bool = True) -> list[dict]:
    """One NegDL experiment per preset; rows for ``sweep.csv``."""
    presets = list(presets)
    if not presets:
        raise ConfigError("presets: need at least one preset")
    rows = []
    for name in presets:
        sub = ExperimentConfig.from_dict({**cfg.to_dict(), "mode": "negdl", "out": str(Path(cfg.out) / name)})
        sub.qk.preset, sub.qk.q = name, None
        sub.validate()
        metrics = run_experiment(sub, write=write)
        p_diff = metrics["p_diff"]
        rows.append({
            "preset": name,
            "p_diff": " ".join(f"{v:.4f}" for v in p_diff),
            "abs_p_diff1_minus_half": abs(p_diff[0] - 0.5),
            "accuracy": metrics["test_accuracy"],
            "mean_G": metrics["security"]["mean_G"],
        })
        log.info("%s: accuracy %.4f", name, metrics["test_accuracy"])
    if write:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "sweep.csv", "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=SWEEP_FIELDS)
            writer.writeheader()
            writer.writerows(rows)
    return rows
