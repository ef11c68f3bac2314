"""Experiment orchestration: seeded pipelines, sweeps, reports, trade-offs.

One pipeline run (one seed, one model variant) partitions the data, trains a
target and a shadow network under identical conditions on their own
quarters, trains the discriminator grid against the shadow, attacks the
target, and records test accuracy, attack precision, and defense.  A sweep
repeats this over a list of sparsity variants and seeds, aggregates
mean/std per variant, and feeds the accuracy-versus-defense trade-off
analysis and figure.
"""

from __future__ import annotations

import configparser
import csv
import json
import traceback
from dataclasses import asdict, dataclass, field

import numpy as np

from sparsemia import datasets, mia
from sparsemia.imp import ImpSchedule, imp_run
from sparsemia.nn import TrainConfig, count_params, models, train
from sparsemia.nn.network import accuracy
from sparsemia.rng import seed_stream

__all__ = [
    "ExperimentConfig",
    "Level",
    "SeedRecord",
    "LevelAggregate",
    "ExperimentReport",
    "TradeoffResult",
    "load_config",
    "save_config",
    "parse_level",
    "overfit_benchmark_config",
    "run_experiment",
    "run_sweep",
    "compute_tradeoff",
    "spearman_rho",
    "emit_figure",
]


@dataclass
class ExperimentConfig:
    # dataset
    dataset_kind: str = "blobs"  # blobs | spirals | image | cifar10
    dataset_size: int = 2000
    classes: int = 4
    noise: float = 4.0
    dataset_dim: int = 8
    dataset_seed: int = 0
    dataset_path: str = ""
    # model
    model: str = "dense"  # dense | imp:<rounds> | butterfly:<segments>:<depth>
    hidden: tuple = (64, 64)
    # training
    epochs: int = 60
    batch_size: int = 64
    initial_lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 0.0
    lr_drop_points: tuple = (0.5, 0.75)
    lr_drop_factor: float = 10.0
    augment: bool = False
    # attack
    eps: float = 0.001
    mc_samples: int = 5
    discriminator_epochs: int = 80
    # run
    seeds: tuple = (0,)
    output_dir: str = ""
    sweep_levels: tuple = ()

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        self.seeds = tuple(int(s) for s in self.seeds)
        self.lr_drop_points = tuple(float(f) for f in self.lr_drop_points)
        self.sweep_levels = tuple(self.sweep_levels)
        if not self.seeds:
            raise ValueError("at least one seed is required")
        parse_level(self.model)  # validates the model spec

    def train_config(self, seed):
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            initial_lr=self.initial_lr,
            momentum=self.momentum,
            weight_decay=self.weight_decay,
            lr_drop_points=self.lr_drop_points,
            lr_drop_factor=self.lr_drop_factor,
            seed=seed,
            augment=self.augment,
        )


def overfit_benchmark_config(seeds=(0, 1, 2, 3, 4)):
    """The desk-scale overfit benchmark: a small MLP memorizing 500 samples.

    Gaussian blob classes overlap heavily in the first two coordinates while
    six pure-noise coordinates make every sample individually memorizable, so
    the dense model reaches near-perfect training accuracy with a large
    generalization gap and leaks membership.  Sparse variants lose the
    capacity to memorize, which is exactly the trend the sweep measures.
    """
    return ExperimentConfig(
        dataset_kind="blobs", dataset_size=2000, classes=4, noise=4.0,
        dataset_dim=8, dataset_seed=0,
        hidden=(32, 32),
        epochs=200, batch_size=64, initial_lr=0.03, momentum=0.9,
        weight_decay=0.0, lr_drop_points=(0.5, 0.75),
        eps=0.001, mc_samples=5, discriminator_epochs=80,
        seeds=tuple(seeds),
        sweep_levels=("dense", "imp:1", "imp:3", "imp:5", "imp:8",
                      "butterfly:1:2", "butterfly:1:3"),
    )


@dataclass(frozen=True)
class Level:
    """One sparsity variant: dense, imp:<rounds>, or butterfly:<segments>:<depth>."""

    kind: str
    rounds: int = 0
    segments: int = 0
    depth: int = 0

    @property
    def label(self):
        if self.kind == "dense":
            return "dense"
        if self.kind == "imp":
            return f"imp:{self.rounds}"
        return f"butterfly:{self.segments}:{self.depth}"


def parse_level(text):
    parts = text.strip().split(":")
    if parts[0] == "dense" and len(parts) == 1:
        return Level(kind="dense")
    if parts[0] == "imp" and len(parts) == 2:
        rounds = int(parts[1])
        if rounds < 0:
            raise ValueError(f"imp rounds must be >= 0, got {rounds}")
        return Level(kind="imp", rounds=rounds)
    if parts[0] == "butterfly" and len(parts) == 3:
        segments, depth = int(parts[1]), int(parts[2])
        if segments < 1 or depth < 1:
            raise ValueError(f"invalid butterfly spec {text!r}")
        return Level(kind="butterfly", segments=segments, depth=depth)
    raise ValueError(f"unrecognized model spec {text!r}")


# -- configuration file (INI sections) ------------------------------------

_LIST_FIELDS = {"hidden", "seeds", "lr_drop_points", "sweep_levels"}
_SECTIONS = {
    "dataset": ["dataset_kind", "dataset_size", "classes", "noise",
                "dataset_dim", "dataset_seed", "dataset_path"],
    "model": ["model", "hidden"],
    "train": ["epochs", "batch_size", "initial_lr", "momentum", "weight_decay",
              "lr_drop_points", "lr_drop_factor", "augment"],
    "mia": ["eps", "mc_samples", "discriminator_epochs"],
    "run": ["seeds", "output_dir", "sweep_levels"],
}


def save_config(config, path):
    parser = configparser.ConfigParser()
    for section, keys in _SECTIONS.items():
        parser[section] = {}
        for key in keys:
            value = getattr(config, key)
            if key in _LIST_FIELDS:
                value = ",".join(str(v) for v in value)
            parser[section][key] = str(value)
    with open(path, "w") as f:
        parser.write(f)


def load_config(path):
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise FileNotFoundError(f"config file not found: {path}")
    defaults = ExperimentConfig()
    kwargs = {}
    for section, keys in _SECTIONS.items():
        if section not in parser:
            continue
        for key in keys:
            if key not in parser[section]:
                continue
            raw = parser[section][key].strip()
            default = getattr(defaults, key)
            if key in _LIST_FIELDS:
                items = [v.strip() for v in raw.split(",") if v.strip()]
                if key == "sweep_levels":
                    kwargs[key] = tuple(items)
                elif key == "lr_drop_points":
                    kwargs[key] = tuple(float(v) for v in items)
                else:
                    kwargs[key] = tuple(int(v) for v in items)
            elif isinstance(default, bool):
                kwargs[key] = raw.lower() in ("1", "true", "yes", "on")
            elif isinstance(default, int):
                kwargs[key] = int(raw)
            elif isinstance(default, float):
                kwargs[key] = float(raw)
            else:
                kwargs[key] = raw
    return ExperimentConfig(**kwargs)


# -- records and report -----------------------------------------------------


@dataclass
class SeedRecord:
    level: str
    seed: int
    sparsity: float = float("nan")
    test_accuracy: float = float("nan")
    precision: float = float("nan")
    defense: float = float("nan")
    discriminator: dict = field(default_factory=dict)
    error: str = ""

    @property
    def failed(self):
        return bool(self.error)


@dataclass
class LevelAggregate:
    level: str
    sparsity: float
    seeds: int
    accuracy_mean: float
    accuracy_std: float
    precision_mean: float
    precision_std: float
    defense_mean: float
    defense_std: float
    significant: bool = False


@dataclass
class ExperimentReport:
    records: list = field(default_factory=list)
    aggregates: list = field(default_factory=list)
    tradeoff: dict = None  # slope/ratio over the default sparsity window

    def level_aggregate(self, label):
        for agg in self.aggregates:
            if agg.level == label:
                return agg
        raise KeyError(f"no aggregate for level {label!r}")

    def to_dict(self):
        return {
            "records": [asdict(r) for r in self.records],
            "aggregates": [asdict(a) for a in self.aggregates],
            "tradeoff": self.tradeoff,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            records=[SeedRecord(**r) for r in data["records"]],
            aggregates=[LevelAggregate(**a) for a in data["aggregates"]],
            tradeoff=data.get("tradeoff"),
        )

    def save_json(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)

    @classmethod
    def load_json(cls, path):
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def save_csv(self, path):
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["level", "seed", "sparsity", "test_accuracy",
                             "precision", "defense", "error"])
            for r in self.records:
                writer.writerow([r.level, r.seed, repr(r.sparsity),
                                 repr(r.test_accuracy), repr(r.precision),
                                 repr(r.defense), r.error])


# -- pipeline ---------------------------------------------------------------


def build_dataset(config):
    if config.dataset_kind in ("blobs", "spirals"):
        return datasets.make_synthetic(
            config.dataset_kind, config.dataset_size, config.classes,
            noise=config.noise, seed=config.dataset_seed, dim=config.dataset_dim,
        )
    if config.dataset_kind == "image":
        return datasets.normalize(datasets.load_image_dataset(config.dataset_path))
    if config.dataset_kind == "cifar10":
        return datasets.normalize(datasets.load_cifar10(config.dataset_path))
    raise ValueError(f"unknown dataset kind {config.dataset_kind!r}")


def _build_network(config, level, dataset, rng):
    input_dim = int(np.prod(dataset.inputs.shape[1:]))
    if level.kind == "butterfly":
        return models.butterfly_mlp(
            input_dim, config.hidden, dataset.class_count,
            segments=level.segments, depth=level.depth, rng=rng,
        )
    return models.mlp(input_dim, config.hidden, dataset.class_count, rng=rng)


def _dense_param_total(config, dataset):
    ref = models.mlp(int(np.prod(dataset.inputs.shape[1:])), config.hidden,
                     dataset.class_count, rng=np.random.default_rng(0))
    return count_params(ref)[0]


def _train_side(config, level, seed, dataset, train_idx, val_idx, role):
    """Train one side (target or shadow); returns the trained network."""
    net = _build_network(config, level, dataset,
                         seed_stream(seed, f"{level.label}-{role}-init"))
    train_cfg = config.train_config(
        seed=int(seed_stream(seed, f"{level.label}-{role}-train").integers(2 ** 31))
    )
    train_set = dataset.subset(train_idx)
    val_set = dataset.subset(val_idx)
    augment_fn = datasets.augment if config.augment and dataset.is_image else None
    if level.kind == "imp":
        results = imp_run(net, train_set, val_set, train_cfg,
                          ImpSchedule(rounds=level.rounds), augment_fn=augment_fn)
        sparsity = results[-1][0]
    else:
        model = train(net, train_set, val_set, train_cfg, augment_fn=augment_fn)
        model.restore_best()
        sparsity = 1.0
    return net, sparsity


def run_pipeline(config, level, seed, dataset, dense_total):
    """Full single-seed pipeline; returns a SeedRecord."""
    split = mia.partition(len(dataset), master_seed=seed)
    # the validation subsets live inside the train quarters: every train-side
    # sample is a member, validation only steers epoch selection
    target_net, target_sparsity = _train_side(
        config, level, seed, dataset, split.target_train, split.target_val, "target"
    )
    shadow_net, _ = _train_side(
        config, level, seed, dataset, split.shadow_train, split.shadow_val, "shadow"
    )

    grid = mia.train_discriminators(
        shadow_net.predict_proba, dataset, split,
        seed=int(seed_stream(seed, f"{level.label}-discriminator").integers(2 ** 31)),
        eps=config.eps, mc_samples=config.mc_samples,
        epochs=config.discriminator_epochs,
    )
    outcome = mia.attack(
        grid, target_net.predict_proba, dataset, split,
        seed=int(seed_stream(seed, f"{level.label}-attack").integers(2 ** 31)),
        eps=config.eps, mc_samples=config.mc_samples,
    )

    if level.kind == "butterfly":
        sparsity = count_params(target_net)[0] / dense_total
    elif level.kind == "imp":
        sparsity = target_sparsity
    else:
        sparsity = 1.0
    test_acc = accuracy(target_net, dataset.subset(split.target_test))
    return SeedRecord(
        level=level.label, seed=seed, sparsity=sparsity,
        test_accuracy=test_acc, precision=outcome.precision,
        defense=outcome.defense, discriminator=outcome.discriminator,
    )


def _aggregate(records, dense_label="dense"):
    by_level = {}
    for r in records:
        if not r.failed:
            by_level.setdefault(r.level, []).append(r)
    aggregates = []
    for label, recs in by_level.items():
        acc = np.array([r.test_accuracy for r in recs])
        pre = np.array([r.precision for r in recs])
        dfn = np.array([r.defense for r in recs])
        aggregates.append(LevelAggregate(
            level=label,
            sparsity=float(np.mean([r.sparsity for r in recs])),
            seeds=len(recs),
            accuracy_mean=float(acc.mean()), accuracy_std=float(acc.std()),
            precision_mean=float(pre.mean()), precision_std=float(pre.std()),
            defense_mean=float(dfn.mean()), defense_std=float(dfn.std()),
        ))
    aggregates.sort(key=lambda a: -a.sparsity)
    dense = next((a for a in aggregates if a.level == dense_label), None)
    if dense is not None:
        for agg in aggregates:
            if agg is dense:
                continue
            lo, hi = agg.defense_mean - agg.defense_std, agg.defense_mean + agg.defense_std
            dlo, dhi = (dense.defense_mean - dense.defense_std,
                        dense.defense_mean + dense.defense_std)
            agg.significant = hi < dlo or lo > dhi
    return aggregates


def run_levels(config, levels):
    """Run every (level, seed) pipeline; failures abort only their own seed."""
    dataset = build_dataset(config)
    dense_total = _dense_param_total(config, dataset)
    records = []
    for level in levels:
        for seed in config.seeds:
            try:
                records.append(run_pipeline(config, level, seed, dataset, dense_total))
            except Exception as exc:  # noqa: BLE001 - diagnostic is recorded
                records.append(SeedRecord(
                    level=level.label, seed=seed,
                    error=f"{type(exc).__name__}: {exc}",
                ))
                traceback.print_exc()
    return ExperimentReport(records=records, aggregates=_aggregate(records))


def run_experiment(config):
    """Run the configured model spec over all seeds."""
    return run_levels(config, [parse_level(config.model)])


def run_sweep(config):
    """Run every level in config.sweep_levels over all seeds.

    When the sweep contains a dense reference and at least two sparse
    levels, the report also carries the trade-off fit over the window
    spanning all sparse levels.
    """
    if not config.sweep_levels:
        raise ValueError("config.sweep_levels is empty")
    report = run_levels(config, [parse_level(t) for t in config.sweep_levels])
    sparse = [a for a in report.aggregates if a.level != "dense"]
    if len(sparse) >= 2 and any(a.level == "dense" for a in report.aggregates):
        window = (min(a.sparsity for a in sparse), max(a.sparsity for a in sparse))
        result = compute_tradeoff(report, window)
        report.tradeoff = {
            "window": [window[0], window[1]],
            "slope": result.slope,
            "ratio": result.ratio,
            "points": result.points,
            "excluded": result.excluded,
        }
    return report


# -- trade-off analysis ------------------------------------------------------


@dataclass
class TradeoffResult:
    slope: float
    ratio: float
    points: int
    excluded: list = field(default_factory=list)


def compute_tradeoff(report, sparsity_window, dense_label="dense"):
    """Fit defense against accuracy over a sparsity window.

    The slope is the least-squares fit of mean defense on mean accuracy over
    the windowed levels.  The ratio is the relative defense gain per relative
    accuracy loss versus the dense reference, averaged over the windowed
    levels; levels with accuracy equal to dense are excluded and flagged.
    """
    lo, hi = sparsity_window
    dense = report.level_aggregate(dense_label)
    window = [a for a in report.aggregates
              if a.level != dense_label and lo <= a.sparsity <= hi]
    if len(window) < 2:
        raise ValueError("sparsity window must contain at least 2 levels")
    acc = np.array([a.accuracy_mean for a in window])
    dfn = np.array([a.defense_mean for a in window])
    acc_var = ((acc - acc.mean()) ** 2).sum()
    if acc_var == 0.0:
        slope = float("nan")  # all windowed accuracies identical; no fit exists
    else:
        slope = float(((acc - acc.mean()) * (dfn - dfn.mean())).sum() / acc_var)
    ratios = []
    excluded = []
    for agg in window:
        if agg.accuracy_mean == dense.accuracy_mean:
            excluded.append(agg.level)
            continue
        gain = abs(agg.defense_mean - dense.defense_mean) / dense.defense_mean
        loss = abs(agg.accuracy_mean - dense.accuracy_mean) / dense.accuracy_mean
        ratios.append(gain / loss)
    ratio = float(np.mean(ratios)) if ratios else float("nan")
    return TradeoffResult(slope=slope, ratio=ratio, points=len(window),
                          excluded=excluded)


def spearman_rho(x, y):
    """Spearman rank correlation with average ranks on ties."""
    def ranks(v):
        v = np.asarray(v, dtype=np.float64)
        order = np.argsort(v, kind="stable")
        r = np.empty(len(v))
        r[order] = np.arange(1, len(v) + 1)
        for value in np.unique(v):
            hit = v == value
            if hit.sum() > 1:
                r[hit] = r[hit].mean()
        return r

    rx, ry = ranks(x), ranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = np.sqrt((rx ** 2).sum() * (ry ** 2).sum())
    if denom == 0:
        return 0.0
    return float((rx * ry).sum() / denom)


def emit_figure(report, path):
    """SVG scatter of mean defense vs mean accuracy with std error bars.

    Points are annotated with the nonzero-weight percentage; a least-squares
    line is overlaid when at least two levels are present.  An empty report
    is an error and no file is created.
    """
    aggregates = report.aggregates
    if not aggregates:
        raise ValueError("cannot plot an empty report")
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 5))
    for agg in aggregates:
        marker = "*" if agg.level.startswith("imp") else ("o" if agg.level.startswith("butterfly") else "s")
        color = plt.cm.viridis(1.0 - agg.sparsity)
        ax.errorbar(agg.accuracy_mean, agg.defense_mean,
                    xerr=agg.accuracy_std, yerr=agg.defense_std,
                    marker=marker, markersize=9, color=color, capsize=3,
                    linestyle="none", gid=f"level-{agg.level}")
        ax.annotate(f"{100 * agg.sparsity:.1f}%",
                    (agg.accuracy_mean, agg.defense_mean),
                    textcoords="offset points", xytext=(6, 6), fontsize=8)
    if len(aggregates) >= 2:
        acc = np.array([a.accuracy_mean for a in aggregates])
        dfn = np.array([a.defense_mean for a in aggregates])
        coeffs = np.polyfit(acc, dfn, 1)
        xs = np.linspace(acc.min(), acc.max(), 50)
        ax.plot(xs, np.polyval(coeffs, xs), "--", color="gray", linewidth=1,
                label=f"fit slope {coeffs[0]:.2f}")
        ax.legend(loc="best", fontsize=8)
    ax.set_xlabel("test accuracy (%)")
    ax.set_ylabel("defense D = 200 - 2P")
    ax.set_title("accuracy vs defense across sparsity levels")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
