"""Training schedule: epoch loop, progressive refreshes, freeze windows,
per-epoch assign steps, checkpointing by validation AUPRC, and the
missingness experiment driver.

Schedule per epoch e (1-based):
  1. if e is a refresh epoch (and the mode keeps refreshes): re-select the
     prototypes from current embeddings, then freeze the encoder and the
     prototypes for the next F epochs so the upper network can adapt;
  2. shuffled mini-batches: forward graph, total loss, backward, Adam step;
  3. at epoch end, when unfrozen, snap each prototype to its nearest
     training embedding (assign step);
  4. evaluate on the validation set and keep the best-AUPRC snapshot.

Prototype initialization (k-means++ selection from epoch-0 embeddings) runs
before the first epoch in every mode, including the no-refresh ablation.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import data as data_mod
from . import engine
from . import memory as memory_mod
from . import objectives
from .data import ConfigurationError, Dataset
from .engine import Adam
from .metrics import auprc, auroc
from .model import Architecture, Model

log = logging.getLogger(__name__)

ABLATION_MODES = ("full", "r-", "s-", "a-")


class TrainingDivergence(RuntimeError):
    def __init__(self, epoch: int, batch: int, value: float):
        super().__init__(f"non-finite loss {value} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


@dataclass
class TrainConfig:
    k: int = 4
    hidden: int = 32
    lambda_p: float = 0.1
    lambda_d: float = 0.05
    margin: float | None = None           # default 70 / sqrt(K)
    refresh_epochs: tuple = (10, 30, 50)
    freeze_duration: int = 2
    epochs: int = 60
    batch_size: int = 64
    learning_rate: float = 1e-3
    seed: int = 0
    ablation: str = "full"
    # deviation knobs, defaults are the reference behavior
    static_activation: str = "tanh"
    similarity_transform: str = "raw"
    lp_detach_risks: bool = False

    def __post_init__(self):
        if self.k < 2:
            raise ConfigurationError(f"K must be >= 2, got {self.k}")
        if self.hidden < 1:
            raise ConfigurationError(f"H must be positive, got {self.hidden}")
        if self.ablation not in ABLATION_MODES:
            raise ConfigurationError(f"unknown ablation mode {self.ablation!r}")
        if self.refresh_epochs and max(self.refresh_epochs) >= self.epochs:
            raise ConfigurationError(
                f"refresh epochs {self.refresh_epochs} must lie before epoch {self.epochs}")

    def resolved_margin(self) -> float:
        return self.margin if self.margin is not None else objectives.default_margin(self.k)


@dataclass
class EvalReport:
    auprc: float
    auroc: float
    best_epoch: int = 0
    history: list[dict] = field(default_factory=list)  # per-epoch losses + val metrics


def _effective(config: TrainConfig) -> TrainConfig:
    if config.ablation == "s-":
        return replace(config, lambda_p=0.0, lambda_d=0.0)
    return config


def build_model(config: TrainConfig, ds: Dataset) -> Model:
    arch = Architecture(
        indicator_names=list(ds.indicator_names), static_names=list(ds.static_names),
        k=config.k, hidden=config.hidden, static_activation=config.static_activation,
        similarity_transform=config.similarity_transform,
        head="similarity" if config.ablation == "a-" else "full")
    m = Model(arch, seed=config.seed)
    m.stats = ds.stats
    return m


def evaluate(model: Model, ds: Dataset) -> tuple[float, float]:
    """(AUPRC, AUROC) of the array-path predictions over a dataset."""
    scores = np.array([model.predict(rec).risk for rec in ds.records])
    labels = ds.labels()
    return auprc(labels, scores), auroc(labels, scores)


def _batch_loss(model: Model, records, config: TrainConfig):
    l_c = objectives.bce_batch(model.batch_risk_node(records),
                               np.array([rec.label for rec in records]))
    risks = objectives.prototype_risks(model.memory.nodes, model.risk_from_status)
    l_p = objectives.separation_loss_p(risks, detach_coefficients=config.lp_detach_risks)
    l_d = objectives.separation_loss_d(model.memory.nodes, config.resolved_margin())
    return objectives.combine(l_c, l_p, l_d, config.lambda_p, config.lambda_d,
                              config.resolved_margin())


def _freeze_lower(model: Model) -> None:
    model.params.freeze(model.encoder_paths())
    model.params.freeze(model.prototype_paths())
    model.memory.frozen = True


def _unfreeze_lower(model: Model) -> None:
    model.params.unfreeze(model.encoder_paths())
    model.params.unfreeze(model.prototype_paths())
    model.memory.frozen = False


def train(config: TrainConfig, train_ds: Dataset, val_ds: Dataset,
          fidelity_hook=None) -> tuple[Model, EvalReport]:
    """Run the full schedule; returns the best-validation-AUPRC model.

    ``fidelity_hook(model, epoch, stage)`` is called after initialization
    and after every select/assign step; tests use it to audit prototype
    provenance without re-running training.
    """
    config = _effective(config)
    model = build_model(config, train_ds)
    optimizer = Adam(model.params, lr=config.learning_rate)
    refresh_set = set() if config.ablation == "r-" else set(config.refresh_epochs)

    # initial prototypes: k-means++ over epoch-0 embeddings, nearest patients
    ids, flats = model.embed_all(train_ds.records)
    memory_mod.progressive_select(model.memory, flats, ids, epoch=0, seed=config.seed)
    if fidelity_hook:
        fidelity_hook(model, 0, "init")

    rng = np.random.default_rng((config.seed, 1))
    best = EvalReport(auprc=-1.0, auroc=0.0)
    best_snapshot = None
    frozen_until = 0  # first epoch at which the lower layers thaw again

    for epoch in range(1, config.epochs + 1):
        if epoch >= frozen_until and model.memory.frozen:
            _unfreeze_lower(model)

        if epoch in refresh_set:
            ids, flats = model.embed_all(train_ds.records)
            memory_mod.progressive_select(model.memory, flats, ids,
                                          epoch=epoch, seed=config.seed)
            if fidelity_hook:
                fidelity_hook(model, epoch, "refresh")
            if config.freeze_duration > 0:
                _freeze_lower(model)
                frozen_until = epoch + config.freeze_duration

        order = rng.permutation(len(train_ds.records))
        epoch_rows = []
        n_batches = math.ceil(len(order) / config.batch_size)
        for b in range(n_batches):
            chunk = order[b * config.batch_size:(b + 1) * config.batch_size]
            records = [train_ds.records[i] for i in chunk]
            bundle = _batch_loss(model, records, config)
            if not np.isfinite(bundle.total):
                raise TrainingDivergence(epoch, b, bundle.total)
            model.params.zero_grads()
            engine.backward(bundle.node)
            optimizer.step()
            epoch_rows.append(bundle)

        if not model.memory.frozen:
            ids, flats = model.embed_all(train_ds.records)
            memory_mod.assign_step(model.memory, flats, ids)
            if fidelity_hook:
                fidelity_hook(model, epoch, "assign")

        val_auprc, val_auroc = evaluate(model, val_ds)
        row = {"epoch": epoch,
               "L_c": float(np.mean([r.l_c for r in epoch_rows])),
               "L_p": float(np.mean([r.l_p for r in epoch_rows])),
               "L_d": float(np.mean([r.l_d for r in epoch_rows])),
               "total": float(np.mean([r.total for r in epoch_rows])),
               "val_auprc": val_auprc, "val_auroc": val_auroc}
        best.history.append(row)
        log.info("epoch %d: total %.4f, val AUPRC %.4f, val AUROC %.4f",
                 epoch, row["total"], val_auprc, val_auroc)
        if val_auprc > best.auprc:
            best.auprc = val_auprc
            best.auroc = val_auroc
            best.best_epoch = epoch
            best_snapshot = model.snapshot()

    if best_snapshot is not None:
        model.restore(best_snapshot)
        model.memory.frozen = False
    return model, best


CONFIG_TAG = "ppn-config-v1"


def save_config(config: TrainConfig, path: str) -> None:
    """Flat key=value file with a version header line."""
    import dataclasses
    with open(path, "w") as fh:
        fh.write(f"# {CONFIG_TAG}\n")
        for key, value in dataclasses.asdict(config).items():
            if key == "refresh_epochs":
                value = ",".join(str(e) for e in value)
            elif value is None:
                value = ""
            fh.write(f"{key} = {value}\n")


def load_config(path: str) -> TrainConfig:
    with open(path) as fh:
        first = fh.readline()
        if CONFIG_TAG not in first:
            raise ConfigurationError(f"{path}: expected {CONFIG_TAG!r} header line")
        raw = {}
        for line_no, line in enumerate(fh, start=2):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigurationError(f"{path}:{line_no}: expected key = value")
            key, value = (part.strip() for part in line.split("=", 1))
            raw[key] = value

    kwargs = {}
    casts = {"k": int, "hidden": int, "lambda_p": float, "lambda_d": float,
             "freeze_duration": int, "epochs": int, "batch_size": int,
             "learning_rate": float, "seed": int, "ablation": str,
             "static_activation": str, "similarity_transform": str}
    for key, value in raw.items():
        if key == "margin":
            kwargs[key] = float(value) if value else None
        elif key == "refresh_epochs":
            kwargs[key] = tuple(int(e) for e in value.split(",") if e.strip()) if value else ()
        elif key == "lp_detach_risks":
            kwargs[key] = value.lower() in ("true", "1", "yes")
        elif key in casts:
            try:
                kwargs[key] = casts[key](value)
            except ValueError:
                raise ConfigurationError(f"{path}: bad value {value!r} for {key}") from None
        else:
            raise ConfigurationError(f"{path}: unknown config key {key!r}")
    return TrainConfig(**kwargs)


def write_metrics_csv(report: EvalReport, path: str) -> None:
    import csv
    cols = ["epoch", "L_c", "L_p", "L_d", "total", "val_auprc", "val_auroc"]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols)
        writer.writeheader()
        for row in report.history:
            writer.writerow(row)


def run_missingness_experiment(model: Model, raw_test_ds: Dataset, rates,
                               axis: str = "visit", seeds=(0, 1, 2)) -> list[dict]:
    """AUPRC per retention rate, mean and std over seeded maskers.

    Masking happens on raw records (so dropped cells are re-imputed, not
    frozen at their old fill values); normalization follows via the model's
    stored stats.
    """
    if axis == "visit":
        masker = data_mod.mask_visit_rate
    elif axis == "observation":
        masker = data_mod.mask_observation_rate
    else:
        raise ConfigurationError(f"unknown missingness axis {axis!r}")
    table = []
    for rate in rates:
        vals = []
        for seed in seeds:
            masked = masker(raw_test_ds, rate, seed=seed)
            prepared = Dataset([model.prepare_record(r) for r in masked.records],
                               masked.indicator_names, masked.static_names)
            vals.append(evaluate(model, prepared)[0])
        table.append({"rate": rate, "auprc_mean": float(np.mean(vals)),
                      "auprc_std": float(np.std(vals))})
    return table


def write_experiment_csv(table: list[dict], path: str) -> None:
    import csv
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["rate", "auprc_mean", "auprc_std"])
        writer.writeheader()
        for row in table:
            writer.writerow(row)
