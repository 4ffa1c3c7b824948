"""Cohort sets, prototype cards, and per-patient trajectories.

All functions take records in raw (unnormalized) form and run the model's
stored normalization before scoring, so displayed statics and values stay in
their original units while predictions match the training pipeline exactly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .data import Dataset, PatientRecord
from .model import Model


class IntegrityError(RuntimeError):
    """Model provenance does not resolve against the supplied dataset."""


@dataclass
class CohortSet:
    prototype_index: int
    member_ids: list[str]
    positive_rate: float | None      # None for an empty cohort
    static_means: dict[str, float]   # empty for an empty cohort
    size: int


@dataclass
class TrajectoryEntry:
    t: int                     # prefix length, 1-based
    similarities: list[float]
    nearest: int
    risk: float


@dataclass
class PrototypeCard:
    index: int
    source_id: str
    source_statics: dict[str, float]
    source_label: int
    risk: float                # the prototype's own predicted risk y_j
    cohort: CohortSet


def _assignments(model: Model, records) -> tuple[np.ndarray, np.ndarray]:
    nearest = np.empty(len(records), dtype=int)
    risks = np.empty(len(records))
    for i, rec in enumerate(records):
        out = model.predict(model.prepare_record(rec))
        nearest[i] = out.nearest
        risks[i] = out.risk
    return nearest, risks


def build_cohorts(model: Model, ds: Dataset) -> list[CohortSet]:
    """Partition patients by most-similar prototype (ties to the lowest
    index) and summarize each cohort's statics and outcome rate."""
    nearest, _ = _assignments(model, ds.records)
    cohorts = []
    for j in range(model.arch.k):
        members = [i for i in range(len(ds.records)) if nearest[i] == j]
        if members:
            labels = [ds.records[i].label for i in members]
            statics = np.stack([ds.records[i].static for i in members])
            means = {name: float(statics[:, m].mean())
                     for m, name in enumerate(ds.static_names)}
            cohorts.append(CohortSet(j, [ds.records[i].id for i in members],
                                     float(np.mean(labels)), means, len(members)))
        else:
            cohorts.append(CohortSet(j, [], None, {}, 0))
    return cohorts


def prototype_cards(model: Model, ds: Dataset) -> list[PrototypeCard]:
    by_id = {rec.id: rec for rec in ds.records}
    cohorts = build_cohorts(model, ds)
    risks = model.prototype_risks_raw()
    cards = []
    for j, source_id in enumerate(model.memory.source_ids):
        src = by_id.get(source_id)
        if src is None:
            raise IntegrityError(f"prototype {j} sourced from unknown patient {source_id!r}")
        statics = {name: float(v) for name, v in zip(ds.static_names, src.static)}
        cards.append(PrototypeCard(index=j, source_id=source_id, source_statics=statics,
                                   source_label=src.label, risk=float(risks[j]),
                                   cohort=cohorts[j]))
    return cards


def trajectory(model: Model, rec: PatientRecord) -> list[TrajectoryEntry]:
    """Prefix-by-prefix scoring; the final entry is bit-identical to scoring
    the whole record."""
    prepared = model.prepare_record(rec)
    outs = model.prefix_predictions(prepared)
    return [TrajectoryEntry(t=t + 1, similarities=[float(v) for v in out.similarities],
                            nearest=out.nearest, risk=out.risk)
            for t, out in enumerate(outs)]


def export_cards_csv(cards: list[PrototypeCard], static_names, path: str) -> None:
    """Typical-patient table: one row per prototype's source patient."""
    cols = ["prototype", "source_id"] + list(static_names) + ["label", "risk"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for card in cards:
            writer.writerow([card.index, card.source_id]
                            + [card.source_statics[n] for n in static_names]
                            + [card.source_label, card.risk])


def export_cohorts_csv(cohorts: list[CohortSet], static_names, path: str) -> None:
    """Cohort-statistics table: one row per cohort."""
    cols = ["prototype"] + [f"mean_{n}" for n in static_names] + ["positive_rate", "size"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for c in cohorts:
            writer.writerow([c.prototype_index]
                            + [c.static_means.get(n, "") for n in static_names]
                            + [c.positive_rate if c.positive_rate is not None else "", c.size])
