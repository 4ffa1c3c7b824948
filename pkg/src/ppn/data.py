"""Patient records, dataset ingestion, normalization, splitting, and the
visit/observation maskers used by the sparsity experiments.

Two on-disk formats, both tagged ``ppn-data-v1``:

* JSONL: first line is a metadata object
  ``{"format": "ppn-data-v1", "indicators": [...], "statics": [...]}``,
  then one patient object per line with fields ``id``, ``visits`` (list of
  ``{"values": [...], "mask": [...]}``; null values mean unobserved),
  ``static``, ``label``, and optional ``meta``.
* CSV: a leading ``# ppn-data-v1`` comment line, a header row
  ``patient_id,visit_idx,<indicators...>,<statics...>,label``, one row per
  visit; empty indicator cells mean unobserved, statics and label repeat on
  every row of a patient.

Unobserved dynamic cells hold NaN in memory and are only ever read through
the mask.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

FORMAT_TAG = "ppn-data-v1"


class IngestionError(ValueError):
    """Malformed dataset file or record."""


@dataclass
class PatientRecord:
    id: str
    dynamic: np.ndarray      # (T, N) float64; NaN where mask is False until imputation
    mask: np.ndarray         # (T, N) bool, True = observed
    static: np.ndarray       # (M,) float64
    label: int
    meta: dict = field(default_factory=dict)  # evaluation-only metadata, never model input

    def __post_init__(self):
        self.dynamic = np.asarray(self.dynamic, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        self.static = np.asarray(self.static, dtype=np.float64)
        if self.dynamic.ndim != 2 or self.dynamic.shape[0] < 1:
            raise IngestionError(f"record {self.id!r}: needs at least one visit")
        if self.mask.shape != self.dynamic.shape:
            raise IngestionError(f"record {self.id!r}: mask shape {self.mask.shape} "
                                 f"!= dynamic shape {self.dynamic.shape}")
        if self.label not in (0, 1):
            raise IngestionError(f"record {self.id!r}: label must be 0 or 1, got {self.label!r}")

    @property
    def n_visits(self) -> int:
        return self.dynamic.shape[0]


@dataclass
class NormalizationStats:
    mean: np.ndarray         # (N,) per-indicator, observed cells of the training split
    std: np.ndarray          # (N,) constant columns get std 1
    static_mean: np.ndarray  # (M,)
    static_std: np.ndarray   # (M,)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist(),
                "static_mean": self.static_mean.tolist(), "static_std": self.static_std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationStats":
        return cls(np.array(d["mean"]), np.array(d["std"]),
                   np.array(d["static_mean"]), np.array(d["static_std"]))


@dataclass
class Dataset:
    records: list[PatientRecord]
    indicator_names: list[str]
    static_names: list[str]
    stats: NormalizationStats | None = None

    def __post_init__(self):
        n, m = len(self.indicator_names), len(self.static_names)
        for rec in self.records:
            if rec.dynamic.shape[1] != n:
                raise IngestionError(f"record {rec.id!r}: {rec.dynamic.shape[1]} indicators, expected {n}")
            if rec.static.shape[0] != m:
                raise IngestionError(f"record {rec.id!r}: {rec.static.shape[0]} statics, expected {m}")

    def __len__(self) -> int:
        return len(self.records)

    def labels(self) -> np.ndarray:
        return np.array([r.label for r in self.records])


# ---------------------------------------------------------------------------
# io


def _float_cell(text: str, where: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise IngestionError(f"{where}: cannot parse {text!r} as a number") from None


def save_dataset(ds: Dataset, path: str, format: str | None = None) -> None:
    fmt = format or ("csv" if str(path).endswith(".csv") else "jsonl")
    if fmt == "jsonl":
        _save_jsonl(ds, path)
    elif fmt == "csv":
        _save_csv(ds, path)
    else:
        raise IngestionError(f"unknown dataset format {fmt!r}")


def load_dataset(path: str, format: str | None = None) -> Dataset:
    fmt = format or ("csv" if str(path).endswith(".csv") else "jsonl")
    if fmt == "jsonl":
        return _load_jsonl(path)
    if fmt == "csv":
        return _load_csv(path)
    raise IngestionError(f"unknown dataset format {fmt!r}")


def record_to_dict(rec: PatientRecord) -> dict:
    visits = []
    for t in range(rec.n_visits):
        values = [rec.dynamic[t, j] if rec.mask[t, j] else None
                  for j in range(rec.dynamic.shape[1])]
        visits.append({"values": values, "mask": rec.mask[t].tolist()})
    obj = {"id": rec.id, "visits": visits,
           "static": rec.static.tolist(), "label": int(rec.label)}
    if rec.meta:
        obj["meta"] = rec.meta
    return obj


def record_from_dict(obj: dict, n_indicators: int, fallback_id: str = "anon") -> PatientRecord:
    """Build a record from its wire/file form; null values mean unobserved."""
    rid = str(obj.get("id", fallback_id))
    visits = obj.get("visits", [])
    if not visits:
        raise IngestionError(f"record {rid!r}: no visits")
    dyn = np.full((len(visits), n_indicators), np.nan)
    mask = np.zeros((len(visits), n_indicators), dtype=bool)
    for t, visit in enumerate(visits):
        values = visit["values"]
        if len(values) != n_indicators:
            raise IngestionError(f"record {rid!r}: visit {t} has {len(values)} values, "
                                 f"expected {n_indicators}")
        vmask = visit.get("mask")
        if vmask is not None and len(vmask) != n_indicators:
            raise IngestionError(f"record {rid!r}: visit {t} mask length {len(vmask)}")
        for j, val in enumerate(values):
            observed = val is not None if vmask is None else bool(vmask[j])
            if observed and val is None:
                raise IngestionError(f"record {rid!r}: visit {t} marks indicator {j} "
                                     "observed but value is null")
            if observed:
                dyn[t, j] = float(val)
                mask[t, j] = True
    label = obj.get("label", 0)
    if label not in (0, 1):
        raise IngestionError(f"record {rid!r}: label must be 0 or 1, got {label!r}")
    return PatientRecord(rid, dyn, mask, np.array(obj["static"], dtype=np.float64),
                         int(label), meta=obj.get("meta", {}))


def _save_jsonl(ds: Dataset, path: str) -> None:
    with open(path, "w") as fh:
        header = {"format": FORMAT_TAG, "indicators": ds.indicator_names,
                  "statics": ds.static_names}
        fh.write(json.dumps(header) + "\n")
        for rec in ds.records:
            fh.write(json.dumps(record_to_dict(rec)) + "\n")


def _load_jsonl(path: str) -> Dataset:
    with open(path) as fh:
        first = fh.readline()
        try:
            header = json.loads(first)
        except json.JSONDecodeError:
            raise IngestionError(f"{path}: missing {FORMAT_TAG} metadata line") from None
        if header.get("format") != FORMAT_TAG:
            raise IngestionError(f"{path}: expected format tag {FORMAT_TAG!r}, "
                                 f"got {header.get('format')!r}")
        indicators = list(header["indicators"])
        statics = list(header["statics"])
        records = []
        for line_no, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            obj = json.loads(line)
            if "label" not in obj:
                raise IngestionError(f"{path}:{line_no}: record without a label")
            records.append(record_from_dict(obj, len(indicators), fallback_id=f"line{line_no}"))
    return Dataset(records, indicators, statics)


def _save_csv(ds: Dataset, path: str) -> None:
    with open(path, "w", newline="") as fh:
        # the statics count rides on the version line; the header alone cannot
        # say where indicator columns end and static columns begin
        fh.write(f"# {FORMAT_TAG} statics={len(ds.static_names)}\n")
        writer = csv.writer(fh)
        writer.writerow(["patient_id", "visit_idx"] + ds.indicator_names
                        + ds.static_names + ["label"])
        for rec in ds.records:
            statics = [repr(v) for v in rec.static.tolist()]
            for t in range(rec.n_visits):
                row = [rec.id, t]
                row += [repr(float(rec.dynamic[t, j])) if rec.mask[t, j] else ""
                        for j in range(rec.dynamic.shape[1])]
                row += statics + [int(rec.label)]
                writer.writerow(row)


def _load_csv(path: str) -> Dataset:
    with open(path) as fh:
        first = fh.readline()
        if FORMAT_TAG not in first:
            raise IngestionError(f"{path}: expected leading {FORMAT_TAG!r} comment line")
        n_static = None
        for token in first.split():
            if token.startswith("statics="):
                n_static = int(token.split("=", 1)[1])
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError(f"{path}: missing header row") from None
        if header[:2] != ["patient_id", "visit_idx"] or header[-1] != "label":
            raise IngestionError(f"{path}: malformed header {header!r}")
        names = header[2:-1]
        rows_by_patient: dict[str, list] = {}
        for row in reader:
            if not row:
                continue
            if len(row) != len(header):
                raise IngestionError(f"record {row[0]!r}: row has {len(row)} columns, "
                                     f"expected {len(header)}")
            rows_by_patient.setdefault(row[0], []).append(row)
    return _assemble_csv(rows_by_patient, names, n_static)


def _assemble_csv(rows_by_patient: dict[str, list], names: list[str],
                  n_static: int | None) -> Dataset:
    if n_static is None:
        # files written elsewhere may omit the statics count; fall back to the
        # repetition rule (statics repeat verbatim and non-empty per patient),
        # scanning from the right
        n_static = 0
        for j in range(len(names) - 1, -1, -1):
            col = 2 + j
            constant = all(len({row[col] for row in rows}) == 1 and rows[0][col] != ""
                           for rows in rows_by_patient.values())
            if constant:
                n_static = len(names) - j
            else:
                break
    indicators = names[:len(names) - n_static]
    statics = names[len(names) - n_static:]

    records = []
    for pid, rows in rows_by_patient.items():
        rows.sort(key=lambda r: int(r[1]))
        t_count = len(rows)
        dyn = np.full((t_count, len(indicators)), np.nan)
        mask = np.zeros((t_count, len(indicators)), dtype=bool)
        for t, row in enumerate(rows):
            for j in range(len(indicators)):
                cell = row[2 + j]
                if cell != "":
                    dyn[t, j] = _float_cell(cell, f"record {pid!r} visit {t}")
                    mask[t, j] = True
        static_cells = rows[0][2 + len(indicators):-1]
        static = np.array([_float_cell(c, f"record {pid!r} statics") for c in static_cells])
        label_text = rows[0][-1]
        if label_text not in ("0", "1"):
            raise IngestionError(f"record {pid!r}: label must be 0 or 1, got {label_text!r}")
        for row in rows:
            if row[-1] != label_text or row[2 + len(indicators):-1] != static_cells:
                raise IngestionError(f"record {pid!r}: statics/label differ across rows")
        records.append(PatientRecord(pid, dyn, mask, static, int(label_text)))
    return Dataset(records, indicators, statics)


# ---------------------------------------------------------------------------
# normalization and imputation


def compute_stats(ds: Dataset) -> NormalizationStats:
    """Per-indicator mean/std over observed cells; call on the training split."""
    n = len(ds.indicator_names)
    total = np.zeros(n)
    sq = np.zeros(n)
    count = np.zeros(n)
    for rec in ds.records:
        vals = np.where(rec.mask, rec.dynamic, 0.0)
        total += vals.sum(axis=0)
        sq += (vals * vals).sum(axis=0)
        count += rec.mask.sum(axis=0)
    safe = np.maximum(count, 1)
    mean = total / safe
    var = np.maximum(sq / safe - mean * mean, 0.0)
    std = np.sqrt(var)
    std[std <= 0.0] = 1.0
    mean[count == 0] = 0.0

    statics = np.stack([rec.static for rec in ds.records])
    s_mean = statics.mean(axis=0)
    s_std = statics.std(axis=0)
    s_std[s_std <= 0.0] = 1.0
    return NormalizationStats(mean, std, s_mean, s_std)


def normalize_record(rec: PatientRecord, stats: NormalizationStats) -> PatientRecord:
    """Z-score observed cells; fill unobserved ones by carrying the last
    observation forward within the patient, falling back to the training mean
    (z-score 0).  The mask is untouched."""
    z = (rec.dynamic - stats.mean) / stats.std
    filled = np.zeros_like(z)
    last = np.zeros(z.shape[1])
    seen = np.zeros(z.shape[1], dtype=bool)
    for t in range(z.shape[0]):
        row_mask = rec.mask[t]
        last = np.where(row_mask, z[t], last)
        seen |= row_mask
        filled[t] = np.where(row_mask, z[t], np.where(seen, last, 0.0))
    static_z = (rec.static - stats.static_mean) / stats.static_std
    return replace(rec, dynamic=filled, mask=rec.mask.copy(), static=static_z)


def normalize_and_impute(ds: Dataset, stats: NormalizationStats) -> Dataset:
    out = [normalize_record(rec, stats) for rec in ds.records]
    return Dataset(out, ds.indicator_names, ds.static_names, stats=stats)


def prepare(ds: Dataset, stats: NormalizationStats | None = None):
    """Convenience: compute stats (if absent) and normalize in one call."""
    stats = stats or compute_stats(ds)
    return normalize_and_impute(ds, stats), stats


# ---------------------------------------------------------------------------
# splitting and maskers


class ConfigurationError(ValueError):
    pass


def split(ds: Dataset, fractions=(0.8, 0.1, 0.1), seed: int = 0):
    """Label-stratified, seed-deterministic partition into len(fractions) parts."""
    if not math.isclose(sum(fractions), 1.0, abs_tol=1e-9):
        raise ConfigurationError(f"fractions must sum to 1, got {fractions}")
    parts: list[list[PatientRecord]] = [[] for _ in fractions]
    for lab in (0, 1):
        idx = [i for i, r in enumerate(ds.records) if r.label == lab]
        rng = np.random.default_rng((seed, lab))
        rng.shuffle(idx)
        bounds = np.floor(np.cumsum(fractions) * len(idx) + 0.5).astype(int)
        lo = 0
        for part, hi in zip(parts, bounds):
            part.extend(ds.records[i] for i in idx[lo:hi])
            lo = hi
    out = []
    for part in parts:
        if not part:
            raise ConfigurationError("split produced an empty part; adjust fractions")
        out.append(Dataset(list(part), ds.indicator_names, ds.static_names, stats=ds.stats))
    return tuple(out)


def mask_visit_rate(ds: Dataset, rate: float, seed: int = 0) -> Dataset:
    """Keep ceil(rate*T) visits per patient (at least one), sampled uniformly
    without replacement, preserving temporal order."""
    if not 0.0 < rate <= 1.0:
        raise ConfigurationError(f"visit rate must be in (0, 1], got {rate}")
    if rate == 1.0:
        return ds
    rng = np.random.default_rng(seed)
    out = []
    for rec in ds.records:
        keep = max(1, math.ceil(rate * rec.n_visits))
        chosen = np.sort(rng.choice(rec.n_visits, size=keep, replace=False))
        out.append(replace(rec, dynamic=rec.dynamic[chosen].copy(),
                           mask=rec.mask[chosen].copy()))
    return Dataset(out, ds.indicator_names, ds.static_names, stats=ds.stats)


def mask_observation_rate(ds: Dataset, rate: float, seed: int = 0) -> Dataset:
    """Retain each observed cell independently with probability ``rate``;
    labels and statics untouched."""
    if not 0.0 < rate <= 1.0:
        raise ConfigurationError(f"observation rate must be in (0, 1], got {rate}")
    if rate == 1.0:
        return ds
    rng = np.random.default_rng(seed)
    out = []
    for rec in ds.records:
        keep = rng.random(rec.mask.shape) < rate
        new_mask = rec.mask & keep
        new_dyn = np.where(new_mask, rec.dynamic, np.nan)
        out.append(replace(rec, dynamic=new_dyn, mask=new_mask))
    return Dataset(out, ds.indicator_names, ds.static_names, stats=ds.stats)
