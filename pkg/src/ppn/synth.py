"""Synthetic EHR generator with planted patient subtypes.

Each subtype fixes a baseline level, a per-visit linear trend, an AR(1)
noise level, an outcome probability, and static-feature distributions.
Patients draw a subtype uniformly; the true subtype id is recorded only in
``PatientRecord.meta`` for evaluation and is never part of any model input.

The default four subtypes are built so that subtype identity is carried by
trend *direction*, not by level: all four share the same baselines, and the
slope vectors sit at the corners (+-u +-v) of two orthogonal sign patterns.
Outcome rates are assigned so that no linear function of the two slope
coordinates ranks the four groups correctly, which keeps mean-pooling
baselines from shortcutting the sequence model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, PatientRecord

DEFAULT_INDICATORS = ["creatinine", "urea", "hemoglobin", "albumin",
                      "sodium", "potassium", "calcium", "phosphate"]
DEFAULT_STATICS = ["age", "bmi", "sbp", "diabetic"]

# orthogonal sign patterns over the 8 indicators
_AXIS_U = np.array([1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0])
_AXIS_V = np.array([1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0])

_BASELINES = np.array([90.0, 6.5, 115.0, 38.0, 139.0, 4.4, 2.3, 1.2])

# corner (a, b) -> outcome rate; chosen so the rate order 0.05 < 0.2 < 0.5 < 0.8
# cannot be reproduced by any linear score w1*a + w2*b
_CORNERS = [(+1, +1, 0.8), (+1, -1, 0.2), (-1, +1, 0.05), (-1, -1, 0.5)]


@dataclass
class SubtypeSpec:
    subtype_id: int
    baselines: np.ndarray   # (N,) shared level, raw units
    slopes: np.ndarray      # (N,) per-visit drift
    noise_scale: float      # stationary marginal std of the AR(1) noise
    ar_rho: float
    outcome_prob: float
    static_mean: np.ndarray  # (M,)
    static_std: np.ndarray   # (M,)

    def __post_init__(self):
        self.baselines = np.asarray(self.baselines, dtype=np.float64)
        self.slopes = np.asarray(self.slopes, dtype=np.float64)
        self.static_mean = np.asarray(self.static_mean, dtype=np.float64)
        self.static_std = np.asarray(self.static_std, dtype=np.float64)
        if not 0.0 <= self.outcome_prob <= 1.0:
            raise ValueError(f"outcome_prob must be in [0,1], got {self.outcome_prob}")


def default_subtypes(slope_scale: float = 0.15, noise_scale: float = 0.4,
                     ar_rho: float = 0.6) -> list[SubtypeSpec]:
    specs = []
    for g, (a, b, rate) in enumerate(_CORNERS):
        slopes = slope_scale * (a * _AXIS_U + b * _AXIS_V)
        # age leans with the u coordinate so statics carry a weak (deliberately
        # insufficient) outcome signal; the rest are subtype-independent
        static_mean = np.array([60.0 + 5.0 * a, 27.0, 130.0, 0.5])
        static_std = np.array([8.0, 4.0, 12.0, 0.5])
        specs.append(SubtypeSpec(g, _BASELINES.copy(), slopes, noise_scale,
                                 ar_rho, rate, static_mean, static_std))
    return specs


def generate_synthetic(specs: list[SubtypeSpec], n_patients: int,
                       t_range: tuple[int, int] = (4, 30), seed: int = 0,
                       indicator_names=None, static_names=None) -> Dataset:
    """Draw ``n_patients`` records, one uniformly chosen subtype each.

    value[t] = baseline + slope * t + e[t], with e an AR(1) process whose
    stationary marginal std equals the spec's noise scale.  All cells are
    observed; the missingness maskers produce sparse variants downstream.
    """
    if len(specs) < 2:
        raise ValueError("need at least 2 subtype specs")
    t_lo, t_hi = t_range
    if not (1 <= t_lo <= t_hi):
        raise ValueError(f"bad visit-count range {t_range}")
    n = specs[0].baselines.shape[0]
    m = specs[0].static_mean.shape[0]
    indicator_names = list(indicator_names or
                           (DEFAULT_INDICATORS if n == len(DEFAULT_INDICATORS)
                            else [f"ind_{j}" for j in range(n)]))
    static_names = list(static_names or
                        (DEFAULT_STATICS if m == len(DEFAULT_STATICS)
                         else [f"static_{j}" for j in range(m)]))

    rng = np.random.default_rng(seed)
    records = []
    width = len(str(max(n_patients - 1, 1)))
    for i in range(n_patients):
        spec = specs[rng.integers(len(specs))]
        t_count = int(rng.integers(t_lo, t_hi + 1))
        drift = np.arange(t_count)[:, None] * spec.slopes[None, :]
        noise = np.zeros((t_count, n))
        if spec.noise_scale > 0.0:
            rho = spec.ar_rho
            innov_scale = spec.noise_scale * np.sqrt(max(1.0 - rho * rho, 0.0))
            noise[0] = rng.normal(0.0, spec.noise_scale, size=n)
            for t in range(1, t_count):
                noise[t] = rho * noise[t - 1] + rng.normal(0.0, innov_scale, size=n)
        dynamic = spec.baselines[None, :] + drift + noise
        static = rng.normal(spec.static_mean, spec.static_std)
        label = int(rng.random() < spec.outcome_prob)
        records.append(PatientRecord(
            id=f"synth-{i:0{width}d}", dynamic=dynamic,
            mask=np.ones((t_count, n), dtype=bool), static=static, label=label,
            meta={"subtype": spec.subtype_id}))
    return Dataset(records, indicator_names, static_names)


def default_dataset(n_patients: int = 2000, seed: int = 0, **spec_kwargs) -> Dataset:
    return generate_synthetic(default_subtypes(**spec_kwargs), n_patients, seed=seed)
