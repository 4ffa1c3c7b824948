"""Loss terms: classification BCE plus the two prototype-separation terms.

L_p drives the prototypes' own risk predictions apart: for each ordered
pair (j, j') it adds y_j * log y_j' + (1 - y_j) * log(1 - y_j'), every
summand nonpositive, so minimizing pushes paired predictions toward
opposite extremes.  L_d is a margin hinge on pairwise prototype distances
with margin 70 / sqrt(K) by default.  Total = L_c + lambda_p * L_p +
lambda_d * L_d; setting both lambdas to 0 recovers plain BCE training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import engine
from .engine import Node

PROB_CLAMP = 1e-7


@dataclass
class LossBundle:
    l_c: float
    l_p: float
    l_d: float
    lambda_p: float
    lambda_d: float
    margin: float
    total: float
    node: Node | None = None  # graph root, present when built for training

    def as_row(self) -> dict:
        return {"L_c": self.l_c, "L_p": self.l_p, "L_d": self.l_d, "total": self.total}


def default_margin(k: int) -> float:
    return 70.0 / np.sqrt(k)


def bce_loss(y_hat: Node, y: int) -> Node:
    """-y log(p) - (1-y) log(1-p), with p clamped away from {0, 1}."""
    p = engine.clamp(y_hat, PROB_CLAMP, 1.0 - PROB_CLAMP)
    if y == 1:
        return engine.scalar_mul(engine.log(p), -1.0)
    return engine.scalar_mul(engine.log(engine.sub(engine.constant(1.0), p)), -1.0)


def bce_batch(y_hat: Node, labels: np.ndarray) -> Node:
    """Mean BCE over a (B,) vector of predicted probabilities."""
    p = engine.clamp(y_hat, PROB_CLAMP, 1.0 - PROB_CLAMP)
    y = engine.constant(np.asarray(labels, dtype=np.float64))
    miss = engine.sub(engine.constant(1.0), y)
    hit = engine.mul(y, engine.log(p))
    rest = engine.mul(miss, engine.log(engine.sub(engine.constant(1.0), p)))
    return engine.scalar_mul(engine.sum_all(engine.add(hit, rest)), -1.0 / len(labels))


def prototype_risks(prototypes: list[Node], score_fn) -> Node:
    """Risk y_j of each prototype, scored through the model's own prediction
    path with p_j standing in for the health status.  ``score_fn(h) -> Node``
    is the per-patient risk builder.  Returns a (K,) node."""
    return engine.stack_scalars([score_fn(p) for p in prototypes])


def separation_loss_p(y: Node, detach_coefficients: bool = False) -> Node:
    """Sum over ordered pairs j != j' of y_j log y_j' + (1-y_j) log(1-y_j').

    Uses the identity sum_{j != j'} a_j b_j' = sum(a) sum(b) - sum(a b) to
    stay vectorized.  With ``detach_coefficients`` the multipliers y_j are
    treated as constants and only the log terms carry gradient.
    """
    p = engine.clamp(y, PROB_CLAMP, 1.0 - PROB_CLAMP)
    q = engine.sub(engine.constant(1.0), p)
    lp = engine.log(p)
    lq = engine.log(q)
    pc = engine.detach(p) if detach_coefficients else p
    qc = engine.detach(q) if detach_coefficients else q
    cross_pos = engine.sub(engine.mul(engine.sum_all(pc), engine.sum_all(lp)),
                           engine.sum_all(engine.mul(pc, lp)))
    cross_neg = engine.sub(engine.mul(engine.sum_all(qc), engine.sum_all(lq)),
                           engine.sum_all(engine.mul(qc, lq)))
    return engine.add(cross_pos, cross_neg)


def separation_loss_d(prototypes: list[Node], margin: float) -> Node:
    """Ordered-pair hinge sum; each unordered pair counts twice."""
    terms = []
    for j in range(len(prototypes)):
        for jp in range(j + 1, len(prototypes)):
            d = engine.l2_norm(engine.sub(prototypes[j], prototypes[jp]))
            terms.append(engine.hinge(engine.sub(engine.constant(margin), d)))
    if not terms:
        return engine.constant(0.0)
    total = terms[0]
    for t in terms[1:]:
        total = engine.add(total, t)
    return engine.scalar_mul(total, 2.0)


def combine(l_c: Node, l_p: Node, l_d: Node, lambda_p: float, lambda_d: float,
            margin: float) -> LossBundle:
    total = engine.add(l_c, engine.add(engine.scalar_mul(l_p, lambda_p),
                                       engine.scalar_mul(l_d, lambda_d)))
    return LossBundle(l_c=float(l_c.value), l_p=float(l_p.value), l_d=float(l_d.value),
                      lambda_p=lambda_p, lambda_d=lambda_d, margin=margin,
                      total=float(total.value), node=total)


# raw helpers for logging/eval without a graph


def bce_raw(y_hat: float, y: int) -> float:
    p = min(max(y_hat, PROB_CLAMP), 1.0 - PROB_CLAMP)
    return -np.log(p) if y == 1 else -np.log(1.0 - p)


def separation_loss_p_raw(y: np.ndarray) -> float:
    p = np.clip(y, PROB_CLAMP, 1.0 - PROB_CLAMP)
    q = 1.0 - p
    lp, lq = np.log(p), np.log(q)
    return float(p.sum() * lp.sum() - (p * lp).sum() + q.sum() * lq.sum() - (q * lq).sum())


def separation_loss_d_raw(prototype_values: list[np.ndarray], margin: float) -> float:
    total = 0.0
    for j in range(len(prototype_values)):
        for jp in range(j + 1, len(prototype_values)):
            d = np.sqrt(np.sum((prototype_values[j] - prototype_values[jp]) ** 2))
            total += max(0.0, margin - d)
    return 2.0 * total
