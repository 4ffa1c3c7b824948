"""Prototype-similarity integration and the risk head.

Pipeline: cosine similarities s between the health status h and each
prototype (row-major flattening), fusion h' = W_h^T h and h_p = h'^T s,
then the sigmoid head y = sigma(w . h_p + b).  An alternate head
y = sigma(u . s + b) over the similarity vector alone supports the
similarity-only ablation.

Graph builders and raw-array twins run the same numpy expressions in the
same order, so a served prediction is bit-identical to the training-graph
forward value.
"""

from __future__ import annotations

import logging

import numpy as np

from . import engine
from .engine import LOG_FLOOR, DimensionError, Node, ParameterSet

log = logging.getLogger(__name__)

SIM_TRANSFORMS = ("raw", "relu", "softmax")


def init_integration(params: ParameterSet, n_rows: int, hidden: int, k: int,
                     rng: np.random.Generator) -> None:
    bound = 1.0 / np.sqrt(hidden)
    params.add("integrate/w_h", rng.uniform(-bound, bound, size=(n_rows, k)))
    params.add("head/weight", rng.uniform(-bound, bound, size=hidden))
    params.add("head/bias", rng.uniform(-bound, bound, size=()))


def init_similarity_head(params: ParameterSet, k: int, rng: np.random.Generator) -> None:
    bound = 1.0 / np.sqrt(k)
    params.add("head_s/weight", rng.uniform(-bound, bound, size=k))
    params.add("head_s/bias", rng.uniform(-bound, bound, size=()))


def transform_similarities(vec: Node, transform: str) -> Node:
    """Optional rectify/normalize step between the cosine vector and fusion.

    The default pipeline feeds raw cosines forward; relu/softmax are
    deviation knobs.  Reported similarity vectors are always the raw
    cosines, whatever the fusion uses.
    """
    if transform == "raw":
        return vec
    if transform == "relu":
        return engine.hinge(vec)
    if transform == "softmax":
        e = engine.exp(vec)
        return engine.div(e, engine.sum_all(e))
    raise engine.ContractError(f"unknown similarity transform {transform!r}")


def cosine_similarities(prototypes: list[Node], h: Node) -> Node:
    """Similarity vector node, K cosine entries in [-1, 1]."""
    sims = [engine.cosine(p, h) for p in prototypes]
    fired = [j for j, s in enumerate(sims) if s.degenerate]
    if fired:
        log.warning("zero-norm cosine guard fired for prototypes %s", fired)
    return engine.stack_scalars(sims)


def integrate(w_h: Node, h: Node, s: Node):
    """h' = W_h^T h (K x H) and h_p = h'^T s (H,)."""
    if w_h.value.shape[0] != h.value.shape[0] or w_h.value.shape[1] != s.value.shape[0]:
        raise DimensionError("integrate", w_h.value.shape, h.value.shape, s.value.shape)
    h_prime = engine.matmul(engine.transpose(w_h), h)
    h_p = engine.matmul(s, h_prime)
    return h_prime, h_p


def predict_risk(w: Node, b: Node, h_p: Node) -> Node:
    return engine.sigmoid(engine.add(engine.matmul(w, h_p), b))


def predict_from_similarities(u: Node, b: Node, s: Node) -> Node:
    """Similarity-only head over s, bypassing the fusion stage."""
    return engine.sigmoid(engine.add(engine.matmul(u, s), b))


# ---------------------------------------------------------------------------
# batched builders (training hot path; one node spans the whole batch)


def cosine_bank(prototypes: list[Node], h_flat: Node) -> Node:
    """(B, K) cosines between flattened status rows and every prototype.

    Same zero-norm guard as the per-record path: a degenerate operand pins
    that entry to exact 0 with no gradient flow.
    """
    pv = np.stack([p.value.reshape(-1) for p in prototypes])
    hv = h_flat.value
    if hv.ndim != 2 or hv.shape[1] != pv.shape[1]:
        raise DimensionError("cosine-bank", hv.shape, pv.shape)
    pn = np.sqrt(np.sum(pv * pv, axis=1))
    hn = np.sqrt(np.sum(hv * hv, axis=1))
    ok = (hn >= LOG_FLOOR)[:, None] & (pn >= LOG_FLOOR)[None, :]
    pn_safe = np.where(pn < LOG_FLOOR, 1.0, pn)
    hn_safe = np.where(hn < LOG_FLOOR, 1.0, hn)
    denom = hn_safe[:, None] * pn_safe[None, :]
    val = np.where(ok, (hv @ pv.T) / denom, 0.0)
    if not ok.all():
        fired = [j for j in range(pv.shape[0]) if pn[j] < LOG_FLOOR]
        log.warning("zero-norm cosine guard fired (prototypes %s, %d status rows)",
                    fired, int(np.sum(hn < LOG_FLOOR)))
    out = Node(val, (h_flat, *prototypes), "cosine-bank")

    def _bw():
        g = np.where(ok, out.grad, 0.0)
        gv = g * val
        h_flat.grad += ((g / pn_safe[None, :]) @ pv - np.sum(gv, axis=1)[:, None] * hv / hn_safe[:, None]) / hn_safe[:, None]
        dp = ((g / hn_safe[:, None]).T @ hv - np.sum(gv, axis=0)[:, None] * pv / pn_safe[:, None]) / pn_safe[:, None]
        for j, p in enumerate(prototypes):
            p.grad += dp[j].reshape(p.value.shape)

    out._backward = _bw
    return out


def transform_similarities_batch(mat: Node, transform: str) -> Node:
    if transform == "raw":
        return mat
    if transform == "relu":
        return engine.hinge(mat)
    if transform == "softmax":
        e = engine.exp(mat)
        return engine.div(e, engine.sum_rows(e))
    raise engine.ContractError(f"unknown similarity transform {transform!r}")


def integrate_batch(w_h: Node, h_flat: Node, s: Node) -> Node:
    """Fused batched form of integrate: row i is h'_i^T s_i.

    With C = S W_h^T, patient i's fused vector is sum_r C[i, r] * h_i[r, :],
    which is algebraically identical to stacking the per-record pipeline.
    """
    n_rows, k = w_h.value.shape
    b = h_flat.value.shape[0]
    hidden = h_flat.value.shape[1] // n_rows
    if s.value.shape != (b, k) or h_flat.value.shape[1] != n_rows * hidden:
        raise DimensionError("integrate-batch", w_h.value.shape, h_flat.value.shape, s.value.shape)
    h3 = h_flat.value.reshape(b, n_rows, hidden)
    coef = s.value @ w_h.value.T
    out = Node(np.einsum("ir,irh->ih", coef, h3), (w_h, h_flat, s), "integrate-batch")

    def _bw():
        dcoef = np.einsum("ih,irh->ir", out.grad, h3)
        s.grad += dcoef @ w_h.value
        w_h.grad += dcoef.T @ s.value
        h_flat.grad += (coef[:, :, None] * out.grad[:, None, :]).reshape(b, n_rows * hidden)

    out._backward = _bw
    return out


def predict_risk_batch(w: Node, b: Node, h_p: Node) -> Node:
    return engine.sigmoid(engine.add(engine.matmul(h_p, w), b))


def predict_from_similarities_batch(u: Node, b: Node, s: Node) -> Node:
    return engine.sigmoid(engine.add(engine.matmul(s, u), b))


# ---------------------------------------------------------------------------
# array twins


def cosine_similarities_raw(prototype_values: list[np.ndarray], h: np.ndarray) -> np.ndarray:
    sims = np.empty(len(prototype_values))
    fired = []
    nb = np.sqrt(np.sum(h * h))
    for j, p in enumerate(prototype_values):
        na = np.sqrt(np.sum(p * p))
        if na < LOG_FLOOR or nb < LOG_FLOOR:
            sims[j] = 0.0
            fired.append(j)
        else:
            dot = np.sum(p * h)
            sims[j] = dot / (na * nb)
    if fired:
        log.warning("zero-norm cosine guard fired for prototypes %s", fired)
    # mirror the graph path, where stack_scalars materializes python floats
    return np.array([float(v) for v in sims])


def transform_similarities_raw(sims: np.ndarray, transform: str) -> np.ndarray:
    if transform == "raw":
        return sims
    if transform == "relu":
        return np.maximum(sims, 0.0)
    if transform == "softmax":
        e = np.exp(sims)
        return e / np.sum(e)
    raise engine.ContractError(f"unknown similarity transform {transform!r}")


def integrate_raw(w_h: np.ndarray, h: np.ndarray, s: np.ndarray):
    h_prime = w_h.T.copy() @ h
    return h_prime, s @ h_prime


def predict_risk_raw(w: np.ndarray, b: np.ndarray, h_p: np.ndarray) -> float:
    return float(1.0 / (1.0 + np.exp(-(w @ h_p + b))))


def predict_from_similarities_raw(u: np.ndarray, b: np.ndarray, s: np.ndarray) -> float:
    return float(1.0 / (1.0 + np.exp(-(u @ s + b))))
