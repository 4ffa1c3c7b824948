"""Multi-channel patient encoder.

One GRU per indicator reads that indicator's sequence of (value, observed
flag) pairs; a one-layer static network embeds the demographic vector.  The
N final hidden states plus the static row concatenate into the (N+1) x H
health-status matrix.

The whole GRU recurrence is a single fused graph node backed by the kernels
package (compiled when available).  Only gradients w.r.t. the nine channel
parameters flow; the sequence itself is observed data.  A pure-array twin of
every graph function is provided for serving paths that need no gradients;
both run the same kernel and numpy expressions, so their outputs are
bit-identical.
"""

from __future__ import annotations

import numpy as np

from . import engine
from .engine import ContractError, Node, ParameterSet
from .kernels import gru_backward as _kernel_bwd
from .kernels import gru_forward as _kernel_fwd

GATE_NAMES = ("wz", "wr", "wc", "uz", "ur", "uc", "bz", "br", "bc")


def channel_prefix(n: int) -> str:
    return f"encoder/gru{n}"


def init_encoder(params: ParameterSet, n_indicators: int, n_static: int,
                 hidden: int, rng: np.random.Generator) -> None:
    """Register all encoder parameters, uniform(-1/sqrt(H), 1/sqrt(H))."""
    bound = 1.0 / np.sqrt(hidden)

    def u(*shape):
        return rng.uniform(-bound, bound, size=shape)

    for n in range(n_indicators):
        pre = channel_prefix(n)
        for name in ("wz", "wr", "wc"):
            params.add(f"{pre}/{name}", u(hidden, 2))
        for name in ("uz", "ur", "uc"):
            params.add(f"{pre}/{name}", u(hidden, hidden))
        for name in ("bz", "br", "bc"):
            params.add(f"{pre}/{name}", u(hidden))
    params.add("encoder/static/weight", u(n_static, hidden))
    params.add("encoder/static/bias", u(hidden))


def encoder_paths(n_indicators: int) -> list[str]:
    paths = [f"{channel_prefix(n)}/{name}"
             for n in range(n_indicators) for name in GATE_NAMES]
    return paths + ["encoder/static/weight", "encoder/static/bias"]


def gru_channel(x: np.ndarray, gate_nodes: dict[str, Node]) -> Node:
    """Fused GRU over a (T, 2) channel sequence; returns the final state node.

    Forward and backward both run in the kernels package.  Parents are the
    nine gate parameters in GATE_NAMES order.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] != 2:
        raise ContractError(f"gru_channel: sequence must be (T>=1, 2), got {x.shape}")
    vals = [gate_nodes[name].value for name in GATE_NAMES]
    h_seq, states = _kernel_fwd(x, *vals, want_states=True)
    out = Node(h_seq[-1].copy(), tuple(gate_nodes[name] for name in GATE_NAMES), "gru-seq")

    def _bw():
        grads = _kernel_bwd(x, *vals[:6], h_seq, *states, out.grad)
        for name, g in zip(GATE_NAMES, grads):
            gate_nodes[name].grad += g

    out._backward = _bw
    return out


def _channel_input(rec, n: int) -> np.ndarray:
    # Records are treated as immutable once they reach the encoder, so the
    # per-channel (value, flag) sequences are built once and kept on the record.
    cache = getattr(rec, "_chan_inputs", None)
    if cache is None:
        cache = [np.ascontiguousarray(
                     np.stack([rec.dynamic[:, j], rec.mask[:, j].astype(np.float64)], axis=1))
                 for j in range(rec.dynamic.shape[1])]
        rec._chan_inputs = cache
    return cache[n]


def gru_channel_batch(xs: list[np.ndarray], gate_nodes: dict[str, Node]) -> Node:
    """One graph node for a whole batch of sequences through one channel.

    Value is (B, H), row i the final state for xs[i].  Sequences may differ in
    length.  Collapsing the batch into one node keeps graph bookkeeping off the
    training profile; the kernels still run once per sequence.
    """
    vals = [gate_nodes[name].value for name in GATE_NAMES]
    hidden = vals[3].shape[0]
    saved = []
    out_val = np.empty((len(xs), hidden))
    for i, x in enumerate(xs):
        h_seq, states = _kernel_fwd(x, *vals, want_states=True)
        saved.append((h_seq, states))
        out_val[i] = h_seq[-1]
    out = Node(out_val, tuple(gate_nodes[name] for name in GATE_NAMES), "gru-seq-batch")

    def _bw():
        acc = [gate_nodes[name].grad for name in GATE_NAMES]
        for i, x in enumerate(xs):
            h_seq, states = saved[i]
            grads = _kernel_bwd(x, *vals[:6], h_seq, *states, out.grad[i])
            for a, g in zip(acc, grads):
                a += g

    out._backward = _bw
    return out


def _check_record(params: ParameterSet, rec) -> tuple[int, int]:
    if not np.all(np.isfinite(rec.dynamic)):
        raise ContractError(f"record {rec.id!r} has non-finite dynamics; "
                            "normalize_and_impute must run first")
    n = rec.dynamic.shape[1]
    if f"{channel_prefix(n - 1)}/wz" not in params or f"{channel_prefix(n)}/wz" in params:
        raise ContractError(f"record {rec.id!r}: {n} indicators do not match encoder")
    m = params["encoder/static/weight"].value.shape[0]
    if rec.static.shape[0] != m:
        raise ContractError(f"record {rec.id!r}: {rec.static.shape[0]} statics, encoder wants {m}")
    return n, m


def encode_patient(params: ParameterSet, rec, static_activation: str = "tanh") -> Node:
    """Graph-building encode; returns the (N+1) x H health-status node."""
    n_ind, _ = _check_record(params, rec)
    rows = []
    for n in range(n_ind):
        gates = {name: params[f"{channel_prefix(n)}/{name}"] for name in GATE_NAMES}
        rows.append(gru_channel(_channel_input(rec, n), gates))
    pre = engine.add(engine.matmul(engine.constant(rec.static),
                                   params["encoder/static/weight"]),
                     params["encoder/static/bias"])
    rows.append(tanh_or_identity(pre, static_activation))
    return engine.concat_rows(rows)


def encode_batch(params: ParameterSet, records: list,
                 static_activation: str = "tanh") -> Node:
    """Encode a batch into one (B, (N+1)*H) node, one flattened status per row.

    Column blocks are the per-indicator final states followed by the static
    row, which is exactly the row-major flattening the similarity memory uses.
    """
    n_ind = 0
    for rec in records:
        n_ind, _ = _check_record(params, rec)
    cols = []
    for n in range(n_ind):
        gates = {name: params[f"{channel_prefix(n)}/{name}"] for name in GATE_NAMES}
        cols.append(gru_channel_batch([_channel_input(rec, n) for rec in records], gates))
    statics = engine.constant(np.stack([rec.static for rec in records]))
    pre = engine.add(engine.matmul(statics, params["encoder/static/weight"]),
                     params["encoder/static/bias"])
    cols.append(tanh_or_identity(pre, static_activation))
    return engine.concat_cols(cols)


def tanh_or_identity(node: Node, activation: str) -> Node:
    if activation == "tanh":
        return engine.tanh(node)
    if activation == "identity":
        return node
    raise ContractError(f"unknown static activation {activation!r}")


# ---------------------------------------------------------------------------
# array twins (no graph, bit-identical values)


def encode_patient_raw(values: dict[str, np.ndarray], rec,
                       static_activation: str = "tanh") -> np.ndarray:
    n_ind = rec.dynamic.shape[1]
    hidden = values["encoder/static/bias"].shape[0]
    out = np.empty((n_ind + 1, hidden))
    for n in range(n_ind):
        pre = channel_prefix(n)
        h_seq, _ = _kernel_fwd(_channel_input(rec, n),
                               *[values[f"{pre}/{name}"] for name in GATE_NAMES])
        out[n] = h_seq[-1]
    static_pre = rec.static @ values["encoder/static/weight"] + values["encoder/static/bias"]
    out[n_ind] = np.tanh(static_pre) if static_activation == "tanh" else static_pre
    return out


def prefix_states_raw(values: dict[str, np.ndarray], rec,
                      static_activation: str = "tanh") -> np.ndarray:
    """(T, N+1, H) health-status matrices for every visit prefix.

    One kernel pass per channel covers all prefixes because the GRU state at
    step t is exactly the final state of the length-t prefix; the static row
    repeats.  The t = T slice is bit-identical to encode_patient_raw.
    """
    n_ind = rec.dynamic.shape[1]
    t_count = rec.dynamic.shape[0]
    hidden = values["encoder/static/bias"].shape[0]
    out = np.empty((t_count, n_ind + 1, hidden))
    for n in range(n_ind):
        pre = channel_prefix(n)
        h_seq, _ = _kernel_fwd(_channel_input(rec, n),
                               *[values[f"{pre}/{name}"] for name in GATE_NAMES])
        out[:, n, :] = h_seq
    static_pre = rec.static @ values["encoder/static/weight"] + values["encoder/static/bias"]
    out[:, n_ind, :] = np.tanh(static_pre) if static_activation == "tanh" else static_pre
    return out
