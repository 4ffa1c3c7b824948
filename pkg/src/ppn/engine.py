"""Minimal reverse-mode autodiff over dense float64 arrays (0-d to 2-d).

The graph is define-by-run: every operation materializes a :class:`Node`
holding its value, a zero-initialized gradient buffer, its parents, and a
closure implementing the backward rule.  ``backward(root)`` runs the rules
in reverse topological order; calling it again without resetting gradients
accumulates, and a node feeding several consumers receives the sum of their
contributions.

Also houses the trainable-parameter registry (with per-parameter freezing),
the Adam optimizer, and a central-difference gradient checker.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

LOG_FLOOR = 1e-12  # inputs to natural-log are clamped to >= this


class DimensionError(ValueError):
    """Operand shapes do not conform to the requested operation."""

    def __init__(self, op: str, *shapes):
        super().__init__(f"{op}: incompatible shapes {' vs '.join(str(s) for s in shapes)}")
        self.op = op
        self.shapes = shapes


class ContractError(RuntimeError):
    """A caller or callee violated an interface contract."""


def as_array(value, op: str = "leaf") -> np.ndarray:
    """Validate and coerce raw data into an engine array.

    Arrays are float64, at most 2-d, and finite; NaN/Inf are rejected here so
    they can never enter the graph through a leaf.
    """
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim > 2:
        raise DimensionError(op, arr.shape)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{op}: non-finite entries rejected")
    return arr


class Node:
    """One vertex of the computation graph."""

    __slots__ = ("value", "grad", "parents", "op", "_backward", "trainable", "degenerate")

    def __init__(self, value: np.ndarray, parents=(), op: str = "leaf", trainable: bool = False):
        self.value = value
        self.grad = np.zeros_like(value)
        self.parents = parents
        self.op = op
        self._backward = None
        self.trainable = trainable
        self.degenerate = False

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Node(op={self.op!r}, shape={self.value.shape})"


def leaf(value, trainable: bool = False) -> Node:
    return Node(as_array(value), op="leaf", trainable=trainable)


def constant(value) -> Node:
    return leaf(value, trainable=False)


# ---------------------------------------------------------------------------
# operations


def _broadcastable(a: np.ndarray, b: np.ndarray) -> bool:
    if a.shape == b.shape or a.size == 1 or b.size == 1:
        return True
    # matrix with row vector, or matrix with (B, 1) column, in either order
    for x, y in ((a, b), (b, a)):
        if x.ndim == 2 and y.ndim == 1 and x.shape[1] == y.shape[0]:
            return True
        if x.ndim == 2 and y.ndim == 2 and x.shape[0] == y.shape[0] and y.shape[1] == 1:
            return True
    return False


def add(a: Node, b: Node) -> Node:
    if not _broadcastable(a.value, b.value):
        raise DimensionError("add", a.value.shape, b.value.shape)
    out = Node(a.value + b.value, (a, b), "add")

    def _bw():
        a.grad += _reduce_to(out.grad, a.value.shape)
        b.grad += _reduce_to(out.grad, b.value.shape)

    out._backward = _bw
    return out


def sub(a: Node, b: Node) -> Node:
    if not _broadcastable(a.value, b.value):
        raise DimensionError("sub", a.value.shape, b.value.shape)
    out = Node(a.value - b.value, (a, b), "sub")

    def _bw():
        a.grad += _reduce_to(out.grad, a.value.shape)
        b.grad -= _reduce_to(out.grad, b.value.shape)

    out._backward = _bw
    return out


def mul(a: Node, b: Node) -> Node:
    """Elementwise product; scalar or row-vector operands broadcast."""
    if not _broadcastable(a.value, b.value):
        raise DimensionError("elementwise-mul", a.value.shape, b.value.shape)
    out = Node(a.value * b.value, (a, b), "elementwise-mul")

    def _bw():
        a.grad += _reduce_to(out.grad * b.value, a.value.shape)
        b.grad += _reduce_to(out.grad * a.value, b.value.shape)

    out._backward = _bw
    return out


def div(a: Node, b: Node) -> Node:
    if not _broadcastable(a.value, b.value):
        raise DimensionError("div", a.value.shape, b.value.shape)
    out = Node(a.value / b.value, (a, b), "div")

    def _bw():
        a.grad += _reduce_to(out.grad / b.value, a.value.shape)
        b.grad += _reduce_to(-out.grad * a.value / (b.value * b.value), b.value.shape)

    out._backward = _bw
    return out


def scalar_mul(a: Node, c: float) -> Node:
    c = float(c)
    out = Node(a.value * c, (a,), "scalar-mul")

    def _bw():
        a.grad += out.grad * c

    out._backward = _bw
    return out


def _reduce_to(grad: np.ndarray, shape) -> np.ndarray:
    # undo broadcasting performed by the binary ops
    shape = tuple(shape)
    if grad.shape == shape:
        return grad
    if grad.ndim == 2 and len(shape) == 1 and grad.shape[1] == shape[0]:
        return np.sum(grad, axis=0)
    if grad.ndim == 2 and shape == (grad.shape[0], 1):
        return np.sum(grad, axis=1, keepdims=True)
    return np.sum(grad).reshape(shape) if shape else np.asarray(np.sum(grad))


def matmul(a: Node, b: Node) -> Node:
    av, bv = a.value, b.value
    if av.ndim == 0 or bv.ndim == 0:
        raise DimensionError("matmul", av.shape, bv.shape)
    if av.shape[-1] != (bv.shape[0] if bv.ndim >= 1 else None):
        raise DimensionError("matmul", av.shape, bv.shape)
    out = Node(av @ bv, (a, b), "matmul")

    def _bw():
        g = out.grad
        if av.ndim == 1 and bv.ndim == 1:  # dot product -> scalar
            a.grad += g * bv
            b.grad += g * av
        elif av.ndim == 2 and bv.ndim == 1:
            a.grad += np.outer(g, bv)
            b.grad += av.T @ g
        elif av.ndim == 1 and bv.ndim == 2:
            a.grad += bv @ g
            b.grad += np.outer(av, g)
        else:
            a.grad += g @ bv.T
            b.grad += av.T @ g

    out._backward = _bw
    return out


def transpose(a: Node) -> Node:
    if a.value.ndim != 2:
        raise DimensionError("transpose", a.value.shape)
    out = Node(a.value.T.copy(), (a,), "transpose")

    def _bw():
        a.grad += out.grad.T

    out._backward = _bw
    return out


def concat_rows(parts: list[Node]) -> Node:
    """Stack 1-d nodes (and/or 2-d blocks) into one 2-d matrix along rows."""
    if not parts:
        raise DimensionError("concat-rows", ())
    blocks = [p.value if p.value.ndim == 2 else p.value.reshape(1, -1) for p in parts]
    width = blocks[0].shape[1]
    for blk in blocks:
        if blk.shape[1] != width:
            raise DimensionError("concat-rows", *(b.shape for b in blocks))
    out = Node(np.concatenate(blocks, axis=0), tuple(parts), "concat-rows")
    offsets = np.cumsum([0] + [b.shape[0] for b in blocks])

    def _bw():
        for part, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            piece = out.grad[lo:hi]
            part.grad += piece if part.value.ndim == 2 else piece[0]

    out._backward = _bw
    return out


def concat_cols(parts: list[Node]) -> Node:
    """Join 2-d nodes side by side along columns."""
    if not parts:
        raise DimensionError("concat-cols", ())
    blocks = [p.value for p in parts]
    rows = blocks[0].shape[0]
    for blk in blocks:
        if blk.ndim != 2 or blk.shape[0] != rows:
            raise DimensionError("concat-cols", *(b.shape for b in blocks))
    out = Node(np.concatenate(blocks, axis=1), tuple(parts), "concat-cols")
    offsets = np.cumsum([0] + [b.shape[1] for b in blocks])

    def _bw():
        for part, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            part.grad += out.grad[:, lo:hi]

    out._backward = _bw
    return out


def stack_scalars(parts: list[Node]) -> Node:
    """Collect scalar nodes into a 1-d vector."""
    for p in parts:
        if p.value.size != 1:
            raise DimensionError("stack-scalars", p.value.shape)
    out = Node(np.array([float(p.value) for p in parts]), tuple(parts), "stack-scalars")

    def _bw():
        for i, p in enumerate(parts):
            p.grad += out.grad[i].reshape(p.value.shape)

    out._backward = _bw
    return out


def slice_rows(a: Node, start: int, stop: int) -> Node:
    if a.value.ndim == 0:
        raise DimensionError("slice", a.value.shape)
    out = Node(a.value[start:stop].copy(), (a,), "slice")

    def _bw():
        a.grad[start:stop] += out.grad

    out._backward = _bw
    return out


def sigmoid(a: Node) -> Node:
    val = 1.0 / (1.0 + np.exp(-a.value))
    out = Node(val, (a,), "sigmoid")

    def _bw():
        a.grad += out.grad * val * (1.0 - val)

    out._backward = _bw
    return out


def tanh(a: Node) -> Node:
    val = np.tanh(a.value)
    out = Node(val, (a,), "tanh")

    def _bw():
        a.grad += out.grad * (1.0 - val * val)

    out._backward = _bw
    return out


def exp(a: Node) -> Node:
    val = np.exp(a.value)
    out = Node(val, (a,), "exp")

    def _bw():
        a.grad += out.grad * val

    out._backward = _bw
    return out


def log(a: Node) -> Node:
    """Natural log with the input clamped to >= LOG_FLOOR."""
    clamped = np.maximum(a.value, LOG_FLOOR)
    out = Node(np.log(clamped), (a,), "natural-log")

    def _bw():
        a.grad += np.where(a.value >= LOG_FLOOR, out.grad / clamped, 0.0)

    out._backward = _bw
    return out


def hinge(a: Node) -> Node:
    """max(0, x); the subgradient at the kink is 0."""
    out = Node(np.maximum(a.value, 0.0), (a,), "hinge")

    def _bw():
        a.grad += out.grad * (a.value > 0.0)

    out._backward = _bw
    return out


def clamp(a: Node, lo: float, hi: float) -> Node:
    """Pass-through inside [lo, hi]; gradient 0 outside."""
    val = np.clip(a.value, lo, hi)
    out = Node(val, (a,), "clamp")

    def _bw():
        a.grad += out.grad * ((a.value >= lo) & (a.value <= hi))

    out._backward = _bw
    return out


def sum_all(a: Node) -> Node:
    out = Node(np.asarray(np.sum(a.value)), (a,), "sum")

    def _bw():
        a.grad += out.grad  # broadcasts the scalar

    out._backward = _bw
    return out


def sum_rows(a: Node) -> Node:
    """Row sums of a 2-d node, kept 2-d as (B, 1) so it broadcasts back."""
    if a.value.ndim != 2:
        raise DimensionError("sum-rows", a.value.shape)
    out = Node(np.sum(a.value, axis=1, keepdims=True), (a,), "sum-rows")

    def _bw():
        a.grad += out.grad  # broadcasts across the row

    out._backward = _bw
    return out


def l2_norm(a: Node) -> Node:
    """Euclidean (Frobenius) norm; gradient 0 at the origin."""
    val = np.sqrt(np.sum(a.value * a.value))
    out = Node(np.asarray(val), (a,), "l2-norm")

    def _bw():
        if val > 0.0:
            a.grad += out.grad * (a.value / val)

    out._backward = _bw
    return out


def cosine(a: Node, b: Node) -> Node:
    """Cosine of the row-major flattenings of two same-shaped arrays.

    Fused for graph economy: the prototype-similarity path calls this once
    per prototype per patient.  A zero-norm operand makes the output an
    exact 0 with no gradient flow (``degenerate`` is set so the caller can
    log the event).
    """
    if a.value.shape != b.value.shape:
        raise DimensionError("cosine", a.value.shape, b.value.shape)
    na = np.sqrt(np.sum(a.value * a.value))
    nb = np.sqrt(np.sum(b.value * b.value))
    if na < LOG_FLOOR or nb < LOG_FLOOR:
        out = Node(np.asarray(0.0), (a, b), "cosine")
        out.degenerate = True
        out._backward = lambda: None
        return out
    dot = np.sum(a.value * b.value)
    val = dot / (na * nb)
    out = Node(np.asarray(val), (a, b), "cosine")

    def _bw():
        g = float(out.grad)
        a.grad += g * (b.value / (na * nb) - val * a.value / (na * na))
        b.grad += g * (a.value / (na * nb) - val * b.value / (nb * nb))

    out._backward = _bw
    return out


def detach(a: Node) -> Node:
    """Copy a value into a fresh leaf, cutting gradient flow."""
    return Node(a.value.copy(), (), "leaf")


_OPS = {
    "matmul": matmul,
    "add": add,
    "sub": sub,
    "elementwise-mul": mul,
    "scalar-mul": scalar_mul,
    "concat-rows": concat_rows,
    "slice": slice_rows,
    "sigmoid": sigmoid,
    "tanh": tanh,
    "natural-log": log,
    "hinge": hinge,
    "sum": sum_all,
    "sum-rows": sum_rows,
    "l2-norm": l2_norm,
    "transpose": transpose,
    "div": div,
    "exp": exp,
    "cosine": cosine,
    "stack-scalars": stack_scalars,
    "concat-cols": concat_cols,
    "clamp": clamp,
}


def forward_op(op_tag: str, inputs, *args):
    """Dispatch an operation by tag (the string names used in backward rules)."""
    if op_tag not in _OPS:
        raise ContractError(f"unknown op tag {op_tag!r}")
    fn = _OPS[op_tag]
    if op_tag in ("concat-rows", "stack-scalars", "concat-cols"):
        return fn(list(inputs))
    if op_tag in ("scalar-mul", "slice", "clamp"):
        return fn(inputs[0], *args)
    return fn(*inputs, *args)


# ---------------------------------------------------------------------------
# backward


def _toposort(root: Node) -> list[Node]:
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(root: Node) -> None:
    """Populate gradients of every ancestor of ``root`` (a scalar node)."""
    if root.value.size != 1:
        raise ContractError(f"backward root must be scalar, got shape {root.value.shape}")
    root.grad = root.grad + np.ones_like(root.value)
    for node in reversed(_toposort(root)):
        if node._backward is not None:
            node._backward()


# ---------------------------------------------------------------------------
# parameters and optimizer


class ParameterSet:
    """Named trainable leaves with per-parameter freeze flags."""

    def __init__(self):
        self._params: dict[str, Node] = {}
        self._frozen: set[str] = set()

    def add(self, path: str, value) -> Node:
        if path in self._params:
            raise ContractError(f"duplicate parameter path {path!r}")
        node = leaf(value, trainable=True)
        self._params[path] = node
        return node

    def __getitem__(self, path: str) -> Node:
        return self._params[path]

    def __contains__(self, path: str) -> bool:
        return path in self._params

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def paths(self):
        return list(self._params)

    def freeze(self, paths) -> None:
        for p in paths:
            if p not in self._params:
                raise ContractError(f"freeze: unknown parameter {p!r}")
            self._frozen.add(p)

    def unfreeze(self, paths=None) -> None:
        if paths is None:
            self._frozen.clear()
        else:
            self._frozen.difference_update(paths)

    def is_frozen(self, path: str) -> bool:
        return path in self._frozen

    def frozen_paths(self):
        return sorted(self._frozen)

    def zero_grads(self) -> None:
        for node in self._params.values():
            node.grad[...] = 0.0

    def values(self) -> dict[str, np.ndarray]:
        """Snapshot of parameter values (copies)."""
        return {p: n.value.copy() for p, n in self._params.items()}

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        for path, arr in values.items():
            node = self._params[path]
            if node.value.shape != arr.shape:
                raise DimensionError("load_values", node.value.shape, arr.shape)
            node.value[...] = arr


class Adam:
    """Adam with bias correction; frozen parameters are skipped entirely
    (no value update, no moment update), so a freeze window leaves them
    bit-identical."""

    def __init__(self, params: ParameterSet, lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state: dict[str, tuple[np.ndarray, np.ndarray, int]] = {}

    def step(self) -> None:
        for path, node in self.params.items():
            if self.params.is_frozen(path):
                continue
            m, v, t = self.state.get(path) or (np.zeros_like(node.value), np.zeros_like(node.value), 0)
            t += 1
            g = node.grad
            m = self.beta1 * m + (1.0 - self.beta1) * g
            v = self.beta2 * v + (1.0 - self.beta2) * (g * g)
            m_hat = m / (1.0 - self.beta1 ** t)
            v_hat = v / (1.0 - self.beta2 ** t)
            node.value -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
            self.state[path] = (m, v, t)
        self.params.zero_grads()


def optimizer_step(params: ParameterSet, learning_rate: float, moment_state: Adam | None = None) -> Adam:
    """One Adam update over ``params``; returns the (possibly new) state."""
    if moment_state is None:
        moment_state = Adam(params, lr=learning_rate)
    moment_state.lr = learning_rate
    moment_state.step()
    return moment_state


# ---------------------------------------------------------------------------
# gradient checking


@dataclass
class GradCheckReport:
    per_param: dict[str, float] = field(default_factory=dict)
    kinks: list[str] = field(default_factory=list)
    skipped: bool = False
    tolerance: float = 1e-4

    @property
    def max_rel_err(self) -> float:
        return max(self.per_param.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return not self.skipped and self.max_rel_err <= self.tolerance


def _find_kinks(root: Node, window: float) -> list[str]:
    kinks = []
    for node in _toposort(root):
        if node.op == "hinge":
            inp = node.parents[0].value
            if np.any(np.abs(inp) < window):
                kinks.append(f"hinge input within {window:g} of 0")
        elif node.op == "l2-norm":
            if float(node.value) < window:
                kinks.append("l2-norm at the origin")
    return kinks


def gradient_check(build_loss, params: ParameterSet, step: float = 1e-5,
                   tolerance: float = 1e-4) -> GradCheckReport:
    """Compare analytic gradients of ``build_loss()`` against central differences.

    ``build_loss`` must rebuild the same scalar graph on every call; two
    forward passes that disagree raise :class:`ContractError`.  If the loss
    sits on a non-differentiable point (a hinge kink, a norm at the origin),
    the comparison is skipped and the kinks are reported instead.
    """
    root = build_loss()
    base = float(root.value)
    if float(build_loss().value) != base:
        raise ContractError("gradient_check: loss builder is not deterministic")

    report = GradCheckReport(tolerance=tolerance)
    report.kinks = _find_kinks(root, window=10.0 * step)
    if report.kinks:
        report.skipped = True
        return report

    params.zero_grads()
    backward(root)
    analytic = {path: node.grad.copy() for path, node in params.items()}
    params.zero_grads()

    for path, node in params.items():
        flat = node.value.reshape(-1)
        num = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = float(build_loss().value)
            flat[i] = orig - step
            down = float(build_loss().value)
            flat[i] = orig
            num[i] = (up - down) / (2.0 * step)
        ana = analytic[path].reshape(-1)
        # worst deviation scaled by the group's gradient magnitude; entries far
        # below the central-difference noise floor cannot carry a per-entry
        # relative test and would only report rounding noise
        scale = max(np.max(np.abs(ana), initial=0.0), np.max(np.abs(num), initial=0.0), 1e-8)
        report.per_param[path] = float(np.max(np.abs(ana - num), initial=0.0) / scale)

    return report
