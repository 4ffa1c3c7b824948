"""Prototype memory: K prototypes pinned to real patient embeddings.

Refresh pipeline (run at the configured epochs): mini-batch k-means over all
training embeddings (k-means++ seeded on the first run, current prototypes
as initial centroids afterwards), snap each centroid to its nearest patient,
resolve duplicate claims slot by slot via the next-nearest unclaimed
patient, then match old slots to new prototypes with an exact minimum-cost
assignment so slot identities drift as little as possible.  The per-epoch
assign step snaps each (gradient-shifted) prototype straight back to its
nearest training embedding.

Everything here works on row-major flattened (N+1)*H embedding vectors; the
caller supplies them together with patient ids in a fixed order.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .data import ConfigurationError
from .engine import ContractError, Node, ParameterSet

log = logging.getLogger(__name__)

KMEANS_BATCH = 256
KMEANS_MAX_ITERS = 100
KMEANS_TOL = 1e-4


@dataclass
class AssignmentResult:
    permutation: list[int]   # slot j takes new prototype permutation[j]
    total_cost: float


@dataclass
class PrototypeMemory:
    nodes: list[Node]            # trainable (N+1) x H parameter nodes
    source_ids: list[str]
    frozen: bool = False
    last_refresh_epoch: int = -1
    initialized: bool = False    # first selection done (k-means++ path taken)
    refresh_epochs: list[int] = field(default_factory=list)

    @property
    def k(self) -> int:
        return len(self.nodes)

    def flats(self) -> np.ndarray:
        return np.stack([n.value.reshape(-1) for n in self.nodes])

    def values(self) -> list[np.ndarray]:
        return [n.value for n in self.nodes]

    def set_slot(self, j: int, flat: np.ndarray, source_id: str) -> None:
        self.nodes[j].value[...] = flat.reshape(self.nodes[j].value.shape)
        self.source_ids[j] = source_id


def prototype_paths(k: int) -> list[str]:
    return [f"prototypes/{j}" for j in range(k)]


def init_memory(params: ParameterSet, k: int, n_rows: int, hidden: int) -> PrototypeMemory:
    if k < 2:
        raise ConfigurationError(f"need K >= 2 prototypes, got {k}")
    nodes = [params.add(path, np.zeros((n_rows, hidden))) for path in prototype_paths(k)]
    return PrototypeMemory(nodes=nodes, source_ids=[""] * k)


# ---------------------------------------------------------------------------
# clustering


def kmeans_pp_init(embeddings: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: first centroid uniform, the rest D^2-sampled."""
    n = embeddings.shape[0]
    centers = np.empty((k, embeddings.shape[1]))
    centers[0] = embeddings[rng.integers(n)]
    d2 = np.sum((embeddings - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            centers[j] = embeddings[rng.integers(n)]  # all points coincide
        else:
            centers[j] = embeddings[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, np.sum((embeddings - centers[j]) ** 2, axis=1))
    return centers


def minibatch_kmeans(embeddings: np.ndarray, k: int, init_centroids: np.ndarray,
                     batch_size: int = KMEANS_BATCH, max_iters: int = KMEANS_MAX_ITERS,
                     tol: float = KMEANS_TOL, seed: int = 0) -> np.ndarray:
    """Mini-batch k-means with per-center step size 1/count.

    Each iteration samples a batch (the whole set when it fits), assigns
    points to their nearest centroid, then moves each centroid toward its
    assigned points with a decaying per-center learning rate.  Stops when
    the largest centroid movement in an iteration drops below ``tol``.
    """
    embeddings = np.asarray(embeddings, dtype=np.float64)
    n = embeddings.shape[0]
    if n < k:
        raise ConfigurationError(f"{n} embeddings cannot seed {k} clusters")
    centers = np.array(init_centroids, dtype=np.float64, copy=True)
    if centers.shape != (k, embeddings.shape[1]):
        raise ConfigurationError(f"init centroids shape {centers.shape} != {(k, embeddings.shape[1])}")
    counts = np.zeros(k)
    rng = np.random.default_rng(seed)
    for _ in range(max_iters):
        batch = embeddings if n <= batch_size else embeddings[rng.integers(0, n, size=batch_size)]
        d2 = ((batch[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        assign = np.argmin(d2, axis=1)
        before = centers.copy()
        for x, c in zip(batch, assign):
            counts[c] += 1.0
            centers[c] += (x - centers[c]) / counts[c]
        if np.sqrt(((centers - before) ** 2).sum(axis=1)).max() < tol:
            break
    return centers


# ---------------------------------------------------------------------------
# selection


def nearest_patient(centroid: np.ndarray, embeddings: np.ndarray, ids) -> tuple[str, np.ndarray]:
    d = np.sqrt(((embeddings - centroid.reshape(1, -1)) ** 2).sum(axis=1))
    best = np.min(d)
    tied = np.flatnonzero(d == best)
    pick = min(tied, key=lambda i: ids[i])  # deterministic tie rule
    return ids[pick], embeddings[pick]


def _claim_slots(targets: np.ndarray, embeddings: np.ndarray, ids) -> list[int]:
    """Per slot in order: nearest patient not yet claimed (ties by id).

    Falls back to the overall nearest when every patient is claimed, which
    can only happen with fewer patients than slots.
    """
    claimed: set[int] = set()
    picks = []
    for target in targets:
        d = np.sqrt(((embeddings - target.reshape(1, -1)) ** 2).sum(axis=1))
        order = sorted(range(len(ids)), key=lambda i: (d[i], ids[i]))
        pick = next((i for i in order if i not in claimed), order[0])
        claimed.add(pick)
        picks.append(pick)
    if len(set(picks)) < len(targets):
        log.warning("prototype diversity: %d slots share %d distinct patients",
                    len(targets), len(set(picks)))
    return picks


def match_prototypes(cost) -> AssignmentResult:
    """Exact minimum-cost slot matching; among optima, the lexicographically
    smallest permutation wins (fix slots left to right, keep the smallest
    column that preserves optimality)."""
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ContractError(f"match_prototypes: cost must be square, got {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise ContractError("match_prototypes: non-finite cost entries")
    k = cost.shape[0]
    rows, cols = linear_sum_assignment(cost)
    best = float(cost[rows, cols].sum())
    tol = 1e-9 * max(1.0, abs(best))

    perm: list[int] = []
    free = list(range(k))
    fixed_cost = 0.0
    for r in range(k):
        rest_rows = list(range(r + 1, k))
        for c in free:
            rest_cols = [x for x in free if x != c]
            sub_total = 0.0
            if rest_rows:
                sub = cost[np.ix_(rest_rows, rest_cols)]
                i, j = linear_sum_assignment(sub)
                sub_total = float(sub[i, j].sum())
            if fixed_cost + cost[r, c] + sub_total <= best + tol:
                perm.append(c)
                free.remove(c)
                fixed_cost += cost[r, c]
                break
        else:  # numerically impossible unless the tolerance misfires
            raise ContractError("match_prototypes: no column preserves optimality")
    total = float(sum(cost[j, perm[j]] for j in range(k)))
    return AssignmentResult(permutation=perm, total_cost=total)


def progressive_select(memory: PrototypeMemory, embeddings: np.ndarray, ids,
                       epoch: int, seed: int = 0) -> AssignmentResult | None:
    """Refresh the memory from the current training embeddings.

    Returns the old-to-new matching (None on the very first call, when there
    are no meaningful old prototypes to match against).
    """
    if embeddings.shape[0] < memory.k:
        raise ConfigurationError(f"{embeddings.shape[0]} patients cannot fill {memory.k} slots")
    first = not memory.initialized
    rng = np.random.default_rng((seed, epoch))
    init = kmeans_pp_init(embeddings, memory.k, rng) if first else memory.flats()
    centroids = minibatch_kmeans(embeddings, memory.k, init, seed=seed + epoch)
    picks = _claim_slots(centroids, embeddings, ids)
    new_flats = embeddings[picks]
    new_ids = [ids[i] for i in picks]

    result = None
    if not first:
        old = memory.flats()
        cost = np.sqrt(((old[:, None, :] - new_flats[None, :, :]) ** 2).sum(axis=2))
        result = match_prototypes(cost)
        order = result.permutation
    else:
        order = list(range(memory.k))
    for j, src in enumerate(order):
        memory.set_slot(j, new_flats[src], new_ids[src])
    memory.initialized = True
    memory.last_refresh_epoch = epoch
    memory.refresh_epochs.append(epoch)
    return result


def assign_step(memory: PrototypeMemory, embeddings: np.ndarray, ids) -> None:
    """Snap each prototype to its nearest training embedding (slot order,
    duplicates resolved by the next-nearest unclaimed patient)."""
    picks = _claim_slots(memory.flats(), embeddings, ids)
    for j, i in enumerate(picks):
        memory.set_slot(j, embeddings[i], ids[i])
