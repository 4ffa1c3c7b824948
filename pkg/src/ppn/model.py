"""Model assembly: encoder + prototype memory + integration head.

``predict_node`` builds the differentiable graph used in training;
``predict`` runs the pure-array twin used for evaluation and serving.  The
two paths execute the same kernel and numpy expressions, so their outputs
are bit-identical, which the archive round-trip and trajectory contracts
rely on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import encoder, integration, memory as memory_mod
from .data import NormalizationStats, PatientRecord, normalize_record
from .engine import ContractError, Node, ParameterSet


@dataclass
class Architecture:
    indicator_names: list[str]
    static_names: list[str]
    k: int
    hidden: int = 32
    static_activation: str = "tanh"       # or "identity"
    similarity_transform: str = "raw"     # or "relu" / "softmax"
    head: str = "full"                    # "similarity" = score from s alone

    @property
    def n_indicators(self) -> int:
        return len(self.indicator_names)

    @property
    def n_rows(self) -> int:
        return len(self.indicator_names) + 1

    def to_dict(self) -> dict:
        return {"indicator_names": self.indicator_names, "static_names": self.static_names,
                "k": self.k, "hidden": self.hidden,
                "static_activation": self.static_activation,
                "similarity_transform": self.similarity_transform, "head": self.head}

    @classmethod
    def from_dict(cls, d: dict) -> "Architecture":
        return cls(**d)


@dataclass
class PredictOutput:
    risk: float
    similarities: np.ndarray  # raw cosines, length K
    health_status: np.ndarray

    @property
    def nearest(self) -> int:
        return int(np.argmax(self.similarities))  # ties go to the lowest index


class Model:
    def __init__(self, arch: Architecture, seed: int = 0):
        self.arch = arch
        self.params = ParameterSet()
        rng = np.random.default_rng(seed)
        encoder.init_encoder(self.params, arch.n_indicators, len(arch.static_names),
                             arch.hidden, rng)
        if arch.head == "full":
            integration.init_integration(self.params, arch.n_rows, arch.hidden, arch.k, rng)
        elif arch.head == "similarity":
            integration.init_similarity_head(self.params, arch.k, rng)
        else:
            raise ContractError(f"unknown head mode {arch.head!r}")
        self.memory = memory_mod.init_memory(self.params, arch.k, arch.n_rows, arch.hidden)
        self.stats: NormalizationStats | None = None

    # -- graph path -------------------------------------------------------

    def risk_from_status(self, h: Node) -> Node:
        """Similarities, fusion, head; shared by patient and prototype scoring."""
        s = integration.cosine_similarities(self.memory.nodes, h)
        s_used = integration.transform_similarities(s, self.arch.similarity_transform)
        if self.arch.head == "similarity":
            return integration.predict_from_similarities(
                self.params["head_s/weight"], self.params["head_s/bias"], s_used)
        _, h_p = integration.integrate(self.params["integrate/w_h"], h, s_used)
        return integration.predict_risk(self.params["head/weight"],
                                        self.params["head/bias"], h_p)

    def predict_node(self, rec) -> Node:
        h = encoder.encode_patient(self.params, rec, self.arch.static_activation)
        return self.risk_from_status(h)

    def batch_risk_node(self, records) -> Node:
        """(B,) risk vector for a whole batch in one compact graph.

        Mathematically the same pipeline as predict_node row by row; training
        uses this form so the graph stays a few dozen nodes per batch.
        """
        h_flat = encoder.encode_batch(self.params, records, self.arch.static_activation)
        s = integration.cosine_bank(self.memory.nodes, h_flat)
        s_used = integration.transform_similarities_batch(s, self.arch.similarity_transform)
        if self.arch.head == "similarity":
            return integration.predict_from_similarities_batch(
                self.params["head_s/weight"], self.params["head_s/bias"], s_used)
        h_p = integration.integrate_batch(self.params["integrate/w_h"], h_flat, s_used)
        return integration.predict_risk_batch(self.params["head/weight"],
                                              self.params["head/bias"], h_p)

    # -- array path ---------------------------------------------------------

    def _values(self) -> dict:
        return {path: node.value for path, node in self.params.items()}

    def _risk_from_status_raw(self, h: np.ndarray) -> tuple[float, np.ndarray]:
        sims = integration.cosine_similarities_raw(self.memory.values(), h)
        s_used = integration.transform_similarities_raw(sims, self.arch.similarity_transform)
        if self.arch.head == "similarity":
            risk = integration.predict_from_similarities_raw(
                self.params["head_s/weight"].value, self.params["head_s/bias"].value, s_used)
        else:
            _, h_p = integration.integrate_raw(self.params["integrate/w_h"].value, h, s_used)
            risk = integration.predict_risk_raw(self.params["head/weight"].value,
                                                self.params["head/bias"].value, h_p)
        return risk, sims

    def prepare_record(self, rec: PatientRecord) -> PatientRecord:
        """Apply the stored normalization to a raw record (identity when the
        model carries no stats, e.g. in unit-scale tests)."""
        return normalize_record(rec, self.stats) if self.stats is not None else rec

    def predict(self, rec) -> PredictOutput:
        h = encoder.encode_patient_raw(self._values(), rec, self.arch.static_activation)
        risk, sims = self._risk_from_status_raw(h)
        return PredictOutput(risk=risk, similarities=sims, health_status=h)

    def prefix_predictions(self, rec) -> list[PredictOutput]:
        """One PredictOutput per visit prefix t = 1..T; the last one is
        bit-identical to ``predict(rec)``."""
        states = encoder.prefix_states_raw(self._values(), rec, self.arch.static_activation)
        out = []
        for t in range(states.shape[0]):
            risk, sims = self._risk_from_status_raw(states[t])
            out.append(PredictOutput(risk=risk, similarities=sims, health_status=states[t]))
        return out

    def embed_all(self, records) -> tuple[list[str], np.ndarray]:
        """Flattened embeddings of a record list, order preserved."""
        values = self._values()
        ids = [rec.id for rec in records]
        flats = np.stack([
            encoder.encode_patient_raw(values, rec, self.arch.static_activation).reshape(-1)
            for rec in records])
        return ids, flats

    def prototype_risks_raw(self) -> np.ndarray:
        return np.array([self._risk_from_status_raw(p)[0] for p in self.memory.values()])

    # -- persistence ---------------------------------------------------------

    def snapshot(self) -> dict:
        return {"values": self.params.values(),
                "memory": {"source_ids": list(self.memory.source_ids),
                           "frozen": self.memory.frozen,
                           "last_refresh_epoch": self.memory.last_refresh_epoch,
                           "initialized": self.memory.initialized,
                           "refresh_epochs": list(self.memory.refresh_epochs)}}

    def restore(self, snap: dict) -> None:
        self.params.load_values(snap["values"])
        mem = snap["memory"]
        self.memory.source_ids = list(mem["source_ids"])
        self.memory.frozen = bool(mem["frozen"])
        self.memory.last_refresh_epoch = int(mem["last_refresh_epoch"])
        self.memory.initialized = bool(mem["initialized"])
        self.memory.refresh_epochs = list(mem["refresh_epochs"])

    def encoder_paths(self) -> list[str]:
        return encoder.encoder_paths(self.arch.n_indicators)

    def prototype_paths(self) -> list[str]:
        return memory_mod.prototype_paths(self.arch.k)
