"""HTTP inference and interpretation service.

Serves a frozen model (and optionally a mounted dataset) to the explorer
UI.  Every endpoint is read-only; no request mutates server state, so
concurrent requests are safe.  Malformed bodies return 400 with per-field
messages; unknown ids return 404.
"""

from __future__ import annotations

from typing import Optional

from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import interpretation
from .data import Dataset, IngestionError, record_from_dict
from .model import Model


class VisitBody(BaseModel):
    values: list[Optional[float]]
    mask: Optional[list[bool]] = None


class PatientBody(BaseModel):
    id: Optional[str] = None
    visits: list[VisitBody]
    static: list[float]
    label: Optional[int] = 0


def _cohort_json(c: interpretation.CohortSet) -> dict:
    return {"prototype": c.prototype_index, "size": c.size,
            "positive_rate": c.positive_rate, "static_means": c.static_means,
            "member_ids": c.member_ids}


def create_app(model: Model, dataset: Dataset | None = None) -> FastAPI:
    app = FastAPI(title="ppn service")
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"])

    # cards and cohorts are frozen with the model; compute once at mount time
    cards = interpretation.prototype_cards(model, dataset) if dataset is not None else None
    by_id = {rec.id: rec for rec in dataset.records} if dataset is not None else {}

    @app.exception_handler(RequestValidationError)
    async def _validation_handler(request: Request, exc: RequestValidationError):
        details = [{"field": ".".join(str(p) for p in err["loc"] if p != "body"),
                    "message": err["msg"]} for err in exc.errors()]
        return JSONResponse(status_code=400, content={"detail": details})

    @app.get("/api/health")
    def health():
        return {"status": "ok", "k": model.arch.k,
                "indicators": model.arch.indicator_names,
                "statics": model.arch.static_names,
                "dataset_mounted": dataset is not None}

    @app.get("/api/prototypes")
    def prototypes():
        risks = model.prototype_risks_raw()
        if cards is None:
            return [{"index": j, "source_id": sid, "risk": float(risks[j]),
                     "source_statics": None, "source_label": None, "cohort": None}
                    for j, sid in enumerate(model.memory.source_ids)]
        return [{"index": card.index, "source_id": card.source_id,
                 "risk": card.risk, "source_statics": card.source_statics,
                 "source_label": card.source_label,
                 "cohort": _cohort_json(card.cohort)} for card in cards]

    @app.get("/api/prototypes/{j}/cohort")
    def cohort(j: int):
        if not 0 <= j < model.arch.k:
            raise HTTPException(status_code=404, detail=f"no prototype {j}")
        if cards is None:
            raise HTTPException(status_code=404, detail="no dataset mounted")
        return _cohort_json(cards[j].cohort)

    @app.get("/api/patients")
    def patients():
        if dataset is None:
            raise HTTPException(status_code=404, detail="no dataset mounted")
        return [{"id": rec.id, "label": rec.label, "n_visits": rec.n_visits,
                 "meta": rec.meta} for rec in dataset.records]

    @app.get("/api/patients/{patient_id}")
    def patient(patient_id: str):
        if dataset is None:
            raise HTTPException(status_code=404, detail="no dataset mounted")
        rec = by_id.get(patient_id)
        if rec is None:
            raise HTTPException(status_code=404, detail=f"unknown patient {patient_id!r}")
        from .data import record_to_dict
        obj = record_to_dict(rec)
        obj["indicators"] = dataset.indicator_names
        obj["statics"] = dataset.static_names
        return obj

    @app.post("/api/predict")
    def predict(body: PatientBody, trajectory: bool = False):
        obj = {k: v for k, v in body.model_dump().items() if v is not None}
        try:
            rec = record_from_dict(obj, model.arch.n_indicators)
        except IngestionError as exc:
            raise HTTPException(status_code=400,
                                detail=[{"field": "visits", "message": str(exc)}]) from None
        if rec.static.shape[0] != len(model.arch.static_names):
            raise HTTPException(status_code=400, detail=[{
                "field": "static",
                "message": f"expected {len(model.arch.static_names)} statics, "
                           f"got {rec.static.shape[0]}"}])
        prepared = model.prepare_record(rec)
        out = model.predict(prepared)
        resp = {"risk": out.risk,
                "similarity": [float(v) for v in out.similarities],
                "nearest_prototype": out.nearest}
        if trajectory:
            entries = interpretation.trajectory(model, rec)
            resp["trajectory"] = [{"t": e.t, "similarity": e.similarities,
                                   "nearest_prototype": e.nearest, "risk": e.risk}
                                  for e in entries]
        return resp

    return app


def run_service(model: Model, dataset: Dataset | None = None,
                host: str = "127.0.0.1", port: int = 8000) -> None:
    import uvicorn
    uvicorn.run(create_app(model, dataset), host=host, port=port, log_level="warning")
