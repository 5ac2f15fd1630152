"""HTTP service hosting the blinded reader study.

Endpoints:
  GET  /api/session/{reviewer}/next       next unjudged item or a done marker
  POST /api/session/{reviewer}/judgment   record {item_id, verdict}; 204
  GET  /api/image/{item_id}               blinded PNG payload
  GET  /api/report/tally                  per-reviewer tallies, finished only

Item ids are keyed hashes; image responses carry no filename or source
metadata. Verdicts must arrive in presentation order, exactly once each.
"""

from __future__ import annotations

from pathlib import Path
from typing import Literal

from fastapi import FastAPI, HTTPException, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .study import (
    ITEMS_DIR,
    DuplicateJudgmentError,
    JudgmentStore,
    StudyPlan,
    tally,
)


class JudgmentBody(BaseModel):
    item_id: str
    verdict: Literal["real", "fake"]


def create_app(
    plan: StudyPlan,
    store: JudgmentStore,
    study_dir: str | Path,
    frontend_dir: str | Path | None = None,
) -> FastAPI:
    items_dir = Path(study_dir) / ITEMS_DIR
    app = FastAPI(title="reader study")

    def _order_for(reviewer: str) -> list[str]:
        order = plan.orders.get(reviewer)
        if order is None:
            raise HTTPException(status_code=404, detail=f"unknown reviewer {reviewer!r}")
        return order

    @app.get("/api/session/{reviewer}/next")
    def next_item(reviewer: str) -> dict:
        order = _order_for(reviewer)
        judged = store.judged_items(reviewer)
        remaining = [item for item in order if item not in judged]
        if not remaining:
            return {"done": True, "total": len(order), "submitted": len(judged)}
        item_id = remaining[0]
        return {
            "done": False,
            "item_id": item_id,
            "index": len(judged) + 1,
            "total": len(order),
            "image_url": f"/api/image/{item_id}",
        }

    @app.post("/api/session/{reviewer}/judgment", status_code=204)
    def submit_judgment(reviewer: str, body: JudgmentBody) -> Response:
        order = _order_for(reviewer)
        judged = store.judged_items(reviewer)
        if body.item_id in judged:
            raise HTTPException(status_code=409, detail="duplicate judgment")
        remaining = [item for item in order if item not in judged]
        if not remaining or body.item_id != remaining[0]:
            raise HTTPException(status_code=409, detail="not the current item")
        try:
            store.record(reviewer, body.item_id, body.verdict)
        except DuplicateJudgmentError:
            raise HTTPException(status_code=409, detail="duplicate judgment")
        return Response(status_code=204)

    @app.get("/api/image/{item_id}")
    def item_image(item_id: str) -> Response:
        if item_id not in plan.items:
            raise HTTPException(status_code=404, detail="unknown item")
        payload = (items_dir / f"{item_id}.png").read_bytes()
        return Response(content=payload, media_type="image/png")

    @app.get("/api/report/tally")
    def report_tally() -> dict:
        tables = tally(store.records(), plan)
        finished = {}
        pending = []
        for reviewer, order in plan.orders.items():
            if len(store.judged_items(reviewer)) == len(order):
                table = tables[reviewer]
                finished[reviewer] = {
                    "counts": table.counts,
                    "shown": table.shown,
                    "column_totals": {t: table.column_total(t) for t in plan.source_tags},
                }
            else:
                pending.append(reviewer)
        return {"reviewers": finished, "pending": sorted(pending)}

    if frontend_dir is not None:
        app.mount("/", StaticFiles(directory=str(frontend_dir), html=True), name="frontend")
    return app


def serve(app: FastAPI, host: str = "127.0.0.1", port: int = 8000) -> None:
    import uvicorn

    uvicorn.run(app, host=host, port=port, log_level="info")
