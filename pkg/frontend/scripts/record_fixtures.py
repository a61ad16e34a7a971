#!/usr/bin/env python3
"""Record real API payloads into tests/fixtures/ for replay tests.

Runs a small scripted session in-process (no sockets) and saves every
dashboard payload the workbench renders.
"""

from __future__ import annotations

import json
import time
from pathlib import Path

from fastapi.testclient import TestClient

from themekit.service import create_app
from themekit.session import Session, SessionConfig
from themekit.synth import planted_corpus

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"


def save(name: str, payload) -> None:
    FIXTURES.mkdir(parents=True, exist_ok=True)
    with open(FIXTURES / f"{name}.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
    print(f"recorded {name}.json")


def run_job(client, method, tau=None, commit=False):
    body = {"method": method}
    if tau is not None:
        body["tau"] = tau
    job_id = client.post("/mapping/run", json=body).json()["job_id"]
    while True:
        state = client.get(f"/mapping/jobs/{job_id}").json()
        if state["state"] in ("done", "failed"):
            break
        time.sleep(0.01)
    assert state["state"] == "done", state
    metrics = client.get(f"/mapping/jobs/{job_id}/metrics").json()
    committed = client.post("/mapping/commit", json={"job_id": job_id}).json() if commit else None
    return state, metrics, committed


def main() -> None:
    pc = planted_corpus(
        240, 4, dim=16, noise=0.7, concept_correlation=0.8,
        concepts={"stance": 3, "frame": 4}, seed=5,
    )
    session = Session(pc.schema, SessionConfig(k=4, tau=0.6, K=30, seed=5, embedder_dim=16))
    session.store.ingest(pc.records)
    client = TestClient(create_app(session))

    save("stats", client.get("/stats").json())
    save("schema", client.get("/schema").json())

    parts = client.post("/partitions/kmeans", json={"k": 4}).json()
    save("partitions", parts)
    pid = parts["partitions"][0]["partition_id"]
    save("members", client.get(f"/partitions/{pid}/members", params={"order": "closest-first", "limit": 8}).json())

    save("hits", client.post("/query/neighbors", json={"instance_id": pc.records[0]["id"], "k": 6}).json())

    theme_ids = []
    for b in range(3):
        tid = client.post("/themes", json={"name": f"Blob{b}"}).json()["theme_id"]
        theme_ids.append(tid)
        for rid in pc.ids_in_blob(b)[:3]:
            client.post(f"/themes/{tid}/exemplars", json={"polarity": "good", "source": rid})
        other = pc.ids_in_blob((b + 1) % 4)[0]
        client.post(f"/themes/{tid}/exemplars", json={"polarity": "bad", "source": other})
        client.post(f"/themes/{tid}/phrases", json={"text": f"explanatory phrase about blob {b}"})
    save("themes", client.get("/themes").json())

    job, metrics, committed = run_job(client, "nesy", tau=0.6, commit=True)
    save("job", job)
    save("job_metrics", metrics)
    save("commit", committed)

    tid = client.post("/themes", json={"name": "Blob3"}).json()["theme_id"]
    for rid in pc.ids_in_blob(3)[:3]:
        client.post(f"/themes/{tid}/exemplars", json={"polarity": "good", "source": rid})
    run_job(client, "nesy", tau=0.6, commit=True)

    save("coverage", client.get("/analytics/coverage").json())
    save("purity", client.get("/analytics/purity/average").json())
    save("quartiles", client.get("/analytics/quartiles").json())
    save("shift", client.get("/analytics/shift", params={"prev": 1, "next": 2}).json())
    save(
        "overlap",
        client.post(
            "/analytics/overlap",
            json={"a": {"iteration": 2}, "b": {"sets": {"blob0": pc.ids_in_blob(0), "blob1": pc.ids_in_blob(1)}}},
        ).json(),
    )
    save("explanation", client.get(f"/themes/{theme_ids[0]}/explanation").json())
    save("global", client.get("/analytics/global", params={"sample_size": 120}).json())
    quart = client.get("/analytics/quartiles").json()
    gold = {}
    for rid in quart["all_ids"][:20]:
        gold[rid] = client.get(f"/instances/{rid}").json()["assignment"]["theme_id"]
    save("evaluation", client.post("/analytics/evaluation", json={"gold": gold}).json())
    save("preview", client.get("/mapping/preview", params={"tau": 0.55}).json())
    save("session", client.get("/session").json())


if __name__ == "__main__":
    main()
