"""HTTP API: lifecycle, jobs, phase locking, analytics endpoints, auth."""

from __future__ import annotations

import threading
import time

import pytest
from fastapi.testclient import TestClient

from themekit.service import create_app
from themekit.session import Session, SessionConfig
from themekit.synth import planted_corpus


def make_session(n=60, blobs=3, k=3, tau=0.6, seed=2, token=None, noise=0.5):
    pc = planted_corpus(n, blobs, dim=8, noise=noise, seed=seed)
    config = SessionConfig(k=k, tau=tau, K=20, seed=seed, embedder_dim=8, token=token)
    session = Session(pc.schema, config)
    session.store.ingest(pc.records)
    return pc, session


@pytest.fixture
def world():
    pc, session = make_session()
    return pc, session, TestClient(create_app(session))


def seed_themes(pc, client, blobs=(0, 1, 2), good=2):
    theme_ids = {}
    for b in blobs:
        r = client.post("/themes", json={"name": f"Blob{b}"})
        assert r.status_code == 201, r.text
        tid = r.json()["theme_id"]
        theme_ids[b] = tid
        for rid in pc.ids_in_blob(b)[:good]:
            r = client.post(f"/themes/{tid}/exemplars", json={"polarity": "good", "source": rid})
            assert r.status_code == 200, r.text
    return theme_ids


def run_and_commit(client, method="nns", tau=None, timeout=30.0):
    body = {"method": method}
    if tau is not None:
        body["tau"] = tau
    r = client.post("/mapping/run", json=body)
    assert r.status_code == 202, r.text
    job_id = r.json()["job_id"]
    deadline = time.time() + timeout
    while time.time() < deadline:
        state = client.get(f"/mapping/jobs/{job_id}").json()
        if state["state"] in ("done", "failed"):
            break
        time.sleep(0.02)
    assert state["state"] == "done", state
    commit = client.post("/mapping/commit", json={"job_id": job_id})
    assert commit.status_code == 200, commit.text
    return job_id, commit.json()


def test_stats_readback_matches_ingest(world):
    pc, session, client = world
    stats = client.get("/stats").json()
    assert stats["instance_count"] == len(pc.records)
    assert stats["unassigned_count"] == len(pc.records)
    schema = client.get("/schema").json()
    assert set(schema) == {"stance", "frame"}


def test_partition_and_member_listing(world):
    pc, session, client = world
    r = client.post("/partitions/kmeans", json={"k": 3})
    parts = r.json()["partitions"]
    assert len(parts) == 3
    assert sum(p["size"] for p in parts) == len(pc.records)
    pid = parts[0]["partition_id"]
    members = client.get(f"/partitions/{pid}/members", params={"order": "closest-first"}).json()
    assert members["members"]
    sims_listing = client.get(
        f"/partitions/{pid}/members", params={"order": "farthest-first"}
    ).json()
    assert sims_listing["members"]


def test_text_and_neighbor_queries(world):
    pc, session, client = world
    some_id = pc.records[0]["id"]
    r = client.post("/query/neighbors", json={"instance_id": some_id, "k": 5})
    hits = r.json()["hits"]
    assert hits[0]["id"] == some_id
    r2 = client.post("/query/text", json={"text": "anything goes", "k": 3})
    assert len(r2.json()["hits"]) == 3
    bad = client.post("/query/text", json={"text": "", "k": 3})
    assert bad.status_code == 400


def test_theme_crud_and_concept_edit(world):
    pc, session, client = world
    tid = client.post("/themes", json={"name": "First"}).json()["theme_id"]
    assert client.post("/themes", json={"name": "First"}).status_code == 409
    renamed = client.patch(f"/themes/{tid}", json={"name": "Renamed"})
    assert renamed.json()["name"] == "Renamed"
    some_id = pc.records[0]["id"]
    client.post(f"/themes/{tid}/exemplars", json={"polarity": "good", "source": some_id})
    inst = client.get(f"/instances/{some_id}").json()
    assert inst["assignment"]["theme_id"] == tid
    edited = client.post(
        f"/instances/{some_id}/concepts", json={"edits": {"stance": "stance_v1"}}
    ).json()
    assert edited["concepts"]["stance"] == "stance_v1"
    assert edited["corrected"] == ["stance"]
    deleted = client.delete(f"/themes/{tid}").json()
    assert deleted["released_instances"] == 1
    assert client.get(f"/instances/{some_id}").json()["assignment"]["theme_id"] is None


def test_error_payload_shape(world):
    _, _, client = world
    r = client.get("/instances/not-a-real-id")
    assert r.status_code == 404
    body = r.json()
    assert body["code"] == "unknown_instance"
    assert "message" in body and "detail" in body


def test_mapping_job_lifecycle_and_phase_lock(world):
    pc, session, client = world
    seed_themes(pc, client)
    gate = threading.Event()
    original = session.run_mapping

    def slow(*args, **kwargs):
        gate.wait(timeout=10)
        return original(*args, **kwargs)

    session.run_mapping = slow
    try:
        r = client.post("/mapping/run", json={"method": "nns"})
        assert r.status_code == 202
        job_id = r.json()["job_id"]
        # interventions are locked while the job runs
        conflict = client.post("/themes", json={"name": "Blocked"})
        assert conflict.status_code == 409
        assert conflict.json()["code"] == "phase_conflict"
        second_job = client.post("/mapping/run", json={"method": "nns"})
        assert second_job.status_code == 409
        assert client.get("/session").json()["phase"] == "mapping"
    finally:
        gate.set()
        session.run_mapping = original
    deadline = time.time() + 20
    while time.time() < deadline:
        state = client.get(f"/mapping/jobs/{job_id}").json()
        if state["state"] == "done":
            break
        time.sleep(0.02)
    assert state["state"] == "done"
    assert client.get("/session").json()["phase"] == "exploring"


def test_commit_increments_iteration_and_repartitions(world):
    pc, session, client = world
    seed_themes(pc, client)
    before = client.get("/session").json()["iteration"]
    _, commit = run_and_commit(client, method="nns", tau=0.95)
    after = client.get("/session").json()
    assert after["iteration"] == before + 1
    assert commit["committed_iteration"] == before
    assert commit["partitions"]  # re-partitioned over the unassigned remainder
    listed = client.get("/partitions").json()["partitions"]
    assert [p["partition_id"] for p in listed] == [
        p["partition_id"] for p in commit["partitions"]
    ]


def test_commit_idempotent(world):
    pc, session, client = world
    seed_themes(pc, client)
    job_id, first = run_and_commit(client, method="nns", tau=0.9)
    again = client.post("/mapping/commit", json={"job_id": job_id})
    assert again.status_code == 200
    assert again.json() == first
    assert client.get("/session").json()["iteration"] == first["iteration"]


def test_analytics_endpoints_after_commit(world):
    pc, session, client = world
    seed_themes(pc, client)
    run_and_commit(client, method="nns", tau=0.2)
    cov = client.get("/analytics/coverage").json()
    assert 0.0 < cov["coverage"] <= 100.0
    purity = client.get("/analytics/purity", params={"concept": "stance"}).json()
    assert 0.0 <= purity["purity"] <= 100.0
    avg = client.get("/analytics/purity/average").json()
    assert set(avg["per_concept"]) == {"stance", "frame"}
    quart = client.get("/analytics/quartiles").json()
    assert quart["sizes"]["Q1"] <= quart["sizes"]["Q2"] <= quart["sizes"]["All"]
    glob = client.get("/analytics/global").json()
    assert abs(sum(v["percent"] for v in glob["distribution"].values()) - 100.0) < 1e-9
    overlap = client.post(
        "/analytics/overlap",
        json={"a": {"iteration": 1}, "b": {"sets": {"ext": pc.ids_in_blob(0)}}},
    ).json()
    assert overlap["rows"]
    preview = client.get("/mapping/preview", params={"tau": 0.4}).json()
    assert 0.0 <= preview["coverage"] <= 100.0


def test_theme_members_and_explanation(world):
    pc, session, client = world
    theme_ids = seed_themes(pc, client)
    run_and_commit(client, method="nns", tau=0.2)
    tid = theme_ids[0]
    members = client.get(f"/themes/{tid}/members", params={"order": "closest-first"}).json()
    sims = [m["similarity"] for m in members["members"]]
    assert sims == sorted(sims, reverse=True)
    explanation = client.get(f"/themes/{tid}/explanation").json()
    assert explanation["member_count"] >= 1
    assert explanation["name"] == "Blob0"


def test_shift_between_iterations(world):
    pc, session, client = world
    theme_ids = seed_themes(pc, client, blobs=(0, 1))
    run_and_commit(client, method="nns", tau=0.6)
    # add the third theme and remap: mass should be able to move
    r = client.post("/themes", json={"name": "Blob2"})
    tid = r.json()["theme_id"]
    for rid in pc.ids_in_blob(2)[:2]:
        client.post(f"/themes/{tid}/exemplars", json={"polarity": "good", "source": rid})
    run_and_commit(client, method="nns", tau=0.6)
    shift = client.get("/analytics/shift", params={"prev": 1, "next": 2}).json()
    total = sum(sum(row) for row in shift["values"])
    assert abs(total - 100.0) < 1e-9
    assert "Blob2" in shift["cols"]


def test_evaluation_and_sampling(world):
    pc, session, client = world
    seed_themes(pc, client)
    run_and_commit(client, method="nns", tau=0.2)
    quart = client.get("/analytics/quartiles").json()
    mapped = quart["all_ids"]
    snapshot = {rid: client.get(f"/instances/{rid}").json()["assignment"]["theme_id"] for rid in mapped[:10]}
    report = client.post("/analytics/evaluation", json={"gold": snapshot}).json()
    assert report["f1_by_slice"]["All"] == 100.0
    sample = client.post("/analytics/sample", json={"n": 8, "seed": 1}).json()
    assert len(sample["ids"]) == 8


def test_export_import_roundtrip_via_api(world, tmp_path):
    pc, session, client = world
    seed_themes(pc, client)
    run_and_commit(client, method="nns", tau=0.6)
    path = str(tmp_path / "session.json")
    exported = client.post("/session/export", json={"path": path}).json()
    cov_before = client.get("/analytics/coverage").json()

    pc2, fresh = make_session()
    client2 = TestClient(create_app(fresh))
    imported = client2.post("/session/import", json={"path": path}).json()
    assert imported["iteration"] == client.get("/session").json()["iteration"]
    assert client2.get("/analytics/coverage").json() == cov_before
    re_exported = client2.get("/session/snapshot").content
    with open(path, "rb") as fh:
        assert fh.read() == re_exported


def test_feedback_file_roundtrip(world, tmp_path):
    pc, session, client = world
    seed_themes(pc, client)
    path = str(tmp_path / "feedback.json")
    exported = client.post("/themes/export", json={"path": path}).json()
    assert exported["themes"] == 3
    themes_before = client.get("/themes").json()

    pc2, fresh = make_session()
    client2 = TestClient(create_app(fresh))
    imported = client2.post("/themes/import", json={"path": path}).json()
    assert imported["themes"] == 3
    # the feedback file carries the registry, not assignment state
    def strip(payload):
        return [{k: v for k, v in t.items() if k != "mapped_count"} for t in payload["themes"]]

    assert strip(client2.get("/themes").json()) == strip(themes_before)


def test_report_files_written(world, tmp_path):
    pc, session, client = world
    theme_ids = seed_themes(pc, client, blobs=(0, 1))
    run_and_commit(client, method="nns", tau=0.4)
    for rid in pc.ids_in_blob(2)[:2]:
        client.post(f"/themes/{theme_ids[0]}/exemplars", json={"polarity": "good", "source": rid})
    run_and_commit(client, method="nns", tau=0.4)
    out = tmp_path / "report"
    payload = client.post(
        "/analytics/report", json={"path": str(out), "prev_iteration": 1}
    ).json()
    manifest = payload["manifest"]
    assert set(manifest["files"]) >= {"coverage.tsv", "purity.tsv", "distribution.tsv", "shift.tsv"}
    cov = client.get("/analytics/coverage").json()
    lines = (out / "coverage.tsv").read_text().strip().splitlines()
    header, row = lines[0].split("\t"), lines[1].split("\t")
    assert float(row[header.index("coverage_percent")]) == cov["coverage"]
    assert (out / "manifest.json").exists()


def test_model_file_for_nesy_job(world, tmp_path):
    pc, session, client = world
    seed_themes(pc, client)
    r = client.post("/mapping/run", json={"method": "nesy"})
    job_id = r.json()["job_id"]
    deadline = time.time() + 30
    while time.time() < deadline:
        state = client.get(f"/mapping/jobs/{job_id}").json()
        if state["state"] in ("done", "failed"):
            break
        time.sleep(0.02)
    assert state["state"] == "done"
    blob = client.get(f"/mapping/jobs/{job_id}/model").content
    from themekit.mapper import RuleWeightModel

    model = RuleWeightModel.loads(blob.decode())
    assert set(model.theme_ids) == {t["theme_id"] for t in client.get("/themes").json()["themes"]}


def test_static_token_auth():
    pc, session = make_session(token="sekrit")
    client = TestClient(create_app(session))
    assert client.get("/stats").status_code == 401
    ok = client.get("/stats", headers={"Authorization": "Bearer sekrit"})
    assert ok.status_code == 200
    ok2 = client.get("/stats", headers={"X-Auth-Token": "sekrit"})
    assert ok2.status_code == 200
    assert client.get("/healthz").status_code == 200  # liveness stays open
