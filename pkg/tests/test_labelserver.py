import pytest
from fastapi.testclient import TestClient

from infodemic.labelserver import create_app
from tests.test_active import build_session


@pytest.fixture()
def client(tmp_path):
    session = build_session(n_pool=40, n_seed=30, n_cycles=2, audit_path=tmp_path / "audit.jsonl")
    app = create_app(session)
    return TestClient(app), session


def submit_batch(client, batch, label="misinfo"):
    return client.post(
        "/api/v1/labels",
        json={
            "session_revision": batch["session_revision"],
            "labels": [
                {"tweet_id": item["tweet_id"], "label": label, "annotator_id": "tester"}
                for item in batch["items"]
            ],
        },
    )


class TestBatch:
    def test_fresh_session_batch_of_three_sorted_by_entropy(self, client):
        http, _ = client
        batch = http.get("/api/v1/batch").json()
        assert batch["status"] == "active"
        assert batch["cycle"] == 0
        assert len(batch["items"]) == 3
        entropies = [item["entropy"] for item in batch["items"]]
        assert entropies == sorted(entropies, reverse=True)

    def test_batch_idempotent_until_labels(self, client):
        http, _ = client
        assert http.get("/api/v1/batch").json() == http.get("/api/v1/batch").json()

    def test_new_batch_excludes_labeled_and_propagated(self, client):
        http, session = client
        batch = http.get("/api/v1/batch").json()
        assert submit_batch(http, batch).status_code == 200
        new_batch = http.get("/api/v1/batch").json()
        labeled = set(session.labeled)
        assert all(item["tweet_id"] not in labeled for item in new_batch["items"])
        old_ids = {i["tweet_id"] for i in batch["items"]}
        assert all(item["tweet_id"] not in old_ids for item in new_batch["items"])


class TestSubmit:
    def test_valid_submission_advances_cycle(self, client):
        http, _ = client
        batch = http.get("/api/v1/batch").json()
        result = submit_batch(http, batch).json()
        assert result["accepted"] == 3
        assert result["cycle"] == 1
        assert result["session_revision"] == batch["session_revision"] + 1
        assert "f1" in result["new_metrics"]

    def test_stale_revision_conflicts(self, client):
        http, _ = client
        batch = http.get("/api/v1/batch").json()
        assert submit_batch(http, batch).status_code == 200
        response = submit_batch(http, batch)
        assert response.status_code == 409
        assert response.json()["code"] == "revision_conflict"

    def test_unknown_id_rejected_others_processed(self, client):
        http, _ = client
        batch = http.get("/api/v1/batch").json()
        payload = {
            "session_revision": batch["session_revision"],
            "labels": [
                {"tweet_id": batch["items"][0]["tweet_id"], "label": "misinfo", "annotator_id": "t"},
                {"tweet_id": "ghost", "label": "misinfo", "annotator_id": "t"},
            ],
        }
        result = http.post("/api/v1/labels", json=payload).json()
        assert result["accepted"] == 1
        assert {"tweet_id": "ghost", "code": "not_in_batch"} in result["rejected"]

    def test_unknown_label_value_rejected(self, client):
        http, _ = client
        batch = http.get("/api/v1/batch").json()
        payload = {
            "session_revision": batch["session_revision"],
            "labels": [
                {"tweet_id": batch["items"][0]["tweet_id"], "label": "maybe", "annotator_id": "t"}
            ],
        }
        result = http.post("/api/v1/labels", json=payload).json()
        assert result["accepted"] == 0
        assert result["rejected"] == [{"tweet_id": batch["items"][0]["tweet_id"], "code": "unknown_label"}]

    def test_propagated_count_matches_audit_log(self, client, tmp_path):
        http, session = client
        batch = http.get("/api/v1/batch").json()
        target = batch["items"][0]["tweet_id"]
        batch_ids = {item["tweet_id"] for item in batch["items"]}
        near = [i for i in sorted(session.pool) if i not in batch_ids][:5]
        for i in near:
            session.texts[i] = session.texts[target]
        result = submit_batch(http, batch).json()
        propagated_events = [
            e for e in session.audit_events
            if e["event"] == "label" and e["source"]["kind"] == "propagated"
        ]
        assert result["propagated_count"] == len(propagated_events) >= 5


class TestStatusAndCompletion:
    def test_fresh_status(self, client):
        http, _ = client
        status = http.get("/api/v1/status").json()
        assert status["cycle"] == 0
        assert status["status"] == "active"
        assert len(status["metrics_history"]) == 1  # seed model

    def test_conservation_across_cycle(self, client):
        http, _ = client
        before = http.get("/api/v1/status").json()
        batch = http.get("/api/v1/batch").json()
        submit_batch(http, batch)
        after = http.get("/api/v1/status").json()
        assert (
            before["labeled_count"] + before["pool_count"]
            == after["labeled_count"] + after["pool_count"]
        )

    def test_completion_flow(self, client):
        http, _ = client
        for _ in range(2):  # n_cycles = 2
            batch = http.get("/api/v1/batch").json()
            assert submit_batch(http, batch).status_code == 200
        final = http.get("/api/v1/batch").json()
        assert final["status"] == "complete"
        assert final["items"] == []
        assert "final_metrics" in final
        response = submit_batch(http, {"session_revision": final["session_revision"], "items": []})
        assert response.status_code == 410
        assert response.json()["code"] == "session_complete"
        status = http.get("/api/v1/status").json()
        assert len(status["metrics_history"]) == 3

    def test_metrics_csv(self, client):
        http, _ = client
        text = http.get("/api/v1/metrics.csv").text
        lines = text.strip().splitlines()
        assert lines[0] == "cycle,accuracy,recall,precision,f1"
        assert len(lines) == 2

    def test_revision_increments_by_one_per_mutation(self, client):
        http, _ = client
        revisions = [http.get("/api/v1/status").json()["session_revision"]]
        for _ in range(2):
            batch = http.get("/api/v1/batch").json()
            submit_batch(http, batch)
            revisions.append(http.get("/api/v1/status").json()["session_revision"])
        assert revisions == [0, 1, 2]


class TestStaticServing:
    def test_static_dir_mounted(self, tmp_path):
        static = tmp_path / "ui"
        static.mkdir()
        (static / "index.html").write_text("<!doctype html><title>annotator</title>", encoding="utf-8")
        session = build_session(n_cycles=1)
        http = TestClient(create_app(session, static_dir=static))
        response = http.get("/")
        assert response.status_code == 200
        assert "annotator" in response.text
        assert http.get("/api/v1/status").status_code == 200
