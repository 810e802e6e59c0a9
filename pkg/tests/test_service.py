from __future__ import annotations

import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from replykit.classes import MergeAction, catalog_structural_hash, read_action_log, start_session
from replykit.classifier import SoftmaxModel, TrainingConfig
from replykit.clustering import complete_linkage_cluster
from replykit.service import ServiceStartupError, build_state, create_app
from replykit.similarity import SparseDistanceMatrix
from tests.conftest import make_table


def fixture_inputs(n: int = 4):
    table = make_table([f"text {i}" for i in range(n)], [10 * (n - i) for i in range(n)])
    cs = complete_linkage_cluster(SparseDistanceMatrix(n, {}), 0.25, counts=table.counts)
    return cs, table


@pytest.fixture
def client(tmp_path):
    cs, table = fixture_inputs()
    state = build_state(cs, table, top_n=4, log_path=tmp_path / "actions.log")
    return TestClient(create_app(state)), state, (cs, table, tmp_path)


class TestSessionEndpoints:
    def test_next_returns_highest_count_centroid(self, client):
        http, state, _ = client
        payload = http.get("/api/session/next").json()
        assert payload["complete"] is False
        assert payload["cursor"] == 0
        assert payload["cluster"]["centroid_text"] == "text 0"
        assert payload["cluster"]["total_count"] == 40
        assert payload["cluster"]["members"] == [{"text": "text 0", "count": 40}]
        assert payload["classes"] == []
        assert payload["progress"] == {"reviewed": 0, "total": 4}

    def test_action_advances_and_bumps_cursor(self, client):
        http, _, _ = client
        reply = http.post(
            "/api/session/action",
            json={"cursor": 0, "action": {"kind": "create", "name": "First"}},
        )
        assert reply.status_code == 200
        assert reply.json()["cursor"] == 1
        nxt = http.get("/api/session/next").json()
        assert nxt["cluster"]["centroid_text"] == "text 1"
        assert nxt["classes"] == [{"id": 0, "name": "First", "exemplar": "text 0"}]

    def test_stale_cursor_conflicts(self, client):
        http, _, _ = client
        assert http.post(
            "/api/session/action", json={"cursor": 0, "action": {"kind": "skip"}}
        ).status_code == 200
        reply = http.post("/api/session/action", json={"cursor": 0, "action": {"kind": "skip"}})
        assert reply.status_code == 409
        assert reply.json()["cursor"] == 1

    def test_domain_error_is_400_and_keeps_cursor(self, client):
        http, _, _ = client
        http.post("/api/session/action", json={"cursor": 0, "action": {"kind": "create", "name": "X"}})
        reply = http.post(
            "/api/session/action", json={"cursor": 1, "action": {"kind": "create", "name": "X"}}
        )
        assert reply.status_code == 400
        assert "already exists" in reply.json()["error"]
        assert http.get("/api/session/next").json()["cursor"] == 1

    def test_undo_round_trip(self, client):
        http, _, _ = client
        http.post("/api/session/action", json={"cursor": 0, "action": {"kind": "create", "name": "X"}})
        before = http.get("/api/session/next").json()
        http.post("/api/session/action", json={"cursor": 1, "action": {"kind": "assign", "class_id": 0}})
        reply = http.post("/api/session/action", json={"cursor": 2, "action": {"kind": "undo"}})
        assert reply.status_code == 200
        after = http.get("/api/session/next").json()
        assert after["cluster"] == before["cluster"]
        assert after["classes"] == before["classes"]

    def test_complete_session_payload(self, client):
        http, _, _ = client
        for cursor in range(4):
            http.post("/api/session/action", json={"cursor": cursor, "action": {"kind": "skip"}})
        payload = http.get("/api/session/next").json()
        assert payload["complete"] is True
        assert payload["cluster"] is None

    def test_export_catalog(self, client):
        http, state, _ = client
        assert http.get("/api/classes/export").status_code == 400  # nothing yet
        http.post("/api/session/action", json={"cursor": 0, "action": {"kind": "create", "name": "X"}})
        doc = http.get("/api/classes/export").json()
        assert doc["classes"][0]["name"] == "X"
        assert doc["hash"]


class TestWriteAheadLog:
    def test_acknowledged_actions_are_logged(self, client):
        http, state, (_, _, tmp_path) = client
        http.post("/api/session/action", json={"cursor": 0, "action": {"kind": "create", "name": "X"}})
        http.post("/api/session/action", json={"cursor": 1, "action": {"kind": "skip"}})
        _, actions = read_action_log(tmp_path / "actions.log")
        assert [a.kind for a in actions] == ["create", "skip"]
        assert actions[0].cluster_id == 0

    def test_restart_replays_to_identical_state(self, client):
        http, state, (cs, table, tmp_path) = client
        steps = [
            {"kind": "create", "name": "A"},
            {"kind": "assign", "class_id": 0},
            {"kind": "undo"},
            {"kind": "create", "name": "B"},
        ]
        for cursor, action in enumerate(steps):
            assert http.post(
                "/api/session/action", json={"cursor": cursor, "action": action}
            ).status_code == 200
        revived = build_state(cs, table, top_n=4, log_path=tmp_path / "actions.log")
        assert revived.session.snapshot() == state.session.snapshot()
        assert revived.token == state.token

    def test_crash_at_every_prefix_replays(self, client):
        http, state, (cs, table, tmp_path) = client
        log_path = tmp_path / "actions.log"
        actions = [
            {"kind": "skip"},
            {"kind": "create", "name": "A"},
            {"kind": "undo"},
            {"kind": "undo"},
        ]
        snapshots = []
        for cursor, action in enumerate(actions):
            http.post("/api/session/action", json={"cursor": cursor, "action": action})
            snapshots.append(state.session.snapshot())
        lines = log_path.read_text().splitlines()
        for prefix_len in range(1, len(actions) + 1):
            partial = tmp_path / f"partial-{prefix_len}.log"
            partial.write_text("\n".join(lines[: prefix_len + 1]) + "\n")
            revived = build_state(cs, table, top_n=4, log_path=partial)
            assert revived.session.snapshot() == snapshots[prefix_len - 1]

    def test_corrupt_log_refuses_start(self, tmp_path):
        cs, table = fixture_inputs()
        log_path = tmp_path / "actions.log"
        log_path.write_text('{"kind": "session", "top_n": 4, "cluster_set_hash": "h"}\n{oops\n')
        with pytest.raises(ServiceStartupError, match="corrupt"):
            build_state(cs, table, top_n=4, log_path=log_path)

    def test_log_from_other_cluster_set_rejected(self, tmp_path):
        cs, table = fixture_inputs()
        state = build_state(cs, table, top_n=4, log_path=tmp_path / "a.log")
        other_cs, other_table = fixture_inputs(3)
        with pytest.raises(ServiceStartupError, match="different cluster set"):
            build_state(other_cs, other_table, top_n=4, log_path=tmp_path / "a.log")

    def test_top_n_mismatch_rejected(self, tmp_path):
        cs, table = fixture_inputs()
        build_state(cs, table, top_n=4, log_path=tmp_path / "a.log")
        with pytest.raises(ServiceStartupError, match="top_n"):
            build_state(cs, table, top_n=2, log_path=tmp_path / "a.log")


class TestSuggestEndpoint:
    def make_model(self, catalog):
        cfg = TrainingConfig(feature_bits=8)
        return SoftmaxModel(
            weights=np.zeros((len(catalog), cfg.n_features)),
            bias=np.log(np.array([0.7, 0.2, 0.1])),
            config=cfg,
            catalog_hash=catalog_structural_hash(catalog),
        )

    def suggest_client(self, tmp_path):
        cs, table = fixture_inputs()
        session = start_session(cs, table, 4)
        for name in ("A", "B", "C"):
            session.apply_action(MergeAction(kind="create", name=name))
        catalog = session.classes
        model = self.make_model(catalog)
        state = build_state(
            cs, table, top_n=4, log_path=tmp_path / "s.log", model=model, catalog=catalog
        )
        return TestClient(create_app(state))

    def test_suggestion_payload(self, tmp_path):
        http = self.suggest_client(tmp_path)
        reply = http.post(
            "/api/suggest",
            json={"turns": [{"speaker": "patient", "text": "hi"}], "threshold": 0.5},
        )
        assert reply.status_code == 200
        body = reply.json()
        assert body["opted_out"] is False
        assert body["class_id"] == 0
        assert body["exemplar"] == "text 0"
        assert body["confidence"] == pytest.approx(0.7, abs=1e-9)

    def test_opt_out_payload_has_no_exemplar(self, tmp_path):
        http = self.suggest_client(tmp_path)
        body = http.post(
            "/api/suggest",
            json={"turns": [{"speaker": "patient", "text": "hi"}], "threshold": 0.9},
        ).json()
        assert body["opted_out"] is True
        assert "class_id" not in body and "exemplar" not in body

    def test_no_model_is_400(self, client):
        http, _, _ = client
        reply = http.post(
            "/api/suggest", json={"turns": [{"speaker": "patient", "text": "hi"}], "threshold": 0.5}
        )
        assert reply.status_code == 400

    def test_bad_speaker_rejected(self, tmp_path):
        http = self.suggest_client(tmp_path)
        reply = http.post(
            "/api/suggest", json={"turns": [{"speaker": "nurse", "text": "hi"}], "threshold": 0.5}
        )
        assert reply.status_code == 400

    def test_model_catalog_mismatch_refused_at_startup(self, tmp_path):
        cs, table = fixture_inputs()
        session = start_session(cs, table, 4)
        for name in ("A", "B", "C"):
            session.apply_action(MergeAction(kind="create", name=name))
        model = self.make_model(session.classes)
        session.classes[0].member_response_ids.add(99)
        with pytest.raises(ServiceStartupError, match="trained against"):
            build_state(cs, table, top_n=4, log_path=tmp_path / "x.log",
                        model=model, catalog=session.classes)


class TestStaticServing:
    def test_placeholder_page_without_bundle(self, client):
        http, _, _ = client
        reply = http.get("/")
        assert reply.status_code == 200
        assert "replykit" in reply.text

    def test_bundle_served_when_configured(self, tmp_path):
        cs, table = fixture_inputs()
        static = tmp_path / "static"
        static.mkdir()
        (static / "index.html").write_text("<html><body>BUNDLE</body></html>")
        state = build_state(cs, table, top_n=4, log_path=tmp_path / "b.log", static_dir=static)
        http = TestClient(create_app(state))
        assert "BUNDLE" in http.get("/").text
