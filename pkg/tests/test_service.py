import base64
import io
import struct

import numpy as np
import pytest
from fastapi.testclient import TestClient

from partsight.detectors import MockDetector
from partsight.geometry import BoundingBox
from partsight.knowledge import HashingEmbedder, KnowledgeEntry, build_index
from partsight.service import create_app

from conftest import gradient_image


def kb_index():
    entries = [
        KnowledgeEntry("P1", "type_a_gear", "Type A Gear", "Primary drive gear.",
                       {"torque_spec": "12 Nm"}),
        KnowledgeEntry("P2", "type_a_cover", "Type A Cover", "Protective cover."),
    ]
    return build_index(entries, HashingEmbedder(dim=64))


def frame_payload(with_depth=False):
    payload = {
        "detections": [
            {"label": "type_a_gear", "bbox": [10, 10, 40, 40], "confidence": 0.9},
            {"label": "type_a_cover", "bbox": [60, 20, 110, 70], "confidence": 0.8},
        ]
    }
    if with_depth:
        payload["depth"] = {
            "synthetic": {
                "width": 128, "height": 96, "background": 8.0,
                "regions": [
                    {"bbox": [10, 10, 40, 40], "value": 2.0},
                    {"bbox": [60, 20, 110, 70], "value": 4.0},
                ],
            }
        }
    return payload


@pytest.fixture
def client():
    return TestClient(create_app(index=kb_index()))


class TestSessionEndpoints:
    def test_create_with_defaults(self, client):
        resp = client.post("/sessions", json={})
        assert resp.status_code == 201
        body = resp.json()
        assert body["state"] == "idle"
        assert body["config"]["window"] == 5
        assert body["config"]["conf_threshold"] == 0.4
        assert body["config"]["min_votes"] == 3
        assert body["config"]["top_k"] == 3

    def test_create_with_overrides(self, client):
        resp = client.post("/sessions", json={"config": {"top_k": 1, "window": 2}})
        assert resp.status_code == 201
        assert resp.json()["config"]["top_k"] == 1

    def test_invalid_override_rejected(self, client):
        resp = client.post("/sessions", json={"config": {"window": 0}})
        assert resp.status_code == 400
        body = resp.json()
        assert set(body) == {"code", "message", "retriable"}
        assert body["code"] == "bad_config"

    def test_full_query_flow(self, client):
        session_id = client.post("/sessions", json={"config": {"window": 3}}).json()["session_id"]
        assert client.post(f"/sessions/{session_id}/trigger").json()["state"] == "buffering"
        for i in range(3):
            resp = client.post(
                f"/sessions/{session_id}/frames",
                json=frame_payload(with_depth=(i == 2)),
            )
            assert resp.status_code == 200
        assert resp.json()["state"] == "gated"
        assert resp.json()["gated"] is True

        resp = client.post(f"/sessions/{session_id}/query",
                           json={"q": "which part is closest"})
        assert resp.status_code == 200
        body = resp.json()
        assert "Type A Gear" in body["answer"]
        assert [r["label"] for r in body["ranked"]] == ["type_a_gear", "type_a_cover"]
        assert body["ranked"][0]["depth"] == 2.0

        snap = client.get(f"/sessions/{session_id}").json()
        assert snap["state"] == "answered"
        assert snap["answer"] == body["answer"]

    def test_snapshot_never_shows_ranked_before_gate(self, client):
        session_id = client.post("/sessions", json={}).json()["session_id"]
        client.post(f"/sessions/{session_id}/trigger")
        client.post(f"/sessions/{session_id}/frames", json=frame_payload())
        snap = client.get(f"/sessions/{session_id}").json()
        assert snap["state"] == "buffering"
        assert snap["ranked"] == []

    def test_unknown_session_404(self, client):
        resp = client.get("/sessions/s9999")
        assert resp.status_code == 404
        assert resp.json()["code"] == "not_found"

    def test_push_before_trigger_409(self, client):
        session_id = client.post("/sessions", json={}).json()["session_id"]
        resp = client.post(f"/sessions/{session_id}/frames", json=frame_payload())
        assert resp.status_code == 409
        assert resp.json()["code"] == "invalid_state"
        assert resp.json()["retriable"] is False

    def test_query_before_gate_409(self, client):
        session_id = client.post("/sessions", json={}).json()["session_id"]
        client.post(f"/sessions/{session_id}/trigger")
        resp = client.post(f"/sessions/{session_id}/query", json={"q": "hello"})
        assert resp.status_code == 409

    def test_depth_missing_fail_reported_in_frame_response(self, client):
        session_id = client.post("/sessions", json={"config": {"window": 1}}).json()["session_id"]
        client.post(f"/sessions/{session_id}/trigger")
        resp = client.post(f"/sessions/{session_id}/frames", json=frame_payload())
        assert resp.status_code == 200
        body = resp.json()
        assert body["state"] == "failed"
        assert body["error"]["code"] == "depth_missing"
        assert body["error"]["retriable"] is True

    def test_b64_depth_payload(self, client):
        session_id = client.post("/sessions", json={"config": {"window": 1}}).json()["session_id"]
        client.post(f"/sessions/{session_id}/trigger")
        values = np.full((96, 128), 3.5, dtype="<f4")
        blob = b"DPTH" + struct.pack("<II", 128, 96) + values.tobytes()
        payload = frame_payload()
        payload["depth"] = {"b64": base64.b64encode(blob).decode()}
        resp = client.post(f"/sessions/{session_id}/frames", json=payload)
        assert resp.json()["state"] == "gated"

    def test_bad_depth_payload_400(self, client):
        session_id = client.post("/sessions", json={"config": {"window": 1}}).json()["session_id"]
        client.post(f"/sessions/{session_id}/trigger")
        payload = frame_payload()
        payload["depth"] = {"b64": base64.b64encode(b"garbage").decode()}
        resp = client.post(f"/sessions/{session_id}/frames", json=payload)
        assert resp.status_code == 400
        assert resp.json()["code"] == "bad_input"

    def test_healthz(self, client):
        body = client.get("/healthz").json()
        assert body["status"] == "ok"
        assert body["knowledge_entries"] == 2


class TestMultipartFrames:
    def make_client(self):
        annotations = {
            "frame0": [("type_a_gear", BoundingBox(10, 10, 40, 40))],
        }
        provider = MockDetector(annotations=annotations)
        return TestClient(create_app(index=kb_index(), provider=provider))

    def encode_png(self):
        from PIL import Image

        buf = io.BytesIO()
        Image.fromarray(gradient_image(128, 96)).save(buf, format="PNG")
        return buf.getvalue()

    def test_image_upload_runs_provider(self):
        client = self.make_client()
        session_id = client.post(
            "/sessions", json={"config": {"window": 1, "min_votes": 1}}
        ).json()["session_id"]
        client.post(f"/sessions/{session_id}/trigger")
        values = np.full((96, 128), 2.5, dtype="<f4")
        depth_blob = b"DPTH" + struct.pack("<II", 128, 96) + values.tobytes()
        resp = client.post(
            f"/sessions/{session_id}/frames",
            files={
                "image": ("frame0.png", self.encode_png(), "image/png"),
                "depth": ("d.dpth", depth_blob, "application/octet-stream"),
            },
        )
        assert resp.status_code == 200
        assert resp.json()["state"] == "gated"
        snap = client.get(f"/sessions/{session_id}").json()
        assert snap["ranked"][0]["label"] == "type_a_gear"

    def test_image_upload_without_provider_fails(self, client):
        session_id = client.post("/sessions", json={}).json()["session_id"]
        client.post(f"/sessions/{session_id}/trigger")
        resp = client.post(
            f"/sessions/{session_id}/frames",
            files={"image": ("f.png", self.encode_png(), "image/png")},
        )
        assert resp.status_code == 502
        assert resp.json()["code"] == "provider_error"

    def test_provider_wrapped_with_tta(self):
        annotations = {"frame0": [("type_a_gear", BoundingBox(10, 10, 40, 40))]}
        provider = MockDetector(annotations=annotations)
        client = TestClient(create_app(index=kb_index(), provider=provider,
                                       provider_wrapper="tta"))
        session_id = client.post(
            "/sessions", json={"config": {"window": 1, "min_votes": 1}}
        ).json()["session_id"]
        client.post(f"/sessions/{session_id}/trigger")
        values = np.full((96, 128), 2.5, dtype="<f4")
        depth_blob = b"DPTH" + struct.pack("<II", 128, 96) + values.tobytes()
        resp = client.post(
            f"/sessions/{session_id}/frames",
            files={
                "image": ("frame0.png", self.encode_png(), "image/png"),
                "depth": ("d.dpth", depth_blob, "application/octet-stream"),
            },
        )
        assert resp.json()["state"] == "gated"
        snap = client.get(f"/sessions/{session_id}").json()
        assert len(snap["ranked"]) == 1  # flip view fuses back onto the identity box
        assert snap["ranked"][0]["bbox"] == pytest.approx([10, 10, 40, 40], abs=1e-6)


def test_service_without_kb_reports_knowledge_error():
    client = TestClient(create_app())
    session_id = client.post("/sessions", json={"config": {"window": 1}}).json()["session_id"]
    client.post(f"/sessions/{session_id}/trigger")
    client.post(f"/sessions/{session_id}/frames", json=frame_payload(with_depth=True))
    resp = client.post(f"/sessions/{session_id}/query", json={"q": "what"})
    assert resp.status_code == 422
    assert resp.json()["code"] == "knowledge_error"
    # session stays queryable for a retry
    snap = client.get(f"/sessions/{session_id}").json()
    assert snap["state"] == "gated"
