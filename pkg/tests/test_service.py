import numpy as np
import pytest
from fastapi.testclient import TestClient

from handrig import dataset_io, synthrig
from handrig.geometry import project
from handrig.service import create_app
from handrig.session import SessionStore
from handrig.triangulation import reproject_all


@pytest.fixture
def backend(tmp_path):
    records = synthrig.make_dataset(3, seed=4, n_cameras=8)
    dataset = tmp_path / "ann.json"
    dataset_io.write_annotations(records, dataset)
    store = SessionStore(dataset, tmp_path / "sessions")
    return TestClient(create_app(store)), store


def open_session(client, capture="cap00", frame="f0000"):
    resp = client.post("/sessions", json={"capture_id": capture, "frame_id": frame})
    assert resp.status_code == 200, resp.text
    return resp.json()


def truth_click(store, session, joint_id, view_id):
    rec = next(r for r in store.frame_records(session["capture_id"], session["frame_id"])
               if r.camera_id == view_id)
    return project(rec.joints_world[joint_id], rec.camera)


class TestSessions:
    def test_open_session(self, backend):
        client, _ = backend
        doc = open_session(client)
        assert doc["format_version"] == "1"
        assert len(doc["view_ids"]) == 6
        assert doc["version"] == 0
        assert not doc["verified"]

    def test_get_session(self, backend):
        client, _ = backend
        doc = open_session(client)
        resp = client.get(f"/sessions/{doc['session_id']}")
        assert resp.status_code == 200
        assert resp.json()["session_id"] == doc["session_id"]

    def test_unknown_session_structured_error(self, backend):
        client, _ = backend
        resp = client.get("/sessions/snope")
        assert resp.status_code == 404
        err = resp.json()["error"]
        assert err["code"] == "UnknownSession"
        assert "message" in err and "field" in err

    def test_unknown_frame(self, backend):
        client, _ = backend
        resp = client.post("/sessions", json={"capture_id": "cap00", "frame_id": "zzz"})
        assert resp.status_code == 404
        assert resp.json()["error"]["code"] == "UnknownFrame"

    def test_malformed_body_structured_error(self, backend):
        client, _ = backend
        resp = client.post("/sessions", json={"capture_id": "cap00"})  # frame_id missing
        assert resp.status_code == 422
        err = resp.json()["error"]
        assert err["code"] == "ValidationError"
        assert err["field"] == "frame_id"

    def test_too_few_views_structured_error(self, backend):
        client, _ = backend
        resp = client.post("/sessions", json={"capture_id": "cap00", "frame_id": "f0000",
                                              "view_ids": ["cam000"]})
        assert resp.status_code == 400
        assert resp.json()["error"]["code"] == "InvalidArgument"


class TestClicks:
    def test_click_flow_matches_backend_reprojection(self, backend):
        client, store = backend
        doc = open_session(client)
        sid = doc["session_id"]
        joint = 11
        v0, v1 = doc["view_ids"][:2]
        u0, w0 = truth_click(store, doc, joint, v0)
        r1 = client.post(f"/sessions/{sid}/clicks",
                         json={"joint_id": joint, "view_id": v0, "u": u0, "v": w0})
        assert r1.status_code == 200
        assert r1.json()["status"] == "underdetermined"

        u1, w1 = truth_click(store, doc, joint, v1)
        r2 = client.post(f"/sessions/{sid}/clicks",
                         json={"joint_id": joint, "view_id": v1, "u": u1, "v": w1})
        body = r2.json()
        assert body["status"] == "triangulated"
        assert not body["flagged_residual"]
        assert body["triangulation"]["rms_reprojection_error"] < 1e-6

        # reprojections must agree with reproject_all on the same cameras
        cams = [c for c in store.frame_cameras("cap00", "f0000")
                if c.view_id in doc["view_ids"]]
        point = np.array(body["triangulation"]["point_world"])
        want = {r.view_id: r for r in reproject_all(point, cams)}
        for entry in body["reprojections"]:
            w = want[entry["view_id"]]
            assert abs(entry["u"] - w.u) < 1e-9
            assert abs(entry["v"] - w.v) < 1e-9

    def test_high_residual_flagged(self, backend):
        client, store = backend
        doc = open_session(client)
        sid = doc["session_id"]
        v0, v1 = doc["view_ids"][:2]
        u0, w0 = truth_click(store, doc, 2, v0)
        client.post(f"/sessions/{sid}/clicks",
                    json={"joint_id": 2, "view_id": v0, "u": u0, "v": w0})
        u1, w1 = truth_click(store, doc, 2, v1)
        r = client.post(f"/sessions/{sid}/clicks",
                        json={"joint_id": 2, "view_id": v1, "u": u1 + 50, "v": w1})
        assert r.json()["flagged_residual"]

    def test_stale_version_conflict(self, backend):
        client, _ = backend
        doc = open_session(client)
        sid = doc["session_id"]
        v0, v1 = doc["view_ids"][:2]
        client.post(f"/sessions/{sid}/clicks",
                    json={"joint_id": 0, "view_id": v0, "u": 1.0, "v": 1.0})
        r = client.post(f"/sessions/{sid}/clicks",
                        json={"joint_id": 0, "view_id": v1, "u": 2.0, "v": 2.0,
                              "expected_version": 0})
        assert r.status_code == 409
        assert r.json()["error"]["code"] == "StaleVersion"

    def test_undo_endpoint(self, backend):
        client, _ = backend
        doc = open_session(client)
        sid = doc["session_id"]
        v0 = doc["view_ids"][0]
        client.post(f"/sessions/{sid}/clicks",
                    json={"joint_id": 9, "view_id": v0, "u": 4.0, "v": 4.0})
        r = client.post(f"/sessions/{sid}/undo")
        assert r.status_code == 200
        joints = r.json()["joints"]
        assert "9" not in joints or joints["9"]["status"] == "unclicked"


class TestCommitAndFrames:
    def test_commit_produces_valid_dataset(self, backend, tmp_path):
        client, store = backend
        doc = open_session(client)
        sid = doc["session_id"]
        for joint in range(21):
            for view in doc["view_ids"][:2]:
                u, v = truth_click(store, doc, joint, view)
                client.post(f"/sessions/{sid}/clicks",
                            json={"joint_id": joint, "view_id": view, "u": u, "v": v})
        r = client.post(f"/sessions/{sid}/commit")
        assert r.status_code == 200
        body = r.json()
        assert body["committed_joints"] == 21
        assert body["records_updated"] == 8
        report = dataset_io.validate_dataset(store.dataset_path)
        assert report.ok, report.to_text()

    def test_commit_without_triangulations_conflict(self, backend):
        client, _ = backend
        doc = open_session(client)
        r = client.post(f"/sessions/{doc['session_id']}/commit")
        assert r.status_code == 409
        assert r.json()["error"]["code"] == "NothingToCommit"

    def test_frame_views(self, backend):
        client, _ = backend
        r = client.get("/frames/cap00/f0001/views")
        assert r.status_code == 200
        body = r.json()
        assert len(body["views"]) == 8
        first = body["views"][0]
        assert first["image_url"].startswith("/images/")
        assert first["image_size"] == [512, 334]

    def test_image_rendering(self, backend):
        client, _ = backend
        r = client.get("/images/cam000/f0000")
        assert r.status_code == 200
        assert r.headers["content-type"] == "image/png"
        assert r.content[:8] == b"\x89PNG\r\n\x1a\n"

    def test_frame_views_unknown_frame(self, backend):
        client, _ = backend
        r = client.get("/frames/cap00/zzz/views")
        assert r.status_code == 404
        assert r.json()["error"]["code"] == "UnknownFrame"

    def test_image_unknown_frame(self, backend):
        client, _ = backend
        r = client.get("/images/cam000/zzz")
        assert r.status_code == 404

    def test_image_cache_invalidated_on_commit(self, backend):
        client, store = backend
        before = client.get("/images/cam000/f0000").content
        doc = open_session(client)
        sid = doc["session_id"]
        for view in doc["view_ids"][:2]:
            u, v = truth_click(store, doc, 3, view)
            client.post(f"/sessions/{sid}/clicks",
                        json={"joint_id": 3, "view_id": view, "u": u, "v": v})
        client.post(f"/sessions/{sid}/commit")
        after = client.get("/images/cam000/f0000").content
        # only one joint committed now, so the rendering must change
        assert after != before
