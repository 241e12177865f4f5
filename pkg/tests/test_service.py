import io
import json

import imageio.v3 as iio
import pytest
import torch
from fastapi.testclient import TestClient

from stillmotion.errors import ConfigurationError
from stillmotion.dataset import Codebook
from stillmotion.imageops import denormalize_image
from stillmotion.service import EditEngine, create_app


@pytest.fixture(scope="module")
def client(request):
    motion_rig = request.getfixturevalue("motion_rig")
    appearance_rig = request.getfixturevalue("appearance_rig")
    engine = EditEngine(
        motion_predictor=motion_rig["result"].predictor,
        appearance_predictor=appearance_rig["result"].predictor,
        motion_codebook=motion_rig["result"].codebook,
        appearance_codebook=appearance_rig["result"].codebook,
        preview_frame_count=4,
        optimize_steps=5,
        optimize_time_budget_s=20.0,
        seed=0,
    )
    return TestClient(create_app(engine))


def png_upload(image: torch.Tensor) -> dict:
    buf = io.BytesIO()
    iio.imwrite(buf, denormalize_image(image), extension=".png")
    return {"image": ("photo.png", buf.getvalue(), "image/png")}


@pytest.fixture(scope="module")
def session_id(client, request) -> str:
    img = request.getfixturevalue("motion_rig")["clips"][0].frames[0]
    resp = client.post("/sessions", files=png_upload(img))
    assert resp.status_code == 201
    return resp.json()["session_id"]


def arrow_doc() -> dict:
    return {
        "version": 1, "height": 64, "width": 64,
        "arrows": [{"x": 32, "y": 32, "dx": 6, "dy": 0}],
        "patches": [],
    }


class TestSessions:
    def test_valid_png_creates_session(self, client, motion_rig):
        resp = client.post(
            "/sessions", files=png_upload(motion_rig["clips"][0].frames[0])
        )
        assert resp.status_code == 201
        body = resp.json()
        assert body["height"] == 64 and body["width"] == 64

    def test_two_uploads_distinct_ids(self, client, motion_rig):
        img = motion_rig["clips"][0].frames[0]
        a = client.post("/sessions", files=png_upload(img)).json()["session_id"]
        b = client.post("/sessions", files=png_upload(img)).json()["session_id"]
        assert a != b

    def test_empty_body_rejected(self, client):
        resp = client.post("/sessions", files={"image": ("x.png", b"", "image/png")})
        assert resp.status_code == 400

    def test_undecodable_rejected(self, client):
        resp = client.post("/sessions", files={"image": ("x.png", b"junk", "image/png")})
        assert resp.status_code == 400

    def test_oversized_rejected(self, motion_rig, appearance_rig):
        engine = EditEngine(
            motion_predictor=motion_rig["result"].predictor,
            appearance_predictor=appearance_rig["result"].predictor,
            motion_codebook=motion_rig["result"].codebook,
            appearance_codebook=appearance_rig["result"].codebook,
            max_upload_bytes=64,
        )
        small_client = TestClient(create_app(engine))
        resp = small_client.post(
            "/sessions", files=png_upload(motion_rig["clips"][0].frames[0])
        )
        assert resp.status_code == 413

    def test_empty_codebooks_rejected_at_engine_build(self, motion_rig, appearance_rig):
        with pytest.raises(ConfigurationError):
            EditEngine(
                motion_predictor=motion_rig["result"].predictor,
                appearance_predictor=appearance_rig["result"].predictor,
                motion_codebook=Codebook(kind="motion"),
                appearance_codebook=appearance_rig["result"].codebook,
            )


class TestAnnotationEndpoints:
    def test_unknown_session_404(self, client):
        resp = client.post("/sessions/nope/annotations/motion", json=arrow_doc())
        assert resp.status_code == 404

    def test_empty_annotation_422(self, client, session_id):
        doc = arrow_doc()
        doc["arrows"] = []
        resp = client.post(f"/sessions/{session_id}/annotations/motion", json=doc)
        assert resp.status_code == 422

    def test_motion_optimization_updates_code(self, client, session_id):
        before = client.get(f"/sessions/{session_id}/state").json()
        resp = client.post(f"/sessions/{session_id}/annotations/motion", json=arrow_doc())
        assert resp.status_code == 200
        body = resp.json()
        assert len(body["code"]) == 8
        assert len(body["objective_trace"]) >= 1
        assert body["best_objective"] <= body["objective_trace"][0]
        after = client.get(f"/sessions/{session_id}/state").json()
        assert after["revision"] == before["revision"] + 1
        assert after["motion_code"] == body["code"]

    def test_appearance_optimization_updates_codes(self, client, session_id, appearance_rig):
        patch_img = torch.full((8, 8, 3), 0.7)
        buf = io.BytesIO()
        iio.imwrite(buf, denormalize_image(patch_img), extension=".png")
        import base64

        doc = {
            "version": 1, "height": 64, "width": 64, "arrows": [],
            "patches": [{
                "x": 4, "y": 4, "width": 8, "height": 8,
                "image_data": base64.b64encode(buf.getvalue()).decode(),
            }],
        }
        resp = client.post(f"/sessions/{session_id}/annotations/appearance", json=doc)
        assert resp.status_code == 200
        body = resp.json()
        assert body["best_objective"] <= body["objective_trace"][0]
        state = client.get(f"/sessions/{session_id}/state").json()
        assert state["appearance_codes"][-1] == body["code"]


class TestPreview:
    def test_preview_returns_frames(self, client, session_id):
        resp = client.get(f"/sessions/{session_id}/preview", params={"count": 2, "w": 16, "h": 16})
        assert resp.status_code == 200
        body = resp.json()
        assert len(body["frames"]) == 2
        png = iio.imread(io.BytesIO(__import__("base64").b64decode(body["frames"][0])))
        assert png.shape == (16, 16, 3)

    def test_repeat_request_byte_identical(self, client, session_id):
        params = {"count": 2, "w": 16, "h": 16}
        a = client.get(f"/sessions/{session_id}/preview", params=params)
        b = client.get(f"/sessions/{session_id}/preview", params=params)
        assert a.json()["frames"] == b.json()["frames"]
        assert a.headers["ETag"] == b.headers["ETag"]

    def test_range_out_of_bounds_416(self, client, session_id):
        resp = client.get(f"/sessions/{session_id}/preview", params={"frm": 3, "count": 5})
        assert resp.status_code == 416

    def test_sixteen_frame_preview_within_budget(self, motion_rig, appearance_rig):
        import time

        engine = EditEngine(
            motion_predictor=motion_rig["result"].predictor,
            appearance_predictor=appearance_rig["result"].predictor,
            motion_codebook=motion_rig["result"].codebook,
            appearance_codebook=appearance_rig["result"].codebook,
            preview_frame_count=16,
            seed=0,
        )
        c = TestClient(create_app(engine))
        sid = c.post(
            "/sessions", files=png_upload(motion_rig["clips"][0].frames[0])
        ).json()["session_id"]
        start = time.time()
        resp = c.get(f"/sessions/{sid}/preview", params={"count": 16, "w": 128, "h": 72})
        elapsed = time.time() - start
        assert resp.status_code == 200
        assert len(resp.json()["frames"]) == 16
        assert elapsed < 10.0, f"preview took {elapsed:.1f}s"

    def test_code_change_invalidates_etag(self, client, session_id):
        params = {"count": 1, "w": 16, "h": 16}
        before = client.get(f"/sessions/{session_id}/preview", params=params).headers["ETag"]
        client.post(f"/sessions/{session_id}/annotations/motion", json=arrow_doc())
        after = client.get(f"/sessions/{session_id}/preview", params=params).headers["ETag"]
        assert before != after


class TestWeightImmutability:
    def test_no_endpoint_mutates_network_weights(self, client, session_id,
                                                 motion_rig, appearance_rig):
        from conftest import state_checksum

        motion_before = state_checksum(motion_rig["result"].predictor)
        appearance_before = state_checksum(appearance_rig["result"].predictor)
        client.post(f"/sessions/{session_id}/annotations/motion", json=arrow_doc())
        client.get(f"/sessions/{session_id}/preview", params={"count": 1, "w": 16, "h": 16})
        assert state_checksum(motion_rig["result"].predictor) == motion_before
        assert state_checksum(appearance_rig["result"].predictor) == appearance_before


class TestCodebooks:
    def test_motion_codebook_served(self, client):
        resp = client.get("/codebooks/motion")
        assert resp.status_code == 200
        body = resp.json()
        assert body["kind"] == "motion"
        assert all(len(e["code"]) == 8 for e in body["entries"])

    def test_appearance_codebook_served(self, client):
        body = client.get("/codebooks/appearance").json()
        assert all(len(e["code_sequence"][0]) == 8 for e in body["entries"])

    def test_unknown_kind_404(self, client):
        assert client.get("/codebooks/texture").status_code == 404
