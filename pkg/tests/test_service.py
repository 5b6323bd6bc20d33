"""Tests for the HTTP service: payloads, status codes, jobs, determinism."""

import base64
import json
import time

import numpy as np
import numpy.testing as npt
import pytest
from fastapi.testclient import TestClient

from tenstat import render
from tenstat.cli import cli_main
from tenstat.service import create_app
from tenstat.tracto import read_streamlines


def wait_for_job(client, job_id, timeout=60.0):
    deadline = time.monotonic() + timeout
    progresses = []
    while time.monotonic() < deadline:
        doc = client.get(f"/jobs/{job_id}").json()
        progresses.append(doc["progress"])
        if doc["status"] in ("done", "failed", "canceled"):
            return doc, progresses
        time.sleep(0.02)
    raise TimeoutError(f"job {job_id} still {doc['status']} after {timeout}s")


@pytest.fixture(scope="module")
def studio(tmp_path_factory):
    """One app over two synthetic studies plus a test, threshold, and compare."""
    root = tmp_path_factory.mktemp("service")
    assert cli_main(["synth", "--out", str(root / "a"), "--subjects", "5", "--noise", "0.05", "--seed", "9", "--dims", "14,12,10"]) == 0
    assert cli_main(["synth", "--out", str(root / "b"), "--subjects", "2", "--noise", "0.05", "--seed", "3", "--dims", "14,12,10"]) == 0
    app = create_app(data_dir=root)
    client = TestClient(app)

    def post_study(sub):
        manifest = json.loads((root / sub / "study.json").read_text())
        for subject in manifest["subjects"]:
            subject["tensor_file"] = f"{sub}/{subject['tensor_file']}"
        manifest["mask_file"] = f"{sub}/{manifest['mask_file']}"
        r = client.post("/studies", json={"manifest": manifest})
        assert r.status_code == 200, r.text
        return r.json()["id"]

    sid = post_study("a")
    sid_small = post_study("b")

    r = client.post(f"/studies/{sid}/tests", json={"axes": ["norm", "fa"], "use_tfce": True, "smoothing_sigma": 0.7})
    assert r.status_code == 200, r.text
    test = r.json()

    r = client.post(f"/tests/{test['id']}/threshold", json={"value": 0.5e6})
    assert r.status_code == 200, r.text
    threshold = r.json()

    r = client.post(f"/tests/{test['id']}/threshold", json={"value": 1.0e6})
    assert r.status_code == 200, r.text
    threshold_high = r.json()

    return {
        "root": root,
        "app": app,
        "client": client,
        "state": app.state.session,
        "study": sid,
        "study_small": sid_small,
        "test": test,
        "threshold": threshold,
        "threshold_high": threshold_high,
    }


class TestStudies:
    def test_payload(self, studio):
        r = studio["client"].get(f"/studies/{studio['study']}")
        assert r.status_code == 200
        doc = r.json()
        assert doc["dims"] == [14, 12, 10]
        assert doc["group_sizes"] == [5, 5]
        assert len(doc["subjects"]) == 10
        assert doc["subjects"][0]["group"] == "group1"
        assert doc["mask_voxels"] > 0
        assert doc["axes"] == ["norm", "fa", "mode", "rot1", "rot2", "rot3"]

    def test_repeated_get_is_byte_identical(self, studio):
        client = studio["client"]
        first = client.get(f"/studies/{studio['study']}")
        second = client.get(f"/studies/{studio['study']}")
        assert first.content == second.content

    def test_unknown_study_404(self, studio):
        r = studio["client"].get("/studies/study-999")
        assert r.status_code == 404
        assert "study-999" in r.json()["detail"]

    def test_bad_manifest_400(self, studio):
        r = studio["client"].post("/studies", json={"manifest": {"subjects": []}})
        assert r.status_code == 400
        assert "missing required key" in r.json()["detail"] or "non-empty" in r.json()["detail"]

    def test_validation_errors_are_400_with_fields(self, studio):
        r = studio["client"].post("/studies", json={"wrong_key": 1})
        assert r.status_code == 400
        detail = r.json()["detail"]
        assert isinstance(detail, list)
        assert any(entry["field"] == "manifest" for entry in detail)
        assert all("message" in entry for entry in detail)


class TestTests:
    def test_two_axes_give_t2(self, studio):
        doc = studio["test"]
        assert doc["statistic"] == "t2"
        assert doc["surface"] == "tfce"
        assert doc["layers"] == ["stat", "p", "tfce"]
        assert doc["default_threshold"] > 0
        assert doc["surface_max"] > doc["default_threshold"]

    def test_single_axis_gives_t(self, studio):
        r = studio["client"].post(f"/studies/{studio['study']}/tests", json={"axes": ["fa"]})
        assert r.status_code == 200
        doc = r.json()
        assert doc["statistic"] == "t"
        assert doc["surface"] == "stat"
        assert doc["layers"] == ["stat", "p"]

    def test_get_matches_post(self, studio):
        r = studio["client"].get(f"/tests/{studio['test']['id']}")
        assert r.status_code == 200
        assert r.json() == studio["test"]

    def test_unknown_axis_400(self, studio):
        r = studio["client"].post(f"/studies/{studio['study']}/tests", json={"axes": ["bogus"]})
        assert r.status_code == 400
        assert "unknown axis names: bogus" in r.json()["detail"]

    def test_too_many_axes_for_small_groups_422(self, studio):
        r = studio["client"].post(
            f"/studies/{studio['study_small']}/tests",
            json={"axes": ["norm", "fa", "mode", "rot1", "rot2", "rot3"]},
        )
        assert r.status_code == 422
        assert "6 axes need at least 8 subjects, got 2+2" in r.json()["detail"]


class TestSlices:
    def test_probability_layer_window(self, studio):
        r = studio["client"].get(
            f"/tests/{studio['test']['id']}/slice",
            params={"axis": "axial", "index": 5, "layer": "p"},
        )
        assert r.status_code == 200
        doc = r.json()
        assert doc["window"] == [0.0, 1.0]
        assert doc["n_slices"] == 10

    def test_signed_layer_window_is_symmetric(self, studio):
        r = studio["client"].post(f"/studies/{studio['study']}/tests", json={"axes": ["norm"]})
        test_id = r.json()["id"]
        doc = studio["client"].get(f"/tests/{test_id}/slice", params={"axis": "coronal", "index": 3, "layer": "stat"}).json()
        lo, hi = doc["window"]
        assert lo == -hi and hi > 0

    def test_png_matches_render_library(self, studio):
        """The slice bytes equal a direct render of the same stored volume."""
        test_id = studio["test"]["id"]
        doc = studio["client"].get(
            f"/tests/{test_id}/slice",
            params={"axis": "sagittal", "index": 7, "layer": "tfce", "scale": 3},
        ).json()
        run = studio["state"].tests[test_id].run
        volume = np.where(np.isfinite(run.tfce), run.tfce, 0.0)
        top = float(volume[run.stat_map.mask].max())
        expected = render.export_slice_png(volume, 0, 7, (0.0, top), colormap="hot", scale=3)
        assert base64.b64decode(doc["png"]) == expected
        assert doc["window"] == [0.0, top]

    def test_repeated_slice_is_byte_identical(self, studio):
        params = {"axis": "axial", "index": 4, "layer": "stat"}
        url = f"/tests/{studio['test']['id']}/slice"
        assert studio["client"].get(url, params=params).content == studio["client"].get(url, params=params).content

    def test_bad_axis_400(self, studio):
        r = studio["client"].get(f"/tests/{studio['test']['id']}/slice", params={"axis": "oblique", "index": 0})
        assert r.status_code == 400

    def test_index_out_of_range_400(self, studio):
        r = studio["client"].get(f"/tests/{studio['test']['id']}/slice", params={"axis": "axial", "index": 99})
        assert r.status_code == 400

    def test_unknown_layer_400(self, studio):
        r = studio["client"].get(f"/tests/{studio['test']['id']}/slice", params={"axis": "axial", "index": 0, "layer": "zap"})
        assert r.status_code == 400

    def test_tfce_layer_without_tfce_400(self, studio):
        r = studio["client"].post(f"/studies/{studio['study']}/tests", json={"axes": ["norm"]})
        r = studio["client"].get(f"/tests/{r.json()['id']}/slice", params={"axis": "axial", "index": 0, "layer": "tfce"})
        assert r.status_code == 400


class TestHistogramEndpoint:
    def test_curve(self, studio):
        r = studio["client"].get(f"/tests/{studio['test']['id']}/histogram", params={"bins": 32})
        assert r.status_code == 200
        doc = r.json()
        assert doc["surface"] == "tfce"
        assert len(doc["thresholds"]) == 32
        counts = np.array(doc["counts"])
        assert (np.diff(counts) <= 0).all()

    def test_bad_bins_400(self, studio):
        r = studio["client"].get(f"/tests/{studio['test']['id']}/histogram", params={"bins": 1})
        assert r.status_code == 400


class TestThreshold:
    def test_clusters_sorted_by_size(self, studio):
        doc = studio["threshold"]
        sizes = [c["voxels"] for c in doc["clusters"]]
        assert sizes == sorted(sizes, reverse=True)
        assert doc["n_voxels"] == sum(sizes)
        assert doc["mask_id"].startswith("mask-")

    def test_above_maximum_gives_empty_table(self, studio):
        value = studio["test"]["surface_max"] * 2.0
        r = studio["client"].post(f"/tests/{studio['test']['id']}/threshold", json={"value": value})
        assert r.status_code == 200
        doc = r.json()
        assert doc["clusters"] == []
        assert doc["n_voxels"] == 0

    def test_cluster_color_assignment(self, studio):
        cid = studio["threshold"]["clusters"][0]["id"]
        r = studio["client"].post(f"/clusters/{cid}/color", json={"rgb": "#4daf4a"})
        assert r.status_code == 200
        assert r.json() == {"id": cid, "rgb": [77, 175, 74]}
        r = studio["client"].post(f"/clusters/{cid}/color", json={"rgb": [1, 2, 3]})
        assert r.json()["rgb"] == [1, 2, 3]

    def test_bad_color_400(self, studio):
        cid = studio["threshold"]["clusters"][0]["id"]
        assert studio["client"].post(f"/clusters/{cid}/color", json={"rgb": "red"}).status_code == 400

    def test_unknown_cluster_404(self, studio):
        assert studio["client"].post("/clusters/cluster-999/color", json={"rgb": "#000000"}).status_code == 404

    def test_bad_connectivity_400(self, studio):
        r = studio["client"].post(f"/tests/{studio['test']['id']}/threshold", json={"value": 1.0, "connectivity": 7})
        assert r.status_code == 400


class TestSploms:
    def test_voxel_payload(self, studio):
        r = studio["client"].get(f"/studies/{studio['study']}/voxel/4/3/3/splom")
        assert r.status_code == 200
        doc = r.json()
        assert doc["location"] == "voxel (4, 3, 3)"
        assert len(doc["subjects"]) == 10
        assert len(doc["pearson"]) == 15
        assert len(doc["axis_tests"]) == 6
        assert doc["valid_axes"] == [True] * 6

    def test_one_voxel_cluster_equals_voxel_with_folded_rotations(self, studio):
        client = studio["client"]
        test = studio["test"]
        run = studio["state"].tests[test["id"]].run
        peak = np.unravel_index(int(np.argmax(run.surface)), run.surface.shape)
        r = client.post(f"/tests/{test['id']}/threshold", json={"value": test["surface_max"]})
        assert r.status_code == 200
        clusters = r.json()["clusters"]
        assert len(clusters) == 1 and clusters[0]["voxels"] == 1
        from_cluster = client.get(f"/clusters/{clusters[0]['id']}/splom").json()
        from_voxel = client.get(
            f"/studies/{studio['study']}/voxel/{peak[0]}/{peak[1]}/{peak[2]}/splom",
            params={"smoothing_sigma": test["smoothing_sigma"]},
        ).json()
        cluster_values = np.array([s["coordinates"] for s in from_cluster["subjects"]])
        voxel_values = np.array([s["coordinates"] for s in from_voxel["subjects"]])
        expected = voxel_values.copy()
        expected[:, 3:] = np.abs(expected[:, 3:])
        npt.assert_array_equal(cluster_values, expected)

    def test_voxel_out_of_grid_400(self, studio):
        r = studio["client"].get(f"/studies/{studio['study']}/voxel/99/0/0/splom")
        assert r.status_code == 400


class TestGlyphs:
    def test_eigensystems(self, studio):
        r = studio["client"].get(f"/studies/{studio['study']}/voxel/4/3/3/glyphs")
        assert r.status_code == 200
        doc = r.json()
        assert doc["voxel"] == [4, 3, 3]
        assert len(doc["subjects"]) == 10
        for subject in doc["subjects"]:
            values = np.array(subject["eigenvalues"])
            vectors = np.array(subject["eigenvectors"])
            matrix = np.array(subject["matrix"])
            assert values[0] >= values[1] >= values[2]
            npt.assert_allclose(vectors @ vectors.T, np.eye(3), atol=1e-12)
            npt.assert_allclose(vectors.T @ np.diag(values) @ vectors, matrix, atol=1e-12)
            assert 0.0 <= subject["fa"] <= np.sqrt(1.5) + 1e-12

    def test_out_of_grid_400(self, studio):
        assert studio["client"].get(f"/studies/{studio['study']}/voxel/0/0/99/glyphs").status_code == 400


class TestTracto:
    def test_streams_binary(self, studio, tmp_path):
        client = studio["client"]
        mask_id = studio["threshold"]["mask_id"]
        r = client.post(f"/studies/{studio['study']}/tracto", json={"mask_id": mask_id, "params": {}})
        assert r.status_code == 200, r.text
        doc = r.json()
        assert doc["n_streamlines"] > 0
        blob = client.get(f"/tracto/{doc['id']}")
        assert blob.status_code == 200
        assert blob.headers["content-type"] == "application/octet-stream"
        path = tmp_path / "lines.tstl"
        path.write_bytes(blob.content)
        lines = read_streamlines(path)
        assert len(lines) == doc["n_streamlines"]
        assert sum(len(line) for line in lines) == doc["n_points"]

    def test_mask_from_other_study_400(self, studio):
        r = studio["client"].post(
            f"/studies/{studio['study_small']}/tracto",
            json={"mask_id": studio["threshold"]["mask_id"], "params": {}},
        )
        assert r.status_code == 400
        assert "belongs to study" in r.json()["detail"]

    def test_unknown_mask_404(self, studio):
        r = studio["client"].post(f"/studies/{studio['study']}/tracto", json={"mask_id": "mask-999", "params": {}})
        assert r.status_code == 404

    def test_bad_step_400(self, studio):
        r = studio["client"].post(
            f"/studies/{studio['study']}/tracto",
            json={"mask_id": studio["threshold"]["mask_id"], "params": {"step_size_voxels": -1.0}},
        )
        assert r.status_code == 400


class TestCompare:
    def make_comparison(self, studio):
        return studio["client"].post(
            "/compare",
            json={
                "mask_ids": [studio["threshold"]["mask_id"], studio["threshold_high"]["mask_id"]],
                "colors": ["#e41a1c", "#377eb8"],
            },
        )

    def test_venn_regions(self, studio):
        r = self.make_comparison(studio)
        assert r.status_code == 200
        doc = r.json()
        state = studio["state"]
        mask_a = state.masks[studio["threshold"]["mask_id"]].mask
        mask_b = state.masks[studio["threshold_high"]["mask_id"]].mask
        assert doc["regions"]["A"] == int((mask_a & ~mask_b).sum())
        assert doc["regions"]["B"] == int((~mask_a & mask_b).sum())
        assert doc["regions"]["AB"] == int((mask_a & mask_b).sum())
        assert [m["letter"] for m in doc["masks"]] == ["A", "B"]

    def test_slice_equals_cli_export(self, studio, tmp_path):
        """Service composites match the command line byte for byte."""
        from tenstat import nrrdio

        state = studio["state"]
        spacing = state.studies[studio["study"]].dataset.spacing
        path_a = tmp_path / "first.nrrd"
        path_b = tmp_path / "second.nrrd"
        nrrdio.save_mask(path_a, state.masks[studio["threshold"]["mask_id"]].mask, spacing)
        nrrdio.save_mask(path_b, state.masks[studio["threshold_high"]["mask_id"]].mask, spacing)
        assert cli_main([
            "compare", "--masks", f"{path_a},{path_b}", "--colors", "#e41a1c,#377eb8",
            "--out", str(tmp_path / "cmp"),
        ]) == 0
        comparison_id = self.make_comparison(studio).json()["id"]
        for png_path in sorted((tmp_path / "cmp").glob("slice_axial_*.png")):
            index = int(png_path.stem.rsplit("_", 1)[1])
            doc = studio["client"].get(
                f"/compare/{comparison_id}/slice",
                params={"axis": "axial", "index": index, "scale": 4},
            ).json()
            assert base64.b64decode(doc["png"]) == png_path.read_bytes(), png_path.name

    def test_visibility_subset_changes_pixels(self, studio):
        comparison_id = self.make_comparison(studio).json()["id"]
        client = studio["client"]
        full = client.get(f"/compare/{comparison_id}/slice", params={"axis": "axial", "index": 5})
        only_a = client.get(f"/compare/{comparison_id}/slice", params={"axis": "axial", "index": 5, "visible": "A"})
        assert full.status_code == 200 and only_a.status_code == 200
        assert full.json()["visible"] == "AB"
        assert only_a.json()["visible"] == "A"
        assert full.json()["png"] != only_a.json()["png"]

    def test_unknown_visibility_letter_400(self, studio):
        comparison_id = self.make_comparison(studio).json()["id"]
        r = studio["client"].get(f"/compare/{comparison_id}/slice", params={"axis": "axial", "index": 5, "visible": "AZ"})
        assert r.status_code == 400

    def test_color_count_mismatch_400(self, studio):
        r = studio["client"].post(
            "/compare",
            json={"mask_ids": [studio["threshold"]["mask_id"]], "colors": ["#e41a1c", "#377eb8"]},
        )
        assert r.status_code == 400


class TestJobs:
    def test_lifecycle_and_monotone_progress(self, studio):
        client = studio["client"]
        r = client.post(f"/studies/{studio['study']}/jobs/permutation", json={"axes": ["norm"], "n": 120, "seed": 7})
        assert r.status_code == 200, r.text
        job = r.json()
        assert job["kind"] == "permutation"
        assert job["status"] in ("queued", "running")
        assert job["params"] == {"axes": ["norm"], "use_tfce": False, "smoothing_sigma": 0.0, "n": 120, "seed": 7}
        final, progresses = wait_for_job(client, job["id"])
        assert final["status"] == "done"
        assert final["progress"] == 1.0
        assert final["result"] is not None
        assert all(a <= b for a, b in zip(progresses, progresses[1:]))
        result = client.get(f"/results/{final['result']}").json()
        assert result["n_permutations"] == 120
        assert result["seed"] == 7
        assert len(result["null_max"]) == 120
        assert 0 < result["min_corrected_p"] <= 1

    def test_conflicting_job_409_and_cancel(self, studio):
        client = studio["client"]
        r = client.post(f"/studies/{studio['study']}/jobs/permutation", json={"axes": ["fa"], "n": 5000, "seed": 1})
        assert r.status_code == 200
        job_id = r.json()["id"]
        conflict = client.post(f"/studies/{studio['study']}/jobs/permutation", json={"axes": ["fa"], "n": 200, "seed": 2})
        assert conflict.status_code == 409
        assert job_id in conflict.json()["detail"]
        canceled = client.delete(f"/jobs/{job_id}")
        assert canceled.status_code == 200
        final, _ = wait_for_job(client, job_id)
        assert final["status"] == "canceled"
        assert final["result"] is None
        follow_up = client.post(f"/studies/{studio['study']}/jobs/permutation", json={"axes": ["fa"], "n": 100, "seed": 2})
        assert follow_up.status_code == 200
        wait_for_job(client, follow_up.json()["id"])

    def test_same_seed_gives_identical_corrected_p(self, studio):
        client = studio["client"]
        volumes = []
        for _ in range(2):
            r = client.post(f"/studies/{studio['study_small']}/jobs/permutation", json={"axes": ["norm"], "n": 150, "seed": 11})
            assert r.status_code == 200, r.text
            final, _ = wait_for_job(client, r.json()["id"])
            assert final["status"] == "done"
            blob = client.get(f"/results/{final['result']}/volume", params={"layer": "corrected_p"})
            assert blob.status_code == 200
            volumes.append(blob.content)
        assert volumes[0] == volumes[1]
        assert volumes[0].startswith(b"NRRD0004")

    def test_result_slice(self, studio):
        client = studio["client"]
        r = client.post(f"/studies/{studio['study_small']}/jobs/permutation", json={"axes": ["fa"], "n": 100, "seed": 4})
        final, _ = wait_for_job(client, r.json()["id"])
        doc = client.get(
            f"/results/{final['result']}/slice",
            params={"axis": "axial", "index": 5, "layer": "corrected_p"},
        )
        assert doc.status_code == 200
        assert doc.json()["window"] == [0.0, 1.0]
        bad = client.get(f"/results/{final['result']}/slice", params={"axis": "axial", "index": 5, "layer": "zap"})
        assert bad.status_code == 400

    def test_too_few_permutations_422(self, studio):
        r = studio["client"].post(f"/studies/{studio['study']}/jobs/permutation", json={"axes": ["norm"], "n": 10})
        assert r.status_code == 422

    def test_unknown_job_404(self, studio):
        assert studio["client"].get("/jobs/job-999").status_code == 404
        assert studio["client"].delete("/jobs/job-999").status_code == 404
