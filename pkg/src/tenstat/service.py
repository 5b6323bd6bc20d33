"""HTTP JSON service for interactive group-difference analysis.

One process holds an in-memory session: loaded studies, synchronous test
runs, thresholded masks, cluster selections, streamline sets, overlay
comparisons, and background permutation jobs, all addressed by id.
Responses never embed whole volumes; slices come back as base64 PNGs in
radiological orientation, streamline sets and result volumes as binary
downloads.

Status codes: 400 for validation problems (with field-level messages),
404 for unknown ids, 409 for a conflicting permutation job, and 422 for
statistical preconditions such as more axes than the group sizes support.
"""

from __future__ import annotations

import argparse
import base64
import os
import tempfile
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import uvicorn
from fastapi import Body, FastAPI, HTTPException, Response
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import nrrdio, render, workflows
from .enhance import ClusterRow, PermutationCancelled, PermutationResult, permutation_test
from .fieldtools import StudyDataset, TensorVolume, mean_field
from .igrt import AXIS_NAMES
from .overlay import MASK_LETTERS, MaskLayer, OverlayComparison, composite_slice
from .stats import TestConfig
from .study import ManifestError, StudyManifest, load_study_data, parse_manifest
from .tensor import eigensystem_array, invariants_array, unembed_array
from .tracto import TrackingParams, streamlines_to_bytes, track

MIN_PERMUTATIONS = 100


# ---------------------------------------------------------------------------
# Session state: everything lives in memory, addressed by readable ids.


@dataclass
class StudyRecord:
    id: str
    manifest: StudyManifest
    dataset: StudyDataset


@dataclass
class TestRecord:
    id: str
    study_id: str
    run: workflows.AnalysisRun


@dataclass
class MaskRecord:
    id: str
    study_id: str
    mask: np.ndarray
    source: str


@dataclass
class ClusterRecord:
    id: str
    study_id: str
    test_id: str
    row: ClusterRow
    mask: np.ndarray
    color: tuple[int, int, int] | None = None


@dataclass
class TractRecord:
    id: str
    study_id: str
    payload: bytes
    n_streamlines: int
    n_points: int


@dataclass
class CompareRecord:
    id: str
    study_id: str
    layers: list[MaskLayer]
    spacing: tuple[float, float, float]
    background: np.ndarray


@dataclass
class ResultRecord:
    id: str
    study_id: str
    params: dict
    result: PermutationResult
    spacing: tuple[float, float, float]
    mask: np.ndarray


@dataclass
class JobRecord:
    id: str
    study_id: str
    kind: str
    params: dict
    seed: int
    status: str = "queued"
    progress: float = 0.0
    result_id: str | None = None
    error: str | None = None
    cancel: threading.Event = field(default_factory=threading.Event)


class SessionState:
    """Mutable stores behind one lock; compute happens outside the lock."""

    def __init__(self, data_dir: Path, threads: int = 1) -> None:
        self.data_dir = data_dir
        self.threads = threads
        self.lock = threading.RLock()
        self.studies: dict[str, StudyRecord] = {}
        self.tests: dict[str, TestRecord] = {}
        self.masks: dict[str, MaskRecord] = {}
        self.clusters: dict[str, ClusterRecord] = {}
        self.tracts: dict[str, TractRecord] = {}
        self.compares: dict[str, CompareRecord] = {}
        self.results: dict[str, ResultRecord] = {}
        self.jobs: dict[str, JobRecord] = {}
        self._counters: dict[str, int] = {}

    def new_id(self, prefix: str) -> str:
        with self.lock:
            self._counters[prefix] = self._counters.get(prefix, 0) + 1
            return f"{prefix}-{self._counters[prefix]}"

    def get(self, store: dict, kind: str, item_id: str):
        with self.lock:
            record = store.get(item_id)
        if record is None:
            raise HTTPException(status_code=404, detail=f"no {kind} with id {item_id!r}")
        return record


# ---------------------------------------------------------------------------
# Request bodies


class StudiesRequest(BaseModel):
    manifest: dict


class TestRequest(BaseModel):
    axes: list[str]
    use_tfce: bool = False
    smoothing_sigma: float = 0.0
    alpha: float = 0.05


class ThresholdRequest(BaseModel):
    value: float
    connectivity: int = 26


class ColorRequest(BaseModel):
    rgb: str | list[int]


class TractoParamsModel(BaseModel):
    step_size_voxels: float = 0.5
    max_steps: int = 2000
    fa_stop: float = 0.15
    angle_stop_degrees: float = 45.0
    seeds_per_voxel: int = 1
    integration: str = "midpoint"
    subject: str | None = None


class TractoRequest(BaseModel):
    mask_id: str
    params: TractoParamsModel = TractoParamsModel()


class CompareRequest(BaseModel):
    mask_ids: list[str]
    colors: list[str | list[int]]
    names: list[str] | None = None


class PermutationRequest(BaseModel):
    axes: list[str]
    use_tfce: bool = False
    smoothing_sigma: float = 0.0
    n: int
    seed: int = 0


# ---------------------------------------------------------------------------
# Shared validation and rendering helpers


def bad_request(message: str) -> HTTPException:
    return HTTPException(status_code=400, detail=message)


def parse_color(value: str | list[int]) -> tuple[int, int, int]:
    if isinstance(value, str):
        token = value.strip()
        if len(token) != 7 or not token.startswith("#"):
            raise bad_request(f"colors must look like #rrggbb, got {value!r}")
        try:
            return tuple(int(token[i : i + 2], 16) for i in (1, 3, 5))
        except ValueError:
            raise bad_request(f"colors must look like #rrggbb, got {value!r}") from None
    if len(value) == 3 and all(isinstance(v, int) and 0 <= v <= 255 for v in value):
        return tuple(value)
    raise bad_request(f"colors must be #rrggbb or three 8-bit channels, got {value!r}")


def build_test_config(axes: list[str], alpha: float, use_tfce: bool, sigma: float, dataset: StudyDataset) -> TestConfig:
    """400 for malformed configs, 422 when the group sizes cannot support k axes."""
    try:
        config = TestConfig(axes=tuple(axes), alpha=alpha, use_tfce=use_tfce, smoothing_sigma=sigma)
    except ValueError as exc:
        raise bad_request(str(exc)) from exc
    n1 = int((dataset.groups == 0).sum())
    n2 = int((dataset.groups == 1).sum())
    if n1 + n2 - config.k - 1 < 1:
        raise HTTPException(
            status_code=422,
            detail=f"{config.k} axes need at least {config.k + 2} subjects, got {n1}+{n2}",
        )
    return config


def resolve_axis(name: str) -> int:
    if name not in render.AXIS_FOR_NAME:
        raise bad_request(f"axis must be one of {sorted(render.AXIS_FOR_NAME)}, got {name!r}")
    return render.AXIS_FOR_NAME[name]


def scalar_layer(volume: np.ndarray, mask: np.ndarray, style: str) -> tuple[np.ndarray, tuple[float, float], str]:
    """NaN policy, display window, and colormap for one map layer.

    Signed stat maps get a symmetric diverging window with NaN at the
    neutral midpoint; p-like maps sit on (0, 1) with NaN rendered as 1;
    nonnegative maps get (0, max) with NaN at 0.
    """
    values = volume[mask & np.isfinite(volume)]
    if style == "signed":
        peak = float(np.abs(values).max()) if values.size else 0.0
        window = (-peak, peak) if peak > 0 else (-1.0, 1.0)
        return np.where(np.isfinite(volume), volume, 0.0), window, "diverging"
    if style == "probability":
        return np.where(np.isfinite(volume), volume, 1.0), (0.0, 1.0), "gray_r"
    top = float(values.max()) if values.size else 0.0
    window = (0.0, top) if top > 0 else (0.0, 1.0)
    return np.where(np.isfinite(volume), volume, 0.0), window, "hot"


def slice_response(
    ids: dict,
    volume: np.ndarray,
    mask: np.ndarray,
    style: str,
    axis_name: str,
    index: int,
    scale: int,
) -> dict:
    axis = resolve_axis(axis_name)
    if scale < 1:
        raise bad_request(f"scale must be a positive integer, got {scale}")
    prepared, window, colormap = scalar_layer(volume, mask, style)
    try:
        image = render.render_scalar_slice(prepared, axis, index, window, colormap, scale)
    except ValueError as exc:
        raise bad_request(str(exc)) from exc
    return {
        **ids,
        "axis": axis_name,
        "index": index,
        "n_slices": volume.shape[axis],
        "window": [window[0], window[1]],
        "shape": [image.shape[0], image.shape[1]],
        "scale": scale,
        "png": base64.b64encode(render.encode_png(image)).decode("ascii"),
    }


def cluster_json(record: ClusterRecord) -> dict:
    row = record.row
    return {
        "id": record.id,
        "voxels": row.voxels,
        "volume_mm3": row.volume_mm3,
        "cog_voxel": list(row.cog_voxel),
        "cog_mm": list(row.cog_mm),
        "peak_stat": row.peak_stat,
        "color": list(record.color) if record.color is not None else None,
    }


def test_json(state: SessionState, record: TestRecord) -> dict:
    run = record.run
    surface = run.surface[run.stat_map.mask]
    return {
        "id": record.id,
        "study_id": record.study_id,
        "axes": list(run.config.axes),
        "alpha": run.config.alpha,
        "use_tfce": run.config.use_tfce,
        "smoothing_sigma": run.config.smoothing_sigma,
        "statistic": run.stat_map.kind,
        "surface": run.surface_name,
        "surface_max": float(surface.max()) if surface.size else 0.0,
        "default_threshold": workflows.default_threshold(run),
        "degenerate_voxels": run.stat_map.degenerate_count(),
        "layers": ["stat", "p", "tfce"] if run.tfce is not None else ["stat", "p"],
    }


def job_json(job: JobRecord) -> dict:
    return {
        "id": job.id,
        "kind": job.kind,
        "study_id": job.study_id,
        "params": job.params,
        "seed": job.seed,
        "status": job.status,
        "progress": job.progress,
        "result": job.result_id,
        "error": job.error,
    }


def study_json(record: StudyRecord) -> dict:
    dataset = record.dataset
    return {
        "id": record.id,
        "dims": list(dataset.dims),
        "spacing_mm": list(dataset.spacing),
        "mask_voxels": int(dataset.mask.sum()),
        "has_background": dataset.background is not None,
        "group_names": list(dataset.group_names),
        "group_sizes": [int((dataset.groups == 0).sum()), int((dataset.groups == 1).sum())],
        "subjects": [
            {"id": sid, "group": f"group{int(g) + 1}"}
            for sid, g in zip(dataset.subject_ids, dataset.groups)
        ],
        "axes": list(AXIS_NAMES),
    }


# ---------------------------------------------------------------------------
# Application


def create_app(data_dir: str | Path | None = None, threads: int = 1) -> FastAPI:
    state = SessionState(data_dir=Path(data_dir) if data_dir else Path.cwd(), threads=threads)
    app = FastAPI(title="tenstat service")
    app.state.session = state
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(RequestValidationError)
    async def validation_as_400(request, exc):
        details = [
            {
                "field": ".".join(str(part) for part in err["loc"] if part != "body"),
                "message": err["msg"],
            }
            for err in exc.errors()
        ]
        return JSONResponse(status_code=400, content={"detail": details})

    # -- studies ------------------------------------------------------------

    @app.post("/studies")
    def post_study(body: StudiesRequest) -> dict:
        try:
            manifest = parse_manifest(body.manifest, base_dir=state.data_dir)
            dataset = load_study_data(manifest)
        except (ManifestError, nrrdio.FormatError, OSError, ValueError) as exc:
            raise bad_request(str(exc)) from exc
        record = StudyRecord(id=state.new_id("study"), manifest=manifest, dataset=dataset)
        with state.lock:
            state.studies[record.id] = record
        return study_json(record)

    @app.get("/studies/{study_id}")
    def get_study(study_id: str) -> dict:
        return study_json(state.get(state.studies, "study", study_id))

    # -- synchronous tests ----------------------------------------------------

    @app.post("/studies/{study_id}/tests")
    def post_test(study_id: str, body: TestRequest) -> dict:
        study = state.get(state.studies, "study", study_id)
        config = build_test_config(body.axes, body.alpha, body.use_tfce, body.smoothing_sigma, study.dataset)
        try:
            run = workflows.run_analysis(study.dataset, config)
        except ValueError as exc:
            raise bad_request(str(exc)) from exc
        record = TestRecord(id=state.new_id("test"), study_id=study_id, run=run)
        with state.lock:
            state.tests[record.id] = record
        return test_json(state, record)

    @app.get("/tests/{test_id}")
    def get_test(test_id: str) -> dict:
        return test_json(state, state.get(state.tests, "test", test_id))

    @app.get("/tests/{test_id}/slice")
    def get_test_slice(test_id: str, axis: str, index: int, layer: str = "stat", scale: int = 4) -> dict:
        record = state.get(state.tests, "test", test_id)
        run = record.run
        if layer == "stat":
            style = "signed" if run.stat_map.kind == "t" else "nonnegative"
            volume = run.stat_map.stat
        elif layer == "p":
            style, volume = "probability", run.stat_map.p
        elif layer == "tfce":
            if run.tfce is None:
                raise bad_request(f"test {test_id!r} has no tfce layer; run it with use_tfce")
            style, volume = "nonnegative", run.tfce
        else:
            raise bad_request(f"layer must be stat, p, or tfce, got {layer!r}")
        ids = {"test_id": test_id, "layer": layer}
        return slice_response(ids, volume, run.stat_map.mask, style, axis, index, scale)

    @app.get("/tests/{test_id}/histogram")
    def get_test_histogram(test_id: str, bins: int = 256) -> dict:
        record = state.get(state.tests, "test", test_id)
        try:
            thresholds, counts = workflows.histogram_curve(record.run, n_bins=bins)
        except ValueError as exc:
            raise bad_request(str(exc)) from exc
        return {
            "test_id": test_id,
            "surface": record.run.surface_name,
            "thresholds": thresholds.tolist(),
            "counts": counts.tolist(),
        }

    @app.post("/tests/{test_id}/threshold")
    def post_threshold(test_id: str, body: ThresholdRequest) -> dict:
        record = state.get(state.tests, "test", test_id)
        if body.connectivity not in (6, 18, 26):
            raise bad_request(f"connectivity must be 6, 18, or 26, got {body.connectivity}")
        extraction = workflows.extract_clusters(record.run, threshold=body.value, connectivity=body.connectivity)
        mask_record = MaskRecord(
            id=state.new_id("mask"),
            study_id=record.study_id,
            mask=extraction.mask,
            source=f"test {record.id} at {extraction.surface_name} >= {extraction.threshold!r}",
        )
        cluster_records = [
            ClusterRecord(
                id=state.new_id("cluster"),
                study_id=record.study_id,
                test_id=record.id,
                row=row,
                mask=extraction.labels == row.id,
            )
            for row in extraction.table.rows
        ]
        with state.lock:
            state.masks[mask_record.id] = mask_record
            for cluster in cluster_records:
                state.clusters[cluster.id] = cluster
        return {
            "test_id": test_id,
            "mask_id": mask_record.id,
            "surface": extraction.surface_name,
            "threshold": extraction.threshold,
            "connectivity": extraction.connectivity,
            "n_voxels": int(extraction.mask.sum()),
            "clusters": [cluster_json(c) for c in cluster_records],
        }

    # -- clusters -------------------------------------------------------------

    @app.post("/clusters/{cluster_id}/color")
    def post_cluster_color(cluster_id: str, body: ColorRequest) -> dict:
        record = state.get(state.clusters, "cluster", cluster_id)
        color = parse_color(body.rgb)
        with state.lock:
            record.color = color
        return {"id": cluster_id, "rgb": list(color)}

    @app.get("/clusters/{cluster_id}/splom")
    def get_cluster_splom(cluster_id: str) -> dict:
        record = state.get(state.clusters, "cluster", cluster_id)
        study = state.get(state.studies, "study", record.study_id)
        test = state.get(state.tests, "test", record.test_id)
        data = workflows.cluster_splom(
            study.dataset,
            record.mask,
            smoothing_sigma=test.run.config.smoothing_sigma,
            label=f"cluster {cluster_id}",
        )
        return {"id": cluster_id, **data.to_json_dict()}

    # -- per-voxel inspection ---------------------------------------------------

    @app.get("/studies/{study_id}/voxel/{i}/{j}/{k}/splom")
    def get_voxel_splom(study_id: str, i: int, j: int, k: int, smoothing_sigma: float = 0.0) -> dict:
        study = state.get(state.studies, "study", study_id)
        try:
            data = workflows.voxel_splom(study.dataset, (i, j, k), smoothing_sigma=smoothing_sigma)
        except ValueError as exc:
            raise bad_request(str(exc)) from exc
        return {"study_id": study_id, **data.to_json_dict()}

    @app.get("/studies/{study_id}/voxel/{i}/{j}/{k}/glyphs")
    def get_voxel_glyphs(study_id: str, i: int, j: int, k: int) -> dict:
        study = state.get(state.studies, "study", study_id)
        dataset = study.dataset
        voxel = (i, j, k)
        if not all(0 <= v < d for v, d in zip(voxel, dataset.dims)):
            raise bad_request(f"voxel {voxel} is outside the grid {dataset.dims}")
        if not dataset.mask[voxel]:
            raise bad_request(f"voxel {voxel} is outside the mask")
        vectors6 = dataset.volumes[:, i, j, k, :]
        matrices = unembed_array(vectors6)
        values, directions, degenerate = eigensystem_array(matrices)
        norm, fa, mode, _ = invariants_array(vectors6)
        subjects = [
            {
                "id": sid,
                "group": f"group{int(g) + 1}",
                "matrix": matrices[s].tolist(),
                "eigenvalues": values[s].tolist(),
                # row r is the unit eigenvector of eigenvalues[r]
                "eigenvectors": directions[s].T.tolist(),
                "norm": float(norm[s]),
                "fa": float(fa[s]),
                "mode": float(mode[s]),
                "degenerate": bool(degenerate[s]),
            }
            for s, (sid, g) in enumerate(zip(dataset.subject_ids, dataset.groups))
        ]
        return {
            "study_id": study_id,
            "voxel": [i, j, k],
            "spacing_mm": list(dataset.spacing),
            "group_names": list(dataset.group_names),
            "subjects": subjects,
        }

    # -- tractography -----------------------------------------------------------

    @app.post("/studies/{study_id}/tracto")
    def post_tracto(study_id: str, body: TractoRequest) -> dict:
        study = state.get(state.studies, "study", study_id)
        seed_record = state.get(state.masks, "mask", body.mask_id)
        if seed_record.study_id != study_id:
            raise bad_request(f"mask {body.mask_id!r} belongs to study {seed_record.study_id!r}")
        dataset = study.dataset
        if body.params.subject is not None:
            if body.params.subject not in dataset.subject_ids:
                raise bad_request(f"no subject {body.params.subject!r}; study has {dataset.subject_ids}")
            index = dataset.subject_ids.index(body.params.subject)
            volume = TensorVolume(dataset.volumes[index], dataset.spacing, dataset.mask)
        else:
            volume = mean_field(dataset)
        try:
            params = TrackingParams(
                step_size_voxels=body.params.step_size_voxels,
                max_steps=body.params.max_steps,
                fa_stop=body.params.fa_stop,
                angle_stop_degrees=body.params.angle_stop_degrees,
                seeds_per_voxel=body.params.seeds_per_voxel,
                integration=body.params.integration,
            )
            lines = track(volume, seed_record.mask, params, n_jobs=state.threads)
        except ValueError as exc:
            raise bad_request(str(exc)) from exc
        record = TractRecord(
            id=state.new_id("tract"),
            study_id=study_id,
            payload=streamlines_to_bytes(lines),
            n_streamlines=len(lines),
            n_points=sum(len(line.points) for line in lines),
        )
        with state.lock:
            state.tracts[record.id] = record
        return {
            "id": record.id,
            "study_id": study_id,
            "mask_id": body.mask_id,
            "n_streamlines": record.n_streamlines,
            "n_points": record.n_points,
        }

    @app.get("/tracto/{tract_id}")
    def get_tracto(tract_id: str) -> Response:
        record = state.get(state.tracts, "streamline set", tract_id)
        return Response(content=record.payload, media_type="application/octet-stream")

    # -- overlay comparison -------------------------------------------------------

    @app.post("/compare")
    def post_compare(body: CompareRequest) -> dict:
        if not 1 <= len(body.mask_ids) <= 3:
            raise bad_request(f"expected 1 to 3 mask ids, got {len(body.mask_ids)}")
        if len(body.colors) != len(body.mask_ids):
            raise bad_request(f"got {len(body.mask_ids)} masks but {len(body.colors)} colors")
        names = body.names or body.mask_ids
        if len(names) != len(body.mask_ids):
            raise bad_request(f"got {len(body.mask_ids)} masks but {len(names)} names")
        mask_records = [state.get(state.masks, "mask", mid) for mid in body.mask_ids]
        study_ids = {m.study_id for m in mask_records}
        if len(study_ids) != 1:
            raise bad_request(f"masks span multiple studies: {sorted(study_ids)}")
        study = state.get(state.studies, "study", mask_records[0].study_id)
        layers = [
            MaskLayer(name=name, mask=m.mask, color=parse_color(color))
            for m, name, color in zip(mask_records, names, body.colors)
        ]
        background = study.dataset.background
        if background is None:
            background = np.zeros(study.dataset.dims)
        record = CompareRecord(
            id=state.new_id("compare"),
            study_id=study.id,
            layers=layers,
            spacing=study.dataset.spacing,
            background=background,
        )
        with state.lock:
            state.compares[record.id] = record
        comparison = OverlayComparison(layers=layers, spacing=record.spacing)
        return {"id": record.id, "study_id": study.id, **comparison.to_json_dict()}

    @app.get("/compare/{compare_id}/slice")
    def get_compare_slice(compare_id: str, axis: str, index: int, visible: str | None = None, scale: int = 4) -> dict:
        record = state.get(state.compares, "comparison", compare_id)
        letters = MASK_LETTERS[: len(record.layers)]
        if visible is None:
            shown = set(letters)
        else:
            shown = set(visible)
            unknown = shown - set(letters)
            if unknown:
                raise bad_request(f"visible letters {sorted(unknown)} not in {list(letters)}")
        if scale < 1:
            raise bad_request(f"scale must be a positive integer, got {scale}")
        slice_axis = resolve_axis(axis)
        layers = [
            MaskLayer(name=layer.name, mask=layer.mask, color=layer.color, visible=letters[i] in shown)
            for i, layer in enumerate(record.layers)
        ]
        comparison = OverlayComparison(layers=layers, spacing=record.spacing)
        try:
            rgba, _ = composite_slice(comparison, record.background, slice_axis, index)
        except ValueError as exc:
            raise bad_request(str(exc)) from exc
        png = render.export_composite_png(rgba, slice_axis, scale=scale)
        return {
            "id": compare_id,
            "axis": axis,
            "index": index,
            "n_slices": record.layers[0].mask.shape[slice_axis],
            "visible": "".join(l for l in letters if l in shown),
            "scale": scale,
            "png": base64.b64encode(png).decode("ascii"),
        }

    # -- permutation jobs -----------------------------------------------------------

    def run_permutation_job(job: JobRecord, dataset: StudyDataset, config: TestConfig, n: int) -> None:
        def on_progress(fraction: float) -> None:
            with state.lock:
                job.progress = max(job.progress, min(float(fraction), 1.0))

        with state.lock:
            if job.cancel.is_set():
                job.status = "canceled"
                return
            job.status = "running"
        try:
            result = permutation_test(
                dataset,
                config,
                n_permutations=n,
                seed=job.seed,
                n_jobs=state.threads,
                progress=on_progress,
                cancel=job.cancel,
            )
        except PermutationCancelled:
            with state.lock:
                job.status = "canceled"
        except Exception as exc:
            with state.lock:
                job.status = "failed"
                job.error = str(exc)
        else:
            record = ResultRecord(
                id=state.new_id("result"),
                study_id=job.study_id,
                params=job.params,
                result=result,
                spacing=dataset.spacing,
                mask=dataset.mask,
            )
            with state.lock:
                state.results[record.id] = record
                job.result_id = record.id
                job.progress = 1.0
                job.status = "done"

    @app.post("/studies/{study_id}/jobs/permutation")
    def post_permutation_job(study_id: str, body: PermutationRequest) -> dict:
        study = state.get(state.studies, "study", study_id)
        config = build_test_config(body.axes, 0.05, body.use_tfce, body.smoothing_sigma, study.dataset)
        if body.n < MIN_PERMUTATIONS:
            raise HTTPException(
                status_code=422,
                detail=f"need at least {MIN_PERMUTATIONS} permutations for a usable null distribution",
            )
        params = {
            "axes": list(config.axes),
            "use_tfce": config.use_tfce,
            "smoothing_sigma": config.smoothing_sigma,
            "n": body.n,
            "seed": body.seed,
        }
        with state.lock:
            for other in state.jobs.values():
                if other.study_id == study_id and other.status in ("queued", "running"):
                    raise HTTPException(
                        status_code=409,
                        detail=f"study {study_id!r} already has permutation job {other.id!r} in progress",
                    )
            job = JobRecord(
                id=state.new_id("job"),
                study_id=study_id,
                kind="permutation",
                params=params,
                seed=body.seed,
            )
            state.jobs[job.id] = job
        worker = threading.Thread(
            target=run_permutation_job,
            args=(job, study.dataset, config, body.n),
            daemon=True,
        )
        worker.start()
        return job_json(job)

    @app.get("/jobs/{job_id}")
    def get_job(job_id: str) -> dict:
        with state.lock:
            return job_json(state.get(state.jobs, "job", job_id))

    @app.delete("/jobs/{job_id}")
    def delete_job(job_id: str) -> dict:
        job = state.get(state.jobs, "job", job_id)
        job.cancel.set()
        with state.lock:
            return job_json(job)

    # -- permutation results -----------------------------------------------------------

    result_layers = ("corrected_p", "uncorrected_p", "observed")

    def result_volume(record: ResultRecord, layer: str) -> tuple[np.ndarray, str]:
        if layer not in result_layers:
            raise bad_request(f"layer must be one of {list(result_layers)}, got {layer!r}")
        volume = getattr(record.result, layer)
        style = "probability" if layer.endswith("_p") else "nonnegative"
        return volume, style

    @app.get("/results/{result_id}")
    def get_result(result_id: str) -> dict:
        record = state.get(state.results, "result", result_id)
        result = record.result
        corrected = result.corrected_p[np.isfinite(result.corrected_p)]
        return {
            "id": result_id,
            "study_id": record.study_id,
            "params": record.params,
            "n_permutations": result.n_permutations,
            "seed": result.seed,
            "min_corrected_p": float(corrected.min()) if corrected.size else None,
            "null_max": [float(v) for v in result.null_max],
            "layers": list(result_layers),
        }

    @app.get("/results/{result_id}/slice")
    def get_result_slice(result_id: str, axis: str, index: int, layer: str = "corrected_p", scale: int = 4) -> dict:
        record = state.get(state.results, "result", result_id)
        volume, style = result_volume(record, layer)
        ids = {"result_id": result_id, "layer": layer}
        return slice_response(ids, volume, record.mask, style, axis, index, scale)

    @app.get("/results/{result_id}/volume")
    def get_result_volume(result_id: str, layer: str = "corrected_p") -> Response:
        record = state.get(state.results, "result", result_id)
        volume, _ = result_volume(record, layer)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "volume.nrrd"
            nrrdio.save_map(path, volume, record.spacing, layer.replace("_", "-"))
            payload = path.read_bytes()
        return Response(content=payload, media_type="application/octet-stream")

    return app


# ---------------------------------------------------------------------------
# Entry point


def main(argv: list[str] | None = None) -> None:
    parser = argparse.ArgumentParser(
        prog="tenstat-serve",
        description="HTTP JSON service for interactive tensor-field group analysis.",
    )
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument(
        "--port",
        type=int,
        default=int(os.environ.get("TENSTAT_PORT", "8000")),
        help="listen port (env TENSTAT_PORT)",
    )
    parser.add_argument(
        "--data-dir",
        default=os.environ.get("TENSTAT_DATA", "."),
        help="directory manifest file references resolve against (env TENSTAT_DATA)",
    )
    parser.add_argument(
        "--threads",
        type=int,
        default=int(os.environ.get("TENSTAT_THREADS", "1")),
        help="worker threads for permutation and tracking compute (env TENSTAT_THREADS)",
    )
    args = parser.parse_args(argv)
    uvicorn.run(create_app(data_dir=args.data_dir, threads=args.threads), host=args.host, port=args.port)


if __name__ == "__main__":
    main()
