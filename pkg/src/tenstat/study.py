"""Study manifests: explicit subject-to-group assignment on disk.

A study is a JSON manifest naming every subject volume and its group plus
one shared mask, because the group assignment is the experiment's ground
truth and must be reviewable, not inferred from directory layout.  All
paths are relative to the manifest file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nrrdio
from .fieldtools import StudyDataset

GROUP_KEYS = ("group1", "group2")
CONFIDENCE_THRESHOLD = 0.5


class ManifestError(ValueError):
    """A study manifest that cannot be loaded as declared."""


@dataclass(frozen=True)
class SubjectEntry:
    id: str
    group: str
    tensor_file: str


@dataclass(frozen=True)
class StudyManifest:
    subjects: tuple[SubjectEntry, ...]
    mask_file: str
    spacing_mm: tuple[float, float, float]
    background_file: str | None = None
    group_names: tuple[str, str] = GROUP_KEYS
    base_dir: Path = field(default_factory=Path)

    def group_sizes(self) -> tuple[int, int]:
        return (
            sum(1 for s in self.subjects if s.group == GROUP_KEYS[0]),
            sum(1 for s in self.subjects if s.group == GROUP_KEYS[1]),
        )

    def resolve(self, name: str) -> Path:
        return self.base_dir / name


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ManifestError(message)


def load_manifest(path: str | Path) -> StudyManifest:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest {path} is not valid JSON: {exc}") from exc
    return parse_manifest(raw, base_dir=path.parent, source=f"manifest {path}")


def parse_manifest(raw: object, base_dir: str | Path, source: str = "manifest") -> StudyManifest:
    """Validates an already-decoded manifest document.

    File references stay relative to ``base_dir``; ``source`` names the
    document in error messages.
    """
    _require(isinstance(raw, dict), f"{source} must be a JSON object")
    for key in ("subjects", "mask_file", "spacing_mm"):
        _require(key in raw, f"{source} is missing required key {key!r}")

    subjects = []
    _require(isinstance(raw["subjects"], list) and raw["subjects"], "subjects must be a non-empty list")
    for i, entry in enumerate(raw["subjects"]):
        _require(isinstance(entry, dict), f"subjects[{i}] must be an object")
        for key in ("id", "group", "tensor_file"):
            _require(key in entry, f"subjects[{i}] is missing {key!r}")
        _require(
            entry["group"] in GROUP_KEYS,
            f"subjects[{i}] ({entry['id']!r}): group must be 'group1' or 'group2', got {entry['group']!r}",
        )
        subjects.append(SubjectEntry(str(entry["id"]), entry["group"], str(entry["tensor_file"])))

    ids = [s.id for s in subjects]
    _require(len(set(ids)) == len(ids), f"subject ids are not unique: {sorted(ids)}")

    spacing = raw["spacing_mm"]
    _require(
        isinstance(spacing, list) and len(spacing) == 3,
        f"spacing_mm must be a list of 3 values, got {spacing!r}",
    )
    spacing = tuple(float(v) for v in spacing)
    _require(all(v > 0 for v in spacing), f"spacing_mm must be positive, got {list(spacing)}")

    group_names: tuple[str, str] = GROUP_KEYS
    if raw.get("group_names") is not None:
        names = raw["group_names"]
        _require(
            isinstance(names, list) and len(names) == 2 and all(isinstance(n, str) for n in names),
            "group_names must be a list of 2 strings",
        )
        group_names = (names[0], names[1])

    manifest = StudyManifest(
        subjects=tuple(subjects),
        mask_file=str(raw["mask_file"]),
        spacing_mm=spacing,
        background_file=str(raw["background_file"]) if raw.get("background_file") else None,
        group_names=group_names,
        base_dir=Path(base_dir),
    )
    n1, n2 = manifest.group_sizes()
    _require(
        n1 >= 2 and n2 >= 2,
        f"need at least 2 subjects per group for testing, got {n1} in group1 and {n2} in group2",
    )
    return manifest


def _check_spacing(
    file_spacing: tuple[float, float, float] | None,
    expected: tuple[float, float, float],
    path: Path,
) -> None:
    if file_spacing is None:
        return
    if any(abs(a - b) > 1e-6 * max(abs(b), 1.0) for a, b in zip(file_spacing, expected)):
        raise ManifestError(
            f"{path}: file spacing {list(file_spacing)} contradicts manifest spacing_mm {list(expected)}"
        )


def load_study(manifest_path: str | Path) -> StudyDataset:
    """Loads all volumes of a manifest file into one validated dataset."""
    return load_study_data(load_manifest(manifest_path))


def load_study_data(manifest: StudyManifest) -> StudyDataset:
    """Loads the volumes a manifest references into one validated dataset.

    Grids are validated against the mask; 7-component tensor files shrink
    the mask wherever their confidence is <= 0.5.
    """
    mask_path = manifest.resolve(manifest.mask_file)
    _require(mask_path.is_file(), f"mask file {mask_path} does not exist")
    mask, mask_spacing = nrrdio.load_mask(mask_path)
    _check_spacing(mask_spacing, manifest.spacing_mm, mask_path)

    volumes = np.empty((len(manifest.subjects), *mask.shape, 6), dtype=np.float64)
    for i, subject in enumerate(manifest.subjects):
        tensor_path = manifest.resolve(subject.tensor_file)
        _require(
            tensor_path.is_file(),
            f"subject {subject.id!r}: tensor file {tensor_path} does not exist",
        )
        tensors, confidence, tensor_spacing = nrrdio.load_tensor_volume(tensor_path)
        if tensors.shape[:3] != mask.shape:
            raise ManifestError(
                f"subject {subject.id!r}: tensor grid {tensors.shape[:3]} in {tensor_path} "
                f"does not match mask grid {mask.shape} in {mask_path}"
            )
        _check_spacing(tensor_spacing, manifest.spacing_mm, tensor_path)
        if confidence is not None:
            mask = mask & (confidence > CONFIDENCE_THRESHOLD)
        volumes[i] = tensors

    background = None
    if manifest.background_file is not None:
        background_path = manifest.resolve(manifest.background_file)
        _require(background_path.is_file(), f"background file {background_path} does not exist")
        background, bg_spacing = nrrdio.load_scalar_volume(background_path)
        if background.shape != mask.shape:
            raise ManifestError(
                f"background grid {background.shape} in {background_path} "
                f"does not match mask grid {mask.shape} in {mask_path}"
            )
        _check_spacing(bg_spacing, manifest.spacing_mm, background_path)

    groups = np.array([GROUP_KEYS.index(s.group) for s in manifest.subjects], dtype=np.int64)
    return StudyDataset(
        volumes=volumes,
        groups=groups,
        subject_ids=[s.id for s in manifest.subjects],
        mask=mask,
        spacing=manifest.spacing_mm,
        group_names=manifest.group_names,
        background=background,
    )


def save_study(
    dataset: StudyDataset,
    out_dir: str | Path,
    manifest_name: str = "study.json",
    encoding: str = "gzip",
) -> Path:
    """Writes a dataset as manifest + volumes; returns the manifest path.

    Output is deterministic: fixed file names, sorted JSON keys, fixed
    volume headers.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    nrrdio.save_mask(out_dir / "mask.nrrd", dataset.mask, dataset.spacing, encoding=encoding)
    subjects = []
    for i, subject_id in enumerate(dataset.subject_ids):
        name = f"{subject_id}.nrrd"
        nrrdio.save_tensor_volume(out_dir / name, dataset.volumes[i], dataset.spacing, encoding=encoding)
        subjects.append(
            {"id": subject_id, "group": GROUP_KEYS[int(dataset.groups[i])], "tensor_file": name}
        )

    manifest: dict = {
        "subjects": subjects,
        "mask_file": "mask.nrrd",
        "spacing_mm": list(dataset.spacing),
    }
    if dataset.background is not None:
        nrrdio.save_map(
            out_dir / "background.nrrd", dataset.background, dataset.spacing, "background", encoding=encoding
        )
        manifest["background_file"] = "background.nrrd"
    if tuple(dataset.group_names) != GROUP_KEYS:
        manifest["group_names"] = list(dataset.group_names)

    manifest_path = out_dir / manifest_name
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest_path
