"""Command-line interface: synthesis, testing, permutation, clusters,
tracking, overlay comparison, histograms, and scatter-matrix exports.

Every run is a pure function of its inputs, flags, and seed: artifacts
carry no timestamps, hostnames, or library versions, so repeating a
command reproduces the output tree byte for byte.

Exit codes: 0 success, 1 usage error (bad flags, unknown axis names),
2 data error (missing or malformed files, incompatible grids).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import nrrdio, render, workflows
from .enhance import TfceParams, connected_components, cumulative_histogram, permutation_test, threshold_map
from .fieldtools import PhantomSpec, TensorVolume, generate_phantom, mean_field, six_region_phantom_spec
from .igrt import AXIS_NAMES
from .nrrdio import FormatError
from .overlay import MaskLayer, OverlayComparison, composite_slice
from .stats import TestConfig
from .study import ManifestError, load_study, save_study
from .tracto import TrackingParams, export_streamlines, track

AXIS_CHOICES = render.AXIS_FOR_NAME


class UsageError(ValueError):
    """A flag value problem: reported with exit code 1, not 2."""


# ---------------------------------------------------------------------------
# Argument helpers


def parse_axes(text: str) -> tuple[str, ...]:
    names = tuple(a.strip() for a in text.split(",") if a.strip())
    if not names:
        raise UsageError("--axes must name at least one of: " + ", ".join(AXIS_NAMES))
    unknown = [a for a in names if a not in AXIS_NAMES]
    if unknown:
        raise UsageError(f"unknown axis names: {', '.join(unknown)}")
    if len(set(names)) != len(names):
        raise UsageError(f"axis names must not repeat, got {', '.join(names)}")
    return names


def parse_int_triple(text: str, flag: str) -> tuple[int, int, int]:
    parts = text.split(",")
    if len(parts) != 3:
        raise UsageError(f"{flag} expects three comma-separated integers, got {text!r}")
    try:
        i, j, k = (int(p) for p in parts)
    except ValueError:
        raise UsageError(f"{flag} expects three comma-separated integers, got {text!r}") from None
    return i, j, k


def parse_color(token: str) -> tuple[int, int, int]:
    token = token.strip()
    if len(token) != 7 or not token.startswith("#"):
        raise UsageError(f"colors must look like #rrggbb, got {token!r}")
    try:
        return tuple(int(token[i : i + 2], 16) for i in (1, 3, 5))
    except ValueError:
        raise UsageError(f"colors must look like #rrggbb, got {token!r}") from None


def parse_list(text: str, flag: str) -> list[str]:
    items = [p.strip() for p in text.split(",") if p.strip()]
    if not items:
        raise UsageError(f"{flag} must not be empty")
    return items


def jsonable(value):
    """JSON-safe copy: NaN and infinities become null, arrays become lists."""
    if isinstance(value, dict):
        return {k: jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value) if math.isfinite(value) else None
    return value


def write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(jsonable(payload), indent=2, sort_keys=True) + "\n")


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def out_dir(args) -> Path:
    path = Path(args.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def test_config(args) -> TestConfig:
    axes = parse_axes(args.axes)
    try:
        return TestConfig(
            axes=axes,
            alpha=args.alpha,
            use_tfce=args.tfce,
            smoothing_sigma=args.smooth,
            seed=getattr(args, "seed", 0),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def write_cluster_artifacts(directory: Path, labels: np.ndarray, table, spacing) -> None:
    (directory / "clusters.csv").write_text(table.to_csv())
    nrrdio.save_map(directory / "cluster_labels.nrrd", labels.astype(np.float64), spacing, "cluster-labels")
    nrrdio.save_mask(directory / "cluster_mask.nrrd", labels > 0, spacing)


# ---------------------------------------------------------------------------
# Subcommands


def cmd_synth(args) -> int:
    directory = out_dir(args)
    if args.spec is not None:
        try:
            raw = json.loads(Path(args.spec).read_text())
        except json.JSONDecodeError as exc:
            raise FormatError(f"phantom spec {args.spec} is not valid JSON: {exc}") from exc
        spec = PhantomSpec.from_dict(raw)
    else:
        spec = six_region_phantom_spec(
            subjects_per_group=args.subjects,
            noise_sigma=args.noise,
            seed=args.seed,
            dims=parse_int_triple(args.dims, "--dims"),
        )
    dataset = generate_phantom(spec)
    manifest_path = save_study(dataset, directory)
    write_json(directory / "phantom.json", spec.to_dict())
    print(f"wrote {dataset.n_subjects}-subject study ({dataset.dims[0]}x{dataset.dims[1]}x{dataset.dims[2]}) to {manifest_path}")
    return 0


def cmd_test(args) -> int:
    directory = out_dir(args)
    config = test_config(args)
    dataset = load_study(args.study)
    run = workflows.run_analysis(dataset, config)
    extraction = workflows.extract_clusters(run, threshold=args.threshold, connectivity=args.connectivity)

    spacing = dataset.spacing
    nrrdio.save_map(directory / "stat.nrrd", run.stat_map.stat, spacing, "stat")
    nrrdio.save_map(directory / "p.nrrd", run.stat_map.p, spacing, "p")
    if run.tfce is not None:
        nrrdio.save_map(directory / "tfce.nrrd", run.tfce, spacing, "tfce")
    write_cluster_artifacts(directory, extraction.labels, extraction.table, spacing)
    write_json(
        directory / "summary.json",
        {
            "axes": list(config.axes),
            "alpha": config.alpha,
            "use_tfce": config.use_tfce,
            "smoothing_sigma": config.smoothing_sigma,
            "statistic": run.stat_map.kind,
            "group_sizes": [run.stat_map.n1, run.stat_map.n2],
            "surface": extraction.surface_name,
            "threshold": extraction.threshold,
            "connectivity": extraction.connectivity,
            "n_clusters": len(extraction.table.rows),
            "degenerate_voxels": run.stat_map.degenerate_count(),
        },
    )
    print(
        f"{run.stat_map.kind} test over {', '.join(config.axes)}: "
        f"{len(extraction.table.rows)} clusters at {extraction.surface_name} >= {extraction.threshold:g}"
    )
    return 0


def cmd_permute(args) -> int:
    directory = out_dir(args)
    config = test_config(args)
    dataset = load_study(args.study)
    result = permutation_test(
        dataset,
        config,
        n_permutations=args.n,
        seed=args.seed,
        n_jobs=args.jobs,
    )
    spacing = dataset.spacing
    nrrdio.save_map(directory / "corrected_p.nrrd", result.corrected_p, spacing, "corrected-p")
    nrrdio.save_map(directory / "uncorrected_p.nrrd", result.uncorrected_p, spacing, "uncorrected-p")
    nrrdio.save_map(directory / "observed.nrrd", result.observed, spacing, "observed")
    write_csv(
        directory / "null_max.csv",
        ["rank", "null_max"],
        [[i, float(v)] for i, v in enumerate(result.null_max)],
    )
    write_json(
        directory / "summary.json",
        {
            "axes": list(config.axes),
            "use_tfce": config.use_tfce,
            "smoothing_sigma": config.smoothing_sigma,
            "n_permutations": result.n_permutations,
            "seed": result.seed,
            "min_corrected_p": float(np.nanmin(result.corrected_p)) if np.isfinite(result.corrected_p).any() else None,
        },
    )
    print(f"{result.n_permutations} permutations done (seed {result.seed})")
    return 0


def cmd_clusters(args) -> int:
    directory = out_dir(args)
    volume, spacing, _ = nrrdio.load_map(args.map)
    spacing = spacing or (1.0, 1.0, 1.0)
    mask = None
    if args.mask is not None:
        mask, _ = nrrdio.load_mask(args.mask)
        if mask.shape != volume.shape:
            raise FormatError(f"mask grid {mask.shape} does not match map grid {volume.shape}")
    direction = "le" if args.le else "ge"
    sel, table = threshold_map(
        volume, args.threshold, mask=mask, direction=direction, connectivity=args.connectivity, spacing=spacing
    )
    labels, _ = connected_components(
        sel,
        connectivity=args.connectivity,
        spacing=spacing,
        values=volume,
        peak_mode="min" if args.le else "max",
    )
    write_cluster_artifacts(directory, labels, table, spacing)
    write_json(
        directory / "summary.json",
        {
            "map": Path(args.map).name,
            "threshold": args.threshold,
            "direction": direction,
            "connectivity": args.connectivity,
            "n_clusters": len(table.rows),
        },
    )
    print(f"{len(table.rows)} clusters with {direction} {args.threshold:g}")
    return 0


def cmd_track(args) -> int:
    dataset = load_study(args.study)
    seeds, _ = nrrdio.load_mask(args.seeds)
    if seeds.shape != dataset.dims:
        raise FormatError(f"seed mask grid {seeds.shape} does not match study grid {dataset.dims}")
    if args.subject is not None:
        if args.subject not in dataset.subject_ids:
            raise ManifestError(f"no subject {args.subject!r}; study has {dataset.subject_ids}")
        index = dataset.subject_ids.index(args.subject)
        volume = TensorVolume(dataset.volumes[index], dataset.spacing, dataset.mask)
    else:
        volume = mean_field(dataset)
    try:
        params = TrackingParams(
            step_size_voxels=args.step,
            max_steps=args.max_steps,
            fa_stop=args.min_fa,
            angle_stop_degrees=args.max_angle,
            seeds_per_voxel=args.seeds_per_voxel,
            integration="euler" if args.euler else "midpoint",
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    lines = track(volume, seeds, params, n_jobs=args.jobs)
    out = Path(args.out)
    if out.parent != Path():
        out.parent.mkdir(parents=True, exist_ok=True)
    export_streamlines(lines, out)
    total_points = sum(len(line.points) for line in lines)
    print(f"wrote {len(lines)} streamlines ({total_points} points) to {out}")
    return 0


def cmd_compare(args) -> int:
    directory = out_dir(args)
    mask_paths = parse_list(args.masks, "--masks")
    colors = [parse_color(c) for c in parse_list(args.colors, "--colors")]
    if len(colors) != len(mask_paths):
        raise UsageError(f"got {len(mask_paths)} masks but {len(colors)} colors")
    names = [Path(p).stem for p in mask_paths]
    if args.names is not None:
        names = parse_list(args.names, "--names")
        if len(names) != len(mask_paths):
            raise UsageError(f"got {len(mask_paths)} masks but {len(names)} names")

    layers = []
    spacing = (1.0, 1.0, 1.0)
    for path, name, color in zip(mask_paths, names, colors):
        mask, mask_spacing = nrrdio.load_mask(path)
        spacing = mask_spacing or spacing
        layers.append(MaskLayer(name=name, mask=mask, color=color))
    comparison = OverlayComparison(layers=layers, spacing=spacing)
    write_json(directory / "venn.json", comparison.to_json_dict())

    if args.background is not None:
        background, _ = nrrdio.load_scalar_volume(args.background)
        if background.shape != layers[0].mask.shape:
            raise FormatError(
                f"background grid {background.shape} does not match mask grid {layers[0].mask.shape}"
            )
    else:
        background = np.zeros(layers[0].mask.shape)

    axis = AXIS_CHOICES[args.axis]
    union = np.zeros(layers[0].mask.shape, dtype=bool)
    for layer in layers:
        union |= layer.mask
    indices = [int(i) for i in np.flatnonzero(union.any(axis=tuple(a for a in range(3) if a != axis)))]
    for index in indices:
        rgba, _ = composite_slice(comparison, background, axis, index)
        render.export_composite_png(
            rgba,
            axis,
            path=directory / f"slice_{args.axis}_{index:03d}.png",
            scale=args.scale,
        )
    print(f"wrote venn.json and {len(indices)} {args.axis} slice(s)")
    return 0


def cmd_histogram(args) -> int:
    volume, _, _ = nrrdio.load_map(args.map)
    mask = None
    if args.mask is not None:
        mask, _ = nrrdio.load_mask(args.mask)
        if mask.shape != volume.shape:
            raise FormatError(f"mask grid {mask.shape} does not match map grid {volume.shape}")
    thresholds, counts = cumulative_histogram(volume, mask=mask, n_bins=args.bins)
    out = Path(args.out)
    if out.parent != Path():
        out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(out, ["threshold", "count"], [[float(t), int(c)] for t, c in zip(thresholds, counts)])
    print(f"wrote {len(thresholds)}-bin cumulative histogram to {out}")
    return 0


def cmd_splom(args) -> int:
    directory = out_dir(args)
    dataset = load_study(args.study)
    if args.voxel is not None:
        voxel = parse_int_triple(args.voxel, "--voxel")
        data = workflows.voxel_splom(dataset, voxel, smoothing_sigma=args.smooth)
    else:
        if args.labels is None:
            raise UsageError("--cluster-id needs --labels pointing at a cluster-labels volume")
        labels, _, _ = nrrdio.load_map(args.labels)
        if labels.shape != dataset.dims:
            raise FormatError(f"labels grid {labels.shape} does not match study grid {dataset.dims}")
        cluster_mask = labels == args.cluster_id
        if not cluster_mask.any():
            present = sorted(int(v) for v in np.unique(labels[labels > 0]))
            raise ManifestError(f"no cluster {args.cluster_id} in {args.labels}; present: {present}")
        data = workflows.cluster_splom(
            dataset, cluster_mask, smoothing_sigma=args.smooth, label=f"cluster {args.cluster_id}"
        )
    write_csv(
        directory / "splom_coords.csv",
        ["subject", "group", *AXIS_NAMES],
        [
            [sid, data.group_names[int(g)], *(float(v) for v in row)]
            for sid, g, row in zip(data.subject_ids, data.groups, data.values)
        ],
    )
    write_json(directory / "splom_stats.json", data.to_json_dict())
    print(f"wrote scatter-matrix data for {data.location} ({data.n_voxels} voxel(s))")
    return 0


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tenstat",
        description="Group-difference analytics for 3x3 symmetric tensor fields.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_test_flags(p, with_seed=False):
        p.add_argument("--study", required=True, help="study manifest JSON")
        p.add_argument("--axes", required=True, help="comma-separated axis names: " + ",".join(AXIS_NAMES))
        p.add_argument("--alpha", type=float, default=0.05)
        p.add_argument("--tfce", action="store_true", help="enhance the statistic map before thresholding")
        p.add_argument("--smooth", type=float, default=0.0, metavar="SIGMA", help="pre-smoothing in voxels")
        if with_seed:
            p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("synth", help="generate a synthetic two-group study")
    p.add_argument("--out", required=True)
    p.add_argument("--spec", help="phantom recipe JSON (see README); overrides the flags below")
    p.add_argument("--subjects", type=int, default=20, help="subjects per group")
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--dims", default="32,32,32")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("test", help="voxelwise t/T² test with optional TFCE and clustering")
    add_test_flags(p)
    p.add_argument("--threshold", type=float, default=None, help="surface threshold; default: TFCE 95th percentile or the parametric critical value")
    p.add_argument("--connectivity", type=int, default=26, choices=(6, 18, 26))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("permute", help="permutation-corrected p map")
    add_test_flags(p)
    p.add_argument("--n", type=int, required=True, help="number of permutations")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_permute)

    p = sub.add_parser("clusters", help="threshold a saved map into labeled clusters")
    p.add_argument("--map", required=True)
    p.add_argument("--mask")
    p.add_argument("--threshold", type=float, required=True)
    p.add_argument("--le", action="store_true", help="keep values <= threshold (p maps)")
    p.add_argument("--connectivity", type=int, default=26, choices=(6, 18, 26))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_clusters)

    p = sub.add_parser("track", help="streamline tractography through the mean field")
    p.add_argument("--study", required=True)
    p.add_argument("--seeds", required=True, help="seed mask volume")
    p.add_argument("--subject", help="track one subject's volume instead of the group mean field")
    p.add_argument("--step", type=float, default=0.5, help="step size in voxel units")
    p.add_argument("--max-steps", type=int, default=2000)
    p.add_argument("--min-fa", type=float, default=0.15)
    p.add_argument("--max-angle", type=float, default=45.0, help="per-step turn limit in degrees")
    p.add_argument("--seeds-per-voxel", type=int, default=1)
    p.add_argument("--euler", action="store_true", help="Euler integration instead of midpoint")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True, help="output streamline file")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("compare", help="overlay up to three masks: Venn counts and composite slices")
    p.add_argument("--masks", required=True, help="comma-separated mask volumes (1-3)")
    p.add_argument("--colors", required=True, help='comma-separated hex colors, e.g. "#e41a1c,#4daf4a"')
    p.add_argument("--names", help="comma-separated display names (default: file stems)")
    p.add_argument("--background", help="scalar volume to composite over")
    p.add_argument("--axis", choices=sorted(AXIS_CHOICES), default="axial")
    p.add_argument("--scale", type=int, default=4, help="integer pixel zoom")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("histogram", help="cumulative voxel counts over a map")
    p.add_argument("--map", required=True)
    p.add_argument("--mask")
    p.add_argument("--bins", type=int, default=256)
    p.add_argument("--out", required=True, help="output CSV")
    p.set_defaults(func=cmd_histogram)

    p = sub.add_parser("splom", help="per-subject six-axis coordinates at a voxel or cluster")
    p.add_argument("--study", required=True)
    where = p.add_mutually_exclusive_group(required=True)
    where.add_argument("--voxel", help="i,j,k grid position")
    where.add_argument("--cluster-id", type=int, help="cluster id in the --labels volume")
    p.add_argument("--labels", help="cluster-labels volume written by test/clusters")
    p.add_argument("--smooth", type=float, default=0.0, metavar="SIGMA")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_splom)

    return parser


def cli_main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ManifestError, FormatError, OSError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
