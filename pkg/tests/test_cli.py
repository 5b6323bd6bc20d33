"""End-to-end tests of the command line: exit codes, artifacts, determinism."""

import csv
import json

import numpy as np
import numpy.testing as npt
import pytest

from tenstat import nrrdio
from tenstat.cli import cli_main
from tenstat.enhance import CSV_COLUMNS
from tenstat.fieldtools import PhantomSpec, six_region_phantom_spec
from tenstat.overlay import venn_counts
from tenstat.study import load_manifest
from tenstat.tracto import read_streamlines


def run_pipeline(root):
    """Drive every subcommand once, writing all artifacts under one root."""
    study = root / "study" / "study.json"
    commands = [
        ["synth", "--out", str(root / "study"), "--subjects", "5", "--noise", "0.05", "--seed", "9", "--dims", "14,12,10"],
        ["test", "--study", str(study), "--axes", "norm,fa", "--tfce", "--smooth", "0.7", "--out", str(root / "run")],
        ["test", "--study", str(study), "--axes", "norm", "--out", str(root / "run_raw")],
        ["permute", "--study", str(study), "--axes", "norm", "--n", "120", "--seed", "7", "--out", str(root / "perm")],
        ["clusters", "--map", str(root / "run" / "tfce.nrrd"), "--threshold", "0.5", "--out", str(root / "cl")],
        ["histogram", "--map", str(root / "run" / "tfce.nrrd"), "--mask", str(root / "study" / "mask.nrrd"), "--bins", "64", "--out", str(root / "hist.csv")],
        ["compare", "--masks", f"{root}/run/cluster_mask.nrrd,{root}/cl/cluster_mask.nrrd", "--colors", "#e41a1c,#377eb8", "--out", str(root / "cmp")],
        ["track", "--study", str(study), "--seeds", str(root / "run" / "cluster_mask.nrrd"), "--step", "0.5", "--out", str(root / "tracts.tstl")],
        ["splom", "--study", str(study), "--voxel", "4,3,3", "--out", str(root / "spv")],
        ["splom", "--study", str(study), "--cluster-id", "1", "--labels", str(root / "run" / "cluster_labels.nrrd"), "--out", str(root / "spc")],
    ]
    for argv in commands:
        code = cli_main(argv)
        assert code == 0, f"{argv[0]} exited {code}"
    return root


@pytest.fixture(scope="module")
def tree(tmp_path_factory):
    return run_pipeline(tmp_path_factory.mktemp("tree_a"))


class TestExitCodes:
    def test_help_exits_zero(self, capsys):
        assert cli_main(["--help"]) == 0
        assert "synth" in capsys.readouterr().out

    def test_no_subcommand_is_usage_error(self, capsys):
        assert cli_main([]) == 1

    def test_unknown_subcommand_is_usage_error(self, capsys):
        assert cli_main(["frobnicate"]) == 1

    def test_empty_axes(self, tree, capsys):
        code = cli_main(["test", "--study", str(tree / "study" / "study.json"), "--axes", ",", "--out", str(tree / "x")])
        assert code == 1
        assert "--axes must name at least one of" in capsys.readouterr().err

    def test_unknown_axes_listed_verbatim(self, tree, capsys):
        code = cli_main(["test", "--study", str(tree / "study" / "study.json"), "--axes", "norm,bogus,zap", "--out", str(tree / "x")])
        assert code == 1
        assert "error: unknown axis names: bogus, zap" in capsys.readouterr().err

    def test_repeated_axes(self, tree, capsys):
        code = cli_main(["test", "--study", str(tree / "study" / "study.json"), "--axes", "fa,fa", "--out", str(tree / "x")])
        assert code == 1
        assert "must not repeat" in capsys.readouterr().err

    def test_missing_study_file(self, tmp_path, capsys):
        code = cli_main(["test", "--study", str(tmp_path / "absent.json"), "--axes", "norm", "--out", str(tmp_path / "x")])
        assert code == 2

    def test_invalid_manifest_json(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{nope")
        code = cli_main(["test", "--study", str(bad), "--axes", "norm", "--out", str(tmp_path / "x")])
        assert code == 2

    def test_corrupt_map_file(self, tmp_path, capsys):
        broken = tmp_path / "broken.nrrd"
        broken.write_bytes(b"NRRD0004\ntype: float\n")
        code = cli_main(["clusters", "--map", str(broken), "--threshold", "1.0", "--out", str(tmp_path / "x")])
        assert code == 2

    def test_malformed_dims_triple(self, tmp_path, capsys):
        code = cli_main(["synth", "--out", str(tmp_path / "s"), "--dims", "5,5"])
        assert code == 1
        assert "--dims" in capsys.readouterr().err

    def test_compare_color_count_mismatch(self, tree, tmp_path, capsys):
        mask = tree / "run" / "cluster_mask.nrrd"
        code = cli_main(["compare", "--masks", f"{mask},{mask}", "--colors", "#e41a1c", "--out", str(tmp_path / "x")])
        assert code == 1

    def test_splom_cluster_id_without_labels(self, tree, tmp_path, capsys):
        code = cli_main(["splom", "--study", str(tree / "study" / "study.json"), "--cluster-id", "1", "--out", str(tmp_path / "x")])
        assert code == 1
        assert "--labels" in capsys.readouterr().err

    def test_splom_absent_cluster_id(self, tree, tmp_path, capsys):
        code = cli_main([
            "splom", "--study", str(tree / "study" / "study.json"),
            "--cluster-id", "99", "--labels", str(tree / "run" / "cluster_labels.nrrd"),
            "--out", str(tmp_path / "x"),
        ])
        assert code == 2
        assert "no cluster 99" in capsys.readouterr().err

    def test_track_seed_grid_mismatch(self, tree, tmp_path, capsys):
        alien = tmp_path / "alien_mask.nrrd"
        nrrdio.save_mask(alien, np.ones((2, 2, 2), dtype=bool), (1.0, 1.0, 1.0))
        code = cli_main([
            "track", "--study", str(tree / "study" / "study.json"),
            "--seeds", str(alien), "--out", str(tmp_path / "t.tstl"),
        ])
        assert code == 2


class TestSynthArtifacts:
    def test_study_tree(self, tree):
        study_dir = tree / "study"
        manifest = load_manifest(study_dir / "study.json")
        assert len(manifest.subjects) == 10
        assert manifest.group_sizes() == (5, 5)
        assert (study_dir / "mask.nrrd").exists()
        for entry in manifest.subjects:
            assert (study_dir / entry.tensor_file).exists()

    def test_phantom_recipe_roundtrips(self, tree):
        doc = json.loads((tree / "study" / "phantom.json").read_text())
        spec = PhantomSpec.from_dict(doc)
        assert spec.subjects_per_group == 5
        assert spec.dims == (14, 12, 10)

    def test_synth_from_spec_file(self, tmp_path):
        spec = six_region_phantom_spec(subjects_per_group=2, noise_sigma=0.04, seed=3, dims=(14, 12, 10))
        recipe = tmp_path / "recipe.json"
        recipe.write_text(json.dumps(spec.to_dict()))
        assert cli_main(["synth", "--spec", str(recipe), "--out", str(tmp_path / "s")]) == 0
        manifest = load_manifest(tmp_path / "s" / "study.json")
        assert len(manifest.subjects) == 4


class TestTestArtifacts:
    def test_file_set(self, tree):
        names = {p.name for p in (tree / "run").iterdir()}
        assert names == {"stat.nrrd", "p.nrrd", "tfce.nrrd", "clusters.csv", "cluster_labels.nrrd", "cluster_mask.nrrd", "summary.json"}

    def test_raw_run_has_no_tfce_map(self, tree):
        names = {p.name for p in (tree / "run_raw").iterdir()}
        assert "tfce.nrrd" not in names
        summary = json.loads((tree / "run_raw" / "summary.json").read_text())
        assert summary["surface"] == "stat"
        assert summary["statistic"] == "t"

    def test_summary_contents(self, tree):
        summary = json.loads((tree / "run" / "summary.json").read_text())
        assert summary["axes"] == ["norm", "fa"]
        assert summary["statistic"] == "t2"
        assert summary["surface"] == "tfce"
        assert summary["use_tfce"] is True
        assert summary["smoothing_sigma"] == 0.7
        assert summary["group_sizes"] == [5, 5]
        assert summary["n_clusters"] >= 1
        assert summary["threshold"] > 0

    def test_cluster_table_matches_label_volume(self, tree):
        with open(tree / "run" / "clusters.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == list(CSV_COLUMNS)
        summary = json.loads((tree / "run" / "summary.json").read_text())
        assert len(rows) - 1 == summary["n_clusters"]
        labels, _, _ = nrrdio.load_map(tree / "run" / "cluster_labels.nrrd")
        mask, _ = nrrdio.load_mask(tree / "run" / "cluster_mask.nrrd")
        npt.assert_array_equal(labels > 0, mask)
        assert int(labels.max()) == summary["n_clusters"]
        voxels_by_id = {int(row[0]): int(row[1]) for row in rows[1:]}
        for cid, n in voxels_by_id.items():
            assert int((labels == cid).sum()) == n

    def test_le_direction_selects_small_p(self, tree, tmp_path):
        out = tmp_path / "lowp"
        code = cli_main([
            "clusters", "--map", str(tree / "run_raw" / "p.nrrd"), "--threshold", "0.05",
            "--le", "--mask", str(tree / "study" / "mask.nrrd"), "--out", str(out),
        ])
        assert code == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["direction"] == "le"
        assert summary["map"] == "p.nrrd"
        p, _, _ = nrrdio.load_map(tree / "run_raw" / "p.nrrd")
        mask, _ = nrrdio.load_mask(tree / "study" / "mask.nrrd")
        selected, _ = nrrdio.load_mask(out / "cluster_mask.nrrd")
        with np.errstate(invalid="ignore"):
            expected = (p <= 0.05) & np.isfinite(p) & mask
        npt.assert_array_equal(selected, expected)


class TestPermuteArtifacts:
    def test_file_set_and_summary(self, tree):
        names = {p.name for p in (tree / "perm").iterdir()}
        assert names == {"corrected_p.nrrd", "uncorrected_p.nrrd", "observed.nrrd", "null_max.csv", "summary.json"}
        summary = json.loads((tree / "perm" / "summary.json").read_text())
        assert summary["n_permutations"] == 120
        assert summary["seed"] == 7
        assert summary["axes"] == ["norm"]

    def test_no_wall_clock_values_in_artifacts(self, tree):
        for name in ("summary.json", "null_max.csv"):
            text = (tree / "perm" / name).read_text()
            assert "elapsed" not in text
            assert "time" not in text

    def test_null_distribution_row_count(self, tree):
        with open(tree / "perm" / "null_max.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["rank", "null_max"]
        assert len(rows) - 1 == 120

    def test_corrected_p_bounds(self, tree):
        corrected, _, _ = nrrdio.load_map(tree / "perm" / "corrected_p.nrrd")
        mask, _ = nrrdio.load_mask(tree / "study" / "mask.nrrd")
        values = corrected[mask]
        values = values[np.isfinite(values)]
        assert values.size > 0
        assert values.min() >= 1.0 / 121.0 - 1e-12
        assert values.max() <= 1.0


class TestHistogramArtifact:
    def test_cumulative_counts(self, tree):
        with open(tree / "hist.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["threshold", "count"]
        assert len(rows) - 1 == 64
        counts = np.array([int(r[1]) for r in rows[1:]])
        assert (np.diff(counts) <= 0).all()
        tfce, _, _ = nrrdio.load_map(tree / "run" / "tfce.nrrd")
        mask, _ = nrrdio.load_mask(tree / "study" / "mask.nrrd")
        assert counts[0] == int((tfce[mask] > 0).sum())


class TestCompareArtifacts:
    def test_venn_counts_match_masks(self, tree):
        doc = json.loads((tree / "cmp" / "venn.json").read_text())
        mask_a, _ = nrrdio.load_mask(tree / "run" / "cluster_mask.nrrd")
        mask_b, _ = nrrdio.load_mask(tree / "cl" / "cluster_mask.nrrd")
        assert doc["regions"] == venn_counts([mask_a, mask_b])
        letters = [m["letter"] for m in doc["masks"]]
        assert letters == ["A", "B"]

    def test_slices_written_where_union_is_nonzero(self, tree):
        mask_a, _ = nrrdio.load_mask(tree / "run" / "cluster_mask.nrrd")
        mask_b, _ = nrrdio.load_mask(tree / "cl" / "cluster_mask.nrrd")
        union = mask_a | mask_b
        expected = {f"slice_axial_{k:03d}.png" for k in range(union.shape[2]) if union[:, :, k].any()}
        written = {p.name for p in (tree / "cmp").glob("*.png")}
        assert written == expected


class TestTrackArtifact:
    def test_streamlines_readable(self, tree):
        lines = read_streamlines(tree / "tracts.tstl")
        assert len(lines) > 0
        for line in lines:
            assert line.ndim == 2 and line.shape[1] == 3
            assert np.isfinite(line).all()


class TestSplomArtifacts:
    def test_voxel_csv_and_stats(self, tree):
        with open(tree / "spv" / "splom_coords.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["subject", "group", "norm", "fa", "mode", "rot1", "rot2", "rot3"]
        assert len(rows) - 1 == 10
        groups = [r[1] for r in rows[1:]]
        assert groups == ["group1"] * 5 + ["group2"] * 5
        stats = json.loads((tree / "spv" / "splom_stats.json").read_text())
        assert stats["location"] == "voxel (4, 3, 3)"
        assert stats["n_voxels"] == 1
        assert len(stats["pearson"]) == 15
        assert len(stats["axis_tests"]) == 6

    def test_cluster_stats_fold_rotations(self, tree):
        stats = json.loads((tree / "spc" / "splom_stats.json").read_text())
        assert stats["location"] == "cluster 1"
        assert stats["n_voxels"] >= 1
        for subject in stats["subjects"]:
            assert all(c >= 0.0 for c in subject["coordinates"][3:])


class TestDeterminism:
    def test_identical_seeds_give_identical_trees(self, tree, tmp_path_factory):
        other = run_pipeline(tmp_path_factory.mktemp("tree_b"))
        files_a = sorted(p.relative_to(tree) for p in tree.rglob("*") if p.is_file())
        files_b = sorted(p.relative_to(other) for p in other.rglob("*") if p.is_file())
        assert files_a == files_b
        differing = [str(rel) for rel in files_a if (tree / rel).read_bytes() != (other / rel).read_bytes()]
        assert differing == []
