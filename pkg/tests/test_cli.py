import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from chtf import tnsr
from chtf.archive import load_hierarchical, load_tucker
from chtf.cli import main, parse_bank, parse_ranks
from chtf.decomposition import reconstruct


def run(*args):
    return main([str(a) for a in args])


def tree_bytes(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture
def synth_dir(tmp_path):
    out = tmp_path / "synth"
    assert run("synth", "--output", out, "--dims", "16x4x3x3", "--ranks", "8,4,2,2", "--seed", 3) == 0
    return out


def pipeline(root: Path, synth: Path):
    """train -> project -> verify on the synthetic ensemble."""
    d = tnsr.load(synth / "ensemble.tnsr")
    tnsr.save(root / "obs.tnsr", np.reshape(d[:, :, 0, 0], (16, -1), order="F"))
    (root / "pairs.csv").write_text("id_a,id_b,same\n0,0,1\n0,1,0\n1,1,1\n2,3,0\n3,3,1\n1,2,0\n")
    assert run("train", "--input", synth / "ensemble.tnsr", "--output", root / "model",
               "--bank", "regions:0-7;8-15") == 0
    assert run("project", "--input", root / "obs.tnsr", "--model", root / "model",
               "--output", root / "sigs.csv") == 0
    assert run("verify", "--input", root / "pairs.csv", "--signatures", root / "sigs.csv",
               "--output", root / "verify") == 0


class TestCommands:
    def test_synth_outputs(self, synth_dir):
        d = tnsr.load(synth_dir / "ensemble.tnsr")
        assert d.shape == (16, 4, 3, 3)
        truth = load_tucker(synth_dir / "truth")
        assert truth.ranks == (8, 4, 2, 2)
        assert (synth_dir / "labels.json").exists()

    def test_decompose_tucker_roundtrip(self, synth_dir, tmp_path):
        out = tmp_path / "tucker"
        assert run("decompose", "--input", synth_dir / "ensemble.tnsr", "--output", out,
                   "--ranks", "8,4,2,2") == 0
        model = load_tucker(out)
        d = tnsr.load(synth_dir / "ensemble.tnsr")
        assert np.linalg.norm(reconstruct(model) - d) <= 1e-9 * np.linalg.norm(d)
        lines = (out / "loss.csv").read_text().splitlines()
        assert lines[0] == "iteration,loss"

    def test_decompose_hierarchical(self, synth_dir, tmp_path):
        out = tmp_path / "chtf"
        assert run("decompose", "--input", synth_dir / "ensemble.tnsr", "--output", out,
                   "--bank", "halves", "--ranks", "*,4,2,2", "--max-iters", 5) == 0
        model = load_hierarchical(out)
        assert len(model.segments) == 2
        losses = [float(r.split(",")[1]) for r in (out / "loss.csv").read_text().splitlines()[1:]]
        assert all(b <= a + 1e-9 for a, b in zip(losses, losses[1:]))

    def test_verify_pipeline(self, synth_dir, tmp_path):
        pipeline(tmp_path, synth_dir)
        sig_lines = (tmp_path / "sigs.csv").read_text().splitlines()
        assert sig_lines[0].startswith("# segment_offsets=0,")
        summary = (tmp_path / "verify" / "summary.csv").read_text().splitlines()
        assert summary[0] == "pairs,threshold,accuracy,calibration_accuracy,auc"
        roc = (tmp_path / "verify" / "roc.csv").read_text().splitlines()
        assert roc[1].startswith("inf,0,0")

    def test_verify_from_model(self, synth_dir, tmp_path):
        pipeline(tmp_path, synth_dir)
        assert run("verify", "--input", tmp_path / "pairs.csv", "--model", tmp_path / "model",
                   "--observations", tmp_path / "obs.tnsr", "--output", tmp_path / "v2") == 0
        assert ((tmp_path / "v2" / "scores.csv").read_text()
                == (tmp_path / "verify" / "scores.csv").read_text())

    def test_single_person(self, tmp_path):
        out = tmp_path / "one"
        assert run("synth", "--output", out, "--dims", "9x1x2x2", "--ranks", "3,1,2,2") == 0
        assert run("train", "--input", out / "ensemble.tnsr", "--output", tmp_path / "m") == 0
        tnsr.save(tmp_path / "x.tnsr", tnsr.load(out / "ensemble.tnsr")[:, 0, 1, 1])
        assert run("project", "--input", tmp_path / "x.tnsr", "--model", tmp_path / "m",
                   "--output", tmp_path / "s.csv") == 0

    def test_bench_single_method(self, tmp_path):
        assert run("bench", "--output", tmp_path / "b", "--method", "compositional", "--reps", 1,
                   "--width", 8, "--height", 8, "--grid", "2x2", "--train-people", 6,
                   "--test-people", 4, "--images-per-person", 3) == 0
        report = (tmp_path / "b" / "report.csv").read_text().splitlines()
        assert len(report) == 2 and report[1].startswith("compositional,")
        assert (tmp_path / "b" / "roc_compositional.csv").exists()

    def test_module_entry_point(self, tmp_path):
        proc = subprocess.run([sys.executable, "-m", "chtf", "synth", "--output", str(tmp_path / "s"),
                               "--dims", "4x2x2", "--ranks", "2,2,1"], capture_output=True)
        assert proc.returncode == 0
        assert (tmp_path / "s" / "ensemble.tnsr").exists()


class TestDeterminism:
    def test_pipeline_bytes(self, tmp_path):
        trees = []
        for name in ("a", "b"):
            root = tmp_path / name
            root.mkdir()
            assert run("synth", "--output", root / "synth", "--dims", "16x4x3x3",
                       "--ranks", "8,4,2,2", "--seed", 5) == 0
            pipeline(root, root / "synth")
            trees.append(tree_bytes(root))
        assert trees[0] == trees[1]

    def test_bench_bytes(self, tmp_path):
        args = ["--reps", 2, "--width", 8, "--height", 8, "--grid", "2x2", "--train-people", 6,
                "--test-people", 4, "--images-per-person", 3]
        assert run("bench", "--output", tmp_path / "a", *args) == 0
        assert run("bench", "--output", tmp_path / "b", *args) == 0
        assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")


class TestConfig:
    def test_flags_override_config(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# synthetic\ndims = 6x3x2\nranks = 3,2,2\nseed = 1\n")
        assert run("synth", "--config", cfg, "--output", tmp_path / "cfg_flag", "--seed", 2) == 0
        assert run("synth", "--output", tmp_path / "flag", "--dims", "6x3x2", "--ranks", "3,2,2",
                   "--seed", 2) == 0
        assert run("synth", "--config", cfg, "--output", tmp_path / "cfg") == 0
        a = (tmp_path / "cfg_flag" / "ensemble.tnsr").read_bytes()
        assert a == (tmp_path / "flag" / "ensemble.tnsr").read_bytes()
        assert a != (tmp_path / "cfg" / "ensemble.tnsr").read_bytes()

    def test_unknown_config_key(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("colour = blue\n")
        assert run("synth", "--config", cfg, "--output", tmp_path / "x") == 3

    def test_config_line_without_equals(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("seed 3\n")
        assert run("synth", "--config", cfg, "--output", tmp_path / "x") == 3


class TestExitCodes:
    def test_missing_file(self, tmp_path):
        assert run("decompose", "--input", tmp_path / "nope.tnsr", "--output", tmp_path / "o") == 2

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "bad.tnsr"
        p.write_bytes(b"NOPE" + bytes(20))
        assert run("decompose", "--input", p, "--output", tmp_path / "o") == 3

    def test_empty_pairs(self, synth_dir, tmp_path):
        pipeline(tmp_path, synth_dir)
        (tmp_path / "empty.csv").write_text("id_a,id_b,same\n")
        assert run("verify", "--input", tmp_path / "empty.csv", "--signatures", tmp_path / "sigs.csv",
                   "--output", tmp_path / "v") == 3

    def test_pair_out_of_range(self, synth_dir, tmp_path):
        pipeline(tmp_path, synth_dir)
        (tmp_path / "far.csv").write_text("0,99,1\n")
        assert run("verify", "--input", tmp_path / "far.csv", "--signatures", tmp_path / "sigs.csv",
                   "--output", tmp_path / "v") == 3

    def test_rank_out_of_range(self, synth_dir, tmp_path):
        assert run("decompose", "--input", synth_dir / "ensemble.tnsr", "--output", tmp_path / "o",
                   "--ranks", "99,1,1,1") == 4

    def test_bad_synth_ranks(self, tmp_path):
        assert run("synth", "--output", tmp_path / "o", "--dims", "4x2", "--ranks", "5,1") == 4

    def test_unknown_command(self):
        assert run("frobnicate") == 3

    def test_missing_required(self):
        assert run("decompose") == 3

    def test_bad_integer(self, tmp_path):
        assert run("synth", "--output", tmp_path / "o", "--seed", "many") == 3

    def test_bad_threads(self, tmp_path, monkeypatch):
        monkeypatch.setenv("CHTF_THREADS", "0")
        assert run("synth", "--output", tmp_path / "o", "--dims", "4x2", "--ranks", "2,2") == 3

    def test_archive_instead_of_tnsr(self, synth_dir, tmp_path):
        (tmp_path / "obs.tnsr").write_bytes(b"TNSR")
        assert run("project", "--input", tmp_path / "obs.tnsr", "--model", synth_dir / "truth",
                   "--output", tmp_path / "s.csv") == 3


class TestParsers:
    def test_ranks(self):
        assert parse_ranks("2,*,3") == [2, None, 3]
        assert parse_ranks("") is None

    def test_banks(self):
        assert len(parse_bank("grid:2x2", 16)) == 4
        assert len(parse_bank("regions:0-3;4-7", 8)) == 2
        assert len(parse_bank("laplacian:2", 24, "6x4")) == 2
        with pytest.raises(ValueError):
            parse_bank("grid:2x2", 15)
        with pytest.raises(ValueError):
            parse_bank("wavelet", 16)
