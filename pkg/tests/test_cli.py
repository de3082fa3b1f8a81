import json

import pytest
from click.testing import CliRunner

from vocalsep.cli import main

SUBCOMMANDS = ["synth-data", "train", "separate", "annotate-sim", "adapt",
               "eval", "hitl-iterate", "serve"]


@pytest.fixture()
def runner():
    return CliRunner()


class TestHelp:
    @pytest.mark.parametrize("cmd", SUBCOMMANDS)
    def test_every_subcommand_documents_flags(self, runner, cmd):
        result = runner.invoke(main, [cmd, "--help"])
        assert result.exit_code == 0
        assert "--help" in result.output
        # every option line carries a description
        for line in result.output.splitlines():
            if line.strip().startswith("--") and "--help" not in line:
                assert len(line.split()) > 1

    def test_unknown_flag_is_usage_error(self, runner):
        result = runner.invoke(main, ["synth-data", "--bogus"])
        assert result.exit_code == 2

    def test_unknown_subcommand(self, runner):
        result = runner.invoke(main, ["frobnicate"])
        assert result.exit_code == 2


@pytest.fixture(scope="module")
def cli_artifacts(tmp_path_factory):
    """One shared scripted run: synth-data -> train -> annotate-sim."""
    root = tmp_path_factory.mktemp("cli")
    config = root / "desk.json"
    config.write_text(json.dumps({
        "net": {"input_shape": [64, 64], "depth": 3, "base_channels": 4,
                "dropout_p": 0.0},
        "pipeline": {"sample_rate": 11025, "hop": 64},
        "train": {"crops_per_song": 24},
    }))
    runner = CliRunner()
    r = runner.invoke(main, ["synth-data", "--out", str(root / "ds"),
                             "--seed", "5", "--train", "3", "--hitl", "2",
                             "--test", "1", "--len", "30"])
    assert r.exit_code == 0, r.output
    r = runner.invoke(main, ["train", "--data", str(root / "ds"),
                             "--config", str(config), "--epochs", "2",
                             "--seed", "5", "--out", str(root / "base.ckpt")])
    assert r.exit_code == 0, r.output
    r = runner.invoke(main, ["annotate-sim", "--model", str(root / "base.ckpt"),
                             "--data", str(root / "ds"),
                             "--out", str(root / "ann")])
    assert r.exit_code == 0, r.output
    return root


class TestScriptedLoop:
    def test_adapt_prints_effective_config(self, runner, cli_artifacts):
        root = cli_artifacts
        result = runner.invoke(main, [
            "adapt", "--model", str(root / "base.ckpt"),
            "--annotations", str(root / "ann"), "--data", str(root / "ds"),
            "--seed", "5", "--out", str(root / "adapted.ckpt"),
        ])
        assert result.exit_code == 0, result.output
        assert '"x": 1' in result.output
        assert '"y": 15' in result.output
        assert '"z": 1' in result.output
        assert '"exemplar_fraction": 1.0' in result.output
        assert (root / "adapted.ckpt").is_file()

    def test_eval_writes_csvs(self, runner, cli_artifacts):
        root = cli_artifacts
        result = runner.invoke(main, [
            "eval", "--model", str(root / "base.ckpt"),
            "--data", str(root / "ds"), "--split", "test",
            "--out", str(root / "rep.csv"),
        ])
        assert result.exit_code == 0, result.output
        assert (root / "rep.csv").is_file()
        assert (root / "rep_summary.csv").is_file()

    def test_eval_empty_split_exits_1(self, runner, cli_artifacts, tmp_path):
        root = cli_artifacts
        r = runner.invoke(main, ["synth-data", "--out", str(tmp_path / "empty"),
                                 "--seed", "1", "--train", "1", "--hitl", "0",
                                 "--test", "0", "--len", "12"])
        assert r.exit_code == 0
        result = runner.invoke(main, [
            "eval", "--model", str(root / "base.ckpt"),
            "--data", str(tmp_path / "empty"), "--split", "hitl",
            "--out", str(tmp_path / "rep.csv"),
        ])
        assert result.exit_code == 1
        assert "no songs in split" in result.output

    def test_separate_writes_wav(self, runner, cli_artifacts):
        root = cli_artifacts
        mixture = next((root / "ds" / "test").rglob("mixture.wav"))
        result = runner.invoke(main, [
            "separate", "--model", str(root / "base.ckpt"),
            "--song", str(mixture), "--out", str(root / "est.wav"),
        ])
        assert result.exit_code == 0, result.output
        assert (root / "est.wav").read_bytes()[:4] == b"RIFF"

    def test_hitl_iterate_writes_trajectory(self, runner, cli_artifacts):
        root = cli_artifacts
        result = runner.invoke(main, [
            "hitl-iterate", "--model", str(root / "base.ckpt"),
            "--data", str(root / "ds"), "--batches", "2",
            "--method", "synthetic", "--exemplar-fraction", "1.0",
            "--seed", "5", "--out", str(root / "iters"),
        ])
        assert result.exit_code == 0, result.output
        doc = json.loads((root / "iters" / "trajectory.json").read_text())
        assert len(doc) == 2
        assert (root / "iters" / "iteration-0.ckpt").is_file()

    def test_hitl_iterate_too_many_batches(self, runner, cli_artifacts):
        root = cli_artifacts
        result = runner.invoke(main, [
            "hitl-iterate", "--model", str(root / "base.ckpt"),
            "--data", str(root / "ds"), "--batches", "5",
            "--out", str(root / "x"),
        ])
        assert result.exit_code == 1
        assert "disjoint" in result.output

    def test_train_on_missing_split(self, runner, cli_artifacts, tmp_path):
        r = CliRunner().invoke(main, ["synth-data", "--out",
                                      str(tmp_path / "nt"), "--seed", "1",
                                      "--train", "0", "--hitl", "1",
                                      "--test", "0", "--len", "12"])
        assert r.exit_code == 0
        result = runner.invoke(main, [
            "train", "--data", str(tmp_path / "nt"), "--epochs", "1",
            "--out", str(tmp_path / "m.ckpt"),
        ])
        assert result.exit_code == 1
        assert "no songs" in result.output
