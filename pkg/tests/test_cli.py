"""
Command-line tests
"""
import orjson
import pytest
from click.testing import CliRunner

from app.cli.featurize import INDEX_NAME
from app.main import EXIT_DATA, EXIT_OK, EXIT_USAGE, cli, run
from app.schemas.training import TrainLog
from app.services.lm_service import parse_arpa
from app.services.manifest_service import parse_manifest
from app.services.trainer_service import CHECKPOINT_NAME, LOG_NAME, STATS_NAME

TINY_MODEL = {
    "input_bins": 257,
    "front_conv": {"channels": 2, "filter_freq": 3, "filter_time": 3, "stride_freq": 2, "stride_time": 2},
    "residual_blocks": [{"channels": 3, "filter_freq": 3, "filter_time": 3}],
    "rnn_layers": 1,
    "rnn_hidden": 3,
    "fc_hidden": 4,
}


@pytest.fixture
def runner() -> CliRunner:
    return CliRunner()


@pytest.fixture(scope="module")
def trained(tmp_path_factory, toy_corpus):
    """One-epoch model trained through the CLI"""
    work = tmp_path_factory.mktemp("trained")
    model_config = work / "model.json"
    model_config.write_bytes(orjson.dumps(TINY_MODEL))
    train_config = work / "train.json"
    train_config.write_bytes(orjson.dumps({"batch_size": 3}))
    out_dir = work / "run"

    code = run([
        "train", "--manifest", str(toy_corpus.train_manifest), "--val", str(toy_corpus.val_manifest),
        "--model-config", str(model_config), "--config", str(train_config), "--preset", "dropout",
        "--max-epochs", "1", "--threads", "1", "--out", str(out_dir),
    ])

    assert code == EXIT_OK
    return out_dir


class TestGroup:
    """Test the command group"""

    def test_help_lists_commands(self, runner):
        result = runner.invoke(cli, ["--help"])

        assert result.exit_code == 0
        for name in ("augment", "featurize", "lm-train", "train", "decode", "eval", "toy-corpus"):
            assert name in result.stdout

    def test_version(self, runner):
        result = runner.invoke(cli, ["--version"])

        assert result.exit_code == 0
        assert "speechreg" in result.stdout


class TestExitCodes:
    """Test run() error mapping"""

    def test_missing_option_is_usage_error(self):
        assert run(["train"]) == EXIT_USAGE

    def test_unknown_command(self):
        assert run(["transcribe"]) == EXIT_USAGE

    def test_invalid_config_value(self, tmp_path, toy_corpus):
        """A config that fails validation exits with 1"""
        config = tmp_path / "bad.json"
        config.write_bytes(orjson.dumps({"batch_size": 1}))

        code = run([
            "train", "--manifest", str(toy_corpus.train_manifest), "--val", str(toy_corpus.val_manifest),
            "--config", str(config), "--out", str(tmp_path / "out"),
        ])

        assert code == EXIT_USAGE

    def test_malformed_manifest_is_data_error(self, tmp_path):
        manifest = tmp_path / "bad.jsonl"
        manifest.write_text("{oops\n")

        assert run(["lm-train", "--manifest", str(manifest), "--out", str(tmp_path / "lm.arpa")]) == EXIT_DATA

    def test_corrupt_checkpoint_is_data_error(self, tmp_path, toy_corpus):
        model = tmp_path / "junk.ckpt"
        model.write_bytes(b"not a checkpoint")

        assert run(["eval", "--model", str(model), "--manifest", str(toy_corpus.val_manifest)]) == EXIT_DATA

    def test_lm_train_needs_a_source(self, tmp_path):
        assert run(["lm-train", "--out", str(tmp_path / "lm.arpa")]) == EXIT_USAGE


class TestToyCorpusCommand:
    def test_writes_corpus(self, runner, tmp_path):
        result = runner.invoke(cli, ["toy-corpus", "--out-dir", str(tmp_path), "--train", "3", "--val", "2",
                                     "--alphabet-size", "2", "--seed", "4"])

        assert result.exit_code == 0, result.output
        assert len(parse_manifest(tmp_path / "train.jsonl")) == 3
        assert len(parse_manifest(tmp_path / "val.jsonl")) == 2
        assert (tmp_path / "alphabet.txt").read_text() == "a\nb\n"


class TestLmTrainCommand:
    def test_from_manifest(self, runner, tmp_path, toy_corpus):
        """Transcripts of a manifest train a loadable ARPA model"""
        out = tmp_path / "lm.arpa"

        result = runner.invoke(cli, ["lm-train", "--manifest", str(toy_corpus.train_manifest),
                                     "--order", "2", "--alphabet", str(toy_corpus.alphabet_path), "--out", str(out)])

        assert result.exit_code == 0, result.output
        model = parse_arpa(out)
        assert model.order == 2
        assert {"a", "b", "c"} <= set(model.vocabulary)


class TestAugmentCommand:
    def test_writes_copies_and_manifest(self, runner, tmp_path, toy_corpus):
        """Originals are kept and each copy records its perturbation"""
        result = runner.invoke(cli, ["augment", "--manifest", str(toy_corpus.val_manifest), "--out-dir",
                                     str(tmp_path), "--copies", "2", "--no-noise", "--threads", "2"])

        assert result.exit_code == 0, result.output
        entries = parse_manifest(tmp_path / "manifest.jsonl")
        assert len(entries) == 3 * len(toy_corpus.val)
        originals, copies = entries[:len(toy_corpus.val)], entries[len(toy_corpus.val):]
        assert all(e.augmentation is None for e in originals)
        assert all(e.augmentation is not None and e.augmentation.snr_db is None for e in copies)
        assert all((tmp_path / e.audio_path).exists() for e in copies)

    def test_seeded_output_is_identical(self, runner, tmp_path, toy_corpus):
        """Two runs with the same seed write bit-identical WAVs"""
        for name in ("first", "second"):
            result = runner.invoke(cli, ["augment", "--manifest", str(toy_corpus.val_manifest), "--out-dir",
                                         str(tmp_path / name), "--seed", "7", "--threads", "2"])
            assert result.exit_code == 0, result.output

        first = sorted((tmp_path / "first" / "wav").iterdir())
        assert first
        for path in first:
            assert path.read_bytes() == (tmp_path / "second" / "wav" / path.name).read_bytes()

    def test_bad_range(self, tmp_path, toy_corpus):
        """An inverted range is a configuration error"""
        code = run(["augment", "--manifest", str(toy_corpus.val_manifest), "--out-dir", str(tmp_path),
                    "--gain-range", "5,-5"])

        assert code == EXIT_USAGE


class TestTrainCommand:
    def test_artifacts(self, trained):
        """The run directory holds the checkpoint, log, statistics and configs"""
        for name in (CHECKPOINT_NAME, LOG_NAME, STATS_NAME, "train_config.json", "model_config.json"):
            assert (trained / name).exists(), name
        saved = orjson.loads((trained / "train_config.json").read_bytes())
        assert saved["batch_size"] == 3
        assert saved["max_epochs"] == 1
        assert saved["dropout"]["conv"] > 0

    def test_seeded_runs_are_bit_identical(self, tmp_path, toy_corpus):
        """Two 3-epoch `train --seed 7` runs write identical checkpoints and logs"""
        model_config = tmp_path / "model.json"
        model_config.write_bytes(orjson.dumps(TINY_MODEL))
        train_config = tmp_path / "train.json"
        train_config.write_bytes(orjson.dumps({"batch_size": 3}))

        out_dirs = []
        for name, threads in (("first", "1"), ("second", "2")):
            out_dir = tmp_path / name
            code = run([
                "train", "--manifest", str(toy_corpus.train_manifest), "--val", str(toy_corpus.val_manifest),
                "--model-config", str(model_config), "--config", str(train_config),
                "--preset", "all_regularization", "--seed", "7", "--max-epochs", "3",
                "--threads", threads, "--out", str(out_dir),
            ])
            assert code == EXIT_OK
            out_dirs.append(out_dir)
        first, second = out_dirs

        assert (first / CHECKPOINT_NAME).read_bytes() == (second / CHECKPOINT_NAME).read_bytes()
        first_log = TrainLog.from_csv((first / LOG_NAME).read_text())
        second_log = TrainLog.from_csv((second / LOG_NAME).read_text())
        assert len(first_log) == 3
        # wall time is the only column allowed to differ
        assert first_log.to_csv(include_time=False) == second_log.to_csv(include_time=False)


class TestEvalCommand:
    def test_report_on_stdout(self, runner, trained, toy_corpus):
        result = runner.invoke(cli, ["eval", "--model", str(trained / CHECKPOINT_NAME), "--manifest",
                                     str(toy_corpus.val_manifest), "--beam", "4", "--alpha", "0", "--beta", "0"])

        assert result.exit_code == 0, result.output
        report = orjson.loads(result.stdout)
        assert {"cer", "wer", "utterances", "skipped"} <= set(report)
        assert report["utterances"] == len(toy_corpus.val)
        assert "hypotheses" not in report

    def test_details_with_lm(self, runner, tmp_path, trained, toy_corpus):
        lm = tmp_path / "lm.arpa"
        assert run(["lm-train", "--manifest", str(toy_corpus.train_manifest), "--out", str(lm)]) == EXIT_OK
        out = tmp_path / "report.json"

        result = runner.invoke(cli, ["eval", "--model", str(trained / CHECKPOINT_NAME), "--manifest",
                                     str(toy_corpus.val_manifest), "--lm", str(lm), "--beam", "4",
                                     "--details", "--out", str(out)])

        assert result.exit_code == 0, result.output
        report = orjson.loads(out.read_bytes())
        assert len(report["hypotheses"]) == len(toy_corpus.val)


class TestFeaturizeAndDecode:
    def test_pipeline(self, runner, tmp_path, trained, toy_corpus):
        """featurize output decodes to one line per utterance with n-best lists"""
        features = tmp_path / "features"
        result = runner.invoke(cli, ["featurize", "--manifest", str(toy_corpus.val_manifest), "--out-dir",
                                     str(features), "--stats", str(trained / STATS_NAME)])
        assert result.exit_code == 0, result.output
        index = [orjson.loads(line) for line in (features / INDEX_NAME).read_text().splitlines()]
        assert [r["transcript"] for r in index] == [e.transcript for e in toy_corpus.val]

        out = tmp_path / "decoded.jsonl"
        result = runner.invoke(cli, ["decode", "--features", str(features), "--model", str(trained / CHECKPOINT_NAME),
                                     "--beam", "8", "--nbest", "3", "--out", str(out)])

        assert result.exit_code == 0, result.output
        lines = [orjson.loads(line) for line in out.read_text().splitlines()]
        assert len(lines) == len(toy_corpus.val)
        for line in lines:
            assert 1 <= len(line["hypotheses"]) <= 3
            scores = [h["score"] for h in line["hypotheses"]]
            assert scores == sorted(scores, reverse=True)

    def test_featurize_computes_stats(self, runner, tmp_path, toy_corpus):
        result = runner.invoke(cli, ["featurize", "--manifest", str(toy_corpus.val_manifest),
                                     "--out-dir", str(tmp_path)])

        assert result.exit_code == 0, result.output
        assert (tmp_path / STATS_NAME).exists()
        assert len(list(tmp_path.glob("*.npy"))) == len(toy_corpus.val)

    def test_decode_without_index(self, tmp_path, trained):
        code = run(["decode", "--features", str(tmp_path), "--model", str(trained / CHECKPOINT_NAME),
                    "--out", str(tmp_path / "out.jsonl")])

        assert code == EXIT_DATA
