import numpy as np
import pytest

from brainspeech.config import Config, ConfigError, load_config
from brainspeech.dataset import SynthSpec, generate_synthetic
from brainspeech.pipeline import DataConfig, DataPipeline, SplitLeakError
from brainspeech.training import make_batches, train


@pytest.fixture(scope="module")
def tiny_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("data") / "tiny"
    spec = SynthSpec(subjects=2, segments=40, channels=8, features=6,
                     noise_std=0.0, seed=21, vocab_size=12)
    generate_synthetic(spec, root)
    return root


def tiny_train_config(root, **overrides):
    cfg = Config()
    cfg.dataset.root = str(root)
    cfg.speech.representation = "external"
    cfg.model.d1 = 16
    cfg.model.d2 = 16
    cfg.model.harmonics = 4
    cfg.training.batch_size = 8
    cfg.training.max_epochs = 4
    cfg.training.seed = 3
    for dotted, value in overrides.items():
        section, key = dotted.split(".")
        setattr(getattr(cfg, section), key, value)
    return cfg


class TestMakeBatches:
    def test_batch_arithmetic(self):
        batches = make_batches(1000, 256, seed=0, epoch=0, updates=3)
        assert len(batches) == 3
        assert all(b.size == 256 for b in batches)
        used = np.concatenate(batches)
        assert len(np.unique(used)) == 768  # 232 samples dropped that pass

    def test_epoch_changes_permutation(self):
        a = make_batches(100, 10, seed=0, epoch=0, updates=5)
        b = make_batches(100, 10, seed=0, epoch=1, updates=5)
        assert not all(np.array_equal(x, y) for x, y in zip(a, b))

    def test_deterministic(self):
        a = make_batches(100, 10, seed=4, epoch=2, updates=5)
        b = make_batches(100, 10, seed=4, epoch=2, updates=5)
        assert all(np.array_equal(x, y) for x, y in zip(a, b))

    def test_cycles_when_pool_small(self):
        batches = make_batches(20, 10, seed=0, epoch=0, updates=7)
        assert len(batches) == 7

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            make_batches(5, 10, seed=0, epoch=0, updates=1)

    def test_mixed_subjects_in_batches(self, tiny_dataset):
        pipeline = DataPipeline(tiny_dataset, DataConfig(representation="external"))
        data = pipeline.materialize("train")
        batches = make_batches(data.x.shape[0], 16, seed=0, epoch=0, updates=3)
        mixed = sum(len(np.unique(data.subject_idx[b])) > 1 for b in batches)
        assert mixed == 3


class TestTrain:
    def test_loss_decreases_and_history_written(self, tiny_dataset, tmp_path):
        cfg = tiny_train_config(tiny_dataset)
        result = train(cfg, tmp_path / "run")
        assert (tmp_path / "run" / "history.csv").exists()
        assert (tmp_path / "run" / "best" / "manifest.json").exists()
        losses = [h["train_loss"] for h in result.history]
        assert losses[-1] < losses[0]

    def test_best_checkpoint_invariant(self, tiny_dataset, tmp_path):
        cfg = tiny_train_config(tiny_dataset)
        result = train(cfg, tmp_path / "run")
        best = min(h["valid_loss"] for h in result.history)
        assert result.best_valid_loss == best

    def test_determinism_identical_history(self, tiny_dataset, tmp_path):
        cfg = tiny_train_config(tiny_dataset)
        train(cfg, tmp_path / "a")
        train(tiny_train_config(tiny_dataset), tmp_path / "b")
        assert (tmp_path / "a" / "history.csv").read_bytes() == (
            tmp_path / "b" / "history.csv"
        ).read_bytes()

    def test_patience_arithmetic(self):
        from brainspeech.training import EarlyStopper

        # 1.0 then ten epochs at >= 1.0: stop after epoch 11, best = epoch 1
        stopper = EarlyStopper(patience=10)
        assert stopper.update(1, 1.0)
        for epoch in range(2, 12):
            assert not stopper.update(epoch, 1.0)
            if epoch < 11:
                assert not stopper.should_stop
        assert stopper.should_stop
        assert stopper.best_epoch == 1

    def test_strict_improvement_required(self):
        from brainspeech.training import EarlyStopper

        stopper = EarlyStopper(patience=2)
        assert stopper.update(1, 0.5)
        assert not stopper.update(2, 0.5)  # equal is not an improvement
        assert stopper.update(3, 0.4999999)  # any margin counts

    def test_guard_blocks_test_reads(self, tiny_dataset, tmp_path):
        pipeline = DataPipeline(tiny_dataset, DataConfig(representation="external"))
        pipeline.materialize("test")
        cfg = tiny_train_config(tiny_dataset, **{"training.max_epochs": 1})
        with pytest.raises(SplitLeakError):
            train(cfg, tmp_path / "run", pipeline=pipeline)

    def test_regression_objective_runs(self, tiny_dataset, tmp_path):
        cfg = tiny_train_config(tiny_dataset, **{"training.objective": "regression"})
        cfg.speech.representation = "mel"
        cfg.speech.n_mels = 20
        result = train(cfg, tmp_path / "run")
        assert np.isfinite(result.best_valid_loss)

    def test_deep_mel_objective_runs(self, tiny_dataset, tmp_path):
        cfg = tiny_train_config(tiny_dataset)
        cfg.speech.representation = "deep-mel"
        cfg.speech.n_mels = 20
        cfg.speech.deep_mel_dim = 8
        cfg.training.max_epochs = 2
        result = train(cfg, tmp_path / "run")
        assert np.isfinite(result.best_valid_loss)
        assert (result.checkpoint_dir / "manifest.json").exists()


class TestConfig:
    def test_defaults_follow_reference_settings(self):
        cfg = Config()
        assert cfg.training.lr == 3e-4
        assert cfg.training.batch_size == 256
        assert cfg.training.updates_per_epoch == 1200
        assert cfg.training.patience == 10
        assert cfg.model.d1 == 270
        assert cfg.model.d2 == 320
        assert cfg.model.harmonics == 32

    def test_file_and_overrides(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("[training]\nlr = 0.001\nbatch_size = 32\n[model]\nd1 = 64\n")
        cfg = load_config(str(path), ["training.seed=9", "preprocessing.clamp=none"])
        assert cfg.training.lr == 0.001
        assert cfg.training.batch_size == 32
        assert cfg.model.d1 == 64
        assert cfg.training.seed == 9
        assert cfg.preprocessing.clamp is None

    def test_unknown_key_reports_path(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("[training]\nlearning = 1\n")
        with pytest.raises(ConfigError, match="training.learning"):
            load_config(str(path))

    def test_bad_representation(self):
        with pytest.raises(ConfigError, match="representation"):
            load_config(None, ["speech.representation=wavelets"])

    def test_regression_requires_mel(self):
        with pytest.raises(ConfigError):
            load_config(None, ["training.objective=regression",
                               "speech.representation=external"])

    def test_ablation_flag_validated(self):
        with pytest.raises(ConfigError, match="ablation"):
            load_config(None, ["model.ablation=transformer"])
