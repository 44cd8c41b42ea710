import csv

import numpy as np
import pytest

from motvla.cli import EXIT_NUMERICAL, main
from motvla.config import RunConfig
from motvla.data import save_episode
from motvla.env import REFERENCE_TASKS, collect_demonstrations
from motvla.model import load_checkpoint
from motvla.training import LOG_COLUMNS, BatchSchedule, TrainingAborted, learning_rate, prepare_dataset, train

SMALL = dict(model_dim=16, num_layers=1, num_heads=2, mlp_hidden_dim=24, image_size=16, chunk_length=4,
             batch_size=4, steps=6, warmup_steps=2, log_every=2, time_features=8, horizon=4)


@pytest.fixture(scope="module")
def episodes():
    return collect_demonstrations(REFERENCE_TASKS["reach"], 4, seed=0, image_size=16)


def small(**kw) -> RunConfig:
    return RunConfig(**{**SMALL, **kw})


class TestSchedule:
    def test_warmup_then_cosine(self):
        cfg = RunConfig(lr=1.0, min_lr=0.0, warmup_steps=4, steps=104)
        assert learning_rate(0, cfg) == 0.25 and learning_rate(3, cfg) == 1.0
        assert learning_rate(54, cfg) == pytest.approx(0.5)
        assert learning_rate(104, cfg) == pytest.approx(0.0)
        assert learning_rate(500, RunConfig(lr_schedule="constant", warmup_steps=0)) == 1e-3

    def test_batch_schedule_is_pure(self, episodes):
        data = prepare_dataset(episodes, small())
        a, b = BatchSchedule(data, 4, 7), BatchSchedule(data, 4, 7)
        forward = [a(k) for k in range(12)]
        assert [b(k) for k in reversed(range(12))] == forward[::-1]
        first_epoch = [i for k in range(a.per_epoch) for i in a(k)]
        assert sorted(first_epoch) == sorted(a.index)


class TestTrain:
    def test_log_schema_and_checkpoints(self, episodes, tmp_path):
        res = train(episodes, small(), tmp_path)
        with (tmp_path / "train_log.csv").open() as fh:
            rows = list(csv.DictReader(fh))
        assert tuple(rows[0]) == LOG_COLUMNS
        assert [int(r["step"]) for r in rows] == [2, 4, 6]
        assert res.final_path.exists() and res.best_path.exists()
        _, meta, extra = load_checkpoint(res.final_path)
        assert meta["step"] == "6" and "norm.state_mean" in extra

    def test_distill_logged_for_both_lambdas(self, episodes):
        off = train(episodes, small(lambda_distill=0.0))
        on = train(episodes, small(lambda_distill=0.5))
        assert all(r["total"] == r["fm_loss"] for r in off.log)
        assert all(r["distill_loss"] > 0 for r in off.log + on.log)
        first = on.log[0]
        assert first["total"] == pytest.approx(first["fm_loss"] + 0.5 * first["distill_loss"])

    def test_resume_matches_uninterrupted(self, episodes, tmp_path):
        full = train(episodes, small(), tmp_path / "full")
        train(episodes, small(), tmp_path / "part", max_steps=4)
        resumed = train(episodes, small(), tmp_path / "part", resume=tmp_path / "part" / "final.motc")
        assert resumed.step == 6
        for n in full.params.names():
            np.testing.assert_array_equal(full.params[n].data, resumed.params[n].data)
        with (tmp_path / "part" / "train_log.csv").open() as fh:
            steps = [int(r["step"]) for r in csv.DictReader(fh)]
        assert steps == sorted(steps) and steps[-1] == 6

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_nan_aborts_with_dump(self, episodes, tmp_path):
        bad = collect_demonstrations(REFERENCE_TASKS["reach"], 1, seed=5, image_size=16)[0]
        bad.actions = bad.actions.copy()
        bad.actions[0, 0] = np.nan
        with pytest.raises(TrainingAborted) as info:
            train([bad], small(), tmp_path)
        assert info.value.dump_path.exists()

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_cli_nan_exit_code(self, tmp_path):
        bad = collect_demonstrations(REFERENCE_TASKS["reach"], 1, seed=5, image_size=16)[0]
        bad.actions = bad.actions.copy()
        bad.actions[2, 1] = np.inf
        save_episode(bad, tmp_path / "data" / "reach" / bad.name)
        args = ["train", "--out", str(tmp_path / "run"), "--set", f"data_dir={tmp_path / 'data'}"]
        for k, v in SMALL.items():
            args += ["--set", f"{k}={v}"]
        assert main(args) == EXIT_NUMERICAL
        assert (tmp_path / "run" / "nan_dump.json").exists()
