import numpy as np
import pytest

from rewardlab import datagen as dg, formats, simworld as sw
from rewardlab.errors import CorruptFileError, VersionMismatchError


@pytest.fixture(scope="module")
def dataset():
    cfg = dg.DataConfig(
        tasks=(sw.TASK_OPEN_DRAWER,), human_per_task=2,
        robot_success_per_task=2, robot_failure_per_task=2, seed=9,
    )
    return dg.gen_dataset(cfg)


class TestDatasetFormat:
    def test_round_trip_bit_identical(self, dataset, tmp_path):
        path = tmp_path / "ds.txt"
        formats.save_dataset(dataset, path)
        back = formats.load_dataset(path)
        assert len(back) == len(dataset)
        for a, b in zip(dataset.clips, back.clips):
            assert np.array_equal(a.frames, b.frames)
            assert a.domain == b.domain and a.task_id == b.task_id
            assert a.success == b.success and a.failure_archetype == b.failure_archetype
            assert a.seed == b.seed

    def test_truncated_file_is_corrupt(self, dataset, tmp_path):
        path = tmp_path / "ds.txt"
        formats.save_dataset(dataset, path)
        text = path.read_text()
        path.write_text(text[: int(len(text) * 0.6)])
        with pytest.raises(CorruptFileError):
            formats.load_dataset(path)

    def test_dropped_record_is_corrupt(self, dataset, tmp_path):
        path = tmp_path / "ds.txt"
        formats.save_dataset(dataset, path)
        lines = path.read_text().splitlines()
        path.write_text("\n".join(lines[:-1]) + "\n")
        with pytest.raises(CorruptFileError):
            formats.load_dataset(path)

    def test_version_mismatch(self, dataset, tmp_path):
        path = tmp_path / "ds.txt"
        formats.save_dataset(dataset, path)
        lines = path.read_text().splitlines()
        lines[0] = lines[0].replace("v1", "v99")
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(VersionMismatchError):
            formats.load_dataset(path)

    def test_wrong_magic(self, tmp_path):
        path = tmp_path / "ds.txt"
        path.write_text("something-else v1 clips=0\n")
        with pytest.raises(CorruptFileError):
            formats.load_dataset(path)


class TestCheckpointFormat:
    def test_round_trip_bit_identical(self, tmp_path):
        rng = np.random.default_rng(3)
        arrays = {
            "video.frame_proj": rng.normal(size=(16, 32)),
            "pool.prompt.4.0": rng.normal(size=(2, 32)),
            "scalarish": np.array(3.5),
        }
        path = tmp_path / "ckpt.txt"
        formats.save_checkpoint(arrays, path)
        back = formats.load_checkpoint(path)
        assert set(back) == set(arrays)
        for name in arrays:
            assert np.array_equal(back[name], np.asarray(arrays[name]))

    def test_value_count_mismatch(self, tmp_path):
        path = tmp_path / "ckpt.txt"
        formats.save_checkpoint({"w": np.ones((2, 2))}, path)
        lines = path.read_text().splitlines()
        lines[1] = " ".join(lines[1].split()[:-1])  # drop one value
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(CorruptFileError):
            formats.load_checkpoint(path)


class TestTrajectoryFormat:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(5)
        s0 = sw.sample_initial_state(sw.TASK_FAUCET, rng)
        actions = [sw.array_to_action(a) for a in sw.random_action_array(rng, 12)]
        traj = sw.rollout(s0, actions)
        path = tmp_path / "traj.txt"
        formats.save_trajectory(traj, path)
        back = formats.load_trajectory(path)
        assert back.states == traj.states
        assert back.actions == traj.actions

    def test_header_count_enforced(self, tmp_path):
        path = tmp_path / "traj.txt"
        s0 = sw.SimState()
        traj = sw.rollout(s0, [sw.Action(0.01, 0.0)])
        formats.save_trajectory(traj, path)
        lines = path.read_text().splitlines()
        path.write_text("\n".join(lines[:-1]) + "\n")
        with pytest.raises(CorruptFileError):
            formats.load_trajectory(path)
