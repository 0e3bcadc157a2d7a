import numpy as np
import pytest

from dinendt.data import DatasetError, TrajectoryDataset, ingest_csv, write_csv


def write(tmp_path, text):
    p = tmp_path / "d.csv"
    p.write_text(text)
    return p


def test_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(0)
    ds = TrajectoryDataset([(rng.standard_normal((7, 2)), rng.standard_normal((7, 1))),
                            (rng.standard_normal((4, 2)), rng.standard_normal((4, 1)))])
    write_csv(tmp_path / "d.csv", ds)
    back = ingest_csv(tmp_path / "d.csv")
    assert back.d_x == 2 and back.d_y == 1 and back.n_steps == 11
    for (x, y), (bx, by) in zip(ds.trajectories, back.trajectories):
        assert x.tobytes() == bx.tobytes() and y.tobytes() == by.tobytes()


@pytest.mark.parametrize("text, where", [
    ("", "empty file"),
    ("traj,t,x0\n", ":1:"),
    ("traj,t,x1,y0\n", ":1:"),
    ("traj,t,x0,y0\n0,0,1.0,2.0\n0,1,abc,1\n", ":3:"),
    ("traj,t,x0,y0\n0,0,1.0,nan\n", ":2:"),
    ("traj,t,x0,y0\n0,0,1.0,2.0\n0,0,1.0,2.0\n", ":3:"),
    ("traj,t,x0,y0\n0,0,1,2\n1,0,1,2\n0,1,1,2\n", ":4:"),
    ("traj,t,x0,y0\n0,0,1,2,3\n", ":2:"),
    ("traj,t,x0,y0\n", "no data rows"),
])
def test_malformed_csv_names_the_line(tmp_path, text, where):
    with pytest.raises(DatasetError, match=where):
        ingest_csv(write(tmp_path, text))


def test_missing_file(tmp_path):
    with pytest.raises(DatasetError):
        ingest_csv(tmp_path / "none.csv")


def test_from_arrays_and_validation():
    ds = TrajectoryDataset.from_arrays(np.zeros((3, 5, 1)), np.ones((3, 5, 1)))
    assert len(ds.trajectories) == 3 and ds.n_steps == 15
    assert TrajectoryDataset.from_arrays(np.zeros(4), np.zeros(4)).d_x == 1
    with pytest.raises(DatasetError):
        TrajectoryDataset([])
    with pytest.raises(DatasetError):
        TrajectoryDataset([(np.zeros((3, 1)), np.zeros((2, 1)))])
    with pytest.raises(DatasetError):
        TrajectoryDataset([(np.full((3, 1), np.inf), np.zeros((3, 1)))])


def test_windows():
    x = np.arange(10.0)[:, None]
    ds = TrajectoryDataset([(x, -x), (x[:3], -x[:3])])
    xs, ys = ds.sample_windows(np.random.default_rng(0), 50, 4)
    assert xs.shape == (50, 4, 1)
    # windows are contiguous slices of the long trajectory
    assert np.all(np.diff(xs[..., 0], axis=1) == 1.0) and np.all(ys == -xs)
    xs, _ = ds.tiled_windows(4)
    assert xs[:, 0, 0].tolist() == [0.0, 4.0]
    with pytest.raises(DatasetError):
        ds.sample_windows(np.random.default_rng(0), 1, 11)
    with pytest.raises(DatasetError):
        ds.tiled_windows(11)
