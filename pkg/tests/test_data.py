import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lbflats.data import (
    OUTLIER,
    SETTINGS,
    AngleConstraintError,
    MatrixFormatError,
    SyntheticSpec,
    crossing_planes,
    generate,
    init_study_dataset,
    load_labels,
    load_matrix,
    load_trajectories,
    misclassification_rate,
    parallel_planes,
    parse_setting,
    save_labels,
    save_matrix,
    save_result,
)
from lbflats.geometry import distances_to_flat, separation_angle
from lbflats.lbf import ClusteringResult


# ------------------------------------------------------------- generator


def test_counts_follow_protocol():
    lc = generate(SyntheticSpec((2, 2), 4, outlier_fraction=0.05, seed=0))
    assert lc.points.shape == (525, 4)
    assert np.bincount(lc.truth[lc.truth >= 0]).tolist() == [250, 250]
    assert lc.n_outliers == 25 and np.all(lc.truth[500:] == OUTLIER)
    final = SyntheticSpec((2, 2), 4, outlier_fraction=0.05, outlier_rule="final")
    assert final.outlier_count() == 26
    assert SyntheticSpec((4, 5, 6), 10, samples_per_dim=100).counts() == [400, 500, 600]


def test_outliers_inside_cube():
    lc = generate(SyntheticSpec((1, 2), 3, outlier_fraction=0.3, kind="affine", seed=4))
    inl = lc.points[lc.truth >= 0]
    M = np.linalg.norm(inl, axis=1).max()
    assert np.abs(lc.points[lc.truth == OUTLIER]).max() <= M


@pytest.mark.parametrize("kind", ["affine", "linear"])
def test_noiseless_points_lie_on_their_flats(kind):
    lc = generate(SyntheticSpec((1, 2, 3), 5, noise_sigma=0.0, kind=kind, seed=1))
    for k, flat in enumerate(lc.flats):
        assert distances_to_flat(lc.points[lc.truth == k], flat).max() < 1e-12
        if kind == "linear":
            assert not flat.offset.any()
        else:
            assert np.linalg.norm(flat.offset) <= 1.0


def test_noise_mean_squared_distance():
    msd = []
    for t in range(100):
        lc = generate(SyntheticSpec((2,), 4, seed=t))
        msd.append(np.mean(distances_to_flat(lc.points, lc.flats[0]) ** 2))
    # normal component is chi-squared with D - d degrees of freedom scaled by sigma^2
    assert np.mean(msd) == pytest.approx(2 * 0.05**2, rel=0.10)


def test_min_angle_is_enforced():
    for t in range(20):
        lc = generate(SyntheticSpec((2, 2, 2, 2), 3, min_angle=np.pi / 8, seed=t))
        bases = [f.basis for f in lc.flats]
        for a in range(4):
            for b in range(a + 1, 4):
                assert separation_angle(bases[a], bases[b]) >= np.pi / 8 - 1e-9


def test_infeasible_angle_raises():
    with pytest.raises(AngleConstraintError, match="angle constraint infeasible"):
        generate(SyntheticSpec((1, 1, 1, 1), 2, min_angle=1.2, max_tries=50))


def test_generator_determinism_and_validation():
    a = generate(SyntheticSpec((2, 2), 4, outlier_fraction=0.05, seed=9))
    b = generate(SyntheticSpec((2, 2), 4, outlier_fraction=0.05, seed=9))
    assert np.array_equal(a.points, b.points) and np.array_equal(a.truth, b.truth)
    c = generate(SyntheticSpec((2, 2), 4, outlier_fraction=0.05, seed=10))
    assert not np.array_equal(a.points, c.points)
    for bad in (dict(dims=(4,), ambient=4), dict(dims=(1,), ambient=3, outlier_fraction=1.0),
                dict(dims=(1,), ambient=3, noise_sigma=-1.0), dict(dims=(1,), ambient=3, samples_per_subspace=0),
                dict(dims=(1,), ambient=3, outlier_rule="half")):
        with pytest.raises(ValueError):
            SyntheticSpec(**bad)


def test_parse_setting():
    for name, value in SETTINGS.items():
        assert parse_setting(name) == value
    assert parse_setting("3^3inR5") == ((3, 3, 3), 5)
    with pytest.raises(ValueError, match="valid settings"):
        parse_setting("planes")


def test_study_sets():
    pp = parallel_planes(50, seed=1)
    assert sorted(set(np.round(pp.points[:, 2], 12))) == [0.0, 0.2, 0.4]
    cp = crossing_planes(50, seed=1)
    assert cp.points.shape == (150, 3)
    for k, f in enumerate(cp.flats):
        assert distances_to_flat(cp.points[cp.truth == k], f).max() < 1e-12
    ds2 = init_study_dataset(2)
    assert ds2.points.shape == (1575, 3)
    with pytest.raises(ValueError):
        init_study_dataset(4)


# --------------------------------------------------------------- metrics


def test_misclassification_examples():
    truth = np.repeat([0, 1, 2], [40, 30, 30])
    assert misclassification_rate(truth, truth) == 0.0
    assert misclassification_rate(np.array([2, 0, 1])[truth], truth) == 0.0
    pred = truth.copy()
    pred[5] = 1
    assert misclassification_rate(pred, truth) == pytest.approx(1.0)
    with pytest.raises(ValueError, match="no inliers"):
        misclassification_rate([0, 1], [OUTLIER, OUTLIER])
    with pytest.raises(ValueError):
        misclassification_rate([0], [0, 1])


@settings(max_examples=80, deadline=None)
@given(st.lists(st.integers(0, 3), min_size=1, max_size=60), st.data())
def test_misclassification_invariances(truth, data):
    truth = np.array(truth)
    pred = np.array(data.draw(st.lists(st.integers(0, 4), min_size=len(truth), max_size=len(truth))))
    base = misclassification_rate(pred, truth)
    assert 0.0 <= base <= 100.0
    perm = np.array(data.draw(st.permutations(range(5))))
    assert misclassification_rate(perm[pred], truth) == base
    extra = data.draw(st.lists(st.integers(0, 4), max_size=10))
    pred_o = np.r_[pred, extra].astype(int)
    truth_o = np.r_[truth, [OUTLIER] * len(extra)].astype(int)
    assert misclassification_rate(pred_o, truth_o) == base


# -------------------------------------------------------------------- I/O


def test_binary_round_trip_is_bitwise(tmp_path):
    path = tmp_path / "eye.bin"
    save_matrix(path, np.eye(2), fmt="binary")
    blob = path.read_bytes()
    assert blob[:4] == b"LBF1" and len(blob) == 4 + 16 + 32
    back = load_matrix(path).points
    assert back.tobytes() == np.eye(2).tobytes()
    rng = np.random.default_rng(0)
    X = rng.standard_normal((7, 3)) * 1e300
    save_matrix(path, X, fmt="binary")
    assert load_matrix(path, fmt="binary").points.tobytes() == X.tobytes()


def test_text_round_trip_is_exact(tmp_path):
    X = np.random.default_rng(1).standard_normal((10, 4))
    path = tmp_path / "x.csv"
    save_matrix(path, X)
    assert np.array_equal(load_matrix(path).points, X)
    save_matrix(path, X, delimiter=";")
    assert np.array_equal(load_matrix(path, delimiter=";").points, X)


def test_text_parse_errors(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x,y,z\n1,2,3\n4,5\n")
    with pytest.raises(MatrixFormatError, match="line 3: expected 3 columns, found 2"):
        load_matrix(path)
    path.write_text("1,2\n3,abc\n")
    with pytest.raises(MatrixFormatError, match="line 2: non-numeric"):
        load_matrix(path)
    path.write_text("# only a comment\n")
    with pytest.raises(MatrixFormatError, match="no data rows"):
        load_matrix(path)
    path.write_text("1 2\n3 4\n")
    assert load_matrix(path, delimiter=" ").points.tolist() == [[1.0, 2.0], [3.0, 4.0]]
    path.write_text("1,2\n3,4\n")
    assert load_matrix(path, header=True).points.tolist() == [[3.0, 4.0]]


def test_binary_parse_errors(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"LBF2" + bytes(16))
    with pytest.raises(MatrixFormatError, match="bad magic"):
        load_matrix(path, fmt="binary")
    path.write_bytes(b"LBF1" + (3).to_bytes(8, "little") + (2).to_bytes(8, "little") + bytes(8))
    with pytest.raises(MatrixFormatError, match="header implies 48"):
        load_matrix(path)
    with pytest.raises(ValueError, match="unknown matrix format"):
        load_matrix(path, fmt="xml")


def test_labels_round_trip(tmp_path):
    path = tmp_path / "labels.txt"
    labels = np.array([0, 2, -1, 1])
    save_labels(path, labels)
    assert np.array_equal(load_labels(path), labels)
    path.write_text("0\n1.5\n")
    with pytest.raises(MatrixFormatError, match="line 2"):
        load_labels(path)


def test_trajectory_fixture(tmp_path):
    F, N = 3, 5
    frames = np.arange(2 * F * N, dtype=float).reshape(2 * F, N)
    path = tmp_path / "traj.txt"
    path.write_text("\n".join(" ".join(str(v) for v in row) for row in frames))
    pc = load_trajectories(path)
    assert pc.points.shape == (N, 2 * F)
    # feature j stacks (x, y) of every frame in order
    np.testing.assert_array_equal(pc.points[1], frames[:, 1])
    path.write_text("1,2\n3,4\n5,6\n")
    with pytest.raises(MatrixFormatError, match="even number of rows"):
        load_trajectories(path)


def test_save_result_formats(tmp_path):
    res = ClusteringResult(flats=[None, None], labels=np.array([0, 1, 1]), distances=np.array([0.0, 0.5, 0.25]),
                           l1_energy=0.75, l2_energy=0.3125)
    path = tmp_path / "r.jsonl"
    save_result(path, res)
    lines = path.read_text().splitlines()
    assert len(lines) == 4 and '"type": "summary"' in lines[0]
    assert lines[2] == '{"distance": 0.5, "i": 1, "label": 1}'
    save_result(path, res, fmt="text")
    assert path.read_text().splitlines() == ["label,distance", "0,0.0", "1,0.5", "1,0.25"]
    with pytest.raises(ValueError):
        save_result(path, res, fmt="xml")
    assert math.isclose(res.mean_l1, 0.25)
