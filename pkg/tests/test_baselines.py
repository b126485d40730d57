import numpy as np
import pytest

from lbflats._random import derive_rng
from lbflats.baselines import (
    Init,
    KFlatsConfig,
    farthest_insertion_init,
    kflats,
    kflats_restarts,
    random_init,
)
from lbflats.data import SyntheticSpec, generate, init_study_dataset, misclassification_rate
from lbflats.geometry import Flat, distances_to_flat
from lbflats.scale import ScaleConfig


def test_config_validation():
    with pytest.raises(ValueError):
        KFlatsConfig(d=1, K=0)
    with pytest.raises(ValueError):
        KFlatsConfig(d=1, K=2, max_iters=0)
    with pytest.raises(ValueError):
        KFlatsConfig(d=1, K=2, tol=0.0)
    with pytest.raises(ValueError, match="init_size"):
        KFlatsConfig(d=1, K=2, init="farthest-fixed")
    cfg = KFlatsConfig(d=1, K=2)
    assert (cfg.max_iters, cfg.tol, cfg.init) == (100, 1e-8, Init.RANDOM)


def test_l2_energy_never_increases():
    for t in range(100):
        lc = generate(SyntheticSpec((1, 1, 2), 4, samples_per_subspace=40, outlier_fraction=0.1,
                                    kind="affine", seed=t))
        res = kflats(lc.points, KFlatsConfig(d=2, K=3, seed=t))
        assert np.all(np.diff(res.energy_trace) <= 1e-12 * res.energy_trace[0])
        assert res.l2_energy == pytest.approx(res.energy_trace[-1], rel=1e-12)


def test_true_flats_converge_at_once():
    lc = generate(SyntheticSpec((2, 2), 4, noise_sigma=0.0, kind="affine", seed=1))
    res = kflats(lc.points, KFlatsConfig(d=2, K=2), init_flats=lc.flats)
    assert res.iterations == 1
    assert res.l2_energy < 1e-20
    assert misclassification_rate(res.labels, lc.truth) == 0.0


def test_empty_cluster_is_reseeded():
    rng = np.random.default_rng(0)
    X = np.c_[rng.uniform(-1, 1, 100), np.repeat([0.0, 2.0], 50)]
    far = Flat([[1.0, 0.0]], [0.0, 100.0])
    res = kflats(X, KFlatsConfig(d=1, K=2), init_flats=[Flat([[1.0, 0.0]], [0.0, 1.0]), far])
    assert res.l2_energy < 1e-20
    assert res.empty_clusters == []


def test_farthest_seeds_are_distinct_points():
    lc = init_study_dataset(2, seed=0)
    for K in (1, 3, 6):
        flats, seeds = farthest_insertion_init(lc.points, 2, K, 20, "affine", derive_rng(K, "t"), return_seeds=True)
        assert len(flats) == K == len(set(seeds))
        assert all(0 <= s < lc.points.shape[0] for s in seeds)


def test_farthest_point_lands_on_other_plane():
    rng = np.random.default_rng(1)
    X = np.c_[rng.uniform(-1, 1, (200, 2)), np.repeat([0.0, 1.0], 100)]
    for s in range(10):
        flats, seeds = farthest_insertion_init(X, 2, 2, 10, "affine", derive_rng(s, "t"), return_seeds=True)
        assert X[seeds[0], 2] != X[seeds[1], 2]
        assert distances_to_flat(X[X[:, 2] == X[seeds[0], 2]], flats[0]).max() < 1e-9


def test_fixed_neighborhood_errors():
    X = np.random.default_rng(0).standard_normal((20, 3))
    with pytest.raises(ValueError, match="below d \\+ 1"):
        farthest_insertion_init(X, 2, 2, 2)
    with pytest.raises(ValueError, match="exceeds data"):
        farthest_insertion_init(X, 2, 2, 21)


def test_random_init_on_parallel_planes_fails():
    lc = init_study_dataset(1, seed=0)
    errs = []
    for t in range(20):
        res = kflats(lc.points, KFlatsConfig(d=2, K=3, seed=t))
        errs.append(misclassification_rate(res.labels, lc.truth))
    assert np.median(errs) >= 0.4


def test_random_init_shapes():
    X = np.random.default_rng(3).standard_normal((7, 4))
    flats = random_init(X, 2, 5, "linear", derive_rng(0, "x"))
    assert len(flats) == 5 and all(f.dim == 2 and not f.offset.any() for f in flats)


@pytest.mark.parametrize("number", [1, 2, 3])
def test_adaptive_init_runs_on_study_sets(number):
    lc = init_study_dataset(number, seed=number)
    K = len(set(lc.truth.tolist()) - {-1})
    for t in range(3):
        cfg = KFlatsConfig(d=2, K=K, init="farthest-adaptive", seed=t)
        res = kflats(lc.points, cfg)
        assert len(res.flats) == K


def test_adaptive_neighborhood_config_is_honoured():
    lc = init_study_dataset(1, seed=2)
    scale = ScaleConfig(start_size=10, step=10, max_size=160)
    flats = farthest_insertion_init(lc.points, 2, 3, scale, "affine", derive_rng(0, "t"))
    assert len(flats) == 3


def test_restarts_pick_lowest_energy():
    lc = generate(SyntheticSpec((1, 1), 3, outlier_fraction=0.05, kind="affine", seed=5))
    cfg = KFlatsConfig(d=1, K=2, seed=3)
    best = kflats_restarts(lc.points, cfg, restarts=5)
    again = kflats_restarts(lc.points, cfg, restarts=5)
    assert best.l2_energy == again.l2_energy
    assert best.l2_energy <= kflats_restarts(lc.points, cfg, restarts=1).l2_energy
    with pytest.raises(ValueError):
        kflats_restarts(lc.points, cfg, restarts=0)
