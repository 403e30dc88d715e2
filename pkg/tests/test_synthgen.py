import numpy as np
import pytest

from vpr_uncertainty.errors import InvalidPartition, NoPositives, ZeroWeightSum
from vpr_uncertainty.evaluation import label_retrievals, pr_curve
from vpr_uncertainty.retrieval import batch_retrieve, build_index
from vpr_uncertainty.synthgen import (WorldConfig, generate_world, oracle_pr,
                                      oracle_weighted_moments, synthetic_gv_confidence,
                                      write_world)
from vpr_uncertainty.uncertainty import (SueConfig, pose_density, sue_score,
                                         sue_score_density_compensated, weighted_pose_moments)


def run(config, k=10, compensated=False):
    world = generate_world(config)
    matches = batch_retrieve(build_index(world.map), world.queries, k)
    correct = np.array([lab.correct for lab in label_retrievals(world.query_poses, matches)])
    sue = np.array([sue_score(m)[1] for m in matches])
    dc = None
    if compensated:
        dens = pose_density(world.map.poses, 1)
        dc = np.array([sue_score_density_compensated(m, dens)[1] for m in matches])
    return world, correct, sue, dc


class TestConfig:
    @pytest.mark.parametrize("groups,place", [([(0, 1)], 2), ([(0, 1), (1, 2)], 1),
                                              ([(0, 1, 2, 5)], 5)])
    def test_invalid_partition_names_place(self, groups, place):
        with pytest.raises(InvalidPartition) as exc:
            WorldConfig(seed=1, n_places=3, aliasing_groups=groups)
        assert f"place {place}" in str(exc.value)
        assert place in exc.value.places

    def test_defaults_fill_partition(self):
        cfg = WorldConfig(seed=1, n_places=4, refs_per_place=3)
        assert cfg.aliasing_groups == ((0,), (1,), (2,), (3,))
        assert cfg.refs_per_place == (3, 3, 3, 3)

    def test_json_round_trip(self):
        cfg = WorldConfig(seed=3, n_places=4, aliasing_groups=[(0, 2), (1,), (3,)])
        import json
        assert WorldConfig.from_dict(json.loads(cfg.to_json())) == cfg


class TestGeneration:
    def test_same_seed_same_bytes(self, tmp_path):
        cfg = WorldConfig(seed=11, n_places=6, refs_per_place=4, aliasing_groups=[(0, 3), (1,), (2,), (4, 5)],
                          query_count=30)
        a = write_world(generate_world(cfg), tmp_path / "a")
        b = write_world(generate_world(cfg), tmp_path / "b")
        assert [p.read_bytes() for p in a] == [p.read_bytes() for p in b]
        c = write_world(generate_world(WorldConfig(**{**cfg.__dict__, "seed": 12})), tmp_path / "c")
        assert a[0].read_bytes() != c[0].read_bytes()

    def test_shapes(self):
        cfg = WorldConfig(seed=1, n_places=3, refs_per_place=[2, 3, 4], descriptor_dim=8,
                          query_count=10, pose_dim=3)
        w = generate_world(cfg)
        assert len(w.map) == 9 and w.map.descriptors.dim == 8 and w.map.poses.dim == 3
        assert len(w.queries) == 10 and len(w.query_poses) == 10

    def test_poses_within_spread(self):
        cfg = WorldConfig(seed=2, n_places=4, refs_per_place=50, pose_spread_m=[1, 2, 3, 4])
        w = generate_world(cfg)
        for p in range(4):
            rows = w.ref_places == p
            r = np.linalg.norm(w.map.poses.coords[rows] - w.centers[p], axis=1)
            assert r.max() <= cfg.pose_spread_m[p]

    def test_non_aliased_world(self):
        _, correct, sue, _ = run(WorldConfig(seed=5, n_places=24, refs_per_place=5,
                                             query_count=500, descriptor_noise_sigma=0.01))
        assert correct.mean() >= 0.99
        if not correct.all():
            assert pr_curve(sue, correct).auc >= 0.95

    def test_maximally_aliased_exceeds_non_aliased_median(self):
        base = dict(seed=5, n_places=24, refs_per_place=5, query_count=500,
                    descriptor_noise_sigma=0.01)
        _, _, distinct, _ = run(WorldConfig(**base))
        _, _, aliased, _ = run(WorldConfig(**base, aliasing_groups=[tuple(range(24))]))
        assert aliased.min() > np.median(distinct)

    def test_two_place_aliasing(self):
        base = dict(seed=3, n_places=2, refs_per_place=20, query_count=100,
                    descriptor_noise_sigma=0.01, place_spacing_m=100.0)
        _, _, aliased, _ = run(WorldConfig(**base, aliasing_groups=[(0, 1)]))
        _, _, distinct, _ = run(WorldConfig(**base))
        half_sq = (100.0 / 2) ** 2
        assert np.median(aliased) >= 0.1 * half_sq
        assert np.median(aliased) > 10 * np.median(distinct)
        assert np.median(distinct) < 0.01 * half_sq

    def test_skewed_pair_confident_at_big_place(self):
        world, correct, sue, _ = run(WorldConfig(
            seed=1, n_places=2, refs_per_place=[1000, 1], aliasing_groups=[(0, 1)],
            query_count=200, query_spatial_mode="uniform", place_signature_scale=0.04))
        big = world.query_places == 0
        # spread of a 10 m disc is 50 m^2; aliasing with the far place would be ~2500
        assert np.median(sue[big]) < 50.0
        assert correct[big].all()

    @pytest.mark.xfail(reason="with a single isolated reference, k=1 density is its isolation "
                              "distance (~90 m), not a local density; the direction is seed "
                              "dependent in this world", strict=False)
    @pytest.mark.parametrize("seed", [1, 2, 3])
    def test_skewed_pair_compensation_helps(self, seed):
        _, correct, sue, dc = run(WorldConfig(
            seed=seed, n_places=2, refs_per_place=[1000, 1], aliasing_groups=[(0, 1)],
            query_count=2000, query_spatial_mode="uniform", place_signature_scale=0.04),
            compensated=True)
        assert pr_curve(dc, correct).auc > pr_curve(sue, correct).auc

    def test_uniform_query_mode_balances_places(self):
        w = generate_world(WorldConfig(seed=4, n_places=2, refs_per_place=[100, 1],
                                       query_count=2000, query_spatial_mode="uniform"))
        assert abs((w.query_places == 0).mean() - 0.5) < 0.05
        w = generate_world(WorldConfig(seed=4, n_places=2, refs_per_place=[100, 1],
                                       query_count=2000))
        assert (w.query_places == 0).mean() > 0.95


class TestGV:
    def test_correlated_with_correctness(self, rng):
        y = rng.random(2000) < 0.7
        c = synthetic_gv_confidence(y, 3)
        assert np.all(c >= 0) and np.all(c == np.round(c))
        assert np.corrcoef(c, y)[0, 1] >= 0.5


class TestOracles:
    def test_moments_hand(self):
        mean, cov = oracle_weighted_moments([[0, 0], [2, 0]], [0.5, 0.5])
        np.testing.assert_array_equal(mean, [1, 0])
        np.testing.assert_array_equal(cov, [[1, 0], [0, 0]])

    def test_single_point(self):
        _, cov = oracle_weighted_moments([[3.0, 4.0, 5.0]], [0.2])
        np.testing.assert_array_equal(cov, np.zeros((3, 3)))

    def test_zero_weight_sum(self):
        with pytest.raises(ZeroWeightSum):
            oracle_weighted_moments([[0, 0], [1, 1]], [0.0, 0.0])

    def test_moments_cross_check(self, rng):
        for _ in range(1000):
            k, dim = int(rng.integers(1, 11)), int(rng.integers(2, 4))
            poses = rng.uniform(-10, 10, (k, dim))
            w = rng.random(k)
            w /= w.sum()
            mean, cov = weighted_pose_moments(poses, w)
            o_mean, o_cov = oracle_weighted_moments(poses, w)
            np.testing.assert_allclose(mean, o_mean, rtol=0, atol=1e-12)
            np.testing.assert_allclose(cov, o_cov, rtol=0, atol=1e-12)

    def test_pr_examples(self):
        assert oracle_pr([0.1, 0.2], [True, False]).auc == 1.0
        assert oracle_pr([0.2, 0.1], [True, False]).auc == 0.5
        assert oracle_pr([0.3], [True]).auc == 1.0
        assert oracle_pr([0.3, 0.1, 0.2], [True, True, True]).auc == 1.0
        with pytest.raises(NoPositives):
            oracle_pr([0.1], [False])
