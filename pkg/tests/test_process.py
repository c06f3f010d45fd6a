import math

import numpy as np
import pytest
from scipy.stats import chi2

from germgrain.cells import Window
from germgrain.geometry import (AlignedRect, ConvexPolygon, Disk,
                                intrinsic_volumes, minkowski_sum_area)
from germgrain.process import (EdgeEffectError, GrainDistribution, ModelConfig,
                               ParamLaw, empirical_capacity, fixed_disk,
                               mean_hit_area, point_coverage_probability,
                               read_sample, sample, theory_capacity,
                               unit_squares, write_sample)
from germgrain.rng import poisson_draw, replicate_rng


class TestParamLaw:
    def test_moments(self):
        u = ParamLaw.uniform(1.0, 3.0)
        assert u.moment(1) == pytest.approx(2.0)
        assert u.moment(2) == pytest.approx((27.0 - 1.0) / 6.0)
        m = ParamLaw.mixture([1.0, 2.0], [0.25, 0.75])
        assert m.mean() == pytest.approx(1.75)
        assert m.support_max() == 2.0

    def test_jensen(self):
        for law in (ParamLaw.uniform(0.5, 2.0), ParamLaw.mixture([1, 3], [0.5, 0.5])):
            assert law.moment(2) >= law.mean() ** 2

    def test_expect_exact_for_polynomials(self):
        u = ParamLaw.uniform(0.5, 1.5)
        assert u.expect(lambda x: x ** 3) == pytest.approx(u.moment(3), rel=1e-13)

    def test_validation(self):
        with pytest.raises(ValueError):
            ParamLaw.uniform(2.0, 1.0)
        with pytest.raises(ValueError):
            ParamLaw.mixture([1.0], [0.5])
        with pytest.raises(ValueError):
            ParamLaw.constant(0.0)


class TestPoissonDraw:
    @pytest.mark.parametrize("mean", [0.5, 7.0, 29.0, 31.0, 250.0])
    def test_mean_and_variance(self, mean):
        rng = replicate_rng(123, int(mean * 10))
        xs = np.array([poisson_draw(rng, mean) for _ in range(30000)])
        se_mean = math.sqrt(mean / len(xs))
        assert abs(xs.mean() - mean) < 4.0 * se_mean
        assert abs(xs.var() - mean) < 5.0 * mean * math.sqrt(2.0 / len(xs))

    def test_zero_mean(self):
        rng = replicate_rng(1, 1)
        assert poisson_draw(rng, 0.0) == 0

    def test_rejection_regime_distribution(self):
        # chi-square goodness of fit in the PTRS regime (above the switch)
        from scipy.stats import chi2, poisson
        rng = replicate_rng(13, 45)
        n = 60_000
        xs = np.array([poisson_draw(rng, 45.0) for _ in range(n)])
        lo, hi = 20, 75
        obs = np.bincount(np.clip(xs, lo, hi) - lo, minlength=hi - lo + 1)
        probs = poisson.pmf(np.arange(lo, hi + 1), 45.0)
        probs[0] = poisson.cdf(lo, 45.0)
        probs[-1] = poisson.sf(hi - 1, 45.0)
        exp = probs * n
        stat = float(np.sum((obs - exp) ** 2 / exp))
        p_value = 1.0 - chi2.cdf(stat, df=len(obs) - 1)
        assert p_value > 0.001

    def test_invalid_mean(self):
        rng = replicate_rng(1, 1)
        with pytest.raises(ValueError):
            poisson_draw(rng, -1.0)


class TestGrainDistribution:
    def test_disk_moments(self):
        d = GrainDistribution("disk", radius=ParamLaw.uniform(0.5, 1.5))
        m = d.moments()
        r = d.radius
        assert m.ev1 == pytest.approx(math.pi * r.moment(1))
        assert m.ev2 == pytest.approx(math.pi * r.moment(2))
        assert m.ev1sq >= m.ev1 ** 2  # Jensen
        assert m.mixed == pytest.approx(2.0 * m.ev1 ** 2 / math.pi)

    def test_rect_moments(self):
        d = unit_squares()
        m = d.moments()
        assert (m.ev1, m.ev2) == (2.0, 1.0)
        assert m.mixed == pytest.approx(2.0)  # 2 * E[a] * E[b] for full sides

    def test_isotropic_flags(self):
        assert fixed_disk(1.0).isotropic
        assert not unit_squares().isotropic
        assert unit_squares(rotate=True).isotropic

    def test_rmax_bounds_sampled_circumradius(self):
        d = GrainDistribution("rect", halfwidth=ParamLaw.uniform(0.2, 0.6),
                              halfheight=ParamLaw.uniform(0.1, 0.4), rotate=True)
        rng = replicate_rng(5, 0)
        from germgrain.geometry import circumradius
        shapes = d.sample_shapes(rng, 500)
        assert max(circumradius(s) for s in shapes) <= d.rmax + 1e-12

    def test_record_roundtrip(self):
        for d in (fixed_disk(1.0), unit_squares(rotate=True),
                  GrainDistribution("disk", radius=ParamLaw.mixture([0.5, 1.0], [0.3, 0.7])),
                  GrainDistribution("fixed", shape=ConvexPolygon(((0, 0), (1, 0), (0, 1))))):
            assert GrainDistribution.from_record(d.to_record()) == d


class TestSampling:
    CFG = ModelConfig(0.5, fixed_disk(1.0), Window((0.0, 0.0), (10.0, 10.0)), seed=42)

    def test_determinism(self):
        assert sample(self.CFG, 7).placed == sample(self.CFG, 7).placed

    def test_replicates_differ(self):
        assert sample(self.CFG, 0).placed != sample(self.CFG, 1).placed

    def test_germs_in_dilated_window(self):
        r = self.CFG.grains.rmax
        for k in range(20):
            for g in sample(self.CFG, k).placed:
                x, y = g.center
                dx = max(0.0 - x, x - 10.0, 0.0)
                dy = max(0.0 - y, y - 10.0, 0.0)
                assert dx * dx + dy * dy <= r * r + 1e-9

    def test_mean_count(self):
        mean = self.CFG.gamma * self.CFG.window.dilated_area(1.0)
        counts = [len(sample(self.CFG, k).placed) for k in range(600)]
        se = math.sqrt(mean / len(counts))
        assert abs(np.mean(counts) - mean) < 3.5 * se

    def test_sparse_limit_empty_probability(self):
        # gamma * dilated area = 0.01 -> P(empty) ~ 0.99
        win = Window((0.0, 0.0), (1.0, 1.0))
        gamma = 0.01 / win.dilated_area(0.1)
        cfg = ModelConfig(gamma, fixed_disk(0.1), win, seed=3)
        empty = sum(1 for k in range(10_000) if not sample(cfg, k).placed)
        p = math.exp(-0.01)
        se = math.sqrt(p * (1 - p) / 10_000)
        assert abs(empty / 10_000 - p) < 3.0 * se

    def test_gamma_validation(self):
        with pytest.raises(ValueError):
            ModelConfig(0.0, fixed_disk(1.0), Window((0, 0), (1, 1)))

    def test_isotropy_of_rotated_squares(self):
        # Edge-direction histogram of rotated squares is uniform on [0, pi/2).
        d = unit_squares(rotate=True)
        rng = replicate_rng(99, 0)
        shapes = d.sample_shapes(rng, 4000)
        angles = []
        for s in shapes:
            v = s.vertex_array()
            e = v[1] - v[0]
            angles.append(math.atan2(e[1], e[0]) % (math.pi / 2.0))
        hist, _ = np.histogram(angles, bins=16, range=(0.0, math.pi / 2.0))
        expected = len(angles) / 16.0
        stat = float(np.sum((hist - expected) ** 2 / expected))
        p_value = 1.0 - chi2.cdf(stat, df=15)
        assert p_value > 0.01


class TestCapacity:
    def test_point_probe_is_volume_fraction(self):
        cfg = ModelConfig(0.7, fixed_disk(1.0), Window((0, 0), (8, 8)), seed=1)
        tiny = theory_capacity(cfg, Disk(1e-9))
        assert tiny == pytest.approx(1.0 - point_coverage_probability(cfg), rel=1e-6)

    def test_unit_area_grains_point_probe(self):
        # gamma = 1, fixed unit-area grains: capacity of a point ~ e^{-1}
        side = math.sqrt(1.0) / 2.0
        cfg = ModelConfig(1.0, unit_squares(), Window((0, 0), (8, 8)), seed=1)
        assert theory_capacity(cfg, Disk(1e-12)) == pytest.approx(math.exp(-1.0), rel=1e-9)
        assert side == 0.5

    def test_disk_probe_closed_form(self):
        cfg = ModelConfig(0.1, fixed_disk(1.0), Window((0, 0), (8, 8)), seed=1)
        assert theory_capacity(cfg, Disk(1.0)) == pytest.approx(
            math.exp(-0.1 * 4.0 * math.pi), rel=1e-12)

    def test_mean_hit_area_isotropic_vs_direct(self):
        # isotropic closed form against the direct Minkowski path for disks
        d = GrainDistribution("disk", radius=ParamLaw.uniform(0.5, 1.0))
        probe = AlignedRect(0.3, 0.5)
        direct = d.expect_shape(lambda k: minkowski_sum_area(k, probe))
        assert mean_hit_area(d, probe) == pytest.approx(direct, rel=1e-12)

    def test_empirical_matches_theory(self):
        cfg = ModelConfig(0.1, fixed_disk(1.0), Window((0, 0), (8, 8)), seed=12)
        est, se = empirical_capacity(cfg, Disk(1.0), (4.0, 4.0), 3000)
        assert abs(est - theory_capacity(cfg, Disk(1.0))) < 3.0 * se

    def test_sparse_limit(self):
        cfg = ModelConfig(1e-4, fixed_disk(0.5), Window((0, 0), (8, 8)), seed=2)
        est, _ = empirical_capacity(cfg, Disk(0.5), (4.0, 4.0), 300)
        assert est > 0.99

    def test_edge_effect_guard(self):
        cfg = ModelConfig(0.1, fixed_disk(1.0), Window((0, 0), (8, 8)), seed=1)
        with pytest.raises(EdgeEffectError):
            empirical_capacity(cfg, Disk(1.0), (1.5, 4.0), 10)

    def test_anisotropic_capacity_quadrature(self):
        d = GrainDistribution("rect", halfwidth=ParamLaw.uniform(0.2, 0.4),
                              halfheight=ParamLaw.constant(0.3))
        probe = AlignedRect(0.25, 0.25)
        # rect + rect* closed form: 4 (w + wp)(h + hp), expectation exact
        want = 4.0 * (0.3 + 0.25) * (0.3 + 0.25)
        assert mean_hit_area(d, probe) == pytest.approx(want, rel=1e-12)


class TestStationarity:
    def test_coverage_probability_location_free(self):
        # empirical volume fraction at two distinct fixed points agrees
        # within Monte Carlo error
        cfg = ModelConfig(0.3, fixed_disk(1.0), Window((0.0, 0.0), (10.0, 10.0)), seed=44)
        pts = np.array([[2.0, 2.0], [7.3, 5.1]])
        n = 2500
        hits = np.zeros((n, 2))
        for k in range(n):
            s = sample(cfg, k)
            if s.placed:
                centers = np.array([g.center for g in s.placed])
                radii = np.array([g.shape.radius for g in s.placed])
                d2 = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
                hits[k] = (d2 <= radii ** 2).any(axis=1)
        p_est = hits.mean(axis=0)
        se = math.sqrt(2.0 * p_est.mean() * (1 - p_est.mean()) / n)
        assert abs(p_est[0] - p_est[1]) < 3.5 * se
        p_th = 1.0 - math.exp(-0.3 * math.pi)
        assert abs(p_est.mean() - p_th) < 3.5 * se


class TestEdgeExactness:
    def test_enlarged_rmax_changes_nothing_in_distribution(self):
        # Means of measured area under the true bound vs an enlarged bound
        # agree within Monte Carlo error.
        from germgrain.union import arrangement_measure
        win = Window((0.0, 0.0), (12.0, 12.0))
        base = ModelConfig(0.3, fixed_disk(1.0), win, seed=61)
        padded_grains = GrainDistribution(
            "disk", radius=ParamLaw.mixture([1.0, 2.0], [1.0, 0.0]))  # rmax = 2, law = always 1
        padded = ModelConfig(0.3, padded_grains, win, seed=62)
        n = 250
        a1 = np.array([arrangement_measure(sample(base, k).placed, win).v2 for k in range(n)])
        a2 = np.array([arrangement_measure(sample(padded, k).placed, win).v2 for k in range(n)])
        se = math.hypot(a1.std() / math.sqrt(n), a2.std() / math.sqrt(n))
        assert abs(a1.mean() - a2.mean()) < 3.5 * se


class TestSampleIO:
    def test_roundtrip(self, tmp_path):
        cfg = ModelConfig(0.4, GrainDistribution("rect",
                                                 halfwidth=ParamLaw.uniform(0.2, 0.5),
                                                 halfheight=ParamLaw.constant(0.3),
                                                 rotate=True),
                          Window((0, 0), (6, 6)), seed=8)
        s = sample(cfg, 2)
        p = tmp_path / "dump.txt"
        write_sample(p, s)
        s2 = read_sample(p)
        assert s2.config == cfg and s2.replicate == 2
        assert len(s2.placed) == len(s.placed)
        for a, b in zip(s.placed, s2.placed):
            assert a.center == pytest.approx(b.center)
            assert intrinsic_volumes(a.shape).as_array() == pytest.approx(
                intrinsic_volumes(b.shape).as_array())

    def test_missing_header_rejected(self, tmp_path):
        p = tmp_path / "bad.txt"
        p.write_text("1.0 2.0 {\"kind\": \"disk\", \"radius\": 1.0}\n")
        with pytest.raises(ValueError):
            read_sample(p)
