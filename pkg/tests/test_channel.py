import math

import numpy as np
import pytest

from fddlink.channel import (
    ArrayGeometry,
    ChannelPath,
    EstimationNoise,
    PathSet,
    array_response,
    dl_channel,
    dl_path_gains,
    draw_scene,
    draw_user_paths,
    path_loss,
    perturb_estimates,
    ul_channel,
)
from fddlink.config import ScenarioConfig

GEOM = ArrayGeometry(num_antennas=4, spacing=0.015, lambda_ul=0.03, lambda_dl=0.025)


def make_path(theta=0.3, beta=1.0, distance=100.0, phase_ul=0.7, phase_dl=1.9):
    return ChannelPath(theta=theta, beta=beta, distance=distance,
                       phase_ul=phase_ul, phase_dl=phase_dl)


class TestArrayResponse:
    def test_broadside_is_all_ones(self):
        a = array_response(0.0, 0.02, GEOM)
        np.testing.assert_allclose(a, np.ones(4), atol=1e-15)

    def test_half_wavelength_thirty_degrees(self):
        # d = lambda/2 and sin(pi/6) = 1/2 give a per-element phase of -pi/2
        geom = ArrayGeometry(num_antennas=2, spacing=0.0125, lambda_ul=0.03, lambda_dl=0.025)
        a = array_response(math.pi / 6, 0.025, geom)
        np.testing.assert_allclose(a, [1.0, -1j], atol=1e-15)

    def test_unit_magnitude(self):
        a = array_response(-0.9, 0.025, ArrayGeometry(64, 0.015, 0.03, 0.025))
        np.testing.assert_allclose(np.abs(a), 1.0, atol=1e-14)

    def test_conjugate_symmetry(self):
        a_pos = array_response(0.4, 0.025, GEOM)
        a_neg = array_response(-0.4, 0.025, GEOM)
        np.testing.assert_allclose(a_neg, a_pos.conj(), atol=1e-14)

    def test_self_correlation_is_exactly_n(self):
        for n in (4, 64, 257):
            geom = ArrayGeometry(n, 0.015, 0.03, 0.025)
            a = array_response(0.77, 0.025, geom)
            assert abs(np.vdot(a, a).real / n - 1.0) < 1e-13

    def test_cross_correlation_decays_with_n(self):
        vals = []
        for n in (64, 256, 1024):
            geom = ArrayGeometry(n, 0.015, 0.03, 0.025)
            a1 = array_response(0.3, 0.025, geom)
            a2 = array_response(-0.5, 0.025, geom)
            vals.append(abs(np.vdot(a1, a2)) / n)
        assert vals[0] > vals[1] > vals[2]
        assert vals[-1] < 1e-2

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            array_response(np.nan, 0.025, GEOM)
        with pytest.raises(ValueError):
            array_response(0.1, np.inf, GEOM)
        with pytest.raises(ValueError):
            array_response(0.1, -1.0, GEOM)


class TestChannelSynthesis:
    def test_single_unit_path_is_steering_vector(self):
        ps = PathSet((make_path(theta=0.5, beta=1.0, distance=0.0, phase_dl=0.0),))
        np.testing.assert_allclose(dl_channel(ps, GEOM),
                                   array_response(0.5, GEOM.lambda_dl, GEOM), atol=1e-14)

    def test_zero_gain_path_vanishes(self):
        p1 = make_path(theta=0.2)
        p2 = make_path(theta=-0.8, beta=0.0)
        h2 = dl_channel(PathSet((p1, p2)), GEOM)
        h1 = dl_channel(PathSet((p1,)), GEOM)
        np.testing.assert_allclose(h2, h1, atol=1e-15)

    def test_norm_triangle_bound(self):
        rng = np.random.default_rng(3)
        paths = tuple(make_path(theta=rng.uniform(-1.5, 1.5), beta=rng.uniform(0, 2),
                                distance=rng.uniform(50, 200),
                                phase_dl=rng.uniform(0, 6)) for _ in range(4))
        ps = PathSet(paths)
        h = dl_channel(ps, GEOM)
        assert np.sum(np.abs(h) ** 2) <= GEOM.num_antennas * ps.betas.sum() ** 2 + 1e-12

    def test_ul_equals_dl_when_parameters_coincide(self):
        geom = ArrayGeometry(num_antennas=8, spacing=0.015, lambda_ul=0.025, lambda_dl=0.025)
        ps = PathSet((make_path(phase_ul=1.9, phase_dl=1.9),))
        np.testing.assert_allclose(ul_channel(ps, geom), dl_channel(ps, geom), atol=1e-14)

    def test_ul_differs_from_dl_across_bands(self):
        ps = PathSet((make_path(),))
        assert not np.allclose(ul_channel(ps, GEOM), dl_channel(ps, GEOM))

    def test_scaled_path_norm(self):
        ps = PathSet((make_path(beta=2.0, distance=0.0, phase_ul=0.0),))
        h = ul_channel(ps, GEOM)
        assert abs(np.sum(np.abs(h) ** 2) - 4 * GEOM.num_antennas) < 1e-12

    def test_linear_in_gains(self):
        paths = (make_path(theta=0.2), make_path(theta=-0.6, beta=0.5))
        doubled = tuple(ChannelPath(p.theta, 2 * p.beta, p.distance,
                                    p.phase_ul, p.phase_dl) for p in paths)
        np.testing.assert_allclose(dl_channel(PathSet(doubled), GEOM),
                                   2 * dl_channel(PathSet(paths), GEOM), atol=1e-14)


class TestPathLoss:
    CFG = ScenarioConfig(pl_exponent=2.0, pl_ref_gain_db=0.0, pl_ref_distance=1.0)

    def test_reference_distance(self):
        assert path_loss(1.0, self.CFG) == pytest.approx(1.0)

    def test_inverse_square(self):
        assert path_loss(2.0, self.CFG) == pytest.approx(0.25)

    def test_monotone(self):
        d = np.linspace(1.0, 300.0, 50)
        vals = [path_loss(x, self.CFG) for x in d]
        assert all(a >= b for a, b in zip(vals, vals[1:]))

    def test_rejects_zero_distance(self):
        with pytest.raises(ValueError):
            path_loss(0.0, self.CFG)


class TestDrawScene:
    def test_seeded_determinism(self):
        cfg = ScenarioConfig(n_users=3, n_paths=4)
        scene1 = draw_scene(cfg, np.random.default_rng(42))
        scene2 = draw_scene(cfg, np.random.default_rng(42))
        for ps1, ps2 in zip(scene1, scene2):
            assert ps1 == ps2

    def test_aoa_mean_matches_uniform_law(self):
        cfg = ScenarioConfig(n_users=1, n_paths=50)
        rng = np.random.default_rng(11)
        thetas = np.concatenate([draw_user_paths(cfg, rng).thetas for _ in range(2000)])
        assert thetas.size == 100_000
        stderr = (math.pi / math.sqrt(12)) / math.sqrt(thetas.size)
        assert abs(thetas.mean()) < 3 * stderr

    def test_flat_decay_profile_gives_equal_gains(self):
        cfg = ScenarioConfig(n_paths=3, decay_ratio=1.0)
        ps = draw_user_paths(cfg, np.random.default_rng(0))
        np.testing.assert_allclose(ps.betas, ps.betas[0])

    def test_phases_cover_both_bands_independently(self):
        cfg = ScenarioConfig(n_users=1, n_paths=40)
        ps = draw_user_paths(cfg, np.random.default_rng(5))
        assert not np.allclose(ps.phases_ul, ps.phases_dl)
        assert np.all((ps.phases_ul >= 0) & (ps.phases_ul < 2 * math.pi))

    def test_cross_path_gains_uncorrelated(self):
        # E[g_l * g_l'] = 0 (plain product) under independent uniform phases
        cfg = ScenarioConfig(n_users=1, n_paths=2)
        rng = np.random.default_rng(8)
        geom = cfg.geometry()
        prods = []
        for _ in range(5000):
            ps = draw_user_paths(cfg, rng)
            g = dl_path_gains(ps, geom) / ps.betas  # unit-modulus phase factors
            prods.append(g[0] * g[1])
        prods = np.asarray(prods)
        stderr = 1.0 / math.sqrt(len(prods))  # |g0*g1| = 1 exactly
        assert abs(prods.mean()) < 3 * stderr


class TestPerturbEstimates:
    def test_zero_noise_is_identity(self):
        ps = PathSet((make_path(), make_path(theta=-0.4)))
        out = perturb_estimates(ps, EstimationNoise(0.0, 0.0), np.random.default_rng(1))
        assert out == ps

    def test_folded_gaussian_aoa_error(self):
        sigma = 0.01
        paths = tuple(make_path(theta=0.0) for _ in range(100_000))
        ps = PathSet(paths)
        out = perturb_estimates(ps, EstimationNoise(aoa_sigma=sigma, gain_rel_sigma=0.0),
                                np.random.default_rng(9))
        err = np.abs(out.thetas - ps.thetas)
        expected = sigma * math.sqrt(2 / math.pi)
        stderr = sigma * math.sqrt(1 - 2 / math.pi) / math.sqrt(len(paths))
        assert abs(err.mean() - expected) < 4 * stderr

    def test_gains_never_negative(self):
        paths = tuple(make_path(beta=0.01) for _ in range(500))
        out = perturb_estimates(PathSet(paths), EstimationNoise(0.0, 5.0),
                                np.random.default_rng(2))
        assert np.all(out.betas >= 0.0)

    def test_aoa_stays_in_range(self):
        paths = tuple(make_path(theta=1.5) for _ in range(500))
        out = perturb_estimates(PathSet(paths), EstimationNoise(1.0, 0.0),
                                np.random.default_rng(3))
        assert np.all(np.abs(out.thetas) <= math.pi / 2)
