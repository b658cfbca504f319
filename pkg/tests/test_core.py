import numpy as np
import pytest

from granulab.core import (
    Inelasticity,
    PhasePoint,
    SystemState,
    UniformMaxwellian,
    collide,
    collision_jacobian,
    dissipation,
    precollide,
    sample_chaotic_ensemble,
    sample_chaotic_state,
    unit_normal,
)
from granulab.errors import InvalidCollisionError, SamplingFailureError


def random_collision_inputs(rng, n, d):
    p1 = rng.normal(size=(n, d))
    p2 = rng.normal(size=(n, d))
    eta = rng.normal(size=(n, d))
    eta /= np.linalg.norm(eta, axis=-1, keepdims=True)
    # orient eta so the approach condition holds
    g = np.sum(eta * (p1 - p2), axis=-1, keepdims=True)
    eta *= np.sign(np.where(g == 0, 1.0, g))
    return p1, p2, eta


class TestInelasticity:
    def test_valid_range(self):
        assert Inelasticity(0.0).restitution == 1.0
        assert Inelasticity(0.25).restitution == 0.5

    @pytest.mark.parametrize("eps", [-0.01, 0.5, 0.7])
    def test_rejects_out_of_range(self, eps):
        with pytest.raises(ValueError):
            Inelasticity(eps)


class TestCollide:
    def test_elastic_1d_swaps(self):
        p1s, p2s = collide([1.0], [-1.0], [1.0], Inelasticity(0.0))
        assert p1s == pytest.approx([-1.0])
        assert p2s == pytest.approx([1.0])

    def test_inelastic_1d_example(self):
        p1s, p2s = collide([1.0], [-1.0], [1.0], Inelasticity(0.25))
        assert p1s == pytest.approx([-0.5])
        assert p2s == pytest.approx([0.5])

    def test_momentum_conserved(self):
        rng = np.random.default_rng(1)
        for d in (1, 3):
            p1, p2, eta = random_collision_inputs(rng, 500, d)
            p1s, p2s = collide(p1, p2, eta, Inelasticity(0.3))
            np.testing.assert_allclose(p1s + p2s, p1 + p2, rtol=0, atol=1e-14)

    def test_normal_restitution(self):
        rng = np.random.default_rng(2)
        for eps in (0.0, 0.1, 0.25, 0.49):
            p1, p2, eta = random_collision_inputs(rng, 200, 3)
            p1s, p2s = collide(p1, p2, eta, Inelasticity(eps))
            g = np.sum(eta * (p1 - p2), axis=-1)
            gs = np.sum(eta * (p1s - p2s), axis=-1)
            np.testing.assert_allclose(gs, -(1 - 2 * eps) * g, atol=1e-12)

    def test_tangential_invariance_3d(self):
        rng = np.random.default_rng(3)
        p1, p2, eta = random_collision_inputs(rng, 200, 3)
        p1s, p2s = collide(p1, p2, eta, Inelasticity(0.2))
        for before, after in ((p1, p1s), (p2, p2s)):
            tang_before = before - np.sum(eta * before, -1, keepdims=True) * eta
            tang_after = after - np.sum(eta * after, -1, keepdims=True) * eta
            np.testing.assert_allclose(tang_after, tang_before, atol=1e-14)

    def test_approach_condition_enforced(self):
        with pytest.raises(InvalidCollisionError):
            collide([-1.0], [1.0], [1.0], Inelasticity(0.1))


class TestPrecollide:
    def test_elastic_is_involution(self):
        rng = np.random.default_rng(4)
        p1, p2, eta = random_collision_inputs(rng, 100, 3)
        f1, f2 = collide(p1, p2, eta, Inelasticity(0.0))
        b1, b2 = precollide(p1, p2, eta, Inelasticity(0.0))
        np.testing.assert_allclose(b1, f1, atol=1e-14)
        np.testing.assert_allclose(b2, f2, atol=1e-14)

    def test_inverse_of_collide_example(self):
        p1p, p2p = precollide([-0.5], [0.5], [1.0], Inelasticity(0.25))
        assert p1p == pytest.approx([1.0])
        assert p2p == pytest.approx([-1.0])

    @pytest.mark.parametrize("eps", [0.0, 0.1, 0.25, 0.49])
    def test_round_trip(self, eps):
        rng = np.random.default_rng(5)
        inel = Inelasticity(eps)
        for d in (1, 3):
            p1, p2, eta = random_collision_inputs(rng, 2500, d)
            f1, f2 = collide(p1, p2, eta, inel)
            b1, b2 = precollide(f1, f2, eta, inel)
            scale = np.maximum(np.abs(p1).max(), np.abs(p2).max())
            np.testing.assert_allclose(b1, p1, atol=1e-12 * scale)
            np.testing.assert_allclose(b2, p2, atol=1e-12 * scale)
            # and the other composition order
            g1, g2 = precollide(p1, p2, eta, inel)
            r1, r2 = collide(g1, g2, eta, inel, check=False)
            np.testing.assert_allclose(r1, p1, atol=1e-12 * scale)
            np.testing.assert_allclose(r2, p2, atol=1e-12 * scale)

    def test_kernel_scaling_of_normal_component(self):
        # <eta, p1_pre - p2_pre> = -<eta, p1 - p2>/(1 - 2 eps)
        rng = np.random.default_rng(6)
        eps = 0.25
        p1, p2, eta = random_collision_inputs(rng, 100, 3)
        b1, b2 = precollide(p1, p2, eta, Inelasticity(eps))
        g = np.sum(eta * (p1 - p2), -1)
        gb = np.sum(eta * (b1 - b2), -1)
        np.testing.assert_allclose(gb, -g / (1 - 2 * eps), atol=1e-12)


class TestDissipation:
    def test_elastic_is_zero(self):
        rng = np.random.default_rng(7)
        p1, p2, eta = random_collision_inputs(rng, 50, 3)
        np.testing.assert_allclose(
            dissipation(p1, p2, eta, Inelasticity(0.0)), 0.0, atol=1e-15)

    def test_1d_example(self):
        dE = dissipation([1.0], [-1.0], [1.0], Inelasticity(0.25))
        assert dE == pytest.approx(-0.75)

    def test_closed_form_vs_brute_force(self):
        rng = np.random.default_rng(8)
        inel = Inelasticity(0.33)
        for d in (1, 3):
            p1, p2, eta = random_collision_inputs(rng, 5000, d)
            p1s, p2s = collide(p1, p2, eta, inel)
            brute = 0.5 * (np.sum(p1s**2, -1) + np.sum(p2s**2, -1)
                           - np.sum(p1**2, -1) - np.sum(p2**2, -1))
            np.testing.assert_allclose(
                dissipation(p1, p2, eta, inel), brute, atol=1e-12)

    def test_sign(self):
        rng = np.random.default_rng(9)
        p1, p2, eta = random_collision_inputs(rng, 1000, 3)
        dE = dissipation(p1, p2, eta, Inelasticity(0.4))
        assert np.all(dE <= 0.0)


class TestCollisionJacobian:
    def test_elastic(self):
        assert collision_jacobian(Inelasticity(0.0), 1) == 1.0

    def test_quarter(self):
        assert collision_jacobian(Inelasticity(0.25), 3) == pytest.approx(0.5)

    def test_monte_carlo_change_of_variables(self):
        # P uniform on the square S => T(P) has density 1/(|S| |det T|) on
        # T(S); the hit probability of a small central box B inside T(S) is
        # |B| / (|S| |det T|).
        rng = np.random.default_rng(10)
        eps = Inelasticity(0.3)
        n = 400_000
        a = 3.0
        p1 = rng.uniform(-a, a, size=(n, 1))
        p2 = rng.uniform(-a, a, size=(n, 1))
        eta = np.where(p1 - p2 >= 0, 1.0, -1.0)
        p1s, p2s = collide(p1, p2, eta, eps)
        b = 0.4  # T^-1(B) stays inside S: |delta| <= 2b/(1-2eps) = 2, |sum| <= 2b
        hits = np.mean((np.abs(p1s[:, 0]) <= b) & (np.abs(p2s[:, 0]) <= b))
        p_exact = (2 * b) ** 2 / ((2 * a) ** 2 * collision_jacobian(eps, 1))
        stderr = np.sqrt(p_exact * (1 - p_exact) / n)
        assert abs(hits - p_exact) < 3 * stderr


class TestSystemState:
    def test_allowed_configuration_1d(self):
        s = SystemState(np.array([[0.0], [1.0]]), np.zeros((2, 1)),
                        sigma=0.5, eps=Inelasticity(0.0))
        assert s.is_allowed()

    def test_overlap_detected(self):
        s = SystemState(np.array([[0.0], [0.3]]), np.zeros((2, 1)),
                        sigma=0.5, eps=Inelasticity(0.0))
        assert not s.is_allowed()

    def test_periodic_minimum_image(self):
        # particles at 0.05 and 0.95 on a unit circle are 0.1 apart
        s = SystemState(np.array([[0.05], [0.95]]), np.zeros((2, 1)),
                        sigma=0.2, eps=Inelasticity(0.0), box=1.0)
        assert s.separation(0, 1) == pytest.approx(0.1)
        assert not s.is_allowed()

    def test_sigma_box_invariant(self):
        with pytest.raises(ValueError):
            SystemState(np.zeros((1, 1)), np.zeros((1, 1)),
                        sigma=0.6, eps=Inelasticity(0.0), box=1.0)


class TestSampleChaoticState:
    def test_single_particle_never_rejected(self):
        rng = np.random.default_rng(11)
        s = sample_chaotic_state(1, UniformMaxwellian(length=1.0), 0.4,
                                 Inelasticity(0.0), box=1.0, rng=rng)
        assert s.n == 1

    def test_geometric_infeasibility(self):
        rng = np.random.default_rng(12)
        with pytest.raises(SamplingFailureError):
            # 2 * 0.6 > 1: the forbidden set covers the whole torus
            sample_chaotic_state(2, UniformMaxwellian(length=1.0), 0.6,
                                 Inelasticity(0.0), box=1.0, rng=rng,
                                 max_attempts=500)

    def test_acceptance_probability_two_rods(self):
        # joint rejection acceptance on the circle: 1 - 2*sigma/L
        rng = np.random.default_rng(13)
        sampler = UniformMaxwellian(length=1.0)
        trials = 100_000
        q = rng.uniform(0, 1, size=(trials, 2))
        gap = np.abs(q[:, 0] - q[:, 1])
        gap = np.minimum(gap, 1.0 - gap)
        acc = np.mean(gap >= 0.1)
        p_exact = 1 - 2 * 0.1
        stderr = np.sqrt(p_exact * (1 - p_exact) / trials)
        assert abs(acc - p_exact) < 3 * stderr
        # and the sampler itself must return valid states
        s = sample_chaotic_state(2, sampler, 0.1, Inelasticity(0.1),
                                 box=1.0, rng=rng, method="rejection")
        assert s.is_allowed()

    def test_direct_matches_rejection_gap_law(self):
        # direct (gap-insertion) and rejection sampling target the same
        # measure; compare the minimum-gap distribution for 3 rods
        rng = np.random.default_rng(14)
        sampler = UniformMaxwellian(length=1.0)
        sig, n, m = 0.05, 3, 4000
        gaps_d, gaps_r = [], []
        for _ in range(m):
            sd = sample_chaotic_state(n, sampler, sig, Inelasticity(0.0),
                                      box=1.0, rng=rng, method="direct")
            sr = sample_chaotic_state(n, sampler, sig, Inelasticity(0.0),
                                      box=1.0, rng=rng, method="rejection")
            gaps_d.append(sd.min_separation())
            gaps_r.append(sr.min_separation())
        assert np.mean(gaps_d) == pytest.approx(np.mean(gaps_r), abs=0.01)
        assert min(gaps_d) >= sig and min(gaps_r) >= sig

    def test_momentum_marginal_unbiased(self):
        # conditioning acts on positions only; momenta stay exactly i.i.d.
        rng = np.random.default_rng(15)
        sampler = UniformMaxwellian(length=1.0, temperature=1.0)
        ps = []
        for _ in range(2000):
            s = sample_chaotic_state(4, sampler, 0.08, Inelasticity(0.0),
                                     box=1.0, rng=rng, method="rejection")
            ps.append(s.p[:, 0])
        ps = np.concatenate(ps)
        stderr = 1.0 / np.sqrt(ps.size)
        assert abs(ps.mean()) < 3 * stderr
        assert abs(ps.var() - 1.0) < 3 * np.sqrt(2.0) * stderr


class TestEnsembleSampler:
    def test_shapes_and_validity(self):
        rng = np.random.default_rng(16)
        q, p = sample_chaotic_ensemble(500, 3, UniformMaxwellian(length=1.0),
                                       0.05, None, rng)
        assert q.shape == (500, 3, 1)
        dq = np.abs(q[:, :, None, 0] - q[:, None, :, 0])
        iu, ju = np.triu_indices(3, 1)
        assert dq[:, iu, ju].min() >= 0.05


def test_unit_normal_validation():
    with pytest.raises(ValueError):
        unit_normal([1.0, 1.0, 0.0])
    np.testing.assert_allclose(unit_normal([0.0, 1.0, 0.0]), [0, 1, 0])


def test_phase_point_dimension_check():
    with pytest.raises(ValueError):
        PhasePoint(np.zeros(3), np.zeros(2))
