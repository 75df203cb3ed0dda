import numpy as np
import pytest

from wavepnn.backends import MicrowaveSystem, backend_vjp, k_factor, linearity_metric
from wavepnn.backends.microwave import ZETA_CAP_DB


def small_system(eta, seed=11, d_in=8, relaxed=False):
    return MicrowaveSystem.random(d_in=d_in, n_elements=16, n_freqs=5,
                                  eta=eta, seed=seed, relaxed=relaxed)


class TestForward:
    def test_eta_zero_ignores_configuration(self):
        sys = small_system(0.0)
        a = sys.forward(np.zeros((1, 8)))
        b = sys.forward(np.ones((1, 8)))
        assert np.allclose(a, b, atol=1e-15)
        expected = np.abs(np.einsum("fm,mf->f", sys.u_out,
                                    sys.v_in)) ** 2
        assert np.allclose(a[0], expected, atol=1e-12)

    def test_scalar_resolvent_hand_case(self):
        # one element, A = 0.5, u = v = 1, phase pi, eta = 1:
        # bit 0 -> |1/(1-0.5)|^2 = 4; bit 1 -> |1/(1+0.5)|^2 = 4/9
        sys = MicrowaveSystem(coupling=[[0.5]], u_out=[[1.0]], v_in=[[1.0]],
                              pixel_map=[0], eta=1.0, phase_on=np.pi)
        out0 = sys.forward(np.array([[0.0]]))[0, 0]
        out1 = sys.forward(np.array([[1.0]]))[0, 0]
        assert out0 == pytest.approx(4.0, rel=1e-12)
        assert out1 == pytest.approx(4.0 / 9.0, rel=1e-12)

    def test_binarization_threshold(self):
        sys = small_system(0.6)
        low = sys.forward(np.full((1, 8), 0.49))
        zero = sys.forward(np.zeros((1, 8)))
        hi = sys.forward(np.full((1, 8), 0.5))
        one = sys.forward(np.ones((1, 8)))
        assert np.array_equal(low, zero)
        assert np.array_equal(hi, one)

    def test_nonnegative_outputs(self):
        sys = small_system(0.8)
        x = np.random.default_rng(0).random((20, 8))
        assert np.all(sys.forward(x) >= 0)

    def test_unstable_construction_rejected(self):
        with pytest.raises(ValueError, match="resolvent"):
            MicrowaveSystem(coupling=[[0.9]], u_out=[[1.0]], v_in=[[1.0]],
                            pixel_map=[0], eta=1.2)


class TestVjp:
    def test_matches_finite_differences_on_relaxed_map(self):
        sys = small_system(0.7, relaxed=True)
        rng = np.random.default_rng(1)
        h = 1e-6
        for _ in range(20):
            x = rng.random(8)
            ct = rng.normal(size=5)
            g = backend_vjp(sys, x, ct)
            fd = np.empty(8)
            for k in range(8):
                xp, xm = x.copy(), x.copy()
                xp[k] += h
                xm[k] -= h
                fd[k] = (ct @ sys.forward(xp[None])[0]
                         - ct @ sys.forward(xm[None])[0]) / (2 * h)
            assert np.max(np.abs(g - fd) / np.maximum(np.abs(fd), 1e-8)) < 1e-5


class TestDiagnostics:
    def test_k_factor_sentinel_at_eta_zero(self):
        sys = small_system(0.0)
        assert np.all(np.isinf(k_factor(sys, n_configs=50, seed=2)))

    def test_k_factor_sentinel_for_duplicate_ensemble(self):
        sys = small_system(0.7)
        config = np.tile(np.array([[1, 0, 1, 0, 1, 1, 0, 0]], dtype=float), (5, 1))
        assert np.all(np.isinf(k_factor(sys, configs=config)))

    def test_k_factor_median_decreases_with_eta(self):
        meds = [np.median(k_factor(small_system(eta), n_configs=300, seed=5))
                for eta in (0.2, 0.5, 0.8)]
        assert meds[0] > meds[1] > meds[2]

    def test_linearity_capped_at_eta_zero(self):
        sys = small_system(0.0)
        zeta = linearity_metric(sys, n_train=120, n_test=60, seed=3)
        assert np.all(zeta > 60.0)
        assert np.all(zeta <= ZETA_CAP_DB)

    def test_linearity_decreases_with_eta(self):
        # 8-pixel system probed with a couple hundred configs per eta
        meds = [np.median(linearity_metric(small_system(eta), n_train=180,
                                           n_test=76, seed=4))
                for eta in (0.1, 0.3, 0.5, 0.7, 0.9)]
        assert all(a > b for a, b in zip(meds, meds[1:]))

    def test_default_system_near_10db(self):
        sys = MicrowaveSystem.random(seed=7)
        zeta = linearity_metric(sys, n_train=600, n_test=300, seed=7)
        assert 7.0 <= np.median(zeta) <= 13.0

    def test_rank_deficient_design_rejected(self):
        sys = small_system(0.5)
        with pytest.raises(Exception, match="n_train|rank"):
            linearity_metric(sys, n_train=5, n_test=5, seed=0)


def test_perturbed_revalidates_stability():
    sys = small_system(0.9)
    # huge noise can push eta * rho(|A|) past 1; must fail loudly, not drift
    with pytest.raises(ValueError):
        sys.perturbed(0.0, 50.0, seed=0)
