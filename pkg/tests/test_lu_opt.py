import numpy as np
import pytest

from nlmagic.closed_form import nlm_schmidt
from nlmagic.lu_opt import (LocalUnitaryParams, OptimizerConfig, gell_mann_basis, gradient,
                            initial_params, lbfgs_batch, minimize, objective, su_from_params)
from nlmagic.qudit import (apply_local_unitaries, m2_pure, random_local_unitaries,
                           state_from_spectrum)

from conftest import random_state

QUTRIT_MAX = np.array([1, 1, 0]) / np.sqrt(2)


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_generators(n):
    g = gell_mann_basis(n)
    assert g.shape == (n * n - 1, n, n)
    np.testing.assert_allclose(np.trace(g, axis1=1, axis2=2), 0, atol=1e-15)
    np.testing.assert_allclose(g, g.conj().transpose(0, 2, 1), atol=0)
    gram = np.einsum("aij,bji->ab", g, g).real
    np.testing.assert_allclose(gram, 2 * np.eye(n * n - 1), atol=1e-14)


def test_qubit_generators_are_paulis():
    g = gell_mann_basis(2)
    np.testing.assert_array_equal(g[0], [[0, 1], [1, 0]])
    np.testing.assert_array_equal(g[1], [[0, -1j], [1j, 0]])
    np.testing.assert_array_equal(g[2], [[1, 0], [0, -1]])


class TestSuFromParams:
    def test_zero(self):
        np.testing.assert_allclose(su_from_params(np.zeros(8), 3), np.eye(3), atol=1e-15)

    def test_qubit_half_turn(self):
        u = su_from_params([np.pi / 2, 0, 0], 2)
        np.testing.assert_allclose(u, 1j * np.array([[0, 1], [1, 0]]), atol=1e-14)
        assert np.linalg.det(u) == pytest.approx(1, abs=1e-12)

    @pytest.mark.parametrize("n", [2, 3, 4, 5])
    def test_random_unitary_det_one(self, n, rng):
        for _ in range(5):
            u = su_from_params(rng.normal(scale=2, size=n * n - 1), n)
            np.testing.assert_allclose(u.conj().T @ u, np.eye(n), atol=1e-12)
            assert np.linalg.det(u) == pytest.approx(1, abs=1e-10)

    def test_wrong_length(self):
        with pytest.raises(ValueError, match="needs 8 parameters"):
            su_from_params(np.zeros(3), 3)

    def test_params_round_trip(self, rng):
        flat = rng.normal(size=16)
        p = LocalUnitaryParams.from_flat(flat, 3)
        np.testing.assert_array_equal(p.flat(), flat)
        with pytest.raises(ValueError):
            LocalUnitaryParams.from_flat(flat[:-1], 3)
        with pytest.raises(ValueError):
            LocalUnitaryParams.from_flat(np.full(16, np.nan), 3)


class TestObjective:
    def test_zero_params(self, rng):
        s = random_state(4, rng)
        assert objective(s, np.zeros(30)) == pytest.approx(m2_pure(s), abs=1e-14)

    def test_qutrit_aligned(self):
        assert objective(state_from_spectrum(QUTRIT_MAX), np.zeros(16)) == pytest.approx(
            np.log(2), abs=1e-14)

    def test_diagonal_generators_on_product(self, rng):
        x = np.zeros((3, 3))
        x[0, 0] = 1
        theta = np.zeros(16)
        theta[6:8] = rng.normal(size=2)  # diagonal generators of side A
        assert objective(x, theta) == pytest.approx(0, abs=1e-12)

    def test_matches_explicit_transform(self, rng):
        s = random_state(3, rng)
        theta = rng.normal(size=16)
        p = LocalUnitaryParams.from_flat(theta, 3)
        moved = apply_local_unitaries(s, *p.unitaries(3))
        assert objective(s, p) == pytest.approx(m2_pure(moved), abs=1e-12)


class TestGradient:
    @pytest.mark.parametrize("n", [2, 3, 4, 5])
    def test_analytic_vs_finite_difference(self, n, rng):
        for _ in range(10):
            s = random_state(n, rng)
            theta = rng.normal(size=2 * (n * n - 1))
            np.testing.assert_allclose(gradient(s, theta), gradient(s, theta, "finiteDifference"),
                                       atol=1e-5)

    def test_stationary_at_product(self):
        x = np.zeros((4, 4))
        x[1, 2] = 1
        assert np.abs(gradient(x, np.zeros(30))).max() < 1e-8

    def test_small_at_found_minimum(self):
        s = state_from_spectrum(QUTRIT_MAX)
        res = minimize(s, OptimizerConfig(nStarts=5, seed=1))
        assert np.abs(gradient(s, res.bestParams)).max() < 1e-6

    def test_unknown_mode(self, rng):
        with pytest.raises(ValueError):
            gradient(random_state(2, rng), np.zeros(6), "symbolic")


class TestLbfgs:
    def test_quadratic(self):
        scale = np.array([1.0, 10.0, 100.0])

        def fg(x):
            return np.sum(scale * x**2, axis=1), 2 * scale * x

        x, f, conv, iters, _ = lbfgs_batch(fg, np.ones((2, 3)), 200, 1e-10)
        np.testing.assert_allclose(x, 0, atol=1e-9)
        assert conv.all()

    def test_non_finite_start_is_dropped(self):
        def fg(x):
            f = np.sum(x**2, axis=1)
            f[x[:, 0] > 5] = np.nan
            return f, 2 * x

        x0 = np.array([[1.0, 1.0], [10.0, 0.0]])
        x, f, conv, _, _ = lbfgs_batch(fg, x0, 50, 1e-10)
        assert conv.tolist() == [True, False]
        assert f[0] < 1e-18


class TestMinimize:
    def test_config_validation(self):
        with pytest.raises(ValueError):
            OptimizerConfig(nStarts=0)
        with pytest.raises(ValueError):
            OptimizerConfig(gradTolerance=0)
        with pytest.raises(ValueError):
            OptimizerConfig(gradientMode="newton")
        with pytest.raises(ValueError):
            OptimizerConfig(polishStarts=-1)

    def test_polish_only_lowers_values(self, rng):
        s = state_from_spectrum(np.sqrt([0.4, 0.3, 0.2, 0.06, 0.04]))
        plain = minimize(s, OptimizerConfig(nStarts=6, maxIter=60, seed=1, polishStarts=0))
        polished = minimize(s, OptimizerConfig(nStarts=6, maxIter=60, seed=1, polishStarts=2))
        assert np.all(polished.perStartValues <= plain.perStartValues + 1e-15)
        assert np.sum(polished.perStartValues < plain.perStartValues) <= 2
        assert polished.minValue < plain.minValue

    def test_starts_are_seeded_substreams(self):
        a = initial_params(3, OptimizerConfig(nStarts=4, seed=9))
        b = initial_params(3, OptimizerConfig(nStarts=6, seed=9))
        np.testing.assert_array_equal(a, b[:4])
        np.testing.assert_array_equal(a[0], 0)
        np.testing.assert_array_equal(a[3], np.random.default_rng([9, 3]).normal(size=16))

    @pytest.mark.parametrize("n", [2, 3, 5])
    def test_product_state(self, n):
        x = np.zeros((n, n))
        x[0, n - 1] = 1
        res = minimize(x, OptimizerConfig(nStarts=3, seed=2))
        assert res.minValue == pytest.approx(0, abs=1e-8)

    def test_qutrit_max(self):
        res = minimize(state_from_spectrum(QUTRIT_MAX), OptimizerConfig(nStarts=50, seed=0))
        assert res.minValue == pytest.approx(np.log(2), abs=1e-6)
        assert res.minValue == pytest.approx(res.perStartValues.min(), abs=1e-12)
        assert res.perStartValues.shape == (50,) and res.converged.shape == (50,)

    def test_scrambled_same_minimum(self, rng):
        s = state_from_spectrum(QUTRIT_MAX)
        scrambled = apply_local_unitaries(s, *random_local_unitaries(3, rng))
        a = minimize(s, OptimizerConfig(nStarts=50, seed=0)).minValue
        b = minimize(scrambled, OptimizerConfig(nStarts=50, seed=0)).minValue
        assert a == pytest.approx(b, abs=1e-5)

    def test_never_above_input(self, rng):
        s = random_state(3, rng)
        res = minimize(s, OptimizerConfig(nStarts=2, maxIter=3, seed=0))
        assert res.minValue <= objective(s, np.zeros(16)) + 1e-9

    def test_repeatable(self, rng):
        s = random_state(3, rng)
        cfg = OptimizerConfig(nStarts=8, maxIter=40, seed=123)
        a, b = minimize(s, cfg), minimize(s, cfg)
        np.testing.assert_array_equal(a.perStartValues, b.perStartValues)
        assert a.minValue == b.minValue

    def test_best_params_reproduce_min(self, rng):
        s = random_state(3, rng)
        res = minimize(s, OptimizerConfig(nStarts=6, seed=4))
        assert objective(s, res.bestParams) == pytest.approx(res.minValue, abs=1e-10)

    def test_finite_difference_mode(self):
        s = state_from_spectrum(np.sqrt([0.7, 0.3]))
        res = minimize(s, OptimizerConfig(nStarts=4, seed=0, gradientMode="finiteDifference"))
        assert res.minValue == pytest.approx(nlm_schmidt(np.sqrt([0.7, 0.3])).value, abs=1e-8)

    def test_json(self, rng):
        res = minimize(random_state(2, rng), OptimizerConfig(nStarts=2, maxIter=5))
        js = res.to_json()
        assert len(js["bestParams"]["thetaA"]) == 3 and len(js["perStartValues"]) == 2
