from fractions import Fraction
from itertools import permutations

import numpy as np
import pytest

from nlmagic.invariants import (SpectrumInvariants, anti_flatness, cyclic_sum, det_invariant,
                                monomial_sym, pad_pattern, power_sum)
from nlmagic.qudit import SchmidtSpectrum

from conftest import random_spectra

FLAT3 = np.full(3, 3**-0.5)
FLAT5 = np.full(5, 5**-0.5)


def test_pad_pattern():
    assert pad_pattern("242", 5) == (2, 4, 2, 0, 0)
    assert pad_pattern(1331, 4) == (1, 3, 3, 1)
    assert pad_pattern([2, 2], 2) == (2, 2)
    with pytest.raises(ValueError):
        pad_pattern("2222", 3)


class TestPowerSum:
    def test_product(self):
        assert power_sum([1.0, 0, 0], 2) == 1

    def test_flat_qutrit(self):
        assert power_sum(FLAT3, 2) == pytest.approx(1 / 3, abs=1e-15)

    def test_rank_two(self):
        assert power_sum(np.array([1, 1, 0]) / np.sqrt(2), 2) == pytest.approx(0.5, abs=1e-15)

    def test_half_is_coefficient_sum(self):
        lam = np.array([0.8, 0.6])
        assert power_sum(lam, Fraction(1, 2)) == pytest.approx(1.4, abs=1e-15)
        assert power_sum(lam, "1/2") == pytest.approx(1.4, abs=1e-15)

    def test_rejects_nonpositive_order(self):
        with pytest.raises(ValueError):
            power_sum(FLAT3, 0)

    def test_rejects_negative_coefficients(self):
        with pytest.raises(ValueError):
            power_sum([-0.6, 0.8], 2)


class TestDet:
    def test_zero_entry(self):
        assert det_invariant([0.6, 0.8, 0.0]) == 0

    def test_flat_qutrit(self):
        assert det_invariant(FLAT3) == pytest.approx(1 / 27, abs=1e-16)
        assert det_invariant(FLAT3) * monomial_sym(FLAT3, "1") ** 2 == pytest.approx(1 / 9)

    @pytest.mark.parametrize("th", [0.1, 0.4, np.pi / 4])
    def test_qubit_angle(self, th):
        assert det_invariant([np.cos(th), np.sin(th)]) == pytest.approx(
            np.sin(2 * th) ** 2 / 4, abs=1e-15)


class TestMonomialSym:
    def test_s1_qubit(self):
        th = 0.3
        assert monomial_sym([np.cos(th), np.sin(th)], "1") == pytest.approx(
            np.cos(th) + np.sin(th), abs=1e-15)

    def test_s111_flat_ququint(self):
        assert monomial_sym(FLAT5, "111") == pytest.approx(10 * 5**-1.5, abs=1e-15)

    def test_against_explicit_enumeration(self, rng):
        lam = random_spectra(4, 1, rng)[0]
        exps = (3, 1, 1, 0)
        distinct = set(permutations(exps))
        expected = sum(np.prod(lam ** np.array(e)) for e in distinct)
        assert len(distinct) == 12
        assert monomial_sym(lam, "311") == pytest.approx(expected, rel=1e-14)

    def test_batch(self, rng):
        lam = random_spectra(3, 5, rng)
        vals = monomial_sym(lam, "21")
        assert vals.shape == (5,)
        assert vals[2] == pytest.approx(monomial_sym(lam[2], "21"))


class TestCyclicSum:
    def test_c242_on_three_thirds(self):
        lam = np.sqrt([1 / 3, 1 / 3, 1 / 3, 0, 0])
        assert cyclic_sum(lam, "242") == pytest.approx(1 / 81, abs=1e-15)

    def test_explicit_shift_convention(self):
        lam = np.array([0.1, 0.2, 0.3, 0.9])
        lam = lam / np.linalg.norm(lam)
        exps = (1, 3, 3, 1)
        expected = sum(np.prod([lam[(j + s) % 4] ** exps[j] for j in range(4)]) for s in range(4))
        assert cyclic_sum(lam, "1331") == pytest.approx(expected, rel=1e-14)

    def test_order_dependent(self):
        lam = np.array([0.1, 0.2, 0.3, 0.9])
        lam = lam / np.linalg.norm(lam)
        assert abs(cyclic_sum(lam, "1331") - cyclic_sum(lam[[0, 2, 1, 3]], "1331")) > 1e-6


class TestAntiFlatness:
    @pytest.mark.parametrize("n", [2, 3, 5, 7])
    def test_flat_is_zero(self, n):
        assert anti_flatness(np.full(n, n**-0.5)) == pytest.approx(0, abs=1e-15)

    def test_product_is_zero(self):
        assert anti_flatness([1.0, 0, 0]) == 0

    def test_flat_on_support(self):
        assert anti_flatness(np.array([1, 1, 0, 0]) / np.sqrt(2)) == pytest.approx(0, abs=1e-15)

    @pytest.mark.parametrize("eps", [1e-2, 1e-3])
    def test_near_flat_nonzero(self, eps):
        lam = np.sqrt(np.array([1 / 3 + eps, 1 / 3, 1 / 3 - eps]))
        assert abs(anti_flatness(lam)) > eps**2 / 10

    @pytest.mark.parametrize("th", [0.1, 0.3, 0.7])
    def test_qubit_closed_form(self, th):
        lam = [np.cos(th), np.sin(th)]
        e2 = det_invariant(lam)
        assert anti_flatness(lam) == pytest.approx(e2 - 4 * e2**2, abs=1e-15)


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
def test_consistency_triad(n, rng):
    lam = random_spectra(n, 1000, rng)
    twos = "2" * n
    for k in (1, 2, 3, 4):
        p = power_sum(lam, k)
        np.testing.assert_allclose(monomial_sym(lam, [2 * k]), p, atol=1e-12)
        np.testing.assert_allclose(cyclic_sum(lam, [2 * k]), p, atol=1e-12)
    np.testing.assert_allclose(cyclic_sum(lam, twos), n * det_invariant(lam), atol=1e-12)
    np.testing.assert_allclose(monomial_sym(lam, twos), det_invariant(lam), atol=1e-12)
    np.testing.assert_allclose(power_sum(lam, 1), 1, atol=1e-12)


@pytest.mark.parametrize("n", [3, 4, 5])
def test_permutation_invariance(n, rng):
    lam = random_spectra(n, 50, rng)
    perm = rng.permutation(n)
    for f in (lambda v: power_sum(v, 2), lambda v: power_sum(v, 0.5), det_invariant,
              anti_flatness, lambda v: monomial_sym(v, "21")):
        np.testing.assert_allclose(f(lam[:, perm]), f(lam), atol=1e-12)


def test_invariants_record(rng):
    spec = SchmidtSpectrum(random_spectra(4, 1, rng)[0])
    inv = SpectrumInvariants.of(spec)
    assert inv.p[Fraction(1)] == pytest.approx(1, abs=1e-12)
    assert inv.p[Fraction(2)] >= inv.p[Fraction(3)] >= inv.p[Fraction(4)]
    assert inv.eN >= 0
    js = inv.to_json()
    assert set(js) == {"p2", "p3", "p4", "pHalf", "eN", "antiFlatness"}
