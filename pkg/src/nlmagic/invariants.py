"""Local-unitary invariants of a Schmidt spectrum.

All functions take either a :class:`~nlmagic.qudit.SchmidtSpectrum` or a plain
coefficient vector.  Plain vectors are used as given (order matters for the
cyclic sums), and may carry leading batch axes: ``lam[..., i]``.

Exponent patterns follow the compact labels ``242``, ``1331``, ``2204``:
each is right-padded with zeros to the local dimension.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from itertools import permutations

import numpy as np

from .qudit import SchmidtSpectrum


def _lambdas(spec) -> np.ndarray:
    if isinstance(spec, SchmidtSpectrum):
        return spec.lambdas
    lam = np.asarray(spec, dtype=float)
    if np.any(lam < 0):
        raise ValueError("Schmidt coefficients must be non-negative")
    return lam


def pad_pattern(pattern, n: int) -> tuple[int, ...]:
    """Parse ``"242"``, ``242`` or ``(2, 4, 2)`` and pad with zeros to length ``n``.

    Integer and string labels are read digit by digit, so they only cover
    exponents below 10; pass a sequence otherwise.
    """
    if isinstance(pattern, (int, np.integer)):
        pattern = str(pattern)
    if isinstance(pattern, str):
        pattern = [int(ch) for ch in pattern]
    exps = tuple(int(a) for a in pattern)
    if any(a < 0 for a in exps):
        raise ValueError(f"exponents must be non-negative: {exps}")
    if len(exps) > n:
        raise ValueError(f"pattern {exps} is longer than the dimension {n}")
    return exps + (0,) * (n - len(exps))


@lru_cache(maxsize=None)
def distinct_rearrangements(exps: tuple[int, ...]) -> np.ndarray:
    return np.array(sorted(set(permutations(exps))), dtype=float)


def _monomials(lam: np.ndarray, rows: np.ndarray) -> np.ndarray:
    # prod_j lam[..., j] ** rows[r, j], summed over r; 0**0 == 1 as required
    return np.prod(lam[..., None, :] ** rows, axis=-1).sum(axis=-1)


def power_sum(spec, n) -> float | np.ndarray:
    """``p_n = Tr(rho^n) = sum_i lambda_i^(2n)``; ``n`` may be fractional."""
    n = float(Fraction(n)) if isinstance(n, str) else float(n)
    if n <= 0:
        raise ValueError("power_sum needs n > 0")
    return np.sum(_lambdas(spec) ** (2 * n), axis=-1)


def det_invariant(spec) -> float | np.ndarray:
    """``e_N = det rho = prod_i lambda_i^2``."""
    return np.prod(_lambdas(spec) ** 2, axis=-1)


def monomial_sym(spec, pattern) -> float | np.ndarray:
    """Monomial symmetric polynomial: one term per distinct rearrangement of the exponents.

    With this convention ``s_(2n) == p_n`` and ``s_(2..2) == e_N``.
    """
    lam = _lambdas(spec)
    exps = pad_pattern(pattern, lam.shape[-1])
    return _monomials(lam, distinct_rearrangements(exps))


def cyclic_sum(spec, pattern) -> float | np.ndarray:
    """``sum_s prod_j lambda_{(j+s) mod N}^(a_j)`` over all N shifts, no deduplication."""
    lam = _lambdas(spec)
    n = lam.shape[-1]
    exps = np.array(pad_pattern(pattern, n), dtype=float)
    # shifting the coefficients by s is the same as shifting the exponents by -s
    rows = np.stack([np.roll(exps, s) for s in range(n)])
    return _monomials(lam, rows)


def anti_flatness(spec) -> float | np.ndarray:
    """``p_3 - p_2^2``; zero exactly when the spectrum is flat on its support."""
    return power_sum(spec, 3) - power_sum(spec, 2) ** 2


@dataclass(frozen=True)
class SpectrumInvariants:
    p: dict
    eN: float
    antiFlatness: float

    @classmethod
    def of(cls, spec, orders=(Fraction(1, 2), 1, 2, 3, 4)) -> "SpectrumInvariants":
        lam = _lambdas(spec)
        p = {Fraction(n): float(power_sum(lam, n)) for n in orders}
        return cls(p=p, eN=float(det_invariant(lam)), antiFlatness=float(anti_flatness(lam)))

    def to_json(self) -> dict:
        return {
            "p2": self.p[Fraction(2)],
            "p3": self.p[Fraction(3)],
            "p4": self.p[Fraction(4)],
            "pHalf": self.p[Fraction(1, 2)],
            "eN": self.eN,
            "antiFlatness": self.antiFlatness,
        }
