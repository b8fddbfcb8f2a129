"""Schmidt-attained non-local magic: closed forms, brute-force oracle, permutation max."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import permutations

import numpy as np

from . import invariants as inv
from .qudit import SchmidtSpectrum

SUPPORTED_CLOSED_FORM = (2, 3, 4, 5)
TIE_TOL = 1e-12

N4_NOTE = "reference expression; not a certified global minimum"


def _ordered(spec) -> np.ndarray:
    if isinstance(spec, SchmidtSpectrum):
        return spec.lambdas
    return np.asarray(spec, dtype=float)


@lru_cache(maxsize=None)
def _oracle_indices(n: int):
    r = np.arange(n)
    a, j, k, p = np.meshgrid(r, r, r, r, indexing="ij")
    q = (j - k + p) % n
    return a, j, k, p, q


def f_oracle(spec) -> float | np.ndarray:
    """Quadruple sum for ``F_N`` on an ordered coefficient vector.

    ``sum_a sum_{j,k,p} l_j l_{j+a} l_k l_{k+a} l_p l_{p+a} l_q l_{q+a}`` with
    ``q = j - k + p`` and all indices mod N.  Supports leading batch axes.
    """
    lam = _ordered(spec)
    n = lam.shape[-1]
    a, j, k, p, q = _oracle_indices(n)
    shift = (np.arange(n)[:, None] + np.arange(n)) % n
    pair = lam[..., :, None] * lam[..., shift]  # pair[..., j, a] = l_j * l_{j+a}
    terms = pair[..., j, a] * pair[..., k, a] * pair[..., p, a] * pair[..., q, a]
    return terms.reshape(*lam.shape[:-1], -1).sum(axis=-1)


def f_closed(spec, n: int | None = None) -> float | np.ndarray:
    """Closed-form ``F_N`` for N = 2..5 in terms of spectrum invariants."""
    lam = _ordered(spec)
    if n is None:
        n = lam.shape[-1]
    if lam.shape[-1] != n:
        raise ValueError(f"spectrum has {lam.shape[-1]} coefficients but N = {n}")
    if n not in SUPPORTED_CLOSED_FORM:
        raise ValueError(
            f"no closed form for N = {n}; supported dimensions are "
            f"{', '.join(map(str, SUPPORTED_CLOSED_FORM))} (use the oracle otherwise)"
        )
    p2 = inv.power_sum(lam, 2)
    if n == 2:
        e2 = inv.det_invariant(lam)
        return 1 - 4 * e2 + 16 * e2**2
    if n == 3:
        e3 = inv.det_invariant(lam)
        s1 = inv.monomial_sym(lam, "1")
        return 1 - 2 * p2 + 2 * p2**2 + 4 * e3 * s1**2
    c = inv.cyclic_sum
    p4 = inv.power_sum(lam, 4)
    if n == 4:
        e4 = inv.det_invariant(lam)
        return (3 * p2**2 - 2 * p4 + 120 * e4 + 4 * c(lam, "404")
                + 12 * c(lam, "242") + 8 * c(lam, "1331"))
    # e_5^(1/2) taken as prod(lambda) directly; lambda >= 0
    sqrt_e5 = np.prod(lam, axis=-1)
    return (3 * p2**2 - 2 * p4 + 24 * sqrt_e5 * inv.monomial_sym(lam, "111")
            + 24 * c(lam, "2222") + 12 * c(lam, "242") + 12 * c(lam, "2204")
            + 8 * c(lam, "1331") + 8 * c(lam, "3113"))


@lru_cache(maxsize=None)
def cyclic_class_orderings(n: int) -> np.ndarray:
    """One ordering per cyclic class: position 0 anchored, the rest permuted.

    Rows come out in lexicographic order, which the argmax tie-break relies on.
    """
    rest = permutations(range(1, n))
    return np.array([(0, *tail) for tail in rest], dtype=int)


@dataclass(frozen=True)
class NlmResult:
    value: float
    fOfLambda: float
    argmaxOrdering: tuple
    method: str
    metadata: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {
            "value": self.value,
            "fOfLambda": self.fOfLambda,
            "argmaxOrdering": list(self.argmaxOrdering),
            "method": self.method,
        }
        if self.metadata:
            out["metadata"] = dict(self.metadata)
        return out


def _evaluate(method: str, lam: np.ndarray, n: int):
    if method == "closedForm":
        return f_closed(lam, n)
    if method == "oracle":
        return f_oracle(lam)
    raise ValueError(f"unknown method {method!r}; expected 'closedForm' or 'oracle'")


def nlm_schmidt(spec, n: int | None = None, method: str = "closedForm") -> NlmResult:
    """Maximise ``F_N`` over cyclic classes of orderings and return ``-ln`` of the max.

    The input is sorted first, so the result depends only on the multiset of
    coefficients; ``argmaxOrdering`` indexes into the descending-sorted vector.
    """
    lam = np.sort(_ordered(spec))[::-1]
    if n is None:
        n = lam.size
    if lam.size != n:
        raise ValueError(f"spectrum has {lam.size} coefficients but N = {n}")
    orders = cyclic_class_orderings(n)
    values = np.asarray(_evaluate(method, lam[orders], n))
    best = values.max()
    # first row within tolerance is the lexicographically smallest
    i = int(np.flatnonzero(values >= best - TIE_TOL)[0])
    f = float(values[i])
    meta = {"note": N4_NOTE} if n == 4 else {}
    return NlmResult(
        value=float(-math.log(f)),
        fOfLambda=f,
        argmaxOrdering=tuple(int(v) for v in orders[i]),
        method=method,
        metadata=meta,
    )


def nlm_value(lam, method: str = "closedForm") -> np.ndarray:
    """Vectorised Schmidt-attained NLM for a batch ``lam[..., N]`` (values only)."""
    lam = np.sort(np.asarray(lam, dtype=float), axis=-1)[..., ::-1]
    n = lam.shape[-1]
    orders = cyclic_class_orderings(n)
    values = _evaluate(method, lam[..., orders], n)
    return -np.log(values.max(axis=-1))


def nlm_linear(value):
    """Linear NLM ``1 - exp(-M)``."""
    if np.any(np.asarray(value) < -TIE_TOL):
        raise ValueError("NLM values are non-negative")
    return -np.expm1(-np.asarray(value, dtype=float))
