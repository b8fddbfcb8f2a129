"""Two-qudit pure states, Schmidt decomposition and generalised Pauli coefficients.

The clock/shift basis used here is ``P_abcd = (X^a Z^b) (x) (X^c Z^d)`` with
``X|j> = |j+1 mod N>`` and ``Z|j> = w^j |j>``, ``w = exp(2 pi i / N)``.  The
usual phase prefactor that makes ``P_abcd`` Hermitian for qubits is omitted:
it drops out of every ``|t_abcd|^4`` sum computed in this package.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

NORM_TOL = 1e-12
UNITARY_TOL = 1e-8


@lru_cache(maxsize=None)
def root_of_unity(n: int) -> complex:
    return complex(np.exp(2j * np.pi / n))


@lru_cache(maxsize=None)
def _phase_table(n: int) -> np.ndarray:
    # W[b, j] = w**(b*j); read-only so the cached copy cannot be mutated.
    k = np.arange(n)
    w = np.exp(2j * np.pi * (np.outer(k, k) % n) / n)
    w.setflags(write=False)
    return w


@dataclass(frozen=True, eq=False)
class PureBipartiteState:
    """Amplitude matrix ``x[j, k]`` of ``sum_jk x_jk |jk>`` on C^N (x) C^N."""

    amplitudes: np.ndarray

    def __post_init__(self):
        x = np.array(self.amplitudes, dtype=np.complex128)
        if x.ndim != 2 or x.shape[0] != x.shape[1]:
            raise ValueError(f"amplitudes must be a square matrix, got shape {x.shape}")
        if x.shape[0] < 2:
            raise ValueError("local dimension must be at least 2")
        norm2 = float(np.sum(np.abs(x) ** 2))
        if abs(norm2 - 1.0) > NORM_TOL:
            raise ValueError(f"state is not normalised: sum |x|^2 = {norm2!r}")
        x.setflags(write=False)
        object.__setattr__(self, "amplitudes", x)

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    @classmethod
    def normalised(cls, amplitudes) -> "PureBipartiteState":
        x = np.asarray(amplitudes, dtype=np.complex128)
        return cls(x / np.linalg.norm(x))

    def to_json(self) -> dict:
        x = self.amplitudes
        return {
            "dim": self.dim,
            "amplitudes": [[[float(v.real), float(v.imag)] for v in row] for row in x],
        }

    @classmethod
    def from_json(cls, data: dict) -> "PureBipartiteState":
        arr = np.asarray(data["amplitudes"], dtype=float)
        if arr.ndim != 3 or arr.shape[-1] != 2:
            raise ValueError("amplitudes must be an N x N array of [re, im] pairs")
        x = arr[..., 0] + 1j * arr[..., 1]
        if x.shape != (data["dim"], data["dim"]):
            raise ValueError(f"dim {data['dim']} does not match amplitude shape {x.shape}")
        return cls(x)


@dataclass(frozen=True, eq=False)
class SchmidtSpectrum:
    """Non-negative Schmidt coefficients, stored in descending order.

    ``lambdas`` are amplitudes, not probabilities: ``sum(lambdas**2) == 1``.
    """

    lambdas: np.ndarray

    def __post_init__(self):
        lam = np.array(self.lambdas, dtype=float).ravel()
        if lam.size < 2:
            raise ValueError("a spectrum needs at least two coefficients")
        if np.any(lam < 0) or not np.all(np.isfinite(lam)):
            raise ValueError("Schmidt coefficients must be finite and non-negative")
        norm2 = float(np.sum(lam**2))
        if abs(norm2 - 1.0) > NORM_TOL:
            raise ValueError(f"spectrum is not normalised: sum lambda^2 = {norm2!r}")
        lam = np.sort(lam)[::-1].copy()
        lam.setflags(write=False)
        object.__setattr__(self, "lambdas", lam)

    @property
    def dim(self) -> int:
        return self.lambdas.size

    @classmethod
    def normalised(cls, values) -> "SchmidtSpectrum":
        lam = np.abs(np.asarray(values, dtype=float))
        return cls(lam / np.linalg.norm(lam))

    @classmethod
    def from_probabilities(cls, probs) -> "SchmidtSpectrum":
        p = np.asarray(probs, dtype=float)
        return cls.normalised(np.sqrt(np.clip(p, 0.0, None)))

    def to_json(self) -> dict:
        return {"dim": self.dim, "lambdas": [float(v) for v in self.lambdas]}

    @classmethod
    def from_json(cls, data: dict) -> "SchmidtSpectrum":
        lam = data["lambdas"]
        if len(lam) != data["dim"]:
            raise ValueError(f"dim {data['dim']} does not match {len(lam)} lambdas")
        return cls(lam)


def load_json(path) -> PureBipartiteState | SchmidtSpectrum:
    """Read a state file (``amplitudes``) or a spectrum file (``lambdas``)."""
    data = json.loads(Path(path).read_text())
    if "amplitudes" in data:
        return PureBipartiteState.from_json(data)
    if "lambdas" in data:
        return SchmidtSpectrum.from_json(data)
    raise ValueError(f"{path}: expected an 'amplitudes' or 'lambdas' field")


def _as_amplitudes(state) -> np.ndarray:
    if isinstance(state, PureBipartiteState):
        return state.amplitudes
    return np.asarray(state, dtype=np.complex128)


def state_from_spectrum(spec) -> PureBipartiteState:
    """Schmidt-aligned state ``x_jk = lambda_j delta_jk``.

    Accepts a :class:`SchmidtSpectrum` or any ordered coefficient vector; the
    given order is kept so that callers can build every relabelling.
    """
    lam = spec.lambdas if isinstance(spec, SchmidtSpectrum) else np.asarray(spec, dtype=float)
    return PureBipartiteState(np.diag(lam).astype(np.complex128))


def schmidt_decompose(state: PureBipartiteState):
    """Return ``(spectrum, U_A, U_B)`` with ``U_A x U_B^T = diag(lambdas)``.

    Singular values come out of the SVD already in descending order, and
    ``x = W diag(s) Vh`` gives ``U_A = W^dagger`` and ``U_B = conj(Vh)``, which
    leaves the aligned amplitudes real and non-negative.
    """
    if not isinstance(state, PureBipartiteState):
        state = PureBipartiteState(state)
    w, s, vh = np.linalg.svd(state.amplitudes)
    # SVD round-off can leave sum(s**2) a few ulps away from 1
    s = s / np.linalg.norm(s)
    return SchmidtSpectrum(s), w.conj().T, vh.conj()


def reduced_density(state, subsystem: str = "A") -> np.ndarray:
    x = _as_amplitudes(state)
    if subsystem == "A":
        return x @ x.conj().T
    if subsystem == "B":
        return x.T @ x.conj()
    raise ValueError(f"subsystem must be 'A' or 'B', got {subsystem!r}")


def pauli_coefficient(state, idx) -> complex:
    """``t_abcd = Tr(rho P_abcd) = sum_jk x_jk conj(x_{j+a,k+c}) w^(bj+dk)``."""
    x = _as_amplitudes(state)
    n = x.shape[0]
    a, b, c, d = (int(i) % n for i in idx)
    w = root_of_unity(n)
    total = 0j
    for j in range(n):
        for k in range(n):
            total += x[j, k] * np.conj(x[(j + a) % n, (k + c) % n]) * w ** ((b * j + d * k) % n)
    return complex(total)


@lru_cache(maxsize=None)
def _shift_index(n: int, sign: int = 1) -> np.ndarray:
    """Flat index of ``(j + sign*a, k + sign*c) mod n`` laid out as ``[a, c, j, k]``."""
    r = np.arange(n)
    rows = (r[None, :] + sign * r[:, None]) % n  # rows[a, j]
    idx = rows[:, None, :, None] * n + rows[None, :, None, :]
    idx.setflags(write=False)
    return idx


def _shifted_products(x: np.ndarray) -> np.ndarray:
    """``Y[..., a, c, j, k] = x[..., j, k] * conj(x[..., j+a, k+c])``."""
    n = x.shape[-1]
    flat = x.reshape(*x.shape[:-2], n * n)
    shifted = np.take(flat, _shift_index(n), axis=-1)
    return x[..., None, None, :, :] * shifted.conj()


def pauli_tensor(state) -> np.ndarray:
    """All ``N**4`` coefficients as an array indexed ``[a, b, c, d]``.

    This is the direct sum over ``(j, k)`` for every index, vectorised; the
    DFT path in :func:`pauli_tensor_dft` must agree to 1e-10.
    """
    x = _as_amplitudes(state)
    w = _phase_table(x.shape[0])
    y = _shifted_products(x)
    return np.einsum("acjk,bj,dk->abcd", y, w, w)


def pauli_tensor_dft(amplitudes: np.ndarray) -> np.ndarray:
    """Coefficients in ``[..., a, c, b, d]`` layout, batched over leading axes.

    The ``(b, d)`` sums are a 2-D DFT of the shifted products, done as two
    small matmuls with the phase table (faster than an FFT for N <= 7).
    """
    w = _phase_table(amplitudes.shape[-1])
    return w @ _shifted_products(amplitudes) @ w


def m2_pure(state) -> float:
    """Second stabiliser Renyi entropy ``-ln(sum |t|^4 / N^2)`` of a pure state."""
    x = _as_amplitudes(state)
    n = x.shape[0]
    t = pauli_tensor_dft(x)
    return float(-np.log(np.sum(np.abs(t) ** 4) / n**2))


_SIGMA = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]]),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


def qubit_r_tensor(state) -> np.ndarray:
    """Real 4x4 matrix ``R[mu, nu] = Tr[(sigma_mu (x) sigma_nu) rho]`` for two qubits."""
    x = _as_amplitudes(state)
    if x.shape != (2, 2):
        raise ValueError(f"qubit_r_tensor needs a two-qubit state, got dimension {x.shape[0]}")
    # <psi| s_mu (x) s_nu |psi> = Tr(x^dagger s_mu x s_nu^T)
    r = np.empty((4, 4))
    for mu, s_mu in enumerate(_SIGMA):
        for nu, s_nu in enumerate(_SIGMA):
            r[mu, nu] = np.trace(x.conj().T @ s_mu @ x @ s_nu.T).real
    return r


def check_unitary(u, tol: float = UNITARY_TOL) -> np.ndarray:
    u = np.asarray(u, dtype=np.complex128)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {u.shape}")
    err = np.linalg.norm(u.conj().T @ u - np.eye(u.shape[0]))
    if err > tol:
        raise ValueError(f"matrix is not unitary: ||U^dagger U - I|| = {err:.3e}")
    return u


def apply_local_unitaries(state: PureBipartiteState, u_a, u_b) -> PureBipartiteState:
    """``(U_A (x) U_B)|psi>``, i.e. ``x -> U_A x U_B^T``."""
    u_a = check_unitary(u_a)
    u_b = check_unitary(u_b)
    x = _as_amplitudes(state)
    if u_a.shape != x.shape or u_b.shape != x.shape:
        raise ValueError("unitaries must match the local dimension of the state")
    y = u_a @ x @ u_b.T
    # unitaries within 1e-8 can leave the norm slightly off; renormalise
    return PureBipartiteState(y / np.linalg.norm(y))


def random_local_unitaries(n: int, rng: np.random.Generator):
    """Haar-random pair ``(U_A, U_B)`` drawn from ``rng``."""
    from scipy.stats import unitary_group

    return unitary_group.rvs(n, random_state=rng), unitary_group.rvs(n, random_state=rng)
