"""Direct minimisation of the stabiliser Renyi entropy over SU(N) x SU(N).

Each local unitary is ``exp(i sum_k theta_k G_k)`` over a fixed generalised
Gell-Mann basis.  The objective and its analytic gradient are evaluated for a
whole batch of parameter vectors at once, and the multi-start L-BFGS below
advances every start in lock-step, so one start's trajectory never depends on
which other starts share the batch.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg import expm

from .qudit import PureBipartiteState, _phase_table, _shift_index, m2_pure, pauli_tensor_dft

log = logging.getLogger(__name__)

FD_STEP = 1e-5


@lru_cache(maxsize=None)
def gell_mann_basis(n: int) -> np.ndarray:
    """Traceless Hermitian generators, shape ``(n*n - 1, n, n)``.

    Order: symmetric ``E_jk + E_kj``, then antisymmetric ``-i E_jk + i E_kj``
    (both over ``j < k`` lexicographically), then the ``n - 1`` diagonal ones.
    Normalised to ``Tr(G_a G_b) = 2 delta_ab``, so N=2 gives the Pauli matrices.
    """
    pairs = [(j, k) for j in range(n) for k in range(j + 1, n)]
    gens = []
    for j, k in pairs:
        g = np.zeros((n, n), dtype=complex)
        g[j, k] = g[k, j] = 1
        gens.append(g)
    for j, k in pairs:
        g = np.zeros((n, n), dtype=complex)
        g[j, k] = -1j
        g[k, j] = 1j
        gens.append(g)
    for m in range(1, n):
        diag = np.zeros(n)
        diag[:m] = 1
        diag[m] = -m
        gens.append(np.diag(diag * np.sqrt(2 / (m * (m + 1)))).astype(complex))
    basis = np.array(gens)
    basis.setflags(write=False)
    return basis


def _check_params(theta, n: int) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape[-1] != n * n - 1:
        raise ValueError(f"SU({n}) needs {n * n - 1} parameters, got {theta.shape[-1]}")
    if not np.all(np.isfinite(theta)):
        raise ValueError("parameters must be finite")
    return theta


def su_from_params(theta, n: int) -> np.ndarray:
    """``exp(i sum_k theta_k G_k)`` via scaling-and-squaring Pade (scipy)."""
    theta = _check_params(theta, n)
    h = np.tensordot(theta, gell_mann_basis(n), axes=1)
    u = expm(1j * h)
    err = np.linalg.norm(u.conj().T @ u - np.eye(n))
    if err > 1e-10:
        raise ArithmeticError(f"matrix exponential lost unitarity: {err:.2e}")
    return u


@dataclass(frozen=True)
class LocalUnitaryParams:
    thetaA: np.ndarray
    thetaB: np.ndarray

    @classmethod
    def from_flat(cls, flat, n: int) -> "LocalUnitaryParams":
        flat = np.asarray(flat, dtype=float)
        m = n * n - 1
        if flat.shape != (2 * m,):
            raise ValueError(f"expected {2 * m} parameters for N={n}, got {flat.shape}")
        return cls(_check_params(flat[:m], n), _check_params(flat[m:], n))

    def flat(self) -> np.ndarray:
        return np.concatenate([self.thetaA, self.thetaB])

    def unitaries(self, n: int):
        return su_from_params(self.thetaA, n), su_from_params(self.thetaB, n)


@lru_cache(maxsize=None)
def _back_index(n: int) -> np.ndarray:
    # rows (a, c) flattened; entry [ac, jk] picks (j - a, k - c) from the same row
    return _shift_index(n, -1).reshape(n * n, n * n)


def _spectral_exp(theta: np.ndarray, gens: np.ndarray):
    """Batched ``exp(iH)`` from ``H = V diag(w) V^dagger``; returns ``(U, w, V)``."""
    h = np.einsum("bk,kij->bij", theta, gens)
    w, v = np.linalg.eigh(h)
    u = (v * np.exp(1j * w)[:, None, :]) @ v.conj().swapaxes(-1, -2)
    return u, w, v


def _exp_derivative_weights(w: np.ndarray) -> np.ndarray:
    """Divided differences of ``e^{ix}`` on the eigenvalues (Daleckii-Krein).

    ``(e^{i w_p} - e^{i w_q}) / (w_p - w_q) = i e^{i(w_p+w_q)/2} sinc`` form, which
    stays accurate for (near-)degenerate eigenvalues.
    """
    wp = w[:, :, None]
    wq = w[:, None, :]
    half = (wp - wq) / 2
    return 1j * np.exp(1j * (wp + wq) / 2) * np.sinc(half / np.pi)


def _theta_gradient(k_mat, w, v, gens):
    """``d/dtheta_k Re sum(K * dU)`` for ``U = exp(i theta . G)``, batched."""
    phi = _exp_derivative_weights(w)
    ell = v.swapaxes(-1, -2) @ k_mat @ v.conj()
    z = v.conj() @ (phi * ell) @ v.swapaxes(-1, -2)
    return np.einsum("kmn,bmn->bk", gens, z).real


def batch_value_and_grad(x: np.ndarray, params: np.ndarray, with_grad: bool = True):
    """Objective ``-ln(sum |t|^4 / N^2)`` for rows of ``params`` (shape ``(B, 2(N^2-1))``).

    Returns ``(values, grads)``; ``grads`` is ``None`` when ``with_grad`` is false.
    """
    n = x.shape[0]
    gens = gell_mann_basis(n)
    m = n * n - 1
    params = np.atleast_2d(params)
    ua, wa, va = _spectral_exp(params[:, :m], gens)
    ub, wb, vb = _spectral_exp(params[:, m:], gens)
    left = ua @ x  # U_A x
    right = x @ ub.swapaxes(-1, -2)  # x U_B^T
    xp = left @ ub.swapaxes(-1, -2)
    t = pauli_tensor_dft(xp)  # [B, a, c, b, d]
    abs2 = (t * t.conj()).real
    s = np.sum(abs2**2, axis=(1, 2, 3, 4))
    values = -np.log(s / n**2)
    if not with_grad:
        return values, None

    # dS = 4 Re sum g dt with g = |t|^2 conj(t); map back onto dx'
    g = abs2 * t.conj()
    w = _phase_table(n)
    ghat = w @ g @ w  # ghat[a, c, j, k] = sum_bd g[a, c, b, d] w^(bj+dk)
    bsz = xp.shape[0]
    # A[j, k] = sum_ac ghat[a, c, j, k] conj(x'[j+a, k+c])
    shifted = np.take(xp.reshape(bsz, n * n), _shift_index(n), axis=-1)
    term_a = np.sum(ghat * shifted.conj(), axis=(1, 2))
    # B[j, k] = sum_ac (ghat * x')[a, c, j-a, k-c]
    prod = (ghat * xp[:, None, None, :, :]).reshape(bsz, n * n, n * n)
    term_b = np.take_along_axis(prod, _back_index(n)[None], axis=-1).sum(axis=1)
    term_b = term_b.reshape(bsz, n, n)
    hmat = 4 * (term_a + term_b.conj())  # dS = Re sum hmat * dx'

    k_a = hmat @ right.swapaxes(-1, -2)
    k_b = hmat.swapaxes(-1, -2) @ left
    grad = np.concatenate(
        [_theta_gradient(k_a, wa, va, gens), _theta_gradient(k_b, wb, vb, gens)], axis=1
    )
    grad *= -1.0 / s[:, None]
    return values, grad


def _amplitudes(state) -> np.ndarray:
    if isinstance(state, PureBipartiteState):
        return state.amplitudes
    return PureBipartiteState(state).amplitudes


def _flat(params, n: int) -> np.ndarray:
    if isinstance(params, LocalUnitaryParams):
        return params.flat()
    flat = np.asarray(params, dtype=float)
    if flat.shape != (2 * (n * n - 1),):
        raise ValueError(f"expected {2 * (n * n - 1)} parameters for N={n}, got {flat.shape}")
    return flat


def objective(state, params) -> float:
    """``m2_pure`` of ``(U_A (x) U_B)|psi>`` with the unitaries built by :func:`su_from_params`."""
    x = _amplitudes(state)
    n = x.shape[0]
    p = LocalUnitaryParams.from_flat(_flat(params, n), n)
    u_a, u_b = p.unitaries(n)
    return m2_pure(u_a @ x @ u_b.T)


def gradient(state, params, mode: str = "analytic") -> np.ndarray:
    x = _amplitudes(state)
    n = x.shape[0]
    flat = _flat(params, n)
    if mode == "analytic":
        return batch_value_and_grad(x, flat[None, :])[1][0]
    if mode == "finiteDifference":
        return _fd_gradient(x, flat[None, :])[0]
    raise ValueError(f"unknown gradient mode {mode!r}")


def _fd_gradient(x: np.ndarray, params: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """Central differences, all coordinates of all rows in one batched call."""
    b, p = params.shape
    eye = np.eye(p) * step
    probes = np.concatenate([params[:, None, :] + eye, params[:, None, :] - eye], axis=1)
    vals, _ = batch_value_and_grad(x, probes.reshape(-1, p), with_grad=False)
    vals = vals.reshape(b, 2, p)
    return (vals[:, 0] - vals[:, 1]) / (2 * step)


@dataclass(frozen=True)
class OptimizerConfig:
    nStarts: int = 50
    maxIter: int = 300
    gradTolerance: float = 1e-9
    seed: int = 0
    initScale: float = 1.0
    gradientMode: str = "analytic"
    memory: int = 10
    stallTolerance: float = 1e-14
    # the best `polishStarts` starts get `polishIter` further iterations
    polishStarts: int = 4
    polishIter: int = 3000

    def __post_init__(self):
        if self.nStarts < 1 or self.maxIter < 1:
            raise ValueError("nStarts and maxIter must be at least 1")
        if self.polishStarts < 0 or self.polishIter < 0:
            raise ValueError("polish settings must be non-negative")
        if self.gradTolerance <= 0 or self.initScale <= 0 or self.stallTolerance <= 0:
            raise ValueError("tolerances and initScale must be positive")
        if self.gradientMode not in ("analytic", "finiteDifference"):
            raise ValueError(f"unknown gradient mode {self.gradientMode!r}")


@dataclass
class OptResult:
    minValue: float
    bestParams: LocalUnitaryParams
    perStartValues: np.ndarray
    converged: np.ndarray
    evaluations: int
    iterations: np.ndarray = field(repr=False, default=None)

    def to_json(self) -> dict:
        return {
            "minValue": self.minValue,
            "bestParams": {
                "thetaA": self.bestParams.thetaA.tolist(),
                "thetaB": self.bestParams.thetaB.tolist(),
            },
            "perStartValues": self.perStartValues.tolist(),
            "converged": self.converged.tolist(),
            "evaluations": self.evaluations,
        }


def initial_params(n: int, config: OptimizerConfig) -> np.ndarray:
    """Start 0 is the identity; start ``i > 0`` draws from substream ``(seed, i)``."""
    p = 2 * (n * n - 1)
    out = np.zeros((config.nStarts, p))
    for i in range(1, config.nStarts):
        rng = np.random.default_rng([config.seed, i])
        out[i] = rng.normal(0.0, config.initScale, size=p)
    return out


def _two_loop(g, s_hist, y_hist, rho, valid):
    """L-BFGS inverse-Hessian product for a batch; history newest last."""
    q = g.copy()
    m = s_hist.shape[1]
    alpha = np.zeros((g.shape[0], m))
    for i in range(m - 1, -1, -1):
        alpha[:, i] = np.where(valid[:, i], rho[:, i] * np.sum(s_hist[:, i] * q, axis=1), 0.0)
        q -= alpha[:, i, None] * y_hist[:, i]
    sy = np.sum(s_hist[:, -1] * y_hist[:, -1], axis=1)
    yy = np.sum(y_hist[:, -1] ** 2, axis=1)
    gamma = np.where(valid[:, -1], sy / np.where(yy > 0, yy, 1.0), 1.0)
    r = gamma[:, None] * q
    for i in range(m):
        beta = np.where(valid[:, i], rho[:, i] * np.sum(y_hist[:, i] * r, axis=1), 0.0)
        r += (alpha[:, i] - beta)[:, None] * s_hist[:, i]
    return r


def lbfgs_batch(fg, x0: np.ndarray, max_iter: int, gtol: float, memory: int = 10,
                stall_tol: float = 1e-14, c1: float = 1e-4, max_backtracks: int = 40):
    """Minimise independent problems row by row with L-BFGS and Armijo backtracking.

    ``fg(X)`` maps a ``(B, P)`` array to ``(values, grads)``.  A row stops when
    ``max|grad| < gtol``, when an accepted step lowers the value by less than
    ``stall_tol * max(1, |f|)``, when the line search cannot find a decrease,
    or after ``max_iter`` iterations.  The gradient of this objective bottoms
    out around 1e-8 in double precision, so the stall tests are the usual
    exit; every exit other than the iteration cap counts as converged.  Rows
    with a non-finite value are frozen and reported unconverged.

    Returns ``(x, f, converged, iterations, evaluations)``.
    """
    x = np.array(x0, dtype=float)
    b, p = x.shape
    f, g = fg(x)
    evals = b
    s_hist = np.zeros((b, memory, p))
    y_hist = np.zeros((b, memory, p))
    rho = np.zeros((b, memory))
    valid = np.zeros((b, memory), dtype=bool)
    converged = np.isfinite(f) & (np.max(np.abs(g), axis=1) < gtol)
    active = np.isfinite(f) & ~converged
    iters = np.zeros(b, dtype=int)

    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        gi = g[idx]
        d = -_two_loop(gi, s_hist[idx], y_hist[idx], rho[idx], valid[idx])
        slope = np.sum(gi * d, axis=1)
        bad = ~(slope < 0) | ~np.all(np.isfinite(d), axis=1)
        if bad.any():
            # curvature history gave no descent direction: restart from steepest descent
            d[bad] = -gi[bad]
            slope[bad] = -np.sum(gi[bad] ** 2, axis=1)
            valid[idx[bad]] = False
        # first step without history is scaled to unit length
        first = ~valid[idx].any(axis=1)
        step = np.where(first, 1.0 / np.maximum(1.0, np.linalg.norm(d, axis=1)), 1.0)

        new_x = np.empty((idx.size, p))
        new_f = np.full(idx.size, np.inf)
        new_g = np.empty((idx.size, p))
        accepted = np.zeros(idx.size, dtype=bool)
        trying = np.arange(idx.size)
        for _ls in range(max_backtracks):
            cand = x[idx[trying]] + step[trying, None] * d[trying]
            fv, gv = fg(cand)
            evals += trying.size
            ok = np.isfinite(fv) & (fv <= f[idx[trying]] + c1 * step[trying] * slope[trying])
            hit = trying[ok]
            new_x[hit], new_f[hit], new_g[hit] = cand[ok], fv[ok], gv[ok]
            accepted[hit] = True
            trying = trying[~ok]
            if trying.size == 0:
                break
            step[trying] *= 0.5

        stuck = idx[~accepted]
        active[stuck] = False
        iters[stuck] += 1

        hit = np.flatnonzero(accepted)
        rows = idx[hit]
        s_new = new_x[hit] - x[rows]
        y_new = new_g[hit] - g[rows]
        sy = np.sum(s_new * y_new, axis=1)
        keep = sy > 1e-12 * np.linalg.norm(s_new, axis=1) * np.linalg.norm(y_new, axis=1)
        upd = rows[keep]
        s_hist[upd] = np.roll(s_hist[upd], -1, axis=1)
        y_hist[upd] = np.roll(y_hist[upd], -1, axis=1)
        rho[upd] = np.roll(rho[upd], -1, axis=1)
        valid[upd] = np.roll(valid[upd], -1, axis=1)
        s_hist[upd, -1] = s_new[keep]
        y_hist[upd, -1] = y_new[keep]
        rho[upd, -1] = 1.0 / sy[keep]
        valid[upd, -1] = True

        decrease = f[rows] - new_f[hit]
        x[rows], f[rows], g[rows] = new_x[hit], new_f[hit], new_g[hit]
        iters[rows] += 1
        done = np.max(np.abs(g[rows]), axis=1) < gtol
        converged[rows[done]] = True
        stalled = decrease <= stall_tol * np.maximum(1.0, np.abs(f[rows]))
        active[rows[done | stalled]] = False

    converged |= np.isfinite(f) & ~active & (iters < max_iter)
    converged &= np.isfinite(f)
    return x, f, converged, iters, evals


def minimize(state, config: OptimizerConfig | None = None) -> OptResult:
    """Multi-start minimisation of the magic over local unitaries.

    Start 0 is the identity, so the result never exceeds the input's own
    magic; the remaining starts draw i.i.d. normal angles.  Every start runs
    up to ``maxIter`` iterations.  Minima of this objective are typically
    degenerate and L-BFGS approaches them slowly, so the ``polishStarts``
    lowest starts then continue for up to ``polishIter`` iterations with a
    fresh curvature history (set ``polishStarts=0`` for the plain protocol).
    """
    config = config or OptimizerConfig()
    x = _amplitudes(state)
    n = x.shape[0]
    x0 = initial_params(n, config)

    if config.gradientMode == "analytic":
        fg = lambda th: batch_value_and_grad(x, th)  # noqa: E731
    else:
        def fg(th):
            return batch_value_and_grad(x, th, with_grad=False)[0], _fd_gradient(x, th)

    params, values, conv, iters, evals = lbfgs_batch(
        fg, x0, config.maxIter, config.gradTolerance, config.memory, config.stallTolerance
    )
    if config.polishStarts and config.polishIter:
        ranked = np.argsort(np.where(np.isfinite(values), values, np.inf), kind="stable")
        top = np.sort(ranked[: config.polishStarts])
        top = top[np.isfinite(values[top])]
        if top.size:
            p2, v2, c2, it2, ev2 = lbfgs_batch(
                fg, params[top], config.polishIter, config.gradTolerance, config.memory,
                config.stallTolerance,
            )
            better = v2 <= values[top]
            rows = top[better]
            params[rows], values[rows] = p2[better], v2[better]
            conv[rows] = c2[better]
            iters[top] += it2
            evals += ev2
    finite = np.isfinite(values)
    if not finite.all():
        log.warning("%d start(s) hit a non-finite objective", int((~finite).sum()))
    conv = conv & finite
    best = int(np.argmin(np.where(finite, values, np.inf)))
    return OptResult(
        minValue=float(values[best]),
        bestParams=LocalUnitaryParams.from_flat(params[best], n),
        perStartValues=values,
        converged=conv,
        evaluations=int(evals),
        iterations=iters,
    )
