"""Formula-versus-optimiser scans, residual statistics and simplex landscape data.

CSV files written here are schema-stable: fixed column order, a header row and
every float printed with 17 significant digits, so identical seeds give
byte-identical files.
"""
from __future__ import annotations

import csv
import dataclasses
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import minimize as scipy_minimize

from .closed_form import nlm_schmidt, nlm_value
from .lu_opt import OptimizerConfig, minimize
from .qudit import SchmidtSpectrum, state_from_spectrum

log = logging.getLogger(__name__)

MASK64 = (1 << 64) - 1
SQRT3_2 = math.sqrt(3) / 2

# per-N defaults: desk-scale sample counts, and the start counts of the published scans
DESK_SAMPLES = {2: 50, 3: 100, 4: 200, 5: 20}
FULL_SCALE_STARTS = {2: 50, 3: 50, 4: 200, 5: 500}
FULL_SCALE_SAMPLES = 10_000


class InvariantViolation(RuntimeError):
    pass


def fmt(v) -> str:
    return format(float(v), ".17g")


def splitmix64(i: int) -> int:
    z = (int(i) + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def sample_seed(master_seed: int, index: int) -> int:
    return (int(master_seed) & MASK64) ^ splitmix64(index)


def sample_spectrum(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform draw from the positive orthant of the unit sphere, unsorted.

    Wrap the result in :class:`SchmidtSpectrum` for the sorted view.
    """
    if n < 2:
        raise ValueError("need N >= 2")
    v = np.abs(rng.standard_normal(n))
    return v / np.linalg.norm(v)


@dataclass(frozen=True)
class ScanRecord:
    dim: int
    lambdas: tuple
    mFormula: float
    mNumerical: float
    residual: float
    nStarts: int
    maxIter: int
    converged: float
    seed: int

    def check(self):
        if abs(self.residual - (self.mFormula - self.mNumerical)) > 1e-12:
            raise InvariantViolation(f"residual mismatch in record with seed {self.seed}")
        if not 0.0 <= self.converged <= 1.0:
            raise InvariantViolation(f"converged fraction {self.converged} outside [0, 1]")
        if len(self.lambdas) != self.dim:
            raise InvariantViolation("lambda count does not match dim")
        lam = np.asarray(self.lambdas)
        if np.any(lam < 0) or abs(np.sum(lam**2) - 1) > 1e-12:
            raise InvariantViolation(f"record with seed {self.seed} has an invalid spectrum")


def scan_header(n: int) -> list[str]:
    return (["dim"] + [f"lambda_{i}" for i in range(n)]
            + ["m_formula", "m_numerical", "residual", "n_starts", "max_iter",
               "converged_fraction", "seed"])


def scan_one(n: int, index: int, master_seed: int, config: OptimizerConfig) -> ScanRecord:
    seed = sample_seed(master_seed, index)
    rng = np.random.default_rng(seed)
    lam = sample_spectrum(n, rng)
    m_formula = nlm_schmidt(lam).value
    cfg = dataclasses.replace(config, seed=seed)
    opt = minimize(state_from_spectrum(lam), cfg)
    return ScanRecord(
        dim=n,
        lambdas=tuple(float(v) for v in lam),
        mFormula=m_formula,
        mNumerical=opt.minValue,
        residual=m_formula - opt.minValue,
        nStarts=cfg.nStarts,
        maxIter=cfg.maxIter,
        converged=float(np.mean(opt.converged)),
        seed=seed,
    )


def _scan_job(args):
    return scan_one(*args)


def run_scan(n: int, num_samples: int, config: OptimizerConfig, master_seed: int = 0,
             out=None, workers: int = 1, progress=None) -> list[ScanRecord]:
    """Sample spectra, compare the closed form with direct minimisation, optionally write CSV.

    ``config.seed`` is ignored: each sample uses ``master_seed ^ splitmix64(index)``
    for both its spectrum and its optimiser starts, so any subset of indices
    reproduces the same rows.
    """
    if n not in (2, 3, 4, 5):
        raise ValueError(f"scans use the closed form, available for N in 2..5, not {n}")
    jobs = [(n, i, master_seed, config) for i in range(num_samples)]
    records: list[ScanRecord] = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for rec in pool.map(_scan_job, jobs):
                records.append(rec)
                if progress:
                    progress(len(records), num_samples, rec)
    else:
        for job in jobs:
            records.append(_scan_job(job))
            if progress:
                progress(len(records), num_samples, records[-1])
    for rec in records:
        rec.check()
    if out is not None:
        write_scan_csv(records, out)
    return records


def write_scan_csv(records, path):
    if not records:
        raise ValueError("no records to write")
    n = records[0].dim
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(scan_header(n))
        for r in records:
            w.writerow([r.dim, *map(fmt, r.lambdas), fmt(r.mFormula), fmt(r.mNumerical),
                        fmt(r.residual), r.nStarts, r.maxIter, fmt(r.converged), r.seed])


def read_scan_csv(path) -> list[ScanRecord]:
    records = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            n = int(row["dim"])
            records.append(ScanRecord(
                dim=n,
                lambdas=tuple(float(row[f"lambda_{i}"]) for i in range(n)),
                mFormula=float(row["m_formula"]),
                mNumerical=float(row["m_numerical"]),
                residual=float(row["residual"]),
                nStarts=int(row["n_starts"]),
                maxIter=int(row["max_iter"]),
                converged=float(row["converged_fraction"]),
                seed=int(row["seed"]),
            ))
    return records


def residual_stats(records, threshold: float = 0.01) -> dict:
    """Summary of residuals; ``records`` may also be a plain sequence of residuals."""
    res = np.array([r.residual if isinstance(r, ScanRecord) else float(r) for r in records])
    if res.size == 0:
        raise ValueError("residual_stats needs at least one record")
    absres = np.abs(res)
    return {
        "count": int(res.size),
        "meanAbs": float(absres.mean()),
        "stdAbs": float(absres.std()),
        "fractionBelowThreshold": float(np.mean(res < threshold)),
        "threshold": threshold,
        "maxResidual": float(res.max()),
        "negativeCount": int(np.sum(res < 0)),
    }


# -- simplex landscapes ------------------------------------------------------

@dataclass(frozen=True)
class GridPoint:
    x: float
    y: float
    probs: tuple
    m: float


def simplex_xy(p0, p1, p2):
    """Cartesian position of Schmidt probabilities on the equilateral triangle."""
    return p1 + 0.5 * p2, SQRT3_2 * p2


def simplex_lattice(resolution: int) -> np.ndarray:
    """All ``(i, j, k) / R`` with ``i + j + k = R``, in a fixed order."""
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    pts = [(i, j, resolution - i - j)
           for i in range(resolution + 1) for j in range(resolution + 1 - i)]
    return np.array(pts, dtype=float) / resolution


def _grid(probs3: np.ndarray, n: int) -> list[GridPoint]:
    probs = np.zeros((len(probs3), n))
    probs[:, :3] = probs3
    m = nlm_value(np.sqrt(probs))
    x, y = simplex_xy(probs3[:, 0], probs3[:, 1], probs3[:, 2])
    return [GridPoint(float(xi), float(yi), tuple(map(float, p)), float(mi))
            for xi, yi, p, mi in zip(x, y, probs, m)]


def simplex_grid_qutrit(resolution: int) -> list[GridPoint]:
    return _grid(simplex_lattice(resolution), 3)


def ququint_slice_grid(resolution: int) -> list[GridPoint]:
    """Slice ``(p0, p1, p2, 0, 0)`` of the N=5 probability simplex."""
    return _grid(simplex_lattice(resolution), 5)


def write_grid_csv(points: list[GridPoint], path):
    n = len(points[0].probs)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", *[f"p{i}" for i in range(n)], "m"])
        for pt in points:
            if abs(sum(pt.probs) - 1) > 1e-12:
                raise InvariantViolation(f"grid probabilities {pt.probs} do not sum to 1")
            w.writerow([fmt(pt.x), fmt(pt.y), *map(fmt, pt.probs), fmt(pt.m)])


# -- N=4 residual slices -----------------------------------------------------

SLICE_CENTERS = (0.0, 0.2, 0.4, 0.6)
SLICE_HEADER = ["x", "y", "q0", "q1", "q2", "p3", "residual"]


def n4_band_slices(records, centers=SLICE_CENTERS, halfwidth: float = 0.02) -> dict:
    """Rows ``[x, y, q0, q1, q2, p3, residual]`` for records with ``|p3 - center| <= halfwidth``.

    ``p3`` is the last Schmidt probability of each record as sampled; the other
    three are renormalised by ``1 - p3`` onto the triangle.
    """
    out = {}
    for c in centers:
        rows = []
        for r in records:
            if r.dim != 4:
                raise ValueError("band slices need records from an N=4 scan")
            p = np.asarray(r.lambdas) ** 2
            if abs(p[3] - c) > halfwidth:
                continue
            q = p[:3] / (1.0 - p[3])
            x, y = simplex_xy(*q)
            rows.append([x, y, *q, p[3], r.residual])
        if not rows:
            log.warning("band |p3 - %g| <= %g contains no records", c, halfwidth)
        out[c] = rows
    return out


def write_band_slices(slices: dict, prefix) -> list[Path]:
    paths = []
    for c, rows in slices.items():
        path = Path(f"{prefix}_{c:g}.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SLICE_HEADER)
            for row in rows:
                w.writerow([fmt(v) for v in row])
        paths.append(path)
    return paths


# -- extremal search ---------------------------------------------------------

def maximize_nlm(n: int, active: int | None = None, resolution: int = 60,
                 n_refine: int = 5) -> tuple[float, np.ndarray]:
    """Largest Schmidt-attained NLM over spectra supported on the first ``active`` slots.

    A simplex lattice over the active probabilities is scanned first; the best
    ``n_refine`` lattice points then seed Nelder-Mead on ``lambda = |v| / ||v||``,
    which reaches the simplex boundary without constraints.
    Returns ``(value, probabilities)``.
    """
    active = n if active is None else active
    if not 2 <= active <= n:
        raise ValueError("active must be between 2 and N")
    lattice = _lattice_nd(active, resolution)
    probs = np.zeros((len(lattice), n))
    probs[:, :active] = lattice
    m = nlm_value(np.sqrt(probs))
    order = np.argsort(-m, kind="stable")[:n_refine]

    def neg(v):
        lam = np.zeros(n)
        lam[:active] = np.abs(v)
        norm = np.linalg.norm(lam)
        if norm == 0:
            return 0.0
        return -float(nlm_value(lam / norm))

    best_val, best_p = -np.inf, None
    for i in order:
        v0 = np.sqrt(lattice[i])
        res = scipy_minimize(neg, v0, method="Nelder-Mead",
                             options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 20000})
        for val, v in ((-res.fun, res.x), (m[i], v0)):
            if val > best_val:
                lam = np.abs(v) / np.linalg.norm(v)
                best_val, best_p = val, lam**2
    p = np.zeros(n)
    p[:active] = best_p
    return float(best_val), p


def _lattice_nd(k: int, resolution: int) -> np.ndarray:
    """Compositions of ``resolution`` into ``k`` non-negative parts, scaled to sum 1."""
    def rec(remaining, parts):
        if parts == 1:
            yield (remaining,)
            return
        for i in range(remaining + 1):
            for tail in rec(remaining - i, parts - 1):
                yield (i, *tail)

    return np.array(list(rec(resolution, k)), dtype=float) / resolution


def spectrum_of(record: ScanRecord) -> SchmidtSpectrum:
    return SchmidtSpectrum.normalised(record.lambdas)
