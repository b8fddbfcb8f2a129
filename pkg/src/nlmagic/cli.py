"""Command-line entry point: ``nlmagic <subcommand> ...``; results go to stdout as JSON."""
from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import scan as sc
from .closed_form import nlm_schmidt
from .invariants import SpectrumInvariants
from .lu_opt import OptimizerConfig, minimize
from .qudit import (PureBipartiteState, SchmidtSpectrum, apply_local_unitaries, load_json,
                    random_local_unitaries, schmidt_decompose, state_from_spectrum)

log = logging.getLogger("nlmagic")


def parse_lambdas(text: str) -> SchmidtSpectrum:
    lam = np.array([float(v) for v in text.split(",")])
    if np.any(lam < 0):
        raise ValueError("Schmidt coefficients must be non-negative")
    norm2 = float(np.sum(lam**2))
    if abs(norm2 - 1) > 1e-6:
        log.warning("sum lambda^2 = %.12g; renormalising", norm2)
    return SchmidtSpectrum.normalised(lam)


def _spectrum_arg(args) -> SchmidtSpectrum:
    if args.lam is not None:
        return parse_lambdas(args.lam)
    obj = load_json(args.spectrum)
    if isinstance(obj, PureBipartiteState):
        return schmidt_decompose(obj)[0]
    return obj


def _emit(obj):
    json.dump(obj, sys.stdout, indent=2)
    sys.stdout.write("\n")


def cmd_invariants(args):
    _emit(SpectrumInvariants.of(_spectrum_arg(args)).to_json())


def cmd_nlm(method):
    def run(args):
        _emit(nlm_schmidt(_spectrum_arg(args), method=method).to_json())
    return run


def cmd_optimize(args):
    spec = None
    if args.lam is not None:
        spec = parse_lambdas(args.lam)
        state = state_from_spectrum(spec)
    else:
        obj = load_json(args.state)
        if isinstance(obj, SchmidtSpectrum):
            spec, state = obj, state_from_spectrum(obj)
        else:
            state = obj
            spec = schmidt_decompose(state)[0]
    if args.scramble_seed is not None:
        u_a, u_b = random_local_unitaries(state.dim, np.random.default_rng(args.scramble_seed))
        state = apply_local_unitaries(state, u_a, u_b)
    config = OptimizerConfig(
        nStarts=args.starts, maxIter=args.maxiter, seed=args.seed, initScale=args.init_scale,
        gradientMode="analytic" if args.grad == "analytic" else "finiteDifference",
        polishStarts=args.polish_starts, polishIter=args.polish_iter,
    )
    res = minimize(state, config)
    out = res.to_json()
    if spec is not None and spec.dim <= 5:
        formula = nlm_schmidt(spec).value
        out["mFormula"] = formula
        out["residual"] = formula - res.minValue
    _emit(out)


def _progress(i, total, rec):
    log.info("sample %d/%d  residual %.3e", i, total, rec.residual)


def cmd_scan(args):
    n = args.dim
    samples = args.samples
    starts = args.starts
    if args.full_scale:
        samples = samples or sc.FULL_SCALE_SAMPLES
        starts = starts or sc.FULL_SCALE_STARTS[n]
    samples = samples or sc.DESK_SAMPLES[n]
    starts = starts or sc.FULL_SCALE_STARTS[n]
    config = OptimizerConfig(nStarts=starts, maxIter=args.maxiter, initScale=args.init_scale,
                             polishStarts=args.polish_starts, polishIter=args.polish_iter)
    records = sc.run_scan(n, samples, config, master_seed=args.seed, out=args.out,
                          workers=args.workers, progress=_progress)
    _emit(sc.residual_stats(records, args.threshold))


def cmd_grid(which):
    def run(args):
        pts = (sc.simplex_grid_qutrit if which == 3 else sc.ququint_slice_grid)(args.resolution)
        sc.write_grid_csv(pts, args.out)
        best = max(pts, key=lambda p: p.m)
        _emit({"points": len(pts), "maxM": best.m, "argmaxProbs": list(best.probs)})
    return run


def cmd_slice4(args):
    records = sc.read_scan_csv(args.inp)
    for r in records:
        r.check()
    centers = [float(c) for c in args.centers.split(",")]
    slices = sc.n4_band_slices(records, centers, args.halfwidth)
    paths = sc.write_band_slices(slices, args.out_prefix)
    _emit({str(p): len(rows) for p, rows in zip(paths, slices.values())})


def cmd_stats(args):
    records = sc.read_scan_csv(args.inp)
    for r in records:
        r.check()
    _emit(sc.residual_stats(records, args.threshold))


def cmd_maxsearch(args):
    value, probs = sc.maximize_nlm(args.dim, args.active, args.resolution)
    _emit({"maxM": value, "probs": probs.tolist()})


def _polish_args(sp):
    sp.add_argument("--polish-starts", type=int, default=4,
                    help="lowest starts that get extra iterations (0 disables)")
    sp.add_argument("--polish-iter", type=int, default=3000)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nlmagic", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def spectrum_source(sp, name="spectrum"):
        g = sp.add_mutually_exclusive_group(required=True)
        g.add_argument(f"--{name}", metavar="FILE", help="JSON spectrum or state file")
        g.add_argument("--lambda", dest="lam", metavar="LIST",
                       help="comma-separated Schmidt coefficients")

    sp = sub.add_parser("invariants", help="power sums, determinant and anti-flatness")
    spectrum_source(sp)
    sp.set_defaults(func=cmd_invariants)

    for name, method in (("nlm-formula", "closedForm"), ("nlm-oracle", "oracle")):
        sp = sub.add_parser(name, help=f"Schmidt-attained NLM ({method})")
        spectrum_source(sp)
        sp.set_defaults(func=cmd_nlm(method))

    sp = sub.add_parser("nlm-optimize", help="multi-start minimisation over local unitaries")
    spectrum_source(sp, "state")
    sp.add_argument("--starts", type=int, default=50)
    sp.add_argument("--maxiter", type=int, default=300)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--init-scale", type=float, default=1.0)
    sp.add_argument("--grad", choices=("analytic", "fd"), default="analytic")
    sp.add_argument("--scramble-seed", type=int, default=None,
                    help="apply Haar-random local unitaries before optimising")
    _polish_args(sp)
    sp.set_defaults(func=cmd_optimize)

    sp = sub.add_parser("scan", help="formula vs numerical residual scan")
    sp.add_argument("--dim", type=int, required=True, choices=(2, 3, 4, 5))
    sp.add_argument("--samples", type=int, default=None)
    sp.add_argument("--starts", type=int, default=None)
    sp.add_argument("--maxiter", type=int, default=300)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--init-scale", type=float, default=1.0)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--threshold", type=float, default=0.01)
    sp.add_argument("--full-scale", action="store_true",
                    help="10^4 samples with the published per-N start counts")
    _polish_args(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_scan)

    for name, which in (("grid3", 3), ("grid5-slice", 5)):
        sp = sub.add_parser(name, help="simplex landscape grid")
        sp.add_argument("--resolution", type=int, required=True)
        sp.add_argument("--out", required=True)
        sp.set_defaults(func=cmd_grid(which))

    sp = sub.add_parser("slice4", help="N=4 residual band slices")
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--centers", default="0,0.2,0.4,0.6")
    sp.add_argument("--halfwidth", type=float, default=0.02)
    sp.add_argument("--out-prefix", required=True)
    sp.set_defaults(func=cmd_slice4)

    sp = sub.add_parser("stats", help="residual statistics of a scan CSV")
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--threshold", type=float, default=0.01)
    sp.set_defaults(func=cmd_stats)

    sp = sub.add_parser("maxsearch", help="largest Schmidt-attained NLM over spectra")
    sp.add_argument("--dim", type=int, required=True, choices=(2, 3, 4, 5))
    sp.add_argument("--active", type=int, default=None,
                    help="restrict to spectra supported on the first ACTIVE slots")
    sp.add_argument("--resolution", type=int, default=30)
    sp.set_defaults(func=cmd_maxsearch)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ValueError, sc.InvariantViolation, OSError) as exc:
        log.error("%s", exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
