"""Command-line interface.

Exit codes: 0 success, 1 error, 2 infeasible, 3 validation failure,
64 usage error. ``LURE_CERT_SOLVER_TOL`` overrides the solver tolerance.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__, benchmarks, certify, lti
from .errors import FingerprintMismatch, LureCertError, NoFeasiblePoint, ValidationFailed
from .lmi import PerformancePlant
from .sdp import SolverSettings

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE, EXIT_VALIDATION, EXIT_USAGE = 0, 1, 2, 3, 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def solver_settings() -> SolverSettings:
    tol = os.environ.get("LURE_CERT_SOLVER_TOL")
    return SolverSettings(tol=float(tol)) if tol else SolverSettings()


def _load_plant_file(path):
    with open(path) as fh:
        d = json.load(fh)
    return lti.plant_from_dict(d), d


def _method_kw(args) -> dict:
    kw = {"settings": solver_settings()}
    if args.method == "zf":
        kw["n_b"], kw["n_f"] = args.nb, args.nf
    if getattr(args, "p_zero", False):
        kw["fix_p_zero"] = True
    return kw


def _ell(args) -> int:
    if args.ell is not None:
        return args.ell
    if args.method == "zf" and (args.nb is not None or args.nf is not None):
        return max(args.nb or 0, args.nf or 0)
    raise LureCertError("--ell is required")


def cmd_certify(args) -> int:
    G, _ = _load_plant_file(args.plant)
    res = certify.certify_alpha(G, args.alpha, _ell(args), args.method, **_method_kw(args))
    if not res.feasible:
        print(f"infeasible alpha={args.alpha} status={res.status} {res.detail}".rstrip())
        return EXIT_INFEASIBLE
    res.save(args.out)
    print(f"feasible alpha={args.alpha} ell={res.ell} method={res.method} "
          f"worst_residual={res.residual_summary['worst']:.3e} certificate={args.out}")
    return EXIT_OK


def cmd_maximize(args) -> int:
    G, _ = _load_plant_file(args.plant)
    try:
        a, cert = certify.maximize_alpha(G, _ell(args), lo=args.lo, hi=args.hi, tol=args.tol,
                                         method=args.method, **_method_kw(args))
    except NoFeasiblePoint as exc:
        print(f"infeasible: {exc}")
        return EXIT_INFEASIBLE
    cert.save(args.out)
    print(f"alpha*={a:.6f} ell={cert.ell} method={cert.method} certificate={args.out}")
    return EXIT_OK


def _bench_row(case: benchmarks.BenchmarkCase, method: str, settings) -> dict:
    t0 = time.perf_counter()
    if method == "zf":
        n_b, n_f = case.nb_nf
        ell = max(n_b, n_f)
        a, _ = certify.maximize_alpha(case.tf, ell, method="zf", n_b=n_b, n_f=n_f, settings=settings)
    else:
        n_b = n_f = None
        ell = case.ell
        a, _ = certify.maximize_alpha(case.tf, ell, settings=settings)
    return {
        "example": case.id, "method": method, "alpha": round(a, 6), "expected": case.alpha,
        "ell": ell, "n_b": n_b, "n_f": n_f, "tol": case.tol,
        "pass": abs(a - case.alpha) <= case.tol, "seconds": round(time.perf_counter() - t0, 3),
    }


BENCH_FIELDS = ["example", "method", "alpha", "expected", "ell", "n_b", "n_f", "tol", "pass", "seconds"]


def cmd_bench(args) -> int:
    ids = sorted(benchmarks.CASES) if not args.examples else args.examples
    unknown = [i for i in ids if i not in benchmarks.CASES]
    if unknown:
        raise LureCertError(f"unknown examples {unknown}")
    methods = ["lifting", "zf"] if args.method == "both" else [args.method]
    jobs = [(benchmarks.CASES[i], m) for i in ids for m in methods]
    settings = solver_settings()
    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        rows = list(pool.map(lambda j: _bench_row(j[0], j[1], settings), jobs))
    rows.sort(key=lambda r: (r["example"], methods.index(r["method"])))
    if args.format == "json":
        print(json.dumps(rows, indent=1))
    elif args.format == "csv":
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=BENCH_FIELDS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        print(buf.getvalue(), end="")
    else:
        for r in rows:
            taps = f" (n_b,n_f)=({r['n_b']},{r['n_f']})" if r["method"] == "zf" else ""
            print(f"Ex{r['example']} {r['method']:<7} alpha={r['alpha']:.4f} expected={r['expected']:.4f} "
                  f"ell={r['ell']}{taps} {'PASS' if r['pass'] else 'FAIL'} ({r['seconds']:.2f}s)")
        print(f"{sum(r['pass'] for r in rows)}/{len(rows)} within tolerance")
    return EXIT_OK if all(r["pass"] for r in rows) else EXIT_VALIDATION


def cmd_validate(args) -> int:
    G, _ = _load_plant_file(args.plant)
    cert = certify.Certificate.load(args.cert)
    try:
        rep = certify.validate_certificate(
            G, cert, tol=args.tol, trajectories=args.trajectories, cone_tol=args.cone_tol,
            seed=args.seed, T=args.steps,
        )
    except FingerprintMismatch as exc:
        print(f"FAIL fingerprint: {exc}")
        return EXIT_VALIDATION
    except ValidationFailed as exc:
        print(f"FAIL {exc.label}: {exc.value:.3e}")
        return EXIT_VALIDATION
    print(f"PASS worst_residual={rep.residual_worst:.3e} ({rep.residual_label}) "
          f"trajectories={rep.trajectories}")
    return EXIT_OK


def cmd_rate(args) -> int:
    G, _ = _load_plant_file(args.plant)
    try:
        rho, cert = certify.minimize_rate(G, args.alpha, args.ell, tol=args.rho_tol,
                                          settings=solver_settings())
    except NoFeasiblePoint as exc:
        print(f"infeasible: {exc}")
        return EXIT_INFEASIBLE
    if args.out:
        cert.save(args.out)
    print(f"rho*={rho:.6f}")
    return EXIT_OK


def _performance_plant(G, d: dict) -> PerformancePlant:
    """Performance channel from the plant file's ``performance`` entry.

    Defaults: ``w`` enters like ``u`` (``Bw = B``) and ``z = y`` without
    feedthrough.
    """
    ss = lti.realize(G)
    perf = d.get("performance", {})
    Bw = np.asarray(perf.get("Bw", ss.B[:, 0]), dtype=float)
    Cz = np.asarray(perf.get("Cz", ss.C[0]), dtype=float)
    r = np.atleast_2d(Cz).shape[0] if Cz.ndim > 1 else 1
    q = np.atleast_2d(Bw.reshape(ss.n, -1)).shape[1]
    Dzu = perf.get("Dzu", np.full(r, ss.D))
    Dzw = perf.get("Dzw", np.zeros((r, q)))
    return PerformancePlant(ss, Bw, Cz, Dzu, Dzw)


def cmd_gain(args) -> int:
    G, d = _load_plant_file(args.plant)
    pp = _performance_plant(G, d)
    try:
        g = certify.l2_gain(pp, args.alpha, args.ell, nonlinearity=not args.no_nonlinearity,
                            lo=args.gamma_lo, hi=args.gamma_hi, tol=args.tol,
                            state_weight=args.state_weight, settings=solver_settings())
    except NoFeasiblePoint as exc:
        print(f"infeasible: {exc}")
        return EXIT_INFEASIBLE
    print(f"gamma*={g:.6f}")
    return EXIT_OK


def cmd_h2(args) -> int:
    G, d = _load_plant_file(args.plant)
    pp = _performance_plant(G, d)
    try:
        g = certify.h2_bound(pp, args.alpha, args.ell, Sigma=args.sigma,
                             nonlinearity=not args.no_nonlinearity, lo=args.gamma_lo,
                             hi=args.gamma_hi, tol=args.tol, settings=solver_settings())
    except NoFeasiblePoint as exc:
        print(f"infeasible: {exc}")
        return EXIT_INFEASIBLE
    print(f"gamma*={g:.6f}")
    return EXIT_OK


def _example_list(s: str):
    try:
        return [int(x) for x in s.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}") from None


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="lure-cert", description="Absolute-stability certificates for Lur'e systems.")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def method_flags(p):
        p.add_argument("--method", choices=["lifting", "zf"], default="lifting")
        p.add_argument("--nb", type=int, default=None, help="causal Zames-Falb taps")
        p.add_argument("--nf", type=int, default=None, help="anticausal Zames-Falb taps")
        p.add_argument("--p-zero", action="store_true", help="constrain p = 0")

    p = sub.add_parser("certify", help="test one sector bound")
    p.add_argument("--plant", required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--ell", type=int)
    p.add_argument("--out", default="certificate.json")
    method_flags(p)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("maximize", help="bisection for the largest sector bound")
    p.add_argument("--plant", required=True)
    p.add_argument("--ell", type=int)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--lo", type=float, default=1e-3)
    p.add_argument("--hi", type=float, default=1.0)
    p.add_argument("--out", default="certificate.json")
    method_flags(p)
    p.set_defaults(func=cmd_maximize)

    p = sub.add_parser("bench", help="reproduce the benchmark table")
    p.add_argument("--examples", type=_example_list, default=None)
    p.add_argument("--method", choices=["both", "lifting", "zf"], default="lifting")
    p.add_argument("--format", choices=["text", "csv", "json"], default="text")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("validate", help="re-check a certificate")
    p.add_argument("--plant", required=True)
    p.add_argument("--cert", required=True)
    p.add_argument("--trajectories", type=int, default=100)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--cone-tol", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("rate", help="smallest certified exponential rate")
    p.add_argument("--plant", required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--ell", type=int, required=True)
    p.add_argument("--rho-tol", type=float, default=1e-4)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_rate)

    for name, func, helptext in (("gain", cmd_gain, "robust l2 gain"), ("h2", cmd_h2, "robust H2 bound")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--plant", required=True)
        p.add_argument("--alpha", type=float, default=0.0)
        p.add_argument("--ell", type=int, default=0)
        p.add_argument("--gamma-lo", type=float, default=0.0)
        p.add_argument("--gamma-hi", type=float, default=1.0)
        p.add_argument("--tol", type=float, default=1e-4)
        p.add_argument("--no-nonlinearity", action="store_true")
        if name == "h2":
            p.add_argument("--sigma", type=float, default=1.0)
        else:
            p.add_argument("--state-weight", type=float, default=1.0,
                           help="coefficient of ||xi||^2 in the positivity constraint")
        p.set_defaults(func=func)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (LureCertError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
