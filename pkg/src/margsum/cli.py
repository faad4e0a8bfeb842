"""
Command-line front end.

Exit codes: 0 success, 1 a verification failed, 2 usage or input error.
``MM_THREADS`` caps the worker threads of grid searches.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import __version__
from .copula import (
    ConstGamma,
    CopulaError,
    CopulaSpec,
    SignedEpsilon,
    default_gamma,
    univariate_only_epsilon,
    sample_theta,
)
from .density import DensityError, ExpansionDensitySpec, kappa_max, preset
from .expansion import ExpansionError
from .marginals import MarginalDescriptor, MarginalError
from .matcher import MatchError, balanced_normal_copula, recombine, sample_matched
from .meixner import MeixnerError
from .reports import (
    poly_check,
    sample_expansion,
    verify_copula,
    verify_expansion,
    verify_match,
    verify_similar,
)
from .similar import SimilarError, wedge_normals
from .verify import DEFAULT_SEED, VerificationReport, VerifyError

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
PRESET_NAMES = ("stoyanov", "example3", "example4", "example5:d", "example8:d", "theorem6-normals")
INPUT_ERRORS = (CopulaError, DensityError, ExpansionError, MarginalError, MatchError, MeixnerError, SimilarError,
                VerifyError, ValueError, KeyError, OSError)


class UsageError(Exception):
    """Bad arguments or unreadable input."""


# -- output helpers --------------------------------------------------------------------


def _write(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _csv_rows(header: Sequence[str], rows: np.ndarray) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in np.atleast_2d(rows) if len(rows) else []:
        writer.writerow([format(float(v), ".17g") for v in row])
    return buf.getvalue()


def _dump_json(data: dict) -> str:
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def _emit_report(rep: VerificationReport, args, extra: Optional[dict] = None) -> int:
    if args.emit == "csv":
        _write(rep.to_csv(), args.out)
    else:
        data = rep.to_dict()
        if extra:
            data.update(extra)
        _write(_dump_json(data), args.out)
    return EXIT_OK if rep.passed else EXIT_FAIL


def _load_json(path: Optional[str]) -> dict:
    if not path:
        raise UsageError("--spec PATH is required")
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"no such file: {path}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"malformed JSON in {path}: {exc}") from None


def _spec_kind(data: dict) -> str:
    if "H" in data:
        return "expansion"
    if "epsilon" in data:
        return "copula"
    raise UsageError("spec is neither an expansion density (needs 'H') nor a copula (needs 'epsilon')")


def _kappa_arg(text: Optional[str]):
    if text is None or text == "auto":
        return text
    try:
        value = float(text)
    except ValueError:
        raise UsageError(f"--kappa must be 'auto' or a number, got {text!r}") from None
    if not (value >= 0 and math.isfinite(value)):
        raise UsageError("--kappa must be finite and nonnegative")
    return value


def _marginals(args, d: int) -> List[MarginalDescriptor]:
    texts = args.marginal or ["normal:0,1"]
    if len(texts) == 1:
        texts = texts * d
    if len(texts) != d:
        raise UsageError(f"give one --marginal or exactly {d}")
    return [MarginalDescriptor.parse(t) for t in texts]


def _parse_preset(name: str):
    base, _, arg = name.partition(":")
    if base in ("example5", "example8"):
        try:
            d = int(arg) if arg else (3 if base == "example5" else 2)
        except ValueError:
            raise UsageError(f"bad dimension in preset {name!r}") from None
        if d < 2:
            raise UsageError("preset dimension must be at least 2")
        return base, d
    if arg or base not in ("stoyanov", "example3", "example4", "theorem6-normals"):
        raise UsageError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}")
    return base, 2


# -- subcommands -----------------------------------------------------------------------


def cmd_poly(args) -> int:
    if args.action != "check":
        raise UsageError("only 'poly check' is available")
    return _emit_report(poly_check(seed=args.seed), args)


def _expansion_from_args(args) -> ExpansionDensitySpec:
    kappa = _kappa_arg(args.kappa)
    if args.spec:
        spec = ExpansionDensitySpec.from_dict(_load_json(args.spec))
        if kappa == "auto":
            spec = spec.with_kappa(kappa_max(spec))
        elif kappa is not None:
            spec = spec.with_kappa(kappa)
        return spec
    if not args.preset:
        raise UsageError("give --preset NAME or --spec PATH")
    name, d = _parse_preset(args.preset)
    if name not in ("stoyanov", "example3", "example4", "example5"):
        raise UsageError(f"{args.preset!r} is not an expansion preset")
    return preset(name, shrink=args.shrink, kappa="auto" if kappa is None else kappa, d=d)


def cmd_build_expansion(args) -> int:
    spec = _expansion_from_args(args)
    _write(_dump_json(spec.to_dict()), args.out)
    return EXIT_OK


def _copula_from_args(args) -> CopulaSpec:
    if args.spec:
        return CopulaSpec.from_dict(_load_json(args.spec))
    eps = SignedEpsilon(args.d) if args.epsilon == "signed" else univariate_only_epsilon(args.d)
    if args.gamma == "auto":
        gam = default_gamma(eps)
    else:
        try:
            gam = ConstGamma(float(args.gamma))
        except ValueError:
            raise UsageError(f"--gamma must be 'auto' or a number, got {args.gamma!r}") from None
    return CopulaSpec(args.d, eps, gam)


def cmd_build_copula(args) -> int:
    spec = _copula_from_args(args)
    _write(_dump_json(spec.to_dict()), args.out)
    return EXIT_OK


def cmd_match(args) -> int:
    spec = CopulaSpec.from_dict(_load_json(args.copula))
    marg = _marginals(args, spec.d)
    if args.emit == "density-grid":
        if spec.d != 2:
            raise UsageError("density-grid output is bivariate only")
        axes = []
        for phi in marg:
            lo, hi = phi.quantile(1e-4), phi.quantile(1 - 1e-4)
            axes.append(np.linspace(float(lo), float(hi), args.grid))
        a, b = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([a, b], -1).reshape(-1, 2)
        dens = recombine(spec, marg, pts)
        _write(_csv_rows(["x1", "x2", "density"], np.column_stack([pts, dens])), args.out)
        return EXIT_OK
    y = sample_matched(spec, marg, args.n, args.seed)
    _write(_csv_rows([f"y{k + 1}" for k in range(spec.d)], y), args.out)
    return EXIT_OK


def cmd_verify(args) -> int:
    data = _load_json(args.spec)
    if _spec_kind(data) == "expansion":
        return _emit_report(verify_expansion(ExpansionDensitySpec.from_dict(data), grid=args.grid, seed=args.seed,
                                             n=args.n), args)
    spec = CopulaSpec.from_dict(data)
    if args.marginal:
        return _emit_report(verify_match(spec, _marginals(args, spec.d), n=args.n, seed=args.seed, grid=args.grid), args)
    return _emit_report(verify_copula(spec, n=args.n, seed=args.seed), args)


def cmd_sample(args) -> int:
    data = _load_json(args.spec)
    if _spec_kind(data) == "expansion":
        spec = ExpansionDensitySpec.from_dict(data)
        x = sample_expansion(spec, args.n, args.seed).samples
        _write(_csv_rows([f"x{k + 1}" for k in range(spec.d)], x), args.out)
        return EXIT_OK
    spec = CopulaSpec.from_dict(data)
    u = sample_theta(spec, args.n, args.seed)
    _write(_csv_rows([f"u{k + 1}" for k in range(spec.d)], u), args.out)
    return EXIT_OK


def cmd_preset(args) -> int:
    name, d = _parse_preset(args.name)
    kappa = _kappa_arg(args.kappa)
    if name in ("stoyanov", "example3", "example4", "example5"):
        spec = preset(name, shrink=args.shrink, kappa="auto" if kappa is None else kappa, d=d)
        if not args.verify:
            _write(_dump_json(spec.to_dict()), args.out)
            return EXIT_OK
        rep = verify_expansion(spec, grid=args.grid, seed=args.seed, n=args.n)
        if name == "stoyanov":
            kmax = kappa_max(spec)
            rep.add("kappa_max equals e^2/8", "constant", abs(kmax - math.e ** 2 / 8), 1e-3, "grid search + Nelder-Mead")
        return _emit_report(rep, args, {"preset": args.name, "kappa": spec.kappa})
    if name == "example8":
        spec, marg = balanced_normal_copula(d)
        if not args.verify:
            out = {"copula": spec.to_dict(), "marginals": [m.to_dict() for m in marg]}
            _write(_dump_json(out), args.out)
            return EXIT_OK
        return _emit_report(verify_match(spec, marg, n=args.n, seed=args.seed, grid=args.grid), args,
                            {"preset": args.name})
    con = wedge_normals()
    if not args.verify:
        out = {
            "marginals": [con.phi1.to_dict(), con.phi2.to_dict()],
            "gamma": {"form": "wedge", "value": con.gamma.value, "lo": con.gamma.lo, "hi": con.gamma.hi},
        }
        _write(_dump_json(out), args.out)
        return EXIT_OK
    return _emit_report(verify_similar(con, n=args.n, seed=args.seed, grid=args.grid), args, {"preset": args.name})


# -- parser ----------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser, emit=("json", "csv"), default="json") -> None:
    p.add_argument("--out", help="output path (default: stdout)")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help=f"random seed (default {DEFAULT_SEED})")
    p.add_argument("--emit", choices=emit, default=default)


def _nonneg_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("must be nonnegative")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="margsum", description="Joint laws matching marginals and sums.")
    parser.add_argument("--version", action="version", version=f"margsum {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("poly", help="orthogonal polynomial identity suite")
    p.add_argument("action", choices=["check"])
    _common(p)
    p.set_defaults(func=cmd_poly)

    p = sub.add_parser("build-expansion", help="emit an expansion density spec")
    p.add_argument("--preset", help="stoyanov | example3 | example4 | example5:d")
    p.add_argument("--spec", help="existing spec JSON to complete")
    p.add_argument("--shrink", type=float, default=0.5)
    p.add_argument("--kappa", help="auto or a number")
    _common(p, ("json",))
    p.set_defaults(func=cmd_build_expansion)

    p = sub.add_parser("build-copula", help="emit a balancing copula spec")
    p.add_argument("--spec", help="existing copula JSON to normalize")
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--epsilon", choices=["signed", "univariate-only"], default="signed")
    p.add_argument("--gamma", default="auto", help="auto or a constant")
    _common(p, ("json",))
    p.set_defaults(func=cmd_build_copula)

    p = sub.add_parser("match", help="recombine a copula with marginal laws")
    p.add_argument("--copula", required=True, help="copula spec JSON")
    p.add_argument("--marginal", action="append", help="normal:MEAN,VAR (once for all, or once per coordinate)")
    p.add_argument("--grid", type=int, default=101)
    p.add_argument("--n", type=_nonneg_int, default=10_000)
    _common(p, ("samples", "density-grid"), "samples")
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("verify", help="run the verification suite on a spec")
    p.add_argument("--spec", required=True)
    p.add_argument("--marginal", action="append", help="verify a recombined law with these marginals")
    p.add_argument("--grid", type=int, default=401)
    p.add_argument("--n", type=_nonneg_int, default=100_000)
    _common(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sample", help="draw samples from a spec")
    p.add_argument("--spec", required=True)
    p.add_argument("--n", "-n", type=_nonneg_int, default=10_000)
    _common(p, ("csv",), "csv")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("preset", help="emit or verify a worked construction")
    p.add_argument("name", help=" | ".join(PRESET_NAMES))
    p.add_argument("--verify", action="store_true")
    p.add_argument("--shrink", type=float, default=0.5)
    p.add_argument("--kappa", help="auto or a number")
    p.add_argument("--grid", type=int, default=401)
    p.add_argument("--n", type=_nonneg_int, default=100_000)
    _common(p)
    p.set_defaults(func=cmd_preset)
    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"margsum: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except INPUT_ERRORS as exc:
        print(f"margsum: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
