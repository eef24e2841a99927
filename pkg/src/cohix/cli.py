"""Command-line front end: file/flag driven, deterministic output.

Exit codes: 0 success, 2 parse/usage error, 3 numerical failure,
4 precondition violation.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import asymptotics as asy
from . import entropy as ent
from . import nsdist
from . import protocols as pr
from . import sdp as sdpmod
from . import serialize as ser
from .channels import KrausChannel, dephase, identity_channel, mcs
from .errors import (CohixError, DimensionError, DomainError,
                     InfiniteDivergence, LayoutError, NumericalError,
                     PreconditionError, SolverError, WitnessError)
from .linalg import (DensityMatrix, PureState, SystemLayout, eigh,
                     haar_random_density, haar_random_state, partial_trace,
                     purify)

EXIT_PARSE = 2
EXIT_NUMERICAL = 3
EXIT_PRECONDITION = 4

_PARSE_ERRORS = (json.JSONDecodeError, KeyError, TypeError, OSError)
_NUMERICAL_ERRORS = (NumericalError, SolverError, InfiniteDivergence)
_PRECONDITION_ERRORS = (PreconditionError, DomainError, DimensionError,
                        LayoutError, WitnessError)


class ParseError(Exception):
    pass


def _jsonable(obj):
    """Recursively convert to JSON-encodable values; non-finite floats
    become strings so the deterministic encoder can emit them."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        if math.isnan(f):
            return "nan"
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        return f
    if isinstance(obj, complex):
        return [_jsonable(obj.real), _jsonable(obj.imag)]
    return obj


def _emit(obj):
    sys.stdout.write(ser.dumps(_jsonable(obj)) + "\n")


def _load_json(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _layout_or_default(obj: dict, dim: int, label: str = "B") -> SystemLayout:
    if "layout" in obj:
        return ser.layout_from_json(obj["layout"])
    return SystemLayout.of((label, dim))


def _state_from_json(obj: dict, key: str = "state",
                     max_dim: int | None = None) -> DensityMatrix:
    mat = ser.matrix_from_json(obj[key])
    if mat.shape[1] == 1 and mat.shape[0] > 1:
        vec = mat.reshape(-1)
        layout = _layout_or_default(obj, len(vec))
        return PureState(vec, layout).to_density()
    if max_dim is not None and mat.shape[0] > max_dim:
        raise PreconditionError(f"dimension {mat.shape[0]} exceeds --max-dim {max_dim}")
    layout = _layout_or_default(obj, mat.shape[0])
    return DensityMatrix(mat, layout, psd_tol=1e-9)


def _channel_from_json(obj: dict, default_layout: SystemLayout) -> KrausChannel:
    if "channel" not in obj:
        return identity_channel(default_layout)
    ch = obj["channel"]
    kraus = [ser.matrix_from_json(k) for k in ch["kraus"]]
    in_layout = (ser.layout_from_json(ch["in_layout"])
                 if "in_layout" in ch else default_layout)
    out_layout = (ser.layout_from_json(ch["out_layout"])
                  if "out_layout" in ch
                  else SystemLayout.of(("C", kraus[0].shape[0])))
    return KrausChannel(kraus, in_layout, out_layout)


def _hash_from_json(obj: dict) -> pr.HashFunction | None:
    if "hash_table" not in obj:
        return None
    table = tuple(int(v) for v in obj["hash_table"])
    out_size = int(obj.get("out_size", max(table) + 1 if table else 1))
    return pr.HashFunction(table, out_size)


def _eps(args, obj: dict | None = None) -> float:
    if args.eps is not None:
        return args.eps
    if obj is not None and "eps" in obj:
        return float(obj["eps"])
    raise ParseError("--eps (or an 'eps' field in the input file) is required")


def _cert_json(cert) -> dict:
    return {"class": cert.class_name, "verdict": bool(cert.verdict),
            "residuals": cert.residuals, "note": cert.note}


def _channel_json(channel: KrausChannel) -> dict:
    return {"kraus": [ser.matrix_to_json(k) for k in channel.kraus_ops],
            "in_layout": ser.layout_to_json(channel.in_layout),
            "out_layout": ser.layout_to_json(channel.out_layout)}


def _outcome_json(outcome: pr.ExtractionOutcome) -> dict:
    det = outcome.dsec_detail
    return {"d_sec": outcome.d_sec, "log_L": outcome.log_L,
            "fstar": det.fstar, "sigma_star": ser.matrix_to_json(det.sigma_star),
            "solver": {"gap": det.gap, "iterations": det.iterations,
                       "sdp_checked": det.sdp_checked,
                       "converged": det.converged}}


def _report_json(report: pr.DistillerReport) -> dict:
    return {"error_P": report.error_P, "target_dim": report.target_dim,
            "d_sec_achieved": report.d_sec_achieved,
            "certificates": [_cert_json(c) for c in report.certificates],
            "channel": _channel_json(report.channel)}


# ---------------------------------------------------------------------------
# Commands


def cmd_entropy(args) -> int:
    obj = _load_json(args.input)
    rho = ser.matrix_from_json(obj["rho"])
    sigma = ser.matrix_from_json(obj["sigma"])
    eps = _eps(args, obj)
    th, clamped = ent.theta(sigma, return_details=True)
    try:
        d_bits = ent.rel_entropy(rho, sigma)
        v_bits2 = ent.rel_entropy_variance(rho, sigma)
    except InfiniteDivergence:
        d_bits, v_bits2 = math.inf, math.nan
    try:
        dmax_bits = ent.dmax(rho, sigma)
    except InfiniteDivergence:
        dmax_bits = math.inf
    report = ent.EntropyReport(
        D_bits=d_bits, V_bits2=v_bits2,
        dh_bits=ent.dh(rho, sigma, eps).value_bits,
        dmax_bits=dmax_bits,
        theta=th, theta_clamped=clamped,
        second_order_bits=(ent.second_order_estimate(d_bits, v_bits2, eps, args.n[0])
                           if args.n and math.isfinite(d_bits) else None))
    _emit(report.to_json_dict())
    return 0


def cmd_dh(args) -> int:
    obj = _load_json(args.input)
    rho = ser.matrix_from_json(obj["rho"])
    sigma = ser.matrix_from_json(obj["sigma"])
    res = ent.dh(rho, sigma, _eps(args, obj))
    _emit({"threshold_t": res.threshold_t,
           "boundary_fraction_x": res.boundary_fraction_x,
           "type1": res.type1, "type2": res.type2,
           "value_bits": res.value_bits})
    return 0


def cmd_protocol(args) -> int:
    obj = _load_json(args.input)
    rho = _state_from_json(obj, max_dim=args.max_dim)
    channel = _channel_from_json(obj, rho.layout)
    f = _hash_from_json(obj)
    if f is None:
        eps = _eps(args, obj)
        log_l, best, flags = pr.extractable_randomness_exhaustive(
            rho, channel, eps, sampled=args.sampled_hash, seed=args.seed)
        _emit({"log_L": log_l, "hash_table": list(best.table),
               "out_size": best.out_size, "eps": eps, "flags": flags})
        return 0
    outcome = pr.run_extraction(rho, channel, f)
    _emit(_outcome_json(outcome))
    return 0


def cmd_distill(args) -> int:
    obj = _load_json(args.input)
    rho = _state_from_json(obj, max_dim=args.max_dim)
    f = _hash_from_json(obj)
    if f is None:
        raise ParseError("distill requires a 'hash_table' field")
    report = pr.build_distiller_from_extraction(rho, f, _eps(args, obj))
    _emit(_report_json(report))
    return 0


def cmd_assisted_extract(args) -> int:
    obj = _load_json(args.input)
    rho = _state_from_json(obj, max_dim=args.max_dim)
    channel = _channel_from_json(obj, rho.layout)
    f = _hash_from_json(obj)
    if f is None:
        raise ParseError("assisted-extract requires a 'hash_table' field")
    outcome = pr.run_assisted_extraction(rho, channel, f)
    _emit(_outcome_json(outcome))
    return 0


def cmd_assisted_distill(args) -> int:
    obj = _load_json(args.input)
    rho = _state_from_json(obj, max_dim=args.max_dim)
    f = _hash_from_json(obj)
    if f is None:
        raise ParseError("assisted-distill requires a 'hash_table' field")
    report = pr.build_assisted_distiller(rho, f, _eps(args, obj))
    _emit(_report_json(report))
    return 0


def cmd_alt_extract(args) -> int:
    obj = _load_json(args.input)
    rho = _state_from_json(obj, max_dim=args.max_dim)
    channel = _channel_from_json(obj, rho.layout)
    f = _hash_from_json(obj)
    if f is None:
        raise ParseError("alt-extract requires a 'hash_table' field")
    outcome = pr.run_alternative_assisted_extraction(rho, channel, f)
    _emit(_outcome_json(outcome))
    return 0


def _point_json(p: asy.CurvePoint) -> dict:
    d = {"n": p.n}
    for k in ("eps", "lower_bits", "upper_bits", "exact_bits",
              "second_order_bits", "epsilon_lower_bound"):
        v = getattr(p, k)
        if v is not None:
            d[k] = v
    if p.flags:
        d["flags"] = list(p.flags)
    return d


def cmd_sweep(args) -> int:
    obj = _load_json(args.input)
    rho = _state_from_json(obj, max_dim=args.max_dim)
    if not args.n:
        raise ParseError("--n is required for sweep")
    points = asy.second_order_curve(rho if args.assisted else rho.mat,
                                    _eps(args, obj), args.n,
                                    assisted=args.assisted)
    if args.format == "csv":
        sys.stdout.write(asy.curve_to_csv(points))
    else:
        _emit([_point_json(p) for p in points])
    return 0


def cmd_strong_converse(args) -> int:
    obj = _load_json(args.input)
    rho = _state_from_json(obj, max_dim=args.max_dim)
    if args.rate is None:
        raise ParseError("--rate is required for strong-converse")
    if not args.n:
        raise ParseError("--n is required for strong-converse")
    points = asy.strong_converse_curve(rho.mat, args.rate, args.n)
    if args.format == "csv":
        sys.stdout.write(asy.curve_to_csv(points))
    else:
        _emit([_point_json(p) for p in points])
    return 0


def cmd_verify_relations(args) -> int:
    obj = _load_json(args.input)
    vec = ser.matrix_from_json(obj["state"]).reshape(-1)
    layout = ser.layout_from_json(obj["layout"])
    psi = PureState(vec, layout)
    eps = args.eps if args.eps is not None else 0.6
    delta = args.delta if args.delta is not None else 0.02
    report = nsdist.verify_reduction_connections(psi, eps, delta)
    out = dict(report)
    for k in ("ds_atoms_side1", "ds_atoms_side2"):
        out[k] = [[a, w] for a, w in out[k]]
    _emit(out)
    return 0


# ---------------------------------------------------------------------------
# Self test


def _selftest_checks(seed: int, quick: bool):
    rng_seed = seed

    def check_dh_closed_forms():
        plus = np.full((2, 2), 0.5, dtype=complex)
        half = np.eye(2, dtype=complex) / 2
        ok = True
        for eps in (0.1, 0.3, 0.7):
            ok &= abs(ent.dh(plus, half, eps).value_bits
                      - (1.0 - math.log2(1.0 - eps))) < 1e-9
            ok &= abs(ent.dh(half, half, eps).value_bits
                      - (-math.log2(1.0 - eps))) < 1e-9
        return ok

    def check_np_vs_sdp():
        ok = True
        for k in range(2 if quick else 6):
            r = haar_random_density(3, rank=3, seed=rng_seed + 10 + k).mat
            s = haar_random_density(3, rank=3, seed=rng_seed + 50 + k).mat
            for eps in (0.2, 0.6):
                ok &= abs(ent.dh(r, s, eps).value_bits
                          - sdpmod.dh_sdp(r, s, eps)) < 1e-6
        return ok

    def check_reduction_relations():
        psi = haar_random_state(8, seed=rng_seed + 3,
                                layout=SystemLayout.of(("R", 2), ("A", 2), ("B", 2)))
        rep = nsdist.verify_reduction_connections(psi, 0.6, 0.02,
                                                  check_hmin=not quick)
        ok = rep["ds_residual"] < 1e-8 and rep["D_residual"] < 1e-8
        ok &= rep["V_residual"] < 1e-8 and rep["schmidt_residual"] < 1e-10
        if not quick:
            ok &= rep["hmin_dh_holds"]
        return ok

    def check_extraction_pipeline():
        layb = SystemLayout.of(("B", 2))
        half = DensityMatrix(np.eye(2, dtype=complex) / 2, layb)
        o = pr.run_extraction(half, identity_channel(layb),
                              pr.HashFunction.identity(2))
        ok = abs(o.d_sec - 1.0 / math.sqrt(2.0)) < 1e-9
        rep = pr.build_distiller_from_extraction(mcs(2).to_density(),
                                                 pr.HashFunction.identity(2), 1e-9)
        ok &= rep.error_P < 1e-9 and all(c.verdict for c in rep.certificates)
        return ok

    def check_normal_quantile():
        ok = True
        for p in (1e-9, 0.01, 0.3, 0.5, 0.77, 1 - 1e-9):
            ok &= abs(ent.normal_cdf(ent.inv_normal_cdf(p)) - p) < 1e-12
        return ok

    def check_iid_and_converse():
        plus = np.full((2, 2), 0.5, dtype=complex)
        half = np.eye(2, dtype=complex) / 2
        ok = abs(asy.iid_dh(plus, half, 2, 0.5) - 3.0) < 1e-9
        r = haar_random_density(2, rank=2, seed=rng_seed + 7).mat
        d = np.diag(np.diag(r))
        pts = asy.strong_converse_curve(r, ent.rel_entropy(r, d) + 0.1,
                                        [10, 40, 160])
        vals = [p.epsilon_lower_bound for p in pts]
        ok &= vals[0] < vals[1] < vals[2]
        return ok

    checks = [
        ("dh-closed-forms", check_dh_closed_forms),
        ("np-vs-sdp", check_np_vs_sdp),
        ("reduction-relations", check_reduction_relations),
        ("extraction-pipeline", check_extraction_pipeline),
        ("normal-quantile", check_normal_quantile),
        ("iid-and-strong-converse", check_iid_and_converse),
    ]
    return checks


def cmd_selftest(args) -> int:
    failures = 0
    for name, fn in _selftest_checks(args.seed, args.quick):
        try:
            ok = fn()
        except CohixError:
            ok = False
        line = f"{'PASS' if ok else 'FAIL'} {name}"
        sys.stdout.write(line + "\n")
        if not ok:
            failures += 1
    sys.stdout.write(f"{'PASS' if failures == 0 else 'FAIL'} selftest "
                     f"({len(_selftest_checks(args.seed, args.quick)) - failures}"
                     f" ok, {failures} failed, seed={args.seed})\n")
    return 0 if failures == 0 else 1


# ---------------------------------------------------------------------------
# Argument parsing


def _int_list(s: str):
    try:
        return [int(v) for v in s.split(",") if v]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad integer list {s!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cohix",
                                description="one-shot coherence distillation "
                                            "and randomness extraction toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, needs_input=True):
        sp = sub.add_parser(name)
        if needs_input:
            sp.add_argument("input", help="input JSON file")
        sp.add_argument("--eps", type=float, default=None)
        sp.add_argument("--eta", type=float, default=None)
        sp.add_argument("--delta", type=float, default=None)
        sp.add_argument("--n", type=_int_list, default=None,
                        help="comma-separated copy counts")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--format", choices=("json", "csv"), default="json")
        sp.add_argument("--max-dim", type=int, default=4096, dest="max_dim")
        sp.add_argument("--sampled-hash", action="store_true", dest="sampled_hash")
        sp.add_argument("--rate", type=float, default=None)
        sp.add_argument("--assisted", action="store_true")
        sp.add_argument("--quick", action="store_true")
        sp.set_defaults(fn=fn)
        return sp

    add("entropy", cmd_entropy)
    add("dh", cmd_dh)
    add("protocol", cmd_protocol)
    add("distill", cmd_distill)
    add("assisted-extract", cmd_assisted_extract)
    add("assisted-distill", cmd_assisted_distill)
    add("alt-extract", cmd_alt_extract)
    add("sweep", cmd_sweep)
    add("strong-converse", cmd_strong_converse)
    add("verify-relations", cmd_verify_relations)
    add("selftest", cmd_selftest, needs_input=False)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ParseError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_PARSE
    except _PARSE_ERRORS as exc:
        sys.stderr.write(f"parse error: {exc}\n")
        return EXIT_PARSE
    except _PRECONDITION_ERRORS as exc:
        sys.stderr.write(f"precondition violated: {exc}\n")
        return EXIT_PRECONDITION
    except _NUMERICAL_ERRORS as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
