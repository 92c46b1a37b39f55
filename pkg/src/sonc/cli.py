"""Command-line front end.

Every command prints one JSON document on standard output (a header that
echoes the effective configuration, then the result) and a short human
summary on standard error.

Exit codes: 0 success, 1 usage or parse error, 2 infeasible or certificate
rejected, 3 numerical trouble.
"""
from __future__ import annotations

import argparse
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .circuit import (
    CircuitError,
    CircuitPoly,
    SupportTooLarge,
    circuit_number,
    circuit_poly_nonneg,
    circuit_status,
    enumerate_circuits,
    strict_circuit_member,
)
from .circuit import Circuit
from .neighborly import SamplingExhausted, sample_general_position, verify_star, witness_family
from .polyalg import PolyParseError, parse_poly, space_dim, to_fraction
from .socrep import ResidualTooLarge, UncoverableTerm, build_lower_bound, build_membership, extract_certificate
from .solver import SolverOptions, solve
from .soscert import (
    DegreeMismatch,
    GramCertificate,
    ModuleCertificate,
    NotSymmetric,
    copositive_cert_verify,
    gram_reconstruct,
    module_verify,
    psd_check,
    sos_extract,
)

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_NUMERICAL = 0, 1, 2, 3

DEFAULTS = {
    "tol": None,
    "seed": 0,
    "max_iter": 200,
    "verbose": False,
    "support_cap": 25,
    "star_margin": 1e-6,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _global_options() -> argparse.ArgumentParser:
    g = argparse.ArgumentParser(add_help=False)
    opt = g.add_argument_group("global options")
    opt.add_argument("--tol", type=float, default=argparse.SUPPRESS, help="solver / verification tolerance")
    opt.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed (witness)")
    opt.add_argument("--config", default=argparse.SUPPRESS, help="JSON file with option defaults")
    opt.add_argument("--max-iter", dest="max_iter", type=int, default=argparse.SUPPRESS)
    opt.add_argument("--verbose", action="store_true", default=argparse.SUPPRESS, help="solver log on stderr")
    return g


def build_parser() -> argparse.ArgumentParser:
    common = _global_options()
    p = _Parser(prog="sonc", description="SONC lower bounds and certificate checkers", parents=[common])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def add(name, help_):
        return sub.add_parser(name, help=help_, parents=[common])

    for name, help_ in (("bound", "SONC lower bound of a polynomial"), ("member", "SONC membership over candidate circuits")):
        s = add(name, help_)
        s.add_argument("poly", nargs="?", default=argparse.SUPPRESS, help="polynomial text, e.g. 'x0^4 - 2*x0^2'")
        s.add_argument("--deg", type=int, default=argparse.SUPPRESS, help="even degree bound 2d")
        s.add_argument("--support-cap", dest="support_cap", type=int, default=argparse.SUPPRESS, help="max support size (0: none)")
        s.add_argument("--export", default=argparse.SUPPRESS, help="also write the cone program JSON here")

    s = add("export", "write the lower-bound cone program as JSON")
    s.add_argument("poly", nargs="?", default=argparse.SUPPRESS)
    s.add_argument("--deg", type=int, default=argparse.SUPPRESS)
    s.add_argument("--support-cap", dest="support_cap", type=int, default=argparse.SUPPRESS)
    s.add_argument("--membership", action="store_true", default=argparse.SUPPRESS, help="export the membership program instead")

    s = add("circuit-check", "nonnegativity of a circuit polynomial")
    s.add_argument("--circuit", default=argparse.SUPPRESS, help="circuit JSON or @file")
    s.add_argument("--coeffs", default=argparse.SUPPRESS, help="vertex coefficients then f_beta, comma separated")

    s = add("gram-verify", "verify a Gram (SOS) certificate")
    s.add_argument("poly", nargs="?", default=argparse.SUPPRESS)
    s.add_argument("--gram", default=argparse.SUPPRESS, help="Gram JSON or @file")

    s = add("module-verify", "verify a truncated quadratic module certificate")
    s.add_argument("poly", nargs="?", default=argparse.SUPPRESS)
    s.add_argument("--cert", default=argparse.SUPPRESS, help="certificate JSON or @file")

    s = add("copositive-verify", "verify M = P + N with P PSD and N >= 0")
    for m in ("M", "P", "N"):
        s.add_argument(f"--{m}", dest=m, default=argparse.SUPPRESS, help=f"matrix {m} as JSON or @file")

    s = add("witness", "vanishing-square witness family on a random configuration")
    s.add_argument("--n", type=int, default=argparse.SUPPRESS)
    s.add_argument("--d", type=int, default=argparse.SUPPRESS)
    s.add_argument("--N", dest="N", type=int, default=argparse.SUPPRESS)
    s.add_argument("--k", type=int, default=argparse.SUPPRESS, help="subset size (default space_dim - 1)")
    s.add_argument("--star-margin", dest="star_margin", default=argparse.SUPPRESS,
                   help="sample so that off-subset values stay above this relative margin ('none': plain sampling)")
    s.add_argument("--out", default=argparse.SUPPRESS, help="directory for configuration.json and slack.csv")
    return p


# ---------------------------------------------------------------------------
# helpers

def _load_json(arg: str, what: str):
    text = arg
    if arg.startswith("@"):
        try:
            text = Path(arg[1:]).read_text()
        except OSError as exc:
            raise UsageError(f"cannot read {what} file: {exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"invalid {what} JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


def _need(cfg: dict, *keys):
    missing = [k for k in keys if cfg.get(k) is None]
    if missing:
        raise UsageError(f"{cfg['command']}: missing {', '.join(missing)}")


def _poly(cfg: dict, nvars: int | None = None):
    _need(cfg, "poly")
    return parse_poly(cfg["poly"], nvars=nvars)


def _solver_opts(cfg: dict) -> SolverOptions:
    kw = {"max_iter": int(cfg["max_iter"]), "verbose": bool(cfg["verbose"])}
    if cfg.get("tol") is not None:
        kw["tol"] = float(cfg["tol"])
    return SolverOptions(**kw)


def _status_code(status: str) -> int:
    if status == "optimal":
        return EXIT_OK
    if status == "infeasible":
        return EXIT_INFEASIBLE
    return EXIT_NUMERICAL


def _sonc_program(cfg: dict, membership: bool):
    f = _poly(cfg)
    _need(cfg, "deg")
    deg = int(cfg["deg"])
    if deg < 0 or deg % 2:
        raise UsageError(f"--deg must be a nonnegative even integer, got {deg}")
    if f.degree > deg:
        raise UsageError(f"polynomial has degree {f.degree} > --deg {deg}")
    cap = cfg.get("support_cap")
    circuits = enumerate_circuits(f.support, deg, cap=cap if cap else None)
    builder = build_membership if membership else build_lower_bound
    return f, circuits, builder(f, circuits, deg)


# ---------------------------------------------------------------------------
# commands

def cmd_sonc(cfg: dict, membership: bool):
    try:
        f, circuits, sp = _sonc_program(cfg, membership)
    except UncoverableTerm as exc:
        out = {"status": "infeasible", "reason": str(exc), "exponent": list(exc.exponent), "support_restricted": True}
        return out, EXIT_INFEASIBLE, f"infeasible by structure: {exc}"
    if cfg.get("export"):
        Path(cfg["export"]).write_text(sp.program.to_json(indent=1))
    res = solve(sp.program, _solver_opts(cfg))
    out = {
        "status": res.status,
        "iterations": res.iterations,
        "residuals": res.residuals,
        "circuits_considered": len(circuits),
        "support_restricted": True,
        "report": list(sp.report) + list(res.report),
    }
    if not membership:
        out["bound"] = res.objective if res.status == "optimal" else None
        out["dual_bound"] = res.dual_objective if res.status == "optimal" else None
    if res.status != "optimal":
        return out, _status_code(res.status), f"solver status {res.status} after {res.iterations} iterations"
    try:
        cert = extract_certificate(sp, res.primal)
    except ResidualTooLarge as exc:
        out["status"] = "numerical"
        out["reason"] = str(exc)
        return out, EXIT_NUMERICAL, f"certificate extraction failed: {exc}"
    out["certificate"] = cert.to_dict()
    out["circuits_used"] = [t.circuit.to_dict() for t in cert.circuit_terms]
    if membership:
        summary = f"member of the SONC cone ({len(cert.circuit_terms)} circuit terms, {len(cert.square_terms)} squares)"
    else:
        summary = f"SONC lower bound {res.objective:.10g} ({len(cert.circuit_terms)} circuit terms, {res.iterations} iterations)"
    return out, EXIT_OK, summary


def cmd_export(cfg: dict):
    _f, _c, sp = _sonc_program(cfg, bool(cfg.get("membership")))
    return sp.program.to_json(indent=1)


def _parse_coeffs(text: str):
    try:
        return [to_fraction(t) for t in text.split(",") if t.strip()]
    except (ValueError, ZeroDivisionError) as exc:
        raise UsageError(f"bad coefficient list {text!r}: {exc}") from None


def cmd_circuit_check(cfg: dict):
    _need(cfg, "circuit", "coeffs")
    data = _load_json(cfg["circuit"], "circuit")
    circ = Circuit.from_dict(data)
    coeffs = _parse_coeffs(str(cfg["coeffs"]))
    if len(coeffs) != len(circ.vertices) + 1:
        raise UsageError(f"expected {len(circ.vertices) + 1} coefficients (vertices then f_beta), got {len(coeffs)}")
    p = CircuitPoly(circ, tuple(coeffs[:-1]), coeffs[-1])
    status = circuit_status(p)
    theta = circuit_number(p) if all(c >= 0 for c in p.vertex_coeffs) else None
    verdict = "not nonnegative" if status == "violated" else f"nonnegative ({status})"
    out = {
        "verdict": verdict,
        "status": status,
        "nonnegative": circuit_poly_nonneg(p),
        "strict_member": strict_circuit_member(p),
        "theta": theta,
        "circuit": circ.to_dict(),
    }
    summary = verdict + (f", Θ = {theta:.12g}" if theta is not None else "")
    return out, (EXIT_OK if out["nonnegative"] else EXIT_INFEASIBLE), summary


def cmd_gram_verify(cfg: dict):
    _need(cfg, "gram")
    cert = GramCertificate.from_dict(_load_json(cfg["gram"], "Gram"))
    f = _poly(cfg, nvars=cert.n)
    tol = cfg["tol"] if cfg.get("tol") is not None else 1e-8
    res = psd_check(cert.G)
    gap, where = gram_reconstruct(cert).coefficient_gap(f)
    out = {
        "psd": res.psd,
        "rank": res.rank,
        "residual": float(gap),
        "exponent": list(where) if where is not None else None,
        "gram_size": cert.size,
    }
    if res.psd:
        out["squares"] = [q.to_text() for q in sos_extract(cert)]
    else:
        out["witness"] = res.witness.tolist()
        out["witness_value"] = res.value
    out["verified"] = bool(res.psd and float(gap) <= tol)
    if out["verified"]:
        summary = f"verified: sum of {len(out['squares'])} squares, residual {float(gap):.3e}"
    elif not res.psd:
        summary = f"rejected: Gram matrix not PSD (v^T G v = {res.value:.3e})"
    else:
        summary = f"rejected: residual {float(gap):.3e} at exponent {tuple(where)}"
    return out, (EXIT_OK if out["verified"] else EXIT_INFEASIBLE), summary


def cmd_module_verify(cfg: dict):
    _need(cfg, "cert")
    cert = ModuleCertificate.from_dict(_load_json(cfg["cert"], "certificate"))
    f = _poly(cfg, nvars=cert.nvars)
    tol = cfg["tol"] if cfg.get("tol") is not None else 1e-8
    res = module_verify(f, cert, tol)
    summary = ("verified" if res.ok else "rejected") + f": residual {res.residual:.3e}"
    if res.exponent is not None and res.residual > tol:
        summary += f" at exponent {tuple(res.exponent)}"
    return res.to_dict(), (EXIT_OK if res.ok else EXIT_INFEASIBLE), summary


def cmd_copositive_verify(cfg: dict):
    _need(cfg, "M", "P", "N")
    mats = {m: _load_json(cfg[m], m) for m in ("M", "P", "N")}
    tol = cfg["tol"] if cfg.get("tol") is not None else 1e-9
    res = copositive_cert_verify(mats["M"], mats["P"], mats["N"], tol)
    out = res.to_dict()
    out["complete_for_k"] = 4
    summary = ("verified: M is copositive" if res.ok else "rejected") + f" (split residual {res.split_residual:.3e})"
    return out, (EXIT_OK if res.ok else EXIT_INFEASIBLE), summary


def cmd_witness(cfg: dict):
    _need(cfg, "n", "d", "N")
    n, d, N = int(cfg["n"]), int(cfg["d"]), int(cfg["N"])
    if n < 1 or d < 0 or N < 1:
        raise UsageError("need n >= 1, d >= 0, N >= 1")
    D = space_dim(n, d)
    k = int(cfg["k"]) if cfg.get("k") is not None else D - 1
    if not 0 <= k <= D - 1:
        raise UsageError(f"k must lie in [0, {D - 1}]")
    if N < k:
        raise UsageError(f"N = {N} is smaller than k = {k}")
    margin = cfg.get("star_margin")
    if isinstance(margin, str):
        margin = None if margin.lower() == "none" else float(margin)
    config = sample_general_position(n, d, N, int(cfg["seed"]), star_margin=margin if k == D - 1 else None)
    fam = witness_family(config, k)
    rep = verify_star(fam)
    csv_text = fam.slack_csv()
    out = {"n": n, "d": d, "N": N, "k": k, "members": len(fam), "verdict": rep.ok, "report": rep.to_dict()}
    if cfg.get("out"):
        outdir = Path(cfg["out"])
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / "configuration.json").write_text(config.to_json())
        (outdir / "slack.csv").write_text(csv_text)
        out["files"] = {"configuration": str(outdir / "configuration.json"), "slack": str(outdir / "slack.csv")}
    else:
        out["configuration"] = config.to_dict()
        out["slack_csv"] = csv_text
    summary = (f"condition holds on {len(fam)} subsets" if rep.ok else f"condition fails on {len(rep.failures)} subsets") + \
        f" (worst in-subset {rep.worst_in_T:.2e}, worst off-subset {rep.worst_off_T:.2e})"
    return out, (EXIT_OK if rep.ok else EXIT_INFEASIBLE), summary


COMMANDS = {
    "bound": lambda cfg: cmd_sonc(cfg, membership=False),
    "member": lambda cfg: cmd_sonc(cfg, membership=True),
    "circuit-check": cmd_circuit_check,
    "gram-verify": cmd_gram_verify,
    "module-verify": cmd_module_verify,
    "copositive-verify": cmd_copositive_verify,
    "witness": cmd_witness,
}


def resolve_config(ns: argparse.Namespace) -> dict:
    """Defaults < config file < command line."""
    given = vars(ns)
    cfg = dict(DEFAULTS)
    if "config" in given:
        data = _load_json("@" + given["config"], "config")
        if not isinstance(data, dict):
            raise UsageError("config file must hold a JSON object")
        cfg.update({k.replace("-", "_"): v for k, v in data.items() if k != "command"})
    cfg.update({k: v for k, v in given.items() if k != "config"})
    if "config" in given:
        cfg["config"] = given["config"]
    return cfg


def _emit(cfg: dict, result) -> None:
    doc = {
        "header": {
            "tool": "sonc",
            "version": __version__,
            "command": cfg["command"],
            "config": cfg,
            "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        },
        "result": result,
    }
    json.dump(doc, sys.stdout, indent=2, default=_json_default)
    sys.stdout.write("\n")


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return str(obj)


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        cfg = resolve_config(ns)
        if cfg["command"] == "export":
            sys.stdout.write(cmd_export(cfg) + "\n")
            return EXIT_OK
        result, code, summary = COMMANDS[cfg["command"]](cfg)
    except PolyParseError as exc:
        print(f"sonc: parse error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except UncoverableTerm as exc:
        print(f"sonc: infeasible by structure: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (UsageError, SupportTooLarge, CircuitError, DegreeMismatch, NotSymmetric, ValueError) as exc:
        print(f"sonc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SamplingExhausted, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"sonc: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    _emit(cfg, result)
    print(summary, file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
