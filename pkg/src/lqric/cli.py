"""Command-line interface.

Every command reads a system document (JSON), runs one solver or
verifier and writes a report document. Exit codes: 0 success or pass,
1 verification failure, 2 usage or input error.
"""

import argparse
import hashlib
import json
import math
import sys as _sys
from pathlib import Path

import numpy as np

from . import __version__
from . import ire, riccati, stabilize
from .discretize import simulate as simulate_traj
from .errors import DimensionMismatch, LqricError, NonFiniteEntry
from .system import Domain, StateSpaceSystem, cost_matrix, spectral_abscissa

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class InputError(Exception):
    """Bad user input; reported with exit code 2."""


# -- serialization ----------------------------------------------------------------

def _to_plain(obj):
    if isinstance(obj, np.ndarray):
        return _to_plain(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": float(obj.real), "im": float(obj.imag)}
    if isinstance(obj, dict):
        return {str(k): _to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_plain(v) for v in obj]
    return obj


def _dump(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return json.dumps(str(obj))
        return "%.17g" % obj
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_dump(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(_dump(v, indent, level + 1) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _dump(v, indent, level + 1) for v in obj) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    """JSON text with every float written at 17 significant digits."""
    return _dump(_to_plain(obj), indent, 0)


def _matrix_field(doc, key, required=True):
    if key not in doc or doc[key] is None:
        if required:
            raise InputError(f"field '{key}': missing")
        return None
    val = doc[key]
    try:
        arr = np.array(val, dtype=float)
    except (TypeError, ValueError) as exc:
        raise InputError(f"field '{key}': not a nested array of reals ({exc})") from None
    if arr.ndim > 2:
        raise InputError(f"field '{key}': expected a matrix, got {arr.ndim} dimensions")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"field '{key}': contains non-finite entries")
    return arr


def system_from_document(doc: dict) -> StateSpaceSystem:
    """Parse a system document; ``C`` and ``D`` may be omitted (no output)."""
    if not isinstance(doc, dict):
        raise InputError("system document must be a JSON object")
    A = np.atleast_2d(_matrix_field(doc, "A"))
    B = np.atleast_2d(_matrix_field(doc, "B"))
    n = A.shape[0]
    if B.shape[0] != n and B.size == n:
        B = B.reshape(n, 1)
    C = _matrix_field(doc, "C", required=False)
    D = _matrix_field(doc, "D", required=False)
    if C is None:
        C = np.zeros((0, n))
    if D is None:
        D = np.zeros((np.atleast_2d(C).shape[0] if C.size else 0, B.shape[1]))
    try:
        return StateSpaceSystem(A, B, C, D)
    except (DimensionMismatch, NonFiniteEntry) as exc:
        raise InputError(f"system: {exc}") from None


def system_to_document(sys: StateSpaceSystem, name: str = "system", J=None, domain=None) -> dict:
    doc = {"name": name, "A": sys.A, "B": sys.B, "C": sys.C, "D": sys.D}
    if J is not None:
        doc["J"] = np.asarray(J)
    if domain is not None:
        doc["domain"] = Domain(domain).value
    return _to_plain(doc)


def load_json_arg(text: str, what: str):
    """Inline JSON, or a path to a JSON file."""
    text = text.strip()
    try:
        if text[:1] in "[{-0123456789." or text in ("true", "false", "null"):
            return json.loads(text)
        return json.loads(Path(text).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InputError(f"{what}: file not found: {text}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{what}: malformed JSON ({exc})") from None


def _inline_matrix(text, what):
    val = load_json_arg(text, what)
    try:
        arr = np.array(val, dtype=float)
    except (TypeError, ValueError):
        raise InputError(f"{what}: not a nested array of reals") from None
    return np.atleast_2d(arr)


def _digest(inputs) -> str:
    return hashlib.sha256(dumps(inputs, indent=0).encode("utf-8")).hexdigest()


def make_report(command: str, inputs: dict, results: dict) -> dict:
    return {
        "command": command,
        "inputs_digest": _digest(inputs),
        "results": _to_plain(results),
        "tool_version": __version__,
    }


# -- summary -----------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, dict) and set(x) == {"re", "im"}:
        re_, im = x["re"], x["im"]
        return f"{re_:.6g}{'+' if im >= 0 else '-'}{abs(im):.6g}j"
    if isinstance(x, float):
        return f"{x:.6g}"
    if isinstance(x, list):
        return "[" + ", ".join(_fmt(v) for v in x) + "]"
    return str(x)


def render_summary(report: dict) -> str:
    """Deterministic plain-text view of a report document."""
    res = report.get("results", {})
    lines = [f"command: {report.get('command', '?')}"]
    if "verdict" in res:
        lines.append(f"verdict: {res['verdict']}")
    if "error" in res:
        lines.append(f"error: {res['error']['type']}: {res['error']['message']}")
    for i, sol in enumerate(res.get("solutions", [])):
        flags = ", ".join(f"{k}={_fmt(v)}" for k, v in sol.get("flags", {}).items())
        lines.append(f"solution {i}: eig(P) = {_fmt(sol.get('P_eigenvalues'))}; {flags}")
        lines.append(f"  closed-loop poles: {_fmt(sol.get('closed_loop_poles'))}")
        lines.append(f"  ARE residual: {_fmt(sol.get('residual'))}")
    if "blocks" in res:
        for name, info in res["blocks"].items():
            lines.append(f"block {name}: order {info['order']}, stable={info['stable']}")
        lines.append(f"identity residual: {_fmt(res.get('identity_residual'))}")
    checks = res.get("checks", [])
    if not checks and "blocks" not in res:
        lines.append("no checks run")
    for chk in checks:
        lines.append(f"check {chk['mode']}: {chk['verdict']}")
        for key, val in chk["per_equation"].items():
            tol = chk.get("tolerances", {}).get(key)
            suffix = f" (tol {_fmt(tol)})" if tol is not None else ""
            lines.append(f"  {key:<16} {_fmt(val)}{suffix}")
    for key in sorted(res):
        if key in ("verdict", "error", "solutions", "blocks", "checks", "identity_residual"):
            continue
        val = res[key]
        if isinstance(val, (dict,)) and not (set(val) == {"re", "im"}):
            continue
        lines.append(f"{key}: {_fmt(val)}")
    return "\n".join(lines) + "\n"


# -- command helpers ---------------------------------------------------------------

def _solution_dict(sol) -> dict:
    out = {
        "P": sol.P, "S": sol.S, "K": sol.K, "residual": float(sol.residual),
        "flags": sol.flags,
        "P_eigenvalues": np.linalg.eigvalsh(sol.P) if sol.P.size else [],
    }
    if sol.closed_loop_poles is not None:
        out["closed_loop_poles"] = [complex(z) for z in sol.closed_loop_poles]
    return out


def _load_system(args):
    if not args.system:
        raise InputError("--system is required")
    doc = load_json_arg(args.system, "--system")
    sysm = system_from_document(doc)
    J = doc.get("J") if isinstance(doc, dict) else None
    if getattr(args, "J", None):
        J = load_json_arg(args.J, "--J")
    if J is not None:
        try:
            J = cost_matrix(np.array(J, dtype=float), sysm.p)
        except (ValueError, DimensionMismatch) as exc:
            raise InputError(f"field 'J': {exc}") from None
    domain = getattr(args, "domain", None) or (doc.get("domain") if isinstance(doc, dict) else None)
    try:
        domain = Domain(domain or "exp")
    except ValueError:
        raise InputError(f"field 'domain': must be 'exp' or 'out', got {domain!r}") from None
    return sysm, J, domain, doc


def _problem(args, sysm, J, domain):
    return riccati.build_problem(getattr(args, "kind", "general") or "general", sysm, J=J, domain=domain)


def _given_or_solved(args, problem):
    """``(P, S, K)`` from --P/--K if given, else the stabilizing solution."""
    if getattr(args, "P", None) is not None:
        P = _inline_matrix(args.P, "--P")
        K = _inline_matrix(args.K, "--K") if args.K is not None else riccati.gain(problem, P)
        if P.shape != (problem.n, problem.n) or K.shape != (problem.plant.m, problem.n):
            raise InputError("--P/--K: shapes do not match the system")
        return P, problem.S, K
    if problem.domain is Domain.OUT:
        sol = riccati.solve_minimal_nonnegative(problem)
    else:
        sol = riccati.solve_stabilizing(problem)
    return sol.P, sol.S, sol.K


def _grid(args):
    if not getattr(args, "grid", None):
        return None
    val = load_json_arg(args.grid, "--grid")
    pts = []
    for v in val:
        if isinstance(v, list) and len(v) == 2:
            pts.append(complex(v[0], v[1]))
        elif isinstance(v, dict):
            pts.append(complex(v.get("re", 0.0), v.get("im", 0.0)))
        else:
            pts.append(complex(v))
    return pts


def _verdict(ok: bool) -> str:
    return "pass" if ok else "fail"


# -- commands ----------------------------------------------------------------------

def cmd_are(args, sysm, J, domain):
    problem = _problem(args, sysm, J, domain)
    if args.verb == "solve":
        if domain is Domain.OUT:
            sol = riccati.solve_minimal_nonnegative(problem)
        else:
            sol = riccati.solve_stabilizing(problem)
        return {"verdict": "pass", "solutions": [_solution_dict(sol)]}
    if args.verb == "enumerate":
        sols = riccati.enumerate_solutions(problem, max_n=args.max_n)
        return {"verdict": "pass", "solutions": [_solution_dict(s) for s in sols]}
    P, S, K = _given_or_solved(args, problem)
    base = riccati.RiccatiSolution(P, S, K, riccati.are_residual(problem, P, K, S))
    sol = riccati.classify(base, problem)
    return {"verdict": "pass", "solutions": [_solution_dict(sol)]}


def cmd_ire(args, sysm, J, domain):
    problem = _problem(args, sysm, J, domain)
    sol = _given_or_solved(args, problem)
    rep = ire.ire_residuals(problem.plant, problem.J, sol, args.mode, args.t, args.n)
    return {"verdict": _verdict(rep.verdict), "checks": [rep.to_dict()]}


def cmd_rcc(args, sysm, J, domain):
    problem = _problem(args, sysm, J, domain)
    P, S, K = _given_or_solved(args, problem)
    rep = ire.rcc_check(problem.plant, problem.J, P, K, T_max=args.t, tol=args.tol or 1e-6)
    return {"verdict": _verdict(rep.verdict), "checks": [rep.to_dict()]}


def cmd_freq_ire(args, sysm, J, domain):
    problem = _problem(args, sysm, J, domain)
    sol = _given_or_solved(args, problem)
    pts = _grid(args)
    samples = None if pts is None else [ire.FrequencySample(s, z) for s in pts for z in pts]
    rep = ire.freq_ire_residuals(problem.plant, problem.J, sol, samples, tol=args.tol or ire.EXACT_TOL)
    return {"verdict": _verdict(rep.verdict), "checks": [rep.to_dict()]}


def cmd_spectral_factor(args, sysm, J, domain):
    problem = _problem(args, sysm, J, domain)
    sol = _given_or_solved(args, problem)
    rep = ire.spectral_factor_residual(problem.plant, problem.J, sol, _grid(args),
                                       tol=args.tol or ire.EXACT_TOL)
    return {"verdict": _verdict(rep.verdict), "checks": [rep.to_dict()]}


def cmd_dare_check(args, sysm, J, domain):
    problem = _problem(args, sysm, J, domain)
    sol = _given_or_solved(args, problem)
    rep = ire.dare_cross_check(problem.plant, problem.J, sol, args.t, args.n)
    return {"verdict": _verdict(rep.verdict), "checks": [rep.to_dict()]}


def cmd_fcc(args, sysm, J, domain):
    dec = stabilize.fcc_decide(sysm, domain)
    h = stabilize.hautus_tests(sysm)
    return {
        "verdict": "pass", "fcc": dec.fcc, "via_are": dec.via_are, "via_structure": dec.via_structure,
        "stabilizable": h.stabilizable, "detectable": h.detectable, "witnesses": h.witnesses,
    }


def _realization(g) -> dict:
    return {"A": g.A, "B": g.B, "C": g.C, "D": g.D}


def cmd_factor(args, sysm, J, domain):
    if args.verb == "qrcf":
        fp = stabilize.qrcf_normalized(sysm)
        omegas = np.linspace(-50.0, 50.0, 50)
        norm_res = fp.normalization_residual(omegas)
        cp = stabilize.coprimeness_test(fp)
        ok = norm_res <= (args.tol or 1e-8) and cp.coprime
        return {
            "verdict": _verdict(ok), "M": _realization(fp.M_real), "N": _realization(fp.N_real),
            "normalization_residual": norm_res, "epsilon_estimate": cp.epsilon_estimate,
            "common_zeros": cp.zeros, "coprime": cp.coprime,
        }
    if args.verb == "dcf":
        jp = stabilize.joint_pair_from_ares(sysm)
        dcf = stabilize.dcf_construct(sysm, jp)
        res = dcf.identity_residual(stabilize.default_dcf_samples(sysm.A))
        blocks = {name: {"order": g.n, "stable": stabilize.is_stable(g) or g.n == 0,
                         "realization": _realization(g)} for name, g in dcf.blocks().items()}
        ok = res <= (args.tol or 1e-8) and all(b["stable"] for b in blocks.values())
        return {"verdict": _verdict(ok), "K": jp.K, "H": jp.H, "blocks": blocks, "identity_residual": res}
    pf = stabilize.spectral_factorize_popov(sysm, J)
    ok = pf.residual <= (args.tol or 1e-8)
    return {
        "verdict": _verdict(ok), "S": pf.S, "K": pf.K, "P": pf.P,
        "X": _realization(pf.X_real), "X_normalized": _realization(pf.X_normalized),
        "factor_residual": pf.residual, "inverse_abscissa": pf.extra["inverse_abscissa"],
    }


def _parse_param(text, m, p):
    """Static gain (nested list) or an ``{A, B, C, D}`` document."""
    val = load_json_arg(text, "--E")
    if isinstance(val, dict):
        E = system_from_document(val)
    else:
        Dm = np.atleast_2d(np.array(val, dtype=float))
        E = StateSpaceSystem(np.zeros((0, 0)), np.zeros((0, Dm.shape[1])), np.zeros((Dm.shape[0], 0)), Dm)
    if (E.m, E.p) != (p, m):
        raise InputError(f"--E: expected {p} inputs and {m} outputs")
    return E


def cmd_youla(args, sysm, J, domain):
    jp = stabilize.joint_pair_from_ares(sysm)
    dcf = stabilize.dcf_construct(sysm, jp)
    E = (_parse_param(args.E, sysm.m, sysm.p) if args.E else
         StateSpaceSystem(np.zeros((0, 0)), np.zeros((0, sysm.p)), np.zeros((sysm.m, 0)),
                          np.zeros((sysm.m, sysm.p))))
    ctrl = stabilize.youla_controller(dcf, E)
    abscissa = stabilize.closed_loop_abscissa(sysm, ctrl)
    return {"verdict": _verdict(abscissa < -1e-6), "controller": _realization(ctrl),
            "closed_loop_abscissa": abscissa}


def cmd_zeros(args, sysm, J, domain):
    return {"verdict": "pass", "invariant_zeros": stabilize.invariant_zeros(sysm),
            "transmission_zeros": stabilize.transmission_zeros(sysm)}


def cmd_coercive(args, sysm, J, domain):
    pts = _grid(args)
    grid = None if pts is None else [z.real for z in pts]
    res = stabilize.j_coercivity_check(sysm, J, grid)
    return {"verdict": _verdict(res.coercive), "coercive": res.coercive, "epsilon": res.epsilon,
            "axis_zeros": res.axis_zeros}


def cmd_simulate(args, sysm, J, domain):
    problem = _problem(args, sysm, J, domain)
    P, S, K = _given_or_solved(args, problem)
    plant = problem.plant
    if args.x0 is None:
        raise InputError("--x0 is required")
    x0 = _inline_matrix(args.x0, "--x0").ravel()
    if x0.size != plant.n:
        raise InputError(f"--x0: expected {plant.n} entries")
    A, B, C, D = plant
    loop = StateSpaceSystem(A + B @ K, B, C + D @ K, D)
    traj = simulate_traj(loop, problem.J, x0, None, args.t, args.n)
    xT = traj.states[-1]
    stable = spectral_abscissa(loop.A) < -1e-9
    total = traj.cost + (float(xT @ P @ xT) if stable else 0.0)
    predicted = float(x0 @ P @ x0)
    rel = abs(total - predicted) / max(1.0, abs(predicted))
    ok = rel <= (args.tol or 1e-6)
    return {"verdict": _verdict(ok), "cost_on_horizon": traj.cost, "tail_closed_cost": total,
            "predicted_cost": predicted, "relative_error": rel, "final_state": xT}


COMMANDS = {
    "are": cmd_are, "ire": cmd_ire, "rcc": cmd_rcc, "freq-ire": cmd_freq_ire,
    "spectral-factor": cmd_spectral_factor, "dare-check": cmd_dare_check, "fcc": cmd_fcc,
    "factor": cmd_factor, "youla": cmd_youla, "zeros": cmd_zeros, "coercive": cmd_coercive,
    "simulate": cmd_simulate,
}


# -- parser ------------------------------------------------------------------------

def _common(p, kind=False, pk=False, grid=False, t=None, n=None):
    p.add_argument("--system", help="system document (path or inline JSON)")
    p.add_argument("--J", help="output weight (path or inline JSON)")
    p.add_argument("--domain", choices=["exp", "out"])
    p.add_argument("--out", help="write the report document here")
    p.add_argument("--format", choices=["json", "text"], default="json")
    p.add_argument("--tol", type=float)
    if kind:
        p.add_argument("--kind", default="general", choices=[k.value for k in riccati.ProblemKind])
    if pk:
        p.add_argument("--P", help="inline matrix")
        p.add_argument("--K", help="inline matrix")
    if grid:
        p.add_argument("--grid", help="JSON list of points (reals or [re, im] pairs)")
    if t is not None:
        p.add_argument("--t", type=float, default=t)
    if n is not None:
        p.add_argument("--n", type=int, default=n)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lqric", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"lqric {__version__}")
    sub = parser.add_subparsers(dest="group", required=True)

    are = sub.add_parser("are", help="solve, enumerate or classify ARE solutions")
    are_sub = are.add_subparsers(dest="verb", required=True)
    for verb in ("solve", "enumerate", "classify"):
        p = are_sub.add_parser(verb)
        _common(p, kind=True, pk=verb == "classify")
        if verb == "enumerate":
            p.add_argument("--max-n", type=int, default=6)

    ire_p = sub.add_parser("ire", help="integral Riccati equation residuals")
    ire_sub = ire_p.add_subparsers(dest="verb", required=True)
    p = ire_sub.add_parser("verify")
    _common(p, kind=True, pk=True, t=1.0, n=100)
    p.add_argument("--mode", default="ire", choices=["ire", "st-ire", "sigma-opt"])

    p = sub.add_parser("rcc", help="residual cost condition proxy")
    _common(p, kind=True, pk=True, t=None)
    p.add_argument("--t", type=float, default=None, help="horizon T_max")

    for name in ("freq-ire", "spectral-factor"):
        _common(sub.add_parser(name), kind=True, pk=True, grid=True)
    _common(sub.add_parser("dare-check"), kind=True, pk=True, t=1.0, n=50)
    _common(sub.add_parser("fcc"))

    fac = sub.add_parser("factor", help="coprime and spectral factorizations")
    fac_sub = fac.add_subparsers(dest="verb", required=True)
    for verb in ("qrcf", "dcf", "popov"):
        _common(fac_sub.add_parser(verb))

    p = sub.add_parser("youla", help="controller from the Youla parameterization")
    _common(p)
    p.add_argument("--E", help="stable parameter: static gain matrix or {A, B, C, D}")

    _common(sub.add_parser("zeros"))
    _common(sub.add_parser("coercive"), grid=True)
    p = sub.add_parser("simulate", help="closed-loop cost against x0^T P x0")
    _common(p, kind=True, pk=True, t=20.0, n=2000)
    p.add_argument("--x0", help="inline initial state")
    return parser


def _emit(report, args, stdout):
    text = dumps(report) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    stdout.write(render_summary(report) if args.format == "text" else text)


def run(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or _sys.stdout
    stderr = stderr or _sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    command = args.group + (f" {args.verb}" if getattr(args, "verb", None) else "")
    try:
        sysm, J, domain, doc = _load_system(args)
    except InputError as exc:
        stderr.write(f"lqric: error: {exc}\n")
        return EXIT_USAGE
    inputs = {k: v for k, v in sorted(vars(args).items()) if k not in ("out", "format", "system")}
    inputs["system"] = system_to_document(sysm, J=J, domain=domain)
    try:
        results = COMMANDS[args.group](args, sysm, J, domain)
    except InputError as exc:
        stderr.write(f"lqric: error: {exc}\n")
        return EXIT_USAGE
    except (LqricError, np.linalg.LinAlgError, ValueError) as exc:
        results = {"verdict": "fail", "error": {"type": type(exc).__name__, "message": str(exc)}}
    report = make_report(command, inputs, results)
    _emit(report, args, stdout)
    return EXIT_OK if results.get("verdict") == "pass" else EXIT_FAIL


def main(argv=None) -> int:
    return run(argv)


if __name__ == "__main__":
    _sys.exit(main())
