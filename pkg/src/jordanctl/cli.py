"""jordanctl command-line front end.

Exit status: 0 success, 2 verified-negative result (e.g. NotControllable),
1 any error.  Every output record carries a provenance header with the full
effective configuration; numeric values are decimal strings.
"""
from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from pathlib import Path
from typing import List, Optional

import mpmath as mp

from . import __version__
from .arith import Surd
from .errors import WorkbenchError
from .model import SystemParams, compute_spectrum, default_precision

EXIT_OK, EXIT_ERROR, EXIT_NEGATIVE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_ERROR)


# ----- records ---------------------------------------------------------------------

def envelope(command: str, config: dict, result) -> dict:
    return {"provenance": {"tool": "jordanctl", "version": __version__,
                           "command": command, "config": config},
            "result": result}


def dump(record: dict, out: Optional[str]) -> str:
    text = json.dumps(record, indent=2, ensure_ascii=False) + "\n"
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")
    return text


def load(path: str) -> dict:
    rec = json.loads(Path(path).read_text(encoding="utf-8"))
    return rec.get("result", rec) if isinstance(rec, dict) else rec


def _params(ns) -> SystemParams:
    return SystemParams(ns.n, ns.d, ns.alpha, ns.precision)


def _num(text: str):
    """Keep exact inputs exact: '2', '1/3', '0.5' become int/Fraction."""
    try:
        f = Fraction(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text}")
    return int(f) if f.denominator == 1 else f


def _config(ns) -> dict:
    out = {}
    for k, v in sorted(vars(ns).items()):
        if k in ("func",):
            continue
        out[k] = v if isinstance(v, (int, str, bool, type(None), list)) else str(v)
    return out


def _x0(ns):
    if getattr(ns, "x0_surd", None):
        return Surd.parse(ns.x0_surd)
    if getattr(ns, "x0_num", None) is not None:
        return Fraction(ns.x0_num, ns.x0_den or 1)
    return None


def _emit(ns, result) -> None:
    sys.stdout.write(dump(envelope(ns.command, _config(ns), result), getattr(ns, "out", None)))


# ----- subcommands -------------------------------------------------------------------

def cmd_spectrum(ns) -> int:
    params = _params(ns)
    spec = compute_spectrum(params, ns.kmax)
    dps = params.precision
    rows = []
    for (j, k) in sorted(spec.pairs, key=lambda p: (p[1], p[0])):
        p = spec.pairs[(j, k)]
        rows.append({"j": j, "k": k, "lambda_re": mp.nstr(mp.re(p.lam), dps),
                     "lambda_im": mp.nstr(mp.im(p.lam), dps),
                     "V": [[mp.nstr(mp.re(c), dps), mp.nstr(mp.im(c), dps)] for c in p.V]})
    coll = [[list(a), list(b)] for a, b in spec.collisions if a < b]
    _emit(ns, {"params": params.to_record(), "pairs": rows, "collisions": coll})
    return EXIT_OK


def cmd_check(ns) -> int:
    from .criteria import check_boundary, check_distributed, check_pointwise
    params = _params(ns)
    if ns.setting == "boundary":
        v = check_boundary(params, ns.kmax)
    elif ns.setting == "distributed":
        v = check_distributed(params, ns.kmax)
    else:
        x0 = _x0(ns)
        if x0 is None:
            raise WorkbenchError("pointwise setting needs --x0-num/--x0-den or --x0-surd")
        v = check_pointwise(params, x0, ns.kmax, ns.T)
    _emit(ns, v.to_record())
    return EXIT_NEGATIVE if v.negative else EXIT_OK


def _read_exponents(path: str):
    text = Path(path).read_text(encoding="utf-8").strip()
    if text.startswith("{") or text.startswith("["):
        rec = json.loads(text)
        rec = rec.get("result", rec) if isinstance(rec, dict) else rec
        items = rec["exponents"] if isinstance(rec, dict) else rec
    else:
        items = [line.split() for line in text.splitlines() if line.strip() and not line.startswith("#")]
    out = []
    for it in items:
        if isinstance(it, (list, tuple)):
            re_, im_ = (it[0], it[1]) if len(it) > 1 else (it[0], "0")
        else:
            re_, im_ = it, "0"
        out.append(mp.mpc(mp.mpf(str(re_)), mp.mpf(str(im_))))
    return out


def cmd_biortho(ns) -> int:
    from .moments import ExponentFamily, biortho
    with mp.workdps(ns.precision):
        lam = _read_exponents(ns.lambda_file)
        fam = ExponentFamily(lam, mp.mpf(str(ns.T)), ns.precision, eta=ns.eta)
        bio = biortho(fam)
    _emit(ns, bio.to_record())
    return EXIT_OK


def _initial_state(spec: str, n: int):
    from .synth import InitialState
    if spec.startswith("random:"):
        parts = spec.split(":")
        K = int(parts[1])
        seed = int(parts[2]) if len(parts) > 2 else 0
        return InitialState.random(n, range(1, K + 1), seed)
    return InitialState.from_record(load(spec))


def cmd_synthesize(ns) -> int:
    from .synth import synthesize_boundary, synthesize_pointwise
    params = _params(ns)
    y0 = _initial_state(ns.y0, params.n)
    with mp.workdps(params.precision):
        T = mp.mpf(str(ns.T))
        if ns.setting == "pointwise":
            x0 = _x0(ns)
            if x0 is None:
                raise WorkbenchError("pointwise synthesis needs --x0-num/--x0-den or --x0-surd")
            res = synthesize_pointwise(params, y0, x0, ns.K, T)
        else:
            res = synthesize_boundary(params, y0, ns.K, T)
    result = {"params": params.to_record(), "K": ns.K, "setting": ns.setting,
              "y0": y0.to_record(), "control": res.control.to_record(),
              "moment_residual_abs": mp.nstr(res.report.max_abs, 10),
              "moment_residual_scaled": mp.nstr(res.report.max_scaled, 10),
              "realness_defect": mp.nstr(mp.mpf(res.realness_defect), 10),
              "note": res.note}
    _emit(ns, result)
    return EXIT_OK


def cmd_simulate(ns) -> int:
    from .sim import simulate_boundary
    from .synth import ControlSignal, InitialState
    prec = ns.precision
    prm_rec = load(ns.params)
    if "params" in prm_rec:
        prm_rec = prm_rec["params"]
    params = SystemParams.from_record(prm_rec)
    ctrl_rec = load(ns.control) if ns.control else None
    K_ctrl = None
    if ctrl_rec is not None and "control" in ctrl_rec:
        K_ctrl = ctrl_rec.get("K")
        ctrl_rec = ctrl_rec["control"]
    control = ControlSignal.from_record(ctrl_rec) if ctrl_rec is not None else None
    y0_rec = load(ns.y0) if ns.y0 else None
    if y0_rec is not None and "y0" in y0_rec:
        y0_rec = y0_rec["y0"]
    y0 = InitialState.from_record(y0_rec) if y0_rec is not None else InitialState.zero(params.n)
    with mp.workdps(max(prec, control.precision if control else 0)):
        T = mp.mpf(str(ns.T)) if ns.T is not None else (control.T if control else None)
        if T is None:
            raise WorkbenchError("give --T or a control")
        grid = [T * i / ns.steps for i in range(ns.steps + 1)]
        traj = simulate_boundary(params, y0, control, ns.kmax, t_grid=grid, T=T)
        summary = traj.summary()
        if K_ctrl:
            summary["K_controlled"] = K_ctrl
            summary["max_abs_terminal_controlled"] = mp.nstr(
                traj.max_terminal(range(1, min(K_ctrl, ns.kmax) + 1)), 15)
        rows = [[mp.nstr(t, 20), k, c, mp.nstr(re, 17), mp.nstr(im, 17)]
                for t, k, c, re, im in traj.rows()]
    _emit(ns, {"summary": summary, "columns": ["t", "k", "component", "re", "im"], "rows": rows})
    return EXIT_OK


def cmd_counterexample(ns) -> int:
    from .construct import build_counterexample
    ce = build_counterexample(ns.eps, ns.grid)
    if ns.action == "build":
        _emit(ns, ce.to_record(ns.samples))
        return EXIT_OK
    rec = {"constants": ce.to_record(0)["constants"], "report": ce.report.to_record(),
           "attempts": [[e, why] for e, why in ce.attempts]}
    _emit(ns, rec)
    return EXIT_OK if ce.report.ok else EXIT_ERROR


def cmd_resolve(ns) -> int:
    from . import opcalc
    import sympy as sp
    if ns.mode == "symbolic":
        chain = opcalc.verify_chain()
        ok1, r1 = opcalc.verify_identity_MstarLstar()
        ok2, r2 = opcalc.verify_identity_LM()
        _, Mstar = opcalc.build_Mstar_chain()
        rec = {"chain_identities": [ok for ok, _ in chain], "Mstar_Lstar_identity": ok1,
               "L_M_identity": ok2, "Mstar": Mstar.pretty(),
               "required_smoothness": opcalc.required_smoothness()}
        ok = all(ok for ok, _ in chain) and ok1 and ok2
    elif ns.mode == "polynomial":
        D = ns.q_poly_degree
        qx = sum(opcalc.X ** i for i in range(1, D + 1))
        jets = {i: sp.diff(qx, opcalc.X, i) for i in range(opcalc.JET_ORDER + 1)}
        _, Mstar = opcalc.build_Mstar_chain()
        ok1, _ = opcalc.polynomial_oracle(Mstar @ opcalc.build_Lstar(), opcalc.DiffOp.identity(2),
                                          ns.degree, ns.trials, ns.seed, jets)
        ok2, _ = opcalc.polynomial_oracle(opcalc.build_L() @ opcalc.build_M(),
                                          opcalc.DiffOp.identity(2), ns.degree, ns.trials,
                                          ns.seed, jets)
        rec = {"q": str(qx), "test_degree": ns.degree, "Mstar_Lstar": ok1, "L_M": ok2}
        ok = ok1 and ok2
    else:
        from .construct import build_counterexample
        q = build_counterexample().q
        window = (1.20, 1.24)
        conv = opcalc.fd_convergence([q.derivative(i) for i in range(3)], window, ns.h, ns.levels)
        import math
        orders = [math.log2(a[1] / b[1]) for a, b in zip(conv[:-1], conv[1:])]
        rec = {"window": list(window), "h_and_error": [[h, e] for h, e in conv], "orders": orders}
        ok = conv[-1][1] <= 1e-4 and all(o >= 3 for o in orders)
    _emit(ns, rec)
    return EXIT_OK if ok else EXIT_ERROR


# ----- parser ----------------------------------------------------------------------------

def _system_args(p, need_n: bool = True):
    p.add_argument("--n", type=int, required=need_n)
    p.add_argument("--d", type=_num, default=1)
    p.add_argument("--alpha", type=_num, default=0)


def _x0_args(p):
    p.add_argument("--x0-num", type=int)
    p.add_argument("--x0-den", type=int)
    p.add_argument("--x0-surd", help="a,b,c[,e] for x0/pi = (a + b sqrt c)/e")


def build_parser() -> argparse.ArgumentParser:
    prec = default_precision()
    ap = _Parser(prog="jordanctl", description="Controllability workbench for Jordan-block parabolic systems.")
    ap.add_argument("--version", action="version", version=f"jordanctl {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("spectrum", help="eigenpairs and collisions")
    _system_args(p)
    p.add_argument("--kmax", type=int, default=20)
    p.add_argument("--precision", type=int, default=prec)
    p.add_argument("--out")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("check", help="controllability verdict")
    p.add_argument("--setting", choices=["boundary", "distributed", "pointwise"], default="boundary")
    _system_args(p)
    _x0_args(p)
    p.add_argument("--kmax", type=int, default=50)
    p.add_argument("--T", type=float)
    p.add_argument("--precision", type=int, default=prec)
    p.add_argument("--out")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("biortho", help="biorthogonal family to exponentials")
    p.add_argument("--lambda-file", required=True)
    p.add_argument("--T", type=str, required=True)
    p.add_argument("--precision", type=int, default=max(prec, 300))
    p.add_argument("--eta", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_biortho)

    p = sub.add_parser("synthesize", help="moment-method null control")
    p.add_argument("--setting", choices=["boundary", "pointwise"], default="boundary")
    _system_args(p)
    _x0_args(p)
    p.add_argument("--T", type=str, required=True)
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--y0", required=True, help="record file or random:K[:seed]")
    p.add_argument("--precision", type=int, default=max(prec, 300))
    p.add_argument("--out")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("simulate", help="modal boundary-control simulation")
    p.add_argument("--params", required=True, help="params record (a synthesize output works)")
    p.add_argument("--y0", help="initial-state record (a synthesize output works)")
    p.add_argument("--control", help="control record (a synthesize output works)")
    p.add_argument("--kmax", type=int, default=16)
    p.add_argument("--steps", type=int, default=4)
    p.add_argument("--T", type=str)
    p.add_argument("--precision", type=int, default=prec)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("counterexample", help="explicit potential with an invisible eigenfunction")
    p.add_argument("action", choices=["build", "verify"])
    p.add_argument("--eps", type=float, default=0.02)
    p.add_argument("--grid", type=int, default=10_000)
    p.add_argument("--samples", type=int, default=201)
    p.add_argument("--out")
    p.set_defaults(func=cmd_counterexample)

    p = sub.add_parser("resolve", help="algebraic resolvability identities")
    p.add_argument("mode", choices=["symbolic", "polynomial", "numeric"])
    p.add_argument("--q-poly-degree", type=int, default=1, help="q(x) = x + ... + x^D")
    p.add_argument("--degree", type=int, default=6, help="degree of the polynomial test data")
    p.add_argument("--trials", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--h", type=float, default=0.008)
    p.add_argument("--levels", type=int, default=3)
    p.add_argument("--out")
    p.set_defaults(func=cmd_resolve)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        return ns.func(ns)
    except (WorkbenchError, ValueError, TypeError, OSError, KeyError, ArithmeticError) as exc:
        print(f"error: {type(exc).__name__}: {exc}".splitlines()[0], file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
