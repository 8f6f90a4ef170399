"""Command-line interface: convergence studies (``run``) and stability diagnostics (``diagnose``)."""

from __future__ import annotations

import argparse
import logging
import os
import sys

THREADS_ENV = "BIOT_HHO_THREADS"
_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def _apply_thread_env():
    """Forward BIOT_HHO_THREADS to the BLAS thread variables (effective only
    before numpy is first imported, i.e. when launched as a console script)."""
    n = os.environ.get(THREADS_ENV)
    if n:
        for var in _THREAD_VARS:
            os.environ.setdefault(var, n)


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _auto_int(text):
    return None if text == "auto" else int(text)


def build_parser():
    p = argparse.ArgumentParser(prog="biot-hho", description="HHO discretisations of the Biot problem.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def physics(q):
        q.add_argument("--scheme", choices=("hho-hho", "hho-dg"), default="hho-hho")
        q.add_argument("--k", type=int, choices=(0, 1, 2, 3), default=1)
        q.add_argument("--distortion", type=float, default=0.1)
        q.add_argument("--tau", type=float, default=1e-3)
        q.add_argument("--tf", type=float, default=1.0)
        q.add_argument("--bdf", type=_auto_int, default=None, help="BDF order 1..4 or 'auto' (k+1)")
        q.add_argument("--kappa", type=float, default=1.0)
        q.add_argument("--c0", type=float, default=0.0)
        q.add_argument("--mu", type=float, default=1.0)
        q.add_argument("--lambda", dest="lam", type=float, default=1.0)
        q.add_argument("--eta", type=float, default=None, help="DG penalty (default 2(k+1)^2)")

    r = sub.add_parser("run", help="manufactured-solution convergence study")
    physics(r)
    r.add_argument("--mesh-seq", type=_int_list, default=[4, 8, 16, 32])
    r.add_argument("--bc", choices=("mixed", "homogeneous"), default="mixed")
    r.add_argument("--stride", type=_auto_int, default=None, help="error sampling stride or 'auto'")
    r.add_argument("--steps", type=int, default=None, help="stop after this many steps (smoke runs)")
    r.add_argument("--out", default=None, help="CSV path (default: stdout only)")
    r.add_argument("--no-timing", action="store_true", help="leave wall_s empty for byte-stable output")

    d = sub.add_parser("diagnose", help="stability and consistency checks on small meshes")
    physics(d)
    d.add_argument("--check", choices=("infsup", "coercivity", "energy", "commutation"), required=True)
    d.add_argument("--mesh-seq", type=_int_list, default=None)
    d.add_argument("--steps", type=int, default=None)
    return p


def _config(args):
    from .solver import BiotConfig

    return BiotConfig(
        k=args.k, scheme=args.scheme, mu=args.mu, lam=args.lam, c0=args.c0, kappa=args.kappa,
        tau=args.tau, t_final=args.tf, bdf_order=args.bdf, eta=args.eta,
        stride=getattr(args, "stride", None),
    )


def _cmd_run(args):
    from .harness import emit_csv, report_csv_text, run_convergence_study

    cfg = _config(args)
    report = run_convergence_study(args.scheme, args.k, args.mesh_seq, cfg, args.distortion, args.bc, args.steps)
    timing = not args.no_timing
    if args.out:
        text = emit_csv(report, args.out, timing)
    else:
        text = report_csv_text(report, timing)
    sys.stdout.write(text)
    return 0


def _variation(values):
    values = list(values)
    return (max(values) - min(values)) / max(values)


def _diagnose(args):
    """Return (ok, lines)."""
    from .mesh import PermeabilityField, build_trapezoidal_mesh, classify_boundary

    seq = args.mesh_seq
    lines = []
    if args.check == "infsup":
        from .coupling import compute_infsup_constant

        seq = seq or [2, 4, 8]
        betas = [compute_infsup_constant(build_trapezoidal_mesh(n, args.distortion), args.k) for n in seq]
        lines += [f"n={n} beta={b:.6e}" for n, b in zip(seq, betas)]
        var = _variation(betas)
        lines.append(f"variation={var:.4f}")
        return min(betas) > 0.0 and var < 0.2, lines

    if args.check == "coercivity":
        from .energy import coercivity_constants, dg_coercivity_constant
        from .space import HHOSpace

        seq = seq or [2, 4, 8]
        lows, ok = [], True
        for n in seq:
            mesh = classify_boundary(build_trapezoidal_mesh(n, args.distortion), mode="homogeneous")
            space = HHOSpace(mesh, args.k)
            lo, hi = coercivity_constants(space, args.mu, args.lam)
            lows.append(lo)
            line = f"n={n} alpha_lo={lo:.6e} alpha_hi={hi:.6e}"
            if args.scheme == "hho-dg":
                perm = PermeabilityField.uniform(mesh.num_cells, args.kappa)
                g = dg_coercivity_constant(space, perm, args.eta)
                line += f" gamma_dg={g:.6e}"
                ok = ok and g >= 0.2
            lines.append(line)
        var = _variation(lows)
        lines.append(f"alpha_lo_variation={var:.4f}")
        return ok and min(lows) > 0.0 and var < 0.25, lines

    if args.check == "energy":
        from .energy import energy_diagnostic
        from .manufactured import homogeneous_solution

        seq = seq or [4]
        ok = True
        cfg = _config(args)
        for n in seq:
            mesh = classify_boundary(build_trapezoidal_mesh(n, args.distortion), mode="homogeneous")
            sol = homogeneous_solution(args.kappa, args.mu, args.lam, args.c0)
            rep = energy_diagnostic(cfg, mesh, sol, steps=args.steps)
            lines.append(f"n={n} lhs={rep.lhs_total:.6e} rhs={rep.rhs_total:.6e} slack={rep.slack:.4e}")
            ok = ok and rep.holds
        return ok, lines

    # commutation
    from .coupling import commutation_error
    from .manufactured import biot_benchmark
    from .space import HHOSpace

    seq = seq or [2, 4]
    field = biot_benchmark().u_terms[0][1]
    ok = True
    for n in seq:
        err = commutation_error(HHOSpace(build_trapezoidal_mesh(n, args.distortion), args.k), field)
        lines.append(f"n={n} commutation_error={err:.3e}")
        ok = ok and err <= 1e-10
    return ok, lines


def _cmd_diagnose(args):
    ok, lines = _diagnose(args)
    for line in lines:
        print(line)
    if not ok:
        print(f"FAIL check={args.check} scheme={args.scheme} k={args.k}")
        return 1
    print(f"PASS check={args.check}")
    return 0


def main(argv=None):
    _apply_thread_env()
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    command = _cmd_run if args.command == "run" else _cmd_diagnose
    try:
        return command(args)
    except (ValueError, RuntimeError, FloatingPointError, OSError) as exc:
        print(f"FAIL command={args.command} error={type(exc).__name__}: {exc}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
