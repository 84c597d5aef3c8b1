"""Command-line interface: ``robust-iswap <command> [flags]``.

Exit codes: 0 success, 2 optimization did not converge, 64 usage error,
65 malformed pulse file, 66 unreadable input or unwritable output.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import noise
from .hamiltonians import (ControlLayout, LayoutKind, MotionalModel, delta_j_motion_estimate,
                           delta_j_motrot_estimate, first_order_hamiltonian)
from .objectives import check_criteria, default_decomposition
from .optimize import (PLUS_PLUS, OptimizationConfig, bell_state_optimize, chebyshev_optimize,
                       critical_time_scan, grape_optimize)
from .propagation import step_hamiltonians
from .pulses import PulseFileError, native_pulse, read_pulse, write_pulse, write_waveform_csv

EXIT_OK, EXIT_NOT_CONVERGED, EXIT_USAGE, EXIT_SCHEMA, EXIT_IO = 0, 2, 64, 65, 66
THREADS_ENV = "ROBUST_ISWAP_THREADS"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None,
                   help=f"worker threads (default: ${THREADS_ENV} or 1)")
    p.add_argument("--out", type=Path, default=None, help="output file (stdout if omitted)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--quiet", action="store_true")
    return p


def _layout_flags(p, required=True):
    p.add_argument("--layout", choices=[k.value for k in LayoutKind], required=required)
    p.add_argument("--delta", type=float, default=None, help="detuning in units of J (detuned layout)")
    p.add_argument("--omega-max", type=float, default=50.0)


def _optimizer_flags(p, restarts=10):
    p.add_argument("--restarts", type=int, default=restarts)
    p.add_argument("--max-iterations", type=int, default=20000)
    p.add_argument("--cost-tolerance", type=float, default=1e-10)
    p.add_argument("--init-amplitude-scale", type=float, default=1.0)


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="robust-iswap", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("optimize-gate", parents=[common], help="optimize a robust iSWAP pulse")
    _layout_flags(p)
    p.add_argument("--duration", type=float, required=True, help="gate time J*T")
    p.add_argument("--basis", choices=("piecewise", "chebyshev"), default="piecewise")
    p.add_argument("--steps", type=int, default=None, help="piecewise steps (default 90)")
    p.add_argument("--order", type=int, default=None, help="Chebyshev order M")
    p.add_argument("--sampling-steps", type=int, default=None,
                   help="dense grid for Chebyshev pulses (default 1000)")
    p.add_argument("--coarse-steps", type=int, default=None,
                   help="run Chebyshev restarts on this grid first, then polish on the dense one")
    p.add_argument("--warm-start", type=Path, default=None)
    p.add_argument("--waveform-csv", type=Path, default=None)
    _optimizer_flags(p)

    p = sub.add_parser("scan-critical-time", parents=[common], help="best cost versus duration")
    _layout_flags(p)
    p.add_argument("--t-min", type=float, required=True)
    p.add_argument("--t-max", type=float, required=True)
    p.add_argument("--t-step", type=float, required=True)
    p.add_argument("--steps", type=int, default=90)
    _optimizer_flags(p)

    p = sub.add_parser("sweep", parents=[common], help="infidelity versus quasi-static dJ/J")
    p.add_argument("--pulse", type=Path, default=None)
    p.add_argument("--native", action="store_true", help="sweep the bare exchange gate")
    p.add_argument("--dj-min", type=float, default=-0.2)
    p.add_argument("--dj-max", type=float, default=0.2)
    p.add_argument("--points", type=int, default=81)
    p.add_argument("--initial-state", choices=("auto", "basis", "plus-plus"), default="auto",
                   help="gate fidelity (basis) or |++> preparation; auto reads the pulse metadata")

    p = sub.add_parser("simulate-motion", parents=[common], help="infidelity with axial motion")
    p.add_argument("--pulse", type=Path, required=True, help="robust pulse")
    p.add_argument("--omega", type=float, nargs="+", default=[5.0, 7.0, 10.0, 14.0],
                   help="trap frequencies in units of J")
    p.add_argument("--n-max", type=int, default=7)
    _length_flags(p)
    p.add_argument("--omega-over-kt", type=float, default=0.42)
    p.add_argument("--steps", type=int, default=None, help="sampling grid for Chebyshev pulses")

    p = sub.add_parser("ramsey", parents=[common], help="quasi-static dephasing of a Ramsey sequence")
    p.add_argument("--j", type=float, default=1.0)
    p.add_argument("--sigma", type=float, required=True, help="coupling spread in units of J")
    p.add_argument("--samples", type=int, default=100000)
    p.add_argument("--t-max", type=float, required=True)
    p.add_argument("--points", type=int, default=241)

    p = sub.add_parser("check-criteria", parents=[common], help="a-priori robustness criteria")
    _layout_flags(p)
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--amplitude-scale", type=float, default=5.0)

    p = sub.add_parser("prepare-bell", parents=[common], help="robust |++> exchange-state preparation")
    p.add_argument("--duration", type=float, default=4.47)
    p.add_argument("--steps", type=int, default=90)
    p.add_argument("--omega-max", type=float, default=50.0)
    p.add_argument("--waveform-csv", type=Path, default=None)
    _optimizer_flags(p)

    p = sub.add_parser("estimate-noise", parents=[common], help="coupling spread from motion")
    _length_flags(p)
    p.add_argument("--omega-over-kt", type=float, default=0.42)
    p.add_argument("--zeta", type=float, default=0.062)
    return parser


def _length_flags(p):
    p.add_argument("--length-ratio", type=float, default=None, help="harmonic length / separation")
    p.add_argument("--harmonic-length-nm", type=float, default=None)
    p.add_argument("--separation-um", type=float, default=None)


def _length_ratio(args) -> float:
    if args.length_ratio is not None:
        if args.harmonic_length_nm is not None or args.separation_um is not None:
            raise UsageError("give either --length-ratio or --harmonic-length-nm/--separation-um")
        return args.length_ratio
    nm = 80.0 if args.harmonic_length_nm is None else args.harmonic_length_nm
    um = 1.9 if args.separation_um is None else args.separation_um
    if um <= 0:
        raise UsageError("--separation-um must be positive")
    return nm * 1e-9 / (um * 1e-6)


def _threads(args) -> int:
    if args.threads is not None:
        n = args.threads
    else:
        env = os.environ.get(THREADS_ENV)
        try:
            n = int(env) if env else 1
        except ValueError:
            raise UsageError(f"${THREADS_ENV} must be an integer")
    if n < 1:
        raise UsageError("--threads must be at least 1")
    return n


def _layout(args) -> ControlLayout:
    kind = LayoutKind(args.layout)
    if kind is LayoutKind.DETUNED:
        delta = 2.0 if args.delta is None else args.delta
    else:
        if args.delta not in (None, 0.0):
            raise UsageError("--delta only applies to --layout detuned")
        delta = 0.0
    if not args.omega_max > 0:
        raise UsageError("--omega-max must be positive")
    return ControlLayout(kind, delta, args.omega_max)


def _config(args) -> OptimizationConfig:
    if args.restarts < 1 or args.max_iterations < 1 or not args.cost_tolerance > 0:
        raise UsageError("--restarts and --max-iterations must be >= 1, --cost-tolerance > 0")
    return OptimizationConfig(max_iterations=args.max_iterations, cost_tolerance=args.cost_tolerance,
                              restarts=args.restarts, seed=args.seed, omega_max=args.omega_max,
                              init_amplitude_scale=args.init_amplitude_scale,
                              threads=_threads(args))


def _log(args, msg):
    if not args.quiet:
        print(msg, file=sys.stderr)


def _emit_table(args, header, rows):
    if args.format == "json":
        text = json.dumps([dict(zip(header, map(float, r))) for r in rows], indent=1) + "\n"
        if args.out is None:
            sys.stdout.write(text)
        else:
            args.out.write_text(text)
        return
    if args.out is None:
        buf = io.StringIO()
        buf.write(",".join(header) + "\n")
        for r in rows:
            buf.write(",".join(f"{float(v):.17g}" for v in r) + "\n")
        sys.stdout.write(buf.getvalue())
    else:
        noise.write_csv(args.out, header, rows)


def _load_pulse(path):
    return read_pulse(path)


# --- commands -------------------------------------------------------------------

def cmd_optimize_gate(args) -> int:
    layout = _layout(args)
    if args.duration <= 0:
        raise UsageError("--duration must be positive")
    if args.basis == "piecewise":
        if (args.order is not None or args.sampling_steps is not None
                or args.coarse_steps is not None):
            raise UsageError("--order/--sampling-steps/--coarse-steps need --basis chebyshev")
        steps = 90 if args.steps is None else args.steps
        if steps < 1:
            raise UsageError("--steps must be at least 1")
    else:
        if args.order is None or args.order < 0:
            raise UsageError("--basis chebyshev needs --order M >= 0")
        if args.steps is not None:
            raise UsageError("--steps applies to --basis piecewise; use --sampling-steps")
        if args.coarse_steps is not None and args.coarse_steps < 1:
            raise UsageError("--coarse-steps must be at least 1")
    cfg = _config(args)
    if args.warm_start is not None:
        cfg = replace(cfg, warm_start=_load_pulse(args.warm_start))
    if args.basis == "piecewise":
        res = grape_optimize(layout, args.duration, steps, cfg)
    else:
        res = chebyshev_optimize(layout, args.duration, args.order, cfg,
                                 sampling_steps=args.sampling_steps,
                                 coarse_steps=args.coarse_steps)
    _write_result(args, res)
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def _write_result(args, res):
    b = res.breakdown
    _log(args, f"converged={res.converged} cost={b.cost:.3e} fidelity={b.fidelity:.12f} "
               f"robustness={b.robustness:.3e} iterations={res.iterations}")
    out = args.out if args.out is not None else Path("pulse.json")
    write_pulse(res.pulse, out)
    _log(args, f"pulse written to {out}")
    if args.waveform_csv is not None:
        write_waveform_csv(res.pulse, args.waveform_csv)


def cmd_scan_critical_time(args) -> int:
    layout = _layout(args)
    if args.t_step <= 0 or args.t_min <= 0 or args.t_min > args.t_max:
        raise UsageError("need 0 < --t-min <= --t-max and --t-step > 0")
    n = int(math.floor((args.t_max - args.t_min) / args.t_step + 1e-9)) + 1
    grid = [round(args.t_min + i * args.t_step, 12) for i in range(n)]
    if not grid:
        raise UsageError("empty duration grid")
    rows, t_star, _ = critical_time_scan(layout, grid, _config(args), steps=args.steps)
    _emit_table(args, ("t", "best_cost"), rows)
    _log(args, f"T* = {t_star}" if t_star is not None else "T* not reached on this grid")
    return EXIT_OK


def cmd_sweep(args) -> int:
    if (args.pulse is None) == (not args.native):
        raise UsageError("give exactly one of --pulse or --native")
    if args.points < 1:
        raise UsageError("--points must be at least 1")
    pulse = native_pulse() if args.native else _load_pulse(args.pulse)
    state = args.initial_state
    if state == "auto":
        state = "plus-plus" if pulse.metadata.get("protocol") == "bell-state" else "basis"
    init = PLUS_PLUS if state == "plus-plus" else None
    grid = np.linspace(args.dj_min, args.dj_max, args.points)
    rows = noise.sweep_infidelity(noise.SweepSpec(grid, pulse, initial_states=init))
    _emit_table(args, ("dj_over_j", "infidelity"), rows)
    return EXIT_OK


def cmd_simulate_motion(args) -> int:
    robust = _load_pulse(args.pulse)
    native = native_pulse()
    lr = _length_ratio(args)
    if args.n_max < 2 or args.omega_over_kt <= 0 or any(w <= 0 for w in args.omega):
        raise UsageError("need --n-max >= 2, --omega-over-kt > 0 and positive --omega values")
    rows, framed = [], []
    for w in args.omega:
        model = MotionalModel(omega_over_j=w, length_ratio=lr, beta_ratio=args.omega_over_kt,
                              n_max=args.n_max)
        try:
            nat = noise.simulate_with_motion(noise.MotionalSimSpec(model, native))
            rob = noise.simulate_with_motion(noise.MotionalSimSpec(model, robust), steps=args.steps)
        except ValueError as exc:
            raise UsageError(str(exc))
        nat_framed, _ = noise.optimize_frames_with_motion(noise.MotionalSimSpec(model, native))
        rows.append((w, nat, rob))
        framed.append((w, nat_framed))
        _log(args, f"omega/J={w:g}: native={nat:.3e} native(frames optimized)={nat_framed:.3e} "
                   f"robust={rob:.3e}")
    _emit_table(args, ("omega_over_j", "infidelity_native", "infidelity_robust"), rows)
    if args.out is not None:
        side = args.out.with_name(args.out.stem + "_native_framed" + args.out.suffix)
        if args.format == "json":
            side.write_text(json.dumps([{"omega_over_j": w, "infidelity_native_framed": v}
                                        for w, v in framed], indent=1) + "\n")
        else:
            noise.write_csv(side, ("omega_over_j", "infidelity_native_framed"), framed)
    return EXIT_OK


def cmd_ramsey(args) -> int:
    if args.sigma < 0 or args.samples < 1 or args.t_max <= 0 or args.points < 2:
        raise UsageError("need --sigma >= 0, --samples >= 1, --t-max > 0, --points >= 2")
    t = np.linspace(0.0, args.t_max, args.points)
    mc = noise.ramsey_monte_carlo(args.j, args.sigma, t, args.samples, args.seed)
    an = noise.ramsey_analytic(args.j, args.sigma, t)
    rows = [(ti, p, a) for (ti, p), a in zip(mc, an)]
    _emit_table(args, ("t", "p11_mc", "p11_analytic"), rows)
    if args.sigma > 0:
        tau = noise.fit_ramsey_decay(t, [p for _, p in mc], args.j)
        _log(args, f"fitted decay time {tau:.6g}, expected sqrt(2)/sigma = {math.sqrt(2) / args.sigma:.6g}")
    return EXIT_OK


def cmd_check_criteria(args) -> int:
    layout = _layout(args)
    if args.samples < 1:
        raise UsageError("--samples must be at least 1")
    rng = np.random.default_rng(args.seed)
    vals = np.empty((layout.n_channels, args.samples))
    vals[0::2] = args.amplitude_scale * rng.uniform(-1, 1, vals[0::2].shape)
    vals[1::2] = rng.uniform(-np.pi, np.pi, vals[1::2].shape)
    samples = step_hamiltonians(layout, vals)
    report = check_criteria(samples, first_order_hamiltonian(), default_decomposition())
    d = report.to_dict()
    d["layout"] = layout.kind.value
    text = json.dumps(d, indent=2) + "\n"
    if args.format == "csv":
        lines = [f"{k},{v}" for k, v in d.items() if not isinstance(v, dict)]
        lines += [f"fires_{k},{v}" for k, v in d["verdicts"].items()]
        text = "key,value\n" + "\n".join(lines) + "\n"
    if args.out is None:
        sys.stdout.write(text)
    else:
        args.out.write_text(text)
    return EXIT_OK


def cmd_prepare_bell(args) -> int:
    if args.duration <= 0 or args.steps < 1:
        raise UsageError("need --duration > 0 and --steps >= 1")
    res = bell_state_optimize(args.duration, _config(args), steps=args.steps)
    _write_result(args, res)
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def cmd_estimate_noise(args) -> int:
    lr = _length_ratio(args)
    if args.omega_over_kt <= 0 or args.zeta < 0:
        raise UsageError("need --omega-over-kt > 0 and --zeta >= 0")
    model = MotionalModel(length_ratio=lr, beta_ratio=args.omega_over_kt, zeta=args.zeta)
    out = {
        "length_ratio": lr,
        "omega_over_kt": args.omega_over_kt,
        "zeta": args.zeta,
        "coth_half_beta": 1.0 / math.tanh(0.5 * args.omega_over_kt),
        "delta_j_motion_over_j": delta_j_motion_estimate(model),
        "delta_j_motrot_over_j": delta_j_motrot_estimate(model),
    }
    if args.format == "json":
        text = json.dumps(out, indent=2) + "\n"
    else:
        text = "quantity,value\n" + "".join(f"{k},{v:.17g}\n" for k, v in out.items())
    if args.out is None:
        sys.stdout.write(text)
    else:
        args.out.write_text(text)
    return EXIT_OK


COMMANDS = {
    "optimize-gate": cmd_optimize_gate,
    "scan-critical-time": cmd_scan_critical_time,
    "sweep": cmd_sweep,
    "simulate-motion": cmd_simulate_motion,
    "ramsey": cmd_ramsey,
    "check-criteria": cmd_check_criteria,
    "prepare-bell": cmd_prepare_bell,
    "estimate-noise": cmd_estimate_noise,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"robust-iswap {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PulseFileError as exc:
        print(f"robust-iswap: malformed pulse file: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except OSError as exc:
        print(f"robust-iswap: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
