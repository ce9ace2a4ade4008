"""Command-line front end.

Exit codes: 0 success, 1 domain failure (non-convergence, calibration),
2 usage or configuration error. Failures print one line on stderr::

    micropump: error=<ExceptionName> reason=<message>
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .config import RunConfig, dump_config, load_config
from .errors import ConfigError, MicropumpError
from .io import (
    utc_now,
    write_angle_sweep,
    write_calibration,
    write_flow_record,
    write_frequency_sweep,
    write_gnuplot,
    write_csv,
    write_manifest,
)
from .pump_network import mean_channel_velocity, net_flow_rate, run_cycles
from .sweep_analysis import (
    angle_sweep,
    calibrate,
    frequency_sweep,
    optimize_angle,
)

COMMANDS = ("simulate", "sweep-angle", "sweep-freq", "calibrate", "optimize-angle")


def _progress(args, message):
    if not args.quiet:
        print(message, file=sys.stderr)


def cmd_simulate(cfg: RunConfig, out: Path, args):
    s = cfg.solver
    record = run_cycles(cfg.pump, cfg.drive, max_cycles=s.max_cycles,
                        steps_per_cycle=s.steps_per_cycle, cycle_rtol=s.cycle_rtol,
                        continuity_rtol=s.continuity_rtol)
    outputs = write_flow_record(record, out)
    rate = net_flow_rate(record)
    mean_q = rate / 6e10
    velocity = mean_channel_velocity(mean_q, cfg.pump.chambers[0]) * 1e3
    port_velocity = mean_q / cfg.pump.inlet_element.area * 1e3
    print(f"net_flow_rate_ul_min={rate!r}")
    print(f"mean_link_velocity_mm_s={velocity!r}")
    print(f"mean_port_velocity_mm_s={port_velocity!r}")
    summary = {"cycles": record.cycles, "converged": record.converged,
               "net_flow_rate_ul_min": rate, "mean_link_velocity_mm_s": velocity,
               "mean_port_velocity_mm_s": port_velocity,
               "max_continuity_residual_m3s": record.max_continuity_residual}
    return outputs, summary


def cmd_sweep_angle(cfg: RunConfig, out: Path, args):
    sw = cfg.sweep
    rows = angle_sweep(cfg.geometry, sw.angles_deg, sw.v_inlet_mm_s, sw.profile_factor)
    outputs = write_angle_sweep(rows, out)
    if args.gnuplot:
        outputs.append(write_gnuplot("angle_sweep", out))
    for r in rows:
        _progress(args, f"2theta={r.two_theta:g} W2={r.W2:.4f}mm v_out={r.v_out:.4f}mm/s")
    return outputs, {"rows": len(rows)}


def cmd_sweep_freq(cfg: RunConfig, out: Path, args):
    rows = frequency_sweep(cfg.pump, cfg.drive, cfg.sweep.frequencies_hz, cfg.solver,
                           workers=cfg.sweep.workers)
    outputs = [write_frequency_sweep(rows, out)]
    if args.gnuplot:
        outputs.append(write_gnuplot("frequency_sweep", out))
    for r in rows:
        _progress(args, f"f={r.frequency:g}Hz flow={r.flow_rate:.3f}ul/min converged={r.converged}")
    best = max((r for r in rows if r.flow_rate == r.flow_rate), key=lambda r: r.flow_rate, default=None)
    summary = {"points": len(rows), "converged": sum(r.converged for r in rows),
               "argmax_hz": best.frequency if best else None,
               "peak_flow_ul_min": best.flow_rate if best else None,
               "failures": [r.error for r in rows if r.error]}
    if any(not r.converged for r in rows):
        _progress(args, "warning: some frequency points did not converge")
    return outputs, summary


def cmd_calibrate(cfg: RunConfig, out: Path, args):
    c = cfg.calibration
    result = calibrate(cfg.pump, c.flow_ul_min, c.frequency_hz, c.voltage_v, drive_base=cfg.drive,
                       fc_bounds=c.fc_bounds_hz, stroke_bounds=c.stroke_bounds_m3,
                       settings=cfg.solver)
    outputs = [write_calibration(result, out)]
    if result.stroke_volume_ref > 0:
        fitted = cfg.to_dict()
        fitted["membrane"]["stroke_volume_ul"] = result.stroke_volume_ref * 1e9
        fitted["membrane"]["response_cutoff_hz"] = result.response_cutoff
        fitted["drive"]["voltage_v"] = c.voltage_v
        fitted["drive"]["frequency_hz"] = c.frequency_hz
        from .config import config_from_dict
        path = out / "calibrated_config.toml"
        path.write_text(dump_config(config_from_dict(fitted)), encoding="utf-8")
        outputs.append(path)
    print(f"stroke_volume_ul={result.stroke_volume_ref * 1e9!r}")
    print(f"response_cutoff_hz={result.response_cutoff!r}")
    print(f"residual={result.residual!r}")
    summary = {"residual": result.residual, "peak_frequency_hz": result.achieved_peak_frequency,
               "peak_flow_ul_min": result.achieved_peak_flow}
    return outputs, summary


def cmd_optimize_angle(cfg: RunConfig, out: Path, args):
    sw = cfg.sweep
    opt = optimize_angle(cfg.pump, cfg.drive, sw.angle_range_deg, xi_base=cfg.xi_base,
                         grid_step=sw.angle_grid_step_deg, settings=cfg.solver)
    rows = [(a, q, "grid") for a, q in opt.grid] + [(a, q, "golden") for a, q in opt.refinements]
    outputs = [write_csv(out / "angle_optimization.csv",
                         ["two_theta_deg", "flow_rate_ul_min", "stage"], rows)]
    print(f"best_angle_deg={opt.best_angle!r}")
    print(f"best_flow_ul_min={opt.best_flow!r}")
    return outputs, {"best_angle_deg": opt.best_angle, "best_flow_ul_min": opt.best_flow}


HANDLERS = {
    "simulate": cmd_simulate,
    "sweep-angle": cmd_sweep_angle,
    "sweep-freq": cmd_sweep_freq,
    "calibrate": cmd_calibrate,
    "optimize-angle": cmd_optimize_angle,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="micropump",
                                     description="Valve-less peristaltic micropump simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("config", help="TOML config path or bundled name (paper_baseline, paper_calibrated)")
        p.add_argument("--out", help="output directory (overrides output.directory)")
        p.add_argument("--dt-divisor", type=int, help="time steps per drive period")
        p.add_argument("--quiet", action="store_true", help="suppress progress lines")
        p.add_argument("--gnuplot", action="store_true", help="also write gnuplot scripts")
    return parser


def _fail(kind: str, message: str, code: int) -> int:
    reason = " ".join(str(message).split())
    print(f"micropump: error={kind} reason={reason}", file=sys.stderr)
    return code


def run_command(command: str, config_path, out=None, dt_divisor=None, quiet=False,
                gnuplot=False) -> int:
    args = argparse.Namespace(command=command, config=str(config_path), out=out,
                              dt_divisor=dt_divisor, quiet=quiet, gnuplot=gnuplot)
    return _run(args)


def _run(args) -> int:
    started = utc_now()
    if args.command not in HANDLERS:
        return _fail("UsageError", f"unknown subcommand {args.command!r}", 2)
    try:
        cfg = load_config(args.config)
        if args.dt_divisor is not None:
            if args.dt_divisor < 200:
                return _fail("UsageError", "--dt-divisor must be >= 200", 2)
            cfg = replace(cfg, solver=replace(cfg.solver, steps_per_cycle=args.dt_divisor))
            cfg.raw["solver"]["dt_divisor"] = args.dt_divisor
    except ConfigError as exc:
        return _fail(type(exc).__name__, exc, 2)
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    flags = {"out": str(out), "dt_divisor": args.dt_divisor, "quiet": args.quiet,
             "gnuplot": args.gnuplot, "config": args.config}
    _progress(args, f"micropump {args.command}: writing to {out}")
    try:
        outputs, summary = HANDLERS[args.command](cfg, out, args)
    except MicropumpError as exc:
        write_manifest(out, command=args.command, flags=flags, config=cfg.to_dict(),
                       started=started, status="failed",
                       summaries={"error": type(exc).__name__, "reason": str(exc)}, outputs=[])
        return _fail(type(exc).__name__, exc, 1)
    write_manifest(out, command=args.command, flags=flags, config=cfg.to_dict(),
                   started=started, status="ok", summaries=summary, outputs=outputs)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return _run(args)


if __name__ == "__main__":
    sys.exit(main())
