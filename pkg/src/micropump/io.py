"""CSV writers, gnuplot helpers and the run manifest."""
from __future__ import annotations

import csv
import json
import platform
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .pump_network import FlowRecord
from .sweep_analysis import AngleSweepRow, CalibrationResult, FrequencySweepRow, reference_deviations


def fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_csv(path: Path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    return path


def write_flow_record(record: FlowRecord, directory: Path) -> list[Path]:
    n = record.chamber_pressures.shape[1]
    header = ["time_s", "inlet_flow_m3s", "outlet_flow_m3s"] + [
        f"p_chamber_{i + 1}_pa" for i in range(n)]
    rows = (
        [float(t), float(qi), float(qo), *map(float, p)]
        for t, qi, qo, p in zip(record.time, record.inlet_flow, record.outlet_flow,
                                record.chamber_pressures)
    )
    samples = write_csv(directory / "flow_record.csv", header, rows)
    summary = write_csv(directory / "cycle_summary.csv",
                        ["cycle_index", "net_volume_m3", "flow_rate_ul_min"],
                        record.cycle_summaries())
    return [samples, summary]


def write_angle_sweep(rows: list[AngleSweepRow], directory: Path) -> list[Path]:
    main = write_csv(
        directory / "angle_sweep.csv",
        ["two_theta_deg", "W2_mm", "L_over_W1", "v_inlet_mm_s", "v_max_mm_s", "v_out_mm_s",
         "loss_rate"],
        [(r.two_theta, r.W2, r.L_over_W1, r.v_inlet, r.v_max, r.v_out, r.loss_rate) for r in rows],
    )
    ref = write_csv(
        directory / "angle_sweep_reference.csv",
        ["two_theta_deg", "v_out_model_mm_s", "v_out_reported_mm_s", "relative_deviation"],
        reference_deviations(rows),
    )
    return [main, ref]


def write_frequency_sweep(rows: list[FrequencySweepRow], directory: Path) -> Path:
    return write_csv(directory / "frequency_sweep.csv",
                     ["frequency_hz", "flow_rate_ul_min", "converged"],
                     [(r.frequency, r.flow_rate, r.converged) for r in rows])


def write_calibration(result: CalibrationResult, directory: Path) -> Path:
    rows = [
        ("stroke_volume_ref", result.stroke_volume_ref * 1e9, "ul"),
        ("response_cutoff", result.response_cutoff, "Hz"),
        ("achieved_flow_at_target", result.achieved_flow_at_target, "ul/min"),
        ("achieved_peak_flow", result.achieved_peak_flow, "ul/min"),
        ("achieved_peak_frequency", result.achieved_peak_frequency, "Hz"),
        ("residual", result.residual, "1"),
    ]
    return write_csv(directory / "calibration.csv", ["parameter", "value", "unit"], rows)


GNUPLOT_TEMPLATES = {
    "frequency_sweep": (
        "set datafile separator ','\n"
        "set xlabel 'frequency (Hz)'\nset ylabel 'net flow rate (ul/min)'\n"
        "plot 'frequency_sweep.csv' every ::1 using 1:2 with linespoints title 'simulated'\n"
    ),
    "angle_sweep": (
        "set datafile separator ','\n"
        "set xlabel '2 theta (deg)'\nset ylabel 'velocity (mm/s)'\n"
        "set y2label 'loss rate'\nset y2tics\n"
        "plot 'angle_sweep.csv' every ::1 using 1:6 with linespoints title 'v_out', \\\n"
        "     '' every ::1 using 1:5 with linespoints title 'v_max', \\\n"
        "     '' every ::1 using 1:7 axes x1y2 with linespoints title 'loss rate'\n"
    ),
}


def write_gnuplot(name: str, directory: Path) -> Path:
    path = Path(directory) / f"{name}.gp"
    path.write_text(GNUPLOT_TEMPLATES[name], encoding="utf-8")
    return path


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def write_manifest(directory: Path, *, command: str, flags: dict, config: dict,
                   started: str, status: str, summaries: dict, outputs: list[Path]) -> Path:
    manifest = {
        "tool": "micropump",
        "version": __version__,
        "python": platform.python_version(),
        "command": command,
        "flags": flags,
        "started": started,
        "finished": utc_now(),
        "status": status,
        "summaries": summaries,
        "outputs": sorted(Path(p).name for p in outputs),
        "config": config,
    }
    path = Path(directory) / "manifest.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n",
                    encoding="utf-8")
    return path
