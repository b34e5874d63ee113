"""On-disk formats: records CSV, key-value reports, and replayable plan files.

Every artifact starts with one metadata line carrying the format version, the
scenario hash and the master seed, so outputs can be traced back to the exact
configuration that produced them. Floats are written with repr(), which
round-trips exactly, and CSV uses comma separators with '.' decimal points.
"""

from __future__ import annotations

import csv
import io
from typing import Iterable

import numpy as np

from .attack import AttackPlan, StrategyA, StrategyB, WavelengthPlan
from .physics import BeamSplitterCurve, DetectorConfig, ForeignPulse, PulsePath
from .protocol import RecordBatch

RECORDS_FORMAT = "records-v1"
REPORT_FORMAT = "report-v1"
PLAN_FORMAT = "plan-v1"
SWEEP_FORMAT = "sweep-v1"

_QUAD_NAMES = ("X", "P")


def meta_line(fmt: str, scenario_hash: str, seed: int) -> str:
    return f"# format={fmt} scenario={scenario_hash} seed={seed}"


def read_meta(path) -> dict[str, str]:
    """Parse the leading metadata comment of an artifact (empty if absent)."""
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline().strip()
    if not first.startswith("#"):
        return {}
    out: dict[str, str] = {}
    for token in first[1:].split():
        key, sep, value = token.partition("=")
        if sep:
            out[key] = value
    return out


def fmt_value(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return repr(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_records_csv(path, batch: RecordBatch, scenario_hash: str, seed: int) -> None:
    """Stream a record batch as slot,quad,ratio,alice_x,bob_y rows."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(meta_line(RECORDS_FORMAT, scenario_hash, seed) + "\n")
        writer = csv.writer(fh)
        writer.writerow(["slot", "quad", "ratio", "alice_x", "bob_y"])
        for i in range(len(batch)):
            writer.writerow([
                int(batch.slot[i]),
                _QUAD_NAMES[batch.quad[i]],
                repr(float(batch.ratio[i])),
                repr(float(batch.alice_x[i])),
                repr(float(batch.bob_y[i])),
            ])


def read_records_csv(path) -> RecordBatch:
    """Load a records CSV back into a columnar batch (metadata line skipped)."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        first = fh.readline()
        if not first.startswith("#"):
            fh.seek(0)
        reader = csv.reader(fh)
        header = next(reader)
        if header[:5] != ["slot", "quad", "ratio", "alice_x", "bob_y"]:
            raise ValueError(f"unexpected records header {header!r}")
        slot, quad, ratio, ax, by = [], [], [], [], []
        for row in reader:
            slot.append(int(row[0]))
            quad.append(0 if row[1] == "X" else 1)
            ratio.append(float(row[2]))
            ax.append(float(row[3]))
            by.append(float(row[4]))
    return RecordBatch(slot, quad, ratio, ax, by)


def write_report(path, items: Iterable[tuple[str, object]], scenario_hash: str,
                 seed: int, fmt: str = REPORT_FORMAT) -> None:
    """Write a flat key = value document."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(meta_line(fmt, scenario_hash, seed) + "\n")
        for key, value in items:
            fh.write(f"{key} = {fmt_value(value)}\n")


def read_report(path) -> dict[str, str]:
    """Parse a key = value document back (values stay strings)."""
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


def plan_items(plan: AttackPlan, curve_name: str) -> list[tuple[str, object]]:
    """Flatten a plan (strategy scalars, D, wavelengths, intensities) for saving."""
    items: list[tuple[str, object]] = [("curve", curve_name)]
    if isinstance(plan.strategy, StrategyA):
        items += [("strategy", "A"), ("amplification", plan.strategy.amplification)]
    else:
        items += [("strategy", "B"),
                  ("slope_factor", plan.strategy.slope_factor),
                  ("fake_channel", plan.strategy.fake_channel)]
    wl = plan.wavelength
    items.append(("displacement", plan.displacement))
    if wl is not None:
        for name, pulse in zip(("signal1", "lo1", "signal2", "lo2"), wl.pulses):
            items.append((f"{name}_wavelength_nm", pulse.wavelength_nm))
            items.append((f"{name}_intensity", pulse.intensity))
        items.append(("shot_coeff_lo", wl.shot_coeff_lo))
        items.append(("shot_coeff_signal", wl.shot_coeff_signal))
    return items


def write_plan(path, plan: AttackPlan, curve_name: str, scenario_hash: str,
               seed: int) -> None:
    write_report(path, plan_items(plan, curve_name), scenario_hash, seed, fmt=PLAN_FORMAT)


def load_plan(path, curve: BeamSplitterCurve, detector: DetectorConfig) -> AttackPlan:
    """Rebuild a plan from a plan file, revalidating against the active curve."""
    kv = read_report(path)
    strategy_kind = kv["strategy"]
    if strategy_kind == "A":
        strategy: StrategyA | StrategyB = StrategyA(float(kv["amplification"]))
    elif strategy_kind == "B":
        strategy = StrategyB(float(kv["slope_factor"]), float(kv["fake_channel"]))
    else:
        raise ValueError(f"unknown strategy {strategy_kind!r} in plan file")
    displacement = float(kv["displacement"])
    if displacement == 0.0:
        return AttackPlan(strategy, None)
    pulses = []
    for name, path_kind in zip(("signal1", "lo1", "signal2", "lo2"),
                               (PulsePath.SIGNAL, PulsePath.LO,
                                PulsePath.SIGNAL, PulsePath.LO)):
        pulses.append(ForeignPulse(float(kv[f"{name}_wavelength_nm"]),
                                   float(kv[f"{name}_intensity"]), path_kind))
    wl = WavelengthPlan.from_pulses(curve, detector, pulses, displacement)
    return AttackPlan(strategy, wl)


def csv_text(rows: list[list], header: list[str], scenario_hash: str, seed: int,
             fmt: str = SWEEP_FORMAT) -> str:
    """Render generic CSV (for sweep grids) with the standard metadata line."""
    buf = io.StringIO()
    buf.write(meta_line(fmt, scenario_hash, seed) + "\n")
    writer = csv.writer(buf)
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt_value(v) for v in row])
    return buf.getvalue()
