"""Scenario files: flat, sectioned key-value configuration for batch runs.

Format is INI-like: ``[section]`` headers, ``key = value`` lines, ``#``
comments. Unknown sections or keys are hard errors carrying the offending
line number. Units follow the simulator conventions: intensities in
photo-electron counts, modulation/excess noise in shot-noise units.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from .attack import DEFAULT_WAVELENGTHS
from .errors import ConfigError
from .physics import BeamSplitterCurve, DetectorConfig, builtin_curve, load_curve
from .protocol import AttenuationSchedule, SystemParams

_SYSTEM_KEYS = {
    "modulation_variance", "detector_efficiency", "electronic_noise",
    "channel_transmittance", "excess_noise", "lo_intensity", "amplification", "curve",
}
_ATTACK_KEYS = {
    "strategy", "mode", "plan", "amplification", "compensate_lo",
    "set1_signal_nm", "set1_lo_nm", "set2_signal_nm", "set2_lo_nm",
}
_RUN_KEYS = {"slots", "master_seed"}
_OUTPUT_KEYS = {"records", "report", "polynomial", "verdict", "plan", "sweep"}


def _parse_float(value: str, line: int, key: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {value!r}", line)


def _parse_int(value: str, line: int, key: str) -> int:
    x = _parse_float(value, line, key)
    if x != int(x):
        raise ConfigError(f"{key}: expected an integer, got {value!r}", line)
    return int(x)


def _parse_bool(value: str, line: int, key: str) -> bool:
    v = value.strip().lower()
    if v in ("true", "yes", "1"):
        return True
    if v in ("false", "no", "0"):
        return False
    raise ConfigError(f"{key}: expected true/false, got {value!r}", line)


@dataclass
class Scenario:
    """One fully specified run: system constants, attack request, outputs."""

    params: SystemParams
    curve_name: str = "50:50"
    attack_kind: str = "none"        # none | A | B
    attack_mode: str = "solve"       # solve | plan | fixed
    plan_path: str | None = None
    fixed_amplification: float | None = None
    compensate_lo: bool = True
    wavelengths: tuple[float, float, float, float] = DEFAULT_WAVELENGTHS
    slots: int = 1_000_000
    master_seed: int = 1
    outputs: dict[str, str] = field(default_factory=dict)
    source_text: str = ""

    def __post_init__(self):
        if self.slots <= 0:
            raise ConfigError(f"slots must be > 0, got {self.slots}")
        if self.attack_kind not in ("none", "A", "B"):
            raise ConfigError(f"attack strategy must be none/A/B, got {self.attack_kind!r}")
        if self.attack_mode not in ("solve", "plan", "fixed"):
            raise ConfigError(f"attack mode must be solve/plan/fixed, got {self.attack_mode!r}")
        if self.attack_mode == "plan" and not self.plan_path:
            raise ConfigError("attack mode 'plan' needs a plan = <path> entry")
        if self.attack_mode == "fixed" and self.fixed_amplification is None:
            raise ConfigError("attack mode 'fixed' needs amplification = <N>")
        if not self.source_text:
            self.source_text = self.canonical_text()

    def scenario_hash(self) -> str:
        return hashlib.sha256(self.source_text.encode("utf-8")).hexdigest()[:16]

    def load_curve(self) -> BeamSplitterCurve:
        if self.curve_name in ("50:50", "10:90"):
            return builtin_curve(self.curve_name)
        return load_curve(self.curve_name)

    def canonical_text(self) -> str:
        p = self.params
        lines = [
            "[system]",
            f"modulation_variance = {p.modulation_variance!r}",
            f"detector_efficiency = {p.detector.efficiency!r}",
            f"electronic_noise = {p.detector.electronic_noise!r}",
            f"channel_transmittance = {p.channel_transmittance!r}",
            f"excess_noise = {p.excess_noise!r}",
            f"lo_intensity = {p.lo_intensity!r}",
            f"curve = {self.curve_name}",
            "[schedule]",
        ]
        for r, prob in p.schedule.entries:
            lines.append(f"{r!r} = {prob!r}")
        lines += ["[attack]", f"strategy = {self.attack_kind}"]
        if self.attack_kind != "none":
            lines.append(f"mode = {self.attack_mode}")
            if self.plan_path:
                lines.append(f"plan = {self.plan_path}")
            if self.fixed_amplification is not None:
                lines.append(f"amplification = {self.fixed_amplification!r}")
            lines.append(f"compensate_lo = {str(self.compensate_lo).lower()}")
        lines += ["[run]", f"slots = {self.slots}", f"master_seed = {self.master_seed}"]
        if self.outputs:
            lines.append("[outputs]")
            lines += [f"{k} = {v}" for k, v in sorted(self.outputs.items())]
        return "\n".join(lines) + "\n"


def parse_scenario(text: str) -> Scenario:
    """Parse scenario text, reporting problems with their line numbers."""
    section = None
    system: dict[str, tuple[str, int]] = {}
    schedule: list[tuple[float, float]] = []
    attack: dict[str, tuple[str, int]] = {}
    run: dict[str, tuple[str, int]] = {}
    outputs: dict[str, str] = {}

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {raw.strip()!r}", lineno)
            section = line[1:-1].strip().lower()
            if section not in ("system", "schedule", "attack", "run", "outputs"):
                raise ConfigError(f"unknown section [{section}]", lineno)
            continue
        if section is None:
            raise ConfigError("entry before any [section] header", lineno)
        if "=" not in line:
            raise ConfigError(f"expected key = value, got {raw.strip()!r}", lineno)
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if section == "system":
            if key not in _SYSTEM_KEYS:
                raise ConfigError(f"unknown [system] key {key!r}", lineno)
            system[key] = (value, lineno)
        elif section == "schedule":
            ratio = _parse_float(key, lineno, "schedule ratio")
            prob = _parse_float(value, lineno, "schedule probability")
            schedule.append((ratio, prob))
        elif section == "attack":
            if key not in _ATTACK_KEYS:
                raise ConfigError(f"unknown [attack] key {key!r}", lineno)
            attack[key] = (value, lineno)
        elif section == "run":
            if key not in _RUN_KEYS:
                raise ConfigError(f"unknown [run] key {key!r}", lineno)
            run[key] = (value, lineno)
        else:
            if key not in _OUTPUT_KEYS:
                raise ConfigError(f"unknown [outputs] key {key!r}", lineno)
            outputs[key] = value

    def sysf(key: str, default: float) -> float:
        if key not in system:
            return default
        value, lineno = system[key]
        return _parse_float(value, lineno, key)

    detector = DetectorConfig(
        efficiency=sysf("detector_efficiency", 0.5),
        electronic_noise=sysf("electronic_noise", 0.0),
        amplification=sysf("amplification", 1.0),
    )
    if not schedule:
        schedule = [(0.001, 0.5), (1.0, 0.5)]
    try:
        sched = AttenuationSchedule(tuple(schedule))
        params = SystemParams(
            modulation_variance=sysf("modulation_variance", 5.0),
            channel_transmittance=sysf("channel_transmittance", 0.9),
            excess_noise=sysf("excess_noise", 0.1),
            detector=detector,
            lo_intensity=sysf("lo_intensity", 1e8),
            schedule=sched,
        )
    except (ValueError, ConfigError) as exc:
        raise ConfigError(str(exc)) from exc

    if "mode" in attack:
        mode = attack["mode"][0]
    elif "amplification" in attack:
        mode = "fixed"
    else:
        mode = "solve"

    wavelengths = tuple(
        _parse_float(attack[k][0], attack[k][1], k) if k in attack else DEFAULT_WAVELENGTHS[i]
        for i, k in enumerate(("set1_signal_nm", "set1_lo_nm", "set2_signal_nm", "set2_lo_nm"))
    )
    fixed_n = None
    if "amplification" in attack:
        fixed_n = _parse_float(*attack["amplification"], "amplification")
    compensate = True
    if "compensate_lo" in attack:
        compensate = _parse_bool(*attack["compensate_lo"], "compensate_lo")

    slots = _parse_int(*run["slots"], "slots") if "slots" in run else 1_000_000
    seed = _parse_int(*run["master_seed"], "master_seed") if "master_seed" in run else 1

    return Scenario(
        params=params,
        curve_name=system["curve"][0] if "curve" in system else "50:50",
        attack_kind=attack["strategy"][0] if "strategy" in attack else "none",
        attack_mode=mode,
        plan_path=attack["plan"][0] if "plan" in attack else None,
        fixed_amplification=fixed_n,
        compensate_lo=compensate,
        wavelengths=wavelengths,  # type: ignore[arg-type]
        slots=slots,
        master_seed=seed,
        outputs=outputs,
        source_text=text,
    )


def load_scenario(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_scenario(fh.read())
