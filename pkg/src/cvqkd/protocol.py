"""Honest Gaussian-modulated coherent-state session and its parameter estimators.

Conventions: Alice's quadrature x is stored pre-channel in sqrt(N0)
normalization, so Var(x) = V_A * N0 with N0 = eta * I_LO the shot-noise unit.
Bob's outcome is the total differential current
    y = sqrt(r * eta * eta_ch) * x + noise,
whose conditional variance at attenuation ratio r is
    r * eta * eta_ch * xi * N0 + N0 + v_el.
That makes Var(y | r) affine in r for an honest session, which is exactly the
assumption the real-time shot-noise estimator rests on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import rng as _rng
from .errors import EstimationError, ScheduleError
from .physics import DetectorConfig


@dataclass(frozen=True)
class AttenuationSchedule:
    """Attenuation ratios the receiver applies on the signal path, with probabilities."""

    entries: tuple[tuple[float, float], ...]

    def __post_init__(self):
        entries = tuple((float(r), float(p)) for r, p in self.entries)
        object.__setattr__(self, "entries", entries)
        if not entries:
            raise ScheduleError("schedule needs at least one (ratio, probability) entry")
        ratios = [r for r, _ in entries]
        probs = [p for _, p in entries]
        if any(not (0.0 <= r <= 1.0) for r in ratios):
            raise ScheduleError("attenuation ratios must lie in [0, 1]")
        if len(set(ratios)) != len(ratios):
            raise ScheduleError("attenuation ratios must be pairwise distinct")
        if any(p < 0.0 for p in probs):
            raise ScheduleError("probabilities must be >= 0")
        if abs(sum(probs) - 1.0) > 1e-12:
            raise ScheduleError(f"probabilities sum to {sum(probs)!r}, expected 1")

    @property
    def ratios(self) -> np.ndarray:
        return np.array([r for r, _ in self.entries])

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([p for _, p in self.entries])

    def contains(self, ratio: float) -> bool:
        return any(r == ratio for r, _ in self.entries)

    def discard_fraction(self) -> float:
        """Probability mass on ratios != 1, i.e. pulses lost to attenuation."""
        return float(sum(p for r, p in self.entries if r != 1.0))


TWO_POINT_SCHEDULE = AttenuationSchedule(((0.001, 0.5), (1.0, 0.5)))
THREE_RATIO_SCHEDULE = AttenuationSchedule(((1.0, 0.90), (0.5, 0.05), (0.001, 0.05)))


@dataclass(frozen=True)
class SystemParams:
    """All honest-system constants of one receiver/transmitter pair."""

    modulation_variance: float = 5.0
    channel_transmittance: float = 0.9
    excess_noise: float = 0.1
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    lo_intensity: float = 1e8
    schedule: AttenuationSchedule = TWO_POINT_SCHEDULE

    def __post_init__(self):
        if self.modulation_variance < 0.0:
            raise ValueError("modulation variance must be >= 0")
        if not (0.0 < self.channel_transmittance <= 1.0):
            raise ValueError("channel transmittance must be in (0, 1]")
        if self.excess_noise < 0.0:
            raise ValueError("excess noise must be >= 0")
        if self.lo_intensity <= 0.0:
            raise ValueError("local-oscillator intensity must be > 0")

    @property
    def shot_noise_unit(self) -> float:
        return self.detector.efficiency * self.lo_intensity


@dataclass(frozen=True)
class PulseRecord:
    """One protocol slot as seen by the estimators."""

    slot_index: int
    quadrature_choice: str  # "X" or "P"
    ratio_applied: float
    alice_quadrature: float
    bob_outcome: float
    eve_quadrature: float | None = None  # ground-truth attack annotation
    lo_observed: float | None = None


class RecordBatch:
    """Columnar store of pulse records (one numpy array per field).

    ``slot`` may be passed as None for consecutively numbered slots; the
    index column then materializes on first access.
    """

    def __init__(self, slot, quad, ratio, alice_x, bob_y, eve_x=None, lo_observed=None):
        self._slot = None if slot is None else np.asarray(slot, dtype=np.int64)
        self.quad = np.asarray(quad, dtype=np.uint8)  # 0 = X, 1 = P
        self.ratio = np.asarray(ratio, dtype=float)
        self.alice_x = np.asarray(alice_x, dtype=float)
        self.bob_y = np.asarray(bob_y, dtype=float)
        self.eve_x = None if eve_x is None else np.asarray(eve_x, dtype=float)
        self.lo_observed = None if lo_observed is None else np.asarray(lo_observed, dtype=float)

    @property
    def slot(self) -> np.ndarray:
        if self._slot is None:
            self._slot = np.arange(self.quad.size, dtype=np.int64)
        return self._slot

    def __len__(self) -> int:
        return self.quad.size

    def record(self, i: int) -> PulseRecord:
        return PulseRecord(
            slot_index=int(self.slot[i]),
            quadrature_choice="X" if self.quad[i] == 0 else "P",
            ratio_applied=float(self.ratio[i]),
            alice_quadrature=float(self.alice_x[i]),
            bob_outcome=float(self.bob_y[i]),
            eve_quadrature=None if self.eve_x is None else float(self.eve_x[i]),
            lo_observed=None if self.lo_observed is None else float(self.lo_observed[i]),
        )

    def __iter__(self):
        return (self.record(i) for i in range(len(self)))

    @classmethod
    def from_records(cls, records: Iterable[PulseRecord]) -> "RecordBatch":
        recs = list(records)
        return cls(
            [r.slot_index for r in recs],
            [0 if r.quadrature_choice == "X" else 1 for r in recs],
            [r.ratio_applied for r in recs],
            [r.alice_quadrature for r in recs],
            [r.bob_outcome for r in recs],
        )


def _as_batch(records) -> RecordBatch:
    if isinstance(records, RecordBatch):
        return records
    return RecordBatch.from_records(records)


@dataclass(frozen=True)
class EstimatorReport:
    """Output of the two-point real-time shot-noise estimation."""

    variance_per_ratio: dict[float, tuple[float, int]]
    shot_noise_est: float
    excess_noise_est: float
    covariance_xy: float

    def as_items(self) -> list[tuple[str, float]]:
        items: list[tuple[str, float]] = []
        for r in sorted(self.variance_per_ratio):
            v, n = self.variance_per_ratio[r]
            items.append((f"variance[r={r!r}]", v))
            items.append((f"count[r={r!r}]", float(n)))
        items.append(("shot_noise_est", self.shot_noise_est))
        items.append(("excess_noise_est", self.excess_noise_est))
        items.append(("covariance_xy", self.covariance_xy))
        return items


def alice_modulate(rng: np.random.Generator, params: SystemParams) -> float:
    """One Gaussian quadrature draw, variance V_A * N0."""
    sigma = math.sqrt(params.modulation_variance * params.shot_noise_unit)
    return float(rng.normal(0.0, sigma))


def honest_measure(rng: np.random.Generator, params: SystemParams,
                   alice_x: float, ratio: float, quadrature: str = "X",
                   slot_index: int = 0) -> PulseRecord:
    """Bob's homodyne outcome for one honest slot at the given attenuation ratio."""
    if not params.schedule.contains(ratio):
        raise ScheduleError(f"ratio {ratio!r} is not part of the active schedule")
    eta = params.detector.efficiency
    n0 = params.shot_noise_unit
    ree = ratio * eta * params.channel_transmittance
    noise_var = ree * params.excess_noise * n0 + n0 + params.detector.electronic_noise
    y = math.sqrt(ree) * alice_x + rng.normal(0.0, math.sqrt(noise_var))
    return PulseRecord(slot_index, quadrature, ratio, alice_x, float(y))


def honest_variance(params: SystemParams, ratio: float) -> float:
    """Population variance of Bob's outcome at one attenuation ratio, honest session."""
    n0 = params.shot_noise_unit
    ree = ratio * params.detector.efficiency * params.channel_transmittance
    return (ree * (params.modulation_variance + params.excess_noise) * n0
            + n0 + params.detector.electronic_noise)


def run_honest_session(params: SystemParams, slots: int, master_seed: int,
                       *, threads: int = 1) -> RecordBatch:
    """Simulate ``slots`` honest protocol slots; reproducible in (seed, slots)."""
    ratios = params.schedule.ratios
    cum = np.cumsum(params.schedule.probabilities)
    eta = params.detector.efficiency
    eta_ch = params.channel_transmittance
    n0 = params.shot_noise_unit
    v_el = params.detector.electronic_noise
    sig_x = math.sqrt(params.modulation_variance * n0)
    # per-ratio lookup tables keep the inner loop to gathers and two normals
    gain_t = np.sqrt(ratios * eta * eta_ch)
    noise_t = np.sqrt(ratios * eta * eta_ch * params.excess_noise * n0 + n0 + v_el)

    quad = np.empty(slots, np.uint8)
    ratio = np.empty(slots)
    x_col = np.empty(slots)
    y_col = np.empty(slots)

    def fill(gen, start, stop):
        m = stop - start
        idx = np.searchsorted(cum, gen.random(m), side="right")
        np.clip(idx, 0, ratios.size - 1, out=idx)
        quad[start:stop] = gen.random(m) < 0.5
        x = gen.normal(0.0, sig_x, m) if sig_x > 0 else np.zeros(m)
        ratio[start:stop] = ratios[idx]
        x_col[start:stop] = x
        y_col[start:stop] = gain_t[idx] * x + gen.normal(0.0, 1.0, m) * noise_t[idx]

    _rng.run_chunked(slots, master_seed, fill, threads=threads)
    return RecordBatch(None, quad, ratio, x_col, y_col)


def two_point_from_variances(v1: float, v2: float, r1: float, r2: float,
                             eta: float, eta_ch: float, v_el: float,
                             modulation_variance: float) -> tuple[float, float]:
    """Shot-noise and excess-noise estimates from the variances at two ratios.

    Inverts the affine noise model: with V(r) = r*eta*eta_ch*(V_A+xi)*N0 + N0 + v_el,
        N0_est = (r2*V1 - r1*V2)/(r2 - r1) - v_el
        xi_est = [ (V2 - V1)/((r2 - r1)*eta*eta_ch) - V_A*N0_est ] / N0_est
    """
    if r2 == r1:
        raise EstimationError("degenerate schedule: the two estimation ratios coincide")
    n0_est = (r2 * v1 - r1 * v2) / (r2 - r1) - v_el
    slope = (v2 - v1) / ((r2 - r1) * eta * eta_ch)
    xi_est = (slope - modulation_variance * n0_est) / n0_est
    return n0_est, xi_est


def variances_by_ratio(records, quadrature: str | None = None) -> dict[float, tuple[float, int]]:
    """Per-ratio sample variance (ddof=1) and count, optionally one quadrature only."""
    batch = _as_batch(records)
    y = batch.bob_y
    ratio = batch.ratio
    if quadrature is not None:
        mask = batch.quad == (0 if quadrature == "X" else 1)
        y, ratio = y[mask], ratio[mask]
    out: dict[float, tuple[float, int]] = {}
    for r in np.unique(ratio):
        sel = y[ratio == r]
        if sel.size < 2:
            raise EstimationError(f"need >= 2 records at ratio {float(r)!r} (got {sel.size})")
        out[float(r)] = (float(np.var(sel, ddof=1)), int(sel.size))
    return out


def estimate_two_point(records, params: SystemParams,
                       quadrature: str | None = None) -> EstimatorReport:
    """Run the two-extreme-ratio estimation over a record stream.

    The minimum and maximum ratios present act as (r1, r2); middle ratios
    contribute to the per-ratio variance map but not to the two-point inversion.
    """
    per_ratio = variances_by_ratio(records, quadrature)
    if len(per_ratio) < 2:
        raise EstimationError("two-point estimation needs records at >= 2 distinct ratios")
    r1, r2 = min(per_ratio), max(per_ratio)
    v1, _ = per_ratio[r1]
    v2, _ = per_ratio[r2]
    n0_est, xi_est = two_point_from_variances(
        v1, v2, r1, r2,
        params.detector.efficiency, params.channel_transmittance,
        params.detector.electronic_noise, params.modulation_variance)
    batch = _as_batch(records)
    sel = batch.ratio == r2
    cov = float(np.mean(batch.alice_x[sel] * batch.bob_y[sel])) if np.any(sel) else 0.0
    return EstimatorReport(per_ratio, n0_est, xi_est, cov)


def estimate_covariance_transmittance(records, params: SystemParams) -> float:
    """Channel transmittance from the Alice/Bob covariance at full transmission.

    Uses Cov(x, y) = sqrt(eta*eta_ch) * V_A * N0 over the r = 1 records.
    """
    batch = _as_batch(records)
    sel = batch.ratio == 1.0
    if np.count_nonzero(sel) < 2:
        raise EstimationError("transmittance estimation needs >= 2 records at ratio 1")
    if params.modulation_variance <= 0.0:
        raise EstimationError("transmittance estimation is degenerate at zero modulation")
    cov = float(np.mean(batch.alice_x[sel] * batch.bob_y[sel]))
    scaled = cov / (params.modulation_variance * params.shot_noise_unit)
    return scaled * scaled / params.detector.efficiency
