"""Synthetic consumer populations with known ground truth.

Generates meter and weather CSVs in the ingestion schemas from consumer specs
with known baseline load curves, elasticity functions, and response
probabilities, so the whole pipeline can be validated end to end.  Elasticity
acts multiplicatively on the baseline; per event hour one Bernoulli draw
decides whether the consumer responds, and both half-hours of that hour share
the draw.  Everything is deterministic given the seed (per-consumer
substreams, so populations are stable under consumer reordering).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from .ingestion import LCL_RATES
from .mcmc import substream_rng

START = datetime(2013, 1, 7, tzinfo=timezone.utc)  # a Monday


@dataclass(frozen=True)
class SyntheticConsumerSpec:
    consumer_id: str
    baseline: tuple[float, ...]                  # 24 kW values
    elasticity: dict[str, tuple[float, ...]]     # tariff label -> 24 values
    probability: dict[str, tuple[float, ...]]    # tariff label -> 24 response probs
    noise_sd: float = 0.0
    temp_sensitivity: float = 0.0                # kW per degree C above 18

    def __post_init__(self):
        if len(self.baseline) != 24 or any(b < 0 for b in self.baseline):
            raise ValueError("baseline must be 24 non-negative kW values")
        for label, probs in self.probability.items():
            if any(not 0.0 <= p <= 1.0 for p in probs):
                raise ValueError(f"probabilities for {label} must lie in [0, 1]")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be non-negative")


def flat_spec(consumer_id: str, baseline_kw: float = 0.5, *,
              elast_high: float = -0.2, elast_low: float = 0.15,
              prob: float = 1.0, noise_sd: float = 0.0,
              scale: float = 1.0) -> SyntheticConsumerSpec:
    """Convenience spec: flat baseline, constant elasticities scaled by ``scale``."""
    flat24 = lambda v: tuple([v] * 24)
    return SyntheticConsumerSpec(
        consumer_id=consumer_id,
        baseline=flat24(baseline_kw),
        elasticity={"Default": flat24(0.0), "High": flat24(elast_high * scale),
                    "Low": flat24(elast_low * scale)},
        probability={"Default": flat24(0.0), "High": flat24(prob), "Low": flat24(prob)},
        noise_sd=noise_sd,
    )


def rotating_schedule(days: int) -> list[list[str]]:
    """Day x hour tariff labels cycling Default/High/Low so that every hour
    of day experiences every tariff once per 3 days."""
    labels = ["Default", "High", "Low"]
    return [[labels[(h + d) % 3] for h in range(24)] for d in range(days)]


def _weather_row(ts: datetime, rng: np.random.Generator, noise_sd: float) -> str:
    doy = ts.timetuple().tm_yday
    hour_frac = ts.hour + ts.minute / 60.0
    temp = (10.0 - 8.0 * math.cos(2 * math.pi * (doy - 15) / 365.0)
            + 4.0 * math.sin(2 * math.pi * (hour_frac - 9) / 24.0))
    if noise_sd > 0:
        temp += rng.normal(0.0, noise_sd)
    humidity = 70.0 + 15.0 * math.sin(2 * math.pi * hour_frac / 24.0)
    pressure = 1012.0 + 6.0 * math.cos(2 * math.pi * doy / 365.0)
    return (f"{ts.isoformat().replace('+00:00', 'Z')},{temp:.3f},{humidity:.2f},"
            f"{pressure:.2f},10.0,270.0,15.0,Cloudy")


def generate_population(specs: list[SyntheticConsumerSpec], days: int,
                        schedule: list[list[str]] | None, seed: int,
                        out_dir: str | Path,
                        weather_noise_sd: float = 0.0) -> dict[str, Path]:
    """Write meter.csv, weather.csv and truth.json for a synthetic population.

    ``schedule`` is a days x 24 grid of tariff labels (defaults to the
    rotating schedule).  Consumption per hour is
    ``baseline * (1 + elasticity * responded) + noise`` with the response
    drawn once per event hour.  Identical seeds give byte-identical files.
    """
    if days < 1:
        raise ValueError("days must be >= 1")
    if schedule is None:
        schedule = rotating_schedule(days)
    if len(schedule) < days or any(len(day) != 24 for day in schedule):
        raise ValueError("schedule must cover the horizon with 24 labels per day")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    meter_lines = ["consumer_id,timestamp,avg_power_kw,tariff_label"]
    for idx, spec in enumerate(sorted(specs, key=lambda s: s.consumer_id)):
        rng = substream_rng(seed, idx)
        for d in range(days):
            day_start = START + timedelta(days=d)
            for h in range(24):
                label = schedule[d][h]
                responded = rng.random() < spec.probability.get(label, (0.0,) * 24)[h]
                level = spec.baseline[h] * (1.0 + spec.elasticity.get(label, (0.0,) * 24)[h] * responded)
                if spec.temp_sensitivity != 0.0:
                    # deterministic temperature track shared with the weather file
                    ts_mid = day_start + timedelta(hours=h)
                    doy = ts_mid.timetuple().tm_yday
                    temp = (10.0 - 8.0 * math.cos(2 * math.pi * (doy - 15) / 365.0)
                            + 4.0 * math.sin(2 * math.pi * (h - 9) / 24.0))
                    level += spec.temp_sensitivity * (temp - 18.0)
                for half in range(2):
                    value = level
                    if spec.noise_sd > 0:
                        value += rng.normal(0.0, spec.noise_sd)
                    value = max(value, 0.0)
                    ts = day_start + timedelta(hours=h, minutes=30 * half)
                    meter_lines.append(
                        f"{spec.consumer_id},{ts.isoformat().replace('+00:00', 'Z')},"
                        f"{value:.6f},{label}")
    meter_path = out_dir / "meter.csv"
    meter_path.write_text("\n".join(meter_lines) + "\n")

    wx_rng = substream_rng(seed, 10**6)
    wx_lines = ["timestamp,temp_c,humidity_pct,pressure_hpa,visibility_km,wind_dir_deg,wind_speed_kmh,condition"]
    t = START
    end = START + timedelta(days=days)
    while t < end:
        wx_lines.append(_weather_row(t, wx_rng, weather_noise_sd))
        t += timedelta(minutes=30)
    weather_path = out_dir / "weather.csv"
    weather_path.write_text("\n".join(wx_lines) + "\n")

    truth = {
        "seed": seed,
        "days": days,
        "tariffs": dict(LCL_RATES),
        "consumers": [
            {
                "consumer_id": s.consumer_id,
                "baseline": list(s.baseline),
                "elasticity": {k: list(v) for k, v in s.elasticity.items()},
                "probability": {k: list(v) for k, v in s.probability.items()},
                "noise_sd": s.noise_sd,
            }
            for s in sorted(specs, key=lambda s: s.consumer_id)
        ],
    }
    truth_path = out_dir / "truth.json"
    truth_path.write_text(json.dumps(truth, indent=2) + "\n")
    return {"meter": meter_path, "weather": weather_path, "truth": truth_path}


def load_truth(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())


@dataclass
class RecoveryRow:
    consumer_id: str
    elasticity_rmse: float
    sign_agreement: float      # fraction of nonzero-truth cells with matching sign
    probability_coverage: float | None = None  # HPD coverage of truth-implied shares


def compare_truth(profiles: dict, truth: dict, score=None) -> list[RecoveryRow]:
    """Recovery report: per consumer, elasticity RMSE and sign agreement vs
    ground truth; optionally HPD coverage of the truth-implied response shares
    when a pooled ResponseScore is supplied.

    ``profiles`` maps consumer_id to ElasticityProfile.  Unknown consumers in
    the truth file raise; an empty population yields an empty report.
    """
    rates = truth.get("tariffs", LCL_RATES)
    rows: list[RecoveryRow] = []
    truth_consumers = truth["consumers"]
    for entry in truth_consumers:
        cid = entry["consumer_id"]
        if cid not in profiles:
            raise ValueError(f"truth file names unknown consumer {cid!r}")
        profile = profiles[cid]
        errs = []
        signs_ok = 0
        signs_total = 0
        for label, values in entry["elasticity"].items():
            price = rates[label]
            for h in range(24):
                est = profile.elasticity(price, h)
                if est is None:
                    continue
                errs.append(est - values[h])
                if values[h] != 0.0:
                    signs_total += 1
                    if math.copysign(1.0, est) == math.copysign(1.0, values[h]) and est != 0.0:
                        signs_ok += 1
        rmse = math.sqrt(sum(e * e for e in errs) / len(errs)) if errs else math.nan
        coverage = None
        if score is not None and cid in score.outcomes:
            coverage = _share_coverage(score, cid, truth_consumers, rates)
        rows.append(RecoveryRow(consumer_id=cid, elasticity_rmse=rmse,
                                sign_agreement=signs_ok / signs_total if signs_total else math.nan,
                                probability_coverage=coverage))
    return rows


def truth_shares(truth_consumers: list[dict], label: str) -> np.ndarray:
    """Per-hour outcome shares implied by the truth elasticities at one tariff:
    |e_i(p, h)| normalized across consumers, the quantity the pooled scorer
    estimates."""
    mags = np.array([[abs(c["elasticity"][label][h]) for h in range(24)]
                     for c in truth_consumers])
    totals = mags.sum(axis=0)
    totals[totals == 0] = 1.0
    return mags / totals


def _share_coverage(score, cid: str, truth_consumers: list[dict], rates: dict) -> float:
    """Fraction of hours where the truth-implied share of this consumer lies
    inside the scored HPD interval (pooled mode at score.price)."""
    label = next((k for k, v in rates.items() if v == score.price), None)
    if label is None:
        return math.nan
    ordered = [c for c in truth_consumers if c["consumer_id"] in score.outcomes]
    shares = truth_shares(ordered, label)
    row = [c["consumer_id"] for c in ordered].index(cid)
    i = score.outcomes.index(cid)
    inside = sum(1 for h in range(24)
                 if score.hpd_low[i, h] <= shares[row, h] <= score.hpd_high[i, h])
    return inside / 24.0
