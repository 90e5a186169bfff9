"""Smart-meter data ingestion: CSV parsing, hourly aggregation, feature engineering.

Readings arrive at half-hour resolution with a tariff in effect per interval;
they are aggregated to hourly average power, joined to the nearest preceding
weather record (at most 3 h stale), and decorated with calendar features plus
per-(hour, price) temperature aggregates.

Timestamps are ISO-8601 with an explicit offset (or ``Z``) and are converted
to UTC before any calendar field is derived, which also resolves
daylight-saving transitions.  ``day_of_week`` uses Monday = 0.
"""

from __future__ import annotations

import bisect
import json
from dataclasses import dataclass, asdict
from datetime import datetime, timedelta, timezone
from pathlib import Path

# Low Carbon London dynamic time-of-use tariff rates, GBP per kWh
LCL_RATES = {"Default": 0.1176, "High": 0.6720, "Low": 0.0390}

WEATHER_STALENESS = timedelta(hours=3)

METER_HEADER_LCL = "consumer_id,timestamp,avg_power_kw,tariff_label"
METER_HEADER_GENERIC = "consumer_id,timestamp,avg_power_kw,price_gbp_per_kwh"
WEATHER_HEADER = "timestamp,temp_c,humidity_pct,pressure_hpa,visibility_km,wind_dir_deg,wind_speed_kmh,condition"


class ParseError(ValueError):
    """Malformed input file; the message names the offending line and column."""


@dataclass(frozen=True)
class TariffLevel:
    label: str
    rate: float

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError(f"tariff rate must be positive, got {self.rate}")


LCL_TARIFFS = tuple(TariffLevel(label, rate) for label, rate in LCL_RATES.items())


@dataclass(frozen=True)
class MeterReading:
    consumer_id: str
    timestamp: datetime  # UTC, 30-min resolution
    avg_power: float     # kW over the interval
    price: float         # GBP/kWh in effect


@dataclass(frozen=True)
class WeatherRecord:
    timestamp: datetime
    temperature: float
    humidity: float
    pressure: float
    visibility: float
    wind_direction: float
    wind_speed: float
    condition: str


@dataclass(frozen=True)
class HourlyReading:
    consumer_id: str
    timestamp: datetime  # top of the hour, UTC
    consumption: float   # kW, mean of the available half-hours
    price: float


@dataclass(frozen=True)
class FeatureRow:
    consumer_id: str
    timestamp: datetime
    hour: int
    day_of_week: int    # Monday = 0
    week_of_year: int   # ISO week, 1-53
    month: int
    minute: int
    price: float
    consumption: float
    temp_high: float    # per (hour-of-day, price) aggregate for this consumer
    temp_low: float
    temp_avg: float
    humidity: float
    pressure: float
    visibility: float
    wind_direction: float
    wind_speed: float
    condition: str


@dataclass(frozen=True)
class Dataset:
    rows: tuple[FeatureRow, ...]
    tariff_set: tuple[TariffLevel, ...]
    consumer_ids: tuple[str, ...]
    dropped_rows: int = 0  # hourly rows lost to weather staleness

    def __post_init__(self):
        rates = {t.rate for t in self.tariff_set}
        seen = set()
        for r in self.rows:
            if r.price not in rates:
                raise ValueError(f"row price {r.price} not in tariff set")
            key = (r.consumer_id, r.timestamp)
            if key in seen:
                raise ValueError(f"duplicate (consumer, timestamp) pair {key}")
            seen.add(key)

    def for_consumer(self, consumer_id: str) -> list[FeatureRow]:
        return [r for r in self.rows if r.consumer_id == consumer_id]

    def prices(self) -> list[float]:
        return sorted({t.rate for t in self.tariff_set})

    def to_json(self, path: str | Path) -> None:
        doc = {
            "schema_version": 1,
            "tariff_set": [asdict(t) for t in self.tariff_set],
            "consumer_ids": list(self.consumer_ids),
            "dropped_rows": self.dropped_rows,
            "rows": [
                {**asdict(r), "timestamp": r.timestamp.isoformat()}
                for r in self.rows
            ],
        }
        Path(path).write_text(json.dumps(doc) + "\n")

    @classmethod
    def from_json(cls, path: str | Path) -> "Dataset":
        doc = json.loads(Path(path).read_text())
        if doc.get("schema_version") != 1:
            raise ValueError(f"unsupported dataset schema_version {doc.get('schema_version')!r}")
        rows = tuple(
            FeatureRow(**{**r, "timestamp": datetime.fromisoformat(r["timestamp"])})
            for r in doc["rows"]
        )
        tariffs = tuple(TariffLevel(**t) for t in doc["tariff_set"])
        return cls(rows=rows, tariff_set=tariffs,
                   consumer_ids=tuple(doc["consumer_ids"]),
                   dropped_rows=doc["dropped_rows"])


def _parse_timestamp(text: str, line_no: int, column: str) -> datetime:
    try:
        ts = datetime.fromisoformat(text.replace("Z", "+00:00"))
    except ValueError:
        raise ParseError(f"line {line_no}, column {column!r}: malformed timestamp {text!r}") from None
    if ts.tzinfo is None:
        raise ParseError(f"line {line_no}, column {column!r}: timestamp {text!r} lacks a UTC offset")
    return ts.astimezone(timezone.utc)


def _parse_float(text: str, line_no: int, column: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"line {line_no}, column {column!r}: not a number: {text!r}") from None


def parse_meter_csv(path: str | Path, schema_mode: str = "lcl") -> list[MeterReading]:
    """Parse half-hourly meter readings.

    ``lcl`` mode expects a ``tariff_label`` column (Default/High/Low mapped to
    the LCL rates); ``generic`` mode expects an explicit
    ``price_gbp_per_kwh``.  Output is sorted by (consumer_id, timestamp);
    any malformed row aborts with a line-numbered :class:`ParseError`.
    """
    if schema_mode not in ("lcl", "generic"):
        raise ValueError(f"schema_mode must be 'lcl' or 'generic', got {schema_mode!r}")
    expected = METER_HEADER_LCL if schema_mode == "lcl" else METER_HEADER_GENERIC
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != expected:
        raise ParseError(f"line 1: expected header {expected!r}")
    readings = []
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise ParseError(f"line {line_no}: expected 4 fields, got {len(parts)}")
        consumer_id, ts_text, power_text, price_text = (p.strip() for p in parts)
        ts = _parse_timestamp(ts_text, line_no, "timestamp")
        power = _parse_float(power_text, line_no, "avg_power_kw")
        if power < 0:
            raise ParseError(f"line {line_no}, column 'avg_power_kw': negative power {power}")
        if schema_mode == "lcl":
            if price_text not in LCL_RATES:
                raise ParseError(f"line {line_no}, column 'tariff_label': unknown tariff {price_text!r}")
            price = LCL_RATES[price_text]
        else:
            price = _parse_float(price_text, line_no, "price_gbp_per_kwh")
            if price <= 0:
                raise ParseError(f"line {line_no}, column 'price_gbp_per_kwh': price must be positive")
        readings.append(MeterReading(consumer_id, ts, power, price))
    readings.sort(key=lambda r: (r.consumer_id, r.timestamp))
    for a, b in zip(readings, readings[1:]):
        if a.consumer_id == b.consumer_id and a.timestamp >= b.timestamp:
            raise ParseError(f"duplicate timestamp {b.timestamp.isoformat()} for consumer {b.consumer_id}")
    return readings


def parse_weather_csv(path: str | Path) -> list[WeatherRecord]:
    """Parse weather records; sorted by timestamp, duplicates rejected."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != WEATHER_HEADER:
        raise ParseError(f"line 1: expected header {WEATHER_HEADER!r}")
    records = []
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 8:
            raise ParseError(f"line {line_no}: expected 8 fields, got {len(parts)}")
        ts = _parse_timestamp(parts[0].strip(), line_no, "timestamp")
        temp = _parse_float(parts[1], line_no, "temp_c")
        humidity = _parse_float(parts[2], line_no, "humidity_pct")
        if not 0.0 <= humidity <= 100.0:
            raise ParseError(f"line {line_no}, column 'humidity_pct': {humidity} outside [0, 100]")
        rec = WeatherRecord(
            timestamp=ts, temperature=temp, humidity=humidity,
            pressure=_parse_float(parts[3], line_no, "pressure_hpa"),
            visibility=_parse_float(parts[4], line_no, "visibility_km"),
            wind_direction=_parse_float(parts[5], line_no, "wind_dir_deg"),
            wind_speed=_parse_float(parts[6], line_no, "wind_speed_kmh"),
            condition=parts[7].strip(),
        )
        records.append(rec)
    records.sort(key=lambda r: r.timestamp)
    for a, b in zip(records, records[1:]):
        if a.timestamp == b.timestamp:
            raise ParseError(f"duplicate weather timestamp {b.timestamp.isoformat()}")
    return records


def aggregate_hourly(readings: list[MeterReading]) -> list[HourlyReading]:
    """Collapse half-hourly readings to hourly mean power.

    The hour's price is the price of its first half-hour; two half-hours with
    different prices raise a ``ValueError`` naming the ambiguous hour.
    """
    groups: dict[tuple[str, datetime], list[MeterReading]] = {}
    for r in readings:
        hour_ts = r.timestamp.replace(minute=0, second=0, microsecond=0)
        groups.setdefault((r.consumer_id, hour_ts), []).append(r)
    out = []
    for (consumer_id, hour_ts), group in sorted(groups.items()):
        prices = {r.price for r in group}
        if len(prices) > 1:
            raise ValueError(
                f"ambiguous price for consumer {consumer_id} hour {hour_ts.isoformat()}: "
                f"{sorted(prices)}")
        mean_power = sum(r.avg_power for r in group) / len(group)
        out.append(HourlyReading(consumer_id, hour_ts, mean_power, group[0].price))
    return out


def engineer_features(hourly: list[HourlyReading], weather: list[WeatherRecord],
                      tariffs: tuple[TariffLevel, ...] | None = None) -> Dataset:
    """Join hourly readings to weather and derive the model feature set.

    Each row takes the nearest weather record at or before its timestamp
    (last observation carried forward, capped at 3 h staleness; staler rows
    are dropped and counted).  temp_high/temp_low/temp_avg are the max, min
    and mean joined temperature per (consumer, hour-of-day, price) group over
    the whole dataset.  Dropping more than half the rows raises, since it
    signals misaligned inputs.
    """
    if not weather and hourly:
        raise ValueError("no weather records supplied")
    wx_times = [w.timestamp for w in weather]

    joined: list[tuple[HourlyReading, WeatherRecord]] = []
    dropped = 0
    for h in hourly:
        i = bisect.bisect_right(wx_times, h.timestamp) - 1
        if i < 0 or h.timestamp - wx_times[i] > WEATHER_STALENESS:
            dropped += 1
            continue
        joined.append((h, weather[i]))
    if hourly and dropped > 0.5 * len(hourly):
        raise ValueError(
            f"weather join dropped {dropped} of {len(hourly)} rows; "
            "meter and weather files appear misaligned")

    # per (consumer, hour-of-day, price) temperature aggregates
    temps: dict[tuple[str, int, float], list[float]] = {}
    for h, w in joined:
        temps.setdefault((h.consumer_id, h.timestamp.hour, h.price), []).append(w.temperature)
    agg = {k: (max(v), min(v), sum(v) / len(v)) for k, v in temps.items()}

    rows = []
    for h, w in joined:
        ts = h.timestamp
        iso = ts.isocalendar()
        t_hi, t_lo, t_av = agg[(h.consumer_id, ts.hour, h.price)]
        rows.append(FeatureRow(
            consumer_id=h.consumer_id, timestamp=ts, hour=ts.hour,
            day_of_week=ts.weekday(), week_of_year=iso.week, month=ts.month,
            minute=ts.minute, price=h.price, consumption=h.consumption,
            temp_high=t_hi, temp_low=t_lo, temp_avg=t_av,
            humidity=w.humidity, pressure=w.pressure, visibility=w.visibility,
            wind_direction=w.wind_direction, wind_speed=w.wind_speed,
            condition=w.condition,
        ))
    if tariffs is None:
        tariffs = tuple(TariffLevel(f"Custom-{p:.4f}", p) for p in sorted({r.price for r in rows}))
    consumer_ids = tuple(sorted({r.consumer_id for r in rows}))
    return Dataset(rows=tuple(rows), tariff_set=tariffs,
                   consumer_ids=consumer_ids, dropped_rows=dropped)
