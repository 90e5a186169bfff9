"""Causal effect of price on consumption via the g-formula with kernel regression.

The interventional mean E[Y | do(X=x)] is identified under the back-door
criterion with the fixed calendar covariates Z = (hour, day-of-week,
week-of-year), estimated as the empirical average of the regression estimate
E[Y | X=x, Z=z] over the observed covariate distribution.  The default
regression is Nadaraya-Watson with a Gaussian kernel over standardized
covariates; ``mode="exact"`` replaces it with strict group means, which is
both the testing oracle and the right choice for fully discrete data.

Per-hour causal consumption averages carry normal-theory z-intervals and are
converted into relative elasticities against the default price, then
quantized to the non-negative integer weight matrices consumed by the
response probability scorer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import norm

from .ingestion import Dataset

COVARIATES = ("hour", "day_of_week", "week_of_year")
BANDWIDTH_FLOOR = 1e-3
DEFAULT_SCALE_MAX = 100
_EPS_BASELINE = 1e-6  # kW floor below which an elasticity is undefined


@dataclass(frozen=True)
class CausalQuery:
    consumer_id: str
    price: float
    covariates: tuple[str, ...] = COVARIATES

    def __post_init__(self):
        # Z must exclude descendants of the treatment; the calendar variables
        # are exogenous by construction, so reject anything else.
        bad = set(self.covariates) - set(COVARIATES)
        if bad:
            raise ValueError(f"unsupported covariates {sorted(bad)}; "
                             f"the admissible set is {COVARIATES}")


@dataclass(frozen=True)
class CausalEstimate:
    hour: int
    price: float
    e_y: float      # kW, estimated E[Y | do(X=price)] at this hour
    lower: float
    upper: float
    ci: float = 0.95
    n_points: int = 0
    fallback: bool = False  # kernel weights underflowed somewhere in this hour

    def __post_init__(self):
        if not (self.lower <= self.e_y <= self.upper):
            raise ValueError("interval must satisfy lower <= e_y <= upper")


@dataclass
class ElasticityProfile:
    """Signed relative consumption change per (price, hour) vs the default price."""

    consumer_id: str
    default_price: float
    entries: dict[tuple[float, int], float]  # (price, hour) -> elasticity; absent = undefined
    baseline_e_y: dict[int, float]           # hour -> E[Y|do(default)] in kW

    def prices(self) -> list[float]:
        return sorted({p for p, _ in self.entries})

    def elasticity(self, price: float, hour: int) -> float | None:
        return self.entries.get((price, hour))


@dataclass
class WeightMatrix:
    """Non-negative integer elasticity weights, one row per outcome, 24 hour columns."""

    outcomes: tuple[str, ...]
    counts: np.ndarray  # (k, 24) int
    mode: str = "per_consumer"   # or "pooled"
    price: float | None = None   # fixed price in pooled mode
    name: str = ""               # consumer id (per-consumer) or pool label

    def __post_init__(self):
        self.counts = np.asarray(self.counts)
        if self.counts.shape != (len(self.outcomes), 24):
            raise ValueError(f"counts must be (k, 24), got {self.counts.shape}")
        if np.any(self.counts < 0) or not np.issubdtype(self.counts.dtype, np.integer):
            raise ValueError("counts must be non-negative integers")

    @property
    def k(self) -> int:
        return len(self.outcomes)

    @property
    def n_h(self) -> np.ndarray:
        """Per-hour totals; by construction n_h = sum_i c_{i,h}."""
        return self.counts.sum(axis=0)

    def to_csv(self, path: str | Path) -> None:
        header = "outcome," + ",".join(f"h{h}" for h in range(24))
        lines = [header]
        for label, row in zip(self.outcomes, self.counts):
            lines.append(label + "," + ",".join(str(int(v)) for v in row))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path: str | Path, mode: str = "per_consumer",
                 price: float | None = None, name: str = "") -> "WeightMatrix":
        lines = Path(path).read_text().splitlines()
        expected = "outcome," + ",".join(f"h{h}" for h in range(24))
        if not lines or lines[0].strip() != expected:
            raise ValueError(f"unexpected weight CSV header in {path}")
        outcomes, rows = [], []
        for line in lines[1:]:
            if not line.strip():
                continue
            parts = line.split(",")
            outcomes.append(parts[0])
            rows.append([int(v) for v in parts[1:]])
        return cls(outcomes=tuple(outcomes), counts=np.array(rows, dtype=int),
                   mode=mode, price=price, name=name)


def z_interval(e_y: float, sigma: float, ci: float = 0.95) -> tuple[float, float]:
    """Two-tailed normal interval e_y +/- z_{alpha/2} * sigma."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if not 0.0 < ci < 1.0:
        raise ValueError("ci must be in (0, 1)")
    z = norm.ppf(0.5 + ci / 2.0)
    return e_y - z * sigma, e_y + z * sigma


def silverman_bandwidths(n: int, d: int) -> float:
    """Per-covariate Silverman factor for standardized (unit-sd) covariates."""
    return max((4.0 / ((d + 2.0) * n)) ** (1.0 / (d + 4.0)), BANDWIDTH_FLOOR)


def kernel_regress(x_query: np.ndarray, data_x: np.ndarray, data_y: np.ndarray,
                   bandwidths: np.ndarray | None = None) -> tuple[float, bool]:
    """Nadaraya-Watson conditional expectation at one query point.

    Covariates are standardized internally and the Gaussian kernel uses a
    per-covariate Silverman bandwidth unless ``bandwidths`` (on the
    standardized scale) is given.  When every kernel weight underflows, falls
    back to the mean of the 3 nearest neighbors and flags it.

    Returns ``(estimate, used_fallback)``.
    """
    data_x = np.asarray(data_x, dtype=float)
    if data_x.ndim == 1:
        data_x = data_x.reshape(-1, 1)
    data_y = np.asarray(data_y, dtype=float)
    n, d = data_x.shape
    if n < 5:
        raise ValueError(f"kernel regression needs at least 5 data points, got {n}")
    q = np.atleast_1d(np.asarray(x_query, dtype=float))
    mu = data_x.mean(axis=0)
    sd = data_x.std(axis=0)
    sd[sd == 0] = 1.0
    xs = (data_x - mu) / sd
    qs = (q - mu) / sd
    if bandwidths is None:
        bandwidths = np.full(d, silverman_bandwidths(n, d))
    z2 = ((xs - qs) / bandwidths) ** 2
    d2 = z2.sum(axis=1)
    with np.errstate(under="ignore"):
        w = np.exp(-0.5 * d2)
    total = w.sum()
    if total <= 0 or not np.isfinite(total):
        nearest = np.argsort(d2)[:3]
        return float(data_y[nearest].mean()), True
    return float(np.dot(w, data_y) / total), False


def _consumer_arrays(data: Dataset, consumer_id: str):
    rows = data.for_consumer(consumer_id)
    if not rows:
        raise ValueError(f"no rows for consumer {consumer_id!r}")
    price = np.array([r.price for r in rows])
    z = np.array([[r.hour, r.day_of_week, r.week_of_year] for r in rows], dtype=float)
    y = np.array([r.consumption for r in rows])
    return price, z, y


def adjusted_mean(x_value: float, data_x: np.ndarray, data_z: np.ndarray,
                  data_y: np.ndarray, mode: str = "kernel") -> tuple[float, float, int, bool]:
    """g-formula adjusted mean sum_z E[Y | X=x, Z=z] P(z) over the empirical P(z).

    Returns ``(estimate, sd_of_per_z_estimates, n, used_fallback)`` where the
    sd is frequency-weighted over the per-covariate-row regression estimates
    and ``n`` counts the rows entering the average.
    """
    data_x = np.asarray(data_x, dtype=float)
    data_z = np.asarray(data_z, dtype=float)
    if data_z.ndim == 1:
        data_z = data_z.reshape(-1, 1)
    data_y = np.asarray(data_y, dtype=float)
    uniq, counts = np.unique(data_z, axis=0, return_counts=True)

    if mode == "exact":
        estimates, weights = [], []
        xz = np.column_stack([data_x, data_z])
        for zrow, cnt in zip(uniq, counts):
            match = np.all(xz == np.concatenate([[x_value], zrow]), axis=1)
            if not match.any():
                continue  # unpopulated cell: excluded from the average
            estimates.append(data_y[match].mean())
            weights.append(cnt)
        if not estimates:
            return math.nan, math.nan, 0, False
        est = np.asarray(estimates)
        wts = np.asarray(weights, dtype=float)
        fallback = False
    else:
        full = np.column_stack([data_x, data_z])
        queries = np.column_stack([np.full(len(uniq), x_value), uniq])
        est, fb = _batch_kernel(queries, full, data_y)
        wts = counts.astype(float)
        fallback = bool(fb.any())
    n = int(wts.sum())
    mean = float(np.dot(wts, est) / wts.sum())
    var = float(np.dot(wts, (est - mean) ** 2) / wts.sum())
    return mean, math.sqrt(var), n, fallback


def _batch_kernel(queries: np.ndarray, data_x: np.ndarray, data_y: np.ndarray,
                  block: int = 512) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized Nadaraya-Watson over many query points (shared slice)."""
    n, d = data_x.shape
    mu = data_x.mean(axis=0)
    sd = data_x.std(axis=0)
    sd[sd == 0] = 1.0
    xs = (data_x - mu) / sd
    bw = silverman_bandwidths(n, d)
    out = np.empty(len(queries))
    fallback = np.zeros(len(queries), dtype=bool)
    qs = (queries - mu) / sd
    for start in range(0, len(qs), block):
        qb = qs[start : start + block]
        d2 = (((qb[:, None, :] - xs[None, :, :]) / bw) ** 2).sum(axis=2)
        with np.errstate(under="ignore"):
            w = np.exp(-0.5 * d2)
        totals = w.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            vals = (w @ data_y) / totals
        bad = (totals <= 0) | ~np.isfinite(vals)
        if bad.any():
            for i in np.nonzero(bad)[0]:
                nearest = np.argsort(d2[i])[:3]
                vals[i] = data_y[nearest].mean()
                fallback[start + i] = True
        out[start : start + block] = vals
    return out, fallback


def g_formula_effect(query: CausalQuery, data: Dataset, mode: str = "kernel",
                     ci: float = 0.95) -> list[CausalEstimate]:
    """Per-hour interventional consumption means E[Y | do(X=price)].

    For each hour h the covariate distribution is the empirical (day, week)
    frequency over all the consumer's rows, with the hour pinned to h.
    Hours whose estimate is unavailable (exact mode with every cell empty)
    are omitted from the result, i.e. marked absent.
    """
    price, z, y = _consumer_arrays(data, query.consumer_id)
    if not np.any(price == query.price):
        raise ValueError(f"no rows at price {query.price} for consumer {query.consumer_id!r}")
    estimates = []
    day_week = z[:, 1:]
    for hour in range(24):
        zh = np.column_stack([np.full(len(day_week), float(hour)), day_week])
        e_y, sd, n, fb = adjusted_mean(query.price, price, zh, y, mode=mode)
        if n == 0 or math.isnan(e_y):
            continue
        sigma = sd / math.sqrt(n)
        lower, upper = z_interval(e_y, sigma, ci)
        estimates.append(CausalEstimate(hour=hour, price=query.price, e_y=e_y,
                                        lower=lower, upper=upper, ci=ci,
                                        n_points=n, fallback=fb))
    return estimates


def estimate_all_prices(consumer_id: str, data: Dataset, mode: str = "kernel",
                        ci: float = 0.95) -> list[CausalEstimate]:
    """Per-hour causal estimates for every tariff the consumer experienced."""
    rows = data.for_consumer(consumer_id)
    prices = sorted({r.price for r in rows})
    out: list[CausalEstimate] = []
    for p in prices:
        out.extend(g_formula_effect(CausalQuery(consumer_id, p), data, mode=mode, ci=ci))
    return out


def derive_elasticity(estimates: Sequence[CausalEstimate], default_price: float,
                      consumer_id: str = "") -> ElasticityProfile:
    """Relative elasticity (e_y(p,h) - e_y(default,h)) / e_y(default,h).

    The default price maps to exactly 0.  Hours whose default-price average
    is below 1e-6 kW leave the elasticity undefined (entry absent).
    """
    by_cell = {(e.price, e.hour): e for e in estimates}
    baselines = {h: by_cell[(default_price, h)].e_y
                 for h in range(24) if (default_price, h) in by_cell}
    other_hours = {e.hour for e in estimates if e.price != default_price}
    missing = sorted(h for h in other_hours if h not in baselines)
    if missing:
        raise ValueError(f"default price {default_price} missing for hours {missing}")
    entries: dict[tuple[float, int], float] = {}
    for (p, h), est in by_cell.items():
        base = baselines.get(h)
        if base is None:
            continue
        if p == default_price:
            entries[(p, h)] = 0.0
        elif base > _EPS_BASELINE:
            entries[(p, h)] = (est.e_y - base) / base
    return ElasticityProfile(consumer_id=consumer_id or "", default_price=default_price,
                             entries=entries, baseline_e_y=baselines)


def rank_weights(profiles: ElasticityProfile | Sequence[ElasticityProfile],
                 scale_max: int = DEFAULT_SCALE_MAX, mode: str = "per_consumer",
                 price: float | None = None) -> WeightMatrix:
    """Quantize elasticities to integer weights c = round(scale_max * |e| / max|e|).

    ``per_consumer`` builds one row per price level from a single profile;
    ``pooled`` builds one row per consumer at the fixed ``price``.  Absent
    elasticities contribute 0; an all-zero profile yields all-zero counts.
    """
    if scale_max < 1:
        raise ValueError("scale_max must be >= 1")
    if mode == "per_consumer":
        if isinstance(profiles, Sequence):
            if len(profiles) != 1:
                raise ValueError("per_consumer mode takes exactly one profile")
            profiles = profiles[0]
        profile = profiles
        prices = profile.prices()
        if not prices:
            raise ValueError("empty elasticity profile")
        mat = np.zeros((len(prices), 24))
        for i, p in enumerate(prices):
            for h in range(24):
                e = profile.elasticity(p, h)
                mat[i, h] = abs(e) if e is not None else 0.0
        outcomes = tuple(f"{p:.4f}" for p in prices)
        name = profile.consumer_id
        fixed_price = None
    elif mode == "pooled":
        if isinstance(profiles, ElasticityProfile):
            profiles = [profiles]
        if not profiles:
            raise ValueError("empty profile collection")
        if price is None:
            raise ValueError("pooled mode requires the fixed price")
        mat = np.zeros((len(profiles), 24))
        for i, profile in enumerate(profiles):
            if price not in profile.prices():
                raise ValueError(
                    f"consumer {profile.consumer_id!r} has no elasticity at price {price}; "
                    "pooled weights need a common price level")
            for h in range(24):
                e = profile.elasticity(price, h)
                mat[i, h] = abs(e) if e is not None else 0.0
        outcomes = tuple(p.consumer_id for p in profiles)
        name = f"pool@{price:.4f}"
        fixed_price = price
    else:
        raise ValueError(f"unknown mode {mode!r}")

    top = mat.max()
    counts = (np.zeros_like(mat, dtype=int) if top == 0
              else np.rint(scale_max * mat / top).astype(int))
    return WeightMatrix(outcomes=outcomes, counts=counts, mode=mode,
                        price=fixed_price, name=name)


def estimates_to_records(estimates: Sequence[CausalEstimate],
                         profile: ElasticityProfile) -> list[dict]:
    """JSON-ready records {hour, price, e_y, lower, upper, n_points, elasticity}."""
    records = []
    for e in sorted(estimates, key=lambda e: (e.price, e.hour)):
        records.append({
            "hour": e.hour, "price": e.price, "e_y": e.e_y,
            "lower": e.lower, "upper": e.upper, "n_points": e.n_points,
            "elasticity": profile.elasticity(e.price, e.hour),
        })
    return records
