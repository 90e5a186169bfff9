"""Per-consumer elasticity behavior model: robust Bayesian regression.

One response per (price, hour) cell (72 rows for the three LCL tariffs):
the observed elasticity, explained by a per-hour intercept, a per-hour
price-curvature coefficient on (price^2 + price^3), per-price temperature
coefficients, and per-price consumption-level coefficients, under a Student-T
likelihood whose heavy tails keep outlying elasticities from dominating the
fit.

The price feature is scaled but not centered, so the intercept is the
expected elasticity at price 0 with dataset-mean covariates; all other
regressors are z-scored with the constants retained for prediction.  The
shared curvature coefficient follows the model equation literally; pass
``separate_cubic=True`` to give price^2 and price^3 independent per-hour
coefficients instead.

Note the consumption regressors are the per-hour averages multiplied by the
integer hour index (0-23), implemented verbatim; hour-0 rows therefore zero
these two terms.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import digamma, gammaln

from .causal import ElasticityProfile
from .diagnostics import DiagnosticsSummary, ess_bulk, r_hat, summarize_chains
from .ingestion import Dataset
from .mcmc import Identity, Interval, Positive, SamplerConfig, Trace, TransformedTarget, run_chains

DIVERGENCE_ERROR_RATE = 0.5  # above this, the fit aborts instead of warning
RHAT_WARNING = 1.05


@dataclass(frozen=True)
class PriorSpec:
    """Normal priors per coefficient family (on the standardized scale),
    a uniform prior for the degrees of freedom, an exponential prior for sigma."""

    beta0: tuple[float, float] = (0.0, 10.0)
    beta1: tuple[float, float] = (0.0, 10.0)
    temp_high: tuple[float, float] = (0.0, 10.0)
    temp_low: tuple[float, float] = (0.0, 10.0)
    temp_avg: tuple[float, float] = (0.0, 10.0)
    consumption_avg: tuple[float, float] = (0.0, 10.0)
    consumption_diff: tuple[float, float] = (0.0, 10.0)
    nu_bounds: tuple[float, float] = (0.0, 1.0)
    sigma_rate: float = 1.0

    def __post_init__(self):
        for fam in ("beta0", "beta1", "temp_high", "temp_low", "temp_avg",
                    "consumption_avg", "consumption_diff"):
            _, sd = getattr(self, fam)
            if sd <= 0:
                raise ValueError(f"{fam} prior sd must be positive")
        lo, hi = self.nu_bounds
        if not lo < hi:
            raise ValueError("nu prior needs lower < upper")
        if self.sigma_rate <= 0:
            raise ValueError("sigma prior rate must be positive")

    def to_dict(self) -> dict:
        return {
            "beta0": list(self.beta0), "beta1": list(self.beta1),
            "temp_high": list(self.temp_high), "temp_low": list(self.temp_low),
            "temp_avg": list(self.temp_avg),
            "consumption_avg": list(self.consumption_avg),
            "consumption_diff": list(self.consumption_diff),
            "nu_bounds": list(self.nu_bounds), "sigma_rate": self.sigma_rate,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PriorSpec":
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


@dataclass(frozen=True)
class GlmDesign:
    """One row per (price, hour) cell, ordered default block first then the
    remaining prices by descending rate, hours 0-23 within each block."""

    consumer_id: str
    prices: tuple[float, ...]       # block order
    default_price: float
    hour: np.ndarray                # (n,) int
    price_idx: np.ndarray           # (n,) int into prices
    y: np.ndarray                   # (n,) observed elasticity
    temp_high: np.ndarray           # raw regressors, (n,)
    temp_low: np.ndarray
    temp_avg: np.ndarray
    consumption_avg: np.ndarray     # per-hour average consumption, kW
    consumption_diff: np.ndarray    # default-price average minus this price's average, kW
    feature_means: dict = field(default_factory=dict)
    feature_sds: dict = field(default_factory=dict)
    price_scale: dict = field(default_factory=dict)
    degenerate: tuple[str, ...] = ()

    def __post_init__(self):
        n = len(self.prices) * 24
        if len(self.y) != n:
            raise ValueError(f"design must have exactly {n} rows, got {len(self.y)}")
        cells = set(zip(self.price_idx.tolist(), self.hour.tolist()))
        if len(cells) != n:
            raise ValueError("design must have exactly one row per (price, hour)")

    @property
    def n_rows(self) -> int:
        return len(self.y)

    @property
    def price_values(self) -> np.ndarray:
        return np.asarray(self.prices)[self.price_idx]

    def standardized(self, name: str) -> np.ndarray:
        raw = getattr(self, name) * 1.0
        if name in ("consumption_avg", "consumption_diff"):
            raw = raw * self.hour  # the model's literal (value * hour) regressor
        if name in self.degenerate:
            return np.zeros_like(raw)
        return (raw - self.feature_means[name]) / self.feature_sds[name]

    def standardize_value(self, name: str, value: float, hour: int) -> float:
        v = float(value)
        if name in ("consumption_avg", "consumption_diff"):
            v = v * hour
        if name in self.degenerate:
            return 0.0
        return (v - self.feature_means[name]) / self.feature_sds[name]

    def price_feature(self, price, kind: str = "shared") -> np.ndarray:
        p = np.asarray(price, dtype=float)
        if kind == "shared":
            return (p ** 2 + p ** 3) / self.price_scale["shared"]
        if kind == "sq":
            return p ** 2 / self.price_scale["sq"]
        return p ** 3 / self.price_scale["cube"]

    def to_dict(self) -> dict:
        return {
            "consumer_id": self.consumer_id,
            "prices": list(self.prices),
            "default_price": self.default_price,
            "hour": self.hour.tolist(),
            "price_idx": self.price_idx.tolist(),
            "y": self.y.tolist(),
            "temp_high": self.temp_high.tolist(),
            "temp_low": self.temp_low.tolist(),
            "temp_avg": self.temp_avg.tolist(),
            "consumption_avg": self.consumption_avg.tolist(),
            "consumption_diff": self.consumption_diff.tolist(),
            "feature_means": self.feature_means,
            "feature_sds": self.feature_sds,
            "price_scale": self.price_scale,
            "degenerate": list(self.degenerate),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GlmDesign":
        arrays = {k: np.asarray(d[k]) for k in
                  ("hour", "price_idx", "y", "temp_high", "temp_low", "temp_avg",
                   "consumption_avg", "consumption_diff")}
        return cls(consumer_id=d["consumer_id"], prices=tuple(d["prices"]),
                   default_price=d["default_price"],
                   feature_means=d["feature_means"], feature_sds=d["feature_sds"],
                   price_scale=d["price_scale"], degenerate=tuple(d["degenerate"]),
                   **arrays)


FEATURES = ("temp_high", "temp_low", "temp_avg", "consumption_avg", "consumption_diff")


def design_from_columns(consumer_id: str, prices, default_price: float,
                        hour, price_idx, y, temp_high, temp_low, temp_avg,
                        consumption_avg, consumption_diff) -> GlmDesign:
    """Assemble a design and compute its standardization constants."""
    hour = np.asarray(hour, dtype=int)
    design = GlmDesign(
        consumer_id=consumer_id, prices=tuple(prices), default_price=float(default_price),
        hour=hour, price_idx=np.asarray(price_idx, dtype=int),
        y=np.asarray(y, dtype=float),
        temp_high=np.asarray(temp_high, dtype=float),
        temp_low=np.asarray(temp_low, dtype=float),
        temp_avg=np.asarray(temp_avg, dtype=float),
        consumption_avg=np.asarray(consumption_avg, dtype=float),
        consumption_diff=np.asarray(consumption_diff, dtype=float),
    )
    degenerate = []
    for name in FEATURES:
        col = getattr(design, name) * 1.0
        if name in ("consumption_avg", "consumption_diff"):
            col = col * hour
        mean, sd = float(col.mean()), float(col.std())
        if sd == 0.0:
            degenerate.append(name)
            sd = 1.0
        design.feature_means[name] = mean
        design.feature_sds[name] = sd
    pv = design.price_values
    for kind, col in (("shared", pv ** 2 + pv ** 3), ("sq", pv ** 2), ("cube", pv ** 3)):
        s = float(col.std())
        design.price_scale[kind] = s if s > 0 else 1.0
    object.__setattr__(design, "degenerate", tuple(degenerate))
    return design


def build_design(profile: ElasticityProfile, dataset: Dataset) -> GlmDesign:
    """Build the (prices x 24)-row design for one consumer.

    Responses are the profile's elasticities; temperatures come from the
    per-(hour, price) aggregates carried on the consumer's feature rows;
    consumption_avg is the consumer's mean consumption at each hour over the
    whole dataset; consumption_diff is the default-price causal average minus
    this price's, which the profile determines as -baseline * elasticity.
    """
    rows = dataset.for_consumer(profile.consumer_id)
    if not rows:
        raise ValueError(f"dataset has no rows for consumer {profile.consumer_id!r}")
    prices = profile.prices()
    if profile.default_price not in prices:
        raise ValueError("profile lacks the default price")
    ordered = [profile.default_price] + sorted(
        (p for p in prices if p != profile.default_price), reverse=True)

    temp_cells: dict[tuple[float, int], tuple[float, float, float]] = {}
    cons_by_hour: dict[int, list[float]] = {}
    for r in rows:
        temp_cells.setdefault((r.price, r.hour), (r.temp_high, r.temp_low, r.temp_avg))
        cons_by_hour.setdefault(r.hour, []).append(r.consumption)
    cavg = {h: sum(v) / len(v) for h, v in cons_by_hour.items()}

    missing = []
    for p in ordered:
        for h in range(24):
            if profile.elasticity(p, h) is None or (p, h) not in temp_cells or h not in cavg:
                missing.append((p, h))
    if missing:
        raise ValueError(f"missing (price, hour) cells: {missing[:8]}"
                         + (" ..." if len(missing) > 8 else ""))

    hour, price_idx, y = [], [], []
    th, tl, ta, ca, cd = [], [], [], [], []
    for i, p in enumerate(ordered):
        for h in range(24):
            hour.append(h)
            price_idx.append(i)
            e = profile.elasticity(p, h)
            y.append(e)
            t = temp_cells[(p, h)]
            th.append(t[0])
            tl.append(t[1])
            ta.append(t[2])
            ca.append(cavg[h])
            cd.append(0.0 if p == profile.default_price
                      else -profile.baseline_e_y[h] * e)
    return design_from_columns(profile.consumer_id, ordered, profile.default_price,
                               hour, price_idx, y, th, tl, ta, ca, cd)


# ---------------------------------------------------------------------------
# Model density
# ---------------------------------------------------------------------------


class _Layout:
    """Index bookkeeping for the flattened coefficient vector."""

    def __init__(self, n_prices: int, separate_cubic: bool):
        self.separate_cubic = separate_cubic
        self.b0 = slice(0, 24)
        self.b1 = slice(24, 48)
        at = 48
        if separate_cubic:
            self.b2 = slice(48, 72)
            at = 72
        else:
            self.b2 = None
        self.families = {}
        for fam in FEATURES:
            self.families[fam] = slice(at, at + n_prices)
            at += n_prices
        self.nu = at
        self.sigma = at + 1
        self.size = at + 2

    def names(self, prices) -> list[str]:
        out = [f"b0_{h}" for h in range(24)] + [f"b1_{h}" for h in range(24)]
        if self.separate_cubic:
            out += [f"b2_{h}" for h in range(24)]
        tags = {"temp_high": "th", "temp_low": "tl", "temp_avg": "ta",
                "consumption_avg": "yavg", "consumption_diff": "ydiff"}
        for fam in FEATURES:
            out += [f"{tags[fam]}_{p:.4f}" for p in prices]
        return out + ["nu", "sigma"]


class _StudentTGlm:
    """Log posterior and analytic gradient for the constrained parameter vector.

    The mean is linear in the coefficients, so it is materialized as one dense
    design matrix and the likelihood gradient over all coefficient families is
    a single X^T v product.
    """

    def __init__(self, design: GlmDesign, priors: PriorSpec, separate_cubic: bool = False):
        self.design = design
        self.priors = priors
        lay = _Layout(len(design.prices), separate_cubic)
        self.layout = lay
        self.y = design.y
        self.n = design.n_rows
        n_coef = lay.nu  # coefficients occupy [0, nu)
        X = np.zeros((self.n, n_coef))
        rows = np.arange(self.n)
        X[rows, design.hour] = 1.0
        if separate_cubic:
            X[rows, 24 + design.hour] = design.price_feature(design.price_values, "sq")
            X[rows, 48 + design.hour] = design.price_feature(design.price_values, "cube")
        else:
            X[rows, 24 + design.hour] = design.price_feature(design.price_values, "shared")
        for fam in FEATURES:
            sl = lay.families[fam]
            X[rows, sl.start + design.price_idx] = design.standardized(fam)
        self.X = X
        # prior precision and mean per coefficient
        prec = np.empty(n_coef)
        pmean = np.empty(n_coef)
        fam_of = (["beta0"] * 24 + ["beta1"] * (48 if separate_cubic else 24))
        for fam in FEATURES:
            fam_of += [fam] * len(design.prices)
        for i, fam in enumerate(fam_of):
            m, s = getattr(priors, fam)
            pmean[i] = m
            prec[i] = 1.0 / (s * s)
        self._prior_mean = pmean
        self._prior_prec = prec

    def mu(self, coefs: np.ndarray) -> np.ndarray:
        return self.X @ coefs[: self.layout.nu]

    def logp_and_grad(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        lay = self.layout
        nu = x[lay.nu]
        sigma = x[lay.sigma]
        coefs = x[: lay.nu]
        e = self.y - self.X @ coefs
        lam = sigma ** -2.0
        t = (lam / nu) * e * e
        log1pt = np.log1p(t)
        half_nu = 0.5 * nu
        sum_log1pt = log1pt.sum()
        logp = self.n * (gammaln(half_nu + 0.5) - gammaln(half_nu)
                         + 0.5 * (math.log(lam) - math.log(math.pi * nu)))
        logp -= (half_nu + 0.5) * sum_log1pt

        grad = np.empty(lay.size)
        denom = 1.0 + t
        dmu = ((nu + 1.0) * lam / nu) * (e / denom)
        grad[: lay.nu] = dmu @ self.X
        grad[lay.nu] = (self.n * (0.5 * digamma(half_nu + 0.5) - 0.5 * digamma(half_nu)
                                  - 0.5 / nu)
                        - 0.5 * sum_log1pt + (nu + 1.0) / (2.0 * nu) * (t / denom).sum())
        grad[lay.sigma] = -self.n / sigma + (nu + 1.0) / (nu * sigma ** 3) * (
            (e * e / denom).sum())

        # Gaussian priors on coefficients, exponential on sigma; the uniform
        # nu prior is constant inside its support (the transform keeps it there)
        d = coefs - self._prior_mean
        logp -= 0.5 * float(d @ (self._prior_prec * d))
        grad[: lay.nu] -= self._prior_prec * d
        logp -= self.priors.sigma_rate * sigma
        grad[lay.sigma] -= self.priors.sigma_rate
        return float(logp), grad


def log_posterior(params: np.ndarray, design: GlmDesign, priors: PriorSpec,
                  separate_cubic: bool = False) -> tuple[float, np.ndarray]:
    """Log posterior density and gradient at a constrained parameter vector
    ``[b0 (24), b1 (24), (b2 (24)), th, tl, ta, yavg, ydiff (per price), nu, sigma]``.

    Raises when the density is non-finite, naming the first offending row.
    """
    model = _StudentTGlm(design, priors, separate_cubic)
    params = np.asarray(params, dtype=float)
    if params.shape != (model.layout.size,):
        raise ValueError(f"expected {model.layout.size} parameters, got {params.shape}")
    lo, hi = priors.nu_bounds
    if not lo < params[model.layout.nu] < hi:
        raise ValueError(f"nu must be inside {priors.nu_bounds}")
    if params[model.layout.sigma] <= 0:
        raise ValueError("sigma must be positive")
    logp, grad = model.logp_and_grad(params)
    if not np.isfinite(logp):
        mu = model.mu(params)
        bad = np.nonzero(~np.isfinite(model.y - mu))[0]
        row = int(bad[0]) if bad.size else -1
        raise ValueError(f"non-finite log density (first offending row: {row})")
    return logp, grad


def build_target(design: GlmDesign, priors: PriorSpec,
                 separate_cubic: bool = False) -> TransformedTarget:
    """Sampler-space target for the model (nu via logit, sigma via log)."""
    model = _StudentTGlm(design, priors, separate_cubic)
    lay = model.layout
    blocks = [Identity(lay.nu), Interval(1, *priors.nu_bounds), Positive(1)]
    return TransformedTarget(model.logp_and_grad, blocks,
                             param_names=lay.names(design.prices))


@dataclass
class GlmPosterior:
    """Posterior draws over all model parameters plus fit metadata."""

    design: GlmDesign
    priors: PriorSpec
    config: SamplerConfig
    param_names: tuple[str, ...]
    draws: np.ndarray            # (chains, kept draws, params), constrained space
    r_hat: np.ndarray
    ess: np.ndarray
    divergences: int
    separate_cubic: bool = False
    warnings: list[str] = field(default_factory=list)
    trace: Trace | None = None

    @property
    def name(self) -> str:
        return self.design.consumer_id

    def flat(self) -> np.ndarray:
        return self.draws.reshape(-1, self.draws.shape[-1])

    def summary(self) -> DiagnosticsSummary:
        return summarize_chains(self.draws, self.param_names,
                                divergences=self.divergences)

    def natural_coefficients(self) -> dict[str, float]:
        """Posterior-mean slopes per unit of the raw regressor (back-transformed
        from the standardized scale); intercepts are at dataset-mean covariates."""
        means = self.flat().mean(axis=0)
        out = {}
        tags = {"th": ("temp_high", None), "tl": ("temp_low", None),
                "ta": ("temp_avg", None), "yavg": ("consumption_avg", None),
                "ydiff": ("consumption_diff", None)}
        for i, name in enumerate(self.param_names):
            fam = name.split("_")[0]
            if fam == "b0" or name in ("nu", "sigma"):
                out[name] = float(means[i])
            elif fam == "b1":
                out[name] = float(means[i] / self.design.price_scale["shared" if not self.separate_cubic else "sq"])
            elif fam == "b2":
                out[name] = float(means[i] / self.design.price_scale["cube"])
            elif fam in tags:
                feat = tags[fam][0]
                out[name] = float(means[i] / self.design.feature_sds[feat])
            else:
                out[name] = float(means[i])
        return out

    def fitted_means(self) -> np.ndarray:
        """Posterior-mean elasticity per design row (the model's fit to the data).

        mu is linear in the coefficients, so this equals mu at the
        posterior-mean coefficient vector."""
        model = _StudentTGlm(self.design, self.priors, self.separate_cubic)
        return model.mu(self.flat().mean(axis=0))

    def default_price_grid(self, points: int = 60) -> np.ndarray:
        top = max(self.design.prices) * 1.1
        return np.linspace(0.0, top, points)

    def save(self, path: str | Path, trace_path: str | Path | None = None) -> None:
        path = Path(path)
        if trace_path is None:
            trace_path = path.with_suffix(".trace.csv")
        from .mcmc import save_trace_csv
        save_trace_csv(trace_path, self.draws, self.param_names)
        doc = {
            "schema_version": 1,
            "design": self.design.to_dict(),
            "priors": self.priors.to_dict(),
            "config": self.config.to_dict(),
            "param_names": list(self.param_names),
            "r_hat": self.r_hat.tolist(),
            "ess": self.ess.tolist(),
            "divergences": self.divergences,
            "separate_cubic": self.separate_cubic,
            "warnings": self.warnings,
            "trace": str(trace_path),
        }
        path.write_text(json.dumps(doc, indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "GlmPosterior":
        from .mcmc import load_trace_csv
        doc = json.loads(Path(path).read_text())
        if doc.get("schema_version") != 1:
            raise ValueError("unsupported glm posterior schema version")
        values, names = load_trace_csv(doc["trace"])
        cfg = doc["config"]
        return cls(
            design=GlmDesign.from_dict(doc["design"]),
            priors=PriorSpec.from_dict(doc["priors"]),
            config=SamplerConfig(**cfg),
            param_names=tuple(doc["param_names"]),
            draws=values,
            r_hat=np.asarray(doc["r_hat"]),
            ess=np.asarray(doc["ess"]),
            divergences=doc["divergences"],
            separate_cubic=doc["separate_cubic"],
            warnings=list(doc["warnings"]),
        )


def fit(design: GlmDesign, priors: PriorSpec | None = None,
        config: SamplerConfig | None = None, separate_cubic: bool = False) -> GlmPosterior:
    """Sample the model posterior with NUTS.

    Defaults follow the intended workflow: 2000 kept draws after 1000 tuning
    draws on 4 chains.  Attaches per-parameter R-hat and bulk ESS; R-hat above
    1.05 adds a warning, and a divergence rate above 50% aborts with advice.
    """
    priors = priors or PriorSpec()
    config = config or SamplerConfig(draws=2000, tune=1000, chains=4)
    target = build_target(design, priors, separate_cubic)
    trace = run_chains(target, config)
    if trace.divergence_rate() > DIVERGENCE_ERROR_RATE:
        raise RuntimeError(
            f"{trace.divergence_rate():.0%} of draws diverged; consider widening "
            "priors or reparameterizing (e.g. separate_cubic or narrower nu bounds)")
    draws = target.constrain_draws(trace.samples)
    dim = draws.shape[-1]
    rh = np.array([r_hat(draws[:, :, i]) if config.chains >= 2 else math.nan
                   for i in range(dim)])
    ess = np.array([ess_bulk(draws[:, :, i]) for i in range(dim)])
    warnings = list(trace.warnings)
    bad = [target.param_names[i] for i in range(dim) if rh[i] > RHAT_WARNING]
    if bad:
        warnings.append(f"r_hat above {RHAT_WARNING} for: {', '.join(bad[:8])}")
    return GlmPosterior(design=design, priors=priors, config=config,
                        param_names=tuple(target.param_names), draws=draws,
                        r_hat=rh, ess=ess, divergences=int(trace.divergent.sum()),
                        separate_cubic=separate_cubic, warnings=warnings, trace=trace)


@dataclass(frozen=True)
class PredictiveSummary:
    """Posterior predictive distribution of elasticity at one (price, hour)."""

    price: float
    hour: int
    mean: float    # posterior mean of the model's expected elasticity
    q05: float     # predictive quantiles including Student-T noise
    q95: float
    draws: np.ndarray
    coefficients_from: float  # experienced price whose covariate coefficients were used

    def to_dict(self) -> dict:
        return {"price": self.price, "hour": self.hour, "mean": self.mean,
                "q05": self.q05, "q95": self.q95, "n_draws": int(self.draws.size),
                "coefficients_from": self.coefficients_from}


def predict_elasticity(post: GlmPosterior, price: float, hour: int,
                       covariates: dict[str, float] | None = None,
                       seed: int = 0) -> PredictiveSummary:
    """Predictive elasticity at any price, experienced or not.

    The price enters through the curvature feature; the per-price covariate
    coefficients come from the nearest experienced price.  ``covariates`` maps
    feature names (temp_high, temp_low, temp_avg, consumption_avg,
    consumption_diff) to raw values; missing entries default to the design's
    values at that (nearest price, hour) cell.  Each posterior draw adds
    Student-T noise with its own (nu, sigma).
    """
    if not 0 <= hour <= 23:
        raise ValueError("hour must be in 0..23")
    design = post.design
    nearest_idx = int(np.argmin([abs(p - price) for p in design.prices]))
    nearest = design.prices[nearest_idx]
    row = np.nonzero((design.price_idx == nearest_idx) & (design.hour == hour))[0][0]
    cov = dict(covariates or {})
    features = {}
    for fam in FEATURES:
        raw = cov.get(fam, float(getattr(design, fam)[row]))
        features[fam] = design.standardize_value(fam, raw, hour)

    flat = post.flat()
    lay = _Layout(len(design.prices), post.separate_cubic)
    mu = flat[:, lay.b0][:, hour].copy()
    if post.separate_cubic:
        mu += flat[:, lay.b1][:, hour] * design.price_feature(price, "sq")
        mu += flat[:, lay.b2][:, hour] * design.price_feature(price, "cube")
    else:
        mu += flat[:, lay.b1][:, hour] * design.price_feature(price, "shared")
    for fam in FEATURES:
        mu += flat[:, lay.families[fam]][:, nearest_idx] * features[fam]

    nu = flat[:, lay.nu]
    sigma = flat[:, lay.sigma]
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(hour,))))
    noise = rng.standard_t(nu) * sigma
    draws = mu + noise
    q05, q95 = np.percentile(draws, [5, 95])
    return PredictiveSummary(price=float(price), hour=hour, mean=float(mu.mean()),
                             q05=float(q05), q95=float(q95), draws=draws,
                             coefficients_from=float(nearest))


def regression_lines(post: GlmPosterior, price_grid, hour: int | None = None,
                     n_curves: int = 50):
    """Per-draw elasticity-vs-price curves plus their pointwise mean.

    Curves are evaluated at dataset-mean covariates, so they trace
    b0_h + b1_h * price_feature (per hour, or averaged over hours when
    ``hour`` is None).  Returns ``(curves, mean_curve, draw_indices)`` where
    the mean curve is exactly the pointwise mean of the emitted curves.
    """
    grid = np.asarray(price_grid, dtype=float)
    if grid.size == 0:
        raise ValueError("price grid must be non-empty")
    flat = post.flat()
    step = max(1, flat.shape[0] // n_curves)
    idx = np.arange(0, flat.shape[0], step)[:n_curves]
    sel = flat[idx]
    lay = _Layout(len(post.design.prices), post.separate_cubic)
    if hour is None:
        b0 = sel[:, lay.b0].mean(axis=1, keepdims=True)
        b1 = sel[:, lay.b1].mean(axis=1, keepdims=True)
        b2 = sel[:, lay.b2].mean(axis=1, keepdims=True) if post.separate_cubic else None
    else:
        if not 0 <= hour <= 23:
            raise ValueError("hour must be in 0..23")
        b0 = sel[:, lay.b0][:, [hour]]
        b1 = sel[:, lay.b1][:, [hour]]
        b2 = sel[:, lay.b2][:, [hour]] if post.separate_cubic else None
    if post.separate_cubic:
        curves = (b0 + b1 * post.design.price_feature(grid, "sq")[None, :]
                  + b2 * post.design.price_feature(grid, "cube")[None, :])
    else:
        curves = b0 + b1 * post.design.price_feature(grid, "shared")[None, :]
    return curves, curves.mean(axis=0), idx
