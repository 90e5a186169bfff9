"""Convergence diagnostics, posterior summaries, and figure-data emission.

R-hat is the rank-normalized split form, which stays well behaved under the
heavy-tailed draws the Student-T model produces.  Figure emission writes CSV
data only (never rendered images); every file is written atomically
(temp file + rename) with deterministic names ``{family}_{name}[ _{price}].csv``.
"""

from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import norm, rankdata


# ---------------------------------------------------------------------------
# Convergence statistics
# ---------------------------------------------------------------------------


def _split_chains(samples: np.ndarray) -> np.ndarray:
    chains, draws = samples.shape
    half = draws // 2
    return np.concatenate([samples[:, :half], samples[:, half : 2 * half]], axis=0)


def _rank_normalize(samples: np.ndarray) -> np.ndarray:
    flat = samples.reshape(-1)
    ranks = rankdata(flat, method="average")
    z = norm.ppf((ranks - 0.375) / (flat.size + 0.25))
    return z.reshape(samples.shape)


def _classic_r_hat(samples: np.ndarray) -> float:
    m, n = samples.shape
    chain_means = samples.mean(axis=1)
    within = samples.var(axis=1, ddof=1).mean()
    between = n * chain_means.var(ddof=1)
    if within == 0:
        return 1.0
    var_plus = (n - 1) / n * within + between / n
    return math.sqrt(var_plus / within)


def r_hat(trace, param: int | None = None) -> float:
    """Rank-normalized split-R-hat for one parameter.

    Accepts a :class:`~drbayes.mcmc.Trace` plus a parameter index, or a raw
    (chains, draws) array.  Needs at least 2 chains of at least 4 draws;
    a constant trace is defined as exactly 1.
    """
    samples = _extract(trace, param)
    if samples.shape[0] < 2:
        raise ValueError("r_hat needs at least 2 chains; use ESS-only diagnostics "
                         "for single-chain runs")
    if samples.shape[1] < 4:
        raise ValueError("r_hat needs at least 4 draws per chain")
    if np.all(samples == samples.flat[0]):
        return 1.0
    split = _split_chains(samples)
    return _classic_r_hat(_rank_normalize(split))


def _extract(trace, param) -> np.ndarray:
    if hasattr(trace, "samples"):
        if param is None:
            raise ValueError("a parameter index is required with a Trace input")
        return np.asarray(trace.samples[:, :, param], dtype=float)
    arr = np.asarray(trace, dtype=float)
    if arr.ndim == 3:
        if param is None:
            raise ValueError("a parameter index is required with a 3-D array")
        return arr[:, :, param]
    return arr


def ess_bulk(trace, param: int | None = None) -> float:
    """Rank-normalized split effective sample size (Geyer initial monotone sum)."""
    samples = _extract(trace, param)
    if np.all(samples == samples.flat[0]):
        return float(samples.size)
    split = _rank_normalize(_split_chains(samples))
    m, n = split.shape
    acov = np.empty((m, n))
    for c in range(m):
        acov[c] = _autocov_fft(split[c])
    chain_var = acov[:, 0] * n / (n - 1.0)
    within = chain_var.mean()
    mean_acov = acov.mean(axis=0)
    var_plus = within * (n - 1.0) / n
    if m > 1:
        var_plus += split.mean(axis=1).var(ddof=1)
    if var_plus == 0:
        return float(samples.size)
    rho = 1.0 - (within - mean_acov) / var_plus
    # Geyer: tau = -1 + 2 * sum of positive, monotone-decreasing pair sums
    pair_total = 0.0
    prev_pair = np.inf
    t = 0
    while t + 1 < n:
        pair = rho[t] + rho[t + 1]
        if pair <= 0:
            break
        pair = min(pair, prev_pair)
        pair_total += pair
        prev_pair = pair
        t += 2
    tau = max(2.0 * pair_total - 1.0, 1e-12)
    ess = samples.size / tau
    return float(min(ess, samples.size))


def _autocov_fft(x: np.ndarray) -> np.ndarray:
    n = x.size
    xc = x - x.mean()
    size = 2 ** int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(xc, size)
    acov = np.fft.irfft(f * np.conjugate(f))[:n].real
    return acov / n


def hpd_interval(draws: np.ndarray, mass: float) -> tuple[float, float]:
    """Smallest-width contiguous interval containing ceil(mass * n) sorted draws."""
    draws = np.sort(np.asarray(draws, dtype=float).ravel())
    n = draws.size
    if n < 10:
        raise ValueError("hpd_interval needs at least 10 draws")
    if not 0.0 < mass < 1.0:
        raise ValueError("mass must be in (0, 1)")
    window = int(math.ceil(mass * n))
    if window >= n:
        return float(draws[0]), float(draws[-1])
    widths = draws[window:] - draws[: n - window]
    i = int(np.argmin(widths))
    return float(draws[i]), float(draws[i + window])


def kde(draws: np.ndarray, grid: int = 256,
        lo: float | None = None, hi: float | None = None):
    """Gaussian kernel density estimate with the Silverman bandwidth.

    Grid spans [min - 3bw, max + 3bw] unless (lo, hi) pin it.  Returns
    ``(grid_points, density)``; all-equal draws raise, since the density is
    a point mass.
    """
    draws = np.asarray(draws, dtype=float).ravel()
    if np.unique(draws).size < 2:
        raise ValueError("kde needs at least 2 distinct draws (delta-like sample)")
    n = draws.size
    sd = draws.std(ddof=1)
    q75, q25 = np.percentile(draws, [75, 25])
    iqr = q75 - q25
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    bw = 0.9 * spread * n ** (-0.2)
    if lo is None:
        lo = draws.min() - 3 * bw
    if hi is None:
        hi = draws.max() + 3 * bw
    xs = np.linspace(lo, hi, grid)
    z = (xs[:, None] - draws[None, :]) / bw
    with np.errstate(under="ignore"):
        dens = np.exp(-0.5 * z * z).sum(axis=1) / (n * bw * math.sqrt(2 * math.pi))
    return xs, dens


@dataclass(frozen=True)
class DiagnosticsSummary:
    """Per-parameter convergence and posterior summary for one trace."""

    params: tuple[str, ...]
    r_hat: np.ndarray
    ess_bulk: np.ndarray
    mean: np.ndarray
    sd: np.ndarray
    hpd5: np.ndarray
    hpd95: np.ndarray
    divergences: int
    runtime_s: float = 0.0

    def rows(self) -> list[dict]:
        return [
            {"param": p, "r_hat": float(self.r_hat[i]), "ess_bulk": float(self.ess_bulk[i]),
             "mean": float(self.mean[i]), "sd": float(self.sd[i]),
             "hpd5": float(self.hpd5[i]), "hpd95": float(self.hpd95[i])}
            for i, p in enumerate(self.params)
        ]


def summarize_chains(values: np.ndarray, names: Sequence[str],
                     divergences: int = 0, runtime_s: float = 0.0,
                     hpd_mass: float = 0.90) -> DiagnosticsSummary:
    """Build a DiagnosticsSummary from (chains, draws, params) values."""
    chains, draws, dim = values.shape
    rh = np.empty(dim)
    ess = np.empty(dim)
    lo = np.empty(dim)
    hi = np.empty(dim)
    flat = values.reshape(-1, dim)
    for i in range(dim):
        rh[i] = r_hat(values[:, :, i]) if chains >= 2 else math.nan
        ess[i] = ess_bulk(values[:, :, i])
        lo[i], hi[i] = hpd_interval(flat[:, i], hpd_mass)
    return DiagnosticsSummary(params=tuple(names), r_hat=rh, ess_bulk=ess,
                              mean=flat.mean(axis=0), sd=flat.std(axis=0, ddof=1),
                              hpd5=lo, hpd95=hi, divergences=divergences,
                              runtime_s=runtime_s)


# ---------------------------------------------------------------------------
# Figure-data emission
# ---------------------------------------------------------------------------

FIGURE_FAMILIES = ("score_density", "score_by_hour", "glm_marginals",
                   "regression_lines", "elasticity_vs_actual", "predictive_density")


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv(header: str, rows: list[str]) -> str:
    return "\n".join([header] + rows) + "\n"


def emit_figure_data(results, figure_family: str, out_dir: str | Path) -> list[Path]:
    """Write the data behind one figure family; returns the created paths.

    Families and their inputs:

    - ``score_density`` / ``score_by_hour``: a ResponseScore
    - ``glm_marginals`` / ``regression_lines``: a GlmPosterior
    - ``elasticity_vs_actual``: a GlmPosterior (design supplies the actuals)
    - ``predictive_density``: a list of PredictiveSummary

    A type/family mismatch raises before any file is written.
    """
    from .glm import GlmPosterior, PredictiveSummary, regression_lines
    from .scoring import ResponseScore

    if figure_family not in FIGURE_FAMILIES:
        raise ValueError(f"unknown figure family {figure_family!r}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    made: list[Path] = []

    if figure_family in ("score_density", "score_by_hour"):
        if not isinstance(results, ResponseScore):
            raise TypeError(f"{figure_family} needs a ResponseScore, got {type(results).__name__}")
        name = results.name or "score"
        suffix = f"_{results.price:.4f}" if results.price is not None else ""
        if figure_family == "score_by_hour":
            rows = [
                f"{o},{h},{float(results.mean[i, h])!r},{float(results.hpd_low[i, h])!r},{float(results.hpd_high[i, h])!r}"
                for i, o in enumerate(results.outcomes) for h in range(24)
            ]
            path = out_dir / f"score_by_hour_{name}{suffix}.csv"
            _atomic_write(path, _csv("outcome,hour,mean,hpd5,hpd95", rows))
            made.append(path)
        else:
            rows = []
            for i, o in enumerate(results.outcomes):
                for h in range(24):
                    d = results.draws[:, i, h]
                    if np.unique(d).size < 2:
                        continue
                    xs, dens = kde(d, grid=256, lo=0.0, hi=1.0)
                    rows.extend(f"{o},{h},{float(x)!r},{float(v)!r}" for x, v in zip(xs, dens))
            if not rows:
                raise ValueError("no density rows to emit (degenerate draws)")
            path = out_dir / f"score_density_{name}{suffix}.csv"
            _atomic_write(path, _csv("outcome,hour,grid,density", rows))
            made.append(path)
        return made

    if figure_family == "glm_marginals":
        if not isinstance(results, GlmPosterior):
            raise TypeError(f"glm_marginals needs a GlmPosterior, got {type(results).__name__}")
        summary = results.summary()
        rows = [
            f"{r['param']},{r['mean']!r},{r['sd']!r},{r['hpd5']!r},{r['hpd95']!r},"
            f"{r['r_hat']!r},{r['ess_bulk']!r}"
            for r in summary.rows()
        ]
        path = out_dir / f"glm_marginals_{results.name}.csv"
        _atomic_write(path, _csv("param,mean,sd,hpd5,hpd95,r_hat,ess", rows))
        return [path]

    if figure_family == "regression_lines":
        if not isinstance(results, GlmPosterior):
            raise TypeError(f"regression_lines needs a GlmPosterior, got {type(results).__name__}")
        grid = results.default_price_grid()
        header = "hour,draw,price,mu"
        for hour in range(24):
            curves, mean_curve, draw_ids = regression_lines(results, grid, hour=hour)
            rows = [f"{hour},-1,{float(p)!r},{float(m)!r}" for p, m in zip(grid, mean_curve)]
            for d_i, curve in zip(draw_ids, curves):
                rows.extend(f"{hour},{d_i},{float(p)!r},{float(m)!r}" for p, m in zip(grid, curve))
            path = out_dir / f"regression_lines_{results.name}_h{hour}.csv"
            _atomic_write(path, _csv(header, rows))
            made.append(path)
        curves, mean_curve, draw_ids = regression_lines(results, grid, hour=None)
        rows = [f"-1,-1,{float(p)!r},{float(m)!r}" for p, m in zip(grid, mean_curve)]
        for d_i, curve in zip(draw_ids, curves):
            rows.extend(f"-1,{d_i},{float(p)!r},{float(m)!r}" for p, m in zip(grid, curve))
        path = out_dir / f"regression_lines_{results.name}_all.csv"
        _atomic_write(path, _csv(header, rows))
        made.append(path)
        return made

    if figure_family == "elasticity_vs_actual":
        if not isinstance(results, GlmPosterior):
            raise TypeError(f"elasticity_vs_actual needs a GlmPosterior, got {type(results).__name__}")
        modeled = results.fitted_means()
        actual = results.design.y
        rows = [f"{i},{float(modeled[i])!r},{float(actual[i])!r}" for i in range(len(actual))]
        path = out_dir / f"elasticity_vs_actual_{results.name}.csv"
        _atomic_write(path, _csv("response_index,modeled_mean,actual", rows))
        return [path]

    # predictive_density
    preds = list(results) if isinstance(results, (list, tuple)) else [results]
    if not preds or not all(isinstance(p, PredictiveSummary) for p in preds):
        raise TypeError("predictive_density needs PredictiveSummary results")
    rows = []
    for p in preds:
        xs, dens = kde(p.draws, grid=256)
        rows.extend(f"{float(p.price)!r},{p.hour},{float(x)!r},{float(v)!r}" for x, v in zip(xs, dens))
    path = out_dir / "predictive_density.csv"
    _atomic_write(path, _csv("price,hour,grid,density", rows))
    return [path]
