"""Multi-chain sampling driver with warmup adaptation and reproducible streams.

Chains use the counter-based Philox generator keyed by ``seed + chain_index``,
so a ``(target, config)`` pair fully determines the trace regardless of how
chains are scheduled.  Warmup runs dual-averaging step-size adaptation
throughout and, midway, replaces the identity mass matrix with a regularized
diagonal estimate from the warmup draws.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .nuts import DualAveraging, find_reasonable_step_size, nuts_draw
from .targets import LogDensityTarget


@dataclass(frozen=True)
class SamplerConfig:
    draws: int = 1000
    tune: int = 1000
    chains: int = 4
    seed: int = 0
    target_accept: float = 0.8
    max_tree_depth: int = 10
    tree_method: str = "multinomial"  # "slice" replicates the original formulation
    adapt_mass: bool = True
    init_jitter: float = 1.0

    def __post_init__(self):
        if self.draws <= 0:
            raise ValueError("draws must be positive")
        if self.tune < 0:
            raise ValueError("tune must be non-negative")
        if self.chains < 1:
            raise ValueError("chains must be >= 1")
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError("target_accept must be in (0, 1)")
        if self.max_tree_depth < 1:
            raise ValueError("max_tree_depth must be >= 1")
        if self.tree_method not in ("multinomial", "slice"):
            raise ValueError(f"unknown tree_method {self.tree_method!r}")

    def to_dict(self) -> dict:
        return {
            "draws": self.draws, "tune": self.tune, "chains": self.chains,
            "seed": self.seed, "target_accept": self.target_accept,
            "max_tree_depth": self.max_tree_depth, "tree_method": self.tree_method,
        }


@dataclass
class Trace:
    """Kept (post-warmup) samples and per-draw sampler statistics."""

    samples: np.ndarray        # (chains, draws, dim), sampler-space coordinates
    divergent: np.ndarray      # (chains, draws) bool
    accept_stat: np.ndarray    # (chains, draws)
    tree_depth: np.ndarray     # (chains, draws)
    step_sizes: np.ndarray     # (chains,) frozen post-warmup step size
    config: SamplerConfig
    warnings: list[str] = field(default_factory=list)
    param_names: tuple[str, ...] | None = None

    @property
    def n_chains(self) -> int:
        return self.samples.shape[0]

    @property
    def n_draws(self) -> int:
        return self.samples.shape[1]

    @property
    def dim(self) -> int:
        return self.samples.shape[2]

    def flat(self) -> np.ndarray:
        """All chains pooled, shape (chains * draws, dim)."""
        return self.samples.reshape(-1, self.samples.shape[2])

    def divergence_rate(self) -> float:
        return float(self.divergent.mean())


def chain_rng(seed: int, chain: int) -> np.random.Generator:
    """Stream for one chain: Philox keyed by seed + chain index."""
    return np.random.Generator(np.random.Philox(seed + chain))


def substream_rng(seed: int, *key: int) -> np.random.Generator:
    """Named Philox substream, e.g. one per consumer or per hour."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


def _regularized_variance(window: np.ndarray) -> np.ndarray:
    n = window.shape[0]
    var = window.var(axis=0, ddof=1) if n > 1 else np.ones(window.shape[1])
    shrink = n / (n + 5.0)
    return shrink * var + (1.0 - shrink) * 1e-3


def _mass_windows(tune: int) -> list[tuple[int, int]]:
    """Warmup slow windows (start, end) for diagonal mass estimation.

    Mirrors the usual three-phase schedule: an initial step-size-only stretch,
    doubling covariance windows, and a final step-size-only stretch.  Each
    window's estimate uses only its own draws, so the initial transient never
    contaminates the final mass matrix.
    """
    if tune < 150:
        return []
    first = max(int(0.15 * tune), 25)
    last = max(int(0.10 * tune), 25)
    slow_end = tune - last
    windows = []
    start = first
    width = 25
    while start < slow_end:
        end = min(start + width, slow_end)
        # absorb a too-small tail into the last window
        if slow_end - end < 25:
            end = slow_end
        windows.append((start, end))
        start = end
        width *= 2
    return windows


def _run_single_chain(target: LogDensityTarget, config: SamplerConfig, chain: int):
    rng = chain_rng(config.seed, chain)
    dim = target.dim
    q = target.initial_point(rng, config.init_jitter)
    logp, grad = target.logp_and_grad(q)
    for _ in range(20):
        if np.isfinite(logp):
            break
        q = q * 0.5
        logp, grad = target.logp_and_grad(q)
    if not np.isfinite(logp):
        raise RuntimeError(f"chain {chain}: could not find a finite starting point")

    inv_mass = np.ones(dim)
    cache = [logp, grad]
    tune = config.tune
    if tune > 0:
        step = find_reasonable_step_size(target, q, rng, inv_mass)
        da = DualAveraging(step, config.target_accept)
        windows = _mass_windows(tune) if config.adapt_mass else []
        ends = {end: start for start, end in windows}
        window: list[np.ndarray] = []
        collecting_from = windows[0][0] if windows else tune + 1
        for m in range(tune):
            q, stats = nuts_draw(q, target, step, rng, inv_mass=inv_mass,
                                 max_tree_depth=config.max_tree_depth,
                                 method=config.tree_method, cache=cache)
            step = da.update(stats.accept_stat)
            if m >= collecting_from:
                window.append(q)
            if m + 1 in ends:
                if len(window) >= 10:
                    inv_mass = _regularized_variance(np.asarray(window))
                    step = find_reasonable_step_size(target, q, rng, inv_mass)
                    da = DualAveraging(step, config.target_accept)
                window = []  # each window estimates from its own draws only
        step = da.finalize()
    else:
        step = find_reasonable_step_size(target, q, rng, inv_mass)

    samples = np.empty((config.draws, dim))
    divergent = np.empty(config.draws, dtype=bool)
    accept = np.empty(config.draws)
    depth = np.empty(config.draws, dtype=np.int16)
    for d in range(config.draws):
        q, stats = nuts_draw(q, target, step, rng, inv_mass=inv_mass,
                             max_tree_depth=config.max_tree_depth,
                             method=config.tree_method, cache=cache)
        samples[d] = q
        divergent[d] = stats.divergent
        accept[d] = stats.accept_stat
        depth[d] = stats.depth
    return samples, divergent, accept, depth, step


def _worker_count(chains: int) -> int:
    env = os.environ.get("DRBAYES_THREADS")
    if env:
        return max(1, min(chains, int(env)))
    return max(1, min(chains, os.cpu_count() or 1))


def run_chains(target: LogDensityTarget, config: SamplerConfig) -> Trace:
    """Sample ``config.chains`` independent chains; results are merged by chain
    index, so identical ``(target, config)`` always yields an identical Trace.

    Raises ``RuntimeError`` when a chain diverges on every kept draw; chains
    with more than 10% divergent draws attach a warning instead.
    """
    workers = _worker_count(config.chains)
    if workers > 1 and config.chains > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda c: _run_single_chain(target, config, c),
                                    range(config.chains)))
    else:
        results = [_run_single_chain(target, config, c) for c in range(config.chains)]

    samples = np.stack([r[0] for r in results])
    divergent = np.stack([r[1] for r in results])
    accept = np.stack([r[2] for r in results])
    depth = np.stack([r[3] for r in results])
    steps = np.array([r[4] for r in results])

    warnings = []
    for c in range(config.chains):
        rate = float(divergent[c].mean())
        if rate >= 1.0:
            raise RuntimeError(f"chain {c} diverged on every draw; the target is "
                               "likely misspecified or needs a reparameterization")
        if rate > 0.10:
            warnings.append(f"chain {c}: {rate:.1%} divergent draws")
    return Trace(samples=samples, divergent=divergent, accept_stat=accept,
                 tree_depth=depth, step_sizes=steps, config=config,
                 warnings=warnings, param_names=target.param_names)


def dirichlet_direct_sample(alpha: np.ndarray, n_draws: int, rng: np.random.Generator) -> np.ndarray:
    """Exact Dirichlet draws via the Gamma-normalization construction.

    ``alpha`` may be a vector (one simplex) or a (rows, k) matrix of
    independent simplexes; output has shape (n_draws, *alpha.shape).
    """
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha <= 0):
        raise ValueError("all Dirichlet concentrations must be positive")
    g = rng.gamma(np.broadcast_to(alpha, (n_draws,) + alpha.shape))
    return g / g.sum(axis=-1, keepdims=True)


def save_trace_csv(path, values: np.ndarray, param_names=None) -> None:
    """Long-format trace serialization: ``chain,draw,param,value`` rows."""
    chains, draws, dim = values.shape
    if param_names is None:
        param_names = [f"p{i}" for i in range(dim)]
    with open(path, "w") as fh:
        fh.write("chain,draw,param,value\n")
        for c in range(chains):
            for d in range(draws):
                row = values[c, d]
                for name, v in zip(param_names, row):
                    fh.write(f"{c},{d},{name},{float(v)!r}\n")


def load_trace_csv(path) -> tuple[np.ndarray, list[str]]:
    """Inverse of :func:`save_trace_csv`; returns (values, param_names)."""
    entries: dict[tuple[int, int], dict[str, float]] = {}
    names: list[str] = []
    seen: set[str] = set()
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "chain,draw,param,value":
            raise ValueError(f"unexpected trace header {header!r}")
        for line in fh:
            c, d, name, v = line.rstrip("\n").split(",")
            entries.setdefault((int(c), int(d)), {})[name] = float(v)
            if name not in seen:
                seen.add(name)
                names.append(name)
    chains = max(k[0] for k in entries) + 1
    draws = max(k[1] for k in entries) + 1
    values = np.empty((chains, draws, len(names)))
    for (c, d), row in entries.items():
        values[c, d] = [row[n] for n in names]
    return values, names


def save_divergence_report(path, trace: Trace) -> None:
    """Sidecar JSON describing divergences and adaptation outcomes."""
    report = {
        "divergent_draws": int(trace.divergent.sum()),
        "divergence_rate": trace.divergence_rate(),
        "per_chain_rate": [float(r) for r in trace.divergent.mean(axis=1)],
        "step_sizes": [float(s) for s in trace.step_sizes],
        "warnings": trace.warnings,
        "config": trace.config.to_dict(),
    }
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
