"""Log-density targets for the gradient-based sampler.

A target lives on an unconstrained space of dimension ``dim``; bounded model
parameters are handled by composing a model-space density with the block
transforms from :mod:`drbayes.mcmc.transforms`.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .transforms import Identity, Transform


class LogDensityTarget:
    """Unnormalized log density with gradient, over unconstrained coordinates.

    Subclasses implement :meth:`logp_and_grad`; the sampler only ever calls
    that method, so value and gradient share intermediate work.  ``blocks``
    describe how sampler coordinates map to model coordinates; targets without
    bounded parameters use a single identity block.
    """

    dim: int
    blocks: tuple[Transform, ...]
    param_names: tuple[str, ...] | None = None

    def logp_and_grad(self, y: np.ndarray) -> tuple[float, np.ndarray]:
        raise NotImplementedError

    def logp(self, y: np.ndarray) -> float:
        return self.logp_and_grad(y)[0]

    def grad(self, y: np.ndarray) -> np.ndarray:
        return self.logp_and_grad(y)[1]

    @property
    def constrained_dim(self) -> int:
        return sum(t.constrained_dim for t in self.blocks)

    def constrain(self, y: np.ndarray) -> np.ndarray:
        """Map one unconstrained point to model-space coordinates."""
        pieces = []
        start = 0
        for t in self.blocks:
            pieces.append(np.atleast_1d(t.forward(y[start : start + t.unconstrained_dim])))
            start += t.unconstrained_dim
        return np.concatenate(pieces)

    def constrain_draws(self, samples: np.ndarray) -> np.ndarray:
        """Map an array of draws (..., dim) to model space (..., constrained_dim)."""
        flat = samples.reshape(-1, samples.shape[-1])
        out = np.empty((flat.shape[0], self.constrained_dim))
        for i, row in enumerate(flat):
            out[i] = self.constrain(row)
        return out.reshape(samples.shape[:-1] + (self.constrained_dim,))

    def initial_point(self, rng: np.random.Generator, jitter: float) -> np.ndarray:
        return rng.uniform(-jitter, jitter, self.dim)


class FunctionTarget(LogDensityTarget):
    """Wrap a plain ``y -> (logp, grad)`` callable as a target."""

    def __init__(self, dim: int, logp_and_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
                 param_names: Sequence[str] | None = None):
        self.dim = dim
        self.blocks = (Identity(dim),)
        self._fn = logp_and_grad
        self.param_names = tuple(param_names) if param_names is not None else None

    def logp_and_grad(self, y):
        return self._fn(y)


class TransformedTarget(LogDensityTarget):
    """Model-space density plus transform blocks.

    ``model_logp_and_grad`` receives the concatenated constrained vector and
    returns its log density and gradient there; the wrapper adds the
    log-Jacobian corrections and pulls the gradient back to sampler space.
    """

    def __init__(self, model_logp_and_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
                 blocks: Sequence[Transform], param_names: Sequence[str] | None = None):
        self.blocks = tuple(blocks)
        self.dim = sum(t.unconstrained_dim for t in self.blocks)
        self._model = model_logp_and_grad
        self.param_names = tuple(param_names) if param_names is not None else None
        self._uslices = []
        self._cslices = []
        u = c = 0
        for t in self.blocks:
            self._uslices.append(slice(u, u + t.unconstrained_dim))
            self._cslices.append(slice(c, c + t.constrained_dim))
            u += t.unconstrained_dim
            c += t.constrained_dim

    def logp_and_grad(self, y):
        x = np.empty(self.constrained_dim)
        log_jac = 0.0
        for t, us, cs in zip(self.blocks, self._uslices, self._cslices):
            x[cs] = t.forward(y[us])
            log_jac += t.log_jacobian(y[us])
        logp, grad_x = self._model(x)
        grad_y = np.empty(self.dim)
        for t, us, cs in zip(self.blocks, self._uslices, self._cslices):
            grad_y[us] = t.pullback(y[us], grad_x[cs]) + t.grad_log_jacobian(y[us])
        return logp + log_jac, grad_y

    def unconstrain(self, x: np.ndarray) -> np.ndarray:
        """Map a model-space point to sampler coordinates (for initialization)."""
        y = np.empty(self.dim)
        for t, us, cs in zip(self.blocks, self._uslices, self._cslices):
            y[us] = t.inverse(x[cs])
        return y


class GaussianTarget(LogDensityTarget):
    """Multivariate normal target, used for sampler validation."""

    def __init__(self, mean: Sequence[float], cov: Sequence[Sequence[float]]):
        self.mean = np.asarray(mean, dtype=float)
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        self.cov = cov
        self.precision = np.linalg.inv(cov)
        self.dim = self.mean.size
        self.blocks = (Identity(self.dim),)
        self.param_names = tuple(f"x{i}" for i in range(self.dim))

    def logp_and_grad(self, y):
        d = y - self.mean
        g = -self.precision @ d
        return 0.5 * float(d @ g), g
