"""Coordinate transforms between the unconstrained sampler space and model space.

Each transform maps a block of unconstrained coordinates ``y`` to constrained
model coordinates ``x`` and supplies the log-Jacobian correction plus the
vector-Jacobian products needed to pull model-space gradients back to sampler
space.  The simplex transform is the stick-breaking construction and changes
dimension (``k - 1`` unconstrained coordinates to ``k`` constrained ones).
"""

from __future__ import annotations

import numpy as np


def _sigmoid(t: np.ndarray) -> np.ndarray:
    out = np.empty_like(t, dtype=float)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _log_sigmoid(t: np.ndarray) -> np.ndarray:
    # log(sigmoid(t)) = -log(1 + exp(-t)), stable for both signs
    return -np.logaddexp(0.0, -t)


class Transform:
    """Base class: block transform y (unconstrained) -> x (constrained)."""

    unconstrained_dim: int
    constrained_dim: int

    def forward(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def inverse(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def log_jacobian(self, y: np.ndarray) -> float:
        raise NotImplementedError

    def pullback(self, y: np.ndarray, grad_x: np.ndarray) -> np.ndarray:
        """Return J(y)^T grad_x, the model-space gradient seen from y."""
        raise NotImplementedError

    def grad_log_jacobian(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class Identity(Transform):
    def __init__(self, n: int):
        self.unconstrained_dim = n
        self.constrained_dim = n

    def forward(self, y):
        return y

    def inverse(self, x):
        return np.asarray(x, dtype=float)

    def log_jacobian(self, y):
        return 0.0

    def pullback(self, y, grad_x):
        return grad_x

    def grad_log_jacobian(self, y):
        return np.zeros_like(y)


class Positive(Transform):
    """x = exp(y), for strictly positive coordinates."""

    def __init__(self, n: int = 1):
        self.unconstrained_dim = n
        self.constrained_dim = n

    def forward(self, y):
        return np.exp(y)

    def inverse(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x <= 0):
            raise ValueError("positive transform requires x > 0")
        return np.log(x)

    def log_jacobian(self, y):
        return float(np.sum(y))

    def pullback(self, y, grad_x):
        return grad_x * np.exp(y)

    def grad_log_jacobian(self, y):
        return np.ones_like(y)


class Interval(Transform):
    """x = a + (b - a) * sigmoid(y), for coordinates in the open interval (a, b)."""

    def __init__(self, n: int, lower: float, upper: float):
        if not lower < upper:
            raise ValueError(f"need lower < upper, got ({lower}, {upper})")
        self.unconstrained_dim = n
        self.constrained_dim = n
        self.lower = float(lower)
        self.upper = float(upper)

    def forward(self, y):
        return self.lower + (self.upper - self.lower) * _sigmoid(y)

    def inverse(self, x):
        x = np.asarray(x, dtype=float)
        z = (x - self.lower) / (self.upper - self.lower)
        if np.any(z <= 0) or np.any(z >= 1):
            raise ValueError("interval transform requires x strictly inside (lower, upper)")
        return np.log(z) - np.log1p(-z)

    def log_jacobian(self, y):
        width = self.upper - self.lower
        return float(np.sum(np.log(width) + _log_sigmoid(y) + _log_sigmoid(-y)))

    def pullback(self, y, grad_x):
        s = _sigmoid(y)
        return grad_x * (self.upper - self.lower) * s * (1.0 - s)

    def grad_log_jacobian(self, y):
        return 1.0 - 2.0 * _sigmoid(y)


# ---------------------------------------------------------------------------
# Stick-breaking simplex transform, batched over rows.
#
# y has shape (rows, k-1); x has shape (rows, k) with each row on the simplex.
# The per-coordinate shift log(1/(k - j)) maps y = 0 to the uniform simplex
# point.  All helpers below operate on 2-D arrays so that models with many
# independent simplex blocks (one per hour) evaluate in a handful of
# vectorized operations.
# ---------------------------------------------------------------------------


def stick_offsets(k: int) -> np.ndarray:
    return -np.log(k - 1.0 - np.arange(k - 1))


def stick_forward(y: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Map y (rows, k-1) to simplex points x (rows, k).

    Returns ``(x, z, stick)`` where ``z`` are the breaking fractions and
    ``stick[:, j]`` is the stick remaining before coordinate ``j`` is broken
    off; both are reused by the Jacobian and pullback computations.
    """
    y = np.atleast_2d(y)
    k = y.shape[1] + 1
    z = _sigmoid(y + stick_offsets(k))
    stick = np.cumprod(1.0 - z, axis=1)
    stick = np.concatenate([np.ones((y.shape[0], 1)), stick], axis=1)  # (rows, k)
    x = np.empty((y.shape[0], k))
    x[:, :-1] = stick[:, :-1] * z
    x[:, -1] = stick[:, -1]
    return x, z, stick


def stick_inverse(x: np.ndarray) -> np.ndarray:
    """Map simplex points x (rows, k) back to unconstrained y (rows, k-1)."""
    x = np.atleast_2d(x)
    k = x.shape[1]
    remaining = 1.0 - np.concatenate(
        [np.zeros((x.shape[0], 1)), np.cumsum(x[:, :-2], axis=1)], axis=1
    )
    z = x[:, :-1] / remaining
    return np.log(z) - np.log1p(-z) - stick_offsets(k)


def stick_log_jacobian(y: np.ndarray, z: np.ndarray, stick: np.ndarray) -> np.ndarray:
    """Per-row log |det dx/dy| for the stick-breaking map."""
    y = np.atleast_2d(y)
    t = y + stick_offsets(y.shape[1] + 1)
    return np.sum(_log_sigmoid(t) + _log_sigmoid(-t) + np.log(stick[:, :-1]), axis=1)


def stick_pullback(grad_x: np.ndarray, x: np.ndarray, z: np.ndarray, stick: np.ndarray) -> np.ndarray:
    """Pull a model-space gradient (rows, k) back to y-space (rows, k-1)."""
    k = x.shape[1]
    gx = grad_x * x
    # suffix[:, j] = sum_{m > j} grad_x[:, m] * x[:, m]
    suffix = np.cumsum(gx[:, ::-1], axis=1)[:, ::-1]
    suffix = np.concatenate([suffix[:, 1:], np.zeros((x.shape[0], 1))], axis=1)[:, : k - 1]
    return z * ((1.0 - z) * stick[:, :-1] * grad_x[:, :-1] - suffix)


def stick_grad_log_jacobian(z: np.ndarray, k: int) -> np.ndarray:
    # d logJ / dy_j = 1 - 2 z_j - z_j * (number of later stick terms)
    later = (k - 2.0) - np.arange(k - 1)
    return 1.0 - 2.0 * z - z * later


class Simplex(Transform):
    """Stick-breaking transform for one simplex block of k outcomes."""

    def __init__(self, k: int):
        if k < 2:
            raise ValueError("simplex transform needs k >= 2 outcomes")
        self.k = k
        self.unconstrained_dim = k - 1
        self.constrained_dim = k

    def forward(self, y):
        x, _, _ = stick_forward(y[None, :])
        return x[0]

    def inverse(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.k,) or np.any(x <= 0) or abs(x.sum() - 1.0) > 1e-9:
            raise ValueError("simplex transform requires a strictly positive probability vector")
        return stick_inverse(x[None, :])[0]

    def log_jacobian(self, y):
        _, z, stick = stick_forward(y[None, :])
        return float(stick_log_jacobian(y[None, :], z, stick)[0])

    def pullback(self, y, grad_x):
        x, z, stick = stick_forward(y[None, :])
        return stick_pullback(grad_x[None, :], x, z, stick)[0]

    def grad_log_jacobian(self, y):
        _, z, _ = stick_forward(y[None, :])
        return stick_grad_log_jacobian(z, self.k)[0]
