"""No-U-Turn sampling: leapfrog integration, trajectory trees, step-size adaptation.

The default tree sampling weights candidate points multinomially by their
joint density along the trajectory; ``method="slice"`` switches to the
original slice-variable formulation.  Both share the doubling/U-turn
machinery.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DIVERGENCE_THRESHOLD = 1000.0  # nats of energy error before a transition is declared divergent


def leapfrog(state, step_size, grad, inv_mass=None):
    """One leapfrog step: half-step momentum, full-step position, half-step momentum.

    ``state`` is a ``(position, momentum)`` pair and ``grad`` a callable
    returning the gradient of the log density.  Volume-preserving and
    time-reversible; reversing the momentum and stepping again returns to the
    start point up to roundoff.
    """
    if step_size <= 0:
        raise ValueError("step_size must be positive")
    q, p = state
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    if inv_mass is None:
        inv_mass = np.ones_like(q)
    p = p + 0.5 * step_size * np.asarray(grad(q), dtype=float)
    q = q + step_size * (inv_mass * p)
    p = p + 0.5 * step_size * np.asarray(grad(q), dtype=float)
    return q, p


class DualAveraging:
    """Nesterov dual averaging of log step size toward a target acceptance rate."""

    def __init__(self, initial_step: float, target_accept: float = 0.8,
                 gamma: float = 0.05, t0: float = 10.0, kappa: float = 0.75):
        self.mu = math.log(10.0 * initial_step)
        self.target = target_accept
        self.gamma = gamma
        self.t0 = t0
        self.kappa = kappa
        self.h_bar = 0.0
        self.log_step_bar = 0.0
        self.count = 0
        self.step = initial_step

    def update(self, accept_stat: float) -> float:
        """Feed one acceptance statistic; returns the step size for the next iteration."""
        self.count += 1
        m = self.count
        eta = 1.0 / (m + self.t0)
        self.h_bar = (1.0 - eta) * self.h_bar + eta * (self.target - accept_stat)
        log_step = self.mu - math.sqrt(m) / self.gamma * self.h_bar
        w = m ** (-self.kappa)
        self.log_step_bar = w * log_step + (1.0 - w) * self.log_step_bar
        self.step = math.exp(log_step)
        return self.step

    def finalize(self) -> float:
        """Frozen (averaged) step size for post-tuning draws."""
        return math.exp(self.log_step_bar) if self.count > 0 else self.step


def dual_average_adapt(history, initial_step: float = 1.0, target_accept: float = 0.8):
    """Replay a sequence of acceptance statistics through the dual-averaging
    recursion; returns the per-iteration step sizes and the frozen final value."""
    da = DualAveraging(initial_step, target_accept)
    schedule = np.array([da.update(a) for a in history])
    return schedule, da.finalize()


def find_reasonable_step_size(target, q, rng, inv_mass):
    """Heuristic initial step size: double/halve until one leapfrog step has
    acceptance probability crossing 1/2."""
    step = 1.0
    logp, grad = target.logp_and_grad(q)
    p = rng.standard_normal(q.size) / np.sqrt(inv_mass)
    h0 = -logp + 0.5 * float(np.dot(p * inv_mass, p))

    def joint_after(step):
        p1 = p + 0.5 * step * grad
        q1 = q + step * (inv_mass * p1)
        logp1, grad1 = target.logp_and_grad(q1)
        p1 = p1 + 0.5 * step * grad1
        if not np.isfinite(logp1):
            return -np.inf
        return -(-logp1 + 0.5 * float(np.dot(p1 * inv_mass, p1))) + h0

    log_ratio = joint_after(step)
    direction = 1.0 if log_ratio > math.log(0.5) else -1.0
    for _ in range(64):
        step = step * (2.0 ** direction)
        log_ratio = joint_after(step)
        if direction * log_ratio <= direction * math.log(0.5):
            break
        if step > 1e7 or step < 1e-10:
            break
    return step


@dataclass
class TreeStats:
    """Per-draw statistics from one trajectory tree."""

    depth: int
    n_leapfrog: int
    accept_stat: float
    divergent: bool
    logp: float
    energy: float


class _Tree:
    """End points, proposal, and accounting for one trajectory (sub)tree."""

    __slots__ = ("q_left", "p_left", "g_left", "q_right", "p_right", "g_right",
                 "q_prop", "logp_prop", "g_prop", "log_w", "n_valid", "sum_accept",
                 "n_leaf", "stop", "divergent")

    def __init__(self, q, p, g, logp_prop, log_w, n_valid, sum_accept, stop, divergent):
        self.q_left = q
        self.p_left = p
        self.g_left = g
        self.q_right = q
        self.p_right = p
        self.g_right = g
        self.q_prop = q
        self.logp_prop = logp_prop
        self.g_prop = g
        self.log_w = log_w
        self.n_valid = n_valid
        self.sum_accept = sum_accept
        self.n_leaf = 1
        self.stop = stop
        self.divergent = divergent


def _uturn(q_left, p_left, q_right, p_right, inv_mass):
    dq = q_right - q_left
    return (float(np.dot(dq, inv_mass * p_left)) < 0.0
            or float(np.dot(dq, inv_mass * p_right)) < 0.0)


def _leaf(target, q, p, g, direction_step, inv_mass, h0, log_u, multinomial):
    """Single leapfrog step; returns a one-node tree."""
    p = p + 0.5 * direction_step * g
    q = q + direction_step * (inv_mass * p)
    logp, g = target.logp_and_grad(q)
    p = p + 0.5 * direction_step * g
    if np.isfinite(logp):
        h = -logp + 0.5 * float(np.dot(p * inv_mass, p))
        delta_h = h - h0
    else:
        delta_h = np.inf
    divergent = not (delta_h < DIVERGENCE_THRESHOLD)
    accept = math.exp(-delta_h) if delta_h > 0 else 1.0
    if multinomial:
        log_w = -delta_h
        n_valid = 1
    else:
        log_w = 0.0
        n_valid = 1 if log_u <= -delta_h else 0
    tree = _Tree(q, p, g, logp, log_w, n_valid, accept, divergent, divergent)
    return tree


def _build_tree(target, q, p, g, direction_step, depth, inv_mass, h0, log_u, multinomial, rng):
    if depth == 0:
        return _leaf(target, q, p, g, direction_step, inv_mass, h0, log_u, multinomial)
    first = _build_tree(target, q, p, g, direction_step, depth - 1,
                        inv_mass, h0, log_u, multinomial, rng)
    if first.stop:
        return first
    if direction_step > 0:
        qe, pe, ge = first.q_right, first.p_right, first.g_right
    else:
        qe, pe, ge = first.q_left, first.p_left, first.g_left
    second = _build_tree(target, qe, pe, ge, direction_step, depth - 1,
                         inv_mass, h0, log_u, multinomial, rng)
    # merge second into first (uniform progressive sampling inside a subtree)
    if not second.stop:
        if multinomial:
            total = np.logaddexp(first.log_w, second.log_w)
            take = math.log(rng.random()) < second.log_w - total
        else:
            total_n = first.n_valid + second.n_valid
            take = total_n > 0 and rng.random() < second.n_valid / total_n
        if take:
            first.q_prop = second.q_prop
            first.logp_prop = second.logp_prop
            first.g_prop = second.g_prop
    if direction_step > 0:
        first.q_right, first.p_right, first.g_right = second.q_right, second.p_right, second.g_right
    else:
        first.q_left, first.p_left, first.g_left = second.q_left, second.p_left, second.g_left
    first.log_w = np.logaddexp(first.log_w, second.log_w)
    first.n_valid += second.n_valid
    first.sum_accept += second.sum_accept
    first.n_leaf += second.n_leaf
    first.divergent |= second.divergent
    first.stop = (second.stop or first.divergent
                  or _uturn(first.q_left, first.p_left, first.q_right, first.p_right, inv_mass))
    return first


def nuts_draw(current, target, step_size, rng, *, inv_mass=None, max_tree_depth=10,
              method="multinomial", cache=None):
    """One No-U-Turn transition from ``current``.

    Returns ``(next_position, TreeStats)``.  ``cache``, if given, is the
    ``(logp, grad)`` pair at ``current`` and is updated in place via the
    returned stats to avoid recomputing the density between draws.
    """
    q0 = np.asarray(current, dtype=float)
    if inv_mass is None:
        inv_mass = np.ones(q0.size)
    if cache is None:
        logp0, grad0 = target.logp_and_grad(q0)
    else:
        logp0, grad0 = cache
    if not np.isfinite(logp0):
        raise ValueError("nuts_draw requires a starting point with finite log density")
    multinomial = method == "multinomial"
    if method not in ("multinomial", "slice"):
        raise ValueError(f"unknown tree method {method!r}")

    p0 = rng.standard_normal(q0.size) / np.sqrt(inv_mass)
    h0 = -logp0 + 0.5 * float(np.dot(p0 * inv_mass, p0))
    # slice variable u ~ Uniform(0, exp(-h0)), stored as log(u) + h0 <= 0
    log_u = math.log(rng.random()) if not multinomial else 0.0

    tree = _Tree(q0, p0, grad0, logp0, 0.0, 1, min(1.0, math.exp(0.0)), False, False)
    tree.sum_accept = 0.0
    tree.n_leaf = 0
    q_new, logp_new, g_new = q0, logp0, grad0
    divergent = False
    depth = 0
    while depth < max_tree_depth:
        direction = 1.0 if rng.random() < 0.5 else -1.0
        if direction > 0:
            qe, pe, ge = tree.q_right, tree.p_right, tree.g_right
        else:
            qe, pe, ge = tree.q_left, tree.p_left, tree.g_left
        sub = _build_tree(target, qe, pe, ge, direction * step_size, depth,
                          inv_mass, h0, log_u, multinomial, rng)
        tree.sum_accept += sub.sum_accept
        tree.n_leaf += sub.n_leaf
        divergent |= sub.divergent
        if sub.stop:
            break
        # biased progressive sampling: favor the new half of the trajectory
        if multinomial:
            accept_p = math.exp(min(0.0, sub.log_w - tree.log_w))
        else:
            accept_p = min(1.0, sub.n_valid / max(tree.n_valid, 1))
        if rng.random() < accept_p:
            q_new, logp_new, g_new = sub.q_prop, sub.logp_prop, sub.g_prop
        if direction > 0:
            tree.q_right, tree.p_right, tree.g_right = sub.q_right, sub.p_right, sub.g_right
        else:
            tree.q_left, tree.p_left, tree.g_left = sub.q_left, sub.p_left, sub.g_left
        tree.log_w = np.logaddexp(tree.log_w, sub.log_w)
        tree.n_valid += sub.n_valid
        depth += 1
        if _uturn(tree.q_left, tree.p_left, tree.q_right, tree.p_right, inv_mass):
            break

    stats = TreeStats(depth=depth, n_leapfrog=tree.n_leaf,
                      accept_stat=tree.sum_accept / max(tree.n_leaf, 1),
                      divergent=divergent, logp=logp_new, energy=h0)
    if cache is not None:
        cache[0] = logp_new
        cache[1] = g_new
    return q_new, stats
