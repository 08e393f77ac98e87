"""Local objective functions with gradient oracles and ground-truth optima.

Two families are provided: isotropic quadratics (closed-form optimum, used
for exact checks) and Huber losses on the distance to a per-agent center,
the standard strongly-convex-near-the-optimum test family.  Huber instances
are manipulated so the global optimizer sits strictly inside every local
quadratic zone while the origin (the conventional initial state) sits in the
linear zone of at least one agent.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np


@dataclass(frozen=True)
class ObjectiveSet:
    """n local functions f_i: R^p -> R with gradient oracles.

    ``mu`` and ``L`` are the strong-convexity and gradient-Lipschitz
    constants (for Huber sets these are the quadratic-zone values).
    ``x_star`` minimizes the sum of the locals.  Oracles are pure and
    reentrant; instances are immutable.
    """

    n: int
    p: int
    mu: float
    L: float
    values: tuple[Callable[[np.ndarray], float], ...]
    grads: tuple[Callable[[np.ndarray], np.ndarray], ...]
    x_star: np.ndarray
    config: dict = field(default_factory=dict)
    centers: np.ndarray | None = None
    delta: float | None = None

    def value(self, i: int, x: np.ndarray) -> float:
        return float(self.values[i](np.asarray(x, dtype=float)))

    def gradient(self, i: int, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.grads[i](np.asarray(x, dtype=float)), dtype=float)

    def stacked_gradient(self, x: np.ndarray) -> np.ndarray:
        """Row i is the gradient of f_i at row i of the n-by-p stack ``x``."""
        x = np.asarray(x, dtype=float)
        return np.stack([self.gradient(i, x[i]) for i in range(self.n)])

    def total_gradient(self, x: np.ndarray) -> np.ndarray:
        """Gradient of the sum of the locals at a single point."""
        x = np.asarray(x, dtype=float)
        out = np.zeros(self.p)
        for i in range(self.n):
            out += self.gradient(i, x)
        return out

    def total_value(self, x: np.ndarray) -> float:
        return sum(self.value(i, x) for i in range(self.n))

    def in_quadratic_zone(self, x_stack: np.ndarray) -> bool | None:
        """True when every iterate is within delta of every center.

        Only meaningful for Huber sets; returns None otherwise.
        """
        if self.centers is None or self.delta is None:
            return None
        x = np.atleast_2d(np.asarray(x_stack, dtype=float))
        d = np.linalg.norm(x[:, None, :] - self.centers[None, :, :], axis=2)
        return bool(np.all(d <= self.delta))

    def to_config(self) -> dict:
        return dict(self.config)


def quadratic_set(a: np.ndarray, weights: Sequence[float]) -> ObjectiveSet:
    """f_i(x) = w_i ||x - a_i||^2 / 2 with closed-form optimum.

    ``mu = min w``, ``L = max w``, ``x_star`` is the weighted mean of the
    targets.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    w = np.asarray(weights, dtype=float)
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    n, p = a.shape
    if w.shape != (n,):
        raise ValueError(f"need {n} weights, got shape {w.shape}")

    def make_value(ai, wi):
        return lambda x: 0.5 * wi * float(np.dot(x - ai, x - ai))

    def make_grad(ai, wi):
        return lambda x: wi * (x - ai)

    x_star = (w[:, None] * a).sum(axis=0) / w.sum()
    return ObjectiveSet(
        n=n,
        p=p,
        mu=float(w.min()),
        L=float(w.max()),
        values=tuple(make_value(a[i], w[i]) for i in range(n)),
        grads=tuple(make_grad(a[i], w[i]) for i in range(n)),
        x_star=x_star,
        config={
            "type": "quadratic",
            "n": n,
            "p": p,
            "targets": a.tolist(),
            "weights": w.tolist(),
        },
        centers=a,
    )


def random_quadratic_set(
    n: int, p: int, seed: int, weight_range=(1.0, 2.0), target_scale: float = 1.0
) -> ObjectiveSet:
    rng = np.random.default_rng(seed)
    a = target_scale * rng.standard_normal((n, p))
    w = rng.uniform(weight_range[0], weight_range[1], size=n)
    obj = quadratic_set(a, w)
    cfg = dict(obj.config)
    cfg.update(
        {
            "seed": seed,
            "weight_range": list(weight_range),
            "target_scale": target_scale,
        }
    )
    return replace(obj, config=cfg)


def _huber_value(z: np.ndarray, center: np.ndarray, delta: float) -> float:
    r = float(np.linalg.norm(z - center))
    if r <= delta:
        return 0.5 * r * r
    return delta * (r - 0.5 * delta)


def _huber_grad(z: np.ndarray, center: np.ndarray, delta: float) -> np.ndarray:
    d = z - center
    r = float(np.linalg.norm(d))
    if r <= delta:
        return d
    return (delta / r) * d


def huber_set(
    n: int,
    p: int,
    seed: int,
    delta: float = 1.0,
    offset_scale: float = 1.0,
    max_attempts: int = 100,
) -> ObjectiveSet:
    """Huber losses on distances to seeded random centers.

    The raw centers are contracted toward their centroid until the whole
    cloud fits in a ball of radius ``0.8 * delta`` (so the optimizer, the
    centroid, lies strictly inside every quadratic zone) and then shifted so
    the origin is at distance ``2 * delta`` from the centroid (so the origin
    lies in the linear zone of every agent).  The optimizer is re-derived
    numerically to tolerance 1e-12 and the zone conditions are verified;
    construction fails after ``max_attempts`` fresh draws.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    rng = np.random.default_rng(seed)
    for _ in range(max_attempts):
        raw = offset_scale * rng.standard_normal((n, p))
        centroid = raw.mean(axis=0)
        spread = float(np.max(np.linalg.norm(raw - centroid, axis=1))) if n > 1 else 0.0
        shrink = 1.0 if spread == 0.0 else min(1.0, 0.8 * delta / spread)
        centers = centroid + shrink * (raw - centroid)
        centroid = centers.mean(axis=0)
        norm_c = float(np.linalg.norm(centroid))
        direction = centroid / norm_c if norm_c > 1e-12 else _unit(rng, p)
        centers = centers + (2.0 * delta - norm_c) * direction

        def make_value(c):
            return lambda x: _huber_value(x, c, delta)

        def make_grad(c):
            return lambda x: _huber_grad(x, c, delta)

        obj = ObjectiveSet(
            n=n,
            p=p,
            mu=1.0,
            L=1.0,
            values=tuple(make_value(centers[i]) for i in range(n)),
            grads=tuple(make_grad(centers[i]) for i in range(n)),
            x_star=centers.mean(axis=0),
            config={
                "type": "huber",
                "n": n,
                "p": p,
                "seed": seed,
                "delta": delta,
                "offset_scale": offset_scale,
            },
            centers=centers,
            delta=delta,
        )
        x_star = centralized_solve(obj, tol=1e-12, x0=centers.mean(axis=0))
        inside = np.all(np.linalg.norm(centers - x_star, axis=1) < delta)
        origin_outside = np.any(np.linalg.norm(centers, axis=1) > delta)
        if inside and origin_outside:
            return replace(obj, x_star=x_star)
    raise RuntimeError(f"could not satisfy the zone conditions in {max_attempts} draws")


def _unit(rng, p: int) -> np.ndarray:
    v = rng.standard_normal(p)
    return v / np.linalg.norm(v)


def centralized_solve(
    obj: ObjectiveSet,
    tol: float = 1e-12,
    x0: np.ndarray | None = None,
    max_iter: int = 1_000_000,
) -> np.ndarray:
    """Reference optimizer: gradient descent on the average of the locals.

    Steps ``2 / (mu + L)`` on the mean gradient until the summed gradient
    norm drops below ``tol``; converges linearly for the provided families.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    x = np.zeros(obj.p) if x0 is None else np.asarray(x0, dtype=float).copy()
    step = 2.0 / (obj.mu + obj.L)
    for _ in range(max_iter):
        g = obj.total_gradient(x)
        if float(np.linalg.norm(g)) <= tol:
            return x
        x = x - step * (g / obj.n)
    raise RuntimeError(f"no fixed point within {max_iter} iterations (tol={tol})")


def objective_from_config(cfg: dict) -> ObjectiveSet:
    """Rebuild an objective set from its serialized config block."""
    kind = cfg.get("type")
    if kind == "quadratic":
        if "targets" in cfg:
            return quadratic_set(np.array(cfg["targets"]), np.array(cfg["weights"]))
        return random_quadratic_set(
            cfg["n"],
            cfg["p"],
            cfg["seed"],
            weight_range=tuple(cfg.get("weight_range", (1.0, 2.0))),
            target_scale=cfg.get("target_scale", 1.0),
        )
    if kind == "huber":
        return huber_set(
            cfg["n"],
            cfg["p"],
            cfg["seed"],
            delta=cfg.get("delta", 1.0),
            offset_scale=cfg.get("offset_scale", 1.0),
        )
    raise ValueError(f"unknown objective type {kind!r}")
