"""The synchronous push-pull iteration and its combine-order variants.

Every agent keeps a decision row x_i and a tracker row y_i whose network sum
equals the sum of current local gradients at all times (the column-stochastic
push of y preserves it).  One iteration of the baseline scheme:

    x+ = R (x - diag(alpha) y)        pull of already-adapted neighbor values
    y+ = C y + grad F(x+) - grad F(x) push of trackers, then local correction

Variant formulas (dF = grad F(x+) - grad F(x)):

===========  ============================  ==========================
variant      x-update                      y-update
===========  ============================  ==========================
standard     x+ = R (x - diag(alpha) y)    y+ = C y + dF
half         alias of standard: the one-communication-round scheme
atc_x        x+ = R x - diag(alpha) y      y+ = C y + dF
atc_y        x+ = R (x - diag(alpha) y)    y+ = C (y + dF)
atc_both     x+ = R x - diag(alpha) y      y+ = C (y + dF)
===========  ============================  ==========================

`atc_y`/`atc_both` push the already-corrected tracker and therefore cost a
second communication round per iteration.  The tracking identity holds for
every variant because both y-updates are column-stochastic in y.
"""

from __future__ import annotations

import enum
import time
import warnings
from dataclasses import dataclass

import numpy as np

from .digraph import GraphSequence, realize
from .mixing import MixingPair, build_column_stochastic, build_row_stochastic
from .objectives import ObjectiveSet
from .trace import RunTrace, TraceRecorder


class Variant(enum.Enum):
    STANDARD = "standard"
    HALF = "half"
    ATC_X = "atc_x"
    ATC_Y = "atc_y"
    ATC_BOTH = "atc_both"

    @property
    def combines_adapted_x(self) -> bool:
        """True when the x-update mixes the already-adapted values R(x - a y)."""
        return self in (Variant.STANDARD, Variant.HALF, Variant.ATC_Y)

    @property
    def combines_corrected_y(self) -> bool:
        """True when the y-update pushes the corrected tracker C(y + dF)."""
        return self in (Variant.ATC_Y, Variant.ATC_BOTH)


class DivergenceError(RuntimeError):
    """Raised when the normalized residual exceeds the divergence threshold."""

    def __init__(self, message: str, trace: RunTrace | None = None):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class StepsizeProfile:
    """Per-agent nonnegative stepsizes (the diagonal of the stepsize matrix)."""

    alphas: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.alphas, dtype=float)
        if np.any(a < 0):
            raise ValueError("stepsizes must be nonnegative")
        object.__setattr__(self, "alphas", a)

    @classmethod
    def uniform(cls, n: int, alpha: float) -> "StepsizeProfile":
        return cls(np.full(n, float(alpha)))

    @classmethod
    def single(cls, n: int, agent: int, alpha: float) -> "StepsizeProfile":
        a = np.zeros(n)
        a[agent - 1] = alpha
        return cls(a)

    @property
    def n(self) -> int:
        return len(self.alphas)

    @property
    def alpha_hat(self) -> float:
        """Largest stepsize in the network."""
        return float(np.max(self.alphas))

    def alpha_prime(self, u: np.ndarray, v: np.ndarray) -> float:
        """Effective stepsize u^T diag(alpha) v / n seen by the weighted mean."""
        return float(u @ (self.alphas * v)) / len(self.alphas)

    @property
    def is_uniform(self) -> bool:
        return bool(np.all(self.alphas == self.alphas[0]))


@dataclass(frozen=True)
class NetworkState:
    """Stacked decision variables, trackers, cached gradients, and the clock."""

    x: np.ndarray
    y: np.ndarray
    grad: np.ndarray
    k: int


def init(obj: ObjectiveSet, x0: np.ndarray) -> NetworkState:
    """Initial state: arbitrary x0, trackers seeded with the local gradients."""
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (obj.n, obj.p):
        raise ValueError(f"x0 must have shape {(obj.n, obj.p)}, got {x0.shape}")
    g = obj.stacked_gradient(x0)
    return NetworkState(x=x0.copy(), y=g.copy(), grad=g, k=0)


def tracking_defect(state: NetworkState, obj: ObjectiveSet) -> float:
    """Normalized defect of the tracking identity sum(y) == sum(grad F(x))."""
    gap = state.y.sum(axis=0) - obj.stacked_gradient(state.x).sum(axis=0)
    return float(np.linalg.norm(gap)) / (obj.n * obj.L)


def step(
    state: NetworkState,
    pair,
    profile: StepsizeProfile,
    obj: ObjectiveSet,
    variant: Variant = Variant.STANDARD,
) -> NetworkState:
    """One synchronous iteration; `pair` may be constant or time-varying.

    Anything exposing ``matrices_at(k) -> (R, C)`` works, so a
    :class:`~pushpull.mixing.MixingPair` and a :class:`TimeVaryingMixing`
    are interchangeable here.
    """
    r_mat, c_mat = pair.matrices_at(state.k)
    al = profile.alphas[:, None]
    if variant.combines_adapted_x:
        x_next = r_mat @ (state.x - al * state.y)
    else:
        x_next = r_mat @ state.x - al * state.y
    g_next = obj.stacked_gradient(x_next)
    diff = g_next - state.grad
    if variant.combines_corrected_y:
        y_next = c_mat @ (state.y + diff)
    else:
        y_next = c_mat @ state.y + diff
    return NetworkState(x=x_next, y=y_next, grad=g_next, k=state.k + 1)


class TimeVaryingMixing:
    """Rebuilds equal-weight mixing matrices from realized subgraphs each tick.

    Diagnostics (u, v) come from the base pair: realized subgraphs need not
    admit spanning trees individually, so their own Perron data may not
    exist.
    """

    def __init__(self, seq_pull: GraphSequence, seq_push: GraphSequence, base: MixingPair):
        if seq_pull.base.n != seq_push.base.n:
            raise ValueError("pull and push sequences must share the agent count")
        self.seq_pull = seq_pull
        self.seq_push = seq_push
        self.base = base

    @property
    def u(self) -> np.ndarray:
        return self.base.u

    @property
    def v(self) -> np.ndarray:
        return self.base.v

    @property
    def n(self) -> int:
        return self.base.n

    def matrices_at(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        r_mat = build_row_stochastic(realize(self.seq_pull, k))
        c_mat = build_column_stochastic(realize(self.seq_push, k))
        return r_mat, c_mat


def run(
    obj: ObjectiveSet,
    mixing,
    profile: StepsizeProfile,
    variant: Variant = Variant.STANDARD,
    budget: int = 10_000,
    tol: float = 0.0,
    x0: np.ndarray | None = None,
    record_every: int = 1,
    divergence_limit: float = 1e6,
) -> RunTrace:
    """Iterate until the normalized residual drops below ``tol`` or the budget ends.

    The residual is ``||x_k - X*||_F^2 / ||x_0 - X*||_F^2`` with ``X*`` the
    optimizer copied to every agent.  The trace also records the consensus
    error ``||x - 1 xbar||``, the tracker misalignment ``||y - v ybar||``,
    and the normalized tracking-identity defect.  A residual beyond
    ``divergence_limit`` aborts with :class:`DivergenceError` carrying the
    partial trace.
    """
    if budget < 0:
        raise ValueError("budget must be nonnegative")
    n, p = obj.n, obj.p
    if x0 is None:
        x0 = np.zeros((n, p))
    state = init(obj, x0)
    u, v = mixing.u, mixing.v
    x_star_stack = np.ones((n, 1)) * obj.x_star[None, :]
    denom = float(np.linalg.norm(x0 - x_star_stack, "fro") ** 2)
    if denom == 0.0:
        denom = 1.0

    rec = TraceRecorder()
    started = time.perf_counter()
    zone_warned = False
    dx = dy = np.inf

    def observe(st: NetworkState, force: bool = False) -> float:
        res = float(np.linalg.norm(st.x - x_star_stack, "fro") ** 2) / denom
        xbar = (u @ st.x) / n
        ybar = st.y.mean(axis=0)
        consensus = float(np.linalg.norm(st.x - np.ones((n, 1)) * xbar[None, :], "fro"))
        tracking = float(np.linalg.norm(st.y - np.outer(v, ybar), "fro"))
        defect = float(np.linalg.norm(st.y.sum(axis=0) - st.grad.sum(axis=0))) / (n * obj.L)
        xbar_err = float(np.linalg.norm(xbar - obj.x_star))
        if force or st.k % record_every == 0:
            rec.add(st.k, res, consensus, tracking, defect, xbar_err)
        return res

    res = observe(state)
    for _ in range(budget):
        if res <= tol:
            break
        new_state = step(state, mixing, profile, obj, variant)
        dx = float(np.linalg.norm(new_state.x - state.x, "fro"))
        dy = float(np.linalg.norm(new_state.y - state.y, "fro"))
        state = new_state
        res = observe(state)
        if not np.isfinite(res) or res > divergence_limit:
            meta = _metadata(status="diverged", res=res, dx=dx, dy=dy, started=started)
            raise DivergenceError(
                f"normalized residual {res:.3e} exceeded {divergence_limit:.1e} "
                f"at iteration {state.k}",
                trace=rec.build(meta, state),
            )
        if not zone_warned and res <= 1e-4 and obj.in_quadratic_zone(state.x) is False:
            warnings.warn(
                "iterates left the quadratic zone near convergence; the reported "
                "curvature constants no longer apply",
                RuntimeWarning,
            )
            zone_warned = True

    if record_every > 1 and state.k % record_every != 0:
        observe(state, force=True)
    status = "converged" if res <= tol else "budget_exhausted"
    meta = _metadata(status=status, res=res, dx=dx, dy=dy, started=started)
    return rec.build(meta, state)


def _metadata(status, res, dx, dy, started) -> dict:
    return {
        "status": status,
        "final_residual": float(res),
        "final_dx": float(dx),
        "final_dy": float(dy),
        "wall_time_s": time.perf_counter() - started,
    }
