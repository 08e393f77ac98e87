"""Random-gossip push-pull: one agent wakes per tick and push-notifies neighbors.

In the single-neighbor protocol the awakened agent ``i`` picks at most one
out-neighbor ``j`` in the pull graph (which receives a convex mix of x) and
at most one out-neighbor ``l`` in the push graph (which receives a gamma
share of the tracker).  With a common stepsize the tick is exactly

    x+ = R_k x - alpha Q_k y,   y+ = C_k y + grad F(x+) - grad F(x)

with R_k = I + gamma (e_j e_i' - e_j e_j'), C_k = I + gamma (e_l e_i' -
e_i e_i'), and Q_k the 0/1 diagonal of participating agents.  The
broadcast protocol ("all") notifies every out-neighbor instead; the tracker
sender keeps the fraction ``1 - gamma * deg`` so column sums survive, which
requires ``gamma * deg < 1``.

Expectations of the tick matrices and all second moments needed by the
certificates are computed by exact enumeration over the (agent, neighbor,
neighbor) outcome space; a sampling cross-check lives in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
import time

import numpy as np

from .digraph import Digraph, root_set
from .mixing import _left_perron, induced_digraph
from .objectives import ObjectiveSet
from .synchronous import NetworkState, StepsizeProfile, DivergenceError, init
from .trace import RunTrace, TraceRecorder

_EVENT_STREAM = 2


@dataclass(frozen=True)
class GossipEvent:
    """One tick: awakened agent and its chosen targets (absent when degree 0)."""

    i: int
    j: int | None
    l: int | None
    gamma: float

    def __post_init__(self):
        if not (0.0 < self.gamma < 1.0):
            raise ValueError("gamma must lie in (0, 1)")

    @property
    def touched(self) -> tuple[int, ...]:
        ids = {self.i}
        if self.j is not None:
            ids.add(self.j)
        if self.l is not None:
            ids.add(self.l)
        return tuple(sorted(ids))


@dataclass(frozen=True)
class GossipMatrices:
    """Realized tick matrices; R_k is exactly row-stochastic, C_k column-stochastic."""

    R: np.ndarray
    C: np.ndarray
    Q: np.ndarray


def sample_event(
    g_pull: Digraph, g_push: Digraph, gamma: float, seed: int, k: int
) -> GossipEvent:
    """Uniform agent, then a uniform out-neighbor per protocol; pure in (seed, k)."""
    if g_pull.n != g_push.n:
        raise ValueError("pull and push graphs must share the agent count")
    rng = np.random.Generator(
        np.random.Philox(key=seed, counter=[k, 0, 0, _EVENT_STREAM])
    )
    n = g_pull.n
    i = int(rng.integers(n)) + 1
    outs_pull = g_pull.out_neighbors(i)
    j = outs_pull[int(rng.integers(len(outs_pull)))] if outs_pull else None
    outs_push = g_push.out_neighbors(i)
    l = outs_push[int(rng.integers(len(outs_push)))] if outs_push else None
    return GossipEvent(i=i, j=j, l=l, gamma=gamma)


def event_matrices(ev: GossipEvent, n: int) -> GossipMatrices:
    """Realize the tick matrices for an event (identity parts when targets absent)."""
    gamma = ev.gamma
    r = np.eye(n)
    if ev.j is not None:
        r[ev.j - 1, ev.j - 1] = 1.0 - gamma
        r[ev.j - 1, ev.i - 1] = gamma
    c = np.eye(n)
    if ev.l is not None:
        c[ev.i - 1, ev.i - 1] = 1.0 - gamma
        c[ev.l - 1, ev.i - 1] = gamma
    q = np.zeros((n, n))
    for a in ev.touched:
        q[a - 1, a - 1] = 1.0
    return GossipMatrices(R=r, C=c, Q=q)


def gossip_step(
    state: NetworkState,
    ev: GossipEvent,
    profile: StepsizeProfile,
    obj: ObjectiveSet,
    mode: str = "restricted",
) -> NetworkState:
    """Apply one gossip tick.

    ``restricted`` implements the compact recursion above and requires a
    common stepsize (participation is 0/1, so a doubly-notified agent adapts
    once).  ``general`` follows the per-agent protocol instead: a target
    notified by both graphs adapts with twice its stepsize, and per-agent
    stepsizes are honored.
    """
    if mode not in ("restricted", "general"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "restricted" and not profile.is_uniform:
        raise ValueError("the restricted protocol assumes a common stepsize")
    gamma = ev.gamma
    i, j, l = ev.i - 1, None if ev.j is None else ev.j - 1, None if ev.l is None else ev.l - 1
    x = state.x.copy()
    y = state.y.copy()
    grad = state.grad.copy()

    x_i_old = state.x[i].copy()
    y_i_old = state.y[i].copy()

    # Decision mixing (row-stochastic part), using the pre-update x of i.
    if j is not None:
        x[j] = (1.0 - gamma) * state.x[j] + gamma * x_i_old
    # Adaptation of participating agents.
    if mode == "restricted":
        alpha = float(profile.alphas[0])
        for a in {i} | ({j} if j is not None else set()) | ({l} if l is not None else set()):
            x[a] -= alpha * state.y[a]
    else:
        x[i] -= profile.alphas[i] * state.y[i]
        if j is not None:
            factor = 2.0 if j == l else 1.0
            x[j] -= factor * profile.alphas[j] * state.y[j]
        if l is not None and l != j:
            x[l] -= profile.alphas[l] * state.y[l]

    # Tracker push (column-stochastic part) plus local gradient correction.
    if l is not None:
        y[i] = (1.0 - gamma) * y_i_old
        y[l] = y[l] + gamma * y_i_old
    for a in sorted({i} | ({j} if j is not None else set()) | ({l} if l is not None else set())):
        g_new = obj.gradient(a, x[a])
        y[a] += g_new - grad[a]
        grad[a] = g_new
    return NetworkState(x=x, y=y, grad=grad, k=state.k + 1)


def gossip_all_step(
    state: NetworkState,
    i_k: int,
    gamma: float,
    profile: StepsizeProfile,
    obj: ObjectiveSet,
    g_pull: Digraph,
    g_push: Digraph,
) -> NetworkState:
    """Broadcast tick: agent ``i_k`` notifies all its out-neighbors in both graphs."""
    outs_pull = set(g_pull.out_neighbors(i_k))
    outs_push = set(g_push.out_neighbors(i_k))
    if gamma * len(outs_push) >= 1.0:
        raise ValueError(
            f"gamma * out-degree = {gamma * len(outs_push):.3f} >= 1 breaks the "
            "tracker mass split"
        )
    i = i_k - 1
    x = state.x.copy()
    y = state.y.copy()
    grad = state.grad.copy()
    x_i_old = state.x[i].copy()
    y_i_old = state.y[i].copy()

    x[i] -= profile.alphas[i] * state.y[i]
    for jj in outs_pull:
        a = jj - 1
        factor = 2.0 if jj in outs_push else 1.0
        x[a] = (1.0 - gamma) * state.x[a] + gamma * x_i_old - factor * profile.alphas[a] * state.y[a]
    for ll in outs_push - outs_pull:
        a = ll - 1
        x[a] -= profile.alphas[a] * state.y[a]

    y[i] = (1.0 - gamma * len(outs_push)) * y_i_old
    for ll in outs_push:
        y[ll - 1] += gamma * y_i_old
    touched = sorted({i_k} | outs_pull | outs_push)
    for aa in touched:
        a = aa - 1
        g_new = obj.gradient(a, x[a])
        y[a] += g_new - grad[a]
        grad[a] = g_new
    return NetworkState(x=x, y=y, grad=grad, k=state.k + 1)


def enumerate_events(g_pull: Digraph, g_push: Digraph) -> tuple[tuple[float, int, int | None, int | None], ...]:
    """All (probability, i, j, l) outcomes of the single-neighbor protocol."""
    n = g_pull.n
    outcomes = []
    for i in range(1, n + 1):
        js = g_pull.out_neighbors(i) or (None,)
        ls = g_push.out_neighbors(i) or (None,)
        p = 1.0 / (n * len(js) * len(ls))
        for j in js:
            for l in ls:
                outcomes.append((p, i, j, l))
    return tuple(outcomes)


def _tick_t(i: int, j: int | None, n: int) -> np.ndarray:
    t = np.zeros((n, n))
    if j is not None:
        t[j - 1, i - 1] += 1.0
        t[j - 1, j - 1] -= 1.0
    return t


def _tick_e(i: int, l: int | None, n: int) -> np.ndarray:
    e = np.zeros((n, n))
    if l is not None:
        e[l - 1, i - 1] += 1.0
        e[i - 1, i - 1] -= 1.0
    return e


def _tick_q(i: int, j: int | None, l: int | None, n: int) -> np.ndarray:
    q = np.zeros(n)
    q[i - 1] = 1.0
    if j is not None:
        q[j - 1] = 1.0
    if l is not None:
        q[l - 1] = 1.0
    return q


@dataclass(frozen=True)
class GossipExpectations:
    """Exact expectations of the tick matrices and their second moments.

    ``T_bar`` and ``E_bar`` are the gamma-free generator parts:
    ``R_bar = I + gamma T_bar`` and ``C_bar = I + gamma E_bar``.  ``u_bar``
    and ``v_bar`` are the Perron vectors of the expected matrices (any gamma
    in (0,1) gives the same vectors).  Second moments that scale with gamma
    are stored gamma-free (``M_TuuT``, ``E_T_sqnorm``) next to their scaled
    counterparts.
    """

    g_pull: Digraph
    g_push: Digraph
    gamma: float
    T_bar: np.ndarray
    E_bar: np.ndarray
    u_bar: np.ndarray
    v_bar: np.ndarray
    EQ_diag: np.ndarray
    M_QuuQ: np.ndarray
    M_TuuT: np.ndarray
    E_Q_sqnorm: float
    E_T_sqnorm: float
    eta: float
    outcomes: tuple

    @property
    def n(self) -> int:
        return self.g_pull.n

    @property
    def R_bar(self) -> np.ndarray:
        return np.eye(self.n) + self.gamma * self.T_bar

    @property
    def C_bar(self) -> np.ndarray:
        return np.eye(self.n) + self.gamma * self.E_bar

    @property
    def M_RuuR(self) -> np.ndarray:
        """E[(R_k - R_bar)' u u' (R_k - R_bar)] at the stored gamma."""
        return self.gamma**2 * self.M_TuuT

    @property
    def E_RmI_sqnorm(self) -> float:
        """E ||R_k - I||_2^2 at the stored gamma."""
        return self.gamma**2 * self.E_T_sqnorm

    @cached_property
    def u_EQ_norm(self) -> float:
        return float(np.linalg.norm(self.u_bar * self.EQ_diag))


def expected_matrices(g_pull: Digraph, g_push: Digraph, gamma: float) -> GossipExpectations:
    """Enumerate the outcome space exactly (at most n * maxdeg^2 terms)."""
    if not (0.0 < gamma < 1.0):
        raise ValueError("gamma must lie in (0, 1)")
    n = g_pull.n
    outcomes = enumerate_events(g_pull, g_push)

    t_bar = np.zeros((n, n))
    e_bar = np.zeros((n, n))
    eq = np.zeros(n)
    e_q_sq = 0.0
    e_t_sq = 0.0
    for p, i, j, l in outcomes:
        t_bar += p * _tick_t(i, j, n)
        e_bar += p * _tick_e(i, l, n)
        q = _tick_q(i, j, l, n)
        eq += p * q
        e_q_sq += p * float(np.max(q) ** 2)
        e_t_sq += p * (2.0 if j is not None else 0.0)

    # Perron vectors of the expected matrices; the reference gamma only
    # shifts the spectrum, not the eigenvectors for eigenvalue 1.
    r_ref = np.eye(n) + 0.5 * t_bar
    c_ref = np.eye(n) + 0.5 * e_bar
    roots_r = sorted(v - 1 for v in root_set(induced_digraph(r_ref)))
    roots_ct = sorted(v - 1 for v in root_set(induced_digraph(c_ref.T)))
    u_bar = _left_perron(r_ref, roots_r)
    v_bar = _left_perron(c_ref.T, roots_ct)

    m_quuq = np.zeros((n, n))
    m_tuut = np.zeros((n, n))
    for p, i, j, l in outcomes:
        q = _tick_q(i, j, l, n)
        w = q * u_bar
        m_quuq += p * np.outer(w, w)
        t_tilde = _tick_t(i, j, n) - t_bar
        z = t_tilde.T @ u_bar
        m_tuut += p * np.outer(z, z)

    eta = float(u_bar @ (eq * v_bar)) / n
    return GossipExpectations(
        g_pull=g_pull,
        g_push=g_push,
        gamma=gamma,
        T_bar=t_bar,
        E_bar=e_bar,
        u_bar=u_bar,
        v_bar=v_bar,
        EQ_diag=eq,
        M_QuuQ=m_quuq,
        M_TuuT=m_tuut,
        E_Q_sqnorm=e_q_sq,
        E_T_sqnorm=e_t_sq,
        eta=eta,
        outcomes=outcomes,
    )


def run_gossip(
    obj: ObjectiveSet,
    g_pull: Digraph,
    g_push: Digraph,
    alpha: float,
    gamma: float,
    budget: int,
    tol: float = 0.0,
    seed: int = 0,
    mode: str = "single",
    x0: np.ndarray | None = None,
    record_every: int = 1,
    divergence_limit: float = 1e6,
    expectations: GossipExpectations | None = None,
    collect_events: bool = False,
) -> RunTrace:
    """Run a seeded gossip trajectory and trace the usual diagnostics.

    ``mode`` is ``single`` (one neighbor per protocol per tick) or ``all``
    (broadcast to every out-neighbor).  Diagnostics use the Perron vectors
    of the expected tick matrices.
    """
    if mode not in ("single", "all"):
        raise ValueError(f"unknown mode {mode!r}")
    n, p = obj.n, obj.p
    if expectations is None:
        expectations = expected_matrices(g_pull, g_push, gamma)
    u, v = expectations.u_bar, expectations.v_bar
    profile = StepsizeProfile.uniform(n, alpha)
    if x0 is None:
        x0 = np.zeros((n, p))
    state = init(obj, x0)
    x_star_stack = np.ones((n, 1)) * obj.x_star[None, :]
    denom = float(np.linalg.norm(x0 - x_star_stack, "fro") ** 2)
    if denom == 0.0:
        denom = 1.0

    rec = TraceRecorder()
    events: list[tuple[int, int, int, int]] = []
    started = time.perf_counter()

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
    for k in range(budget):
        if res <= tol:
            break
        ev = sample_event(g_pull, g_push, gamma, seed, k)
        if collect_events:
            events.append((k, ev.i, ev.j or 0, ev.l or 0))
        if mode == "single":
            state = gossip_step(state, ev, profile, obj, mode="restricted")
        else:
            state = gossip_all_step(state, ev.i, gamma, profile, obj, g_pull, g_push)
        res = observe(state)
        if not np.isfinite(res) or res > divergence_limit:
            meta = {
                "status": "diverged",
                "final_residual": res,
                "seed": seed,
                "wall_time_s": time.perf_counter() - started,
            }
            raise DivergenceError(
                f"normalized residual {res:.3e} exceeded {divergence_limit:.1e} "
                f"at tick {state.k}",
                trace=rec.build(meta, state),
            )
    if record_every > 1 and state.k % record_every != 0:
        observe(state, force=True)
    meta = {
        "status": "converged" if res <= tol else "budget_exhausted",
        "final_residual": float(res),
        "seed": seed,
        "wall_time_s": time.perf_counter() - started,
    }
    if collect_events:
        meta["events"] = events
    return rec.build(meta, state)


def run_gossip_ensemble(
    obj: ObjectiveSet,
    g_pull: Digraph,
    g_push: Digraph,
    alpha: float,
    gamma: float,
    budget: int,
    seeds,
    mode: str = "single",
    record_every: int = 1,
) -> tuple[np.ndarray, list[RunTrace]]:
    """Independent seeded replicas; returns the mean squared weighted-mean error.

    Replicas share nothing mutable, so they can be dispatched concurrently;
    here they run sequentially for determinism of timing-free outputs.
    """
    expectations = expected_matrices(g_pull, g_push, gamma)
    traces = [
        run_gossip(
            obj,
            g_pull,
            g_push,
            alpha,
            gamma,
            budget,
            seed=s,
            mode=mode,
            record_every=record_every,
            expectations=expectations,
        )
        for s in seeds
    ]
    # A replica hitting exactly zero residual stops early; aggregate the
    # common prefix.
    common = min(len(t) for t in traces)
    stacked = np.stack([t.xbar_err[:common] ** 2 for t in traces])
    return stacked.mean(axis=0), traces
