"""Convergence certificates for both algorithm families.

A run's error is summarized by a triple: the (weighted-mean) optimality gap,
the consensus error under the R-norm, and the tracker misalignment under the
C-norm.  Each family admits a nonnegative 3x3 matrix that maps the triple at
one iteration to an upper bound on the triple at the next; spectral radius
below one certifies geometric decay, and the certified stepsize bounds below
are explicit sufficient conditions for that.

The synchronous certificate bounds the triple itself; the gossip certificate
bounds its expected squares, so its spectral radius is a per-tick rate for
mean-square quantities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .gossip import GossipExpectations, _tick_q, _tick_t, _tick_e
from .mixing import MixingPair, NormKit
from .objectives import ObjectiveSet
from .spectral import Deflation, deflated_schur_transform
from .synchronous import StepsizeProfile


class CertificationError(RuntimeError):
    """The requested certificate cannot be built (e.g. gamma too large)."""


@dataclass(frozen=True)
class Certificate:
    kind: str
    matrix: np.ndarray
    constants: dict
    rho: float
    alpha_bound: float | None = None
    gamma_bound: float | None = None

    def to_dict(self) -> dict:
        out = {
            "kind": self.kind,
            "matrix": self.matrix.tolist(),
            "rho": self.rho,
            "alpha_bound": self.alpha_bound,
            "gamma_bound": self.gamma_bound,
            "constants": {
                k: (float(v) if isinstance(v, (int, float, np.floating)) else v)
                for k, v in self.constants.items()
            },
        }
        return out


def ratio_M(profile: StepsizeProfile, pair: MixingPair) -> tuple[float, str]:
    """Ratio M with alpha_prime >= M * alpha_hat for any rescaling of the profile.

    Equal stepsizes give ``u.v / n``; in general the profile's own
    ``alpha_prime / alpha_hat`` is the exact ratio and is invariant under
    scaling the whole profile.
    """
    if profile.alpha_hat <= 0:
        raise ValueError("the profile has no positive stepsize")
    m = profile.alpha_prime(pair.u, pair.v) / profile.alpha_hat
    if m <= 0:
        raise ValueError("alpha_prime is not positive for this profile")
    mode = "equal" if profile.is_uniform else "profile-shape"
    return float(m), mode


def synchronous_certificate(
    pair: MixingPair, kit: NormKit, obj: ObjectiveSet, profile: StepsizeProfile
) -> Certificate:
    """3x3 per-iteration bound for the synchronous algorithm at this profile."""
    n = pair.n
    mu, lip = obj.mu, obj.L
    a_prime = profile.alpha_prime(pair.u, pair.v)
    a_hat = profile.alpha_hat
    if a_prime > 2.0 / (mu + lip) + 1e-15:
        raise CertificationError(
            f"effective stepsize {a_prime:.3e} exceeds 2/(mu+L); the mean-step "
            "contraction bound does not apply"
        )
    sR, sC = kit.sigma_R, kit.sigma_C
    c0, dC2, dRC = kit.c0, kit.delta_C2, kit.delta_RC
    v_R = kit.norm_R(pair.v)
    v_2 = float(np.linalg.norm(pair.v))
    u_2 = float(np.linalg.norm(pair.u))
    r_2 = float(np.linalg.norm(pair.R, 2))
    rmi_2 = float(np.linalg.norm(pair.R - np.eye(n), 2))
    rt = math.sqrt(n)

    a = np.array(
        [
            [
                1.0 - a_prime * mu,
                a_prime * lip / rt,
                a_hat * u_2 / n,
            ],
            [
                a_hat * sR * v_R * lip,
                sR * (1.0 + a_hat * v_R * lip / rt),
                a_hat * sR * dRC,
            ],
            [
                a_hat * c0 * dC2 * r_2 * v_2 * lip**2,
                c0 * dC2 * lip * (rmi_2 + a_hat * r_2 * v_2 * lip / rt),
                sC + a_hat * c0 * dC2 * r_2 * lip,
            ],
        ]
    )
    rho = float(np.max(np.abs(np.linalg.eigvals(a))))
    m_ratio, m_mode = ratio_M(profile, pair) if a_hat > 0 else (float("nan"), "zero")
    bound = (
        certified_stepsize(pair, kit, obj, m_ratio) if a_hat > 0 else None
    )
    constants = {
        "alpha_prime": a_prime,
        "alpha_hat": a_hat,
        "M": m_ratio,
        "M_mode": m_mode,
        "mu": mu,
        "L": lip,
        "sigma_R": sR,
        "sigma_C": sC,
        "delta_RC": dRC,
        "delta_C2": dC2,
        "c0": c0,
        "norm_v_R": v_R,
        "norm_v_2": v_2,
        "norm_u_2": u_2,
        "norm_R_2": r_2,
        "norm_RmI_2": rmi_2,
        "epsilon": kit.epsilon,
    }
    return Certificate("synchronous", a, constants, rho, alpha_bound=bound)


def certified_stepsize(
    pair: MixingPair, kit: NormKit, obj: ObjectiveSet, M: float
) -> float:
    """Largest certified max-stepsize for profiles with alpha_prime >= M alpha_hat.

    The bound is the conjunction of: the root of the quadratic coefficient
    system (c1, c2, c3 below); the two diagonal-slack caps keeping the
    consensus and tracking rows strictly contractive; and a guard keeping
    the effective stepsize within the 2/(mu+L) window.
    """
    if M <= 0:
        raise ValueError("M must be positive")
    n = pair.n
    mu, lip = obj.mu, obj.L
    sR, sC = kit.sigma_R, kit.sigma_C
    c0, dC2, dRC = kit.c0, kit.delta_C2, kit.delta_RC
    v_R = kit.norm_R(pair.v)
    v_2 = float(np.linalg.norm(pair.v))
    u_2 = float(np.linalg.norm(pair.u))
    r_2 = float(np.linalg.norm(pair.R, 2))
    rmi_2 = float(np.linalg.norm(pair.R - np.eye(n), 2))
    rt = math.sqrt(n)

    c1 = (
        sR
        * c0
        * dC2
        * r_2
        * v_2
        * lip**2
        / (n * rt)
        * (M * dRC * n * (lip + mu) + u_2 * v_R * lip)
    )
    c2 = (
        sR * c0 * dC2 * u_2 * v_R * rmi_2 * lip**2 / n
        + c0 * dC2 * r_2 * v_2 * u_2 * (1.0 - sR) * lip**2 / (2.0 * n)
        + M * sR * c0 * dRC * dC2 * rmi_2 * mu * lip
        + 0.5 * M * sR * v_R * (1.0 - sC) * lip**2 / rt
    )
    c3 = 0.25 * M * (1.0 - sC) * (1.0 - sR) * mu
    if c1 <= 0 or c2 <= 0 or c3 <= 0:
        raise CertificationError(
            f"nonpositive certificate coefficients (c1={c1:.3e}, c2={c2:.3e}, "
            f"c3={c3:.3e}); upstream constants are inconsistent"
        )
    quad_root = 2.0 * c3 / (c2 + math.sqrt(c2**2 + 4.0 * c1 * c3))
    uv = float(pair.u @ pair.v) / n
    caps = [
        quad_root,
        (1.0 - sC) / (2.0 * sC * dC2 * r_2 * lip),
        (1.0 - sR) * rt / (2.0 * sR * v_R * lip),
        (1.0 - sC) / (2.0 * c0 * dC2 * r_2 * lip),
        2.0 / ((mu + lip) * uv),
    ]
    return float(min(caps))


# ---------------------------------------------------------------------------
# Gossip side
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GossipNormKit:
    """Deflating transforms and enumerated variance terms for the gossip family.

    ``S`` has the expected-pull Perron vector as its exact first row (other
    rows orthogonal to the all-ones direction); ``D`` has the all-ones row
    first (other rows orthogonal to the expected-push Perron vector).  The
    compressed factors ``J_T``/``J_E`` hold the nonzero spectrum with
    off-diagonal coupling below ``epsilon``, so the expected mixing operators
    have computable contractive norms for small gamma.
    """

    epsilon: float
    S: np.ndarray
    D: np.ndarray
    J_T: np.ndarray
    J_E: np.ndarray
    V_T: np.ndarray
    V_Q: np.ndarray
    V_E: np.ndarray
    delta_SD_sq: float
    delta_D2: float
    proj_D_norm: float
    v_S: float
    v_D: float
    gamma_bar_R: float = field(default=0.0)
    gamma_bar_C: float = field(default=0.0)

    @cached_property
    def V_T_norm(self) -> float:
        return _psd_norm(self.V_T)

    @cached_property
    def V_Q_norm(self) -> float:
        return _psd_norm(self.V_Q)

    @cached_property
    def V_E_norm(self) -> float:
        return _psd_norm(self.V_E)

    def mixing_norm_R(self, gamma: float) -> float:
        """Norm of the expected pull operator minus its Perron projector."""
        if self.J_T.shape[0] == 0:
            return 0.0
        return float(np.linalg.norm(np.eye(self.J_T.shape[0]) + gamma * self.J_T, 2))

    def mixing_norm_C(self, gamma: float) -> float:
        if self.J_E.shape[0] == 0:
            return 0.0
        return float(np.linalg.norm(np.eye(self.J_E.shape[0]) + gamma * self.J_E, 2))

    def sigma_R(self, gamma: float) -> float:
        """Mean-square contraction factor of the pull consensus step."""
        return self.mixing_norm_R(gamma) ** 2 + gamma**2 * self.V_T_norm

    def sigma_C(self, gamma: float) -> float:
        """Mean-square contraction factor of the push alignment step."""
        return self.mixing_norm_C(gamma) ** 2 + 2.0 * gamma**2 * self.V_E_norm


def _psd_norm(m: np.ndarray) -> float:
    if m.size == 0:
        return 0.0
    return float(np.max(np.linalg.eigvalsh(0.5 * (m + m.T))))


def _gamma_cap(sigma_fn, iters: int = 80) -> float:
    """Largest gamma in (0, 1] with sigma(gamma) < 1 (sigma is convex, sigma(0)=1)."""
    lo = 1e-6
    if sigma_fn(lo) >= 1.0:
        return 0.0
    hi = 1.0
    if sigma_fn(hi) < 1.0:
        return 1.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if sigma_fn(mid) < 1.0:
            lo = mid
        else:
            hi = mid
    return lo


def _weighted_variance(
    s: np.ndarray, s_inv: np.ndarray, mats: list[np.ndarray], probs: list[float]
) -> np.ndarray:
    n = s.shape[0]
    v = np.zeros((n, n))
    for p, w in zip(probs, mats):
        g = s @ w @ s_inv
        v += p * (g.T @ g)
    return v


def _pick_deflation(
    a: np.ndarray,
    left_null: np.ndarray,
    right_null: np.ndarray,
    mats: list[np.ndarray],
    probs: list[float],
    v_coeff: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Transform maximizing the admissible gamma range.

    Aggressive scaling (between blocks, and inside near-defective blocks)
    flattens the compressed factor but inflates the variance matrix through
    the transform's condition number; the largest usable gamma trades the
    two off, and a geometric ladder search over both knobs suffices.
    """
    best = None
    sub = a.shape[0] - 1
    for slack in (1e-9, 0.02, 0.1, 0.4):
        defl = Deflation(a, left_null, right_null, block_slack=slack)
        for q in [2.0**-i for i in range(0, 18)]:
            s, j = defl.at(q)
            s_inv = np.linalg.inv(s)
            v_norm = _psd_norm(_weighted_variance(s, s_inv, mats, probs))

            def sigma(gamma, j=j, v_norm=v_norm):
                mix = (
                    float(np.linalg.norm(np.eye(sub) + gamma * j, 2)) if sub else 0.0
                )
                return mix**2 + v_coeff * gamma**2 * v_norm

            cap = _gamma_cap(sigma, iters=40)
            if best is None or cap > best[0] + 1e-12:
                best = (cap, s, j)
    return best[1], best[2]


def build_gossip_kit(exp: GossipExpectations, epsilon: float | None = None) -> GossipNormKit:
    """Build the deflating transforms and variance terms from exact enumeration.

    With ``epsilon`` given, the coupling part of each compressed factor is
    shrunk below it; by default the scaling level is chosen per side to
    maximize the admissible gamma range instead.
    """
    n = exp.n
    eigs_t = np.linalg.eigvals(exp.T_bar)
    eigs_e = np.linalg.eigvals(exp.E_bar)
    r_max = 0.0
    for eigs in (eigs_t, eigs_e):
        nonzero = sorted(eigs, key=lambda z: abs(z))[1:]
        if nonzero:
            r_max = max(r_max, max(abs(1.0 + z) for z in nonzero))
    if r_max >= 1.0 - 1e-12:
        raise CertificationError(
            "the expected mixing generators are not contractive off their "
            "null space; check the spanning-tree requirements"
        )

    ones = np.ones(n)
    proj_u = np.eye(n) - np.outer(ones, exp.u_bar) / n
    probs = [p for p, _, _, _ in exp.outcomes]
    w_t = [proj_u @ (_tick_t(i, j, n) - exp.T_bar) for _, i, j, _ in exp.outcomes]
    w_e = [_tick_e(i, l, n) - exp.E_bar for _, i, _, l in exp.outcomes]
    if epsilon is not None:
        s, j_t = deflated_schur_transform(exp.T_bar, exp.u_bar, ones, epsilon)
        d, j_e = deflated_schur_transform(exp.E_bar, ones, exp.v_bar, epsilon)
    else:
        s, j_t = _pick_deflation(exp.T_bar, exp.u_bar, ones, w_t, probs, v_coeff=1.0)
        d, j_e = _pick_deflation(exp.E_bar, ones, exp.v_bar, w_e, probs, v_coeff=2.0)
        probe = Deflation(exp.T_bar, exp.u_bar, ones)
        epsilon = max(
            probe.coupling_norm(j_t) if n > 1 else 0.0,
            Deflation(exp.E_bar, ones, exp.v_bar).coupling_norm(j_e) if n > 1 else 0.0,
        )
    s = s / np.linalg.svd(s, compute_uv=False)[-1]
    d = d / np.linalg.svd(d, compute_uv=False)[-1]
    s_inv = np.linalg.inv(s)
    d_inv = np.linalg.inv(d)

    v_t = _weighted_variance(s, s_inv, w_t, probs)
    v_q = _weighted_variance(
        s, s_inv, [proj_u @ np.diag(_tick_q(i, j, l, n)) for _, i, j, l in exp.outcomes], probs
    )
    v_e = _weighted_variance(d, d_inv, w_e, probs)

    proj_v = np.eye(n) - np.outer(exp.v_bar, ones) / n
    kit = GossipNormKit(
        epsilon=float(epsilon),
        S=s,
        D=d,
        J_T=j_t,
        J_E=j_e,
        V_T=v_t,
        V_Q=v_q,
        V_E=v_e,
        delta_SD_sq=float(np.linalg.norm(s @ d_inv, 2) ** 2),
        delta_D2=float(np.linalg.norm(d, 2)),
        proj_D_norm=float(np.linalg.norm(d @ proj_v @ d_inv, 2)),
        v_S=float(np.linalg.norm(s @ exp.v_bar)),
        v_D=float(np.linalg.norm(d @ exp.v_bar)),
    )
    object.__setattr__(kit, "gamma_bar_R", _gamma_cap(kit.sigma_R))
    object.__setattr__(kit, "gamma_bar_C", _gamma_cap(kit.sigma_C))
    return kit


def _gossip_d_constants(
    exp: GossipExpectations, kit: GossipNormKit, gamma: float
) -> dict:
    n = exp.n
    s_r = kit.sigma_R(gamma)
    s_c = kit.sigma_C(gamma)
    if s_r >= 1.0 or s_c >= 1.0:
        raise CertificationError(
            f"gamma={gamma} is too large: sigma_R={s_r:.4f}, sigma_C={s_c:.4f}"
        )
    f_r = (1.0 + s_r) / (1.0 - s_r)
    f_c = (1.0 + s_c) / (1.0 - s_c)
    g_c = (1.0 + s_c) / s_c
    m_quuq = _psd_norm(exp.M_QuuQ)
    return {
        "sigma_R": s_r,
        "sigma_C": s_c,
        "d1": 2.0 * m_quuq / n**2,
        "d2": 3.0 * f_r * kit.V_Q_norm,
        "d3": 4.0 * kit.delta_D2**2 * f_c * kit.proj_D_norm**2 * exp.E_Q_sqnorm,
        "d4": (1.0 / n) * g_c * kit.V_E_norm * kit.v_D**2,
        "d5": gamma**2 * _psd_norm(exp.M_TuuT) / n**2,
        "d6": kit.delta_D2**2 * f_c * kit.proj_D_norm**2 * gamma**2 * exp.E_T_sqnorm,
        "d7": exp.u_EQ_norm**2 / n**2,
    }


@dataclass(frozen=True)
class GossipBounds:
    gamma_ok: bool
    alpha_bound: float
    gamma_caps: dict
    constants: dict
    reason: str = ""


def certified_gossip_bounds(
    exp: GossipExpectations, kit: GossipNormKit, obj: ObjectiveSet, gamma: float
) -> GossipBounds:
    """Check the gamma caps and return the certified common stepsize at this gamma.

    The stepsize is the conjunction of the root of the (c4, c5, c6) quadratic
    with the six auxiliary row conditions that keep the diagonal entries of
    the mean-square transition matrix strictly contractive.
    """
    mu, lip = obj.mu, obj.L
    n = exp.n
    eta = exp.eta
    caps = {"gamma_bar_R": kit.gamma_bar_R, "gamma_bar_C": kit.gamma_bar_C}
    if gamma >= min(kit.gamma_bar_R, kit.gamma_bar_C):
        return GossipBounds(
            False, 0.0, caps, {}, reason="gamma too large: mean-square mixing not contractive"
        )
    d = _gossip_d_constants(exp, kit, gamma)
    s_r, s_c = d["sigma_R"], d["sigma_C"]
    cap3 = eta * mu * math.sqrt(1.0 - s_c) / (8.0 * lip * math.sqrt(d["d4"] * d["d7"]))
    caps["variance_cap"] = cap3
    if gamma >= cap3:
        return GossipBounds(
            False, 0.0, caps, d, reason="gamma too large: tracker variance dominates"
        )

    d2, d3, d4, d5, d6, d7 = d["d2"], d["d3"], d["d4"], d["d5"], d["d6"], d["d7"]
    d1 = d["d1"]
    v2 = float(np.linalg.norm(exp.v_bar))
    v_s = kit.v_S
    dsd = kit.delta_SD_sq

    c4 = (
        6.0 * eta * lip**4 / (mu * n) * d2 * dsd * (d6 + gamma**2 * d4)
        + 6.0 * lip**4 / (eta * mu) * d2 * d7 * v_s**2 * (2.0 * d6 + gamma**2 * d4)
        + 1.5 * (1.0 - s_r) * lip**4 * d3 * d7 / (eta * mu) * v2**2
        + eta * mu * lip**2 * d2 * dsd * (2.0 * d6 + gamma**2 * d4)
        + 0.75 * (1.0 - s_c) * eta * lip**4 * d2 / (mu * n) * v_s**2
    )
    c5 = (
        2.0 * lip**2 * d2 * d5 * dsd * (d6 + gamma**2 * d4)
        + 0.25 * (1.0 - s_c) * lip**2 * d2 * d5 * v_s**2
    )
    c6 = (
        eta * mu * (1.0 - s_r) * (1.0 - s_c) / 32.0
        - 1.5 * (1.0 - s_r) * lip**2 * d4 * d7 / (eta * mu) * gamma**2
    )
    if c6 <= 0:
        return GossipBounds(False, 0.0, caps, d, reason="gamma too large: c6 <= 0")

    quad_root = 2.0 * c6 / (c5 + math.sqrt(c5**2 + 4.0 * c4 * c6))
    aux = [
        eta * mu / (4.0 * lip**2 * v2**2 * d1),
        math.sqrt((1.0 - s_r) * n / (4.0 * lip**2 * d2 * v_s**2)),
        math.sqrt((1.0 - s_c) / (4.0 * lip**2 * d3)),
        eta / (2.0 * mu * v2**2 * d1),
        d7 / (eta * mu * d1),
        math.sqrt(d6 / (lip**2 * d3 * v2**2)),
    ]
    alpha = float(min([quad_root] + aux))
    constants = dict(d)
    constants.update({"c4": c4, "c5": c5, "c6": c6, "eta": eta})
    return GossipBounds(True, alpha, caps, constants)


def gossip_certificate(
    exp: GossipExpectations,
    kit: GossipNormKit,
    obj: ObjectiveSet,
    alpha: float,
    gamma: float,
) -> Certificate:
    """Mean-square 3x3 transition matrix at a concrete (alpha, gamma)."""
    n = exp.n
    mu, lip = obj.mu, obj.L
    eta = exp.eta
    s_r = kit.sigma_R(gamma)
    s_c = kit.sigma_C(gamma)
    if s_r >= 1.0 or s_c >= 1.0:
        raise CertificationError(
            f"gamma={gamma} is too large: sigma_R={s_r:.4f}, sigma_C={s_c:.4f}"
        )
    f_r = (1.0 + s_r) / (1.0 - s_r)
    f_c = (1.0 + s_c) / (1.0 - s_c)
    g_c = (1.0 + s_c) / s_c
    m_quuq = _psd_norm(exp.M_QuuQ)
    m_ruur = _psd_norm(exp.M_RuuR)
    v2 = float(np.linalg.norm(exp.v_bar))
    v_s, v_d = kit.v_S, kit.v_D
    dd2 = kit.delta_D2
    proj = kit.proj_D_norm
    eq_sq = exp.E_Q_sqnorm
    ermi = exp.E_RmI_sqnorm

    b = np.array(
        [
            [
                1.0 - alpha * eta * mu + 4.0 * alpha**2 * lip**2 / n**2 * m_quuq * v2**2,
                2.0 * alpha * eta * lip**2 / (mu * n)
                + 4.0 * alpha**2 * lip**2 / n**3 * m_quuq * v2**2
                + m_ruur / n**2,
                2.0 * alpha / (eta * mu * n**2) * exp.u_EQ_norm**2
                + 2.0 * alpha**2 / n**2 * m_quuq,
            ],
            [
                3.0 * alpha**2 * lip**2 * f_r * kit.V_Q_norm * v_s**2,
                0.5 * (1.0 + s_r) + 3.0 * alpha**2 * lip**2 / n * f_r * kit.V_Q_norm * v_s**2,
                3.0 * alpha**2 * f_r * kit.V_Q_norm * kit.delta_SD_sq,
            ],
            [
                2.0
                * lip**2
                * (
                    g_c * gamma**2 * kit.V_E_norm * v_d**2
                    + 4.0 * alpha**2 * dd2**2 * lip**2 * f_c * proj**2 * eq_sq * v2**2
                ),
                2.0 * dd2**2 * lip**2 * f_c * proj**2
                * (ermi + 4.0 * alpha**2 * lip**2 / n * eq_sq * v2**2)
                + 2.0 * gamma**2 * lip**2 / n * g_c * kit.V_E_norm * v_d**2,
                0.5 * (1.0 + s_c) + 4.0 * alpha**2 * dd2**2 * lip**2 * f_c * proj**2 * eq_sq,
            ],
        ]
    )
    rho = float(np.max(np.abs(np.linalg.eigvals(b))))
    constants = {
        "alpha": alpha,
        "gamma": gamma,
        "eta": eta,
        "mu": mu,
        "L": lip,
        "sigma_R": s_r,
        "sigma_C": s_c,
        "V_T_norm": kit.V_T_norm,
        "V_Q_norm": kit.V_Q_norm,
        "V_E_norm": kit.V_E_norm,
        "delta_SD_sq": kit.delta_SD_sq,
        "delta_D2": dd2,
        "proj_D_norm": proj,
        "epsilon": kit.epsilon,
    }
    return Certificate("gossip", b, constants, rho, gamma_bound=min(kit.gamma_bar_R, kit.gamma_bar_C))


# ---------------------------------------------------------------------------
# Empirical rates
# ---------------------------------------------------------------------------


class WindowError(ValueError):
    """Not enough usable points in the requested fitting window."""


@dataclass(frozen=True)
class RateFit:
    rate: float
    floored: bool
    n_points: int


def fit_rate(
    values: np.ndarray,
    ks: np.ndarray | None = None,
    window: tuple[float, float] | None = None,
    floor: float = 1e-14,
    min_points: int = 20,
) -> RateFit:
    """Least-squares geometric decay rate of a positive series.

    Fits the slope of ``log(values)`` against the iteration index over the
    window (defaults to the second half) and reports the per-iteration
    ratio.  Points at or below ``floor`` are dropped and flagged: they sit
    in numerical noise.
    """
    values = np.asarray(values, dtype=float)
    ks = np.arange(len(values)) if ks is None else np.asarray(ks, dtype=float)
    if len(values) != len(ks):
        raise ValueError("values and ks must align")
    if window is None:
        window = (float(ks[-1]) / 2.0, float(ks[-1]))
    lo, hi = window
    mask = (ks >= lo) & (ks <= hi)
    floored = bool(np.any(values[mask] <= floor))
    mask &= values > floor
    n_pts = int(mask.sum())
    if n_pts < min_points:
        raise WindowError(
            f"only {n_pts} usable points in window [{lo}, {hi}] (need {min_points})"
        )
    slope = np.polyfit(ks[mask], np.log(values[mask]), 1)[0]
    return RateFit(rate=float(np.exp(slope)), floored=floored, n_points=n_pts)
