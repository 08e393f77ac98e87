"""Row/column-stochastic mixing matrices, their Perron vectors, and norm kits.

A pull graph induces a row-stochastic matrix R (each agent averages itself
with its in-neighbors, equal weights); a push graph induces a
column-stochastic matrix C (each agent splits its mass equally over itself
and its out-neighbors).  Both carry positive diagonals by construction.

The left Perron vector u of R (``u @ R = u``, ``u @ 1 = n``) and the right
Perron vector v of C (``C @ v = v``, ``1 @ v = n``) are supported exactly on
the spanning-tree root sets of the induced graphs; they are computed by a
null-space solve restricted to the root component, so the support is exact
rather than iteration-limited.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .digraph import Digraph, root_set
from .spectral import scaled_schur_transform

STOCHASTIC_TOL = 1e-12


class AssumptionViolation(ValueError):
    """A structural prerequisite (stochasticity, spanning trees, ...) failed."""


def build_row_stochastic(g: Digraph) -> np.ndarray:
    """Equal-weight row-stochastic matrix of the pull graph ``g``.

    ``R[i, j] > 0`` iff ``j`` is an in-neighbor of ``i`` or ``j == i``; each
    row is ``1 / (deg_in + 1)`` on its support.
    """
    n = g.n
    r = np.zeros((n, n))
    for i in range(1, n + 1):
        nbrs = g.in_neighbors(i)
        w = 1.0 / (len(nbrs) + 1)
        r[i - 1, i - 1] = w
        for j in nbrs:
            r[i - 1, j - 1] = w
    r /= r.sum(axis=1, keepdims=True)
    return r


def build_column_stochastic(g: Digraph) -> np.ndarray:
    """Equal-weight column-stochastic matrix of the push graph ``g``.

    ``C[l, j] > 0`` iff ``l`` is an out-neighbor of ``j`` or ``l == j``; each
    column is ``1 / (deg_out + 1)`` on its support.
    """
    n = g.n
    c = np.zeros((n, n))
    for j in range(1, n + 1):
        nbrs = g.out_neighbors(j)
        w = 1.0 / (len(nbrs) + 1)
        c[j - 1, j - 1] = w
        for l in nbrs:
            c[l - 1, j - 1] = w
    c /= c.sum(axis=0, keepdims=True)
    return c


def induced_digraph(m: np.ndarray) -> Digraph:
    """Graph induced by a nonnegative matrix: edge (j, i) iff ``m[i, j] > 0``."""
    m = np.asarray(m)
    n = m.shape[0]
    edges = {
        (j + 1, i + 1) for i in range(n) for j in range(n) if i != j and m[i, j] > 0
    }
    return Digraph(n, frozenset(edges))


def is_row_stochastic(m: np.ndarray, tol: float = STOCHASTIC_TOL) -> bool:
    m = np.asarray(m)
    return bool(np.all(m >= -tol) and np.all(np.abs(m.sum(axis=1) - 1.0) <= tol))


def is_column_stochastic(m: np.ndarray, tol: float = STOCHASTIC_TOL) -> bool:
    m = np.asarray(m)
    return bool(np.all(m >= -tol) and np.all(np.abs(m.sum(axis=0) - 1.0) <= tol))


def _left_perron(m: np.ndarray, support: list[int]) -> np.ndarray:
    """Left eigenvector of ``m`` for eigenvalue 1, zero off ``support``.

    ``support`` holds 0-based indices of the root component; the restricted
    block is irreducible row-stochastic so the eigenvalue is simple there.
    The vector is normalized to sum to ``n`` and its support is exact.
    """
    n = m.shape[0]
    if not support:
        raise AssumptionViolation(
            "eigenvalue 1 is not simple: the induced graph has no spanning tree"
        )
    sub = m[np.ix_(support, support)]
    k = len(support)
    _, sing, vt = np.linalg.svd(sub.T - np.eye(k))
    if k > 1 and sing[-2] < 1e-10:
        raise AssumptionViolation(
            "eigenvalue 1 is not simple within the root component"
        )
    w = vt[-1]
    if w.sum() < 0:
        w = -w
    if np.min(w) < -1e-9 * max(1.0, np.max(np.abs(w))):
        raise AssumptionViolation("computed eigenvector is not nonnegative")
    w = np.clip(w, 0.0, None)
    full = np.zeros(n)
    full[support] = w * (n / w.sum())
    return full


def perron_vectors(r_mat: np.ndarray, c_mat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Perron pair (u, v): ``u @ R = u``, ``u @ 1 = n``; ``C @ v = v``, ``1 @ v = n``.

    Raises :class:`AssumptionViolation` when either eigenvalue 1 is not
    simple, which signals a missing spanning tree.
    """
    roots_r = sorted(i - 1 for i in root_set(induced_digraph(r_mat)))
    roots_ct = sorted(i - 1 for i in root_set(induced_digraph(c_mat.T)))
    u = _left_perron(r_mat, roots_r)
    v = _left_perron(c_mat.T, roots_ct)
    return u, v


def spectral_radius(m: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(m))))


@dataclass(frozen=True)
class MixingPair:
    """A row-stochastic / column-stochastic matrix pair with spectral data.

    Attributes
    ----------
    R, C : ndarray
        The mixing matrices.
    u, v : ndarray
        Left Perron vector of R and right Perron vector of C, normalized to
        sum n, supported exactly on the respective root sets.
    rho_R, rho_C : float
        Spectral radii of ``R - 1 u^T / n`` and ``C - v 1^T / n``.
    """

    R: np.ndarray
    C: np.ndarray
    u: np.ndarray
    v: np.ndarray
    rho_R: float
    rho_C: float

    @classmethod
    def from_matrices(cls, r_mat, c_mat, validate: bool = True) -> "MixingPair":
        r_mat = np.asarray(r_mat, dtype=float)
        c_mat = np.asarray(c_mat, dtype=float)
        if validate:
            if not is_row_stochastic(r_mat):
                raise AssumptionViolation("R is not row-stochastic within 1e-12")
            if not is_column_stochastic(c_mat):
                raise AssumptionViolation("C is not column-stochastic within 1e-12")
        u, v = perron_vectors(r_mat, c_mat)
        n = r_mat.shape[0]
        rho_r = spectral_radius(r_mat - np.outer(np.ones(n), u) / n)
        rho_c = spectral_radius(c_mat - np.outer(v, np.ones(n)) / n)
        return cls(r_mat, c_mat, u, v, rho_r, rho_c)

    @classmethod
    def from_graphs(cls, g_pull: Digraph, g_push: Digraph) -> "MixingPair":
        return cls.from_matrices(
            build_row_stochastic(g_pull), build_column_stochastic(g_push)
        )

    @property
    def n(self) -> int:
        return self.R.shape[0]

    def matrices_at(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Constant in time; mirrors the time-varying mixing interface."""
        return self.R, self.C

    @cached_property
    def roots_R(self) -> frozenset[int]:
        return root_set(induced_digraph(self.R))

    @cached_property
    def roots_CT(self) -> frozenset[int]:
        return root_set(induced_digraph(self.C.T))


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[CheckResult, ...]
    roots_R: frozenset[int]
    roots_CT: frozenset[int]
    u: np.ndarray
    v: np.ndarray
    rho_R: float
    rho_C: float

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[CheckResult]:
        return [c for c in self.checks if not c.passed]

    def lines(self) -> list[str]:
        out = []
        for c in self.checks:
            out.append(f"[{'PASS' if c.passed else 'FAIL'}] {c.name}: {c.detail}")
        out.append(f"roots(pull graph) = {sorted(self.roots_R)}")
        out.append(f"roots(reversed push graph) = {sorted(self.roots_CT)}")
        out.append(f"u = {np.array2string(self.u, precision=6)}")
        out.append(f"v = {np.array2string(self.v, precision=6)}")
        out.append(f"rho_R = {self.rho_R:.12f}  rho_C = {self.rho_C:.12f}")
        return out


def validate_matrices(
    r_mat: np.ndarray, c_mat: np.ndarray, alphas: np.ndarray
) -> ValidationReport:
    """Machine-check the structural prerequisites for convergence.

    Checks, in order: stochasticity with positive diagonals; spanning trees
    in both induced graphs with a nonempty common root set; at least one
    common root holding a positive stepsize; positivity of ``u @ v``.  The
    Perron data is filled with NaNs when it does not exist, so the report is
    always produced.
    """
    r_mat = np.asarray(r_mat, dtype=float)
    c_mat = np.asarray(c_mat, dtype=float)
    alphas = np.asarray(alphas, dtype=float)
    n = r_mat.shape[0]
    checks = []

    row_ok = is_row_stochastic(r_mat)
    col_ok = is_column_stochastic(c_mat)
    diag_ok = bool(np.all(np.diag(r_mat) > 0) and np.all(np.diag(c_mat) > 0))
    checks.append(
        CheckResult(
            "stochasticity+diagonals",
            row_ok and col_ok and diag_ok,
            f"rows(R) sum to 1: {row_ok}; cols(C) sum to 1: {col_ok}; "
            f"positive diagonals: {diag_ok}",
        )
    )

    roots_r = root_set(induced_digraph(r_mat))
    roots_ct = root_set(induced_digraph(c_mat.T))
    common = roots_r & roots_ct
    checks.append(
        CheckResult(
            "spanning-tree roots",
            bool(roots_r) and bool(roots_ct) and bool(common),
            f"roots(pull)={sorted(roots_r)}, roots(reversed push)={sorted(roots_ct)}, "
            f"common={sorted(common)}",
        )
    )

    active = {i for i in common if alphas[i - 1] > 0}
    checks.append(
        CheckResult(
            "positive root stepsize",
            bool(active),
            f"common roots with positive stepsize: {sorted(active)}",
        )
    )

    try:
        u, v = perron_vectors(r_mat, c_mat)
        rho_r = spectral_radius(r_mat - np.outer(np.ones(n), u) / n)
        rho_c = spectral_radius(c_mat - np.outer(v, np.ones(n)) / n)
        uv = float(u @ v)
        checks.append(CheckResult("u.v positive", uv > 0, f"u.v = {uv:.6g}"))
    except AssumptionViolation as exc:
        u = v = np.full(n, np.nan)
        rho_r = rho_c = float("nan")
        checks.append(CheckResult("u.v positive", False, f"not computable: {exc}"))

    return ValidationReport(tuple(checks), roots_r, roots_ct, u, v, rho_r, rho_c)


def validate_assumptions(pair: MixingPair, alphas: np.ndarray) -> ValidationReport:
    """Validate an already-constructed pair (see :func:`validate_matrices`)."""
    return validate_matrices(pair.R, pair.C, alphas)


def lifted_norm(x: np.ndarray, transform: np.ndarray | None = None) -> float:
    """Column-wise lift of a vector norm to stacked variables.

    For the transformed Euclidean norm ``|z| = ||T z||_2`` the lift over the
    columns of an n-by-p stack is exactly the Frobenius norm of ``T x``.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if transform is not None:
        x = transform @ x
    return float(np.linalg.norm(x, "fro"))


def induced_norm(w: np.ndarray, transform: np.ndarray | None = None) -> float:
    """Matrix norm induced by the transformed Euclidean vector norm."""
    w = np.asarray(w, dtype=float)
    if transform is None:
        return float(np.linalg.norm(w, 2))
    return float(np.linalg.norm(transform @ w @ np.linalg.inv(transform), 2))


@dataclass(frozen=True)
class NormKit:
    """Transforms realizing contractive norms for the two consensus operators.

    ``T_R`` and ``T_C`` define vector norms under which ``R - 1 u^T/n`` and
    ``C - v 1^T/n`` have induced norms ``sigma_R, sigma_C < 1`` within
    ``epsilon`` of the spectral radii.  Both transforms are rescaled so the
    plain Euclidean norm is dominated: ``||x||_2 <= |x|`` for either norm.
    The delta constants convert between the three norms; ``c0`` is the norm
    of the tracker-centering projector ``I - v 1^T / n``.
    """

    epsilon: float
    sigma_R: float
    sigma_C: float
    delta_CR: float
    delta_C2: float
    delta_RC: float
    delta_R2: float
    c0: float
    T_R: np.ndarray
    T_C: np.ndarray

    def norm_R(self, x) -> float:
        return lifted_norm(x, self.T_R)

    def norm_C(self, x) -> float:
        return lifted_norm(x, self.T_C)


def build_norm_kit(pair: MixingPair, epsilon: float | None = None) -> NormKit:
    """Construct the :class:`NormKit` for a mixing pair.

    ``epsilon`` defaults to ``0.1 * (1 - max(rho_R, rho_C))``; it must leave
    room for ``sigma < 1`` on both sides, otherwise the construction fails.
    """
    rho_max = max(pair.rho_R, pair.rho_C)
    if rho_max >= 1.0:
        raise AssumptionViolation(
            f"consensus operators are not contractive (rho = {rho_max:.6f})"
        )
    if epsilon is None:
        epsilon = 0.1 * (1.0 - rho_max)
    if epsilon <= 0 or rho_max + epsilon >= 1.0:
        raise ValueError(
            f"epsilon={epsilon} leaves no room below 1 (rho = {rho_max:.6f})"
        )
    n = pair.n
    a_r = pair.R - np.outer(np.ones(n), pair.u) / n
    a_c = pair.C - np.outer(pair.v, np.ones(n)) / n
    t_r, sigma_r = scaled_schur_transform(a_r, epsilon)
    t_c, sigma_c = scaled_schur_transform(a_c, epsilon)
    # Euclidean domination (smallest singular value >= 1) leaves the induced
    # norms unchanged but pins down the delta constants.
    t_r = t_r / np.linalg.svd(t_r, compute_uv=False)[-1]
    t_c = t_c / np.linalg.svd(t_c, compute_uv=False)[-1]
    t_r_inv = np.linalg.inv(t_r)
    t_c_inv = np.linalg.inv(t_c)
    c0 = float(
        np.linalg.norm(t_c @ (np.eye(n) - np.outer(pair.v, np.ones(n)) / n) @ t_c_inv, 2)
    )
    return NormKit(
        epsilon=float(epsilon),
        sigma_R=sigma_r,
        sigma_C=sigma_c,
        delta_CR=float(np.linalg.norm(t_c @ t_r_inv, 2)),
        delta_C2=float(np.linalg.norm(t_c, 2)),
        delta_RC=float(np.linalg.norm(t_r @ t_c_inv, 2)),
        delta_R2=float(np.linalg.norm(t_r, 2)),
        c0=c0,
        T_R=t_r,
        T_C=t_c,
    )


def write_matrix_csv(path, m: np.ndarray, kind: str) -> None:
    """Dense CSV dump with a `# rows=.. cols=.. kind=..` header line."""
    m = np.asarray(m)
    if kind not in ("row_stochastic", "column_stochastic"):
        raise ValueError(f"unknown matrix kind {kind!r}")
    with open(path, "w") as fh:
        fh.write(f"# rows={m.shape[0]} cols={m.shape[1]} kind={kind}\n")
        for row in m:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")


def read_matrix_csv(path) -> tuple[np.ndarray, str]:
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("#"):
            raise ValueError(f"{path}: missing header line")
        fields = dict(tok.split("=") for tok in header[1:].split())
        rows = [
            [float(x) for x in line.strip().split(",")] for line in fh if line.strip()
        ]
    m = np.array(rows)
    if m.shape != (int(fields["rows"]), int(fields["cols"])):
        raise ValueError(f"{path}: shape mismatch against header")
    return m, fields["kind"]
