"""Schur-based similarity transforms that expose spectral radii as norms.

For a square matrix ``a`` with spectral radius ``rho < 1`` there are vector
norms ``|x| = ||T x||_2`` whose induced matrix norm puts ``a`` arbitrarily
close to ``rho``.  We build ``T`` from a real Schur form: 2x2 blocks for
complex eigenvalue pairs are rescaled into rotation-like form (so each block
contributes exactly its eigenvalue modulus), then a geometric block scaling
shrinks the strictly upper part until the induced norm is within the
requested margin of ``rho``.  Everything stays in real arithmetic.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg


def _block_starts(t: np.ndarray, tol: float = 0.0) -> list[tuple[int, int]]:
    """Diagonal block layout (start, size) of a quasi-triangular Schur factor."""
    n = t.shape[0]
    blocks = []
    k = 0
    while k < n:
        if k + 1 < n and abs(t[k + 1, k]) > tol:
            blocks.append((k, 2))
            k += 2
        else:
            blocks.append((k, 1))
            k += 1
    return blocks


def _block_norm(a: float, b: float, c: float) -> float:
    return float(np.linalg.norm(np.array([[a, b], [c, a]]), 2))


def _block_scales(t: np.ndarray, slack: float) -> np.ndarray:
    """Per-row scale taming each 2x2 block down to its norm target.

    LAPACK standardizes 2x2 blocks to equal diagonal entries with
    off-diagonals of opposite sign; conjugating by diag(1, sqrt(|b/c|))
    balances them so the block's 2-norm equals its eigenvalue modulus.
    Full balancing is catastrophic for near-defective blocks (|c| can be
    at rounding level), so the scale stops as soon as the block norm is
    within ``slack`` of the largest block eigenvalue modulus: nothing
    downstream needs a block tighter than the overall spectral radius.
    """
    n = t.shape[0]
    blocks = _block_starts(t)
    rho = 0.0
    moduli = {}
    for start, size in blocks:
        if size == 1:
            lam = abs(t[start, start])
        else:
            a = t[start, start]
            bc = t[start, start + 1] * t[start + 1, start]
            lam = float(np.sqrt(a * a + abs(bc))) if bc < 0 else abs(a) + np.sqrt(bc)
        moduli[start] = lam
        rho = max(rho, lam)

    scale = np.ones(n)
    for start, size in blocks:
        if size != 2:
            continue
        b, c = float(t[start, start + 1]), float(t[start + 1, start])
        if b == 0.0 or c == 0.0:
            continue
        a = float(t[start, start])
        target = max(moduli[start], rho) + slack
        balance = np.sqrt(abs(b) / abs(c))
        s = 1.0
        # Move geometrically toward full balance (where the norm bottoms out
        # at the eigenvalue modulus) and stop at the first scale meeting the
        # target; near-defective blocks then stay mildly scaled instead of
        # dragging the transform's conditioning to the rounding level.
        if balance >= 1.0:
            while _block_norm(a, b / s, c * s) > target and s < balance:
                s = min(2.0 * s, balance)
        else:
            while _block_norm(a, b / s, c * s) > target and s > balance:
                s = max(0.5 * s, balance)
        scale[start + 1] = s
    return scale


def _conjugate(t: np.ndarray, scale: np.ndarray) -> np.ndarray:
    return (scale[:, None] * t) / scale[None, :]


def scaled_schur_transform(
    a: np.ndarray, epsilon: float, max_halvings: int = 80
) -> tuple[np.ndarray, float]:
    """Invertible ``T`` with ``||T a T^{-1}||_2 <= rho(a) + epsilon``.

    Parameters
    ----------
    a : ndarray
        Real square matrix.
    epsilon : float
        Additive margin over the spectral radius; must be positive.

    Returns
    -------
    (transform, sigma)
        ``transform`` is real and invertible; ``sigma`` is the achieved
        induced norm, with ``rho(a) <= sigma <= rho(a) + epsilon``.
    """
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    if n == 1:
        return np.eye(1), abs(float(a[0, 0]))
    t, z = scipy.linalg.schur(a, output="real")
    rho = float(np.max(np.abs(np.linalg.eigvals(t))))
    base = _block_scales(t, slack=0.5 * epsilon)
    blocks = _block_starts(t)
    block_of = np.empty(n, dtype=int)
    for bi, (start, size) in enumerate(blocks):
        block_of[start : start + size] = bi

    q = 1.0
    for _ in range(max_halvings):
        # Row scales grow geometrically with the block index, so every
        # cross-block (strictly upper) entry is damped by at least q.
        scale = base * np.power(q, -block_of.astype(float))
        sigma = float(np.linalg.norm(_conjugate(t, scale), 2))
        if sigma <= rho + epsilon:
            return scale[:, None] * z.T, sigma
        q *= 0.5
    raise RuntimeError(
        f"geometric scaling failed to reach rho + epsilon = {rho + epsilon:.3e}"
    )


class Deflation:
    """Precomputed Schur data for deflating a simple zero eigenvalue.

    ``a`` must satisfy ``left_null @ a = 0`` and ``a @ right_null = 0`` with
    ``left_null @ right_null != 0``.  :meth:`at` builds, for a geometric
    scaling level ``q``, a similarity ``s`` with ``left_null`` as its exact
    first row and remaining rows orthogonal to ``right_null``, so that
    ``s a s^{-1} = blockdiag(0, j)``; smaller ``q`` shrinks the coupling
    (off-block) part of ``j`` at the price of a worse-conditioned ``s``.
    """

    def __init__(
        self,
        a: np.ndarray,
        left_null: np.ndarray,
        right_null: np.ndarray,
        block_slack: float = 1e-9,
    ):
        a = np.asarray(a, dtype=float)
        self.n = a.shape[0]
        self.left_null = np.asarray(left_null, dtype=float)
        if self.n == 1:
            return
        self.basis = scipy.linalg.null_space(right_null.reshape(1, -1))  # n x (n-1)
        m = self.basis.T @ a @ self.basis
        self.t, self.z = scipy.linalg.schur(m, output="real")
        self.base = _block_scales(self.t, slack=block_slack)
        blocks = _block_starts(self.t)
        self.block_of = np.empty(self.n - 1, dtype=int)
        for bi, (start, size) in enumerate(blocks):
            self.block_of[start : start + size] = bi
        self.diag_mask = np.zeros_like(self.t, dtype=bool)
        for start, size in blocks:
            self.diag_mask[start : start + size, start : start + size] = True

    def at(self, q: float) -> tuple[np.ndarray, np.ndarray]:
        """Similarity and compressed factor at scaling level ``q`` in (0, 1]."""
        if self.n == 1:
            return self.left_null.reshape(1, 1), np.zeros((0, 0))
        scale = self.base * np.power(q, -self.block_of.astype(float))
        j = _conjugate(self.t, scale)
        s = np.vstack(
            [self.left_null.reshape(1, -1), (scale[:, None] * self.z.T) @ self.basis.T]
        )
        return s, j

    def coupling_norm(self, j: np.ndarray) -> float:
        if self.n == 1:
            return 0.0
        return float(np.linalg.norm(np.where(self.diag_mask, 0.0, j), 2))


def deflated_schur_transform(
    a: np.ndarray,
    left_null: np.ndarray,
    right_null: np.ndarray,
    epsilon: float,
    max_halvings: int = 80,
) -> tuple[np.ndarray, np.ndarray]:
    """Deflating similarity whose coupling part has 2-norm at most ``epsilon``."""
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    parts = Deflation(a, left_null, right_null, block_slack=0.5 * epsilon)
    q = 1.0
    for _ in range(max_halvings):
        s, j = parts.at(q)
        if parts.coupling_norm(j) <= epsilon:
            return s, j
        q *= 0.5
    raise RuntimeError("geometric scaling failed to shrink the coupling part")
