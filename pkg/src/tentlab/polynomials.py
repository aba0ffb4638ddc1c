"""Scaled-monomial bases and least-squares projections onto low-degree polynomials."""

from __future__ import annotations

import itertools
import math

import numpy as np


def exponents(n: int, degree: int) -> list[tuple[int, ...]]:
    """All multi-indices with total order <= `degree`, graded then lexicographic (descending)."""
    out = []
    for k in range(degree + 1):
        out.extend(sorted((a for a in itertools.product(range(k + 1), repeat=n) if sum(a) == k),
                          reverse=True))
    return out


def dimension(n: int, degree: int) -> int:
    """Number of monomials of degree <= `degree` in `n` variables."""
    if degree < 0:
        return 0
    return math.comb(n + degree, n)


def vandermonde(y: np.ndarray, exps: list[tuple[int, ...]]) -> np.ndarray:
    """Evaluate the monomials y**alpha.

    Parameters
    ----------
    y : ndarray, shape (npts, n)
        Scaled coordinates (x - x0) / r.
    exps : list of tuple
        Exponents, as returned by :func:`exponents`.

    Returns
    -------
    ndarray, shape (npts, len(exps))
    """
    y = np.atleast_2d(y)
    V = np.ones((y.shape[0], len(exps)))
    for j, a in enumerate(exps):
        for d, e in enumerate(a):
            if e:
                V[:, j] *= y[:, d] ** e
    return V


def derivative_matrix(y: np.ndarray, exps: list[tuple[int, ...]], alpha: tuple[int, ...],
                      radius: float) -> np.ndarray:
    """Matrix mapping coefficients c to d^alpha P at the points, for P = sum c_g ((x-x0)/r)^g."""
    y = np.atleast_2d(y)
    D = np.zeros((y.shape[0], len(exps)))
    for j, g in enumerate(exps):
        if any(gd < ad for gd, ad in zip(g, alpha)):
            continue
        col = np.full(y.shape[0], 1.0)
        for d, (gd, ad) in enumerate(zip(g, alpha)):
            col *= math.perm(gd, ad) * y[:, d] ** (gd - ad)
        D[:, j] = col
    return D * radius ** (-sum(alpha))


def smooth_weight(y: np.ndarray) -> np.ndarray:
    """The radial bump (1 - |y|^2)^4 on the unit ball (unnormalized)."""
    rho2 = np.sum(np.atleast_2d(y) ** 2, axis=1)
    return np.where(rho2 < 1.0, (1.0 - rho2) ** 4, 0.0)


class ProjectionOperator:
    """Weighted L2 projection onto polynomials of degree <= `degree` for a fixed point stencil.

    Because grids are uniform, the same stencil (offsets from the ball center) serves every
    center, so the projection is a fixed linear map precomputed once.

    Parameters
    ----------
    offsets : ndarray, shape (npts, n)
        Physical offsets of the stencil points from the ball center.
    radius : float
        Ball radius, used to scale the monomials.
    degree : int
        Maximal polynomial degree (m - 1).
    weight : {"flat", "smooth"}
    cond_max : float
        Guard on the Gram matrix condition number.
    """

    def __init__(self, offsets, radius, degree, weight="flat", cond_max=1e10):
        offsets = np.atleast_2d(np.asarray(offsets, dtype=float))
        self.n = offsets.shape[1]
        self.radius = float(radius)
        self.degree = int(degree)
        self.exps = exponents(self.n, self.degree)
        y = offsets / self.radius
        self.scaled = y
        if weight == "flat":
            w = np.ones(len(y))
        elif weight == "smooth":
            w = smooth_weight(y)
        else:
            raise ValueError(f"unknown weight {weight!r}")
        w = w / w.sum()
        if np.count_nonzero(w) < 4 * len(self.exps):
            raise ValueError("ball too small for the polynomial basis")
        self.weights = w
        self.V = vandermonde(y, self.exps)
        G = self.V.T @ (w[:, None] * self.V)
        self.gram = G
        self.condition = float(np.linalg.cond(G))
        if self.condition > cond_max:
            raise np.linalg.LinAlgError(
                f"ill-conditioned projection (cond={self.condition:.3e})")
        # coefficient map: c = G^{-1} V^T W f
        self.coef_map = np.linalg.solve(G, self.V.T * w[None, :])

    def coefficients(self, values: np.ndarray) -> np.ndarray:
        """Coefficients for stacked samples, shape (..., npts) -> (..., nbasis)."""
        return values @ self.coef_map.T

    def residual(self, values: np.ndarray) -> np.ndarray:
        return values - self.coefficients(values) @ self.V.T
