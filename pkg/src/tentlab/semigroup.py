"""Constant-coefficient semigroups ``exp(-t L0)`` as Fourier multipliers.

For spatially constant coefficients, ``L0`` acts on the Fourier side as multiplication by the
N x N symbol ``sigma(xi)``. Scalar symbols are exponentiated directly. Systems use an
eigendecomposition per frequency, with a scaling-and-squaring fallback where the eigenvector
basis is ill-conditioned.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .coeffs import CoefficientField, symbol
from .grid import Field, lp_of_density

#: kernels need t^(1/2m) >= RESOLVED_CELLS * h
RESOLVED_CELLS = 4.0
_EIG_COND_MAX = 1e8


@dataclass
class KernelFit:
    c1: float
    c2: float
    residual: float
    prefactors: list
    points: int


class Semigroup:
    """exp(-t L0) for an autonomous, spatially constant coefficient field."""

    def __init__(self, coeffs: CoefficientField):
        if not (coeffs.autonomous and coeffs.constant_in_space):
            raise ValueError("semigroup needs autonomous, spatially constant coefficients")
        self.coeffs = coeffs
        self.grid = coeffs.grid
        self.N = coeffs.N
        self.m = coeffs.m
        self.sigma = symbol(coeffs)  # (*space, N, N)
        self._axes = tuple(range(-self.grid.n, 0))
        self._cache = {}
        if self.N == 1:
            self._scalar = self.sigma[..., 0, 0]
        else:
            s = self.sigma.reshape(-1, self.N, self.N)
            w, V = np.linalg.eig(s)
            cond = np.linalg.cond(V)
            self._eig = (w, V, np.linalg.inv(np.where(cond[:, None, None] < _EIG_COND_MAX, V,
                                                          np.eye(self.N))))
            self._fallback = np.flatnonzero(~(cond < _EIG_COND_MAX))

    # -- multipliers ------------------------------------------------------------------------

    def _matrix_function(self, scalar_fn, t, key):
        ck = (key, float(t))
        if ck in self._cache:
            return self._cache[ck]
        if self.N == 1:
            out = scalar_fn(self._scalar, t)
        else:
            w, V, Vi = self._eig
            out = np.einsum("sij,sj,sjk->sik", V, scalar_fn(w, t), Vi)
            s = self.sigma.reshape(-1, self.N, self.N)
            for i in self._fallback:
                out[i] = self._fallback_fn(key, s[i], t)
            out = out.reshape(self.sigma.shape)
        if len(self._cache) > 8:
            self._cache.clear()
        self._cache[ck] = out
        return out

    def _fallback_fn(self, key, s, t):
        if key == "exp":
            return linalg.expm(-t * s)
        # phi1(-t s) = (1/t) int_0^t exp(-tau s) dtau via the augmented exponential
        N = self.N
        aug = np.zeros((2 * N, 2 * N), dtype=complex)
        aug[:N, :N] = -t * s
        aug[:N, N:] = np.eye(N)
        return linalg.expm(aug)[:N, N:]

    def multiplier(self, t: float) -> np.ndarray:
        """exp(-t sigma(xi)); shape ``(*space)`` for N = 1, else ``(*space, N, N)``."""
        return self._matrix_function(lambda s, tt: np.exp(-tt * s), t, "exp")

    def phi1(self, t: float) -> np.ndarray:
        """Multiplier of (1/t) int_0^t exp(-tau sigma) dtau (equal to 1 where sigma = 0)."""
        if t <= 0:
            raise ValueError("phi1 needs t > 0")

        def fn(s, tt):
            z = tt * s
            small = np.abs(z) < 1e-8
            zs = np.where(small, 1.0, z)
            return np.where(small, 1.0 - z / 2, -np.expm1(-zs) / zs)
        return self._matrix_function(fn, t, "phi1")

    def apply_hat(self, mult: np.ndarray, vh: np.ndarray) -> np.ndarray:
        """Multiply Fourier data ``(..., N, *space)`` by a scalar or matrix multiplier."""
        if self.N == 1:
            return vh * mult
        vm = np.moveaxis(vh, -self.grid.n - 1, -1)[..., None]
        out = (mult @ vm)[..., 0]
        return np.moveaxis(out, -1, -self.grid.n - 1)

    # -- public operations ------------------------------------------------------------------

    def apply(self, t: float, f: Field) -> Field:
        """exp(-t L0) f, computed as IFFT(exp(-t sigma) FFT f)."""
        if t < 0:
            raise ValueError("semigroup time must be non-negative")
        if t == 0:
            return f
        return Field(f.grid, self.apply_values(t, f.values))

    def apply_values(self, t: float, values: np.ndarray) -> np.ndarray:
        vh = np.fft.fftn(values, axes=self._axes)
        return np.fft.ifftn(self.apply_hat(self.multiplier(t), vh), axes=self._axes)

    def resolved(self, t: float) -> bool:
        return t > 0 and t ** (1.0 / (2 * self.m)) >= RESOLVED_CELLS * self.grid.spacing

    def kernel(self, t: float, component: int = 0) -> Field:
        """Response to the discrete delta (value 1/h^n at the origin) in one component."""
        if not self.resolved(t):
            raise ValueError(f"kernel unresolved: t^(1/2m) < {RESOLVED_CELLS:g} h")
        g = self.grid
        delta = np.zeros((self.N,) + g.shape, dtype=complex)
        delta[(component,) + g.origin_index] = 1.0 / g.cell_volume
        return Field(g, self.apply_values(t, delta))

    def kernel_bound_fit(self, t_list, floor: float = 1e-12) -> KernelFit:
        """Fit log|k(t, x)| t^(n/2m) = log c1 - c2 z with z = (|x|^(2m)/t)^(1/(2m-1)).

        Uses the interior window and the radially non-increasing upper envelope of |k|,
        since higher-order kernels change sign. Points below ``floor`` times the kernel
        maximum are dropped (round-off level).
        """
        g, m, n = self.grid, self.m, self.grid.n
        zs, ys, pref = [], [], []
        r = g.distance_from(np.zeros(n))
        inside = r <= g.interior_radius()
        order = np.argsort(r[inside], kind="stable")
        for t in t_list:
            k = np.abs(self.kernel(t).values[0])
            pref.append(float(k.max() * t ** (n / (2 * m))))
            rr = r[inside][order]
            kk = k[inside][order]
            env = np.maximum.accumulate(kk[::-1])[::-1]
            keep = env > floor * kk.max()
            z = (rr[keep] ** (2 * m) / t) ** (1.0 / (2 * m - 1))
            zs.append(z)
            ys.append(np.log(env[keep] * t ** (n / (2 * m))))
        z = np.concatenate(zs)
        y = np.concatenate(ys)
        X = np.stack([np.ones_like(z), -z], axis=1)
        coef, *_ = np.linalg.lstsq(X, y, rcond=None)
        res = float(np.sqrt(np.mean((X @ coef - y) ** 2)))
        return KernelFit(float(np.exp(coef[0])), float(coef[1]), res, pref, int(z.size))


def lp_contraction_ratio(S: Semigroup, t: float, f: Field, p: float) -> float:
    """||exp(-tL0) f||_p / ||f||_p."""
    num = lp_of_density(np.sqrt(S.apply(t, f).modulus2()), f.grid, p)
    den = lp_of_density(np.sqrt(f.modulus2()), f.grid, p)
    return num / den if den > 0 else 0.0


def trajectory(S: Semigroup, f: Field, times) -> "SpaceTimeField":
    """Exact e^{-tL0} f sampled at the given times (the first may be 0)."""
    from .grid import SpaceTimeField
    times = np.asarray(times, dtype=float)
    axes = S._axes
    fh = np.fft.fftn(f.values, axes=axes)
    out = np.empty((times.size,) + f.values.shape, dtype=complex)
    for k, t in enumerate(times):
        out[k] = f.values if t == 0 else np.fft.ifftn(S.apply_hat(S.multiplier(t), fh), axes=axes)
    return SpaceTimeField(f.grid, times, out)
