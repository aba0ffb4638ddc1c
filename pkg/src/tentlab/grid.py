"""Periodic grids, sampled fields, derivatives, ball averages and elementary inequalities.

The whole space is truncated to a periodic box ``[-L/2, L/2)^n`` sampled at ``P`` points per
axis, with the origin at grid index ``P // 2``. Multi-indices are always enumerated in
descending lexicographic order, e.g. ``(2, 0), (1, 1), (0, 2)`` for ``n = m = 2``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import polynomials

SCHEMES = ("spectral", "fd2", "fd4")


@dataclass(frozen=True)
class Grid:
    n: int
    points: int
    box_length: float

    @property
    def spacing(self) -> float:
        return self.box_length / self.points

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points,) * self.n

    @property
    def size(self) -> int:
        return self.points ** self.n

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.n

    @property
    def volume(self) -> float:
        return self.box_length ** self.n

    @property
    def origin_index(self) -> tuple[int, ...]:
        return (self.points // 2,) * self.n

    def axis(self) -> np.ndarray:
        return (np.arange(self.points) - self.points // 2) * self.spacing

    def coords(self) -> list[np.ndarray]:
        """Coordinate arrays, each broadcastable to :attr:`shape`."""
        x = self.axis()
        out = []
        for d in range(self.n):
            s = [1] * self.n
            s[d] = self.points
            out.append(x.reshape(s))
        return out

    def wavenumbers(self) -> list[np.ndarray]:
        """Angular frequencies per axis, broadcastable to :attr:`shape`."""
        k = 2 * np.pi * np.fft.fftfreq(self.points, d=self.spacing)
        out = []
        for d in range(self.n):
            s = [1] * self.n
            s[d] = self.points
            out.append(k.reshape(s))
        return out

    def freq_norm2(self) -> np.ndarray:
        return sum(k ** 2 for k in self.wavenumbers())

    def distance_from(self, center) -> np.ndarray:
        """Periodic Euclidean distance of every grid point from `center`."""
        center = np.broadcast_to(np.asarray(center, dtype=float), (self.n,))
        L = self.box_length
        d2 = 0.0
        for x, c in zip(self.coords(), center):
            dx = np.mod(x - c + L / 2, L) - L / 2
            d2 = d2 + dx ** 2
        return np.sqrt(np.broadcast_to(d2, self.shape))

    def interior_radius(self) -> float:
        return self.box_length / 4


def make_grid(n: int, points_per_axis: int, box_length: float) -> Grid:
    """Build a periodic grid; `points_per_axis` must be a power of two >= 8."""
    if n not in (1, 2):
        raise ValueError(f"dimension must be 1 or 2, got {n}")
    P = int(points_per_axis)
    if P != points_per_axis or P < 8 or P & (P - 1):
        raise ValueError(f"points_per_axis must be a power of two >= 8, got {points_per_axis}")
    if not box_length > 0:
        raise ValueError("box_length must be positive")
    return Grid(n, P, float(box_length))


def _check_finite(values):
    if not np.all(np.isfinite(values)):
        raise FloatingPointError("non-finite values in field")


@dataclass(frozen=True, eq=False)
class Field:
    """An N-component complex field on a grid; ``values`` has shape ``(N, P, ..., P)``."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.complex128)
        if v.ndim == self.grid.n:
            v = v[None]
        if v.shape[1:] != self.grid.shape:
            raise ValueError(f"values shape {v.shape} does not match grid {self.grid.shape}")
        _check_finite(v)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def components(self) -> int:
        return self.values.shape[0]

    def modulus2(self) -> np.ndarray:
        """Pointwise squared Euclidean norm over components."""
        return np.sum(self.values.real ** 2 + self.values.imag ** 2, axis=0)

    def with_values(self, values) -> "Field":
        return Field(self.grid, values)

    def __add__(self, other):
        return Field(self.grid, self.values + _vals(other))

    def __sub__(self, other):
        return Field(self.grid, self.values - _vals(other))

    def __mul__(self, c):
        return Field(self.grid, self.values * c)

    __rmul__ = __mul__


def _vals(x):
    return x.values if isinstance(x, Field) else x


def field_from_function(grid: Grid, func, components: int = 1) -> Field:
    """Sample ``func(*coords)`` on the grid; a scalar function is repeated per component."""
    x = np.broadcast_arrays(*grid.coords())
    v = np.asarray(func(*x), dtype=np.complex128)
    if v.shape == grid.shape:
        v = np.broadcast_to(v, (components,) + grid.shape).copy()
    return Field(grid, v)


@dataclass(frozen=True, eq=False)
class SpaceTimeField:
    """A trajectory ``u(t_k)``; ``values`` has shape ``(K, N, P, ..., P)``."""

    grid: Grid
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).ravel()
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        v = np.asarray(self.values, dtype=np.complex128)
        if v.ndim == self.grid.n + 1:
            v = v[:, None]
        if v.shape[0] != t.size or v.shape[2:] != self.grid.shape:
            raise ValueError("trajectory shape does not match times/grid")
        _check_finite(v)
        t.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_fields(cls, times, fields) -> "SpaceTimeField":
        fields = list(fields)
        return cls(fields[0].grid, times, np.stack([f.values for f in fields]))

    @property
    def components(self) -> int:
        return self.values.shape[1]

    def __len__(self):
        return self.times.size

    def slice(self, k: int) -> Field:
        return Field(self.grid, self.values[k])

    def modulus2(self) -> np.ndarray:
        """Squared modulus summed over components, shape ``(K, P, ..., P)``."""
        return np.sum(self.values.real ** 2 + self.values.imag ** 2, axis=1)

    def map(self, func) -> "SpaceTimeField":
        return SpaceTimeField(self.grid, self.times,
                              np.stack([func(self.slice(k)).values for k in range(len(self))]))


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float
    grid: Grid = field(repr=False)

    def __post_init__(self):
        c = tuple(float(v) for v in np.broadcast_to(np.asarray(self.center, float), (self.grid.n,)))
        object.__setattr__(self, "center", c)
        if not 0 < self.radius <= self.grid.box_length / 4:
            raise ValueError(f"ball radius {self.radius} outside (0, L/4]")

    def mask(self) -> np.ndarray:
        return self.grid.distance_from(self.center) < self.radius

    def offsets(self) -> np.ndarray:
        """Physical offsets (periodic) of the grid points inside the ball, shape (npts, n)."""
        L = self.grid.box_length
        m = self.mask()
        out = []
        for x, c in zip(np.broadcast_arrays(*self.grid.coords()), self.center):
            out.append((np.mod(x - c + L / 2, L) - L / 2)[m])
        return np.stack(out, axis=1)


def make_ball(grid: Grid, center, radius: float) -> Ball:
    return Ball(center, float(radius), grid)


# ---------------------------------------------------------------------------
# multi-indices and derivatives

def multi_indices(n: int, order: int) -> list[tuple[int, ...]]:
    """All alpha in N^n with |alpha| = order, descending lexicographic."""
    return sorted((a for a in itertools.product(range(order + 1), repeat=n) if sum(a) == order),
                  reverse=True)


def count_multi_indices(n: int, order: int) -> int:
    return math.comb(n + order - 1, order)


def _central_weights(k: int, accuracy: int) -> np.ndarray:
    p = (k - 1) // 2 + accuracy // 2
    j = np.arange(-p, p + 1, dtype=float)
    A = np.vander(j, increasing=True).T
    b = np.zeros(2 * p + 1)
    b[k] = math.factorial(k)
    return np.linalg.solve(A, b)


def spectral_multiplier(grid: Grid, alpha) -> np.ndarray:
    """Fourier multiplier (i xi)^alpha of the spectral derivative."""
    mult = np.ones(grid.shape, dtype=np.complex128)
    for k, a in zip(grid.wavenumbers(), alpha):
        if a:
            mult = mult * (1j * k) ** a
    return mult


def derivative_values(values: np.ndarray, grid: Grid, alpha, scheme: str = "spectral") -> np.ndarray:
    """Derivative of raw arrays whose trailing ``grid.n`` axes are spatial."""
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != grid.n or min(alpha) < 0:
        raise ValueError(f"bad multi-index {alpha} for n={grid.n}")
    axes = tuple(range(-grid.n, 0))
    if sum(alpha) == 0:
        return np.array(values, dtype=np.complex128)
    if scheme == "spectral":
        return np.fft.ifftn(np.fft.fftn(values, axes=axes) * spectral_multiplier(grid, alpha),
                            axes=axes)
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    acc = int(scheme[2:])
    out = np.asarray(values, dtype=np.complex128)
    for d, a in enumerate(alpha):
        if a == 0:
            continue
        w = _central_weights(a, acc) / grid.spacing ** a
        p = (len(w) - 1) // 2
        ax = -grid.n + d
        # sum_j w_j f(x + j h)
        out = sum(wj * np.roll(out, -j, axis=ax) for j, wj in zip(range(-p, p + 1), w) if wj != 0)
    return out


def derivative(f: Field, alpha, scheme: str = "spectral") -> Field:
    """d^alpha f, spectral (exact on trigonometric interpolants) or centered finite differences."""
    return Field(f.grid, derivative_values(f.values, f.grid, alpha, scheme))


def grad_m(f: Field, m: int, scheme: str = "spectral") -> list[Field]:
    """All derivatives of order m, in the project-wide multi-index order."""
    if m < 1:
        raise ValueError("m must be >= 1")
    return [derivative(f, a, scheme) for a in multi_indices(f.grid.n, m)]


def grad_m_values(values: np.ndarray, grid: Grid, m: int) -> np.ndarray:
    """Spectral nabla^m of stacked arrays ``(..., N, *space)`` -> ``(..., M*N, *space)``.

    Component order is (alpha major, component minor).
    """
    axes = tuple(range(-grid.n, 0))
    vh = np.fft.fftn(values, axes=axes)
    parts = [np.fft.ifftn(vh * spectral_multiplier(grid, a), axes=axes)
             for a in multi_indices(grid.n, m)]
    return np.concatenate(parts, axis=-grid.n - 1)


# ---------------------------------------------------------------------------
# averages and norms

def ball_mean_sq(f: Field, ball: Ball) -> float:
    """(mean over B of |f|^2)^(1/2), a plain average over grid points with |x - c| < r."""
    if ball.radius < f.grid.spacing:
        raise ValueError("ball unresolved")
    m = ball.mask()
    return float(np.sqrt(np.mean(f.modulus2()[m])))


def ball_stencil(grid: Grid, radius: float) -> np.ndarray:
    """Indicator of {|x| < radius} (periodic) laid out with the origin at index 0."""
    d = grid.distance_from(np.zeros(grid.n))
    return np.fft.ifftshift(d < radius)


def ball_average(data: np.ndarray, grid: Grid, radii) -> np.ndarray:
    """Ball means of real data at every grid center.

    Parameters
    ----------
    data : ndarray, shape (K, *space) or (*space)
    radii : float or sequence of K floats
        One radius per leading slice.

    Returns
    -------
    ndarray of the same shape, entry [k, x] = mean of data[k] over B(x, radii[k]).
    """
    single = data.ndim == grid.n
    d = data[None] if single else data
    radii = np.broadcast_to(np.asarray(radii, dtype=float), (d.shape[0],))
    axes = tuple(range(-grid.n, 0))
    dh = np.fft.fftn(d, axes=axes)
    out = np.empty(d.shape)
    cache = {}
    for k, r in enumerate(radii):
        if r not in cache:
            st = ball_stencil(grid, r)
            cnt = np.count_nonzero(st)
            if cnt == 0:
                st = np.zeros(grid.shape, bool)
                st[(0,) * grid.n] = True
                cnt = 1
            # correlation with a symmetric stencil equals convolution
            cache[r] = np.fft.fftn(st.astype(float)) / cnt
        out[k] = np.fft.ifftn(dh[k] * cache[r]).real
    if np.all(d >= 0):
        np.maximum(out, 0.0, out=out)
    return out[0] if single else out


def window_mask(grid: Grid, window: float | None) -> np.ndarray:
    """Points with |x| <= window about the box center; everything if window is None."""
    if window is None:
        return np.ones(grid.shape, bool)
    return grid.distance_from(np.zeros(grid.n)) <= window


def lp_of_density(mod: np.ndarray, grid: Grid, p: float, window: float | None = None) -> float:
    """Discrete L^p norm of a non-negative pointwise modulus array."""
    mask = window_mask(grid, window)
    a = mod[mask]
    if p == np.inf:
        return float(a.max()) if a.size else 0.0
    if p <= 0:
        raise ValueError("p must be positive")
    if p == 2:
        s = np.sum(a * a)
    else:
        s = np.sum(a ** p)
    return float((grid.cell_volume * s) ** (1.0 / p))


def lp_norm(f: Field, p: float, window: float | None = None) -> float:
    """Discrete L^p norm with volume weight h^n; pointwise modulus is Euclidean over components."""
    if not (p >= 1 or p == np.inf):
        raise ValueError("p must be >= 1")
    return lp_of_density(np.sqrt(f.modulus2()), f.grid, p, window)


# ---------------------------------------------------------------------------
# elementary inequalities as measured functionals

@dataclass
class PoincareReport:
    lhs: list
    rhs: float
    ratio: float
    flagged: bool = False


def _grad_norm_on(values, grid, mask, order, scheme):
    tot = 0.0
    for a in multi_indices(grid.n, order):
        d = derivative_values(values, grid, a, scheme)
        tot += float(np.sum(np.abs(d[..., mask]) ** 2))
    return math.sqrt(grid.cell_volume * tot)


def poincare_check(f: Field, m: int, ball: Ball, scheme: str = "spectral") -> PoincareReport:
    """Scaled Poincare quotient sum_k r^(k-m) ||nabla^k (f - P)||_B / ||nabla^m f||_B.

    P is the flat L2(B) projection of f onto polynomials of degree < m.
    """
    grid = f.grid
    mask = ball.mask()
    offs = ball.offsets()
    proj = polynomials.ProjectionOperator(offs, ball.radius, m - 1)
    r = ball.radius
    vals = f.values[:, mask]
    coef = proj.coefficients(vals)
    lhs = []
    for k in range(m + 1):
        tot = 0.0
        for a in multi_indices(grid.n, k):
            df = derivative_values(f.values, grid, a, scheme)[:, mask]
            dP = coef @ polynomials.derivative_matrix(proj.scaled, proj.exps, a, r).T
            tot += float(np.sum(np.abs(df - dP) ** 2))
        lhs.append(r ** (k - m) * math.sqrt(grid.cell_volume * tot))
    rhs = lhs[m]  # P has degree < m, so nabla^m (f - P) = nabla^m f
    scale = r ** (-m) * math.sqrt(grid.cell_volume * float(np.sum(np.abs(vals) ** 2)))
    tiny = 1e-9 * max(scale, np.finfo(float).tiny)
    if rhs <= tiny:
        if sum(lhs) <= tiny * (m + 1):
            return PoincareReport(lhs, rhs, 0.0)
        return PoincareReport(lhs, rhs, math.inf, flagged=True)
    return PoincareReport(lhs, rhs, sum(lhs) / rhs)


@dataclass
class GNReport:
    q: float
    theta: float
    lhs: float
    rhs: float
    ratio: float


def gn_check(f: Field, m: int, k: int, p: float, r: float, scheme: str = "spectral") -> GNReport:
    """Gagliardo-Nirenberg quotient with theta = k/m, 1/q = (k/m)/p + ((m-k)/m)/r.

    The left side is the largest ||d^gamma f||_q over |gamma| = k.
    """
    if not 0 <= k <= m:
        raise ValueError("need 0 <= k <= m")
    theta = k / m
    inv_q = theta / p + (1 - theta) / r
    q = np.inf if inv_q == 0 else 1.0 / inv_q
    grid = f.grid
    lhs = max(lp_of_density(np.sqrt(np.sum(np.abs(derivative_values(f.values, grid, g, scheme)) ** 2,
                                           axis=0)), grid, q)
              for g in multi_indices(grid.n, k))
    gm = sum(np.abs(derivative_values(f.values, grid, a, scheme)) ** 2
             for a in multi_indices(grid.n, m)).sum(axis=0)
    top = lp_of_density(np.sqrt(gm), grid, p)
    rhs = (top ** theta if theta > 0 else 1.0) * lp_norm(f, r) ** (1 - theta)
    if rhs == 0:
        return GNReport(q, theta, lhs, rhs, 0.0 if lhs == 0 else math.inf)
    return GNReport(q, theta, lhs, rhs, lhs / rhs)
