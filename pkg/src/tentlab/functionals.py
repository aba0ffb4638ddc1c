"""Tent, non-tangential, Carleson and BMO-type functionals on grid trajectories.

Conventions used throughout:

* "Balls" contain the grid points with periodic distance ``< r`` from the center and
  averages are plain means over those points.
* Time integrals are left-endpoint Riemann sums on the trajectory's own time grid.
* Sups over balls run over the dyadic family ``r_j = 2^j h``, ``j = 2 .. log2(P/8)``, centered
  at every grid point.
* ``window`` restricts the final L^p (or sup) norm to ``|x| <= window``; ``None`` means the whole
  periodic box. Experiments pass the interior radius ``L/4``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import polynomials
from .grid import (Ball, Field, Grid, SpaceTimeField, ball_average, ball_stencil,
                   grad_m_values, lp_of_density, window_mask)


class UnresolvedError(ValueError):
    pass


@dataclass
class NormReport:
    name: str
    value: float
    p: float
    m: int
    grid: dict
    truncation: dict = field(default_factory=dict)
    timestamp: float = field(default_factory=time.time)

    def to_json(self) -> dict:
        p = self.p
        return {"name": self.name, "value": self.value,
                "p": "inf" if p == math.inf else p, "m": self.m,
                "grid": self.grid, "truncation": self.truncation}


def _grid_meta(g: Grid) -> dict:
    return {"n": g.n, "P": g.points, "L": g.box_length}


def ball_volume(n: int) -> float:
    """Volume of the unit ball in R^n."""
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


class DyadicBallFamily:
    """Radii ``2^j h`` for ``j = 2 .. log2(P/8)``, centered at every grid point.

    An optional `rmax` drops the radii above it (the truncation is recorded in norm reports).
    """

    def __init__(self, grid: Grid, rmax: float | None = None):
        self.grid = grid
        jmax = int(math.log2(grid.points // 8))
        self.radii = [2.0 ** j * grid.spacing for j in range(2, jmax + 1)
                      if rmax is None or 2.0 ** j * grid.spacing <= rmax * (1 + 1e-12)]
        if not self.radii:
            raise UnresolvedError("grid too coarse for a dyadic ball family")

    def __iter__(self):
        return iter(self.radii)

    def __len__(self):
        return len(self.radii)


def gradient_trajectory(u: SpaceTimeField, m: int) -> SpaceTimeField:
    """The M*N component trajectory nabla^m u (spectral derivatives)."""
    return SpaceTimeField(u.grid, u.times, grad_m_values(u.values, u.grid, m))


def _left_weights(times: np.ndarray) -> np.ndarray:
    """Left-endpoint Riemann weights: dt_k = t_{k+1} - t_k, the last slice gets none."""
    w = np.zeros(times.size)
    w[:-1] = np.diff(times)
    return w


def _check_start(times):
    if times.size < 2:
        raise UnresolvedError("trajectory needs at least two time slices")
    if times[0] > 4 * (times[1] - times[0]):
        raise UnresolvedError(f"trajectory starts at t0={times[0]:g}, later than 4 dt")


# ---------------------------------------------------------------------------
# tent and non-tangential norms

def square_function(F: SpaceTimeField, m: int) -> tuple[np.ndarray, dict]:
    """A(x) = (sum_k dt_k mean_{B(x, t_k^(1/2m))} |F(t_k)|^2)^(1/2) and truncation data."""
    g = F.grid
    times = F.times
    _check_start(times)
    w = _left_weights(times)
    cap = g.interior_radius()
    radii = np.minimum(times ** (1.0 / (2 * m)), cap)
    live = w > 0
    acc = np.zeros(g.shape)
    dens = F.modulus2()
    for r in np.unique(radii[live]):
        ks = np.flatnonzero(live & (radii == r))
        slab = np.tensordot(w[ks], dens[ks], axes=1)
        acc += ball_average(slab, g, r)
    trunc = {
        "rmin": float(radii[live].min()), "rmax": float(radii[live].max()),
        "unresolved_slices": int(np.count_nonzero(live & (radii < g.spacing))),
        "capped_slices": int(np.count_nonzero(live & (times ** (1.0 / (2 * m)) > cap))),
    }
    return np.sqrt(acc), trunc


def carleson_profile(F: SpaceTimeField, m: int, family: DyadicBallFamily | None = None):
    """For each family radius r: the field x -> int_0^{r^2m} mean_{B(x,r)} |F|^2 ds."""
    g = F.grid
    family = family or DyadicBallFamily(g)
    times = F.times
    _check_start(times)
    dens = F.modulus2()
    out = []
    for r in family:
        top = r ** (2 * m)
        w = np.zeros(times.size)
        w[:-1] = np.clip(np.minimum(times[1:], top) - times[:-1], 0.0, None)
        ks = np.flatnonzero(w > 0)
        slab = np.tensordot(w[ks], dens[ks], axes=1) if ks.size else np.zeros(g.shape)
        out.append(ball_average(slab, g, r))
    covered = times[-1] >= family.radii[-1] ** (2 * m)
    return family, out, covered


def tent_norm(F: SpaceTimeField, p: float, m: int, window: float | None = None,
              rmax: float | None = None) -> NormReport:
    """Parabolic tent norm of a trajectory F (typically nabla^m u).

    For finite p the L^p norm of the square function; for ``p = inf`` the Carleson-type sup
    over the dyadic family of (int_0^{r^2m} mean_B |F|^2)^(1/2).
    """
    g = F.grid
    if p == math.inf:
        family, prof, covered = carleson_profile(F, m, DyadicBallFamily(g, rmax))
        mask = window_mask(g, window)
        best = max(float(a[mask].max()) for a in prof)
        trunc = {"rmin": family.radii[0], "rmax": family.radii[-1], "window": window,
                 "time_covered": bool(covered)}
        return NormReport("tent", math.sqrt(best), p, m, _grid_meta(g), trunc)
    if not p > 0:
        raise ValueError("p must be positive")
    A, trunc = square_function(F, m)
    trunc["window"] = window
    return NormReport("tent", lp_of_density(A, g, p, window), p, m, _grid_meta(g), trunc)


def direct_l2(F: SpaceTimeField, window: float | None = None) -> float:
    """Space-time L^2 norm with the same left-endpoint time quadrature."""
    w = _left_weights(F.times)
    dens = np.tensordot(w, F.modulus2(), axes=1)
    mask = window_mask(F.grid, window)
    return math.sqrt(F.grid.cell_volume * float(np.sum(dens[mask])))


def nontangential_function(u: SpaceTimeField, m: int) -> tuple[np.ndarray, dict]:
    """N(x) = max over dyadic delta of (mean_{(delta/2, delta)} mean_{B(x, delta^(1/2m))} |u|^2)^(1/2).

    delta runs over T 2^-j, as long as the window (delta/2, delta] holds a time node.
    """
    g = u.grid
    times = u.times
    _check_start(times)
    w = _left_weights(times)
    dens = u.modulus2()
    T = times[-1]
    cap = g.interior_radius()
    best = np.zeros(g.shape)
    deltas = []
    delta = T
    while True:
        sel = np.flatnonzero((times >= delta / 2) & (times < delta) & (w > 0))
        if sel.size == 0:
            break
        ww = np.minimum(times[sel + 1], delta) - times[sel]
        slab = np.tensordot(ww / ww.sum(), dens[sel], axes=1)
        r = min(delta ** (1.0 / (2 * m)), cap)
        np.maximum(best, ball_average(slab, g, r), out=best)
        deltas.append(delta)
        delta /= 2
    if not deltas:
        raise UnresolvedError("no dyadic time window contains a node")
    trunc = {"delta_min": deltas[-1], "delta_max": deltas[0],
             "rmin": min(deltas[-1] ** (1 / (2 * m)), cap),
             "rmax": min(deltas[0] ** (1 / (2 * m)), cap)}
    return np.sqrt(best), trunc


def nontangential_norm(u: SpaceTimeField, p: float, m: int,
                       window: float | None = None) -> NormReport:
    """L^p norm of the Kenig-Pipher type non-tangential function."""
    N, trunc = nontangential_function(u, m)
    trunc["window"] = window
    return NormReport("nontangential", lp_of_density(N, u.grid, p, window), p, m,
                      _grid_meta(u.grid), trunc)


def carleson_norm(u: SpaceTimeField, m: int, window: float | None = None,
                  rmax: float | None = None) -> NormReport:
    """sup_B r^(-n) (1/2m) int_0^{r^2m} int_B |nabla^m u|^2 with |B| = v_n r^n."""
    F = gradient_trajectory(u, m)
    rep = tent_norm(F, math.inf, m, window, rmax)
    val = ball_volume(u.grid.n) / (2 * m) * rep.value ** 2
    return NormReport("carleson", val, math.inf, m, rep.grid, rep.truncation)


# ---------------------------------------------------------------------------
# polynomial projections and sharp functions

@dataclass
class PolyProjection:
    """P(x) = sum_a c_a ((x - x0)/r)^a fitted on a ball; ``coeffs`` has shape (N, basis)."""
    ball: Ball
    degree: int
    coeffs: np.ndarray
    weight: str
    exps: list
    operator: polynomials.ProjectionOperator = field(repr=False)

    def evaluate(self, grid: Grid | None = None) -> np.ndarray:
        """Values of P at every grid point, shape (N, *space), using periodic offsets."""
        grid = grid or self.ball.grid
        L = grid.box_length
        offs = [np.mod(x - c + L / 2, L) - L / 2
                for x, c in zip(np.broadcast_arrays(*grid.coords()), self.ball.center)]
        y = np.stack([o.ravel() for o in offs], axis=1) / self.ball.radius
        V = polynomials.vandermonde(y, self.exps)
        return (self.coeffs @ V.T).reshape((-1,) + grid.shape)


def _stencil_indices(grid: Grid, radius: float):
    """Integer offsets and physical offsets of the ball stencil {|z| < r}."""
    st = ball_stencil(grid, radius)
    idx = np.argwhere(st)
    P = grid.points
    signed = np.where(idx > P // 2, idx - P, idx)
    return signed, signed * grid.spacing


def poly_project(f: Field, ball: Ball, m: int, weight: str = "flat") -> PolyProjection:
    """Weighted least-squares projection of f|_B onto polynomials of degree <= m - 1."""
    op = polynomials.ProjectionOperator(ball.offsets(), ball.radius, m - 1, weight)
    vals = f.values[(slice(None),) + tuple(np.nonzero(ball.mask()))]
    return PolyProjection(ball, m - 1, op.coefficients(vals), weight, op.exps, op)


_OP_CACHE: dict = {}


def _operator(grid: Grid, radius: float, degree: int):
    key = (grid, radius, degree)
    if key not in _OP_CACHE:
        ints, offs = _stencil_indices(grid, radius)
        if len(_OP_CACHE) > 64:
            _OP_CACHE.clear()
        _OP_CACHE[key] = (ints, polynomials.ProjectionOperator(offs, radius, degree))
    return _OP_CACHE[key]


def _gather(values: np.ndarray, grid: Grid, ints: np.ndarray) -> np.ndarray:
    """values[..., x + z] for every center x and stencil offset z: shape (..., npts, *space)."""
    P = grid.points
    n = grid.n
    base = np.indices(grid.shape)
    idx = [(base[d][None] + ints[:, d].reshape((-1,) + (1,) * n)) % P for d in range(n)]
    return values[(Ellipsis,) + tuple(idx)]


def oscillation(f: Field, m: int, radius: float) -> np.ndarray:
    """x -> (mean_{B(x,r)} |f - P_{x,r} f|^2)^(1/2), with P of degree m - 1."""
    ints, op = _operator(f.grid, radius, m - 1)
    samples = _gather(f.values, f.grid, ints)            # (N, npts, *space)
    s = np.moveaxis(samples, 1, -1)                      # (N, *space, npts)
    res = op.residual(s)
    return np.sqrt(np.sum(np.mean(res.real ** 2 + res.imag ** 2, axis=-1), axis=0))


def projection_radii(grid: Grid, m: int, family: DyadicBallFamily | None = None) -> list:
    """Family radii whose balls hold at least 4x the basis size of P_{m-1}."""
    family = family or DyadicBallFamily(grid)
    need = 4 * polynomials.dimension(grid.n, m - 1)
    return [r for r in family if np.count_nonzero(ball_stencil(grid, r)) >= need]


def sharp_m(f: Field, m: int, family: DyadicBallFamily | None = None) -> Field:
    """Polynomial sharp function: max over family balls containing x of the oscillation.

    Radii too small to carry the projection (see :func:`projection_radii`) are skipped.
    """
    g = f.grid
    out = np.zeros(g.shape)
    for r in projection_radii(g, m, family):
        osc = oscillation(f, m, r)
        ints, _ = _stencil_indices(g, r)
        # B(c, r) contains x iff |x - c| < r, so spread each center over its own stencil
        np.maximum(out, _gather(osc, g, ints).max(axis=0), out=out)
    return Field(g, out[None].astype(complex))


def _sharp_report(name, f, m, p, window, rmax=None):
    family = DyadicBallFamily(f.grid, rmax)
    s = sharp_m(f, m, family)
    radii = projection_radii(f.grid, m, family)
    val = lp_of_density(s.values[0].real, f.grid, p, window)
    return NormReport(name, val, p, m, _grid_meta(f.grid),
                      {"rmin": radii[0], "rmax": radii[-1], "window": window})


def bmo_m_norm(f: Field, m: int, window: float | None = None,
               rmax: float | None = None) -> NormReport:
    return _sharp_report("bmo_m", f, m, math.inf, window, rmax)


def lp_m_norm(f: Field, m: int, p: float, window: float | None = None,
              rmax: float | None = None) -> NormReport:
    return _sharp_report("lp_m", f, m, p, window, rmax)


def bmo_norm(f: Field, window: float | None = None, rmax: float | None = None) -> NormReport:
    """Classical BMO seminorm (projection onto constants)."""
    return _sharp_report("bmo", f, 1, math.inf, window, rmax)


def filter_polynomial(f: Field, m: int, radius: float | None = None,
                      weight: str = "flat") -> tuple[PolyProjection, Field]:
    """Fit P of degree m - 1 on the ball B(0, radius) (default L/4) and return (P, f - P)."""
    g = f.grid
    ball = Ball((0.0,) * g.n, radius or g.interior_radius(), g)
    proj = poly_project(f, ball, m, weight)
    return proj, Field(g, f.values - proj.evaluate())
