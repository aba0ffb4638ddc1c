"""Non-autonomous propagators Gamma(t, s) for du/dt = -L(t) u, L = (-1)^m div_m A grad^m.

Space is discretized by L_h = sum_{alpha, beta} (D^alpha)^* a_{alpha beta} D^beta, where D is
the spectral derivative and (D^alpha)^* its exact discrete adjoint. For pointwise elliptic A
this makes Re <L_h v, v> >= lambda ||D^m v||^2 literally true on the grid.

Time is discretized by the theta scheme with the coefficients sampled once per step, at the
step midpoint. The backward (adjoint) propagator therefore reuses the same samples with A
replaced by A^*, and is the exact discrete adjoint of the forward map for any theta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.sparse import linalg as spla

from .coeffs import CoefficientField, ellipticity_report, symbol
from .grid import Field, SpaceTimeField, lp_of_density, spectral_multiplier, multi_indices
from .semigroup import Semigroup


class LinearSolveError(RuntimeError):
    """Iterative solve did not reach the requested relative residual."""

    def __init__(self, residual: float, iterations: int, tol: float):
        super().__init__(f"linear solve stalled: relative residual {residual:.3e} > {tol:.1e} "
                         f"after {iterations} iterations")
        self.residual = residual
        self.iterations = iterations


class PicardDivergence(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    dt: float = 1e-3
    theta: float = 1.0
    tol_lin: float = 1e-10
    max_lin_iters: int = 500

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.theta not in (0.5, 1.0):
            raise ValueError("theta must be 1 (implicit Euler) or 1/2 (trapezoidal)")
        if not 0 < self.tol_lin <= 1e-6:
            raise ValueError("tol_lin must lie in (0, 1e-6]")


@dataclass
class SolveStats:
    steps: int = 0
    solves: int = 0
    iterations: int = 0
    max_residual: float = 0.0


class SpatialOperator:
    """L_h for one coefficient sample; `matrix` has shape (NM, NM, *space) (space may be 1s)."""

    def __init__(self, grid, m, N, matrix):
        self.grid, self.m, self.N = grid, m, N
        self.axes = tuple(range(-grid.n, 0))
        self.alphas = multi_indices(grid.n, m)
        self.mult = np.stack([spectral_multiplier(grid, a) for a in self.alphas])
        self.matrix = np.asarray(matrix)
        self.constant = all(s == 1 for s in self.matrix.shape[2:])

    def flux_hat(self, uh):
        """Fourier data of A D^m u, shape (M*N, *space), from uh of shape (N, *space)."""
        g = (self.mult[:, None] * uh[None]).reshape((-1,) + uh.shape[1:])
        if self.constant:
            a = self.matrix.reshape(self.matrix.shape[:2])
            return np.tensordot(a, g, axes=(1, 0))
        G = np.fft.ifftn(g, axes=self.axes)
        flux = np.einsum("ij...,j...->i...", self.matrix, G)
        return np.fft.fftn(flux, axes=self.axes)

    def div_hat(self, fh):
        """(D^m)^* applied to Fourier flux data of shape (M*N, *space)."""
        fh = fh.reshape((len(self.alphas), self.N) + fh.shape[1:])
        return np.sum(np.conj(self.mult)[:, None] * fh, axis=0)

    def apply_hat(self, uh):
        return self.div_hat(self.flux_hat(uh))

    def apply(self, u):
        return np.fft.ifftn(self.apply_hat(np.fft.fftn(u, axes=self.axes)), axes=self.axes)


def _solve_fourier(I_plus, rhs_hat):
    """Solve (I + c sigma) x = rhs per frequency; I_plus is (*space) or (*space, N, N)."""
    if I_plus.ndim == rhs_hat.ndim - 1:
        return rhs_hat / I_plus
    r = np.moveaxis(rhs_hat, 0, -1)[..., None]
    x = np.linalg.solve(I_plus, r)[..., 0]
    return np.moveaxis(x, -1, 0)


class Propagator:
    """Evaluator of Gamma(t, s) for a coefficient field and a solver configuration."""

    def __init__(self, coeffs: CoefficientField, config: SolverConfig | None = None):
        self.coeffs = coeffs
        self.config = config or SolverConfig()
        if not (coeffs.pointwise_elliptic or coeffs.constant_in_space):
            raise ValueError("variable coefficients must be pointwise elliptic")
        rep = ellipticity_report(coeffs)
        if not rep.lambda_est > 0:
            raise ValueError("coefficients are not elliptic")
        self.report = rep
        self.grid = coeffs.grid
        self.axes = tuple(range(-self.grid.n, 0))
        self.stats = SolveStats()
        self._ops = {}
        self._sym = {}

    # -- building blocks -------------------------------------------------------------------

    def operator(self, t: float, adjoint: bool = False) -> SpatialOperator:
        key = (self.coeffs.piece_index(t), adjoint)
        if key not in self._ops:
            a = self.coeffs.at(t)
            if adjoint:
                a = np.conj(np.swapaxes(a, 0, 1))
            self._ops[key] = SpatialOperator(self.grid, self.coeffs.m, self.coeffs.N, a)
        return self._ops[key]

    def _symbol_of(self, t, adjoint):
        """Symbol of the spatial mean of A(t) (of A(t)^* when adjoint)."""
        key = (self.coeffs.piece_index(t), adjoint)
        if key not in self._sym:
            mean = self.coeffs.mean_matrix(t)
            if adjoint:
                mean = mean.conj().T
            sig = symbol(self.coeffs, mean)
            self._sym[key] = sig[..., 0, 0] if self.coeffs.N == 1 else sig
        return self._sym[key]

    def _shifted(self, t, adjoint, c):
        sig = self._symbol_of(t, adjoint)
        if sig.ndim == self.grid.n:
            return 1.0 + c * sig
        return np.eye(self.coeffs.N) + c * sig

    def _implicit_solve(self, op, uh_rhs, t, adjoint, c):
        """Solve (I + c L_h) x = rhs for Fourier data, to relative residual tol_lin."""
        cfg = self.config
        I_plus = self._shifted(t, adjoint, c)
        x0 = _solve_fourier(I_plus, uh_rhs)
        self.stats.solves += 1
        if op.constant:
            return x0
        shape = uh_rhs.shape
        bnorm = np.linalg.norm(uh_rhs)
        if bnorm == 0:
            return np.zeros_like(uh_rhs)

        def A(v):
            v = v.reshape(shape)
            return (v + c * op.apply_hat(v)).ravel()

        def resid(x):
            return np.linalg.norm(uh_rhs.ravel() - A(x.ravel())) / bnorm

        r0 = resid(x0)
        if r0 <= cfg.tol_lin:
            self.stats.max_residual = max(self.stats.max_residual, r0)
            return x0
        size = uh_rhs.size
        Aop = spla.LinearOperator((size, size), matvec=A, dtype=complex)
        Mop = spla.LinearOperator((size, size), dtype=complex,
                                  matvec=lambda v: _solve_fourier(I_plus, v.reshape(shape)).ravel())
        count = [0]

        def cb(_):
            count[0] += 1
        # iterate well below the contract so that errors do not pile up over many steps
        inner = max(cfg.tol_lin * 1e-2, 1e-14)
        x, info = spla.gmres(Aop, uh_rhs.ravel(), x0=x0.ravel(), rtol=inner, atol=0.0,
                             restart=60, maxiter=max(1, cfg.max_lin_iters // 60 + 1), M=Mop,
                             callback=cb, callback_type="pr_norm")
        r = resid(x)
        self.stats.iterations += count[0]
        self.stats.max_residual = max(self.stats.max_residual, r)
        if r > cfg.tol_lin:
            raise LinearSolveError(r, count[0], cfg.tol_lin)
        return x.reshape(shape)

    def _step_hat(self, uh, t_mid, dt, adjoint=False):
        theta = self.config.theta
        op = self.operator(t_mid, adjoint)
        rhs = uh if theta == 1.0 else uh - (1 - theta) * dt * op.apply_hat(uh)
        self.stats.steps += 1
        return self._implicit_solve(op, rhs, t_mid, adjoint, theta * dt)

    def time_grid(self, s: float, t: float) -> np.ndarray:
        """Uniform nodes s, s + dt, ...; a shorter last step absorbs a non-integer remainder."""
        if not 0 <= s <= t:
            raise ValueError("need 0 <= s <= t")
        dt = self.config.dt
        span = t - s
        K = int(round(span / dt))
        if abs(K * dt - span) > 1e-9 * max(dt, span):
            K = int(math.ceil(span / dt))
        nodes = s + dt * np.arange(K + 1)
        if K:
            nodes[-1] = t
        return nodes

    # -- public operations -----------------------------------------------------------------

    def step(self, u: Field, t: float, dt: float | None = None) -> Field:
        """One theta step from t to t + dt."""
        dt = self.config.dt if dt is None else dt
        uh = np.fft.fftn(u.values, axes=self.axes)
        out = self._step_hat(uh, t + dt / 2, dt)
        return Field(u.grid, np.fft.ifftn(out, axes=self.axes))

    def _run(self, s, t, values, adjoint, keep):
        nodes = self.time_grid(s, t)
        uh = np.fft.fftn(values, axes=self.axes)
        traj = [values] if keep else None
        steps = range(len(nodes) - 1)
        if adjoint:
            steps = reversed(steps)
        for k in steps:
            dt = nodes[k + 1] - nodes[k]
            uh = self._step_hat(uh, 0.5 * (nodes[k] + nodes[k + 1]), dt, adjoint)
            if keep:
                traj.append(np.fft.ifftn(uh, axes=self.axes))
        return nodes, traj, np.fft.ifftn(uh, axes=self.axes)

    def propagate(self, s: float, t: float, f: Field) -> SpaceTimeField:
        """Trajectory Gamma(t_k, s) f on the solver grid; the first slice is f itself."""
        nodes, traj, _ = self._run(s, t, f.values, False, True)
        return SpaceTimeField(f.grid, nodes, np.stack(traj))

    def evolve(self, s: float, t: float, f: Field) -> Field:
        """Gamma(t, s) f (final slice only)."""
        if s == t:
            return f
        return Field(f.grid, self._run(s, t, f.values, False, False)[2])

    def adjoint_propagate(self, s: float, t: float, g: Field) -> Field:
        """Gamma(t, s)^* g: the backward equation with coefficients A^*(t - sigma)."""
        if s == t:
            return g
        return Field(g.grid, self._run(s, t, g.values, True, False)[2])


# ---------------------------------------------------------------------------
# Duhamel representation against an autonomous reference

@dataclass
class PicardResult:
    value: Field
    factors: list
    increments: list
    trajectory: SpaceTimeField = field(repr=False, default=None)


def duhamel_picard(base: Semigroup, A: CoefficientField, f: Field, t: float, J: int = 8,
                   dt: float = 1e-3, quadrature: str = "midpoint") -> PicardResult:
    """Gamma(t, 0) f from u = e^{-tL0} f - int_0^t e^{-(t-s)L0} (L(s) - L0) u(s) ds.

    Picard iteration starting from u^0(s) = e^{-sL0} f. Each sweep evaluates the integral on a
    uniform grid, one panel at a time, with the perturbation frozen at the panel midpoint (the
    mean of the end values). ``quadrature="midpoint"`` weights a panel by
    dt e^{-(dt/2) L0}; ``"exponential"`` integrates the semigroup factor exactly,
    dt phi1(dt L0).
    """
    grid = f.grid
    axes = tuple(range(-grid.n, 0))
    K = max(1, int(round(t / dt)))
    h = t / K
    nodes = h * np.arange(K + 1)
    E = base.multiplier(h)
    if quadrature == "exponential":
        W = h * base.phi1(h)
    elif quadrature == "midpoint":
        W = h * base.multiplier(h / 2)
    else:
        raise ValueError(f"unknown quadrature {quadrature!r}")
    abar = base.coeffs.mean_matrix()
    ops = {}

    def perturbation(tm):
        key = A.piece_index(tm)
        if key not in ops:
            diff = A.at(tm) - abar.reshape(abar.shape + (1,) * grid.n)
            ops[key] = None if not np.any(diff) else SpatialOperator(grid, A.m, A.N, diff)
        return ops[key]

    # u^0 on the nodes
    fh = np.fft.fftn(f.values, axes=axes)
    free = [fh]
    for _ in range(K):
        free.append(base.apply_hat(E, free[-1]))
    U = free
    factors, incs = [], []
    for _ in range(J):
        new = [fh]
        for k in range(K):
            tm = 0.5 * (nodes[k] + nodes[k + 1])
            op = perturbation(tm)
            w = base.apply_hat(E, new[-1])
            if op is not None:
                g = op.apply_hat(0.5 * (U[k] + U[k + 1]))
                w = w - base.apply_hat(W, g)
            new.append(w)
        inc = float(np.linalg.norm(new[-1] - U[-1]) * math.sqrt(grid.cell_volume / grid.size))
        incs.append(inc)
        if len(incs) >= 2:
            factors.append(incs[-1] / incs[-2] if incs[-2] > 0 else 0.0)
            if len(factors) >= 2 and factors[-1] >= 1 and factors[-2] >= 1:
                raise PicardDivergence(
                    f"Picard divergence: contraction factors {factors[-2]:.3g}, {factors[-1]:.3g}")
        U = new
        if inc == 0.0:
            break
    vals = np.fft.ifftn(np.stack(U), axes=axes)
    traj = SpaceTimeField(grid, nodes, vals)
    return PicardResult(traj.slice(-1), factors, incs, traj)


# ---------------------------------------------------------------------------
# off-diagonal norms

@dataclass(frozen=True)
class Box:
    """Axis-aligned cube {|x_i - c_i| <= half_width} (periodic)."""
    center: tuple
    half_width: float

    def mask(self, grid) -> np.ndarray:
        L = grid.box_length
        out = np.ones(grid.shape, bool)
        for x, c in zip(grid.coords(), np.broadcast_to(self.center, (grid.n,))):
            out = out & (np.abs(np.mod(x - c + L / 2, L) - L / 2) <= self.half_width)
        return out

    def distance(self, other: "Box") -> float:
        gaps = [max(0.0, abs(a - b) - self.half_width - other.half_width)
                for a, b in zip(self.center, other.center)]
        return float(np.sqrt(np.sum(np.square(gaps))))


@dataclass
class OffDiagonalResult:
    value: float
    converged: bool
    achieved_tol: float
    iterations: int
    lp_value: float | None = None


def off_diagonal_norm(P, E: Box, F: Box, s: float, t: float, probes: int = 3,
                      seed: int = 0, max_iters: int = 60, tol: float = 1e-8,
                      p_out: float | None = None) -> OffDiagonalResult:
    """||1_E Gamma(t, s) 1_F||_{L^2 -> L^2} by power iteration on T^* T, T = 1_E Gamma 1_F.

    `P` is a Propagator or a Semigroup (then Gamma(t, s) = e^{-(t-s)L0}). With `p_out`, the
    maximizing vector x is also used to report ||T x||_{p_out} / ||x||_2, a lower bound for the
    L^2 -> L^p norm.
    """
    grid = P.grid
    mE, mF = E.mask(grid), F.mask(grid)
    if isinstance(P, Semigroup):
        fwd = lambda v: P.apply_values(t - s, v)
        adj_sg = Semigroup(replace(P.coeffs, entries=np.conj(np.swapaxes(P.coeffs.entries, 1, 2))))
        bwd = lambda v: adj_sg.apply_values(t - s, v)
    else:
        fwd = lambda v: P.evolve(s, t, Field(grid, v)).values
        bwd = lambda v: P.adjoint_propagate(s, t, Field(grid, v)).values
    N = P.coeffs.N
    rng = np.random.default_rng(seed)
    best = OffDiagonalResult(0.0, False, np.inf, 0)
    best_x = None
    norm = lambda v: float(np.linalg.norm(v))
    for _ in range(probes):
        x = (rng.standard_normal((N,) + grid.shape)
             + 1j * rng.standard_normal((N,) + grid.shape)) * mF
        x /= norm(x)
        est, conv, change, it = 0.0, False, np.inf, 0
        for it in range(1, max_iters + 1):
            y = fwd(x) * mE
            z = bwd(y) * mF
            new = math.sqrt(max(np.vdot(x, z).real, 0.0))
            zn = norm(z)
            if zn == 0:
                est, conv, change = 0.0, True, 0.0
                break
            x = z / zn
            change = abs(new - est) / max(new, 1e-300)
            est = new
            if change < tol:
                conv = True
                break
        if est >= best.value:
            best = OffDiagonalResult(est, conv, change, it)
            best_x = x
    if p_out is not None and best_x is not None:
        y = fwd(best_x) * mE
        best.lp_value = lp_of_density(np.sqrt(np.sum(np.abs(y) ** 2, axis=0)), grid, p_out) / \
            math.sqrt(grid.cell_volume)
    return best
