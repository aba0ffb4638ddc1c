"""Coefficient matrices A(t, x) of order-2m divergence-form systems.

Entries are stored as an array of shape ``(T, NM, NM, *space)`` where ``T`` is the number of
time pieces (1 when autonomous) and the spatial axes have length 1 for spatially constant
coefficients. Rows are indexed by (alpha, i) and columns by (beta, j), alpha major, with the
multi-indices in the order of :func:`tentlab.grid.multi_indices`.

For ``L = (-1)^m div_m A grad^m`` the Fourier symbol is
``sigma(xi) = sum_{alpha, beta} a_{alpha beta} xi^(alpha + beta)``: the factors ``(-1)^m`` and
``i^(2m)`` cancel.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace

import numpy as np

from .grid import Grid, multi_indices

TIME_STRUCTURES = ("autonomous", "piecewise_constant", "bv")


@dataclass(frozen=True, eq=False)
class CoefficientField:
    grid: Grid
    m: int
    N: int
    times: tuple
    entries: np.ndarray
    lam: float
    Lam: float
    autonomous: bool
    pointwise_elliptic: bool
    constant_in_space: bool
    name: str = "custom"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=np.complex128)
        NM = self.N * len(multi_indices(self.grid.n, self.m))
        if e.ndim != 3 + self.grid.n or e.shape[1:3] != (NM, NM):
            raise ValueError(f"entries must have shape (T, {NM}, {NM}, *space), got {e.shape}")
        if self.autonomous and e.shape[0] != 1:
            raise ValueError("autonomous field must have a single time piece")
        if not self.autonomous and len(self.times) != e.shape[0]:
            raise ValueError("one start time per time piece required")
        if not np.all(np.isfinite(e)):
            raise ValueError("non-finite coefficients")
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    @property
    def M(self) -> int:
        return len(multi_indices(self.grid.n, self.m))

    @property
    def size(self) -> int:
        return self.N * self.M

    def piece_index(self, t: float) -> int:
        if self.autonomous:
            return 0
        k = int(np.searchsorted(np.asarray(self.times), t, side="right")) - 1
        return min(max(k, 0), len(self.times) - 1)

    def at(self, t: float = 0.0) -> np.ndarray:
        """Matrix field at time t, shape ``(NM, NM, *space)`` (space axes may be length 1)."""
        return self.entries[self.piece_index(t)]

    def mean_matrix(self, t: float = 0.0) -> np.ndarray:
        """Spatial average of A(t, .)."""
        a = self.at(t)
        return a.reshape(a.shape[:2] + (-1,)).mean(axis=-1)

    def time_reversed_adjoint(self, T: float) -> "CoefficientField":
        """Coefficients sigma -> A(T - sigma)^* for the backward equation on [0, T]."""
        adj = np.conj(np.swapaxes(self.entries, 1, 2))
        if self.autonomous:
            return replace(self, entries=adj, name=self.name + "*")
        starts = np.asarray(self.times)
        ends = np.append(starts[1:], np.inf)
        keep = [k for k in range(len(starts)) if starts[k] < T]
        new_times = [max(T - ends[k], 0.0) for k in reversed(keep)]
        new_entries = [adj[k] for k in reversed(keep)]
        return replace(self, times=tuple(new_times), entries=np.stack(new_entries),
                       name=self.name + "*")


@dataclass
class EllipticityReport:
    lambda_est: float
    Lambda_est: float
    method: str
    worst_site: tuple


# ---------------------------------------------------------------------------
# constructors

def polyharmonic_matrix(n: int, m: int, N: int = 1) -> np.ndarray:
    """Diagonal matrix diag(m!/alpha!) (x) I_N, whose symbol is |xi|^(2m) I_N."""
    w = [math.factorial(m) / math.prod(math.factorial(a) for a in alpha)
         for alpha in multi_indices(n, m)]
    return np.kron(np.diag(w), np.eye(N)).astype(np.complex128)


def _max_entry(e: np.ndarray) -> float:
    return float(np.max(np.abs(e)))


def _min_herm_eig(e: np.ndarray) -> float:
    """Smallest eigenvalue of the Hermitian part over all (piece, site)."""
    a = np.moveaxis(e.reshape(e.shape[:3] + (-1,)), 3, 1)  # (T, S, NM, NM)
    h = 0.5 * (a + np.conj(np.swapaxes(a, -1, -2)))
    return float(np.linalg.eigvalsh(h).min())


def make_constant(A0, grid: Grid, m: int, N: int = 1, name: str = "constant") -> CoefficientField:
    """Autonomous, spatially constant coefficients."""
    A0 = np.asarray(A0, dtype=np.complex128)
    NM = N * len(multi_indices(grid.n, m))
    if A0.ndim == 0:
        A0 = A0 * np.eye(NM)
    if A0.shape != (NM, NM):
        raise ValueError(f"A0 must be {NM}x{NM}")
    if not np.all(np.isfinite(A0)):
        raise ValueError("non-finite coefficients")
    entries = A0.reshape((1, NM, NM) + (1,) * grid.n)
    pw = _min_herm_eig(entries)
    field_ = CoefficientField(grid, m, N, (), entries, lam=0.0, Lam=_max_entry(A0),
                              autonomous=True, pointwise_elliptic=pw > 0,
                              constant_in_space=True, name=name)
    lam = symbol_garding_constant(field_)[0]
    return replace(field_, lam=lam)


def polyharmonic(grid: Grid, m: int, N: int = 1) -> CoefficientField:
    return make_constant(polyharmonic_matrix(grid.n, m, N), grid, m, N, name="polyharmonic")


def _cell_rng(seed: int, cell, piece: int, salt: int = 0) -> np.random.Generator:
    # counter-based stream per (cell, piece); draws only advance counter word 0
    mask = 0xFFFFFFFFFFFFFFFF
    c = [int(v) & mask for v in (tuple(cell) + (0, 0))[:2]]
    key = np.array([int(seed) & mask, salt], dtype=np.uint64)
    counter = np.array([0, c[0], c[1], int(piece) & mask], dtype=np.uint64)
    bg = np.random.Philox(key=key, counter=counter)
    return np.random.Generator(bg)


def _random_unitary(rng, k: int, real: bool) -> np.ndarray:
    z = rng.standard_normal((k, k))
    if not real:
        z = z + 1j * rng.standard_normal((k, k))
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def _cell_index(grid: Grid, cell_length: float) -> list[np.ndarray]:
    return [np.floor(x.ravel() / cell_length + 1e-9).astype(np.int64) for x in grid.coords()]


def _draw_field(grid, NM, cell_length, draw):
    """Evaluate `draw(cell) -> (NM, NM)` on every cell and spread over the grid."""
    idx = _cell_index(grid, cell_length)
    out = np.empty((NM, NM) + grid.shape, dtype=np.complex128)
    if grid.n == 1:
        cache = {}
        for p, c in enumerate(idx[0]):
            if c not in cache:
                cache[c] = draw((int(c),))
            out[:, :, p] = cache[c]
    else:
        cache = {}
        for p, c0 in enumerate(idx[0]):
            for q, c1 in enumerate(idx[1]):
                key = (int(c0), int(c1))
                if key not in cache:
                    cache[key] = draw(key)
                out[:, :, p, q] = cache[key]
    return out


def _rough_cell(rng, NM, contrast, real):
    """I + (kappa - 1) W diag(u e^{i phi}) W^*: Hermitian part >= I, entries <= kappa."""
    W = _random_unitary(rng, NM, real) if NM > 1 else np.ones((1, 1))
    u = rng.uniform(0.0, 1.0, NM)
    phi = np.zeros(NM) if real else rng.uniform(-np.pi / 2, np.pi / 2, NM)
    B = (W * (u * np.exp(1j * phi))) @ np.conj(W.T)
    return np.eye(NM) + (contrast - 1.0) * B


def make_rough(seed: int, contrast: float, grid: Grid, m: int, N: int = 1,
               time_structure: str = "autonomous", pieces: int = 4, variation: float = 0.0,
               horizon: float = 1.0, cell_length: float = 0.25, real: bool = False,
               ) -> CoefficientField:
    """Random pointwise-elliptic coefficients, piecewise constant on cells of `cell_length`.

    Every cell carries ``I + (kappa - 1) B`` with ``B`` normal, ``Re B >= 0`` and ``|B_ij| <= 1``,
    so the Hermitian part is bounded below by 1 and every entry by `contrast`. Cells are indexed
    by their integer position relative to the origin and drawn from a counter-based stream, so a
    larger box contains the smaller box's field.

    time_structure:
      ``autonomous``; ``piecewise_constant`` with `pieces` independent draws over
      ``[0, horizon)``; ``bv``: convex combinations of two draws along a path of total
      variation at most `variation` (sup norm).
    """
    if contrast < 1:
        raise ValueError("contrast must be >= 1")
    if time_structure not in TIME_STRUCTURES:
        raise ValueError(f"unknown time structure {time_structure!r}")
    NM = N * len(multi_indices(grid.n, m))

    def draw_piece(piece, salt=0):
        return _draw_field(grid, NM, cell_length,
                           lambda c: _rough_cell(_cell_rng(seed, c, piece, salt), NM, contrast, real))

    meta = dict(seed=seed, contrast=contrast, cell_length=cell_length, real=real,
                time_structure=time_structure)
    common = dict(lam=1.0, Lam=float(contrast), pointwise_elliptic=True, constant_in_space=False)
    if time_structure == "bv" and variation == 0:
        time_structure = "autonomous"
    if time_structure == "autonomous":
        e = draw_piece(0)[None]
        return CoefficientField(grid, m, N, (), e, autonomous=True, name="rough", meta=meta,
                                **common)
    starts = tuple(horizon * k / pieces for k in range(pieces))
    if time_structure == "piecewise_constant":
        e = np.stack([draw_piece(k) for k in range(pieces)])
        return CoefficientField(grid, m, N, starts, e, autonomous=False, name="rough", meta=meta,
                                **common)
    A0, A1 = draw_piece(0, salt=1), draw_piece(0, salt=2)
    delta = _max_entry(A1 - A0)
    steps = variation / delta / max(pieces - 1, 1) if delta > 0 else 0.0
    c = steps * np.arange(pieces)
    w = 1.0 - np.abs(np.mod(c, 2.0) - 1.0)  # triangle wave in [0, 1]
    e = np.stack([(1 - wk) * A0 + wk * A1 for wk in w])
    meta.update(variation=variation, pieces=pieces)
    return CoefficientField(grid, m, N, starts, e, autonomous=False, name="bv", meta=meta, **common)


def total_variation(A: CoefficientField) -> float:
    """Sum of sup-norm jumps between consecutive time pieces."""
    e = A.entries
    return float(sum(_max_entry(e[k + 1] - e[k]) for k in range(e.shape[0] - 1)))


def make_perturbation(base: CoefficientField, eps: float, seed: int, pieces: int = 4,
                      horizon: float = 1.0, cell_length: float = 0.25) -> CoefficientField:
    """A(t, x) = base(x) + eps B(t, x) with the spectral norm of B(t, x) at most 1."""
    if not base.autonomous:
        raise ValueError("base must be autonomous")
    if eps == 0:
        return base
    if eps >= base.lam:
        raise ValueError("ellipticity lost: eps must be below the base Garding constant")
    grid, NM = base.grid, base.size

    def cell(c, piece):
        rng = _cell_rng(seed, c, piece, salt=7)
        W = _random_unitary(rng, NM, False)
        V = _random_unitary(rng, NM, False)
        s = rng.uniform(0.0, 1.0, NM) * np.exp(1j * rng.uniform(-np.pi, np.pi, NM))
        return (W * s) @ np.conj(V.T)

    B = np.stack([_draw_field(grid, NM, cell_length, lambda c, k=k: cell(c, k))
                  for k in range(pieces)])
    e = base.entries + eps * B
    opnorm = _max_opnorm(e - base.entries)
    if opnorm > eps * (1 + 1e-12):
        raise AssertionError("perturbation exceeds eps")
    starts = tuple(horizon * k / pieces for k in range(pieces))
    pw = base.pointwise_elliptic and _min_herm_eig(base.entries) > eps
    return CoefficientField(grid, base.m, base.N, starts, e, lam=base.lam - eps,
                            Lam=_max_entry(e), autonomous=False, pointwise_elliptic=pw,
                            constant_in_space=False, name="perturb",
                            meta=dict(base=base.name, eps=eps, seed=seed))


def _max_opnorm(e: np.ndarray) -> float:
    a = np.moveaxis(e.reshape(e.shape[:3] + (-1,)), 3, 1)
    return float(np.linalg.norm(a, ord=2, axis=(-2, -1)).max())


# ---------------------------------------------------------------------------
# symbols and ellipticity

def symbol_vectors(grid: Grid, m: int) -> np.ndarray:
    """xi^alpha for |alpha| = m, shape (M, *space)."""
    ks = grid.wavenumbers()
    out = []
    for a in multi_indices(grid.n, m):
        v = np.ones(grid.shape)
        for k, e in zip(ks, a):
            v = v * k ** e
        out.append(v)
    return np.stack(out)


def symbol(A: CoefficientField, matrix: np.ndarray | None = None) -> np.ndarray:
    """N x N symbol sigma(xi) of a constant matrix at every grid frequency, shape (*space, N, N)."""
    if matrix is None:
        if not A.constant_in_space:
            raise ValueError("symbol needs constant-in-space coefficients or an explicit matrix")
        matrix = A.mean_matrix()
    N, M = A.N, A.M
    v = symbol_vectors(A.grid, A.m)  # (M, *space)
    a = matrix.reshape(M, N, M, N)
    sig = np.einsum("a...,aibj,b...->...ij", v, a, v)
    return sig


def symbol_garding_constant(A: CoefficientField) -> tuple[float, tuple]:
    sig = symbol(A)
    h = 0.5 * (sig + np.conj(np.swapaxes(sig, -1, -2)))
    ev = np.linalg.eigvalsh(h)[..., 0]
    xi2m = A.grid.freq_norm2() ** A.m
    nz = xi2m > 0
    ratio = np.where(nz, ev / np.where(nz, xi2m, 1.0), np.inf)
    k = np.unravel_index(np.argmin(ratio), ratio.shape)
    xi = tuple(float(np.broadcast_to(w, A.grid.shape)[k]) for w in A.grid.wavenumbers())
    return float(ratio[k]), xi


def ellipticity_report(A: CoefficientField, method: str | None = None) -> EllipticityReport:
    """Estimate the ellipticity constants.

    ``pointwise_eig``: smallest eigenvalue of (A + A^*)/2 over all (t, x).
    ``fourier_symbol`` (constant coefficients): min over grid xi != 0 of the smallest eigenvalue
    of the Hermitian part of sigma(xi) / |xi|^(2m).
    """
    if method is None:
        method = "fourier_symbol" if (A.constant_in_space and A.autonomous) else "pointwise_eig"
    Lam = _max_entry(A.entries)
    if method == "fourier_symbol":
        lam, xi = symbol_garding_constant(A)
        return EllipticityReport(lam, max(Lam, lam), method, xi)
    if method != "pointwise_eig":
        raise ValueError(f"unknown method {method!r}")
    e = A.entries
    a = np.moveaxis(e.reshape(e.shape[:3] + (-1,)), 3, 1)
    h = 0.5 * (a + np.conj(np.swapaxes(a, -1, -2)))
    ev = np.linalg.eigvalsh(h)[..., 0]
    k, s = np.unravel_index(np.argmin(ev), ev.shape)
    space = e.shape[3:]
    site = np.unravel_index(s, space)
    if A.constant_in_space:
        x = tuple(0.0 for _ in space)
    else:
        x = tuple(float(A.grid.axis()[i]) for i in site)
    t = 0.0 if A.autonomous else float(A.times[k])
    return EllipticityReport(float(ev[k, s]), Lam, method, (t, x))


# ---------------------------------------------------------------------------
# named presets

_PRESET = re.compile(r"^\s*(\w+)\s*(?:\(([^)]*)\)|:(.*))?\s*$")


def parse_preset(spec: str) -> tuple[str, list[float]]:
    """Split ``rough(10,42)`` or ``rough:10:42`` into name and numeric arguments."""
    mt = _PRESET.match(spec)
    if not mt:
        raise ValueError(f"bad coefficient preset {spec!r}")
    name = mt.group(1)
    raw = mt.group(2) if mt.group(2) is not None else (mt.group(3) or "")
    sep = "," if mt.group(2) is not None else ":"
    args = [float(a) for a in raw.split(sep) if a.strip()]
    return name, args


def from_preset(spec: str, grid: Grid, m: int, N: int = 1, horizon: float = 1.0,
                real: bool = False) -> CoefficientField:
    """Build coefficients from ``polyharmonic``, ``heat``, ``rough(kappa,seed)``,
    ``bv(kappa,V,pieces,seed)``, ``pwc(kappa,pieces,seed)`` or ``perturb(eps,seed)``."""
    name, args = parse_preset(spec)
    if name in ("polyharmonic", "heat"):
        if name == "heat" and m != 1:
            raise ValueError("heat preset requires m = 1")
        return polyharmonic(grid, m, N)
    if name == "rough":
        kappa, seed = args[0], int(args[1]) if len(args) > 1 else 0
        return make_rough(seed, kappa, grid, m, N, real=real)
    if name == "pwc":
        kappa, pieces, seed = args[0], int(args[1]), int(args[2])
        return make_rough(seed, kappa, grid, m, N, "piecewise_constant", pieces=pieces,
                          horizon=horizon, real=real)
    if name == "bv":
        kappa, V, pieces, seed = args[0], args[1], int(args[2]), int(args[3])
        return make_rough(seed, kappa, grid, m, N, "bv", pieces=pieces, variation=V,
                          horizon=horizon, real=real)
    if name == "perturb":
        eps, seed = args[0], int(args[1]) if len(args) > 1 else 0
        return make_perturbation(polyharmonic(grid, m, N), eps, seed, horizon=horizon)
    raise ValueError(f"unknown coefficient preset {name!r}")
