"""B-spline bases and the learnable per-edge activation phi(x) = w_b*silu(x) + w_s*spline(x)."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit

# Half-width of the fallback domain used when every grid-update sample is identical.
DEGENERATE_HALF_WIDTH = 0.1
GRID_MARGIN = 0.01


class InvalidInputError(ValueError):
    pass


def uniform_knots(num_intervals: int, degree: int, lo: float, hi: float) -> np.ndarray:
    """Extended uniform knot vector with ``degree`` extra knots on each side of [lo, hi]."""
    if num_intervals < 1 or degree < 0:
        raise InvalidInputError("need num_intervals >= 1 and degree >= 0")
    if not lo < hi:
        raise InvalidInputError(f"empty domain [{lo}, {hi}]")
    h = (hi - lo) / num_intervals
    k = np.arange(-degree, num_intervals + degree + 1)
    knots = lo + k * h
    # pin the interior endpoints so the domain is reproduced exactly
    knots[degree] = lo
    knots[degree + num_intervals] = hi
    return knots


@dataclass(frozen=True)
class SplineGrid:
    knots: np.ndarray
    num_intervals: int
    degree: int

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float)
        object.__setattr__(self, "knots", knots)
        expected = self.num_intervals + 2 * self.degree + 1
        if knots.shape != (expected,):
            raise InvalidInputError(f"expected {expected} knots, got {knots.shape}")
        if np.any(np.diff(knots) < 0) or not np.all(np.isfinite(knots)):
            raise InvalidInputError("knots must be finite and nondecreasing")
        if not self.domain_lo < self.domain_hi:
            raise InvalidInputError("degenerate interior domain")

    @classmethod
    def uniform(cls, num_intervals: int = 10, degree: int = 3, lo: float = -1.0, hi: float = 1.0) -> SplineGrid:
        return cls(uniform_knots(num_intervals, degree, lo, hi), num_intervals, degree)

    @property
    def domain_lo(self) -> float:
        return float(self.knots[self.degree])

    @property
    def domain_hi(self) -> float:
        return float(self.knots[self.degree + self.num_intervals])

    @property
    def num_basis(self) -> int:
        return self.num_intervals + self.degree


def bspline_basis(x: np.ndarray, knots: np.ndarray, degree: int, derivative: bool = False):
    """Cox-de Boor evaluation of every basis function at every ``x``.

    ``knots`` (last axis = knot index) must broadcast against ``x[..., None]``;
    the basis index lands on a new trailing axis of length ``T - degree - 1``.
    Basis functions vanish outside the extended knot span. With
    ``derivative=True`` a second array holds dB/dx.
    """
    x = np.asarray(x, dtype=float)[..., None]
    t = np.asarray(knots, dtype=float)
    B = ((x >= t[..., :-1]) & (x < t[..., 1:])).astype(float)
    if degree == 0:
        # close the last interval so the right domain endpoint is covered
        B[..., -1:] += x == t[..., -1:]
    prev = B
    for k in range(1, degree + 1):
        prev = B
        left = (x - t[..., : -(k + 1)]) / (t[..., k:-1] - t[..., : -(k + 1)]) * B[..., :-1]
        right = (t[..., k + 1 :] - x) / (t[..., k + 1 :] - t[..., 1:-k]) * B[..., 1:]
        B = left + right
    if not derivative:
        return B
    if degree == 0:
        return B, np.zeros_like(B)
    K = degree
    dB = K * (
        prev[..., :-1] / (t[..., K:-1] - t[..., : -(K + 1)])
        - prev[..., 1:] / (t[..., K + 1 :] - t[..., 1:-K])
    )
    return B, dB


def uniform_bspline_basis(x: np.ndarray, t0: np.ndarray, h: np.ndarray, num_basis: int, degree: int,
                          derivative: bool = False):
    """Basis on uniform knots ``t0 + k*h`` (k = 0..num_basis+degree), same layout as :func:`bspline_basis`.

    ``t0`` and ``h`` broadcast against ``x``. Only the ``degree + 1`` functions
    that can be nonzero are evaluated (local de Boor triangle, where the uniform
    spacing cancels) and then scattered into the dense output.
    """
    x = np.asarray(x, dtype=float)
    u = (x - t0) / h
    s = np.floor(u)
    f = u - s
    s = s.astype(np.int64)
    N = [np.ones_like(f)]
    lower = N
    for j in range(1, degree + 1):
        lower = N
        saved = np.zeros_like(f)
        new = []
        for r in range(j):
            temp = lower[r] / j
            new.append(saved + (r + 1 - f) * temp)
            saved = (f + j - r - 1) * temp
        new.append(saved)
        N = new
    # Column c = s + r of a padded buffer holds basis m = c - degree; points
    # outside the knot span write into spare columns past the end.
    K, M = degree, num_basis
    width = M + 3 * K + 1
    s = np.where((s >= 0) & (s < M + K), s, M + 2 * K)
    idx0 = (np.arange(x.size).reshape(x.shape) * width + s).ravel()

    def scatter(vals):
        buf = np.zeros(x.shape + (width,))
        out = buf.reshape(-1)
        for r, v in enumerate(vals):
            out[idx0 + r] = v.ravel()
        return buf[..., K : K + M]

    B = scatter(N)
    if not derivative:
        return B
    if degree == 0:
        return B, np.zeros_like(B)
    zero = np.zeros_like(f)
    padded = [zero] + lower + [zero]
    dN = [(padded[r] - padded[r + 1]) / h for r in range(degree + 1)]
    return B, scatter(dN)


def _check_finite(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("non-finite input")
    return x


def basis_eval(grid: SplineGrid, x) -> np.ndarray:
    """B_1(x)..B_{G+K}(x); ``x`` may be a scalar or an array (basis on the last axis)."""
    x = _check_finite(x)
    return bspline_basis(x, grid.knots, grid.degree)


def basis_derivative(grid: SplineGrid, x) -> np.ndarray:
    x = _check_finite(x)
    _, dB = bspline_basis(x, grid.knots, grid.degree, derivative=True)
    return dB


def silu(x):
    return x * expit(x)


def silu_grad(x):
    s = expit(x)
    return s + x * s * (1.0 - s)


@dataclass(frozen=True)
class SplineActivation:
    grid: SplineGrid
    coeffs: np.ndarray
    w_b: float = 1.0
    w_s: float = 1.0

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=float)
        object.__setattr__(self, "coeffs", coeffs)
        if coeffs.shape != (self.grid.num_basis,):
            raise InvalidInputError(f"expected {self.grid.num_basis} coefficients, got {coeffs.shape}")
        if not (np.all(np.isfinite(coeffs)) and np.isfinite(self.w_b) and np.isfinite(self.w_s)):
            raise InvalidInputError("non-finite activation parameters")

    @classmethod
    def random(cls, rng: np.random.Generator, grid: SplineGrid | None = None, noise: float = 0.1) -> SplineActivation:
        grid = grid or SplineGrid.uniform()
        return cls(grid, rng.normal(0.0, noise, grid.num_basis))

    def __call__(self, x):
        return activation_eval(self, x)


def activation_eval(act: SplineActivation, x):
    x = _check_finite(x)
    return act.w_b * silu(x) + act.w_s * (basis_eval(act.grid, x) @ act.coeffs)


@dataclass
class ActivationGrad:
    dx: np.ndarray
    dcoeffs: np.ndarray
    dw_b: np.ndarray
    dw_s: np.ndarray


def activation_grad(act: SplineActivation, x) -> ActivationGrad:
    """Analytic partials of phi at ``x`` w.r.t. the input and every parameter."""
    x = _check_finite(x)
    B = basis_eval(act.grid, x)
    dB = basis_derivative(act.grid, x)
    return ActivationGrad(
        dx=act.w_b * silu_grad(x) + act.w_s * (dB @ act.coeffs),
        dcoeffs=act.w_s * B,
        dw_b=silu(x),
        dw_s=B @ act.coeffs,
    )


def sample_domain(xs: np.ndarray) -> tuple[float, float]:
    """Interior domain covering the samples with a 1% margin on each side."""
    lo, hi = float(np.min(xs)), float(np.max(xs))
    span = hi - lo
    if span <= 0.0:
        return lo - DEGENERATE_HALF_WIDTH, hi + DEGENERATE_HALF_WIDTH
    return lo - GRID_MARGIN * span, hi + GRID_MARGIN * span


def refit_coefficients(old_basis: np.ndarray, old_coeffs: np.ndarray, new_basis: np.ndarray) -> np.ndarray:
    """Least-squares coefficients on ``new_basis`` reproducing ``old_basis @ old_coeffs``.

    Rank-deficient systems get the minimum-norm solution. ``old_coeffs`` may
    carry extra trailing axes (several splines sharing one input).
    """
    target = old_basis @ old_coeffs.reshape(old_coeffs.shape[0], -1)
    sol, *_ = np.linalg.lstsq(new_basis, target, rcond=None)
    return sol.reshape(old_coeffs.shape)


def update_grid_from_samples(act: SplineActivation, xs) -> SplineActivation:
    xs = _check_finite(xs).ravel()
    if xs.size == 0:
        raise InvalidInputError("no samples for grid update")
    lo, hi = sample_domain(xs)
    grid = SplineGrid.uniform(act.grid.num_intervals, act.grid.degree, lo, hi)
    coeffs = refit_coefficients(basis_eval(act.grid, xs), act.coeffs, basis_eval(grid, xs))
    return replace(act, grid=grid, coeffs=coeffs)
