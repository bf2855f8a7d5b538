"""Periodic solutions of the scalar Riccati equation x' + x^2 = a^2 f.

For positive 1-periodic forcing f there is a unique positive 1-periodic
solution lambda_a, the fixed point of the period map; it attracts all larger
initial data forward in time.  The solver works through the linearisation
x = u'/u (so (u, u')' is a linear flow): the period map is the
fractional-linear action of the monodromy matrix, its fixed point is the root
of a quadratic, and the contraction factor of the plain Poincare iteration is
exp(-2 * integral lambda_a).

Also provided: the averaged solution Lambda(a) = int_0^1 lambda_a (increasing
in a, with Lambda(a)/a non-increasing), the closed-form h-derivative of
mu_h = h * lambda_{1/h}, and the reduction of that derivative's sign to the
integral inequality of :mod:`pinchlab.inequality`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import inequality
from .profiles import (
    CumulativeIntegral,
    GridSampled,
    PeriodicProfile,
    PiecewiseConstant,
    StepProfile,
)
from .quad import simpson_uniform, trapezoid
from .transfer import (
    cosh_sinh_transfer,
    normalized,
    prefix_products,
    rk4_transfer_matrices,
)


class ConvergenceError(RuntimeError):
    """The Poincare iteration failed to reach the residual tolerance."""


class PositivityError(RuntimeError):
    """A solution left the positivity bracket (integration blow-up)."""


RESIDUAL_TOL = 1e-12
MAX_ITERATIONS = 200
_BASE_STEPS = 8192


@dataclass(frozen=True, eq=False)
class ScalarForcing:
    """Positive 1-periodic forcing f with cached extrema."""

    profile: PeriodicProfile
    f_min: float = field(init=False)
    f_max: float = field(init=False)

    def __post_init__(self):
        if isinstance(self.profile, StepProfile):
            object.__setattr__(self, "profile", self.profile.as_piecewise())
        lo, hi = self.profile.grid_min_max()
        if lo <= 0.0:
            raise ValueError(f"forcing must be positive (grid min {lo})")
        object.__setattr__(self, "f_min", lo)
        object.__setattr__(self, "f_max", hi)

    @property
    def mean(self) -> float:
        return self.profile.mean


def _coerce_forcing(f) -> ScalarForcing:
    return f if isinstance(f, ScalarForcing) else ScalarForcing(f)


def _default_steps(a: float, f_max: float) -> int:
    rate = max(a * np.sqrt(f_max), 1.0)
    n = max(_BASE_STEPS, int(512 * rate))
    return 1 << int(np.ceil(np.log2(n)))


def _step_transfers(profile: PiecewiseConstant, a: float, n_steps: int):
    """Exact per-step transfer matrices for piecewise-constant forcing.

    The grid is uniform within each constant segment (even sub-counts, so
    composite Simpson applies per segment) and exact at the breakpoints.
    """
    t_parts = [np.array([0.0])]
    transfers = []
    seg_slices = []
    start = 0
    for value, left, right in zip(profile.values, profile.breakpoints[:-1],
                                  profile.breakpoints[1:]):
        length = right - left
        m = max(16, int(round(n_steps * length)))
        m += (-m) % 4  # divisible by 4: Simpson stays valid on the half grid
        dt = length / m
        T = cosh_sinh_transfer(a * a * value, dt)
        transfers.append(np.broadcast_to(T, (m, 2, 2)))
        t_parts.append(left + dt * np.arange(1, m + 1))
        seg_slices.append((start, start + m))
        start += m
    t = np.concatenate(t_parts)
    t[-1] = 1.0
    return t, np.concatenate(transfers), seg_slices


def _smooth_transfers(forcing: ScalarForcing, a: float, n_steps: int):
    nodes = np.arange(2 * n_steps + 1) / (2 * n_steps)
    q = a * a * forcing.profile.evaluate(nodes)
    A = np.zeros((nodes.size, 2, 2))
    A[:, 0, 1] = 1.0
    A[:, 1, 0] = q
    T = rk4_transfer_matrices(A, 1.0 / n_steps)
    t = np.arange(n_steps + 1) / n_steps
    return t, T, None


@dataclass(frozen=True, eq=False)
class PeriodicSolution:
    """Dense positive periodic solution of x' + x^2 = a^2 f."""

    forcing: ScalarForcing
    a: float
    t: np.ndarray
    values: np.ndarray
    residual: float
    iterations: int
    contraction_ratios: tuple
    lambda_average: float
    energy_error: float
    log_multiplier: float
    cumulative: np.ndarray  # integral_0^{t_i} lambda, exact for the discrete flow
    segment_slices: list | None = None

    @property
    def initial_value(self) -> float:
        return float(self.values[0])

    @property
    def step_size(self) -> float:
        return float(np.min(np.diff(self.t)))


def _quadrature(t, values, segment_slices) -> float:
    if segment_slices is None:
        return float(trapezoid(values, t))
    total = 0.0
    for lo, hi in segment_slices:
        dx = t[lo + 1] - t[lo]
        total += simpson_uniform(values[lo:hi + 1], dx)
    return total


def solve_periodic(forcing, a: float, n_steps: int | None = None,
                   residual_tol: float = RESIDUAL_TOL,
                   max_iterations: int = MAX_ITERATIONS) -> PeriodicSolution:
    """Positive periodic solution as the fixed point of the period map.

    The period map P is represented exactly (for the discretised flow) as a
    fractional-linear map; the monotone Poincare iteration from a*sqrt(max f)
    is recorded for diagnostics and P's attracting fixed point is taken as
    the solution, so the residual is at roundoff level even when the
    contraction is slow (small a).
    """
    forcing = _coerce_forcing(forcing)
    if a <= 0.0:
        raise ValueError("a must be positive")
    if n_steps is None:
        n_steps = _default_steps(a, forcing.f_max)
    profile = forcing.profile
    if isinstance(profile, PiecewiseConstant):
        t, T, seg_slices = _step_transfers(profile, a, n_steps)
    else:
        t, T, seg_slices = _smooth_transfers(forcing, a, n_steps)
    P = prefix_products(T)
    mono, log_scale = normalized(P[-1])
    p11, p12 = mono[0, 0], mono[0, 1]
    p21, p22 = mono[1, 0], mono[1, 1]

    def period_map(x):
        return (p21 + p22 * x) / (p11 + p12 * x)

    disc = (p11 - p22) ** 2 + 4.0 * p12 * p21
    if disc < 0.0 or p12 <= 0.0:
        raise ConvergenceError("period map has no positive fixed point; "
                               "the forcing is not admissible")
    x_star = ((p22 - p11) + np.sqrt(disc)) / (2.0 * p12)
    if x_star <= 0.0:
        raise ConvergenceError("attracting fixed point is not positive")

    # Monotone-from-above iteration, kept as a diagnostic of the contraction.
    x = a * np.sqrt(forcing.f_max)
    iterations = 0
    deltas = []
    while iterations < max_iterations:
        x_next = period_map(x)
        deltas.append(abs(x_next - x))
        iterations += 1
        if abs(x_next - x) < residual_tol * max(1.0, abs(x)) or iterations >= 24:
            x = x_next
            break
        x = x_next
    ratios = tuple(float(d2 / d1) for d1, d2 in zip(deltas, deltas[1:]) if d1 > 0.0)

    residual = abs(period_map(x_star) - x_star)
    if residual > 1e-10 * max(1.0, x_star):
        raise ConvergenceError(f"period-map residual {residual} exceeds tolerance; "
                               "increase n_steps")

    u = P[:, 0, 0] + P[:, 0, 1] * x_star
    v = P[:, 1, 0] + P[:, 1, 1] * x_star
    if np.any(u <= 0.0):
        raise PositivityError("linear representative lost positivity")
    lam = v / u
    lo_bracket = a * np.sqrt(forcing.f_min)
    hi_bracket = a * np.sqrt(forcing.f_max)
    tol = 1e-6 * max(1.0, hi_bracket)
    if lam.min() <= 0.0 or lam.min() < lo_bracket - tol or lam.max() > hi_bracket + tol:
        raise PositivityError(
            f"solution left the bracket [{lo_bracket}, {hi_bracket}]: "
            f"range [{lam.min()}, {lam.max()}]")

    average = _quadrature(t, lam, seg_slices)
    energy = _quadrature(t, lam * lam, seg_slices)
    energy_error = abs(energy - a * a * forcing.mean)
    log_mult = float(np.log(p11 + p12 * x_star) + log_scale)
    return PeriodicSolution(
        forcing=forcing, a=float(a), t=t, values=lam,
        residual=float(residual), iterations=iterations,
        contraction_ratios=ratios, lambda_average=float(average),
        energy_error=float(energy_error), log_multiplier=log_mult,
        cumulative=np.log(u), segment_slices=seg_slices)


def capital_lambda(forcing, a: float, n_steps: int | None = None) -> float:
    """Lambda(a) = int_0^1 lambda_a, by quadrature of the dense solution."""
    return solve_periodic(forcing, a, n_steps).lambda_average


@dataclass(frozen=True)
class LambdaCurve:
    """Lambda over an increasing grid of a values, with monotonicity checks."""

    a_grid: np.ndarray
    lambda_values: np.ndarray
    residuals: np.ndarray
    energy_errors: np.ndarray

    @property
    def lambda_over_a(self) -> np.ndarray:
        return self.lambda_values / self.a_grid

    def monotonicity_violations(self, tol: float = 1e-8):
        """Adjacent-pair violations of (Lambda increasing, Lambda/a non-increasing)."""
        inc = np.diff(self.lambda_values)
        dec = np.diff(self.lambda_over_a)
        rows = []
        for i, (d_inc, d_dec) in enumerate(zip(inc, dec)):
            if d_inc < -tol:
                rows.append({"pair": (float(self.a_grid[i]), float(self.a_grid[i + 1])),
                             "kind": "Lambda_increasing", "magnitude": float(-d_inc)})
            if d_dec > tol:
                rows.append({"pair": (float(self.a_grid[i]), float(self.a_grid[i + 1])),
                             "kind": "Lambda_over_a_non_increasing",
                             "magnitude": float(d_dec)})
        return rows


def lambda_curve(forcing, a_grid, n_steps: int | None = None) -> LambdaCurve:
    forcing = _coerce_forcing(forcing)
    a_grid = np.asarray(a_grid, dtype=float)
    if a_grid.size < 1 or np.any(a_grid <= 0.0) or np.any(np.diff(a_grid) <= 0.0):
        raise ValueError("a-grid must be positive and strictly increasing")
    sols = [solve_periodic(forcing, a, n_steps) for a in a_grid]
    return LambdaCurve(
        a_grid=a_grid,
        lambda_values=np.array([s.lambda_average for s in sols]),
        residuals=np.array([s.residual for s in sols]),
        energy_errors=np.array([s.energy_error for s in sols]),
    )


# ----------------------------------------------------------------------
# h-derivative of mu_h = h * lambda_{1/h}


@dataclass(frozen=True, eq=False)
class DmuDhResult:
    h: float
    t: np.ndarray
    nu: np.ndarray
    integral: float
    constant: float
    fd_value: float | None = None
    fd_relative_error: float | None = None


def dmu_dh(forcing, h: float, n_steps: int | None = None,
           check_fd: bool = True, fd_rel_tol: float = 1e-6,
           fd_step: float = 1e-4) -> DmuDhResult:
    """Closed-formula derivative nu = d mu_h / dh of the periodic solution.

    With M(t) = int_0^t mu_h,

        h nu(t) = C e^(-2 M(t)/h) - mu_h(t) + (2/h) int_0^t mu_h(s)^2
                  e^(-(2/h)(M(t) - M(s))) ds,

    where C is fixed by 1-periodicity of nu.  The convolution is accumulated
    by a stable per-cell recurrence (all factors <= 1).  When `check_fd` is
    set, the integral of nu is compared against a centered finite difference
    of g(h) = int_0^1 mu_h computed at h (1 +/- fd_step).
    """
    forcing = _coerce_forcing(forcing)
    if h <= 0.0:
        raise ValueError("h must be positive")
    a = 1.0 / h
    if n_steps is None:
        n_steps = _default_steps(a, forcing.f_max)
    fine = solve_periodic(forcing, a, 2 * n_steps)
    mu_fine = h * fine.values
    m_fine = h * fine.cumulative
    t = fine.t[::2]
    mu = mu_fine[::2]
    big_m = m_fine[::2]

    # I(t_{i+1}) = alpha_i I(t_i) + beta_i with alpha_i = e^(-2 dM_i / h);
    # beta_i is a local Simpson integral using the midpoint of the fine grid.
    dM = big_m[1:] - big_m[:-1]
    alpha = np.exp(-2.0 * dM / h)
    w0 = np.exp(-2.0 * dM / h)
    wm = np.exp(-2.0 * (big_m[1:] - m_fine[1::2]) / h)
    g0 = mu[:-1] ** 2 * w0
    gm = mu_fine[1::2] ** 2 * wm
    g1 = mu[1:] ** 2
    dt = np.diff(t)
    beta = dt / 6.0 * (g0 + 4.0 * gm + g1)

    # affine prefix scan: (a2, b2) o (a1, b1) = (a2 a1, a2 b1 + b2)
    A = alpha.copy()
    B = beta.copy()
    off = 1
    n = A.size
    while off < n:
        B[off:] = A[off:] * B[:-off] + B[off:]
        A[off:] = A[off:] * A[:-off]
        off <<= 1
    conv = np.concatenate(([0.0], B))

    denom = -np.expm1(-2.0 * big_m[-1] / h)
    assert denom > 0.0
    c_const = (2.0 / h) * conv[-1] / denom
    nu = (c_const * np.exp(-2.0 * big_m / h) - mu + (2.0 / h) * conv) / h
    integral = _quadrature(t, nu, fine.segment_slices and
                           [(lo // 2, hi // 2) for lo, hi in fine.segment_slices])

    fd_value = None
    rel_err = None
    if check_fd:
        delta = fd_step * h
        g = {}
        for hh in (h - delta, h + delta):
            sol = solve_periodic(forcing, 1.0 / hh, n_steps)
            g[hh] = hh * sol.lambda_average
        fd_value = (g[h + delta] - g[h - delta]) / (2.0 * delta)
        scale = max(abs(fd_value), abs(integral), 1e-30)
        rel_err = abs(fd_value - integral) / scale
        if rel_err > fd_rel_tol:
            raise ConvergenceError(
                f"nu formula and finite difference disagree: {integral} vs "
                f"{fd_value} (relative {rel_err})")
    return DmuDhResult(h=float(h), t=t, nu=nu, integral=float(integral),
                       constant=float(c_const), fd_value=fd_value,
                       fd_relative_error=rel_err)


def reduce_to_core_inequality(forcing, h: float, n_steps: int | None = None,
                              resolution: int | None = None,
                              grid_size: int = 4096) -> inequality.InequalityGapReport:
    """Evaluate the integral inequality on the normalised periodic solution.

    mu_h is scaled to unit average (the inequality family is invariant under
    mu -> alpha mu) and the parameter becomes h / (2 mean), matching the
    doubled decay rate e^(-2/h int mu) of the derivative formula.  A
    nonnegative gap here is exactly the statement int nu >= 0.
    """
    forcing = _coerce_forcing(forcing)
    sol = solve_periodic(forcing, 1.0 / h, n_steps)
    samples = np.interp(np.arange(grid_size) / grid_size, sol.t, sol.values)
    mu = h * samples
    mean = float(np.mean(mu))
    profile = GridSampled(mu / mean)
    return inequality.evaluate_gap(profile, h / (2.0 * mean),
                                   method="quadrature", resolution=resolution)
