"""The core integral inequality for normalised periodic profiles.

For every positive 1-periodic profile mu with unit average and every h > 0,

    h (1 - e^(-1/h))  <=  int_0^1 dtau mu(tau)^2 int_0^1 dt e^(-(1/h) int_tau^{tau+t} mu),

with equality exactly for constant mu.  This module evaluates both sides:

* by quadrature for arbitrary profiles (exact inner integral for step
  profiles, graded Gauss-Legendre in t plus a periodic midpoint rule in tau
  for smooth ones);
* in closed form for well-distributed step profiles (C_j eps_j = 1/N), via
  the per-interval exponential sums, together with the simplified gap and
  the small/large-h expansions of the ratio;
* by a deterministic fuzzing harness over random profile families.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from math import gcd
from typing import Sequence

import numpy as np

from .profiles import (
    CumulativeIntegral,
    GridSampled,
    NormalizationError,
    PeriodicProfile,
    PiecewiseConstant,
    StepProfile,
    TrigPolynomial,
    from_spec,
    spec_id,
)
from .quad import gl_composite

#: default tolerance on the gap for pass / fail decisions
TOL_GAP = 1e-9

_GL_ORDER = 10
_EFOLDS_T = 3.0       # max exponential e-folds per Gauss-Legendre piece in t
_EFOLDS_TAU = 2.0     # same for the outer variable on step profiles
_MEAN_TOL = 1e-10


def lhs_value(h: float) -> float:
    """Left-hand side h (1 - e^(-1/h)); increasing in h, tends to 1."""
    if h <= 0.0:
        raise ValueError("h must be positive")
    return float(h * (-math.expm1(-1.0 / h)))


# ----------------------------------------------------------------------
# quadrature evaluation of the right-hand side


def _as_step(profile):
    if isinstance(profile, StepProfile):
        return profile.values, profile.lengths
    if isinstance(profile, PiecewiseConstant):
        return profile.values, profile.lengths
    return None


def _check_unit_mean(profile):
    if isinstance(profile, StepProfile):
        return  # enforced at construction
    avg = profile.mean
    if abs(avg - 1.0) > _MEAN_TOL:
        raise NormalizationError("profile must have average 1", avg)


def _rhs_step(values, lengths, h: float, resolution: int) -> float:
    """Quadrature RHS for piecewise-constant mu.

    The inner t-integral is exact on every constant stretch of mu (the grid
    seen by tau + t thus contains every breakpoint); the outer tau-integral
    uses composite Gauss-Legendre per cell, with pieces sized so each spans
    at most a couple of exponential e-folds.
    """
    c = np.asarray(values, dtype=float)
    eps = np.asarray(lengths, dtype=float)
    n = c.size
    b = np.concatenate(([0.0], np.cumsum(eps)))
    b[-1] = 1.0
    ce = c * eps
    density = max(resolution, 12 * n)
    total = 0.0
    for k in range(n):
        efolds = ce[k] / h
        pieces = max(1, int(np.ceil(efolds / _EFOLDS_TAU)),
                     int(np.ceil(density * eps[k] / _GL_ORDER / 4.0)))
        edges = np.linspace(b[k], b[k + 1], pieces + 1)
        nodes, w = gl_composite(edges, _GL_ORDER)
        delta = b[k + 1] - nodes
        inner = (h / c[k]) * (-np.expm1(-c[k] * delta / h))
        exponent = c[k] * delta
        for j in range(1, n):
            m = (k + j) % n
            inner += (h / c[m]) * (-np.expm1(-ce[m] / h)) * np.exp(-exponent / h)
            exponent = exponent + ce[m]
        inner += (h / c[k]) * (-np.expm1(-c[k] * (nodes - b[k]) / h)) * np.exp(-exponent / h)
        total += c[k] ** 2 * float(w @ inner)
    return total


def _smooth_tau_count(profile, resolution) -> int:
    if resolution is not None:
        return int(resolution)
    lo, _ = profile.grid_min_max()
    rough = profile.derivative_bound() / max(lo, 1e-6)
    n = 1 << max(9, int(np.ceil(np.log2(max(24.0 * rough, 512.0)))))
    if isinstance(profile, GridSampled):
        n = min(max(n, 2048), 4096)
    return min(n, 4096)


def _rhs_smooth_batch(profile, hs, resolution=None, tau_scale: int = 1):
    """Quadrature RHS for smooth profiles, shared across an h-grid.

    tau: periodic midpoint rule (spectrally accurate for smooth periodic
    integrands).  t: composite Gauss-Legendre on a uniform partition sized by
    the fastest decay scale min(h) / max(mu).  The window exponents do not
    depend on h, so they are computed once per profile.
    """
    cum = CumulativeIntegral(profile)
    lo, hi = profile.grid_min_max()
    n_tau = _smooth_tau_count(profile, resolution) * tau_scale
    tau = (np.arange(n_tau) + 0.5) / n_tau
    h_ref = min(hs)
    pieces = int(np.ceil(_t_pieces(h_ref, hi) * tau_scale))
    edges = np.linspace(0.0, 1.0, pieces + 1)
    t_nodes, t_w = gl_composite(edges, _GL_ORDER)
    W = cum.window(tau[:, None], t_nodes[None, :])
    mu2 = profile.evaluate(tau) ** 2
    out = []
    for h in hs:
        inner = np.exp(-W / h) @ t_w
        out.append(float(np.mean(mu2 * inner)))
    return out


def _t_pieces(h: float, mu_max: float) -> int:
    return int(min(max(np.ceil(mu_max / (_EFOLDS_T * h)), 8), 4000))


def rhs_double_integral(profile, h: float, resolution: int | None = None) -> float:
    """Right-hand side by quadrature, for any average-1 profile."""
    if h <= 0.0:
        raise ValueError("h must be positive")
    _check_unit_mean(profile)
    step = _as_step(profile)
    if step is not None:
        return _rhs_step(step[0], step[1], h, resolution or 1024)
    return _rhs_smooth_batch(profile, [h], resolution)[0]


# ----------------------------------------------------------------------
# closed form for well-distributed step profiles


def _require_well_distributed(profile) -> StepProfile:
    if not isinstance(profile, StepProfile) or not profile.well_distributed:
        raise ValueError("closed form requires a well-distributed step profile "
                         "(C_j eps_j = 1/N)")
    return profile


def closed_form_rhs(profile: StepProfile, h: float) -> float:
    """Exact RHS from the per-interval exponential sums.

    Each interval I_k contributes h C_k eps_k (1 - e^(-1/h)) plus an h^2
    bracket of decaying exponentials; the terms are arranged so that every
    exponent is nonpositive, which keeps the evaluation stable for all h.
    """
    profile = _require_well_distributed(profile)
    if h <= 0.0:
        raise ValueError("h must be positive")
    c = profile.values
    eps = profile.lengths
    n = c.size
    ce = c * eps
    lhs_part = lhs_value(h)  # sum_k h C_k eps_k (1 - e^(-1/h)) with sum C_k eps_k = 1
    bracket_total = 0.0
    for k in range(n):
        x = ce[k] / h
        term = -(-np.expm1(-x)) / c[k]
        term += (math.exp(-(1.0 / h - x)) - math.exp(-1.0 / h)) / c[k]
        s = x
        for j in range(1, n):
            m = (k + j) % n
            decay = math.exp(-(s - x)) - math.exp(-s)
            term += (-np.expm1(-ce[m] / h)) / c[m] * decay
            s += ce[m] / h
        bracket_total += c[k] * term
    return float(lhs_part + h**2 * bracket_total)


def well_distributed_gap(profile: StepProfile, h: float) -> float:
    """Simplified closed-form gap rhs - lhs.

    Equals h^2 (1 - e^(-u))^2 sum_{j=1}^{N-1} e^(-(j-1) u) S_j with
    u = 1/(N h) and S_j = sum_k (C_k / C_{k+j} - 1); manifestly >= 0.
    Kept as a consistency check against the per-interval form.
    """
    profile = _require_well_distributed(profile)
    c = profile.values
    n = c.size
    u = 1.0 / (n * h)
    base = -np.expm1(-u)
    total = 0.0
    for j in range(1, n):
        total += math.exp(-(j - 1) * u) * orbit_decomposed_sum(c, j)
    return float(h**2 * base**2 * total)


def ratio_expansion(profile: StepProfile, h: float | None = None) -> dict:
    """Asymptotics of ratio = rhs/lhs for a well-distributed step profile.

    small_h_coefficient: ratio = 1 + h * coefficient + O(e^(-1/(N h))),
        coefficient = sum_k C_k/C_{k+1} - N.
    large_h_limit: ratio -> mean square of the profile as h -> infinity.

    When `h` is given, the measured ratio at that h is included.
    """
    profile = _require_well_distributed(profile)
    c = profile.values
    n = c.size
    coeff = float(np.sum(c / np.roll(c, -1)) - n)
    out = {
        "small_h_coefficient": coeff,
        "large_h_limit": float(np.sum(c) / n),  # = mean square under C_j eps_j = 1/N
    }
    if h is not None:
        out["ratio"] = closed_form_rhs(profile, h) / lhs_value(h)
    return out


def cyclic_ratio_sum(a: Sequence[float]) -> float:
    """sum_j a_j / a_{j+1} with a_{M+1} = a_1; always >= M, = M iff constant."""
    a = np.asarray(a, dtype=float)
    if a.size < 1:
        raise ValueError("need at least one entry")
    if np.any(a <= 0.0):
        raise ValueError("entries must be positive")
    return float(np.sum(a / np.roll(a, -1)))


def orbit_decomposed_sum(values: Sequence[float], shift: int) -> float:
    """sum_k (C_k / C_{k+shift} - 1) via the orbits of k -> k + shift mod N.

    Each orbit contributes a cyclic ratio sum minus the orbit length, hence
    the total is nonnegative, and positive for shift = 1 unless all C_k agree.
    """
    c = np.asarray(values, dtype=float)
    n = c.size
    if not 1 <= shift <= n - 1:
        raise ValueError(f"shift must lie in [1, {n - 1}]")
    if np.any(c <= 0.0):
        raise ValueError("values must be positive")
    g = gcd(n, shift)
    total = 0.0
    for start in range(g):
        orbit = c[(start + shift * np.arange(n // g)) % n]
        total += cyclic_ratio_sum(orbit) - orbit.size
    return float(total)


# ----------------------------------------------------------------------
# gap reports


@dataclass(frozen=True)
class InequalityGapReport:
    """Both sides of the inequality for one (profile, h) pair."""

    profile_spec: dict
    profile_id: str
    size: int
    h: float
    lhs: float
    rhs: float
    method: str
    resolution: int
    quadrature_error: float = 0.0

    @property
    def gap(self) -> float:
        return self.rhs - self.lhs

    @property
    def ratio(self) -> float:
        return self.rhs / self.lhs

    def passes(self, tol_gap: float = TOL_GAP) -> bool:
        return self.gap >= -tol_gap and self.ratio >= 1.0 - tol_gap

    def row(self) -> dict:
        return {
            "profile_id": self.profile_id,
            "N": self.size,
            "h": float(self.h),
            "lhs": float(self.lhs),
            "rhs": float(self.rhs),
            "gap": float(self.gap),
            "ratio": float(self.ratio),
            "method": self.method,
            "resolution": int(self.resolution),
        }


def _profile_size(profile) -> int:
    if isinstance(profile, (StepProfile, PiecewiseConstant)):
        return int(profile.values.size)
    if isinstance(profile, TrigPolynomial):
        return int(profile.degree)
    return int(profile.size)


def evaluate_gap_batch(profile, hs, method: str = "auto",
                       resolution: int | None = None,
                       estimate_error: bool = False) -> list[InequalityGapReport]:
    """Gap reports for one profile over a grid of h values."""
    hs = [float(h) for h in hs]
    spec = profile.to_spec()
    pid = spec_id(spec)
    size = _profile_size(profile)
    if method == "auto":
        method = "quadrature"
    reports = []
    if method == "closed_form":
        for h in hs:
            rhs = closed_form_rhs(profile, h)
            reports.append(InequalityGapReport(spec, pid, size, h, lhs_value(h),
                                               rhs, "closed_form", 0))
        return reports
    if method != "quadrature":
        raise ValueError(f"unknown method {method!r}")
    _check_unit_mean(profile)
    step = _as_step(profile)
    if step is not None:
        res = resolution or 1024
        for h in hs:
            rhs = _rhs_step(step[0], step[1], h, res)
            err = abs(_rhs_step(step[0], step[1], h, 2 * res) - rhs) if estimate_error else 0.0
            reports.append(InequalityGapReport(spec, pid, size, h, lhs_value(h),
                                               rhs, "quadrature", res, err))
        return reports
    values = _rhs_smooth_batch(profile, hs, resolution)
    errs = [0.0] * len(hs)
    if estimate_error:
        fine = _rhs_smooth_batch(profile, hs, resolution, tau_scale=2)
        errs = [abs(a - b) for a, b in zip(fine, values)]
        values = fine
    res = _smooth_tau_count(profile, resolution)
    for h, rhs, err in zip(hs, values, errs):
        reports.append(InequalityGapReport(spec, pid, size, h, lhs_value(h),
                                           rhs, "quadrature", res, err))
    return reports


def evaluate_gap(profile, h: float, method: str = "auto",
                 resolution: int | None = None,
                 estimate_error: bool = False) -> InequalityGapReport:
    return evaluate_gap_batch(profile, [h], method, resolution, estimate_error)[0]


# ----------------------------------------------------------------------
# random profile generation and the fuzzing harness

_PROFILE_KINDS = ("step_wd", "step", "trig")
_MAX_RETRIES = 100


def random_step_profile(rng: np.random.Generator, well_distributed: bool) -> StepProfile:
    """Random normalised step profile; values log-uniform in [0.1, 10]."""
    n = int(rng.integers(2, 9))
    c = np.exp(rng.uniform(np.log(0.1), np.log(10.0), size=n))
    if well_distributed:
        return StepProfile.well_distributed_from_values(c)
    eps = rng.dirichlet(np.ones(n))
    return StepProfile.from_raw(c, eps)


def random_trig_profile(rng: np.random.Generator) -> TrigPolynomial:
    """Random positive trig polynomial with average 1; resamples if too close to 0."""
    for _ in range(_MAX_RETRIES):
        degree = int(rng.integers(1, 5))
        d = np.arange(1, degree + 1)
        a = rng.normal(0.0, 0.35 / d)
        b = rng.normal(0.0, 0.35 / d)
        t = np.arange(4096) / 4096
        vals = 1.0 + sum(a[i] * np.cos(2 * np.pi * (i + 1) * t)
                         + b[i] * np.sin(2 * np.pi * (i + 1) * t)
                         for i in range(degree))
        if vals.min() > 0.05:
            return TrigPolynomial(1.0, a, b)
    raise RuntimeError("could not draw a positive trig profile after "
                       f"{_MAX_RETRIES} attempts")


def _draw_profile(kind: str, rng: np.random.Generator):
    if kind == "step_wd":
        return random_step_profile(rng, well_distributed=True)
    if kind == "step":
        return random_step_profile(rng, well_distributed=False)
    if kind == "trig":
        return random_trig_profile(rng)
    raise ValueError(f"unknown generator kind {kind!r}")


@dataclass(frozen=True)
class FuzzResult:
    count: int
    h_grid: tuple
    seed: int
    min_gap: float
    worst: InequalityGapReport
    rows: list

    def passes(self, tol_gap: float = TOL_GAP) -> bool:
        return self.min_gap >= -tol_gap


def _fuzz_instance(args):
    index, seed_entropy, kinds, h_grid, resolution = args
    rng = np.random.Generator(np.random.PCG64(seed_entropy))
    kind = kinds[index % len(kinds)]
    profile = _draw_profile(kind, rng)
    reports = evaluate_gap_batch(profile, h_grid, "quadrature", resolution)
    worst = min(reports, key=lambda r: r.gap)
    row = worst.row()
    row.update({"instance": index, "kind": kind})
    return index, worst, row


def fuzz_inequality(count: int, h_grid=None, seed: int = 0,
                    kinds: Sequence[str] = _PROFILE_KINDS,
                    resolution: int | None = None,
                    workers: int = 1) -> FuzzResult:
    """Test the inequality on `count` random profiles over an h-grid.

    Fully deterministic for a given seed: instance i derives its own
    generator from SeedSequence(seed).spawn, so the result does not depend on
    the worker count.  Returns the minimum gap and the offending instance.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if h_grid is None:
        h_grid = np.geomspace(0.01, 100.0, 17)
    h_grid = tuple(float(h) for h in h_grid)
    children = np.random.SeedSequence(seed).spawn(count)
    jobs = [(i, children[i], tuple(kinds), h_grid, resolution) for i in range(count)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_fuzz_instance, jobs, chunksize=16))
    else:
        results = [_fuzz_instance(job) for job in jobs]
    results.sort(key=lambda item: item[0])
    rows = [row for _, _, row in results]
    worst = min((rep for _, rep, _ in results), key=lambda r: r.gap)
    return FuzzResult(count, h_grid, seed, float(worst.gap), worst, rows)


def replay_instance(payload: dict) -> InequalityGapReport:
    """Re-evaluate a serialized counterexample payload {profile, h, ...}."""
    profile = from_spec(payload["profile"])
    return evaluate_gap(profile, float(payload["h"]),
                        method=payload.get("method", "auto"),
                        estimate_error=True)
