"""Positive 1-periodic scalar profiles and their calculus.

Three concrete representations are supported, each with exact evaluation and
an exact antiderivative (closed form for piecewise-constant and trigonometric
profiles, exact integration of the linear interpolant for gridded samples):

* :class:`PiecewiseConstant` -- values C_1..C_N on intervals of lengths
  eps_1..eps_N, right-continuous at breakpoints.
* :class:`TrigPolynomial` -- c0 + sum_d (a_d cos(2 pi d t) + b_d sin(2 pi d t)).
* :class:`GridSampled` -- samples on a uniform grid, linear interpolation.

:class:`StepProfile` is a doubly-normalised piecewise-constant profile
(sum eps_j = sum C_j eps_j = 1), optionally "well distributed"
(C_j eps_j = 1/N for all j).  All values are immutable after construction.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi

#: tolerance used by the normalisation invariants
NORM_TOL = 1e-12

#: dense grid used for positivity / extrema scans
_SCAN_SIZE = 8192


class NormalizationError(ValueError):
    """A profile failed a normalisation precondition; carries the measured average."""

    def __init__(self, message: str, average: float):
        super().__init__(f"{message} (measured average {average!r})")
        self.average = average


def _readonly(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


class PeriodicProfile:
    """Base class for positive 1-periodic scalar profiles."""

    def evaluate(self, t):
        raise NotImplementedError

    def antiderivative(self, x):
        """M(x) = integral of the profile from 0 to x, any real x.

        Satisfies M(0) = 0 and M(x + 1) = M(x) + mean.
        """
        raise NotImplementedError

    @property
    def mean(self) -> float:
        raise NotImplementedError

    def mean_square(self) -> float:
        raise NotImplementedError

    def grid_min_max(self, n: int = _SCAN_SIZE):
        vals = self.evaluate(np.arange(n) / n)
        return float(vals.min()), float(vals.max())

    def derivative_bound(self) -> float:
        """Upper bound (or estimate) for sup |mu'|; used to size quadratures."""
        t = np.arange(_SCAN_SIZE) / _SCAN_SIZE
        v = self.evaluate(t)
        return float(np.max(np.abs(np.diff(np.append(v, v[0])))) * _SCAN_SIZE)

    def to_spec(self) -> dict:
        raise NotImplementedError

    def _check_positive(self):
        lo, _ = self.grid_min_max()
        if lo <= 0.0:
            raise ValueError(f"profile must be strictly positive (grid min {lo})")


@dataclass(frozen=True, eq=False)
class PiecewiseConstant(PeriodicProfile):
    """Piecewise-constant 1-periodic profile; right limit at breakpoints."""

    values: np.ndarray
    lengths: np.ndarray
    breakpoints: np.ndarray = field(init=False, repr=False)
    _cum: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        values = _readonly(self.values)
        lengths = _readonly(self.lengths)
        if values.ndim != 1 or values.shape != lengths.shape or values.size == 0:
            raise ValueError("values and lengths must be matching 1-d arrays")
        if np.any(values <= 0.0):
            raise ValueError("piecewise-constant values must be positive")
        if np.any(lengths <= 0.0):
            raise ValueError("piecewise-constant lengths must be positive")
        if abs(lengths.sum() - 1.0) > NORM_TOL:
            raise ValueError(f"interval lengths must sum to 1 (got {lengths.sum()!r})")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "lengths", lengths)
        b = np.concatenate(([0.0], np.cumsum(lengths)))
        b[-1] = 1.0
        object.__setattr__(self, "breakpoints", _readonly(b))
        cum = np.concatenate(([0.0], np.cumsum(values * lengths)))
        object.__setattr__(self, "_cum", _readonly(cum))

    @property
    def mean(self) -> float:
        return float(self._cum[-1])

    def _cell_index(self, frac):
        idx = np.searchsorted(self.breakpoints, frac, side="right") - 1
        return np.clip(idx, 0, self.values.size - 1)

    def evaluate(self, t):
        t = np.asarray(t, dtype=float)
        frac = np.mod(t, 1.0)
        return self.values[self._cell_index(frac)]

    def antiderivative(self, x):
        x = np.asarray(x, dtype=float)
        k = np.floor(x)
        frac = x - k
        idx = self._cell_index(frac)
        partial = self._cum[idx] + self.values[idx] * (frac - self.breakpoints[idx])
        return k * self.mean + partial

    def mean_square(self) -> float:
        return float(np.sum(self.values**2 * self.lengths))

    def grid_min_max(self, n: int = _SCAN_SIZE):
        return float(self.values.min()), float(self.values.max())

    def shifted(self, s: float) -> "PiecewiseConstant":
        """The profile t -> mu(t + s), re-cut at the shifted breakpoints."""
        cuts = np.mod(self.breakpoints[:-1] + (1.0 - s % 1.0), 1.0)
        edges = np.unique(np.concatenate((cuts, [0.0, 1.0])))
        mids = 0.5 * (edges[:-1] + edges[1:])
        vals = self.evaluate(mids + s)
        return PiecewiseConstant(vals, np.diff(edges))

    def to_spec(self) -> dict:
        return {
            "kind": "step",
            "values": [float(v) for v in self.values],
            "lengths": [float(v) for v in self.lengths],
        }


@dataclass(frozen=True, eq=False)
class TrigPolynomial(PeriodicProfile):
    """c0 + sum_d a_d cos(2 pi d t) + b_d sin(2 pi d t), strictly positive."""

    c0: float
    cos_coeffs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    sin_coeffs: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        a = _readonly(np.atleast_1d(self.cos_coeffs))
        b = _readonly(np.atleast_1d(self.sin_coeffs))
        d = max(a.size, b.size)
        if a.size < d:
            a = _readonly(np.concatenate((a, np.zeros(d - a.size))))
        if b.size < d:
            b = _readonly(np.concatenate((b, np.zeros(d - b.size))))
        object.__setattr__(self, "cos_coeffs", a)
        object.__setattr__(self, "sin_coeffs", b)
        object.__setattr__(self, "c0", float(self.c0))
        self._check_positive()

    @property
    def degree(self) -> int:
        return self.cos_coeffs.size

    @property
    def mean(self) -> float:
        return self.c0

    def evaluate(self, t):
        t = np.asarray(t, dtype=float)
        out = np.full(t.shape, self.c0)
        for d in range(self.degree):
            w = TWO_PI * (d + 1)
            out += self.cos_coeffs[d] * np.cos(w * t) + self.sin_coeffs[d] * np.sin(w * t)
        return out

    def antiderivative(self, x):
        # The periodic part integrates in closed form, valid for all real x.
        x = np.asarray(x, dtype=float)
        out = self.c0 * x
        for d in range(self.degree):
            w = TWO_PI * (d + 1)
            out += (self.cos_coeffs[d] * np.sin(w * x)
                    + self.sin_coeffs[d] * (1.0 - np.cos(w * x))) / w
        return out

    def mean_square(self) -> float:
        return float(self.c0**2
                     + 0.5 * np.sum(self.cos_coeffs**2 + self.sin_coeffs**2))

    def derivative_bound(self) -> float:
        d = np.arange(1, self.degree + 1)
        return float(TWO_PI * np.sum(d * (np.abs(self.cos_coeffs) + np.abs(self.sin_coeffs))))

    def shifted(self, s: float) -> "TrigPolynomial":
        d = np.arange(1, self.degree + 1)
        c, sn = np.cos(TWO_PI * d * s), np.sin(TWO_PI * d * s)
        a = self.cos_coeffs * c + self.sin_coeffs * sn
        b = -self.cos_coeffs * sn + self.sin_coeffs * c
        return TrigPolynomial(self.c0, a, b)

    def to_spec(self) -> dict:
        return {
            "kind": "trig",
            "mean": float(self.c0),
            "cos": [float(v) for v in self.cos_coeffs],
            "sin": [float(v) for v in self.sin_coeffs],
        }


@dataclass(frozen=True, eq=False)
class GridSampled(PeriodicProfile):
    """Samples y_i at t = i/M, extended 1-periodically with linear interpolation.

    The calculus (mean, antiderivative, mean square) is the exact calculus of
    the piecewise-linear interpolant, i.e. composite trapezoid-type quadrature
    on the sample grid.
    """

    samples: np.ndarray
    _trap: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        y = _readonly(self.samples)
        if y.ndim != 1 or y.size < 2:
            raise ValueError("need at least two samples")
        object.__setattr__(self, "samples", y)
        closed = np.append(y, y[0])
        if np.any(closed <= 0.0):
            raise ValueError("grid samples must be strictly positive")
        trap = np.concatenate(([0.0], np.cumsum(0.5 * (closed[:-1] + closed[1:])))) / y.size
        object.__setattr__(self, "_trap", _readonly(trap))

    @property
    def size(self) -> int:
        return self.samples.size

    @property
    def mean(self) -> float:
        return float(self._trap[-1])

    def _locate(self, frac):
        m = self.size
        pos = frac * m
        idx = np.minimum(pos.astype(int), m - 1)
        return idx, pos - idx

    def evaluate(self, t):
        t = np.asarray(t, dtype=float)
        frac = np.mod(t, 1.0)
        idx, s = self._locate(frac)
        y = self.samples
        y_next = y[(idx + 1) % self.size]
        return y[idx] + (y_next - y[idx]) * s

    def antiderivative(self, x):
        x = np.asarray(x, dtype=float)
        k = np.floor(x)
        frac = x - k
        idx, s = self._locate(frac)
        y = self.samples
        y_next = y[(idx + 1) % self.size]
        local = (y[idx] * s + 0.5 * (y_next - y[idx]) * s**2) / self.size
        return k * self.mean + self._trap[idx] + local

    def mean_square(self) -> float:
        y = self.samples
        y_next = np.roll(y, -1)
        return float(np.sum(y**2 + y * y_next + y_next**2) / (3.0 * self.size))

    def grid_min_max(self, n: int = _SCAN_SIZE):
        return float(self.samples.min()), float(self.samples.max())

    def derivative_bound(self) -> float:
        y = self.samples
        return float(np.max(np.abs(np.roll(y, -1) - y)) * self.size)

    def to_spec(self) -> dict:
        return {"kind": "grid", "samples": [float(v) for v in self.samples]}


@dataclass(frozen=True, eq=False)
class StepProfile:
    """Doubly normalised step profile: sum eps_j = sum C_j eps_j = 1.

    When `well_distributed` is set, additionally C_j eps_j = 1/N for every j;
    this is the normalisation under which the inequality module has a closed
    form for the right-hand side.
    """

    values: np.ndarray
    lengths: np.ndarray
    well_distributed: bool = False

    def __post_init__(self):
        values = _readonly(self.values)
        lengths = _readonly(self.lengths)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "lengths", lengths)
        if np.any(values <= 0.0) or np.any(lengths <= 0.0):
            raise ValueError("step profile needs positive values and lengths")
        if abs(lengths.sum() - 1.0) > NORM_TOL:
            raise ValueError(f"lengths must sum to 1 (got {lengths.sum()!r})")
        avg = float(np.sum(values * lengths))
        if abs(avg - 1.0) > NORM_TOL:
            raise NormalizationError("step profile must have average 1", avg)
        if self.well_distributed:
            n = values.size
            if np.max(np.abs(values * lengths - 1.0 / n)) > NORM_TOL:
                raise ValueError("well_distributed requires C_j eps_j = 1/N")

    @classmethod
    def from_raw(cls, values, lengths) -> "StepProfile":
        """Normalise raw positive (values, lengths) to the double normalisation."""
        values = np.asarray(values, dtype=float)
        lengths = np.asarray(lengths, dtype=float)
        lengths = lengths / lengths.sum()
        values = values / np.sum(values * lengths)
        n = values.size
        wd = bool(np.max(np.abs(values * lengths - 1.0 / n)) <= NORM_TOL)
        return cls(values, lengths, well_distributed=wd)

    @classmethod
    def well_distributed_from_values(cls, values) -> "StepProfile":
        """Rescale positive values so that eps_j = 1/(N C_j) is admissible."""
        c = np.asarray(values, dtype=float)
        if np.any(c <= 0.0):
            raise ValueError("values must be positive")
        n = c.size
        c = c * (np.sum(1.0 / c) / n)
        eps = 1.0 / (n * c)
        return cls(c, eps, well_distributed=True)

    @property
    def size(self) -> int:
        return self.values.size

    def as_piecewise(self) -> PiecewiseConstant:
        return PiecewiseConstant(self.values, self.lengths)

    def to_spec(self) -> dict:
        return {
            "kind": "step",
            "values": [float(v) for v in self.values],
            "lengths": [float(v) for v in self.lengths],
            "well_distributed": bool(self.well_distributed),
        }


@dataclass(frozen=True, eq=False)
class CumulativeIntegral:
    """M(t) = integral_0^t mu, with M(t + 1) = M(t) + mean.

    Exact (closed form) for piecewise-constant and trigonometric profiles,
    exact for the interpolant of gridded profiles; never quadrature.
    """

    profile: PeriodicProfile

    @property
    def mean(self) -> float:
        return self.profile.mean

    def __call__(self, x):
        return self.profile.antiderivative(x)

    def window(self, tau, t):
        """integral_tau^{tau+t} mu for t >= 0; broadcasts over inputs."""
        t = np.asarray(t, dtype=float)
        if np.any(t < 0.0):
            raise ValueError("window duration must be nonnegative")
        tau = np.asarray(tau, dtype=float)
        return self(tau + t) - self(tau)


def evaluate(profile: PeriodicProfile, t):
    """mu(t mod 1); exact for piecewise-constant interiors and trig polynomials."""
    return profile.evaluate(t)


def integrate_window(cum: CumulativeIntegral, tau, t):
    """M(tau + t) - M(tau) with t >= 0; additive in t."""
    return cum.window(tau, t)


def mean_square(profile: PeriodicProfile) -> float:
    """integral_0^1 mu(t)^2 dt."""
    return profile.mean_square()


def from_spec(spec: dict):
    """Build a profile from its JSON representation (see `to_spec`)."""
    kind = spec.get("kind")
    if kind == "step":
        values = np.asarray(spec["values"], dtype=float)
        lengths = np.asarray(spec["lengths"], dtype=float)
        if "well_distributed" in spec:
            return StepProfile(values, lengths, bool(spec["well_distributed"]))
        return PiecewiseConstant(values, lengths)
    if kind == "trig":
        return TrigPolynomial(spec["mean"], np.asarray(spec.get("cos", []), dtype=float),
                              np.asarray(spec.get("sin", []), dtype=float))
    if kind == "grid":
        return GridSampled(np.asarray(spec["samples"], dtype=float))
    raise ValueError(f"unknown profile kind {kind!r}")


def spec_id(spec: dict) -> str:
    """Short deterministic identifier for a profile spec."""
    payload = json.dumps(spec, sort_keys=True).encode()
    return hashlib.sha1(payload).hexdigest()[:10]
