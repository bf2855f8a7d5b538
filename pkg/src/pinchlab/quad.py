"""Small quadrature helpers shared across modules."""

from functools import lru_cache

import numpy as np

# numpy >= 2.0 renamed trapz
trapezoid = getattr(np, "trapezoid", None) or np.trapz


@lru_cache(maxsize=32)
def gauss_legendre(order: int):
    """Cached Gauss-Legendre nodes/weights on [-1, 1]."""
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


def gl_composite(edges, order: int):
    """Composite Gauss-Legendre nodes and weights on the pieces given by `edges`.

    Returns flat arrays (nodes, weights) covering [edges[0], edges[-1]].
    """
    edges = np.asarray(edges, dtype=float)
    x, w = gauss_legendre(order)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1:] - edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def simpson_uniform(y, dx: float) -> float:
    """Composite Simpson rule on a uniform grid with an even interval count."""
    y = np.asarray(y, dtype=float)
    n = y.shape[0] - 1
    if n < 2 or n % 2:
        raise ValueError("simpson_uniform needs an even number of intervals")
    s = y[0] + y[-1] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-2:2].sum()
    return float(s * dx / 3.0)


def cumulative_trapezoid(y, x):
    """Cumulative trapezoid integral, starting at 0."""
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    out = np.empty_like(y)
    out[0] = 0.0
    np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(x), out=out[1:])
    return out


def golden_extremum(f, a: float, b: float, find_max: bool = True,
                    tol: float = 1e-13, max_iter: int = 200):
    """Golden-section search for an interior extremum of f on [a, b].

    Returns (x, f(x)). Assumes the extremum is bracketed by [a, b]; callers
    seed the bracket from a dense-grid scan.
    """
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    sign = 1.0 if find_max else -1.0
    x1 = b - invphi * (b - a)
    x2 = a + invphi * (b - a)
    f1 = sign * f(x1)
    f2 = sign * f(x2)
    for _ in range(max_iter):
        if b - a < tol * (1.0 + abs(a) + abs(b)):
            break
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + invphi * (b - a)
            f2 = sign * f(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - invphi * (b - a)
            f1 = sign * f(x1)
    x = 0.5 * (a + b)
    return x, float(f(x))
