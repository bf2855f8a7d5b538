"""Transfer-matrix machinery for periodic linear flows.

Both Riccati solvers work through the linearisation of x' + x^2 = q:
writing x = u'/u turns the flow into the linear system (u, u')' = A(t)(u, u'),
whose per-step transfer matrices can be built in one vectorised pass and
combined with a logarithmic-depth prefix scan.  The period map of the Riccati
flow is then the fractional-linear action of the monodromy matrix.
"""

import numpy as np


def rk4_transfer_matrices(A_nodes: np.ndarray, dt) -> np.ndarray:
    """Per-step RK4 transfer matrices for x' = A(t) x.

    A_nodes: (2m+1, d, d) samples of A at the step endpoints and midpoints
        (node 2i is t_i, node 2i+1 is t_i + dt/2).
    dt: scalar step or (m,) array of step sizes.

    Returns (m, d, d) matrices T_i with x(t_{i+1}) = T_i x(t_i).
    """
    a1 = A_nodes[:-1:2]
    am = A_nodes[1::2]
    a2 = A_nodes[2::2]
    m, d, _ = a1.shape
    dt = np.broadcast_to(np.asarray(dt, dtype=float).reshape(-1, 1, 1), (m, 1, 1))
    k1 = a1
    k2 = am + 0.5 * dt * (am @ k1)
    k3 = am + 0.5 * dt * (am @ k2)
    k4 = a2 + dt * (a2 @ k3)
    T = (dt / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
    T += np.eye(d)
    return T


def prefix_products(T: np.ndarray) -> np.ndarray:
    """Prefix products P[i] = T[i-1] @ ... @ T[0], with P[0] = I.

    Uses a Hillis-Steele scan: log2(m) rounds of batched matmuls, so the
    whole dense propagation stays vectorised.
    """
    m, d, _ = T.shape
    Q = T.copy()
    off = 1
    while off < m:
        Q[off:] = Q[off:] @ Q[:-off]
        off <<= 1
    P = np.empty((m + 1, d, d), dtype=T.dtype)
    P[0] = np.eye(d)
    P[1:] = Q
    return P


def cosh_sinh_transfer(q, dt) -> np.ndarray:
    """Exact transfer matrices of (u, u')' = [[0,1],[q,0]] (u,u') for constant q > 0.

    q, dt: scalars or broadcastable arrays; returns (..., 2, 2).
    """
    q = np.asarray(q, dtype=float)
    dt = np.asarray(dt, dtype=float)
    s = np.sqrt(q)
    c = np.cosh(s * dt)
    sh = np.sinh(s * dt)
    out = np.empty(np.broadcast(q, dt).shape + (2, 2))
    out[..., 0, 0] = c
    out[..., 0, 1] = sh / s
    out[..., 1, 0] = s * sh
    out[..., 1, 1] = c
    return out


def normalized(M: np.ndarray):
    """Rescale a matrix by its largest absolute entry; returns (M/s, log s).

    Fractional-linear maps are scale invariant, so the monodromy can be
    normalised before extracting fixed points without changing them.
    """
    s = float(np.abs(M).max())
    if not np.isfinite(s) or s == 0.0:
        raise ArithmeticError("degenerate transfer matrix")
    return M / s, np.log(s)
