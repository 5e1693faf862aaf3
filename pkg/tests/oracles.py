"""Independent reference computations used to check the library.

Nothing here imports the code under test except plain value types.
"""
import itertools
import math

import numpy as np
from scipy.optimize import minimize


def _trans(x, y, z):
    T = np.eye(4)
    T[:3, 3] = (x, y, z)
    return T


def _rot_y(a):
    c, s = math.cos(a), math.sin(a)
    T = np.eye(4)
    T[0, 0], T[0, 2], T[2, 0], T[2, 2] = c, s, -s, c
    return T


def _rot_z(a):
    c, s = math.cos(a), math.sin(a)
    T = np.eye(4)
    T[0, 0], T[0, 1], T[1, 0], T[1, 1] = c, -s, s, c
    return T


def fk_transform_chain(links, phi, theta, d):
    """Tool position from a product of homogeneous transforms.

    base -> slide (d_x1 + D, d_y1, d_z1) -> tilt about y -> offset
    (d_x2, d_y2, d_z2) -> pan about z -> tube (d_x3, 0, 0).
    """
    dx1, dx2, dx3, dy1, dy2, dz1, dz2 = links
    T = (_trans(dx1 + d, dy1, dz1) @ _rot_y(theta) @ _trans(dx2, dy2, dz2)
         @ _rot_z(phi) @ _trans(dx3, 0.0, 0.0))
    return T[:3, 3]


def mamdani_reference(d1, c1, d2, c2, n=10001):
    """Plain-loop Mamdani evaluation on an ``n`` point output grid."""
    def tri(x, peak):
        return max(0.0, 1.0 - abs(x - peak) / 0.5)

    lo = lambda x: tri(x, 0.0)
    me = lambda x: tri(x, 0.5)
    hi = lambda x: tri(x, 1.0)
    w_hi = min(hi(d1), hi(d2))
    w_me = min(max(me(d1), me(d2)), max(hi(c1), hi(c2)))
    w_lo = min(lo(d1), lo(d2))
    num = den = 0.0
    for k in range(n):
        y = k / (n - 1)
        mu = max(min(lo(y), w_lo), min(me(y), w_me), min(hi(y), w_hi))
        num += y * mu
        den += mu
    return None if den == 0 else num / den


def quintic_coefficients(p0, p1, T):
    """Solve the six boundary conditions for c0..c5 directly."""
    A = np.array([
        [1, 0, 0, 0, 0, 0],
        [0, 1, 0, 0, 0, 0],
        [0, 0, 2, 0, 0, 0],
        [1, T, T**2, T**3, T**4, T**5],
        [0, 1, 2 * T, 3 * T**2, 4 * T**3, 5 * T**4],
        [0, 0, 2, 6 * T, 12 * T**2, 20 * T**3],
    ], dtype=float)
    return np.linalg.solve(A, np.array([p0, 0, 0, p1, 0, 0], dtype=float))


def drop_spot_grid(a, b, lower, upper, n=50):
    """Brute force over an n^3 lattice of the box, then bounded L-BFGS polish."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    lower, upper = np.asarray(lower, float), np.asarray(upper, float)
    axes = [np.linspace(lower[k], upper[k], n) for k in range(3)]
    X, Y, Z = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
    vals = np.linalg.norm(pts - a, axis=1) + np.linalg.norm(pts - b, axis=1)
    k = int(np.argmin(vals))
    f = lambda p: np.linalg.norm(p - a) + np.linalg.norm(p - b)
    res = minimize(f, pts[k], method="L-BFGS-B", bounds=list(zip(lower, upper)),
                   options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 500})
    if res.fun < vals[k]:
        return res.x, float(res.fun)
    return pts[k], float(vals[k])


def best_sequence_cost(home, apples, g):
    """Exhaustive minimum of the anchored path cost for a given pair-cost matrix."""
    n = len(apples)
    h = [math.dist(home, p) for p in apples]
    best = math.inf
    for perm in itertools.permutations(range(n)):
        cost = h[perm[0]] + h[perm[-1]] + sum(g[perm[i]][perm[i + 1]] for i in range(n - 1))
        best = min(best, cost)
    return best


def box_distance(p, lower, upper):
    q = np.clip(p, lower, upper)
    return float(np.linalg.norm(np.asarray(p) - q))
