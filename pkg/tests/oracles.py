"""Independent oracles used by the tests.

These deliberately take different computational routes than the library:
brute-force transitive closure for reachability, and direct numerical
quadrature of the matrix-exponential integral for the stationary covariance.
"""

import numpy as np
import scipy.integrate
import scipy.linalg


def transitive_closure(adj):
    """Boolean reachability matrix by iterated composition (brute force)."""
    a = np.asarray(adj, dtype=bool)
    n = a.shape[0]
    reach = a | np.eye(n, dtype=bool)
    for _ in range(n):
        reach = reach | (reach @ reach)
    return reach


def strongly_connected_bruteforce(adj):
    """Every ordered pair reachable, via the full transitive closure."""
    return bool(transitive_closure(adj).all())


def lyapunov_quadrature(a, s0, tail_tol=1e-16):
    """Quadrature of integral of expm(a t) s0 expm(a.T t) over t >= 0.

    Truncates at a horizon where the integrand norm is negligible, then
    integrates adaptively.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    s0 = np.atleast_2d(np.asarray(s0, dtype=float))
    scale = max(1.0, float(np.linalg.norm(s0)))
    horizon = 1.0
    while True:
        e = scipy.linalg.expm(a * horizon)
        if np.linalg.norm(e @ s0 @ e.T) < tail_tol * scale or horizon > 1e6:
            break
        horizon *= 1.5

    def integrand(t):
        e = scipy.linalg.expm(a * t)
        return e @ s0 @ e.T

    val, _ = scipy.integrate.quad_vec(
        integrand, 0.0, horizon, epsabs=1e-13, epsrel=1e-10
    )
    return val


def random_doubly_stochastic(rng, n, n_perms=3, min_coef=0.05):
    """Convex combination of the identity and random permutation matrices."""
    coefs = rng.dirichlet(np.ones(n_perms + 1))
    coefs = coefs * (1.0 - (n_perms + 1) * min_coef) + min_coef
    w = coefs[0] * np.eye(n)
    for c in coefs[1:]:
        perm = rng.permutation(n)
        w[np.arange(n), perm] += c
    return w
