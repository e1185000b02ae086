"""Independent reference computations shared by the test modules."""

import math

import mpmath
import numpy as np
from scipy import optimize, special


def naive_integrand_mp(v, a):
    b = 8 * mpmath.pi * a
    return mpmath.sqrt(v**4 + 2 * b * v**2) - v**2 - b + b**2 / (2 * v**2)


def lhy_integral_mp(a):
    """(1/(2 (2 pi)^3)) int F over R^3 with the naive integrand at 60 digits.

    Beyond |v| = R the expansion F = b^3 / (2 v^4) - 5 b^4 / (8 v^6) + ... is
    integrated by hand.
    """
    with mpmath.workdps(60):
        a = mpmath.mpf(a)
        b = 8 * mpmath.pi * a
        R = mpmath.mpf(10) ** 6
        f = lambda v: 4 * mpmath.pi * v**2 * naive_integrand_mp(v, a)
        val = mpmath.quad(f, [0, 1, 10, 100, 10**3, 10**4, 10**5, R])
        val += 4 * mpmath.pi * (b**3 / (2 * R) - 5 * b**4 / (24 * R**3))
        return float(val / (2 * (2 * mpmath.pi) ** 3))


def square_well_length(v0, radius):
    k = math.sqrt(v0 / 2.0)
    return radius - math.tanh(k * radius) / k


def square_well_neumann(v0, radius, ball_radius):
    """Analytic Neumann ground state of -u'' + (V/2) u = lam u for a square well.

    Inside u = sinh(k r) with k^2 = V0/2 - lam; outside u = A sin(w r) + B cos(w r)
    with w^2 = lam. The eigenvalue solves u'(Rb) Rb = u(Rb). Returns lam and
    int V f over R^3 for f = u / r normalised by f(Rb) = 1.
    """
    def outside(lam):
        k, w = math.sqrt(v0 / 2 - lam), math.sqrt(lam)
        u0, du0 = math.sinh(k * radius), k * math.cosh(k * radius)
        s, c = math.sin(w * radius), math.cos(w * radius)
        A = u0 * s + du0 * c / w
        B = u0 * c - du0 * s / w
        return k, w, A, B

    def neumann(lam):
        k, w, A, B = outside(lam)
        x = w * ball_radius
        u = A * math.sin(x) + B * math.cos(x)
        du = w * (A * math.cos(x) - B * math.sin(x))
        return du * ball_radius - u

    lam = optimize.brentq(neumann, 1e-16, min(v0 / 2, (math.pi / ball_radius) ** 2) * (1 - 1e-12),
                          xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    k, w, A, B = outside(lam)
    x = w * ball_radius
    scale = ball_radius / (A * math.sin(x) + B * math.cos(x))
    inner = radius * math.cosh(k * radius) / k - math.sinh(k * radius) / k**2
    return lam, 4 * math.pi * v0 * scale * inner


def bogoliubov_sums(a, N, kappa, eps):
    """sigma_L^2 and its H1 version by enumerating the lattice points of P_L."""
    b = 8 * math.pi * a * N**kappa
    low_sq = N ** (kappa + 2 * eps)
    m = int(math.floor(math.sqrt(low_sq) / (2 * math.pi))) + 1
    g = np.arange(-m, m + 1)
    nx, ny, nz = np.meshgrid(g, g, g, indexing="ij")
    p_sq = (2 * math.pi) ** 2 * (nx**2 + ny**2 + nz**2).ravel().astype(float)
    p_sq = p_sq[(p_sq > 0) & (p_sq <= low_sq)]
    A = p_sq + b
    E = np.sqrt(A * A - b * b)
    s2 = 0.5 * (A / E - 1.0)
    return math.fsum(s2.tolist()), math.fsum((p_sq * s2).tolist())


def displacement_matrix(alpha, dim):
    """<m| exp(alpha (a^* - a)) |n> for real alpha from the Laguerre closed form."""
    D = np.zeros((dim, dim))
    x = alpha * alpha
    for m in range(dim):
        for n in range(dim):
            lo, hi = min(m, n), max(m, n)
            val = (math.exp(0.5 * (math.lgamma(lo + 1) - math.lgamma(hi + 1))) * alpha ** (hi - lo)
                   * math.exp(-x / 2) * special.eval_genlaguerre(lo, hi - lo, x))
            D[m, n] = val if m >= n else val * (-1) ** (hi - lo)
    return D


def dense_oracle_norm(phase):
    """Independent e^A Omega in the orthonormal occupation basis with floats."""
    ms = phase.mode_set
    n = len(ms.modes)
    neg = lambda p: tuple(-x for x in p)
    add = lambda p, q: tuple(x + y for x, y in zip(p, q))

    def occ_of(state, p):
        i = ms.index.get(p)
        return 0 if i is None else state[i]

    def allowed(state, r, v):
        for i, k in enumerate(state):
            if not k:
                continue
            s = ms.modes[i]
            if ms.labels[i] == "H" and occ_of(state, add(neg(s), v)):
                return False
            if ms.labels[i] == "S" and (occ_of(state, add(r, neg(s)))
                                        or occ_of(state, add(neg(add(r, v)), neg(s)))):
                return False
        return True

    def apply(vec):
        out = {}
        for state, amp in vec.items():
            for r, v in ms.triples:
                if not allowed(state, r, v):
                    continue
                new = list(state)
                factor = 1.0
                for p in (add(r, v), neg(r), neg(v)):
                    i = ms.index[p]
                    new[i] += 1
                    factor *= math.sqrt(new[i])
                key = tuple(new)
                coef = float(phase.coefficient(r, v)) / math.sqrt(float(phase.N))
                out[key] = out.get(key, 0.0) + amp * factor * coef
        return out

    term = {(0,) * n: 1.0}
    total = {}
    m = 0
    while term:
        for k, a in term.items():
            total[k] = total.get(k, 0.0) + a
        m += 1
        term = {k: a / m for k, a in apply(term).items()}
    return math.fsum(a * a for a in total.values())
