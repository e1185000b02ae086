"""Box localization utilities: the Dirichlet cutoff, its identities and Legendre transforms.

The cutoff ``q_{L,ell}`` is 1 on the plateau ``|t| < L/2 - ell``, follows a
quarter cosine on the two margins ``|t -+ L/2| <= ell`` and vanishes outside
``[-L/2 - ell, L/2 + ell]``. Because the two margin windows overlap with
their periodic images in sine/cosine pairs, ``int |psi|^2 q^2`` over the
enlarged box equals ``int |psi|^2`` over one period for every L-periodic
``psi``.
"""

from dataclasses import dataclass

import numpy as np

from .quadrature import simpson_weights

PENALTY_CONSTANT = (np.pi / 4.0) ** 2 + np.pi**2 / 16.0
DEFAULT_GRID = 10_000
INFINITY_SENTINEL = 1e300


class ConvexityError(ValueError):
    """Raised by :func:`legendre_biconjugate` on non-convex samples."""

    def __init__(self, message, triple):
        super().__init__(message)
        self.triple = triple


def _check_ell(L, ell):
    if not 0.0 < ell < L / 2.0:
        raise ValueError(f"ell = {ell} must lie in (0, L/2) = (0, {L / 2.0})")


def _margin_depth(t, L, ell):
    """Depth ``u = |t| - (L/2 - ell)`` into the margin window (``0 <= u <= 2 ell``).

    One expression for both windows and the interior, so no sample falls
    between masks through rounding at the kinks.
    """
    return np.abs(t) - (L / 2.0 - ell)


def q_cutoff(t, L, ell):
    """Dirichlet cutoff ``q_{L,ell}(t)`` (vectorised over ``t``)."""
    _check_ell(L, ell)
    t = np.asarray(t, dtype=float)
    u = _margin_depth(t, L, ell)
    out = np.where(u <= 0.0, 1.0, np.cos(np.pi * np.clip(u, 0.0, 2.0 * ell) / (4.0 * ell)))
    out[u > 2.0 * ell] = 0.0
    return out[()] if out.ndim == 0 else out


def q_derivatives(t, L, ell):
    """First and second derivatives of the cutoff (one-sided values at the kinks)."""
    _check_ell(L, ell)
    t = np.asarray(t, dtype=float)
    w = np.pi / (4.0 * ell)
    u = _margin_depth(t, L, ell)
    sel = (u >= 0.0) & (u <= 2.0 * ell)
    d1 = np.where(sel, -w * np.sign(t) * np.sin(w * u), 0.0)
    d2 = np.where(sel, -w * w * np.cos(w * u), 0.0)
    return d1, d2


@dataclass(frozen=True)
class PeriodicFunction:
    """L-periodic test function ``psi`` with derivative ``dpsi`` (complex allowed)."""

    name: str
    psi: object
    dpsi: object


def periodic_function(name, L, k=1):
    """Shipped test functions: ``constant``, ``fourier`` (mode ``k``) and ``cosine_mix``."""
    w = 2.0 * np.pi / L
    if name == "constant":
        return PeriodicFunction(name, lambda t: np.ones_like(t, dtype=complex),
                                lambda t: np.zeros_like(t, dtype=complex))
    if name == "fourier":
        return PeriodicFunction(name, lambda t: np.exp(1j * k * w * t),
                                lambda t: 1j * k * w * np.exp(1j * k * w * t))
    if name == "cosine_mix":
        return PeriodicFunction(name, lambda t: (2.0 + np.cos(w * t)).astype(complex),
                                lambda t: (-w * np.sin(w * t)).astype(complex))
    raise ValueError(f"unknown test function {name!r}; use constant, fourier or cosine_mix")


PERIODIC_FUNCTIONS = ("constant", "fourier", "cosine_mix")


def _panel_quadrature(breaks, grid):
    """Composite Simpson nodes and weights with ~``grid`` nodes over the break points."""
    breaks = np.asarray(breaks, dtype=float)
    total = breaks[-1] - breaks[0]
    xs, ws = [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        n = max(2, int(round(grid * (b - a) / total)))
        n += n % 2
        xs.append(np.linspace(a, b, n + 1))
        ws.append(simpson_weights(n, (b - a) / n))
    return np.concatenate(xs), np.concatenate(ws)


def _enlarged(L, ell, grid):
    h = L / 2.0
    return _panel_quadrature([-h - ell, -h + ell, h - ell, h + ell], grid)


def partition_identity_check(psi, L, ell, grid=DEFAULT_GRID):
    """``|int q^2 |psi|^2 (enlarged box) - int |psi|^2 (one period)|``.

    ``psi`` is a callable or a :class:`PeriodicFunction`. Both sides use
    composite Simpson on panels split at the cutoff's kinks.
    """
    _check_ell(L, ell)
    f = psi.psi if isinstance(psi, PeriodicFunction) else psi
    t, w = _enlarged(L, ell, grid)
    lhs = np.dot(w, np.abs(f(t)) ** 2 * q_cutoff(t, L, ell) ** 2)
    s, ws = _panel_quadrature([-L / 2.0, L / 2.0], grid)
    rhs = np.dot(ws, np.abs(f(s)) ** 2)
    return {"lhs": float(lhs), "rhs": float(rhs), "residual": float(abs(lhs - rhs))}


def window_partition_residual(L, ell, n=100_001):
    """``max |q(t)^2 + q(t - L)^2 - 1|`` over the right margin window."""
    _check_ell(L, ell)
    t = np.linspace(L / 2.0 - ell, L / 2.0 + ell, n)
    return float(np.max(np.abs(q_cutoff(t, L, ell) ** 2 + q_cutoff(t - L, L, ell) ** 2 - 1.0)))


def kinetic_penalty_check(psi, L, ell, grid=DEFAULT_GRID, constant=PENALTY_CONSTANT):
    """Kinetic cost of the cutoff against ``int |psi'|^2 + C/ell^2 int |psi|^2 chi``.

    Returns ``lhs = int |(q psi)'|^2``, ``rhs``, ``margin = rhs - lhs``, the
    penalty term alone and ``measured_constant``, the smallest C for which
    the inequality holds on ``psi``.
    """
    _check_ell(L, ell)
    tf = psi if isinstance(psi, PeriodicFunction) else None
    if tf is None:
        raise TypeError("kinetic_penalty_check needs a PeriodicFunction carrying psi'")
    t, w = _enlarged(L, ell, grid)
    q = q_cutoff(t, L, ell)
    d1, _ = q_derivatives(t, L, ell)
    p, dp = tf.psi(t), tf.dpsi(t)
    lhs = float(np.dot(w, np.abs(d1 * p + q * dp) ** 2))
    s, ws = _panel_quadrature([-L / 2.0, L / 2.0], grid)
    grad = float(np.dot(ws, np.abs(tf.dpsi(s)) ** 2))
    chi = (np.abs(t + L / 2.0) <= ell) | (np.abs(t - L / 2.0) <= ell)
    mass = float(np.dot(w, np.abs(p) ** 2 * chi))
    penalty = constant / ell**2 * mass
    rhs = grad + penalty
    measured = (lhs - grad) * ell**2 / mass if mass > 0 else 0.0
    return {"lhs": lhs, "rhs": rhs, "margin": rhs - lhs, "gradient": grad, "penalty": penalty,
            "measured_constant": measured, "declared_constant": constant}


def cutoff_gradient_integral(L, ell, grid=DEFAULT_GRID):
    """``int q'(t)^2 dt`` over the line (two margin windows of ``pi^2/(16 ell)`` each)."""
    t, w = _enlarged(L, ell, grid)
    d1, _ = q_derivatives(t, L, ell)
    return float(np.dot(w, d1 * d1))


# ---------------------------------------------------------------------------
# Legendre transforms


@dataclass
class LegendreResult:
    x: np.ndarray
    f: np.ndarray
    y: np.ndarray
    f_star: np.ndarray
    infinite: np.ndarray
    f_star_star: np.ndarray
    max_deviation: float
    grid_bound: float
    sentinel: float

    def as_dict(self):
        return {"max_deviation": self.max_deviation, "grid_bound": self.grid_bound,
                "n_x": int(len(self.x)), "n_y": int(len(self.y)),
                "n_infinite": int(self.infinite.sum()), "sentinel": self.sentinel}


def check_convex(x, f, tol=1e-12):
    """Raise :class:`ConvexityError` unless the sample slopes are non-decreasing."""
    x = np.asarray(x, dtype=float)
    f = np.asarray(f, dtype=float)
    if np.any(np.diff(x) <= 0):
        raise ValueError("x samples must be strictly increasing")
    slopes = np.diff(f) / np.diff(x)
    bad = np.flatnonzero(np.diff(slopes) < -tol * np.maximum(1.0, np.abs(slopes[1:])))
    if bad.size:
        i = int(bad[0]) + 1
        triple = ((float(x[i - 1]), float(f[i - 1])), (float(x[i]), float(f[i])),
                  (float(x[i + 1]), float(f[i + 1])))
        raise ConvexityError(f"samples not convex at indices {i - 1}, {i}, {i + 1}: {triple}", triple)
    return slopes


def _conjugate(x, f, y):
    out = np.empty(len(y))
    step = max(1, 4_000_000 // len(x))
    for lo in range(0, len(y), step):
        yy = y[lo:lo + step]
        out[lo:lo + step] = np.max(np.outer(yy, x) - f[None, :], axis=1)
    return out


def legendre_biconjugate(x, f, n_y=None, unbounded=False, sentinel=INFINITY_SENTINEL, tol=1e-12):
    """Discrete Legendre transform ``f*`` and biconjugate ``f**`` of convex samples.

    Parameters
    ----------
    x, f : array_like
        Samples on an increasing grid; convexity is checked first.
    n_y : int, optional
        Number of dual points spread over ``[min slope - 1, max slope + 1]``
        (default ``len(x)``); the sample slopes themselves are added.
    unbounded : bool
        If False, ``f`` lives on ``[x[0], x[-1]]`` (``+inf`` outside) and ``f*``
        is finite. If True, the samples are a window of a convex function on
        the line, and ``f*(y)`` is ``+inf`` for ``y`` outside the closed slope
        range; such points carry ``sentinel`` and are flagged in
        ``infinite``. ``f**`` only uses finite points.
    """
    x = np.asarray(x, dtype=float)
    f = np.asarray(f, dtype=float)
    slopes = check_convex(x, f, tol)
    lo, hi = float(slopes.min()), float(slopes.max())
    n_y = len(x) if n_y is None else int(n_y)
    y = np.unique(np.concatenate([np.linspace(lo - 1.0, hi + 1.0, n_y), slopes]))
    fs = _conjugate(x, f, y)
    if unbounded:
        span = tol * max(1.0, abs(lo), abs(hi))
        infinite = (y < lo - span) | (y > hi + span)
    else:
        infinite = np.zeros(len(y), dtype=bool)
    finite = ~infinite
    fss = _conjugate(y[finite], fs[finite], x)
    f_star = np.where(infinite, sentinel, fs)
    dev = float(np.max(np.abs(fss - f)))
    hx = float(np.max(np.diff(x))) if len(x) > 1 else 0.0
    yf = y[finite]
    hy = float(np.max(np.diff(yf))) if len(yf) > 1 else 0.0
    return LegendreResult(x, f, y, f_star, infinite, fss, dev, hx * hx + hy * hy, sentinel)


def quadratic_conjugate(y):
    """Conjugate of ``x^2/2`` restricted to ``[-1, 1]``."""
    y = np.asarray(y, dtype=float)
    return np.where(np.abs(y) <= 1.0, 0.5 * y * y, np.abs(y) - 0.5)


def appendix_checks(L=10.0, ell=1.0, grid=DEFAULT_GRID, n_legendre=2001):
    """All localization checks with the shipped test functions."""
    out = {"L": L, "ell": ell, "grid": grid, "partition": {}, "kinetic": {}}
    for name in PERIODIC_FUNCTIONS:
        tf = periodic_function(name, L)
        out["partition"][name] = partition_identity_check(tf, L, ell, grid)
        out["kinetic"][name] = kinetic_penalty_check(tf, L, ell, grid)
    out["window_partition_residual"] = window_partition_residual(L, ell)
    x = np.linspace(-1.0, 1.0, n_legendre)
    res = legendre_biconjugate(x, 0.5 * x * x)
    d = res.as_dict()
    d["conjugate_error"] = float(np.max(np.abs(res.f_star - quadratic_conjugate(res.y))))
    out["legendre_quadratic"] = d
    return out
