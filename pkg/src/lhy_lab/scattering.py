"""Two-body scattering data for a radial, compactly supported potential.

Units have particle mass 1/2 and hbar = 1, so the relative two-body
operator is ``-Laplacian + V/2``. Radial problems are written for
``u(r) = r f(r)``, which removes the coordinate singularity at the origin.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, interpolate, optimize

from .quadrature import radial_transform

DEFAULT_INNER_INTERVALS = 2048
DEFAULT_OUTER_INTERVALS = 4096


class ScatteringError(RuntimeError):
    """Diagnostic failure of a radial solve."""


@dataclass(frozen=True)
class Potential:
    """Non-negative radial potential supported in ``r <= radius``.

    Parameters
    ----------
    kind : {"square-well", "tabulated-radial"}
    strength : float
        Height ``V0`` of the square well (peak sample value otherwise).
    radius : float
        Support radius ``R``.
    samples : tuple of ndarray, optional
        ``(r_i, V(r_i))`` for tabulated potentials, interpolated with a
        monotone cubic (PCHIP) spline so that positivity is preserved.
    """

    kind: str = "square-well"
    strength: float = 2.0
    radius: float = 1.0
    samples: tuple = None
    _spline: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind == "square-well":
            if not self.strength >= 0:
                raise ValueError("square-well strength must be non-negative")
            if not self.radius > 0:
                raise ValueError("radius must be positive")
        elif self.kind == "tabulated-radial":
            if self.samples is None:
                raise ValueError("tabulated potential needs samples")
            r, v = (np.asarray(a, dtype=float) for a in self.samples)
            if r.ndim != 1 or r.shape != v.shape or len(r) < 2:
                raise ValueError("samples must be two 1-d arrays of equal length >= 2")
            if np.any(np.diff(r) <= 0) or r[0] < 0:
                raise ValueError("sample radii must be non-negative and increasing")
            if np.any(v < 0):
                raise ValueError("potential samples must be non-negative")
            object.__setattr__(self, "samples", (r, v))
            object.__setattr__(self, "radius", float(r[-1]))
            object.__setattr__(self, "strength", float(v.max()))
            object.__setattr__(self, "_spline", interpolate.PchipInterpolator(r, v, extrapolate=True))
        else:
            raise ValueError(f"unknown potential kind {self.kind!r}")

    @classmethod
    def square_well(cls, v0, radius):
        return cls("square-well", float(v0), float(radius))

    @classmethod
    def from_file(cls, path):
        """Read a two-column ``r, V`` table (comma or whitespace separated)."""
        with open(path) as fh:
            text = fh.read()
        delim = "," if "," in text else None
        data = np.loadtxt(path, delimiter=delim, comments="#", ndmin=2)
        if data.shape[1] != 2:
            # allow a header line such as "r,V"
            data = np.loadtxt(path, delimiter=delim, comments="#", skiprows=1, ndmin=2)
        return cls("tabulated-radial", samples=(data[:, 0], data[:, 1]))

    @property
    def is_zero(self):
        if self.kind == "square-well":
            return self.strength == 0.0
        return not np.any(self.samples[1] > 0)

    def support_values(self, r):
        """V on ``0 <= r <= R``, using the left limit at ``r = R``."""
        r = np.asarray(r, dtype=float)
        if self.kind == "square-well":
            return np.full(r.shape, self.strength)
        v = self._spline(np.clip(r, 0.0, self.radius))
        return np.maximum(v, 0.0)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return np.where(r <= self.radius, self.support_values(r), 0.0)

    def _grid(self, intervals=4096):
        r = np.linspace(0.0, self.radius, intervals + 1)
        return r, self.support_values(r)

    def fourier_hat(self, k):
        """Radial Fourier transform ``V_hat(k)``."""
        k = np.asarray(k, dtype=float)
        if self.kind == "square-well":
            x = np.abs(k) * self.radius
            out = np.empty(np.shape(x))
            small = x < 1e-2
            xs = x[small]
            out[small] = (1.0 - xs**2 / 10.0 + xs**4 / 280.0 - xs**6 / 15120.0) / 3.0
            xl = x[~small]
            out[~small] = (np.sin(xl) - xl * np.cos(xl)) / xl**3
            out = 4.0 * np.pi * self.strength * self.radius**3 * out
            return out[()] if k.ndim == 0 else out
        return radial_transform([self._grid()], k)

    def integral(self):
        """``V_hat(0) = 4 pi int V r^2 dr``."""
        return float(self.fourier_hat(0.0))


def _rhs(potential, lam):
    def f(r, y):
        return (y[1], (0.5 * potential.support_values(r) - lam) * y[0])
    return f


def _integrate_inner(potential, lam, r_eval=None, rtol=1e-12):
    """Integrate ``u'' = (V/2 - lam) u`` on ``[0, R]`` from u(0)=0, u'(0)=1."""
    R = potential.radius
    sol = integrate.solve_ivp(
        _rhs(potential, lam), (0.0, R), (0.0, 1.0), method="DOP853",
        t_eval=r_eval, rtol=rtol, atol=1e-14 * max(1.0, R))
    if sol.status != 0:
        raise ScatteringError(f"radial integration failed at lambda={lam!r}: {sol.message}")
    return sol


def _exterior(u_r, du_r, mu, x):
    """Free solution of ``u'' = -mu^2 u`` a distance ``x`` beyond the support."""
    c = np.cos(mu * x)
    s_over = x * np.sinc(mu * x / np.pi)
    u = u_r * c + du_r * s_over
    du = -u_r * mu * mu * s_over + du_r * c
    return u, du


def scattering_length(potential, intervals=64, rtol=1e-12):
    """Scattering length of ``potential``.

    Solves the zero-energy equation ``-u'' + (V/2) u = 0`` with ``u(0) = 0``,
    ``u'(0) = 1`` through the support and on to ``2R``, then fits
    ``u = c (r - a)`` by least squares on ``[R, 2R]``.
    """
    if potential.is_zero:
        return 0.0
    R = potential.radius
    inner = _integrate_inner(potential, 0.0, rtol=rtol)
    y_r = inner.y[:, -1]
    if not np.all(np.isfinite(y_r)):
        raise ScatteringError("zero-energy solution overflowed inside the support")
    r_fit = np.linspace(R, 2.0 * R, intervals + 1)
    outer = integrate.solve_ivp(
        lambda r, y: (y[1], 0.0 * y[0]), (R, 2.0 * R), y_r, method="DOP853",
        t_eval=r_fit, rtol=rtol, atol=1e-14 * max(1.0, abs(y_r[0])))
    if outer.status != 0:
        raise ScatteringError(f"exterior integration failed: {outer.message}")
    c, b = np.polyfit(r_fit, outer.y[0], 1)
    if not c > 0:
        raise ScatteringError("zero-energy solution has non-positive exterior slope")
    return float(-b / c)


@dataclass(frozen=True)
class ScatteringSolution:
    """Lowest Neumann eigenpair on the ball of radius ``N**(1-kappa) ell``.

    ``r_in``/``f_in`` sample f on ``[0, R]`` and ``r_out``/``f_out`` on
    ``[R, ball_radius]``; both are uniform with an even number of intervals.
    """

    potential: Potential
    ell: float
    N: float
    kappa: float
    ball_radius: float
    lambda_ell: float
    a_scat: float
    r_in: np.ndarray = field(repr=False)
    f_in: np.ndarray = field(repr=False)
    r_out: np.ndarray = field(repr=False)
    f_out: np.ndarray = field(repr=False)

    @property
    def scale(self):
        """Length rescaling ``N**(1 - kappa)``."""
        return self.N ** (1.0 - self.kappa)

    @property
    def f_radial(self):
        r = np.concatenate([self.r_in, self.r_out[1:]])
        return r, np.concatenate([self.f_in, self.f_out[1:]])

    @property
    def w_radial(self):
        r, f = self.f_radial
        return r, 1.0 - f

    def profile(self, name):
        """Radial profile on both panels as ``[(r, h), ...]``.

        Names: ``w``, ``w2``, ``fw``, ``chi_f`` (f restricted to the ball), ``Vf``, ``Vw``,
        ``Vw2`` and ``lap_w_w`` (the product ``(-Laplacian w) w``, using the
        eigenvalue equation ``Laplacian f = (V/2 - lambda) f``).
        """
        v_in = self.potential.support_values(self.r_in)
        w_in, w_out = 1.0 - self.f_in, 1.0 - self.f_out
        zero = np.zeros_like(self.r_out)
        lam = self.lambda_ell
        if name == "w":
            return [(self.r_in, w_in), (self.r_out, w_out)]
        if name == "chi_f":
            return [(self.r_in, self.f_in), (self.r_out, self.f_out)]
        if name == "Vf":
            return [(self.r_in, v_in * self.f_in), (self.r_out, zero)]
        if name == "Vw":
            return [(self.r_in, v_in * w_in), (self.r_out, zero)]
        if name == "w2":
            return [(self.r_in, w_in**2), (self.r_out, w_out**2)]
        if name == "fw":
            return [(self.r_in, self.f_in * w_in), (self.r_out, self.f_out * w_out)]
        if name == "Vw2":
            return [(self.r_in, v_in * w_in**2), (self.r_out, zero)]
        if name == "lap_w_w":
            return [(self.r_in, (0.5 * v_in - lam) * self.f_in * w_in),
                    (self.r_out, -lam * self.f_out * w_out)]
        raise KeyError(f"unknown profile {name!r}")

    def transform(self, name, k):
        """Radial Fourier transform of the named profile in unscaled units."""
        pieces = [(r, h) for r, h in self.profile(name) if len(r) > 1]
        return radial_transform(pieces, k)

    def integral(self, name):
        return float(self.transform(name, 0.0))

    def w_hat(self, k):
        return self.transform("w", k)

    def grad_w_sq(self):
        """``int |grad w|^2``, equal to ``int (-Laplacian w) w`` since w is C^1 with compact support."""
        return self.integral("lap_w_w")

    def to_csv(self, path):
        r, f = self.f_radial
        with open(path, "w", newline="") as fh:
            fh.write("r,f\r\n")
            for ri, fi in zip(r, f):
                fh.write(f"{ri!r},{fi!r}\r\n")


def _even(n):
    n = int(math.ceil(n))
    return n + (n % 2)


def solve_neumann_ball(potential, ball_radius, *, ell=None, N=None, kappa=None,
                       grid_factor=1, rtol=1e-12, lam_rtol=1e-13):
    """Neumann ground state of ``-u'' + (V/2) u = lambda u`` on ``[0, ball_radius]``.

    The Neumann condition ``f'(ball_radius) = 0`` for ``f = u / r`` reads
    ``u'(R_b) = u(R_b) / R_b``. The eigenvalue is located by Brent's method
    on ``[0, (pi / R_b)**2]`` (the first Dirichlet eigenvalue of the free
    ball), using the free solution outside the support of V.
    """
    R = potential.radius
    Rb = float(ball_radius)
    if not Rb > R:
        raise ValueError(f"support radius {R} must be smaller than the ball radius {Rb}")
    a = scattering_length(potential)
    n_in = _even(DEFAULT_INNER_INTERVALS * grid_factor)
    n_out = _even(max(DEFAULT_OUTER_INTERVALS, 8 * (Rb - R)) * grid_factor)
    r_in = np.linspace(0.0, R, n_in + 1)
    r_out = np.linspace(R, Rb, n_out + 1)
    common = dict(potential=potential, ell=ell, N=N, kappa=kappa, ball_radius=Rb, a_scat=a,
                  r_in=r_in, r_out=r_out)
    if potential.is_zero:
        return ScatteringSolution(lambda_ell=0.0, f_in=np.ones_like(r_in),
                                  f_out=np.ones_like(r_out), **common)

    def shoot(lam):
        y = _integrate_inner(potential, lam, rtol=rtol).y[:, -1]
        u, du = _exterior(y[0], y[1], math.sqrt(lam), Rb - R)
        return (du - u / Rb) / max(abs(y[1]), 1e-300)

    hi = (math.pi / Rb) ** 2
    f_lo, f_hi = shoot(0.0), shoot(hi)
    if not (f_lo > 0 > f_hi):
        raise ScatteringError(
            f"no sign change of the Neumann shooting function on [0, {hi:.6g}] "
            f"(values {f_lo:.3e}, {f_hi:.3e})")
    lam = optimize.brentq(shoot, 0.0, hi, xtol=1e-300, rtol=lam_rtol, maxiter=500)
    sol = _integrate_inner(potential, lam, r_eval=r_in, rtol=rtol)
    u_in = sol.y[0]
    u_out, _ = _exterior(u_in[-1], sol.y[1][-1], math.sqrt(lam), r_out - R)
    norm = u_out[-1] / Rb
    f_in = np.empty_like(r_in)
    f_in[1:] = u_in[1:] / (r_in[1:] * norm)
    f_in[0] = 1.0 / norm  # u'(0) = 1
    f_out = u_out / (r_out * norm)
    return ScatteringSolution(lambda_ell=float(lam), f_in=f_in, f_out=f_out, **common)


def solve_neumann(potential, ell, N, kappa, grid_factor=1):
    """Neumann problem on the ball of radius ``N**(1 - kappa) * ell``."""
    if not 0.0 < ell < 0.5:
        raise ValueError("ell must lie in (0, 1/2)")
    if not 0.5 < kappa < 2.0 / 3.0:
        raise ValueError("kappa must lie in (1/2, 2/3)")
    Rb = N ** (1.0 - kappa) * ell
    return solve_neumann_ball(potential, Rb, ell=ell, N=N, kappa=kappa, grid_factor=grid_factor)


def ode_residual(solution):
    """Max residual of ``-u'' + (V/2 - lambda) u`` at interior inner nodes.

    Second derivatives are taken by fourth-order central differences of
    ``u = r f``, so the value measures both the solver and the sampling.
    """
    r, f = solution.r_in, solution.f_in
    u = r * f
    h = r[1] - r[0]
    upp = (-u[4:] + 16 * u[3:-1] - 30 * u[2:-2] + 16 * u[1:-3] - u[:-4]) / (12 * h * h)
    v = solution.potential.support_values(r[2:-2])
    res = -upp + (0.5 * v - solution.lambda_ell) * u[2:-2]
    return float(np.max(np.abs(res)) / max(1.0, np.max(np.abs(u))))


def neumann_slope(solution):
    """Radial derivative of f at the ball boundary (one-sided, 4th order)."""
    r, f = solution.r_out, solution.f_out
    h = r[1] - r[0]
    return float((25 * f[-1] - 48 * f[-2] + 36 * f[-3] - 16 * f[-4] + 3 * f[-5]) / (12 * h))


def eta_values(solution, p):
    """``eta_p = -N ** kappa / N ** (2 - 2 kappa) * w_hat(p / N ** (1 - kappa))``.

    ``p`` is the momentum modulus; ``p = 0`` gives ``eta_0 = -N w_hat_N(0)``.
    """
    N, kappa = solution.N, solution.kappa
    p = np.asarray(p, dtype=float)
    return -N ** (3.0 * kappa - 2.0) * solution.w_hat(p / solution.scale)


def eta_values_rescaled(solution, p):
    """Same coefficients computed from the rescaled profile ``w_N(x) = w(N^(1-kappa) x)``."""
    s = solution.scale
    pieces = [(r / s, h) for r, h in solution.profile("w")]
    return -solution.N * radial_transform(pieces, np.asarray(p, dtype=float))


def eta_table(solution, shells):
    """Map integer shells ``n`` (``|p|**2 = (2 pi)**2 n``) to ``eta_p``."""
    n = np.asarray(list(shells), dtype=np.int64)
    if np.any(n < 0):
        raise ValueError("shell indices must be non-negative")
    vals = eta_values(solution, 2.0 * np.pi * np.sqrt(n.astype(float)))
    vals = np.atleast_1d(vals)
    return {int(k): float(v) for k, v in zip(n, vals)}


def eta_zero(solution):
    """``eta_0 = -N**(3 kappa - 2) int w``."""
    return -solution.N ** (3.0 * solution.kappa - 2.0) * solution.integral("w")


def interaction_hat(solution, p):
    """``N**kappa V_hat(p / N**(1 - kappa))`` for momentum modulus ``p``."""
    return solution.N ** solution.kappa * solution.potential.fourier_hat(
        np.asarray(p, dtype=float) / solution.scale)


@dataclass
class RelationReport:
    shells: np.ndarray
    residual: np.ndarray
    max_residual: float
    method: str
    certificate: float = 0.0


def check_scattering_relation(solution, shells, method="parseval", window=None, tol=1e-3):
    """Residual of the momentum-space scattering relation on sampled shells.

    Evaluates ``p^2 eta_p + (N^k/2) V_hat(p/N^(1-k)) + (1/2N) sum_q N^k
    V_hat((p-q)/N^(1-k)) eta_q - N^(3-2k) lambda (chi_hat * f_hat_N)(p)``
    relative to the largest of the four terms.

    The convolution over q is either the exact torus identity
    ``sum_q N^k V_hat((p-q)/N^(1-k)) eta_q = -N^(1+k) (V w)_hat(p/N^(1-k))``
    (``method="parseval"``) or a direct lattice sum inside ``window`` with a
    tail certificate (``method="direct"``); the right-hand side always comes
    from the transform of ``chi f``.
    """
    from . import lattice

    N, kappa = solution.N, solution.kappa
    shells = np.asarray(shells, dtype=np.int64)
    p = 2.0 * np.pi * np.sqrt(shells.astype(float))
    k = p / solution.scale
    eta = eta_values(solution, p)
    t1 = p * p * eta
    t2 = 0.5 * interaction_hat(solution, p)
    cert = 0.0
    if method == "parseval":
        conv = -0.5 * N**kappa * solution.transform("Vw", k)
    elif method == "direct":
        if window is None:
            raise ValueError("direct method needs a window")
        eta_of_n = lambda n: eta_values(solution, 2.0 * np.pi * np.sqrt(n.astype(float)))
        c_of = lambda psq: interaction_hat(solution, np.sqrt(psq))
        c_eta = max(np.max(np.abs(eta_values(solution, np.linspace(window / 4, window, 64))
                                  * np.linspace(window / 4, window, 64) ** 2)), 1e-300)
        vmax = abs(solution.potential.integral())
        env_c = _hat_envelope(solution)
        conv = np.empty_like(p)
        for i, n in enumerate(shells):
            z = _shell_point(int(n))
            val, c = lattice.convolve_sum(
                c_of, eta_of_n, z, window,
                f_env=lambda q: N**kappa * min(vmax, env_c(q / solution.scale)),
                g_env=lambda s: c_eta / max(s * s, 1e-300))
            conv[i] = val / (2.0 * N)
            cert = max(cert, c / (2.0 * N))
        scale_ref = np.max(np.abs(np.stack([t1, t2]))) if len(p) else 0.0
        if tol is not None and scale_ref > 0 and cert > tol * scale_ref:
            raise lattice.CertificateError(
                f"convolution tail {cert:.3e} exceeds {tol:.1e} of the relation terms; enlarge the window",
                required=window * cert / (tol * scale_ref), certificate=cert)
    else:
        raise ValueError(f"unknown method {method!r}")
    rhs = N**kappa * solution.lambda_ell * solution.transform("chi_f", k)
    lhs = t1 + t2 + conv
    ref = np.max(np.abs(np.stack([t1, t2, conv, rhs])), axis=0)
    res = np.where(ref > 0, np.abs(lhs - rhs) / np.where(ref > 0, ref, 1.0), 0.0)
    return RelationReport(shells, res, float(res.max()) if len(res) else 0.0, method, cert)


def _hat_envelope(solution):
    """Non-increasing envelope of ``|V_hat(k)|`` from dense sampling."""
    ks = np.concatenate([[0.0], np.geomspace(1e-3, 1e4, 4000)])
    vals = np.abs(solution.potential.fourier_hat(ks))
    env = np.maximum.accumulate(vals[::-1])[::-1]
    tail = env[-1] * ks[-1] ** 2

    def f(k):
        if k >= ks[-1]:
            return tail / (k * k)
        return float(np.interp(k, ks, env))
    return f


def _shell_point(n):
    """A lattice point with ``|z|**2 = n`` (raises if the shell is empty)."""
    m = math.isqrt(n)
    for a in range(m, -1, -1):
        rest = n - a * a
        for b in range(min(a, math.isqrt(rest)), -1, -1):
            c2 = rest - b * b
            c = math.isqrt(c2)
            if c * c == c2 and c <= b:
                return np.array([a, b, c])
    raise ValueError(f"no lattice point with |z|^2 = {n}")


def ball_constants(solution, shells):
    """Measured ``sup |eta_p| p^2 / N^kappa`` and ``|eta_0| / N^kappa``."""
    N, kappa = solution.N, solution.kappa
    shells = np.asarray(shells, dtype=np.int64)
    p = 2.0 * np.pi * np.sqrt(shells.astype(float))
    eta = eta_values(solution, p)
    return {"eta_decay_constant": float(np.max(np.abs(eta) * p * p) / N**kappa),
            "eta0_constant": float(abs(eta_zero(solution)) / N**kappa)}


def ball_checks(potential, ball_radius, grid_factor=1):
    """``lambda R_b^3 / 3 - a`` and ``int V f - 8 pi a`` at one ball radius."""
    sol = solve_neumann_ball(potential, ball_radius, grid_factor=grid_factor)
    a = sol.a_scat
    return {"ball_radius": float(ball_radius), "a": a,
            "lambda": sol.lambda_ell,
            "lambda_error": sol.lambda_ell * ball_radius**3 / 3.0 - a,
            "vf_error": sol.integral("Vf") - 8.0 * np.pi * a}
