"""Energy sums of the trial state on the momentum lattice 2*pi*Z^3.

Infinite lattice sums are split into a finite part, enumerated directly,
and a complement obtained from exact torus identities. Because the
rescaled correlation profile is supported inside the unit cell, sums such as
``sum_p eta_p**2`` or ``sum_{p,q} c_{p-q} eta_p eta_q`` equal real-space
integrals of the scattering solution (Parseval). Here and below
``c_p = N**kappa * V_hat(p / N**(1 - kappa))``.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, signal

from . import lattice
from .lattice import FOUR_PI_SQ, TWO_PI

LHY_COEFFICIENT = 128.0 / (15.0 * math.sqrt(math.pi))


class EnergyError(lattice.LatticeError):
    pass


# ---------------------------------------------------------------------------
# Lee-Huang-Yang integrand, Riemann sum and integral


def lhy_integrand(v_sq, a):
    """``F(v) = sqrt(v^4 + 16 pi a v^2) - v^2 - 8 pi a + (8 pi a)^2 / (2 v^2)``.

    Evaluated without cancellation as
    ``b^3 (S + 3 v^2) / (2 v^2 (S + v^2) (S + v^2 + b))`` with ``b = 8 pi a``
    and ``S = sqrt(v^4 + 2 b v^2)``.
    """
    if a < 0:
        raise ValueError("scattering length must be non-negative")
    v_sq = np.asarray(v_sq, dtype=float)
    if np.any(v_sq <= 0):
        raise ValueError("F has a pole at v = 0")
    b = 8.0 * np.pi * a
    S = np.sqrt(v_sq * (v_sq + 2.0 * b))
    return b**3 * (S + 3.0 * v_sq) / (2.0 * v_sq * (S + v_sq) * (S + v_sq + b))


def lhy_closed_form(a):
    """``4 pi a * 128 / (15 sqrt(pi)) * a^(3/2) = 512 sqrt(pi) / 15 * a^(5/2)``."""
    return 4.0 * np.pi * a * LHY_COEFFICIENT * a**1.5


def lhy_integral(a, rtol=1e-5):
    """Closed form and radial quadrature of ``(1 / (2 (2 pi)^3)) int F``.

    The quadrature uses ``v = sqrt(8 pi a) t``, under which
    ``F(v) v^2 dv = (8 pi a)^(5/2) F_1(t) t^2 dt``.
    """
    if a < 0:
        raise ValueError("scattering length must be non-negative")
    closed = lhy_closed_form(a)
    if a == 0:
        return {"closed_form": 0.0, "quadrature": 0.0, "relative_difference": 0.0}
    b = 8.0 * np.pi * a
    a1 = 1.0 / (8.0 * np.pi)

    def g(t):
        # F_1(t) t^2 -> 1/2 as t -> 0
        return float(lhy_integrand(t * t, a1)) * t * t if t > 0 else 0.5

    parts = [integrate.quad(g, lo, hi, epsabs=0.0, epsrel=1e-13, limit=200)[0]
             for lo, hi in ((0.0, 1.0), (1.0, 10.0), (10.0, np.inf))]
    quad = 4.0 * np.pi / (2.0 * TWO_PI**3) * b**2.5 * math.fsum(parts)
    rel = abs(quad - closed) / closed
    if rel > rtol:
        raise EnergyError(f"closed form and quadrature disagree by {rel:.3e}")
    return {"closed_form": closed, "quadrature": quad, "relative_difference": rel}


@dataclass(frozen=True)
class RiemannSum:
    """``half_sum = (1/2) sum_{v in h Z^3 \\ 0} F(v)`` and its normalisation."""

    a: float
    h: float
    cutoff: float
    shells: int
    half_sum: float
    tail: float
    certificate: float

    @property
    def normalized(self):
        """``h^3 / (2 (2 pi)^3) sum F``, which tends to the closed form as h -> 0."""
        return self.h**3 / TWO_PI**3 * self.half_sum

    @property
    def normalized_certificate(self):
        """Tail certificate on the scale of :attr:`normalized`."""
        return self.h**3 / TWO_PI**3 * self.certificate

    @property
    def deviation(self):
        closed = lhy_closed_form(self.a)
        return abs(self.normalized - closed) / closed if closed else abs(self.normalized)


def _lhy_tail(a, k):
    """``(1/2) int_{|v| > k} F dv`` (unnormalised, lattice density 1)."""
    f = lambda v: 4.0 * np.pi * v * v * float(lhy_integrand(v * v, a))
    return 0.5 * integrate.quad(f, k, np.inf, epsabs=0.0, epsrel=1e-12, limit=200)[0]


def lhy_riemann_sum(a, h=None, N=None, kappa=None, cutoff=20.0, tol=1e-2,
                    max_shells=lattice.DEFAULT_MAX_SHELLS):
    """Half lattice sum of F over ``h Z^3 \\ 0`` (caller applies ``N^kappa``).

    Either ``h`` or ``(N, kappa)`` with ``h = 2 pi N^(-kappa / 2)`` is given.
    Shells ``|v| <= cutoff`` are summed exactly; the remainder is replaced
    by the radial integral beyond ``h sqrt(M + 1/2)`` (``M`` the last shell
    index), with the shift of that radius by ``h`` used as certificate.
    """
    if h is None:
        if N is None or kappa is None:
            raise ValueError("give h or both N and kappa")
        h = TWO_PI * N ** (-kappa / 2.0)
    h = float(h)
    if not 0 < h < 1:
        raise ValueError("lattice spacing must lie in (0, 1)")
    if a == 0:
        return RiemannSum(a, h, cutoff, 0, 0.0, 0.0, 0.0)
    M = int(math.floor((cutoff / h) ** 2))
    index = lattice.shell_counts(M, max_shells=max_shells)
    half = 0.5 * lattice.sum_radial(lambda x: lhy_integrand(x / FOUR_PI_SQ * h * h, a), index,
                                    domain=lambda n: n > 0)
    k_eff = h * math.sqrt(M + 0.5)
    tail = _lhy_tail(a, k_eff) / h**3
    cert = abs(_lhy_tail(a, k_eff - h) - _lhy_tail(a, k_eff + h)) / h**3 / 2.0
    total = half + tail
    if cert > tol * total:
        raise lattice.CertificateError(
            f"tail certificate {cert:.3e} exceeds {tol:.0e} of the sum; raise the cutoff",
            required=2.0 * cutoff, certificate=cert)
    return RiemannSum(a, h, cutoff, M, total, tail, cert)


def predicted_upper_bound(rho, a, gamma_exp=1.1):
    """Main term of the energy density bound and its error exponent.

    Returns ``main = 4 pi rho^2 a (1 + 128/(15 sqrt(pi)) sqrt(rho a^3))``, the
    relative second-order term, the error exponent ``5/2 + 1/10`` for
    ``gamma = 11/10`` and ``kappa = (2 gamma - 1) / (3 gamma - 1)``.
    """
    x = rho * a**3
    if not 0 <= x < 1:
        raise ValueError("rho a^3 must lie in [0, 1)")
    second = LHY_COEFFICIENT * math.sqrt(x)
    return {"main": 4.0 * np.pi * rho**2 * a * (1.0 + second),
            "second_order_fraction": second,
            "error_exponent": 2.5 + (gamma_exp - 1.0),
            "kappa": kappa_of_gamma(gamma_exp)}


def kappa_of_gamma(gamma_exp):
    return (2.0 * gamma_exp - 1.0) / (3.0 * gamma_exp - 1.0)


def lhy_prediction(a, N, kappa):
    """``4 pi a N^(1+k) (1 + 128/(15 sqrt(pi)) (a^3 N^(3k-2))^(1/2))``."""
    return 4.0 * np.pi * a * N ** (1 + kappa) * (1.0 + LHY_COEFFICIENT * math.sqrt(a**3 * N ** (3 * kappa - 2)))


# ---------------------------------------------------------------------------
# lattice data shared by the energy sums


@dataclass
class _Lattice:
    """Dense per-shell arrays (index n) for one coefficient table."""

    table: object
    solution: object
    N: float
    kappa: float
    s: float
    nmax: int
    n_low: int
    n_high: int
    r3: np.ndarray
    eta: np.ndarray
    c: np.ndarray
    sig: np.ndarray
    gs: np.ndarray
    low: np.ndarray
    eta0: float
    c0: float
    cache: dict = field(default_factory=dict)

    def coef(self, name):
        """Parseval totals over the whole lattice Lambda^* (zero mode included)."""
        if name in self.cache:
            return self.cache[name]
        sol, N, k = self.solution, self.N, self.kappa
        if sol.potential.is_zero:
            val = 0.0
        elif name == "eta2":
            val = N ** (3 * k - 1) * sol.integral("w2")
        elif name == "p2eta2":
            val = N ** (1 + k) * sol.grad_w_sq()
        elif name == "ceta":
            val = -N ** (1 + k) * sol.integral("Vw")
        elif name == "cetaeta":
            val = N ** (2 + k) * sol.integral("Vw2")
        elif name == "rhs_eta":
            val = -N ** (1 + k) * sol.lambda_ell * sol.integral("fw")
        else:
            raise KeyError(name)
        self.cache[name] = val
        return val

    def radial(self, name, n):
        """Radial lattice functions at integer shells ``n``."""
        sol, N, k = self.solution, self.N, self.kappa
        kk = TWO_PI * np.sqrt(np.asarray(n, dtype=float)) / self.s
        if sol.potential.is_zero:
            return np.zeros(np.shape(kk))
        if name == "c_eta":       # (c * eta)_p
            return -N ** (1 + k) * sol.transform("Vw", kk)
        if name == "g_hat":       # (N^k V_hat * f_hat_N)_p
            return N**k * sol.transform("Vf", kk)
        if name == "c_eta_eta":   # sum_r (c * eta)_r eta_{r+v}
            return N ** (2 + k) * sol.transform("Vw2", kk)
        if name == "p2_eta_eta":  # sum_r r^2 eta_r eta_{r+v}
            return N ** (1 + k) * sol.transform("lap_w_w", kk)
        if name == "rhs":         # right side of the scattering relation
            return N**k * sol.lambda_ell * sol.transform("chi_f", kk)
        raise KeyError(name)

    def dense_radial(self, name):
        key = "dense_" + name
        if key not in self.cache:
            out = np.zeros(self.nmax + 1)
            occ = np.flatnonzero(self.r3)
            out[occ] = self.radial(name, occ)
            self.cache[key] = out
        return self.cache[key]

    def c_at(self, n):
        """``c`` at arbitrary integer shells (evaluated on the distinct values)."""
        n = np.asarray(n, dtype=np.int64)
        if n.size and n.max() <= self.nmax:
            return self.c[n]
        uniq, inv = np.unique(n, return_inverse=True)
        vals = self.N**self.kappa * self.solution.potential.fourier_hat(
            TWO_PI * np.sqrt(uniq.astype(float)) / self.s)
        return np.asarray(vals)[inv].reshape(n.shape)

    def shell_sum(self, values, mask):
        mask = mask & (self.r3 > 0)
        return math.fsum((self.r3[mask] * values[mask]).tolist())


def _lattice_data(table, solution, index=None):
    part = table.partition
    N, kappa = part.N, part.kappa
    nmax = table.max_n
    r3 = np.zeros(nmax + 1, dtype=np.int64)
    r3[table.n] = table.r3

    def dense(col, fill=0.0):
        out = np.full(nmax + 1, fill)
        out[table.n] = col
        return out

    s = N ** (1 - kappa)
    n_all = np.arange(nmax + 1)
    c = N**kappa * solution.potential.fourier_hat(TWO_PI * np.sqrt(n_all.astype(float)) / s)
    low = np.zeros(nmax + 1, dtype=bool)
    low[table.n] = table.low
    n_low = int(table.n[table.low].max()) if table.low.any() else 0
    n_high = part.max_not_high_shell
    if nmax < 2 * n_high + 2 * n_low + 16 * int(math.isqrt(max(n_high, 1))) and nmax < 4 * n_high:
        raise EnergyError(f"coefficient table reaches n={nmax}; the energy sums need shells up to "
                          f"about {4 * n_high} (about four times the P_H threshold)")
    lat = _Lattice(table, solution, N, kappa, s, nmax, n_low, n_high, r3,
                   dense(table.eta), c, dense(table.sigma), dense(table.gamma_sigma), low,
                   float(table.eta0), float(c[0]))
    return lat


def _rep_points(max_n, mask_fn):
    """Orbit representatives (and orbit sizes) of lattice points with a shell mask."""
    pts = lattice.ball_points(max_n)
    n = (pts * pts).sum(axis=1)
    pts = pts[mask_fn(n)]
    if len(pts) == 0:
        return np.zeros((0, 3), dtype=np.int64), np.zeros(0, dtype=np.int64)
    return lattice.orbit_representatives(pts)


def _tail_bound(lat, values_fn, power):
    """Integral bound of a shell sum beyond the table for a ``p^-power`` summand."""
    n_last = lat.nmax
    p_last = TWO_PI * math.sqrt(n_last)
    v_last = abs(values_fn(n_last))
    if power <= 3:
        return float("inf")
    return 4.0 * np.pi * v_last * p_last**3 / (power - 3.0) / TWO_PI**3


# ---------------------------------------------------------------------------
# the window convolution used by the exchange double sum


def _cube(M):
    ax = np.arange(-M, M + 1)
    X, Y, Z = np.meshgrid(ax, ax, ax, indexing="ij")
    return X * X + Y * Y + Z * Z


def _window_conv(lat, M, arrays):
    """``(c * X)_p`` for |p|_inf <= M, for each radial array ``X`` (cut to |z|^2 <= M^2)."""
    n_cube = _cube(M)
    n_big = _cube(2 * M)
    c_big = lat.c_at(n_big)
    if M * M > lat.nmax:
        raise EnergyError("coefficient table too short for the exchange window")
    out = []
    inside = n_cube <= M * M
    for arr in arrays:
        X = np.where(inside, arr[np.minimum(n_cube, lat.nmax)], 0.0)
        out.append((X, signal.fftconvolve(c_big, X, mode="valid")))
    return n_cube, inside, out


@dataclass
class EnergyBreakdown:
    """Named terms of the energy bound and the LHY comparison."""

    N: float
    kappa: float
    eps: float
    a_scat: float
    terms: dict
    lhy_sum: float
    lhy_integral: float
    total: float
    prediction: float
    residual: float
    total_n0: float
    grouped_total: float
    discarded: dict
    grouping_gap: float
    certificate: float
    window: int
    diagnostics: dict

    TERM_NAMES = ("mean_field", "kinetic_sigma", "pairing", "direct_L", "exchange_double",
                  "counter_L", "cubic_gain")

    @property
    def relative_residual(self):
        ref = 4.0 * np.pi * self.a_scat * self.N ** (1 + self.kappa)
        return self.residual / ref if ref else 0.0

    def as_dict(self):
        out = {"N": self.N, "kappa": self.kappa, "eps": self.eps, "a_scat": self.a_scat}
        out.update({k: self.terms[k] for k in self.TERM_NAMES})
        out.update({"lhy_sum": self.lhy_sum, "lhy_integral": self.lhy_integral, "total": self.total,
                    "prediction": self.prediction, "residual": self.residual,
                    "relative_residual": self.relative_residual, "total_n0": self.total_n0,
                    "n0_difference": self.total_n0 - self.total, "grouped_total": self.grouped_total,
                    "grouping_gap": self.grouping_gap, "certificate": self.certificate,
                    "window": self.window})
        out.update({"discarded_" + k: v for k, v in self.discarded.items()})
        out.update(self.diagnostics)
        return out


def _pair_sums(lat, reps, kinds, restrict_second):
    """Per-representative restricted sums ``sum_r A_r (eta_r + eta_{r+v})``.

    ``restrict_second=False`` sums over ``r in P_H``; ``True`` over
    ``r, r+v in P_H``. Complements of the ball ``B = {|z|^2 <= n_high}`` are
    taken from whole-lattice identities. Returns one array per kind with
    the value for each representative.
    """
    nh = lat.n_high
    B = lattice.ball_points(nh)
    nB = (B * B).sum(axis=1)
    eta = lat.eta
    A = {}
    full1 = {}
    for kind in kinds:
        if kind == "C":
            A[kind] = lat.c
            full1[kind] = lat.coef("ceta")
        elif kind == "K":
            A[kind] = FOUR_PI_SQ * np.arange(lat.nmax + 1) * eta
            full1[kind] = lat.coef("p2eta2")
        elif kind == "V":
            A[kind] = lat.dense_radial("c_eta")
            full1[kind] = lat.coef("cetaeta")
        else:
            raise KeyError(kind)
    shift_name = {"C": "c_eta", "K": "p2_eta_eta", "V": "c_eta_eta"}
    out = {kind: np.zeros(len(reps)) for kind in kinds}
    for i, v in enumerate(reps):
        nv = int(v @ v)
        dot = B @ v
        n_plus = nB + 2 * dot + nv
        n_minus = nB - 2 * dot + nv
        if n_plus.max() > lat.nmax or n_minus.max() > lat.nmax:
            raise EnergyError("coefficient table too short for the shifted ball")
        outside = n_minus > nh  # u in B with u - v outside B
        for kind in kinds:
            a = A[kind]
            full = full1[kind] + float(lat.radial(shift_name[kind], nv))
            ball = np.sum(a[nB] * (eta[nB] + eta[n_plus]))
            val = full - ball
            if restrict_second:
                nm = n_minus[outside]
                val -= np.sum(a[nm] * (eta[nm] + eta[nB[outside]]))
            out[kind][i] = val
    return out


def energy_breakdown(table, solution, index=None, window=None, high_precision=False):
    """Every term of the energy bound for one coefficient table.

    Parameters
    ----------
    table : CoefficientTable
        Must reach about four times the P_H threshold (the default of
        :func:`coefficients.build_table`).
    solution : ScatteringSolution
    window : int, optional
        Half side (lattice units) of the cube on which the exchange double
        sum is convolved directly; defaults to three times the P_L radius.
    """
    part = table.partition
    N, kappa, eps = part.N, part.kappa, part.eps
    a = table.a_scat
    lat = _lattice_data(table, solution, index)
    nn = np.arange(lat.nmax + 1)
    p2 = FOUR_PI_SQ * nn
    pos = nn > 0
    low = lat.low
    lc = pos & ~low
    eta, c, sig, gs = lat.eta, lat.c, lat.sig, lat.gs
    s2 = sig**2
    ss = lambda vals, mask: lat.shell_sum(vals, mask)
    cert = 0.0
    diag = {}

    # parts of lattice sums on P_L^c through whole-lattice identities
    def on_lc(total, vals, zero_val):
        return total - zero_val - ss(vals, low)

    eta2_lc = on_lc(lat.coef("eta2"), eta**2, lat.eta0**2)
    p2eta2_lc = on_lc(lat.coef("p2eta2"), p2 * eta**2, 0.0)
    ceta_lc = on_lc(lat.coef("ceta"), c * eta, lat.c0 * lat.eta0)

    # corrections where sinh/cosh differ from eta on P_L^c (fast decay)
    d_sig2 = np.where(lc, np.sinh(eta) ** 2 - eta**2, 0.0)
    d_gs = np.where(lc, 0.5 * np.sinh(2 * eta) - eta, 0.0)
    d1 = ss(p2 * d_sig2, lc)
    d2 = ss(c * d_gs, lc)
    cert += _tail_bound(lat, lambda n: p2[n] * d_sig2[n], 6.0) + _tail_bound(lat, lambda n: c[n] * d_gs[n], 6.0)

    mean_field = 0.5 * N ** (1 + kappa) * solution.potential.integral()
    sig_L_sq = ss(s2, low)
    kinetic = ss(p2 * s2, low) + p2eta2_lc + d1
    pairing = ss(c * gs, low) + ceta_lc + d2
    direct_L = ss(c * s2, low)
    counter = -sig_L_sq / N * ceta_lc

    # exchange double sum: g = gamma sigma = eta 1_{E^c} + delta, E = P_L u {0}
    nL = lat.n_low
    zL = math.sqrt(nL)
    if window is None:
        window = int(math.ceil(3.0 * zL)) + 2
    M = int(window)
    if M * M <= nL:
        raise EnergyError("exchange window must contain P_L")
    delta = np.where(low, gs, 0.0) + d_gs
    etaE = np.where(low, eta, 0.0)
    etaE[0] = lat.eta0
    n_cube, inside, ((dX, c_delta), (eX, c_etaE)) = _window_conv(lat, M, [delta, etaE])
    c_eta_d = lat.dense_radial("c_eta")
    # S(eta^c, eta^c)
    sum_E_eta_ceta = ss(etaE * c_eta_d, low) + lat.eta0 * float(lat.radial("c_eta", 0))
    S_EE = float(np.sum(eX * c_etaE))
    S_cc = lat.coef("cetaeta") - 2.0 * sum_E_eta_ceta + S_EE
    # S(eta^c, delta) = sum_p delta_p [(c*eta)_p - (c*etaE)_p]
    D_in = float(np.sum(dX))
    out_mask = pos & (nn > M * M)
    E_tot = float(np.sum(eX))
    S_delta_ceta = ss(delta * c_eta_d, pos)
    S_delta_cE_in = float(np.sum(dX * c_etaE))
    S_delta_cE_out = ss(delta * c * E_tot, out_mask)
    S_cd = S_delta_ceta - (S_delta_cE_in + S_delta_cE_out)
    # S(delta, delta)
    S_dd_in = float(np.sum(dX * c_delta))
    S_dd_out = 2.0 * ss(delta * c * D_in, out_mask)
    abs_out = ss(np.abs(delta), out_mask)
    cert_ex = abs(S_delta_cE_out) + abs(S_dd_out) + lat.c0 * abs_out**2
    cert_ex += _tail_bound(lat, lambda n: abs(delta[n] * c_eta_d[n]), 6.0)
    S_dd = S_dd_in + S_dd_out
    g_sq = ss(gs**2, low) + eta2_lc + ss(np.where(lc, 0.25 * np.sinh(2 * eta) ** 2 - eta**2, 0.0), lc)
    X_all = S_cc + 2.0 * S_cd + S_dd - lat.c0 * g_sq
    exchange = X_all / (2.0 * N)
    cert += cert_ex / (2.0 * N)

    # cubic gain and companions over v in P_L (orbit representatives)
    reps, counts = _rep_points(nL, lambda n: (n > 0) & (n <= nL) & low[np.minimum(n, lat.nmax)])
    n_rep = (reps * reps).sum(axis=1) if len(reps) else np.zeros(0, dtype=np.int64)
    ps = _pair_sums(lat, reps, ("C",), restrict_second=False)["C"]
    w_rep = counts * s2[n_rep]
    cubic = math.fsum((w_rep * ps).tolist()) / N

    total = mean_field + kinetic + pairing + direct_L + exchange + counter + cubic
    terms = {"mean_field": mean_field, "kinetic_sigma": kinetic, "pairing": pairing,
             "direct_L": direct_L, "exchange_double": exchange, "counter_L": counter,
             "cubic_gain": cubic}

    # Riemann sum and prediction
    rs = lhy_riemann_sum(a, N=N, kappa=kappa) if a > 0 else None
    lhy_sum = N**kappa * rs.half_sum if rs else 0.0
    lhy_int = N ** (2.5 * kappa) * lhy_closed_form(a)
    prediction = lhy_prediction(a, N, kappa)
    residual = total - prediction

    # variant with the condensate fraction N0/N = 1 - |sigma_L|^2 / N
    f0 = 1.0 - sig_L_sq / N
    total_n0 = total + (f0**2 - 1.0) * mean_field + (f0 - 1.0) * (pairing + direct_L)

    # alternate grouping and the discarded pieces
    g_hat = lat.dense_radial("g_hat")
    grouped_total = 0.5 * N ** (1 + kappa) * (solution.integral("Vf") if not solution.potential.is_zero else 0.0)
    grouped_total += ss(p2 * s2 + (s2 + gs) * g_hat - 0.5 * g_hat * eta, low)
    Lpts = lattice.ball_points(nL)
    nLp = (Lpts * Lpts).sum(axis=1)
    Lsel = (nLp > 0) & low[nLp]
    Lpts, nLp = Lpts[Lsel], nLp[Lsel]
    dd = Lpts[:, None, :] - Lpts[None, :, :]
    c_LL = c[(dd * dd).sum(axis=2)] if len(Lpts) else np.zeros((0, 0))
    eta_L, s2_L, gs_L = eta[nLp], s2[nLp], gs[nLp]
    # E1: exchange minus its retained part, of the exchange: (1/N) sum_{p in L^c, q in L} c eta_p gs_q + (1/2N) sum_{p != q in L^c}
    deltaL = np.where(low, gs, 0.0)
    S_cL = _S_eta_c_deltaL(lat, deltaL, c_eta_d, c_etaE, n_cube, inside)
    retained = S_cL / N + (S_cc - lat.c0 * eta2_lc) / (2.0 * N)
    E1 = exchange - retained
    # shifted-sum pieces over v in P_L
    sum_r_Lc_shift = np.zeros(len(reps))   # sum_{r in L^c} c_r eta_{r+v}
    sum_r_Lc_conv = np.zeros(len(reps))    # sum_{r in L^c} c_{r-v} eta_r
    for i, v in enumerate(reps):
        nv = int(v @ v)
        cv = float(lat.radial("c_eta", nv))
        u = Lpts + v
        nu_ = (u * u).sum(axis=1)
        sum_r_Lc_shift[i] = cv - lat.c0 * eta[nv] - np.sum(c[nLp] * eta[nu_])
        dlt = Lpts - v
        nd = (dlt * dlt).sum(axis=1)
        sum_r_Lc_conv[i] = cv - c[nv] * lat.eta0 - np.sum(c[nd] * eta[nLp])
    E_s4 = counter + cubic - math.fsum((w_rep * sum_r_Lc_shift).tolist()) / N
    E_shift = math.fsum((w_rep * (sum_r_Lc_shift - sum_r_Lc_conv)).tolist()) / N
    E_diag = lat.c0 * eta2_lc / (2.0 * N)
    rhs_d = lat.dense_radial("rhs")
    rhs_lc = lat.coef("rhs_eta") - float(lat.radial("rhs", 0)) * lat.eta0 - ss(rhs_d * eta, low)
    E2 = rhs_lc - lat.eta0 * ceta_lc / (2.0 * N)
    E3 = -float((s2_L + gs_L) @ c_LL @ eta_L) / N - lat.eta0 / N * ss(c * (s2 + gs), low)
    E5 = -0.5 * lat.c0 * lat.eta0 + float(eta_L @ c_LL @ eta_L) / (2.0 * N) + lat.eta0 / (2.0 * N) * ss(c * eta, low)
    discarded = {"d1": d1, "d2": d2, "E1": E1, "E_s4": E_s4, "E_shift": E_shift, "E_diag": -E_diag,
                 "E2": E2, "E3": E3, "E5": E5}
    grouping_gap = total - (grouped_total + math.fsum(discarded.values()))

    diag.update({
        "sigma_L_sq": sig_L_sq, "eta0": lat.eta0, "lambda_ell": solution.lambda_ell,
        "riemann_shells": rs.shells if rs else 0, "riemann_certificate": rs.certificate if rs else 0.0,
        "int_Vf": solution.integral("Vf") if not solution.potential.is_zero else 0.0,
    })
    return EnergyBreakdown(N, kappa, eps, a, terms, lhy_sum, lhy_int, total, prediction, residual,
                           total_n0, grouped_total, discarded, grouping_gap, cert, M, diag)


def _S_eta_c_deltaL(lat, deltaL, c_eta_d, c_etaE, n_cube, inside):
    """``sum_{p in L^c, q in L} c_{p-q} eta_p gs_q = sum_q gs_q [(c*eta)_q - (c*etaE)_q]``."""
    vals = deltaL[np.minimum(n_cube, lat.nmax)]
    vals = np.where(inside, vals, 0.0)
    return float(np.sum(vals * (c_eta_d[np.minimum(n_cube, lat.nmax)] - c_etaE)))


# ---------------------------------------------------------------------------
# closed sums of the cubic phase


def minimal_admissible_N(kappa, eps, n_max=10**9):
    """Smallest N (on a grid of 1000 points per decade) with a non-empty P_S."""
    for k in range(0, 1000 * int(math.log10(n_max)) + 1):
        N = 10.0 ** (k / 1000.0)
        lo = N ** (kappa - 2 * eps) / FOUR_PI_SQ
        hi = N ** (kappa + 2 * eps) / FOUR_PI_SQ
        n_lo = max(1, int(math.ceil(lo)))
        if n_lo <= hi:
            # r3(n) > 0 unless n = 4^a (8b + 7)
            for n in range(n_lo, int(math.floor(hi)) + 1):
                m = n
                while m % 4 == 0:
                    m //= 4
                if m % 8 != 7:
                    return N
    raise EnergyError("no admissible N found")


def cubic_closed_sums(table, solution=None, index=None, extended=True):
    """Leading closed sums of the cubic-phase expectations.

    ``K_sum = (2/N) sum r^2 eta_r (eta_r + eta_{r+v}) sigma_v^2``,
    ``C_sum = (2/N) sum c_r (eta_r + eta_{r+v}) sigma_v^2`` and
    ``V_sum = (1/N^2) sum (c * eta)_r (eta_r + eta_{r+v}) sigma_v^2`` over
    ``v in P_S, r in P_H`` with ``r + v in P_H``. ``C_ext`` is ``C_sum`` with
    v running over all of P_L.
    """
    if solution is None:
        solution = table.solution
    part = table.partition
    N = part.N
    lat = _lattice_data(table, solution, index)
    small = part.shell_S(np.arange(lat.nmax + 1)) & (np.arange(lat.nmax + 1) > 0)
    if not np.any(small & (lat.r3 > 0)):
        raise EnergyError(f"P_S is empty at N={N:g}; the smallest admissible N is "
                          f"{minimal_admissible_N(part.kappa, part.eps):.6g}")
    s2 = lat.sig**2
    sel = (lambda n: lat.low[np.minimum(n, lat.nmax)] & (n > 0)) if extended else \
        (lambda n: small[np.minimum(n, lat.nmax)])
    reps, counts = _rep_points(lat.n_low, sel)
    n_rep = (reps * reps).sum(axis=1)
    sums = _pair_sums(lat, reps, ("K", "C", "V"), restrict_second=True)
    w = counts * s2[n_rep]
    in_S = small[n_rep]
    out = {"K_sum": 2.0 / N * math.fsum((w * sums["K"])[in_S].tolist()),
           "C_sum": 2.0 / N * math.fsum((w * sums["C"])[in_S].tolist()),
           "V_sum": 1.0 / N**2 * math.fsum((w * sums["V"])[in_S].tolist())}
    if extended:
        out["C_ext"] = 2.0 / N * math.fsum((w * sums["C"]).tolist())
        out["C_relative_gap"] = abs(out["C_ext"] - out["C_sum"]) / abs(out["C_ext"]) if out["C_ext"] else 0.0
    return out
