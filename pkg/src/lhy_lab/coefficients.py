"""Momentum classes and Bogoliubov coefficient tables on 2*pi*Z^3.

Rows are keyed by the integer shell ``n = |z|**2``; the squared momentum is
``(2*pi)**2 * n``. The low-momentum set P_L uses the Bogoliubov angle tau_p,
its complement uses the correlation coefficients eta_p of the scattering
solution.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import lattice
from .lattice import FOUR_PI_SQ
from .scattering import eta_values, eta_zero

DEFAULT_MAX_ROWS = 5_000_000


@dataclass(frozen=True)
class MomentumPartition:
    """Thresholds of the momentum sets, stored as squared moduli.

    ``P_L = {|p| <= N^(k/2+e)}``, ``P_S = {N^(k/2-e) <= |p| <= N^(k/2+e)}``
    and ``P_H = {|p| > N^(1-k-e)}``.
    """

    N: float
    kappa: float
    eps: float

    def __post_init__(self):
        if not (self.N > 0 and self.eps > 0):
            raise ValueError("N and eps must be positive")
        if not 3.0 * self.kappa - 2.0 + 4.0 * self.eps < 0.0:
            raise ValueError(f"3*kappa - 2 + 4*eps = {3 * self.kappa - 2 + 4 * self.eps:.4g} must be negative")

    @property
    def low_sq(self):
        return self.N ** (self.kappa + 2.0 * self.eps)

    @property
    def small_sq(self):
        return self.N ** (self.kappa - 2.0 * self.eps)

    @property
    def high_sq(self):
        return self.N ** (2.0 - 2.0 * self.kappa - 2.0 * self.eps)

    @property
    def thresholds(self):
        return {"low": self.low_sq, "small": self.small_sq, "high": self.high_sq}

    def in_L(self, p_sq):
        p_sq = np.asarray(p_sq, dtype=float)
        return (p_sq > 0) & (p_sq <= self.low_sq)

    def in_S(self, p_sq):
        p_sq = np.asarray(p_sq, dtype=float)
        return (p_sq >= self.small_sq) & (p_sq <= self.low_sq)

    def in_H(self, p_sq):
        return np.asarray(p_sq, dtype=float) > self.high_sq

    # shell-index variants (n in units of (2 pi)^2)
    def shell_L(self, n):
        return self.in_L(FOUR_PI_SQ * np.asarray(n, dtype=float))

    def shell_S(self, n):
        return self.in_S(FOUR_PI_SQ * np.asarray(n, dtype=float))

    def shell_H(self, n):
        return self.in_H(FOUR_PI_SQ * np.asarray(n, dtype=float))

    @property
    def max_low_shell(self):
        return int(math.floor(self.low_sq / FOUR_PI_SQ))

    @property
    def max_not_high_shell(self):
        """Largest shell index outside P_H."""
        return int(math.floor(self.high_sq / FOUR_PI_SQ))


def classify(p_sq, partition):
    """Class label of a squared momentum: ``"S"``, ``"L\\S"``, ``"H"`` or ``"other"``.

    ``"S"`` rows also belong to P_L. Boundaries follow the defining
    inequalities: <= for the upper edge of P_L and P_S, >= for the lower
    edge of P_S and strict > for P_H.
    """
    if not p_sq > 0:
        raise ValueError("the zero mode has no class")
    if partition.in_L(p_sq):
        return "S" if partition.in_S(p_sq) else "L\\S"
    if partition.in_H(p_sq):
        return "H"
    return "other"


def classify_array(p_sq, partition):
    p_sq = np.asarray(p_sq, dtype=float)
    out = np.full(p_sq.shape, "other", dtype=object)
    out[partition.in_H(p_sq)] = "H"
    low = partition.in_L(p_sq)
    out[low] = "L\\S"
    out[low & partition.in_S(p_sq)] = "S"
    return out


def bogoliubov_row(p_sq, a, N, kappa):
    """Bogoliubov angle and coefficients for squared momentum ``p_sq``.

    ``tanh(2 tau) = -8 pi a N^k / (p^2 + 8 pi a N^k)``. Returns ``tau``,
    ``sigma = sinh(tau)``, ``gamma = cosh(tau)`` and the closed forms of
    ``sigma**2`` and ``gamma * sigma``, written without cancellation.
    """
    if a < 0:
        raise ValueError("scattering length must be non-negative")
    p_sq = np.asarray(p_sq, dtype=float)
    if np.any(p_sq <= 0):
        raise ValueError("p_sq must be positive")
    b = 8.0 * np.pi * a * N**kappa
    tau = 0.5 * np.arctanh(-b / (p_sq + b))
    root = np.sqrt(p_sq * (p_sq + 2.0 * b))
    # (p^2 + b - root) = b^2 / (p^2 + b + root)
    sigma_sq = b * b / ((p_sq + b + root) * 2.0 * root)
    gamma_sigma = -b / (2.0 * root)
    return {"tau": tau, "sigma": np.sinh(tau), "gamma": np.cosh(tau),
            "sigma_sq": sigma_sq, "gamma_sigma": gamma_sigma}


@dataclass(frozen=True)
class CoefficientTable:
    """Per-shell coefficients; arrays are aligned with ``n``."""

    partition: MomentumPartition
    a_scat: float
    n: np.ndarray
    r3: np.ndarray
    cls: np.ndarray
    eta: np.ndarray
    tau: np.ndarray
    nu: np.ndarray
    sigma: np.ndarray
    gamma: np.ndarray
    eta0: float = 0.0
    solution: object = field(default=None, repr=False, compare=False)

    @property
    def p_sq(self):
        return FOUR_PI_SQ * self.n.astype(float)

    @property
    def sigma_sq(self):
        return self.sigma**2

    @property
    def gamma_sigma(self):
        return self.gamma * self.sigma

    @property
    def low(self):
        return self.partition.shell_L(self.n)

    @property
    def small(self):
        return self.partition.shell_S(self.n)

    @property
    def high(self):
        return self.partition.shell_H(self.n)

    @property
    def max_n(self):
        return int(self.n[-1]) if len(self.n) else 0

    def rows(self):
        """Mapping ``n -> row dict`` (convenient for small tables)."""
        out = {}
        for i, n in enumerate(self.n):
            out[int(n)] = {"class": self.cls[i], "eta": float(self.eta[i]), "tau": float(self.tau[i]),
                           "sigma": float(self.sigma[i]), "gamma": float(self.gamma[i]),
                           "nu": float(self.nu[i]), "sigma_sq": float(self.sigma[i] ** 2),
                           "gamma_sigma": float(self.gamma[i] * self.sigma[i])}
        return out

    def lookup(self, name, shells):
        """Values of a column at integer shells (must be in the table)."""
        col = getattr(self, name)
        pos = np.searchsorted(self.n, shells)
        if np.any(pos >= len(self.n)) or np.any(self.n[np.minimum(pos, len(self.n) - 1)] != shells):
            raise KeyError("shell outside the coefficient table")
        return col[pos]

    def dense(self, name, fill=0.0):
        """Column as a dense array indexed by n (0..max_n)."""
        out = np.full(self.max_n + 1, fill, dtype=float)
        out[self.n] = getattr(self, name)
        return out

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write("n,r3,class,eta,tau,sigma,gamma\r\n")
            for i in range(len(self.n)):
                cls = self.cls[i]
                cls = f'"{cls}"' if "\\" in cls else cls
                vals = ",".join(repr(float(x)) for x in (self.eta[i], self.tau[i], self.sigma[i], self.gamma[i]))
                fh.write(f"{int(self.n[i])},{int(self.r3[i])},{cls},{vals}\r\n")


def default_max_shell(partition):
    """Squared-momentum cutoff covering P_L and the first decade of P_H."""
    return max(4.0 * partition.high_sq, 4.0 * partition.low_sq)


def build_table(solution, partition, max_shell=None, index=None, max_rows=DEFAULT_MAX_ROWS):
    """Coefficient table on every occupied shell with ``(2 pi)^2 n <= max_shell``.

    A zero potential gives ``eta = 0`` on every row.
    """
    if max_shell is None:
        max_shell = default_max_shell(partition)
    max_n = int(math.floor(max_shell / FOUR_PI_SQ))
    if max_n + 1 > max_rows:
        raise lattice.LatticeError(f"table of {max_n + 1} shells exceeds the budget of {max_rows} rows")
    if index is None or index.max_n < max_n:
        index = lattice.shell_counts(max_n)
    n = index.shells
    n = n[(n > 0) & (n <= max_n)]
    r3 = index.counts[n]
    p_sq = FOUR_PI_SQ * n.astype(float)
    a = solution.a_scat
    pot_zero = solution.potential.is_zero
    eta = np.zeros(len(n)) if pot_zero else eta_values(solution, np.sqrt(p_sq))
    eta0 = 0.0 if pot_zero else eta_zero(solution)
    row = bogoliubov_row(p_sq, a, partition.N, partition.kappa)
    low = partition.in_L(p_sq)
    nu = np.where(low, row["tau"], eta)
    return CoefficientTable(partition, a, n, r3, classify_array(p_sq, partition), eta,
                            row["tau"], nu, np.sinh(nu), np.cosh(nu), eta0, solution)


NORM_NAMES = (
    "eta_Lc_sq", "eta_H_sq", "eta_Lc_inf", "eta_H_inf", "eta_Lc_H1_sq", "eta_H_H1_sq",
    "sigma_L_sq", "sigma_S_sq", "gamma_L_sq", "sigma_L_H1_sq", "sigma_S_H1_sq",
    "gamma_sigma_L_l1", "sigma_L_inf_sq", "gamma_L_inf_sq", "sigma_S_inf_sq", "gamma_S_inf_sq",
)


class NormTailError(lattice.CertificateError):
    pass


def _fsum_weighted(r3, vals):
    return math.fsum((r3 * vals).tolist())


def _tail_power_law(p, v, p_cut, power_sq):
    """Tail of ``sum_{|q| > p_cut} q^power_sq v(q)`` from a power-law fit of the last rows."""
    sel = slice(max(0, len(p) - max(8, len(p) // 5)), len(p))
    pp, vv = p[sel], np.abs(v[sel])
    good = vv > 0
    if good.sum() < 2:
        return 0.0, float("inf")
    slope, icpt = np.polyfit(np.log(pp[good]), np.log(vv[good]), 1)
    # sum over q > P of A q^(slope + power) ~ int 4 pi q^2 A q^(..) dq / (2 pi)^3
    expo = slope + power_sq + 2.0
    if expo >= -1.0:
        return float("inf"), slope
    A = math.exp(icpt)
    return 4.0 * np.pi * A * p_cut ** (expo + 1.0) / (-(expo + 1.0)) / (2 * np.pi) ** 3, slope


def norm_table(table, method="parseval", tail_fraction=0.01):
    """Every coefficient norm used in the Bogoliubov estimates.

    Squared l2 norms are shell sums ``r3(n) value(n)**2``; ``_H1`` norms
    weight by ``p**2``; ``_inf`` norms are maxima over rows; the l1 norm
    sums ``|gamma sigma|``.

    For the infinite sets P_L^c and P_H, ``method="parseval"`` completes the
    finite table exactly through the torus identities
    ``sum_p eta_p^2 = N^(3k-1) int w^2`` and
    ``sum_p p^2 eta_p^2 = N^(1+k) int |grad w|^2``; ``method="shells"``
    truncates at the table edge and refuses when a power-law tail estimate
    exceeds ``tail_fraction`` of the partial sum.
    """
    part = table.partition
    r3 = table.r3.astype(float)
    p_sq = table.p_sq
    low, small, high = table.low, table.small, table.high
    lc = ~low
    s2, g2 = table.sigma_sq, table.gamma**2
    gs = np.abs(table.gamma_sigma)
    eta2 = table.eta**2
    out = {}
    out["sigma_L_sq"] = _fsum_weighted(r3[low], s2[low])
    out["sigma_S_sq"] = _fsum_weighted(r3[small], s2[small])
    out["gamma_L_sq"] = _fsum_weighted(r3[low], g2[low])
    out["sigma_L_H1_sq"] = _fsum_weighted(r3[low], (p_sq * s2)[low])
    out["sigma_S_H1_sq"] = _fsum_weighted(r3[small], (p_sq * s2)[small])
    out["gamma_sigma_L_l1"] = _fsum_weighted(r3[low], gs[low])
    out["sigma_L_inf_sq"] = float(s2[low].max()) if low.any() else 0.0
    out["gamma_L_inf_sq"] = float(g2[low].max()) if low.any() else 0.0
    out["sigma_S_inf_sq"] = float(s2[small].max()) if small.any() else 0.0
    out["gamma_S_inf_sq"] = float(g2[small].max()) if small.any() else 0.0
    out["eta_Lc_inf"] = float(np.abs(table.eta[lc]).max()) if lc.any() else 0.0
    out["eta_H_inf"] = float(np.abs(table.eta[high]).max()) if high.any() else 0.0
    if table.max_n < part.max_not_high_shell:
        raise NormTailError("coefficient table does not reach P_H")
    if method == "parseval":
        sol = table.solution
        N, k = part.N, part.kappa
        if sol is None or sol.potential.is_zero:
            tot2 = tot_h1 = 0.0
        else:
            tot2 = N ** (3 * k - 1) * sol.integral("w2")
            tot_h1 = N ** (1 + k) * sol.grad_w_sq()
        e0 = table.eta0
        not_h = ~high
        out["eta_Lc_sq"] = tot2 - e0 * e0 - _fsum_weighted(r3[low], eta2[low])
        out["eta_H_sq"] = tot2 - e0 * e0 - _fsum_weighted(r3[not_h], eta2[not_h])
        out["eta_Lc_H1_sq"] = tot_h1 - _fsum_weighted(r3[low], (p_sq * eta2)[low])
        out["eta_H_H1_sq"] = tot_h1 - _fsum_weighted(r3[not_h], (p_sq * eta2)[not_h])
    elif method == "shells":
        p = np.sqrt(p_sq)
        p_cut = p[-1]
        for name, mask, power in (("eta_Lc_sq", lc, 0.0), ("eta_H_sq", high, 0.0),
                                  ("eta_Lc_H1_sq", lc, 2.0), ("eta_H_H1_sq", high, 2.0)):
            part_sum = _fsum_weighted(r3[mask], (p_sq ** (power / 2.0) * eta2)[mask])
            tail, _ = _tail_power_law(p, eta2, p_cut, power)
            if not tail <= tail_fraction * abs(part_sum) and part_sum != 0.0:
                raise NormTailError(f"tail estimate for {name} is {tail:.3e}, above "
                                    f"{tail_fraction:.0%} of the partial sum {part_sum:.3e}; enlarge max_shell",
                                    certificate=tail)
            out[name] = part_sum
    else:
        raise ValueError(f"unknown method {method!r}")
    return {name: float(out[name]) for name in NORM_NAMES}
