"""Exact truncated Fock-space oracle for the cubic phase on a finite mode list.

States are sparse maps from occupation vectors to coefficients in the
*monomial* basis ``prod_i (a_i^*)^{n_i} Omega``. In that basis ``a_i^*``
shifts ``n_i -> n_i + 1`` with weight 1 and ``a_i`` shifts ``n_i -> n_i - 1``
with weight ``n_i``; the squared norm of a monomial is ``prod_i n_i!``. The
amplitude in the orthonormal occupation basis is ``coef * sqrt(prod n_i!)``,
for which the same operators carry the usual ``sqrt(n+1)``, ``sqrt(n)``
weights. Keeping monomials avoids square roots, so identities with rational
inputs are checked in exact :class:`fractions.Fraction` arithmetic.

The coupling ``1/sqrt(N)`` of the cubic phase is not stored in the
coefficients: a state with ``3m`` particles carries the implicit factor
``N^(-m/2)``, and expectations of number-conserving operators weight the
``3m``-particle sector by ``N^(-m)``.
"""

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import linalg


def _vec(p):
    return tuple(int(x) for x in p)


def _neg(p):
    return tuple(-x for x in p)


def _add(p, q):
    return tuple(a + b for a, b in zip(p, q))


def _sq(p):
    return sum(x * x for x in p)


def _even_key(p):
    p = _vec(p)
    return max(p, _neg(p))


@dataclass(frozen=True)
class ModeSet:
    """Finite list of lattice modes (integer vectors) labelled ``"S"`` or ``"H"``.

    ``triples`` are pairs ``(r, v)`` with ``r`` of class H, ``v`` of class S
    and ``r + v`` of class H; the modes ``r + v``, ``-r`` and ``-v`` created by
    each triple must be listed. Momenta are ``2 pi`` times the vectors.
    """

    modes: tuple
    labels: tuple
    triples: tuple
    index: dict = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        modes = tuple(_vec(p) for p in self.modes)
        if len(set(modes)) != len(modes):
            raise ValueError("modes must be distinct")
        if len(self.labels) != len(modes) or any(c not in ("S", "H") for c in self.labels):
            raise ValueError("one label S or H per mode")
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "index", {p: i for i, p in enumerate(modes)})
        triples = tuple((_vec(r), _vec(v)) for r, v in self.triples)
        object.__setattr__(self, "triples", triples)
        for r, v in triples:
            rv = _add(r, v)
            if self.label(v) != "S" or self.label(_neg(r)) != "H" or self.label(rv) != "H":
                raise ValueError(f"triple {(r, v)} violates r in H, v in S, r+v in H")
            if self.label(_neg(v)) != "S":
                raise ValueError(f"triple {(r, v)}: mode -v must be listed with class S")

    def label(self, p):
        i = self.index.get(_vec(p))
        return None if i is None else self.labels[i]

    @classmethod
    def from_triples(cls, triples, orbits=True):
        """Mode set spanned by ``triples``; with ``orbits`` each ``(r, v)`` is
        completed by its partner ``(-r - v, v)``."""
        triples = [(_vec(r), _vec(v)) for r, v in triples]
        if orbits:
            full = []
            for r, v in triples:
                for t in ((r, v), (_neg(_add(r, v)), v)):
                    if t not in full:
                        full.append(t)
            triples = full
        modes, labels = [], []

        def put(p, c):
            if p in modes:
                if labels[modes.index(p)] != c:
                    raise ValueError(f"mode {p} is labelled both S and H")
                return
            modes.append(p)
            labels.append(c)

        for r, v in triples:
            put(v, "S")
            put(_neg(v), "S")
            put(r, "H")
            put(_neg(r), "H")
            put(_add(r, v), "H")
            put(_neg(_add(r, v)), "H")
        return cls(tuple(modes), tuple(labels), tuple(triples))

    def orbit_closed(self):
        ts = set(self.triples)
        return all((_neg(_add(r, v)), v) in ts for r, v in self.triples)


class FockState:
    """Sparse state in the monomial basis (see the module docstring)."""

    def __init__(self, n_modes, amps=None, cap=None, truncated=False):
        self.n_modes = n_modes
        self.amps = dict(amps or {})
        self.cap = cap
        self.truncated = truncated

    @classmethod
    def vacuum(cls, n_modes, cap=None, one=1):
        return cls(n_modes, {(0,) * n_modes: one}, cap)

    def copy(self):
        return FockState(self.n_modes, self.amps, self.cap, self.truncated)

    def __add__(self, other):
        out = self.copy()
        out.truncated = self.truncated or other.truncated
        for k, c in other.amps.items():
            out.amps[k] = out.amps.get(k, 0) + c
        return out

    def scale(self, lam):
        return FockState(self.n_modes, {k: lam * c for k, c in self.amps.items()}, self.cap, self.truncated)

    def clean(self):
        self.amps = {k: c for k, c in self.amps.items() if c != 0}
        return self

    @staticmethod
    def weight(occ):
        w = 1
        for n in occ:
            if n > 1:
                w *= math.factorial(n)
        return w

    def inner(self, other, sector_weight=None):
        """``<self, other>``; ``sector_weight(m)`` multiplies the 3m-particle sector."""
        tot = []
        for k, c in self.amps.items():
            d = other.amps.get(k)
            if d is None:
                continue
            term = c * d * self.weight(k)
            if sector_weight is not None:
                term = term * sector_weight(sum(k) // 3)
            tot.append(term)
        return _exact_sum(tot)

    def norm_sq(self, sector_weight=None):
        return self.inner(self, sector_weight)

    def amplitude(self, occ, sector_scale=1.0):
        """Amplitude in the orthonormal occupation basis."""
        c = self.amps.get(tuple(occ), 0)
        return float(c) * math.sqrt(self.weight(occ)) * sector_scale ** (sum(occ) / 3.0)

    @property
    def particle_counts(self):
        return sorted({sum(k) for k in self.amps})


def _exact_sum(terms):
    if terms and all(isinstance(t, (int, Fraction)) for t in terms):
        return sum(terms, Fraction(0))
    return math.fsum(float(t) for t in terms)


def create(i, state):
    """``a_i^* state`` (drops components above the particle cap and flags it)."""
    out = FockState(state.n_modes, cap=state.cap, truncated=state.truncated)
    for k, c in state.amps.items():
        if state.cap is not None and sum(k) + 1 > state.cap:
            out.truncated = True
            continue
        kk = list(k)
        kk[i] += 1
        kk = tuple(kk)
        out.amps[kk] = out.amps.get(kk, 0) + c
    return out


def annihilate(i, state):
    """``a_i state``."""
    out = FockState(state.n_modes, cap=state.cap, truncated=state.truncated)
    for k, c in state.amps.items():
        if k[i] == 0:
            continue
        kk = list(k)
        kk[i] -= 1
        kk = tuple(kk)
        out.amps[kk] = out.amps.get(kk, 0) + c * k[i]
    return out


def number(i, state):
    return FockState(state.n_modes, {k: c * k[i] for k, c in state.amps.items() if k[i]},
                     state.cap, state.truncated)


# ---------------------------------------------------------------------------
# the cubic phase


def theta_cutoff(mode_set, occ, r, v):
    """Cutoff of the triple ``(r, v)`` on the occupation vector ``occ`` (0 or 1).

    The first product kills the action when an occupied H mode ``s`` has an
    occupied partner ``-s + v``; the second when an occupied S mode ``w``
    meets an occupied ``r - w`` or ``-r - v - w``. Modes outside the list are
    empty.
    """
    idx = mode_set.index
    occupied = [mode_set.modes[i] for i, n in enumerate(occ) if n > 0]

    def N(p):
        i = idx.get(p)
        return 0 if i is None else occ[i]

    for s in occupied:
        lab = mode_set.labels[idx[s]]
        if lab == "H" and N(_add(_neg(s), v)) > 0:
            return 0
        if lab == "S":
            w = s
            if N(_add(r, _neg(w))) + N(_add(_neg(_add(r, v)), _neg(w))) > 0:
                return 0
    return 1


@dataclass
class CubicPhase:
    """``A = sum_{(r,v)} eta_r sigma_v a*_{r+v} a*_{-r} a*_{-v} Theta_{r,v}``.

    The coefficients include ``1/sqrt(N)`` only implicitly (see the module
    docstring); ``N`` is kept for the expectation formulas.
    """

    mode_set: ModeSet
    eta: dict
    sigma: dict
    N: object = 1

    def coefficient(self, r, v):
        return self.eta[_even_key(r)] * self.sigma[_even_key(v)]

    def apply(self, state):
        ms = self.mode_set
        out = FockState(state.n_modes, cap=state.cap, truncated=state.truncated)
        for occ, c in state.amps.items():
            if state.cap is not None and sum(occ) + 3 > state.cap:
                out.truncated = True
                continue
            for r, v in ms.triples:
                if not theta_cutoff(ms, occ, r, v):
                    continue
                kk = list(occ)
                for p in (_add(r, v), _neg(r), _neg(v)):
                    kk[ms.index[p]] += 1
                kk = tuple(kk)
                out.amps[kk] = out.amps.get(kk, 0) + c * self.coefficient(r, v)
        return out.clean()


def build_A(mode_set, eta, sigma, N=1):
    """Cubic phase on ``mode_set``; ``eta`` and ``sigma`` map vectors (or their
    negatives) to values and are treated as even functions."""
    if not mode_set.triples:
        raise ValueError("the cubic phase needs at least one triple")
    eta = {_even_key(k): val for k, val in eta.items()}
    sigma = {_even_key(k): val for k, val in sigma.items()}
    for r, v in mode_set.triples:
        for p in (r, _add(r, v)):
            if _even_key(p) not in eta:
                raise KeyError(f"eta missing for {p}")
        if _even_key(v) not in sigma:
            raise KeyError(f"sigma missing for {v}")
    return CubicPhase(mode_set, eta, sigma, N)


@dataclass
class CubicVector:
    """``xi = e^A Omega`` stored by sector: ``sectors[m] = A^m Omega / m!``."""

    phase: CubicPhase
    sectors: list
    saturated: bool
    truncated: bool

    @property
    def state(self):
        out = self.sectors[0]
        for s in self.sectors[1:]:
            out = out + s
        return out

    def sector_weight(self):
        N = self.phase.N
        one = Fraction(1) if isinstance(N, (int, Fraction)) else 1.0
        return lambda m: one / N**m

    def norm_sq(self):
        return self.state.norm_sq(self.sector_weight())


def exp_A_vacuum(phase, max_m=None, cap=None):
    """Exact ``e^A Omega`` on the finite mode list.

    The series terminates because the cutoff forbids a repeated S momentum,
    so ``A^m Omega = 0`` once ``m`` exceeds the number of distinct v's.
    """
    ms = phase.mode_set
    n = len(ms.modes)
    exact = all(isinstance(x, (int, Fraction)) for x in list(phase.eta.values()) + list(phase.sigma.values()))
    one = Fraction(1) if exact else 1.0
    if max_m is None:
        max_m = len({_even_key(v) for _, v in ms.triples}) + 1
    if cap is not None and 3 * max_m > cap:
        raise ValueError("particle cap below 3 * max_m")
    term = FockState.vacuum(n, cap, one)
    sectors = [term]
    saturated = False
    for m in range(1, max_m + 1):
        term = phase.apply(term).scale(one / m)
        if not term.amps:
            saturated = True
            break
        sectors.append(term)
    truncated = any(s.truncated for s in sectors)
    return CubicVector(phase, sectors, saturated, truncated)


# ---------------------------------------------------------------------------
# closed sums


def theta_product(tuple_rv):
    """Combinatorial cutoff over an ordered list of triples ``[(r_i, v_i)]``."""
    m = len(tuple_rv)
    hs = [(_neg(r), _add(r, v)) for r, v in tuple_rv]
    for i in range(m):
        for j in range(m):
            vj = tuple_rv[j][1]
            for k in range(m):
                if j == k:
                    continue
                for p_i in hs[i]:
                    target = _add(_neg(p_i), vj)
                    if target in hs[k]:
                        return 0
    return 1


def _tuples(phase, m):
    return itertools.product(phase.mode_set.triples, repeat=m)


def _orbit_factor(phase, r, v):
    eta = phase.eta
    e = eta[_even_key(r)] + eta[_even_key(_add(r, v))]
    return e * e * phase.sigma[_even_key(v)] ** 2


def closed_sector_sums(phase, max_m):
    """``Z_m = sum_{tuples} theta prod (eta_r + eta_{r+v})^2 sigma_v^2`` for m <= max_m."""
    out = []
    for m in range(max_m + 1):
        terms = []
        for tup in _tuples(phase, m):
            if not theta_product(tup):
                continue
            prod = 1
            for r, v in tup:
                prod = prod * _orbit_factor(phase, r, v)
            terms.append(prod)
        out.append(_exact_sum(terms) if terms else 0)
    return out


def closed_norm(phase, max_m):
    """Norm of ``e^A Omega`` from the closed combinatorial series."""
    N = phase.N
    Z = closed_sector_sums(phase, max_m)
    return _exact_sum([Z[m] / (2**m * math.factorial(m) * N**m) for m in range(len(Z))])


def closed_kinetic(phase, max_m):
    """``<xi, K xi>`` from the closed series (momenta ``2 pi`` times the vectors)."""
    N = phase.N
    four_pi_sq = (2 * math.pi) ** 2
    terms = []
    for m in range(1, max_m + 1):
        for tup in _tuples(phase, m):
            if not theta_product(tup):
                continue
            prod = 1
            for r, v in tup:
                prod = prod * _orbit_factor(phase, r, v)
            r, v = tup[-1]
            kin = _sq(r) + _sq(v) + _sq(_add(r, v))
            terms.append(float(prod) * kin / (2**m * math.factorial(m - 1) * float(N) ** m))
    return four_pi_sq * math.fsum(terms)


def closed_number(phase, max_m, power=1):
    """``<xi, N^power xi>`` from the sector sums: sector m carries 3m particles."""
    N = phase.N
    Z = closed_sector_sums(phase, max_m)
    return _exact_sum([(3 * m) ** power * Z[m] / (2**m * math.factorial(m) * N**m)
                       for m in range(len(Z))])


# ---------------------------------------------------------------------------
# direct expectations


def direct_number(xi, power=1):
    w = xi.sector_weight()
    st = xi.state
    terms = [c * c * st.weight(k) * w(sum(k) // 3) * sum(k) ** power for k, c in st.amps.items()]
    return _exact_sum(terms)


def direct_kinetic(xi):
    ms = xi.phase.mode_set
    p2 = [(2 * math.pi) ** 2 * _sq(p) for p in ms.modes]
    w = xi.sector_weight()
    st = xi.state
    terms = [float(c * c * st.weight(k) * w(sum(k) // 3)) * sum(pi * n for pi, n in zip(p2, k))
             for k, c in st.amps.items()]
    return math.fsum(terms)


def sector_invariant(xi):
    """True when every stored key has 3m particles with m of them in S modes."""
    labels = xi.phase.mode_set.labels
    for k in xi.state.amps:
        tot = sum(k)
        n_s = sum(n for n, c in zip(k, labels) if c == "S")
        if tot % 3 or 3 * n_s != tot:
            return False
    return True


def pair_expectation(xi, i, j):
    """``<xi, a_i a_j xi>`` (vanishes on superpositions of 3m-particle states)."""
    st = xi.state
    tgt = annihilate(i, annihilate(j, st))
    tot = []
    for k, c in tgt.amps.items():
        d = st.amps.get(k)
        if d is not None:
            tot.append(float(c * d * st.weight(k)))
    return math.fsum(tot)


def cubic_operator_triples(mode_set):
    """Pairs ``(p, r)`` of listed H modes with ``p + r`` a listed S mode and ``-p, -r`` listed."""
    out = []
    for p, lp in zip(mode_set.modes, mode_set.labels):
        if lp != "H":
            continue
        for r, lr in zip(mode_set.modes, mode_set.labels):
            if lr != "H":
                continue
            pr = _add(p, r)
            if mode_set.label(pr) == "S" and mode_set.label(_neg(p)) == "H" and mode_set.label(_neg(r)) == "H":
                out.append((p, r))
    return out


def direct_cubic(xi, c, gamma, n0_over_n=1.0):
    """``<xi, C xi>`` with ``C = sqrt(N0)/N sum c_r sigma_{p+r} gamma_p gamma_r (a*a*a* + h.c.)``.

    ``c`` and ``gamma`` are maps on vectors (even). Float arithmetic.
    """
    phase = xi.phase
    ms = phase.mode_set
    N = float(phase.N)
    sig = phase.sigma
    c = {_even_key(k): float(x) for k, x in c.items()}
    gamma = {_even_key(k): float(x) for k, x in gamma.items()}
    tot = []
    for m in range(1, len(xi.sectors)):
        lo, hi = xi.sectors[m - 1], xi.sectors[m]
        for p, r in cubic_operator_triples(ms):
            coef = c[_even_key(r)] * float(sig[_even_key(_add(p, r))]) * gamma[_even_key(p)] * gamma[_even_key(r)]
            st = lo
            for q in (_add(p, r), _neg(p), _neg(r)):
                st = create(ms.index[q], st)
            val = float(hi.inner(st))
            # implicit couplings: N^(-m/2) N^(-(m-1)/2); operator prefactor sqrt(N0)/N
            tot.append(2.0 * coef * val * math.sqrt(n0_over_n) / N**m)
    return math.fsum(tot)


def closed_cubic(phase, c, gamma, max_m, n0_over_n=1.0):
    """Closed series for ``<xi, C xi>`` (the I_C + J_C structure)."""
    N = float(phase.N)
    c = {_even_key(k): float(x) for k, x in c.items()}
    gamma = {_even_key(k): float(x) for k, x in gamma.items()}
    terms = []
    for m in range(1, max_m + 1):
        for tup in _tuples(phase, m):
            if not theta_product(tup):
                continue
            prod = 1.0
            for r, v in tup[:-1]:
                prod *= float(_orbit_factor(phase, r, v))
            r, v = tup[-1]
            e = float(phase.eta[_even_key(r)] + phase.eta[_even_key(_add(r, v))])
            last = c[_even_key(r)] * e * gamma[_even_key(r)] * gamma[_even_key(_add(r, v))] * float(phase.sigma[_even_key(v)]) ** 2
            terms.append(2.0 * math.sqrt(n0_over_n) * prod * last / (2 ** (m - 1) * math.factorial(m - 1) * N**m))
    return math.fsum(terms)


def verify_norm_formula(phase, max_m=None):
    xi = exp_A_vacuum(phase, max_m)
    mm = len(xi.sectors) - 1 if max_m is None else max_m
    direct = xi.norm_sq()
    closed = closed_norm(phase, max(mm, 0))
    return {"direct": direct, "closed": closed, "residual": abs(float(direct - closed)),
            "exact": isinstance(direct, Fraction), "saturated": xi.saturated,
            "sectors": [float(s.norm_sq()) for s in xi.sectors]}


def verify_expectations(phase, max_m=None, c=None, gamma=None, n0_over_n=1.0):
    """Direct expectations on ``e^A Omega`` against the closed series."""
    xi = exp_A_vacuum(phase, max_m)
    mm = len(xi.sectors) - 1
    out = {}
    for power, name in ((1, "number"), (2, "number_sq")):
        d = direct_number(xi, power)
        cl = closed_number(phase, mm, power)
        out[name] = {"direct": float(d), "closed": float(cl), "residual": abs(float(d - cl))}
    # sector form of the number expectation: sum_m 3m ||A^m Omega||^2 / (m!)^2
    w = xi.sector_weight()
    sec = _exact_sum([3 * m * s.norm_sq() * w(m) for m, s in enumerate(xi.sectors)])
    out["number"]["sector_form"] = float(sec)
    out["number"]["sector_residual"] = abs(float(sec - direct_number(xi)))
    d = direct_kinetic(xi)
    cl = closed_kinetic(phase, mm)
    out["kinetic"] = {"direct": d, "closed": cl, "residual": abs(d - cl),
                      "relative": abs(d - cl) / max(abs(d), 1e-300)}
    if c is not None:
        if gamma is None:
            gamma = {k: 1.0 for k in phase.eta}
        d = direct_cubic(xi, c, gamma, n0_over_n)
        cl = closed_cubic(phase, c, gamma, mm, n0_over_n)
        out["cubic"] = {"direct": d, "closed": cl, "residual": abs(d - cl)}
    out["sector_invariant"] = sector_invariant(xi)
    ms = phase.mode_set
    pairs = [abs(pair_expectation(xi, i, ms.index[_neg(p)])) for i, p in enumerate(ms.modes)
             if _neg(p) in ms.index]
    out["pair_max"] = max(pairs) if pairs else 0.0
    out["norm"] = float(xi.norm_sq())
    return out


# ---------------------------------------------------------------------------
# randomized configurations


def random_configuration(rng, max_orbits=3, exact=True, N=1):
    """Random tiny cubic phase with up to ``max_orbits`` orbits.

    S vectors come from a short list near the origin and H vectors have
    coordinates of size about 10, so the classes never mix. New orbits reuse
    earlier H momenta or S momenta with fixed probability so the cutoff has
    coincidences to remove.
    """
    s_pool = [(1, 0, 0), (0, 1, 0), (0, 0, 1), (1, 1, 0), (1, 0, 1)]
    n_orb = int(rng.integers(1, max_orbits + 1))
    triples = []
    for _ in range(n_orb):
        v = s_pool[int(rng.integers(len(s_pool)))]
        if triples and rng.random() < 0.5:
            r0, v0 = triples[int(rng.integers(len(triples)))]
            choice = int(rng.integers(4))
            if choice == 0:
                r = r0                                  # same r, maybe same v
            elif choice == 1:
                r = _add(_add(r0, v0), _neg(v))         # r + v = r0 + v0
            elif choice == 2:
                r = _neg(_add(r0, v0))                  # -r = r0 + v0
            else:
                v = v0                                  # shared v, fresh r
                r = tuple(int(x) for x in rng.integers(8, 13, size=3) * rng.choice([-1, 1], size=3))
        else:
            r = tuple(int(x) for x in rng.integers(8, 13, size=3) * rng.choice([-1, 1], size=3))
        triples.append((r, v))
    ms = ModeSet.from_triples(triples)

    def val():
        if exact:
            return Fraction(int(rng.integers(1, 17)), 16)
        return float(rng.random())

    eta, sigma = {}, {}
    for r, v in ms.triples:
        for p in (r, _add(r, v)):
            eta.setdefault(_even_key(p), val())
        sigma.setdefault(_even_key(v), val())
    return build_A(ms, eta, sigma, N)


# ---------------------------------------------------------------------------
# Weyl and Bogoliubov conjugations on capped spaces


def _ladder(cap):
    return np.diag(np.sqrt(np.arange(1, cap + 1, dtype=float)), 1)


def weyl_check(n0, cap=64, max_occupation=None):
    """``|| (W^* a W - a - sqrt(N0)) phi ||`` for basis vectors ``phi = |n>``.

    ``W = exp(sqrt(N0) (a^* - a))`` is exponentiated densely on the capped
    single-mode space; only vectors with ``n <= max_occupation`` (default
    ``cap / 16``) are tested so that the truncation at ``cap`` stays invisible.
    """
    if cap < 4 * max(n0, 10):
        raise ValueError(f"cap {cap} below 4 * max(N0, 10); raise the cap")
    a = _ladder(cap)
    W = linalg.expm(math.sqrt(n0) * (a.T - a))
    lhs = W.T @ a @ W - a - math.sqrt(n0) * np.eye(cap + 1)
    top = cap // 16 if max_occupation is None else max_occupation
    res = [float(np.linalg.norm(lhs[:, n])) for n in range(top + 1)]
    return {"residual": max(res), "per_vector": res, "cap": cap, "n0": n0, "max_occupation": top}


def _pair_block(cap, d, nu):
    """``T = exp(nu (a_p^* a_{-p}^* - h.c.))`` on the block ``n_p - n_{-p} = d``."""
    lo = max(0, d)
    n_p = np.arange(lo, cap + 1)
    n_m = n_p - d
    keep = n_m <= cap
    n_p, n_m = n_p[keep], n_m[keep]
    dim = len(n_p)
    G = np.zeros((dim, dim))
    for k in range(dim - 1):
        amp = math.sqrt((n_p[k] + 1) * (n_m[k] + 1))
        G[k + 1, k] = nu * amp
        G[k, k + 1] = -nu * amp
    return n_p, n_m, linalg.expm(G)


def bogoliubov_check(nu, cap=60, max_particles=5):
    """``|| (T^* a_p T - cosh(nu) a_p - sinh(nu) a_{-p}^*) psi ||`` for basis ``psi``.

    ``psi`` runs over two-mode occupation states with at most
    ``max_particles`` particles; the blocks of fixed ``n_p - n_{-p}`` are
    exponentiated densely.
    """
    g, s = math.cosh(nu), math.sinh(nu)
    blocks = {}

    def block(d):
        if d not in blocks:
            blocks[d] = _pair_block(cap, d, nu)
        return blocks[d]

    res = []
    for n1 in range(max_particles + 1):
        for n2 in range(max_particles + 1 - n1):
            d = n1 - n2
            n_p, n_m, T = block(d)
            psi = np.zeros(len(n_p))
            psi[np.flatnonzero(n_p == n1)[0]] = 1.0
            t_psi = T @ psi
            # a_p maps block d to block d - 1
            n_p2, n_m2, T2 = block(d - 1)
            a_t = np.zeros(len(n_p2))
            for k, (x, y) in enumerate(zip(n_p, n_m)):
                if x > 0:
                    j = np.flatnonzero((n_p2 == x - 1) & (n_m2 == y))
                    if j.size:
                        a_t[j[0]] += math.sqrt(x) * t_psi[k]
            lhs = T2.T @ a_t
            rhs = np.zeros(len(n_p2))
            if n1 > 0:
                j = np.flatnonzero((n_p2 == n1 - 1) & (n_m2 == n2))
                rhs[j[0]] += g * math.sqrt(n1)
            j = np.flatnonzero((n_p2 == n1) & (n_m2 == n2 + 1))
            rhs[j[0]] += s * math.sqrt(n2 + 1)
            res.append(float(np.linalg.norm(lhs - rhs)))
    return {"residual": max(res), "cap": cap, "nu": nu, "max_particles": max_particles}


def numpar_check(nu, cap=40, occupations=((0, 0), (1, 0), (1, 1), (2, 1))):
    """Particle number after a pair Bogoliubov transformation.

    For ``psi`` a superposition of the listed two-mode states, compares
    ``<T psi, N T psi>`` with ``2 sigma^2 + (sigma^2 + gamma^2) <N> + 2 gamma sigma
    <a_p a_{-p} + h.c.>`` computed in ``psi``.
    """
    g, s = math.cosh(nu), math.sinh(nu)
    out = []
    for n1, n2 in occupations:
        d = n1 - n2
        n_p, n_m, T = _pair_block(cap, d, nu)
        psi = np.zeros(len(n_p))
        psi[np.flatnonzero(n_p == n1)[0]] = 1.0
        # add the paired neighbour so that <a_p a_{-p}> is non-zero
        nb = np.flatnonzero(n_p == n1 + 1)
        if nb.size:
            psi[nb[0]] = 0.5
        psi /= np.linalg.norm(psi)
        tp = T @ psi
        direct = float(tp @ ((n_p + n_m) * tp))
        number = float(psi @ ((n_p + n_m) * psi))
        pair = 0.0
        for k in range(len(n_p) - 1):
            pair += 2.0 * psi[k] * psi[k + 1] * math.sqrt((n_p[k] + 1) * (n_m[k] + 1))
        closed = 2 * s * s + (s * s + g * g) * number + 2 * g * s * pair
        out.append({"occupation": (n1, n2), "direct": direct, "closed": closed,
                    "residual": abs(direct - closed)})
    return {"residual": max(o["residual"] for o in out), "cases": out, "cap": cap,
            "bound": math.exp(-cap / 4.0)}


def weyl_bogoliubov_actions(cap=64, n0=4, nu=0.3, tol=1e-8):
    """Both conjugation identities; raises with a hint when above ``tol``."""
    w = weyl_check(n0, cap)
    b = bogoliubov_check(nu, cap=max(60, cap))
    worst = max(w["residual"], b["residual"])
    if worst > tol:
        raise RuntimeError(f"conjugation residual {worst:.3e} above {tol:.1e}; increase the cap")
    return {"weyl": w, "bogoliubov": b, "residual": worst}
