"""Enumeration and summation over the momentum lattice 2*pi*Z^3.

All sums are keyed by the integer ``n = |z|**2`` with ``z`` in Z^3; the
physical squared momentum is ``(2*pi)**2 * n`` and is only formed when a
summand is evaluated. Reductions use :func:`math.fsum` over terms laid out in
ascending shell order, so results do not depend on how the work was split.
"""

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import integrate

TWO_PI = 2.0 * np.pi
FOUR_PI_SQ = TWO_PI**2

# enumerating beyond this many shells needs several hundred MB of scratch
DEFAULT_MAX_SHELLS = 20_000_000


class LatticeError(RuntimeError):
    """Refusal raised when a lattice sum cannot be certified."""


class CertificateError(LatticeError):
    """A truncated sum whose tail bound exceeds the requested tolerance."""

    def __init__(self, message, required=None, certificate=None):
        super().__init__(message)
        self.required = required
        self.certificate = certificate


def thread_count(threads=None):
    """Number of worker threads, capped by ``LHY_LAB_THREADS`` when set."""
    cap = os.environ.get("LHY_LAB_THREADS")
    n = threads if threads is not None else (os.cpu_count() or 1)
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ValueError(f"LHY_LAB_THREADS must be an integer, got {cap!r}")
    return max(1, int(n))


@dataclass(frozen=True)
class ShellIndex:
    """Shell multiplicities ``counts[n] = r3(n)`` for ``0 <= n <= max_n``."""

    max_n: int
    counts: np.ndarray

    def __post_init__(self):
        if self.counts.shape != (self.max_n + 1,):
            raise ValueError("counts must have length max_n + 1")

    def r3(self, n):
        return int(self.counts[n])

    @property
    def shells(self):
        """Occupied shell indices ``n`` in ascending order."""
        return np.flatnonzero(self.counts)

    def ball_count(self, m):
        return int(self.counts[: int(m) + 1].sum())

    def prefix_counts(self):
        return np.cumsum(self.counts)

    def save(self, path):
        """Write the index as ``.npy`` (binary) or two-column CSV ``n,r3``."""
        path = Path(path)
        if path.suffix == ".npy":
            np.save(path, self.counts)
        else:
            nz = self.shells
            with open(path, "w", newline="") as fh:
                fh.write("n,r3\r\n")
                for n in nz:
                    fh.write(f"{n},{self.counts[n]}\r\n")

    @classmethod
    def load(cls, path, max_n=None):
        path = Path(path)
        if path.suffix == ".npy":
            counts = np.load(path).astype(np.int64)
        else:
            data = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.int64, ndmin=2)
            top = int(data[:, 0].max()) if data.size else 0
            if max_n is not None:
                top = max(top, int(max_n))
            counts = np.zeros(top + 1, dtype=np.int64)
            counts[data[:, 0]] = data[:, 1]
            if max_n is not None:
                counts = counts[: max_n + 1]
            return cls(len(counts) - 1, counts)
        if max_n is not None:
            if max_n > len(counts) - 1:
                raise LatticeError(f"cached index only reaches n={len(counts) - 1}")
            counts = counts[: max_n + 1]
        return cls(len(counts) - 1, counts)


def _square_counts(max_n):
    """Number of integers k with k**2 = n, for n <= max_n."""
    r1 = np.zeros(max_n + 1, dtype=np.int64)
    k = np.arange(0, math.isqrt(max_n) + 1)
    r1[k * k] = 2
    r1[0] = 1
    return r1


def shell_counts(max_n, max_shells=DEFAULT_MAX_SHELLS, cache_path=None):
    """Representation counts r3(n) of n as a sum of three squares.

    Built as the threefold convolution of the one-dimensional square counts,
    which costs O(max_n**1.5) integer additions and is exact.

    Parameters
    ----------
    max_n : int
        Largest squared norm (in lattice units) to include.
    max_shells : int
        Memory budget; larger requests are refused.
    cache_path : path-like, optional
        If given and the file exists with enough shells it is reused,
        otherwise the freshly built index is written there.
    """
    max_n = int(max_n)
    if max_n < 0:
        raise ValueError("max_n must be non-negative")
    if max_n + 1 > max_shells:
        raise LatticeError(f"shell index of {max_n + 1} entries exceeds the budget of {max_shells}")
    if cache_path is not None and Path(cache_path).exists():
        try:
            idx = ShellIndex.load(cache_path, max_n=max_n)
            if idx.max_n == max_n:
                return idx
        except LatticeError:
            pass
    r1 = _square_counts(max_n)
    r2 = np.zeros_like(r1)
    r3 = np.zeros_like(r1)
    roots = np.arange(0, math.isqrt(max_n) + 1)
    for k in roots:
        s = int(k * k)
        w = 1 if k == 0 else 2
        r2[s:] += w * r1[: max_n + 1 - s]
    for k in roots:
        s = int(k * k)
        w = 1 if k == 0 else 2
        r3[s:] += w * r2[: max_n + 1 - s]
    idx = ShellIndex(max_n, r3)
    if cache_path is not None:
        idx.save(cache_path)
    return idx


def ball_points(max_n):
    """Integer points z with |z|**2 <= max_n, sorted by (|z|**2, z)."""
    m = math.isqrt(int(max_n))
    ax = np.arange(-m, m + 1)
    z = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1).reshape(-1, 3)
    n = (z * z).sum(axis=1)
    z, n = z[n <= max_n], n[n <= max_n]
    order = np.lexsort((z[:, 2], z[:, 1], z[:, 0], n))
    return z[order]


def orbit_representatives(points):
    """Group points under the 48 signed permutations of the axes.

    Returns the canonical representatives (sorted absolute coordinates,
    descending) and the number of input points mapped to each.
    """
    canon = -np.sort(-np.abs(points), axis=1)
    reps, counts = np.unique(canon, axis=0, return_counts=True)
    return reps, counts


def _shell_mask(shells, domain):
    if domain is None:
        return np.ones(len(shells), dtype=bool)
    mask = np.asarray(domain(shells), dtype=bool)
    if mask.shape != shells.shape:
        raise ValueError("domain filter must return one flag per shell")
    return mask


def sum_radial(g, index, domain=None, threads=None):
    """Sum ``r3(n) * g((2*pi)**2 * n)`` over the shells of ``index``.

    Parameters
    ----------
    g : callable
        Vectorised radial summand of the squared momentum.
    index : ShellIndex
    domain : callable, optional
        Filter mapping an array of shell indices ``n`` to a boolean mask.
    threads : int, optional
        Worker count for evaluating ``g``; the result is identical for
        every value because the final reduction is a single ordered fsum.
    """
    shells = index.shells
    shells = shells[_shell_mask(shells, domain)]
    if shells.size == 0:
        return 0.0
    nthreads = thread_count(threads)
    chunks = np.array_split(shells, min(nthreads, max(1, shells.size // 4096)))

    def evaluate(chunk):
        vals = np.asarray(g(FOUR_PI_SQ * chunk.astype(float)), dtype=float)
        vals = np.broadcast_to(vals, chunk.shape)
        bad = ~np.isfinite(vals)
        if bad.any():
            n = int(chunk[np.argmax(bad)])
            raise FloatingPointError(f"summand is not finite on shell n={n}")
        return index.counts[chunk] * vals

    if len(chunks) == 1:
        parts = [evaluate(chunks[0])]
    else:
        with ThreadPoolExecutor(max_workers=nthreads) as pool:
            parts = list(pool.map(evaluate, chunks))
    return math.fsum(np.concatenate(parts).tolist())


def tail_certificate(f_env, g_env, r_abs, window):
    """Bound on sum over |s| > window of f_env(|r - s|) * g_env(|s|).

    Envelopes are non-increasing bounds of the absolute values as functions
    of the momentum modulus. The lattice sum is compared with the integral
    with density (2*pi)**-3 and a factor 2 absorbs lattice-point
    fluctuations near the cutoff sphere.
    """
    def integrand(s):
        return 4.0 * np.pi * s * s * f_env(max(s - r_abs, 0.0)) * g_env(s)

    # the envelopes are only piecewise smooth, so quad's own error estimate
    # is added to keep the bound conservative
    edges = [window, 2.0 * window, 8.0 * window, 64.0 * window, np.inf]
    val = 0.0
    for lo, hi in zip(edges, edges[1:]):
        part, err = integrate.quad(integrand, lo, hi, epsabs=0.0, epsrel=1e-4, limit=400, full_output=1)[:2]
        val += part + err
    return 2.0 * val / TWO_PI**3


def convolve_sum(F, G, r, window, tol=None, f_env=None, g_env=None):
    """Direct lattice convolution ``sum_{|s| <= window} F(r - s) G(s)``.

    Parameters
    ----------
    F : callable
        Radial function of the squared momentum.
    G : callable
        Function of the integer shell index ``n = |s|**2 / (2*pi)**2`` of
        the summation point (radial per-point table).
    r : array_like of int
        Lattice point in units of 2*pi.
    window : float
        Momentum cutoff for |s|.
    tol : float, optional
        Refuse when the tail certificate exceeds this value.
    f_env, g_env : callable, optional
        Decay envelopes used for the certificate; without them the
        certificate is reported as ``nan``.

    Returns
    -------
    value, certificate : float, float
    """
    r = np.asarray(r, dtype=np.int64)
    max_n = int(math.floor((window / TWO_PI) ** 2))
    pts = ball_points(max_n)
    n_s = (pts * pts).sum(axis=1)
    d = r[None, :] - pts
    n_d = (d * d).sum(axis=1)
    # both factors depend on the point only through a shell index
    u_d, inv_d = np.unique(n_d, return_inverse=True)
    u_s, inv_s = np.unique(n_s, return_inverse=True)
    f_vals = np.asarray(F(FOUR_PI_SQ * u_d.astype(float)), dtype=float).reshape(-1)
    g_vals = np.asarray(G(u_s), dtype=float).reshape(-1)
    vals = f_vals[inv_d.reshape(-1)] * g_vals[inv_s.reshape(-1)]
    value = math.fsum(vals.tolist())
    cert = float("nan")
    if f_env is not None and g_env is not None:
        r_abs = TWO_PI * float(np.sqrt((r * r).sum()))
        cert = tail_certificate(f_env, g_env, r_abs, window)
        if tol is not None and cert > tol:
            need = window
            while tail_certificate(f_env, g_env, r_abs, need) > tol:
                need *= 1.5
                if need > 1e3 * window:
                    break
            raise CertificateError(
                f"tail certificate {cert:.3e} exceeds tolerance {tol:.3e}; window >= {need:.4g} required",
                required=need, certificate=cert)
    return value, cert
