"""Deterministic numeric primitives: Cholesky factorization, normal and
noncentral chi-square quantiles, and reproducible seeded random streams.

Quantiles are computed by bisection on series-evaluated CDFs rather than by
calling an external library; every accuracy need downstream is coarser than
1e-5, so a 1e-10 bisection tolerance leaves ample headroom.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import AsymmetricInput, NotPositiveDefinite, OutOfRange

_SYMMETRY_TOL = 1e-10
_PIVOT_FLOOR = -1e-12
_BISECT_TOL = 1e-10
_BISECT_MAX_ITER = 200
_SERIES_TOL = 1e-14


def cholesky_factor(sigma: np.ndarray) -> np.ndarray:
    """Lower-triangular L with L @ L.T == sigma for symmetric PSD input.

    Semi-definite inputs are accepted: a zero pivot produces a zero column.
    Raises AsymmetricInput / NotPositiveDefinite on contract violations.
    """
    a = np.asarray(sigma, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise AsymmetricInput(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.abs(a - a.T) <= _SYMMETRY_TOL):
        raise AsymmetricInput("matrix is not symmetric within 1e-10")
    n = a.shape[0]
    lower = np.zeros_like(a)
    for j in range(n):
        pivot = a[j, j] - lower[j, :j] @ lower[j, :j]
        if pivot < _PIVOT_FLOOR:
            raise NotPositiveDefinite(f"pivot {pivot:.3e} at column {j}")
        lower[j, j] = math.sqrt(max(pivot, 0.0))
        if lower[j, j] > 0.0:
            for i in range(j + 1, n):
                lower[i, j] = (a[i, j] - lower[i, :j] @ lower[j, :j]) / lower[j, j]
        # zero pivot: PSD forces the rest of the column to zero, already set
    return lower


def normal_cdf(x):
    """Standard normal CDF, scalar or array."""
    if np.isscalar(x):
        return 0.5 * math.erfc(-float(x) / math.sqrt(2.0))
    arr = np.asarray(x, dtype=float)
    flat = arr.ravel()
    out = np.empty_like(flat)
    for i, v in enumerate(flat):
        out[i] = 0.5 * math.erfc(-v / math.sqrt(2.0))
    return out.reshape(arr.shape)


def std_normal_quantile(q: float) -> float:
    """Quantile of N(0, 1) by bisection on the erfc-based CDF."""
    if not 0.0 < q < 1.0:
        raise OutOfRange(f"quantile level must be in (0,1), got {q}")
    lo, hi = -40.0, 40.0
    for _ in range(_BISECT_MAX_ITER):
        mid = 0.5 * (lo + hi)
        f = normal_cdf(mid)
        if f == q:
            return mid
        if f < q:
            lo = mid
        else:
            hi = mid
        if hi - lo < _BISECT_TOL:
            break
    return 0.5 * (lo + hi)


def _chisq_pdf(x: float, df: float) -> float:
    if x <= 0.0:
        return 0.0
    return math.exp(
        (0.5 * df - 1.0) * math.log(x)
        - 0.5 * x
        - 0.5 * df * math.log(2.0)
        - math.lgamma(0.5 * df)
    )


def noncentral_chisq1_cdf(x: float, lam: float) -> float:
    """CDF of the noncentral chi-square with 1 df and noncentrality lam.

    Poisson mixture over central chi-square CDFs with 1 + 2j df; the central
    CDFs follow the recurrence F_{v+2}(x) = F_v(x) - 2 f_{v+2}(x) starting from
    F_1(x) = erf(sqrt(x/2)). Terms below 1e-14 past the Poisson mode truncate
    the series.
    """
    if lam < 0.0:
        raise OutOfRange(f"noncentrality must be nonnegative, got {lam}")
    if x <= 0.0:
        return 0.0
    weight = math.exp(-0.5 * lam)
    central = math.erf(math.sqrt(0.5 * x))
    total = weight * central
    j = 0
    while True:
        j += 1
        weight *= 0.5 * lam / j
        central -= 2.0 * _chisq_pdf(x, 1.0 + 2.0 * j)
        central = max(central, 0.0)
        term = weight * central
        total += term
        if weight < _SERIES_TOL and j > 0.5 * lam:
            break
        if j > 100000:  # unreachable for sane lam; hard stop
            break
    return min(total, 1.0)


def noncentral_chisq1_quantile(q: float, lam: float) -> float:
    """Quantile of the noncentral chi-square(1, lam) by bisection."""
    if not 0.0 < q < 1.0:
        raise OutOfRange(f"quantile level must be in (0,1), got {q}")
    if lam < 0.0:
        raise OutOfRange(f"noncentrality must be nonnegative, got {lam}")
    hi = 2.0 * (1.0 + lam) + 10.0
    while noncentral_chisq1_cdf(hi, lam) < q:
        hi *= 2.0
        if hi > 1e12:
            break
    lo = 0.0
    for _ in range(_BISECT_MAX_ITER):
        mid = 0.5 * (lo + hi)
        f = noncentral_chisq1_cdf(mid, lam)
        if f == q:
            return mid
        if f < q:
            lo = mid
        else:
            hi = mid
        if hi - lo < _BISECT_TOL:
            break
    return 0.5 * (lo + hi)


class RngStream:
    """Reproducible random stream keyed by (master_seed, stream_id, ...).

    Two streams with the same key produce identical sequences; distinct keys
    hash to statistically independent PCG64 states, so regeneration runs can
    execute in any order (or concurrently) without changing results.
    """

    __slots__ = ("_key", "_gen")

    def __init__(self, master_seed: int, stream_id: int = 0, _key=None):
        key = _key if _key is not None else (int(master_seed), int(stream_id))
        self._key = tuple(int(k) for k in key)
        self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(self._key)))

    @property
    def master_seed(self) -> int:
        return self._key[0]

    @property
    def stream_id(self) -> int:
        return self._key[1] if len(self._key) > 1 else 0

    @property
    def key(self) -> tuple:
        return self._key

    def substream(self, *ids: int) -> "RngStream":
        """Independent child stream; key extension keeps derivations collision-free."""
        return RngStream(0, 0, _key=self._key + tuple(int(i) for i in ids))

    def uniform01(self, size=None):
        return self._gen.random(size)

    def standard_normal(self, size=None):
        return self._gen.standard_normal(size)

    def bernoulli(self, p, size=None):
        return (self._gen.random(size) < p).astype(np.int64)

    def laplace(self, scale: float, size=None):
        """Laplace(0, scale) via inverse CDF; variance is 2 * scale**2."""
        if scale <= 0.0:
            raise OutOfRange(f"scale must be positive, got {scale}")
        u = self._gen.random(size)
        u = np.clip(u, 1e-300, 1.0 - 1e-16)
        centered = u - 0.5
        return -scale * np.sign(centered) * np.log1p(-2.0 * np.abs(centered))

    def permutation(self, n: int):
        return self._gen.permutation(n)


def rng_draw(stream: RngStream, kind: str, p: float | None = None,
             scale: float | None = None) -> float:
    """Single scalar draw of the requested kind from the stream."""
    if kind == "uniform01":
        return float(stream.uniform01())
    if kind == "standard_normal":
        return float(stream.standard_normal())
    if kind == "bernoulli":
        if p is None or not 0.0 <= p <= 1.0:
            raise OutOfRange(f"bernoulli needs p in [0,1], got {p}")
        return float(stream.uniform01() < p)
    if kind == "laplace":
        if scale is None:
            raise OutOfRange("laplace needs a scale")
        return float(stream.laplace(scale))
    raise OutOfRange(f"unknown draw kind {kind!r}")
