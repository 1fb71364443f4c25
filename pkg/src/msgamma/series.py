"""Givental J-function of a toric Fano variety, its I-function twists, and
the series side of every identity checked by the harness.

Coefficients are stored exactly at z = 1.  By homogeneity the component of
J_d (or I_d) in H^{2p} carries the power z^(-w_d - p), where w_d = c1.d for J
and w_d = c1.d - sum_i v_i.d after twisting, so no z-truncation is needed.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import mpmath
import numpy as np

from .classes import (
    BRANCH_LAPLACE,
    BRANCH_REAL,
    BRANCH_TOTAL_SPACE,
    GradedClass,
    branch_log,
    gamma_class,
    gamma_of_quotient,
    grading_operator,
    jump_factor,
    laplace_factor,
)
from .toric import CohRing, CurveClass, enumerate_curve_classes


class TruncationError(RuntimeError):
    pass


class NefError(ValueError):
    pass


@dataclass(frozen=True)
class TruncationReport:
    """Tail diagnostics for a truncated series.

    Both contributions are relative to the magnitude of the truncated sum.
    """

    N: int
    last_degree_contribution: float
    estimated_tail: float
    tol: float

    @property
    def limited(self) -> bool:
        return not self.last_degree_contribution < self.tol / 10

    def as_dict(self) -> dict:
        return {"N": self.N, "last_degree_contribution": self.last_degree_contribution,
                "estimated_tail": self.estimated_tail, "truncation_limited": self.limited}


@dataclass(eq=False)
class JExpansion:
    ring: CohRing
    classes: list[CurveClass]
    exact: list[list[Fraction]]
    weights: list[int]
    N: int
    kind: str = "J"
    _pairings: np.ndarray = field(init=False, repr=False)
    _log_scale: np.ndarray = field(init=False, repr=False)
    _mantissa: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self._pairings = np.array([d.pairing for d in self.classes], dtype=float)
        scales, mants = [], []
        for coeffs in self.exact:
            logs = [_log_abs(c) for c in coeffs]
            top = max((x for x in logs if x is not None), default=0.0)
            scales.append(top)
            mants.append([0.0 if c == 0 else math.copysign(math.exp(lg - top), c)
                          for c, lg in zip(coeffs, logs)])
        self._log_scale = np.array(scales)
        self._mantissa = np.array(mants, dtype=float).reshape(len(self.exact), self.ring.size)

    @property
    def degrees(self) -> np.ndarray:
        return np.array([d.degree for d in self.classes])

    def coefficient(self, d: CurveClass) -> list[Fraction]:
        return self.exact[self.classes.index(d)]

    def z_exponent(self, index: int, basis_index: int) -> int:
        return -self.weights[index] - self.ring.degrees[basis_index]


def _log_abs(q: Fraction) -> float | None:
    if q == 0:
        return None
    return math.log(abs(q.numerator)) - math.log(q.denominator)


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------

_FACTOR_CACHE: dict[tuple[int, int], tuple[Fraction, ...]] = {}


def _univariate_factor(m: int, n: int) -> tuple[Fraction, ...]:
    """Taylor coefficients (degree <= n) of prod_{k<=0}(x+k) / prod_{k<=m}(x+k) at z = 1."""
    key = (m, n)
    if key in _FACTOR_CACHE:
        return _FACTOR_CACHE[key]
    step = 1 if m > 0 else -1
    k0 = 0
    for k in range(m, 0, -step):
        if (k, n) in _FACTOR_CACHE:
            k0 = k
            break
    cur = _FACTOR_CACHE.get((k0, n), (Fraction(1),) + (Fraction(0),) * n)
    for k in range(k0 + step, m + step, step) if m != 0 else ():
        if k > 0:
            # times 1/(x+k) = (1/k) sum (-x/k)^a
            f = [Fraction((-1) ** a, k ** (a + 1)) for a in range(n + 1)]
        else:
            # times (x + k + 1)
            f = [Fraction(k + 1), Fraction(1)] + [Fraction(0)] * (n - 1)
        out = [Fraction(0)] * (n + 1)
        for i, a in enumerate(cur):
            if a:
                for j, b in enumerate(f[: n + 1 - i]):
                    if b:
                        out[i + j] += a * b
        cur = tuple(out)
        _FACTOR_CACHE[(k, n)] = cur
    _FACTOR_CACHE[key] = cur
    return cur


def _eval_poly_at(ring: CohRing, coeffs: Sequence[Fraction], x: Sequence[Fraction]) -> list[Fraction]:
    out = ring.zero()
    power = ring.one()
    for k, ck in enumerate(coeffs):
        if k:
            power = ring.mul(power, x)
        if ck:
            out = ring.add(out, ring.scale(power, ck))
    return out


def toric_j_coefficients(ring: CohRing, N: int) -> JExpansion:
    """Givental's toric J-function, coefficients J_d(1) for c1.d <= N."""
    fan = ring.fan
    classes = enumerate_curve_classes(fan, N)
    n = ring.dim
    cache: dict[tuple[int, int], list[Fraction]] = {}
    exact = []
    for d in classes:
        val = ring.one()
        for j, m in enumerate(d.pairing):
            if m == 0:
                continue
            key = (j, m)
            if key not in cache:
                cache[key] = _eval_poly_at(ring, _univariate_factor(m, n), ring.divisor_classes[j])
            val = ring.mul(val, cache[key])
        exact.append(val)
    return JExpansion(ring, classes, exact, [d.degree for d in classes], N)


def _exact_shift(ring: CohRing, v: Sequence[Fraction], sign: int, k: int) -> list[Fraction]:
    """sign*v + k as an exact class."""
    out = [sign * x for x in v]
    out[0] += k
    return out


def check_nef(J: JExpansion, v: Sequence[Sequence[Fraction]]) -> None:
    for i, vi in enumerate(v):
        for d in J.classes:
            if J.ring.pair(vi, d) < 0:
                raise NefError(f"class v_{i + 1} pairs negatively with {d}")


def i_function(J: JExpansion, v: Sequence[Sequence[Fraction]], side: str) -> JExpansion:
    """Twist J_d by the hypergeometric factors of the nef classes v_i.

    side="total": prod_{k=0}^{v.d-1} (-v - kz)   (total space of the dual bundles)
    side="section": prod_{k=1}^{v.d} (v + kz)     (complete intersection)
    The result takes values in H^*(F).
    """
    if side not in ("total", "section"):
        raise ValueError("side must be 'total' or 'section'")
    ring = J.ring
    check_nef(J, v)
    exact, weights = [], []
    for d, coeffs, w in zip(J.classes, J.exact, J.weights):
        val = list(coeffs)
        shift = 0
        for vi in v:
            m = int(ring.pair(vi, d))
            shift += m
            if side == "total":
                factors = [_exact_shift(ring, vi, -1, -k) for k in range(m)]
            else:
                factors = [_exact_shift(ring, vi, 1, k) for k in range(1, m + 1)]
            for f in factors:
                val = ring.mul(val, f)
        exact.append(val)
        weights.append(w - shift)
    return JExpansion(ring, list(J.classes), exact, weights, J.N, kind=f"I[{side}]")


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def _tau_pairings(J: JExpansion, tau: GradedClass | None) -> np.ndarray:
    if tau is None or len(J.classes) == 0:
        return np.zeros(len(J.classes), dtype=complex)
    ring = J.ring
    sl = ring.degree_slice(1)
    if not tau.is_homogeneous(1, atol=1e-300):
        raise ValueError("tau must be a degree-2 class")
    cols = J._pairings[:, ring.h2_pairing_matrix]
    return cols @ tau.coeffs[sl]


def _grouped_sums(J: JExpansion, tau: GradedClass | None, z: complex,
                  N: int | None = None) -> tuple[list[int], list[np.ndarray], float]:
    """Sum_d e^{tau.d} J_d(z) grouped by c1.d, each group scaled by e^{-A}.

    Returns (degrees, group vectors, A).
    """
    if z == 0:
        raise ZeroDivisionError("series evaluated at z = 0")
    ring = J.ring
    limit = J.N if N is None else min(N, J.N)
    sel = np.nonzero(J.degrees <= limit)[0]
    taud = _tau_pairings(J, tau)[sel]
    weights = np.array(J.weights)[sel]
    logz = cmath.log(z)
    log_mag = J._log_scale[sel] + taud.real - weights * logz.real
    phase = taud.imag - weights * logz.imag
    big = float(log_mag.max()) if len(sel) else 0.0
    factors = np.exp(log_mag - big + 1j * phase)
    degs = np.array(ring.degrees)
    comp = np.power(complex(z), -degs.astype(float))
    vecs = factors[:, None] * J._mantissa[sel] * comp[None, :]
    degree_of = J.degrees[sel]
    groups = sorted(set(int(x) for x in degree_of))
    sums = [vecs[degree_of == g].sum(axis=0) for g in groups]
    return groups, sums, big


def truncation_report(values: Sequence[complex], N: int, tol: float) -> TruncationReport:
    total = abs(sum(values))
    if len(values) <= 1 or total == 0:
        return TruncationReport(N, 0.0, 0.0, tol)
    last, prev = abs(values[-1]), abs(values[-2])
    rel = last / total
    ratio = last / prev if prev else math.inf
    tail = rel * ratio / (1 - ratio) if ratio < 1 else math.inf
    return TruncationReport(N, rel, tail, tol)


def _prefactor(tau: GradedClass | None, z: complex, ring: CohRing) -> GradedClass:
    if tau is None:
        return GradedClass.one(ring)
    return (tau / z).exp()


def series_groups(J: JExpansion, tau: GradedClass | None, z: complex,
                  N: int | None = None) -> tuple[list[int], list[GradedClass]]:
    """e^{tau/z} times each degree group of sum_d e^{tau.d} J_d(z)."""
    groups, sums, big = _grouped_sums(J, tau, z, N)
    if big > 700:
        raise OverflowError("series terms exceed double range; use the scaled evaluators")
    pre = _prefactor(tau, z, J.ring)
    scale = math.exp(big)
    return groups, [pre * GradedClass(J.ring, s * scale) for s in sums]


def eval_J(J: JExpansion, tau: GradedClass | None, z: complex, N: int | None = None,
           tol: float = 1e-12) -> tuple[GradedClass, TruncationReport]:
    """e^{tau/z} sum_{c1.d <= N} e^{tau.d} J_d(z)."""
    groups, parts = series_groups(J, tau, z, N)
    total = GradedClass.zero(J.ring)
    for p in parts:
        total = total + p
    norms = [float(np.abs(p.coeffs).max()) for p in parts]
    report = truncation_report(norms, J.N if N is None else N, tol)
    return total, report


def degrade_eval(J: JExpansion, tau: GradedClass | None, t: float,
                 N: int | None = None) -> GradedClass:
    """e^{-tau} sum_d e^{tau.d} J_d(-1) t^{-c1 + c1.d}."""
    if t <= 0:
        raise ValueError("t must be positive")
    ring = J.ring
    groups, sums, big = _grouped_sums(J, tau, -1.0, N)
    acc = np.zeros(ring.size, dtype=complex)
    for g, s in zip(groups, sums):
        acc += s * math.exp(big + g * math.log(t))
    c1 = GradedClass.first_chern(ring)
    pre = (c1 * (-math.log(t))).exp()
    if tau is not None:
        pre = pre * (-tau).exp()
    return pre * GradedClass(ring, acc)


def _combine(values: list[complex], N: int, tol: float) -> tuple[complex, TruncationReport]:
    return complex(sum(values)), truncation_report(values, N, tol)


def _c1(ring: CohRing) -> GradedClass:
    return GradedClass.first_chern(ring)


def _as_class(ring: CohRing, v) -> GradedClass:
    return v if isinstance(v, GradedClass) else GradedClass.from_exact(ring, v)


def rhs_ms_gamma(ring: CohRing, J: JExpansion, gamma_F: GradedClass, tau: GradedClass | None,
                 z: float, N: int | None = None, tol: float = 1e-12) -> tuple[complex, TruncationReport]:
    """Integral over F of (z^{c1} z^{deg/2} J_F(tau, -z)) Gamma_F."""
    if not z > 0:
        raise ValueError("z must be positive")
    c1 = _c1(ring)
    lz = math.log(z)
    _, parts = series_groups(J, tau, -z, N)
    vals = [(grading_operator(p, z, c1, lz) * gamma_F).integrate() for p in parts]
    return _combine(vals, J.N if N is None else N, tol)


def rhs_local_charge(ring: CohRing, J: JExpansion, tau: GradedClass | None, s: float,
                     N: int | None = None, gamma_F: GradedClass | None = None,
                     tol: float = 1e-12) -> tuple[complex, TruncationReport]:
    """F-level value of the K_F-side integral, with Im log(-s) = -pi."""
    if not s > 0:
        raise ValueError("s must be positive")
    gamma_F = gamma_class(ring) if gamma_F is None else gamma_F
    c1 = _c1(ring)
    I = i_function(J, [ring.c1], "total")
    L = branch_log(-s, BRANCH_TOTAL_SPACE)
    shifted = c1 * (-L) if tau is None else tau - c1 * L
    post = jump_factor(ring, [c1]) * gamma_F
    _, parts = series_groups(I, shifted, -1.0, N)
    vals = [(p * post).integrate() for p in parts]
    return _combine(vals, J.N if N is None else N, tol)


def rhs_anticanonical(ring: CohRing, J: JExpansion, gamma_F: GradedClass, tau: GradedClass | None,
                      s: float, N: int | None = None, tol: float = 1e-12) -> tuple[complex, TruncationReport]:
    """Anticanonical-section side pushed to F: integral of c1 * I_Y(tau - c1 log s, -1) Gamma_F / Gamma(1+c1)."""
    if not s > 0:
        raise ValueError("s must be positive")
    c1 = _c1(ring)
    I = i_function(J, [ring.c1], "section")
    L = branch_log(s, BRANCH_REAL)
    shifted = c1 * (-L) if tau is None else tau - c1 * L
    post = c1 * gamma_of_quotient(gamma_F, [c1])
    _, parts = series_groups(I, shifted, -1.0, N)
    vals = [(p * post).integrate() for p in parts]
    return _combine(vals, J.N if N is None else N, tol)


def _partition_classes(ring: CohRing, v: Sequence) -> tuple[list[list[Fraction]], list[Fraction]]:
    v_exact = [list(x) for x in v]
    v0 = list(ring.c1)
    for vi in v_exact:
        v0 = [a - b for a, b in zip(v0, vi)]
    return v_exact, v0


def rhs_generalized(ring: CohRing, J: JExpansion, tau0: GradedClass | None, v: Sequence,
                    s: Sequence[float], z: float, N: int | None = None, side: str = "section",
                    gamma_F: GradedClass | None = None, tol: float = 1e-12
                    ) -> tuple[complex, TruncationReport]:
    """Series side of the nef-partition identities.

    ``v`` lists exact degree-2 classes v_1..v_c; v_0 = c1 - sum v_i must be nef.
    """
    if len(v) != len(s):
        raise ValueError("need one s_i per partition class")
    if any(not si > 0 for si in s):
        raise ValueError("s_i must be positive")
    if not z > 0:
        raise ValueError("z must be positive")
    gamma_F = gamma_class(ring) if gamma_F is None else gamma_F
    v_exact, v0_exact = _partition_classes(ring, v)
    check_nef(J, [v0_exact])
    vcls = [_as_class(ring, x) for x in v_exact]
    v0 = _as_class(ring, v0_exact)
    lz = math.log(z)
    if side == "total":
        I = i_function(J, v_exact, "total")
        logs = [branch_log(-si, BRANCH_TOTAL_SPACE) for si in s]
        post = jump_factor(ring, vcls) * gamma_F
    elif side == "section":
        I = i_function(J, v_exact, "section")
        logs = [branch_log(si, BRANCH_REAL) for si in s]
        post = gamma_of_quotient(gamma_F, vcls)
        for vi in vcls:
            post = post * vi
    else:
        raise ValueError("side must be 'total' or 'section'")
    shifted = tau0 if tau0 is not None else GradedClass.zero(ring)
    for vi, L in zip(vcls, logs):
        shifted = shifted - vi * L
    _, parts = series_groups(I, shifted, -z, N)
    vals = [(grading_operator(p, z, v0, lz) * post).integrate() for p in parts]
    return _combine(vals, J.N if N is None else N, tol)


def rhs_hcI_series(ring: CohRing, J: JExpansion, tau: GradedClass | None, s: float,
                   N: int | None = None, gamma_F: GradedClass | None = None,
                   tol: float = 1e-12) -> tuple[complex, TruncationReport]:
    """Termwise Laplace transform: (1/(-s)) int I~_Y(tau - c1 log s, -1) e^{-pi i c1} Gamma(1-c1) Gamma_F."""
    if not s < 0:
        raise ValueError("s must be negative")
    gamma_F = gamma_class(ring) if gamma_F is None else gamma_F
    c1 = _c1(ring)
    I = i_function(J, [ring.c1], "section")
    L = branch_log(s, BRANCH_LAPLACE)
    shifted = c1 * (-L) if tau is None else tau - c1 * L
    post = laplace_factor(ring, [c1]) * gamma_F
    _, parts = series_groups(I, shifted, -1.0, N)
    vals = [(p * post).integrate() / (-s) for p in parts]
    return _combine(vals, J.N if N is None else N, tol)


def rhs_hcI_series_mult(ring: CohRing, J: JExpansion, tau0: GradedClass | None, v: Sequence,
                        s: Sequence[float], z: float, N: int | None = None,
                        gamma_F: GradedClass | None = None, tol: float = 1e-12
                        ) -> tuple[complex, TruncationReport]:
    """Multi-variable termwise Laplace transform (series form of the multi-Hilbert integral).

    z^c / prod(-s_i) int (z^{v0} z^{deg/2} I~_Y(tau0 - sum v_i log s_i, -z))
    prod_i e^{-pi i v_i} Gamma(1 - v_i) Gamma_F, with Im log s_i = pi.
    """
    if any(not si < 0 for si in s):
        raise ValueError("s_i must be negative")
    gamma_F = gamma_class(ring) if gamma_F is None else gamma_F
    v_exact, v0_exact = _partition_classes(ring, v)
    vcls = [_as_class(ring, x) for x in v_exact]
    v0 = _as_class(ring, v0_exact)
    I = i_function(J, v_exact, "section")
    shifted = tau0 if tau0 is not None else GradedClass.zero(ring)
    for vi, si in zip(vcls, s):
        shifted = shifted - vi * branch_log(si, BRANCH_LAPLACE)
    post = laplace_factor(ring, vcls) * gamma_F
    pref = z ** len(s) / math.prod(-si for si in s)
    _, parts = series_groups(I, shifted, -z, N)
    vals = [pref * (grading_operator(p, z, v0, math.log(z)) * post).integrate() for p in parts]
    return _combine(vals, J.N if N is None else N, tol)


# ---------------------------------------------------------------------------
# Gamma conjecture I
# ---------------------------------------------------------------------------
#
# For projective spaces the deviation of J(c1 log t, 1) from the Gamma
# direction decays like exp(-(gap) t), far below double precision already at
# t = 10, so the direction is evaluated in multiprecision from the exact
# coefficients.

def gamma_I_precision(t: float) -> int:
    """Decimal digits that resolve the angle at t for the shipped fixtures."""
    return 30 + int(math.ceil(2.5 * t))


def _mp_exp_nilpotent(ring: CohRing, x: list) -> list:
    out = ring.one()
    power = ring.one()
    for k in range(1, ring.dim + 1):
        power = ring.mul(power, x)
        out = ring.add(out, ring.scale(power, mpmath.mpf(1) / math.factorial(k)))
    return out


def gamma_class_mp(ring: CohRing) -> list:
    """Gamma class at the current mpmath precision."""
    coeffs = [mpmath.mpf(0), -mpmath.euler] + [(-1) ** k * mpmath.zeta(k) / k for k in range(2, ring.dim + 1)]
    total = ring.zero()
    for j in range(ring.fan.nrays):
        d = list(ring.divisor_classes[j])
        power = ring.one()
        for k in range(1, ring.dim + 1):
            power = ring.mul(power, d)
            total = ring.add(total, ring.scale(power, coeffs[k]))
    return _mp_exp_nilpotent(ring, total)


def _mp_angle(a: list, b: list) -> tuple[list, list, mpmath.mpf]:
    na = mpmath.sqrt(mpmath.fsum(x * x for x in a))
    nb = mpmath.sqrt(mpmath.fsum(x * x for x in b))
    u = [x / na for x in a]
    g = [x / nb for x in b]
    dot = mpmath.fsum(x * y for x, y in zip(u, g))
    if dot < 0:
        u, dot = [-x for x in u], -dot
    # sine of the angle from the orthogonal residual: stable for tiny angles
    res = mpmath.sqrt(mpmath.fsum((x - dot * y) ** 2 for x, y in zip(u, g)))
    return u, g, mpmath.atan2(res, dot)


def _group_log_magnitudes(J: JExpansion, t: float) -> dict[int, float]:
    """log of the largest coefficient magnitude of t^{c1.d} J_d(1) per degree."""
    out: dict[int, float] = {}
    lt = math.log(t)
    for deg, ls in zip(J.degrees, J._log_scale):
        v = ls + deg * lt
        out[int(deg)] = max(out.get(int(deg), -math.inf), v)
    return out


def gamma_I_tail(J: JExpansion, t: float) -> float:
    """log10 of (largest term in the top degree) / (largest term overall)."""
    mags = _group_log_magnitudes(J, t)
    top = max(mags)
    return (mags[top] - max(mags.values())) / math.log(10)


def gamma_I_direction(J: JExpansion, t: float, N: int | None = None,
                      dps: int | None = None) -> tuple[np.ndarray, np.ndarray, mpmath.mpf]:
    """Unit vectors of J_F(c1 log t, 1) and Gamma_F, and the projective angle between them.

    The angle is returned as an mpmath number: for large t it is far below the
    smallest double.
    """
    if t < 1:
        raise ValueError("t must be >= 1")
    ring = J.ring
    dps = gamma_I_precision(t) if dps is None else dps
    limit = J.N if N is None else min(N, J.N)
    tail = gamma_I_tail(J, t) if N is None else gamma_I_tail(_restrict(J, limit), t)
    if tail > -(dps + 5):
        raise TruncationError(f"J(c1 log t, 1) not converged at N={limit}: top degree at 1e{tail:.0f} of the peak")
    with mpmath.workdps(dps):
        tt = mpmath.mpf(t)
        acc = [mpmath.mpf(0)] * ring.size
        for d, coeffs in zip(J.classes, J.exact):
            if d.degree > limit:
                continue
            w = tt ** d.degree
            for i, c in enumerate(coeffs):
                if c:
                    acc[i] += w * mpmath.mpf(c.numerator) / c.denominator
        pre = _mp_exp_nilpotent(ring, ring.scale(list(ring.c1), mpmath.log(tt)))
        vec = ring.mul(pre, acc)
        u, g, ang = _mp_angle(vec, gamma_class_mp(ring))
        return np.array([float(x) for x in u]), np.array([float(x) for x in g]), ang


def _restrict(J: JExpansion, N: int) -> JExpansion:
    keep = [i for i, d in enumerate(J.classes) if d.degree <= N]
    return JExpansion(J.ring, [J.classes[i] for i in keep], [J.exact[i] for i in keep],
                      [J.weights[i] for i in keep], N, J.kind)


def gamma_I_truncation(ring: CohRing, t: float, dps: int | None = None, start: int | None = None,
                       max_N: int = 12000) -> JExpansion:
    """Smallest J expansion (N grown geometrically) whose tail is below the working precision."""
    dps = gamma_I_precision(t) if dps is None else dps
    N = start if start is not None else max(4 * int(math.ceil(t)), 8)
    while N <= max_N:
        J = toric_j_coefficients(ring, N)
        if gamma_I_tail(J, t) <= -(dps + 5):
            return J
        N = int(N * 1.5) + 1
    raise TruncationError(f"no adequate truncation below N = {max_N}")
