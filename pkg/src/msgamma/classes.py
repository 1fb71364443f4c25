"""Complex-coefficient classes in the nilpotent ring H^*(F) and the
Gamma-type series built from them."""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .toric import CohRing

EULER_GAMMA = 0.577215664901532860606512090082
# zeta(k), k = 2..8
ZETA = {
    2: 1.64493406684822643647241516665,
    3: 1.20205690315959428539973816151,
    4: 1.08232323371113819151600369654,
    5: 1.03692775514336992633136548646,
    6: 1.01734306198444913971451792979,
    7: 1.00834927738192282683979754985,
    8: 1.00407735619794433937868523851,
}
MAX_DIM = max(ZETA)

# log branches used by the identities (imaginary part of the chosen logarithm)
BRANCH_TOTAL_SPACE = -math.pi   # Im log(-s) for real s > 0
BRANCH_LAPLACE = math.pi        # Im log(s) for real s < 0
BRANCH_REAL = 0.0               # Im log(s) for real s > 0


def branch_log(z: complex, im_branch: float | None = None) -> complex:
    """log z with Im chosen as ``im_branch`` (must agree with arg z mod 2 pi).

    ``None`` selects the principal branch.
    """
    if z == 0:
        raise ZeroDivisionError("log of zero")
    principal = cmath.log(z)
    if im_branch is None:
        return principal
    k = round((im_branch - principal.imag) / (2 * math.pi))
    value = complex(principal.real, principal.imag + 2 * math.pi * k)
    if abs(value.imag - im_branch) > 1e-9 * max(1.0, abs(im_branch)):
        raise ValueError(f"branch Im log = {im_branch} incompatible with arg({z})")
    return value


@dataclass(eq=False)
class GradedClass:
    ring: CohRing
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)

    # construction ---------------------------------------------------------
    @classmethod
    def zero(cls, ring: CohRing) -> "GradedClass":
        return cls(ring, np.zeros(ring.size, dtype=complex))

    @classmethod
    def one(cls, ring: CohRing) -> "GradedClass":
        v = np.zeros(ring.size, dtype=complex)
        v[0] = 1
        return cls(ring, v)

    @classmethod
    def from_exact(cls, ring: CohRing, exact: Sequence) -> "GradedClass":
        return cls(ring, np.array([complex(x) for x in exact]))

    @classmethod
    def divisor(cls, ring: CohRing, j: int) -> "GradedClass":
        return cls.from_exact(ring, ring.divisor_classes[j])

    @classmethod
    def divisor_sum(cls, ring: CohRing, coeffs: Sequence) -> "GradedClass":
        v = np.zeros(ring.size, dtype=complex)
        for c, d in zip(coeffs, ring.divisor_classes):
            if c:
                v += complex(c) * np.array([float(x) for x in d])
        return cls(ring, v)

    @classmethod
    def first_chern(cls, ring: CohRing) -> "GradedClass":
        return cls.from_exact(ring, ring.c1)

    # arithmetic -----------------------------------------------------------
    def _wrap(self, other) -> "GradedClass":
        if isinstance(other, GradedClass):
            return other
        out = GradedClass.zero(self.ring)
        out.coeffs[0] = other
        return out

    def __add__(self, other):
        return GradedClass(self.ring, self.coeffs + self._wrap(other).coeffs)

    __radd__ = __add__

    def __sub__(self, other):
        return GradedClass(self.ring, self.coeffs - self._wrap(other).coeffs)

    def __rsub__(self, other):
        return GradedClass(self.ring, self._wrap(other).coeffs - self.coeffs)

    def __neg__(self):
        return GradedClass(self.ring, -self.coeffs)

    def __mul__(self, other):
        if isinstance(other, GradedClass):
            m = self.ring.structure_constants
            return GradedClass(self.ring, np.einsum("i,j,ijk->k", self.coeffs, other.coeffs, m))
        return GradedClass(self.ring, self.coeffs * other)

    def __rmul__(self, other):
        return GradedClass(self.ring, self.coeffs * other)

    def __truediv__(self, other):
        if isinstance(other, GradedClass):
            return self * other.inverse()
        return GradedClass(self.ring, self.coeffs / other)

    def __pow__(self, k: int):
        out = GradedClass.one(self.ring)
        for _ in range(k):
            out = out * self
        return out

    # structure ------------------------------------------------------------
    @property
    def scalar(self) -> complex:
        return complex(self.coeffs[0])

    def nilpotent_part(self) -> "GradedClass":
        v = self.coeffs.copy()
        v[0] = 0
        return GradedClass(self.ring, v)

    def degree_part(self, k: int) -> "GradedClass":
        v = np.zeros_like(self.coeffs)
        sl = self.ring.degree_slice(k)
        v[sl] = self.coeffs[sl]
        return GradedClass(self.ring, v)

    def is_homogeneous(self, k: int, atol: float = 0.0) -> bool:
        degs = np.array(self.ring.degrees)
        return bool(np.all(np.abs(self.coeffs[degs != k]) <= atol))

    def integrate(self) -> complex:
        return complex(self.coeffs @ self.ring.integration_vector)

    def allclose(self, other, rtol=1e-14, atol=1e-14) -> bool:
        return bool(np.allclose(self.coeffs, self._wrap(other).coeffs, rtol=rtol, atol=atol))

    def apply_series(self, derivs: Callable[[complex, int], Sequence[complex]]) -> "GradedClass":
        """f(x) for x = a + N (N nilpotent) as sum_k f^(k)(a)/k! N^k.

        ``derivs(a, n)`` returns the Taylor coefficients f^(k)(a)/k! for k = 0..n.
        """
        a = self.scalar
        nil = self.nilpotent_part()
        taylor = derivs(a, self.ring.dim)
        out = GradedClass.zero(self.ring)
        power = GradedClass.one(self.ring)
        for k, ck in enumerate(taylor):
            if k:
                power = power * nil
            out = out + power * ck
        return out

    def exp(self) -> "GradedClass":
        return self.apply_series(lambda a, n: [cmath.exp(a) / math.factorial(k) for k in range(n + 1)])

    def log(self) -> "GradedClass":
        def derivs(a, n):
            if a == 0:
                raise ZeroDivisionError("log of a nilpotent class")
            return [cmath.log(a)] + [(-1) ** (k + 1) / (k * a ** k) for k in range(1, n + 1)]
        return self.apply_series(derivs)

    def inverse(self) -> "GradedClass":
        return self.apply_series(lambda a, n: [(-1) ** k / a ** (k + 1) for k in range(n + 1)])

    def __repr__(self) -> str:
        names = self.ring.basis_names()
        terms = [f"({c.real:.6g}{c.imag:+.6g}j)*{nm}" for c, nm in zip(self.coeffs, names) if c != 0]
        return "GradedClass(" + (" + ".join(terms) or "0") + ")"


# ---------------------------------------------------------------------------
# Gamma-type series
# ---------------------------------------------------------------------------

def _log_gamma_1p_taylor(n: int, sign: int = 1) -> list[float]:
    """Taylor coefficients of log Gamma(1 + sign*x) at x = 0."""
    if n > MAX_DIM:
        raise ValueError(f"zeta table only covers dimension <= {MAX_DIM}")
    out = [0.0, -sign * EULER_GAMMA]
    for k in range(2, n + 1):
        out.append((-1) ** k * ZETA[k] / k * sign ** k)
    return out[: n + 1]


def _nilpotent_check(x: GradedClass) -> None:
    if abs(x.scalar) > 0:
        raise ValueError("expected a class with zero degree-0 part")


def gamma_one_plus(x: GradedClass, sign: int = 1) -> GradedClass:
    """Gamma(1 + sign*x) for a nilpotent class x."""
    _nilpotent_check(x)
    coeffs = _log_gamma_1p_taylor(x.ring.dim, sign)
    log_val = GradedClass.zero(x.ring)
    power = GradedClass.one(x.ring)
    for k, ck in enumerate(coeffs):
        if k:
            power = power * x
            log_val = log_val + power * ck
    return log_val.exp()


def gamma_class(ring: CohRing) -> GradedClass:
    """Gamma class prod_j Gamma(1 + D_j) (toric tangent bundle, Euler sequence)."""
    total_log = GradedClass.zero(ring)
    coeffs = _log_gamma_1p_taylor(ring.dim)
    for j in range(ring.fan.nrays):
        d = GradedClass.divisor(ring, j)
        power = GradedClass.one(ring)
        for k, ck in enumerate(coeffs):
            if k:
                power = power * d
                total_log = total_log + power * ck
    return total_log.exp()


def gamma_of_quotient(gamma_F: GradedClass, v: Sequence[GradedClass]) -> GradedClass:
    out = gamma_F
    for vi in v:
        out = out * gamma_one_plus(vi).inverse()
    return out


def grading_operator(x: GradedClass, z: complex, alpha: GradedClass | None = None,
                     log_z: complex | None = None) -> GradedClass:
    """z^alpha z^(deg/2) x with an explicit logarithm of z.

    ``log_z`` defaults to the principal logarithm.
    """
    if z == 0:
        raise ZeroDivisionError("grading operator at z = 0")
    lz = cmath.log(z) if log_z is None else log_z
    degs = np.array(x.ring.degrees)
    scaled = GradedClass(x.ring, x.coeffs * np.exp(degs * lz))
    if alpha is None:
        return scaled
    return (alpha * lz).exp() * scaled


def _jump_series_taylor(n: int) -> list[complex]:
    # (1 - e^{2 pi i x}) / (-x) = sum_{k>=1} (2 pi i)^k x^(k-1) / k!
    w = 2j * math.pi
    return [w ** (k + 1) / math.factorial(k + 1) for k in range(n + 1)]


def jump_class(v: GradedClass) -> GradedClass:
    """(1 - e^{2 pi i v}) / (-v) as an entire series in the nilpotent class v."""
    _nilpotent_check(v)
    coeffs = _jump_series_taylor(v.ring.dim)
    out = GradedClass.zero(v.ring)
    power = GradedClass.one(v.ring)
    for k, ck in enumerate(coeffs):
        if k:
            power = power * v
        out = out + power * ck
    return out


def jump_factor(ring: CohRing, v: Sequence[GradedClass]) -> GradedClass:
    """prod_i Gamma(1 - v_i) (1 - e^{2 pi i v_i}) / (-v_i)."""
    out = GradedClass.one(ring)
    for vi in v:
        out = out * gamma_one_plus(vi, sign=-1) * jump_class(vi)
    return out


def laplace_factor(ring: CohRing, v: Sequence[GradedClass]) -> GradedClass:
    """prod_i e^{-pi i v_i} Gamma(1 - v_i)."""
    out = GradedClass.one(ring)
    for vi in v:
        out = out * (vi * (-1j * math.pi)).exp() * gamma_one_plus(vi, sign=-1)
    return out


def rgamma_shift(x: GradedClass, m: int) -> GradedClass:
    """1 / Gamma(1 + x - m) for nilpotent x and integer m."""
    base = gamma_one_plus(x).inverse()
    if m >= 0:
        for k in range(m):
            base = base * (x - k)
    else:
        for k in range(1, -m + 1):
            base = base / (x + k)
    return base
