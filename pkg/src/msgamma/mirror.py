"""Laurent polynomial mirrors and the integral side of every identity.

All integrals are taken in logarithmic coordinates t = log x on R^n, so
dx/x becomes dt and W(e^t) is a positive sum of exponentials of linear
forms (hence convex).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import linprog, minimize
from scipy.special import logsumexp

from . import quadrature as quad
from .toric import FanData

TRUNCATION_L = 40.0
MAX_LEVEL = {1: 7, 2: 6, 3: 4}


class AssumptionError(ValueError):
    pass


class CutError(ValueError):
    pass


class DegenerateFiberError(RuntimeError):
    pass


class UnboundedRegionError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class LaurentPoly:
    """sum_k coeffs[k] x^exponents[k]; evaluated in log coordinates."""

    coeffs: tuple[float, ...]
    exponents: tuple[tuple[int, ...], ...]
    _logc: np.ndarray = field(init=False, repr=False, compare=False)
    _E: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.coeffs) != len(self.exponents):
            raise ValueError("one coefficient per exponent")
        if len(self.exponents) and len({len(e) for e in self.exponents}) != 1:
            raise ValueError("exponents of mixed dimension")
        c = np.array(self.coeffs, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            object.__setattr__(self, "_logc", np.log(c))
        object.__setattr__(self, "_E", np.array(self.exponents, dtype=float).reshape(len(self.coeffs), -1))

    @classmethod
    def from_terms(cls, terms: Sequence[tuple[float, Sequence[int]]]) -> "LaurentPoly":
        return cls(tuple(float(c) for c, _ in terms), tuple(tuple(int(x) for x in e) for _, e in terms))

    @property
    def dim(self) -> int:
        return self._E.shape[1]

    @property
    def nterms(self) -> int:
        return len(self.coeffs)

    def log_value(self, t: np.ndarray) -> np.ndarray:
        """log W(e^t) for t of shape (..., n)."""
        a = self._logc + np.asarray(t) @ self._E.T
        return logsumexp(a, axis=-1)

    def value(self, t: np.ndarray) -> np.ndarray:
        # far-out Monte Carlo samples may overflow to inf; every integrand
        # consumes W through exp(-W) or 1/W, so inf is the right limit
        with np.errstate(over="ignore"):
            return np.exp(self.log_value(t))

    def grad_along(self, t: np.ndarray, d: np.ndarray) -> np.ndarray:
        """Directional derivative of W(e^t) along d (rows of t and d paired)."""
        a = np.exp(self._logc + t @ self._E.T)
        return np.sum(a * (d @ self._E.T), axis=-1)

    def derivatives(self, t: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
        """Value, gradient and Hessian of W(e^t) at a single point."""
        a = np.exp(self._logc + self._E @ t)
        g = self._E.T @ a
        h = (self._E.T * a) @ self._E
        return float(a.sum()), g, h

    def __str__(self) -> str:
        parts = []
        for c, e in zip(self.coeffs, self.exponents):
            mono = "*".join(f"x{i + 1}^{k}" if k != 1 else f"x{i + 1}" for i, k in enumerate(e) if k)
            parts.append(f"{c:.6g}" + (f"*{mono}" if mono else ""))
        return " + ".join(parts) if parts else "0"


@dataclass(frozen=True)
class MirrorPartition:
    W0: LaurentPoly | None
    Ws: tuple[LaurentPoly, ...]
    groups: tuple[tuple[int, ...], ...]

    @property
    def full(self) -> LaurentPoly:
        parts = ([self.W0] if self.W0 is not None else []) + list(self.Ws)
        return LaurentPoly(sum((p.coeffs for p in parts), ()), sum((p.exponents for p in parts), ()))


@dataclass(frozen=True)
class AssumptionReport:
    w1: bool
    w2: bool
    weights: tuple[float, ...] | None
    message: str

    @property
    def ok(self) -> bool:
        return self.w1 and self.w2


@dataclass(frozen=True)
class ConvexMinResult:
    T: float
    argmin_log: np.ndarray
    hessian: np.ndarray
    grad_norm: float
    iterations: int


@dataclass
class IntegralResult:
    value: complex
    error_estimate: float
    method: str
    samples_or_nodes: int
    seed: int | None = None
    converged: bool = True
    exact: bool = False
    detail: dict = field(default_factory=dict)

    @property
    def real(self) -> float:
        return float(np.real(self.value))


# ---------------------------------------------------------------------------
# construction and diagnostics
# ---------------------------------------------------------------------------

def build_mirror(fan: FanData, lam: Sequence[float]) -> LaurentPoly:
    """W = sum_j e^{-lambda_j} x^{b_j}."""
    if len(lam) != fan.nrays:
        raise ValueError(f"need {fan.nrays} lambda values, got {len(lam)}")
    return LaurentPoly(tuple(math.exp(-float(l)) for l in lam), tuple(tuple(b) for b in fan.rays))


def build_mirror_partition(fan: FanData, lam: Sequence[float],
                           groups: Sequence[Sequence[int]]) -> MirrorPartition:
    """Split W into W^(0) + sum_i W^(i) by disjoint groups of ray indices."""
    W = build_mirror(fan, lam)
    seen: set[int] = set()
    for g in groups:
        if not g:
            raise ValueError("empty partition group")
        for j in g:
            if j in seen or not 0 <= j < fan.nrays:
                raise ValueError(f"invalid or repeated ray index {j}")
            seen.add(j)
    rest = [j for j in range(fan.nrays) if j not in seen]

    def sub(idx):
        return LaurentPoly(tuple(W.coeffs[j] for j in idx), tuple(W.exponents[j] for j in idx))

    return MirrorPartition(sub(rest) if rest else None, tuple(sub(g) for g in groups),
                           tuple(tuple(g) for g in groups))


def check_assumptions(W: LaurentPoly) -> AssumptionReport:
    """Origin strictly inside the Newton polytope, and positive coefficients."""
    w2 = all(c > 0 for c in W.coeffs)
    m = W.nterms
    if m == 0:
        return AssumptionReport(False, w2, None, "no terms")
    E = W._E
    # maximise eps subject to w_k >= eps, sum w = 1, sum w_k e_k = 0
    c = np.zeros(m + 1)
    c[-1] = -1.0
    A_eq = np.zeros((W.dim + 1, m + 1))
    A_eq[: W.dim, :m] = E.T
    A_eq[W.dim, :m] = 1.0
    b_eq = np.zeros(W.dim + 1)
    b_eq[-1] = 1.0
    A_ub = np.hstack([-np.eye(m), np.ones((m, 1))])
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(m), A_eq=A_eq, b_eq=b_eq,
                  bounds=[(0, None)] * m + [(None, 1)], method="highs")
    full_rank = np.linalg.matrix_rank(E) == W.dim
    if res.status != 0:
        return AssumptionReport(False, w2, None, "origin not in the Newton polytope")
    eps = -res.fun
    w1 = bool(eps > 1e-12 and full_rank)
    weights = tuple(float(x) for x in res.x[:m])
    msg = "ok" if (w1 and w2) else ("origin not interior" if not w1 else "non-positive coefficient")
    return AssumptionReport(w1, w2, weights, msg)


def _require(W: LaurentPoly) -> None:
    rep = check_assumptions(W)
    if not rep.ok:
        raise AssumptionError(rep.message)


def _newton(fgh: Callable[[np.ndarray], tuple[float, np.ndarray, np.ndarray]], x0: np.ndarray,
            feasible: Callable[[np.ndarray], bool] | None = None, max_iter: int = 200,
            gtol: float = 1e-12) -> tuple[np.ndarray, float, np.ndarray, np.ndarray, int]:
    """Damped Newton for a smooth strictly convex function."""
    x = np.array(x0, dtype=float)
    f, g, h = fgh(x)
    for it in range(max_iter):
        gn = np.linalg.norm(g)
        if gn < gtol * max(1.0, abs(f)):
            return x, f, g, h, it
        try:
            step = -np.linalg.solve(h, g)
        except np.linalg.LinAlgError:
            step = -g
        dec = -g @ step
        if dec <= 0:
            step, dec = -g, g @ g
        a = 1.0
        if dec < 1e-10 * max(1.0, abs(f)):
            # quadratic regime: f differences are below roundoff, so take the
            # full step instead of comparing values
            xn = x + step
            if feasible is None or feasible(xn):
                x = xn
                f, g, h = fgh(x)
                continue
        while True:
            xn = x + a * step
            if feasible is None or feasible(xn):
                fn = fgh(xn)
                if np.isfinite(fn[0]) and fn[0] <= f - 1e-4 * a * dec:
                    break
            a *= 0.5
            if a < 1e-20:
                break
        if a < 1e-20:
            # no further decrease available at working precision
            return x, f, g, h, it
        x = xn
        f, g, h = fn
    if np.linalg.norm(g) < gtol * max(1.0, abs(f)):
        return x, f, g, h, max_iter
    raise ConvergenceError("Newton iteration did not converge in 200 steps")


def minimize_log(W: LaurentPoly) -> ConvexMinResult:
    """Unique minimum of W(e^t), by Newton's method from t = 0."""
    _require(W)
    t, f, g, h, it = _newton(W.derivatives, np.zeros(W.dim))
    return ConvexMinResult(f, t, h, float(np.linalg.norm(g)), it)


# ---------------------------------------------------------------------------
# shared adaptive driver
# ---------------------------------------------------------------------------

def _adaptive(n: int, estimate: Callable[[int], tuple[complex, int]], tol: float, atol: float,
              max_level: int | None = None, min_level: int = 1, method: str = "quad-radial"
              ) -> IntegralResult:
    """Double the rule until successive estimates agree."""
    top = MAX_LEVEL.get(n, 3) if max_level is None else max_level
    prev = None
    nodes = 0
    for level in range(top + 1):
        val, cnt = estimate(level)
        nodes += cnt
        if prev is not None:
            err = abs(val - prev)
            if level >= min_level and err <= max(tol * abs(val), atol):
                return IntegralResult(val, err, method, nodes, detail={"level": level})
        prev = val
    return IntegralResult(val, err, method, nodes, converged=False, detail={"level": top})


def _dirs(n: int, level: int):
    return quad.sphere_rule(n, level)


def _panels(level: int) -> int:
    return 2 ** (level + 1)


def _check_method(method: str, n: int) -> str:
    if method not in ("auto", "quad", "mc"):
        raise ValueError("method must be auto, quad or mc")
    if method == "auto":
        return "quad" if n <= 3 else "mc"
    if method == "quad" and n > 3:
        raise ValueError("deterministic quadrature supports n <= 3")
    return method


def _student_t(rng: np.random.Generator, size: int, mean: np.ndarray, chol: np.ndarray, df: float):
    n = len(mean)
    zs = rng.standard_normal((size, n))
    g = rng.chisquare(df, size)
    x = mean + (zs / np.sqrt(g / df)[:, None]) @ chol.T
    # log density
    u = np.linalg.solve(chol, (x - mean).T).T
    q = np.sum(u ** 2, axis=1)
    logdet = np.sum(np.log(np.diag(chol)))
    logp = (math.lgamma((df + n) / 2) - math.lgamma(df / 2) - n / 2 * math.log(df * math.pi)
            - logdet - (df + n) / 2 * np.log1p(q / df))
    return x, logp


def _gaussian(rng: np.random.Generator, size: int, mean: np.ndarray, chol: np.ndarray):
    n = len(mean)
    zs = rng.standard_normal((size, n))
    x = mean + zs @ chol.T
    logp = -0.5 * np.sum(zs ** 2, axis=1) - np.sum(np.log(np.diag(chol))) - n / 2 * math.log(2 * math.pi)
    return x, logp


def _mc_result(batch_fn, seed: int, tol: float, atol: float, method: str, detail=None) -> IntegralResult:
    mean, se, cnt, ok = quad.mc_batches(batch_fn, seed, tol, atol)
    return IntegralResult(complex(mean), se, method, cnt, seed=seed, converged=ok, detail=detail or {})


# ---------------------------------------------------------------------------
# oscillatory and Hilbert-transform integrals
# ---------------------------------------------------------------------------

def oscillatory_integral(W: LaurentPoly, z: float, tol: float = 1e-10, method: str = "auto",
                         seed: int = 0, atol: float = 0.0) -> IntegralResult:
    """int_{R^n} exp(-W(e^t)/z) dt."""
    if not z > 0:
        raise ValueError("z must be positive")
    mn = minimize_log(W)
    n = W.dim
    method = _check_method(method, n)
    T, c = mn.T, mn.argmin_log

    def integrand(pts):
        return np.exp(-(W.value(pts) - T) / z)

    scale = math.exp(-T / z)
    if method == "mc":
        chol = np.linalg.cholesky(z * np.linalg.inv(mn.hessian))

        def batch(rng, size):
            x, logp = _gaussian(rng, size, c, chol)
            v = np.exp(-W.value(x) / z - logp)
            return v.sum(), np.sum(v ** 2), size

        res = _mc_result(batch, seed, tol, atol, "mc-gaussian")
        res.detail["T"] = T
        return res

    level_log = math.log(T + z * TRUNCATION_L)

    def estimate(level):
        dirs, w = _dirs(n, level)
        R = quad.ray_roots(W.log_value, c, dirs, level_log)
        val = quad.radial_integral(n, c, dirs, w, R, integrand, _panels(level))
        return val.real * scale, len(dirs) * len(quad.radial_rule(_panels(level))[0])

    res = _adaptive(n, estimate, tol, atol)
    res.value = complex(res.value.real)
    res.detail["T"] = T
    return res


def _log_shifted(W: LaurentPoly, a: float) -> Callable[[np.ndarray], np.ndarray]:
    """t -> log(W(e^t) + a) for a >= 0."""
    la = math.log(a) if a > 0 else -np.inf

    def f(pts):
        return np.logaddexp(W.log_value(pts), la)

    return f


def _phi_derivatives(W0: LaurentPoly | None, Ws: Sequence[LaurentPoly], shifts: Sequence[float], z: float):
    """Value/grad/Hessian of W0/z + sum_i log(W_i + a_i)."""
    def fgh(t):
        f, g, h = 0.0, np.zeros(len(t)), np.zeros((len(t), len(t)))
        if W0 is not None:
            f0, g0, h0 = W0.derivatives(t)
            f, g, h = f0 / z, g0 / z, h0 / z
        for Wi, a in zip(Ws, shifts):
            fi, gi, hi = Wi.derivatives(t)
            p = fi + a
            f += math.log(p)
            g = g + gi / p
            h = h + hi / p - np.outer(gi, gi) / p ** 2
        return f, g, h
    return fgh


def multi_hilbert_integral(W0: LaurentPoly | None, Ws: Sequence[LaurentPoly], s: Sequence[complex],
                           z: float = 1.0, tol: float = 1e-10, method: str = "auto", seed: int = 0,
                           atol: float = 0.0) -> IntegralResult:
    """z^c int exp(-W0(e^t)/z) / prod_i (W_i(e^t) - s_i) dt for s_i off [0, inf)."""
    if len(Ws) != len(s) or not Ws:
        raise ValueError("need one s_i per W_i (c >= 1)")
    for si in s:
        si = complex(si)
        if abs(si.imag) == 0 and si.real >= 0:
            raise CutError(f"s = {si} lies on the cut [0, inf)")
    full = MirrorPartition(W0, tuple(Ws), ()).full
    _require(full)
    n = full.dim
    return _hilbert_core(W0, list(Ws), [complex(x) for x in s], z, tol, method, seed, atol, n,
                         shifts=[abs(complex(x)) for x in s])


def _hilbert_core(W0, Ws, s, z, tol, method, seed, atol, n, shifts) -> IntegralResult:
    method = _check_method(method, n)
    fgh = _phi_derivatives(W0, Ws, shifts, z)
    start = minimize_log(MirrorPartition(W0, tuple(Ws), ()).full).argmin_log
    c, phi0, _, hess, _ = _newton(fgh, start)
    logs = [_log_shifted(Wi, a) for Wi, a in zip(Ws, shifts)]

    def phi(pts):
        out = sum(f(pts) for f in logs)
        if W0 is not None:
            out = out + W0.value(pts) / z
        return out

    pref = z ** len(Ws)

    def integrand(pts):
        val = np.ones(len(pts), dtype=complex)
        for Wi, si in zip(Ws, s):
            val = val / (Wi.value(pts) - si)
        if W0 is not None:
            val = val * np.exp(-W0.value(pts) / z)
        return val

    if method == "mc":
        chol = np.linalg.cholesky(4.0 * np.linalg.inv(hess))

        def batch(rng, size):
            x, logp = _student_t(rng, size, c, chol, 3.0)
            v = integrand(x) * np.exp(-logp) * pref
            return v.sum(), np.sum(np.abs(v) ** 2), size

        return _mc_result(batch, seed, tol, atol, "mc-student-t")

    level = phi0 + TRUNCATION_L

    def estimate(lv):
        dirs, w = _dirs(n, lv)
        R = quad.ray_roots(phi, c, dirs, level)
        val = quad.radial_integral(n, c, dirs, w, R, integrand, _panels(lv))
        return pref * val, len(dirs) * len(quad.radial_rule(_panels(lv))[0])

    return _adaptive(n, estimate, tol, atol)


def hilbert_integral(W: LaurentPoly, s: complex, tol: float = 1e-10, method: str = "auto",
                     seed: int = 0, atol: float = 0.0) -> IntegralResult:
    """int (W(e^t) - s)^{-1} dt for s off the cut [T, inf)."""
    T = minimize_log(W).T
    s = complex(s)
    if abs(s.imag) < 1e-8 * T and s.real >= T - 1e-8 * T:
        raise CutError(f"s = {s} is on or too near the cut [{T}, inf)")
    res = _hilbert_core(None, [W], [s], 1.0, tol, method, seed, atol, W.dim, shifts=[abs(s)])
    if s.imag == 0:
        res.value = complex(res.value.real)
    return res


# ---------------------------------------------------------------------------
# sublevel regions
# ---------------------------------------------------------------------------

@dataclass
class _Region:
    Ws: list[LaurentPoly]
    s: np.ndarray
    W0: LaurentPoly | None
    z: float
    n: int
    centre: np.ndarray | None
    hessian: np.ndarray | None
    empty: bool


def _coercive(W: LaurentPoly) -> bool:
    return check_assumptions(W).ok


def _feasible_point(Ws: Sequence[LaurentPoly], s: np.ndarray, start: np.ndarray) -> tuple[np.ndarray, float]:
    """Approximate argmin of max_i log(W_i/s_i), capped below at -1."""
    n = len(start)
    ls = np.log(s)

    def cons(x):
        t, u = x[:n], x[n]
        return np.array([u - (Wi.log_value(t) - l) for Wi, l in zip(Ws, ls)])

    u0 = max(float(Wi.log_value(start) - l) for Wi, l in zip(Ws, ls))
    res = minimize(lambda x: x[n], np.append(start, u0 + 1.0), method="SLSQP",
                   constraints=[{"type": "ineq", "fun": cons}],
                   bounds=[(None, None)] * n + [(-1.0, None)], options={"ftol": 1e-14, "maxiter": 500})
    t = res.x[:n]
    u = max(float(Wi.log_value(t) - l) for Wi, l in zip(Ws, ls))
    return t, u


def _prepare_region(Ws: Sequence[LaurentPoly], s: Sequence[float],
                    weight: tuple[LaurentPoly | None, float] | None) -> _Region:
    Ws = list(Ws)
    s = np.asarray(s, dtype=float)
    if len(Ws) != len(s) or not Ws:
        raise ValueError("need one level s_i per W_i")
    if np.any(s <= 0):
        raise ValueError("levels must be positive")
    W0, z = (weight if weight is not None else (None, 1.0))
    if weight is not None and not z > 0:
        raise ValueError("weight z must be positive")
    n = Ws[0].dim
    full = MirrorPartition(W0, tuple(Ws), ()).full
    if weight is None and not _coercive(MirrorPartition(None, tuple(Ws), ()).full):
        raise UnboundedRegionError("unweighted region is unbounded")
    if weight is not None:
        _require(full)
    # emptiness
    if len(Ws) == 1 and _coercive(Ws[0]):
        mn = minimize_log(Ws[0])
        if s[0] <= mn.T:
            return _Region(Ws, s, W0, z, n, None, None, True)
        start = mn.argmin_log
    else:
        start0 = minimize_log(full).argmin_log
        start, u = _feasible_point(Ws, s, start0)
        if u >= -1e-12:
            return _Region(Ws, s, W0, z, n, None, None, True)

    def fgh(t):
        f, g, h = 0.0, np.zeros(n), np.zeros((n, n))
        if W0 is not None:
            f0, g0, h0 = W0.derivatives(t)
            f, g, h = f0 / z, g0 / z, h0 / z
        for Wi, si in zip(Ws, s):
            wi, gi, hi = Wi.derivatives(t)
            gap = si - wi
            if gap <= 0:
                return math.inf, g, h
            f -= math.log(gap / si)
            g = g + gi / gap
            h = h + hi / gap + np.outer(gi, gi) / gap ** 2
        return f, g, h

    def inside(t):
        return all(Wi.value(t) < si for Wi, si in zip(Ws, s))

    c, _, _, hess, _ = _newton(fgh, start, feasible=inside, gtol=1e-10)
    return _Region(Ws, s, W0, z, n, c, hess, False)


def _region_radii(reg: _Region, dirs: np.ndarray, s: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Distance to the region boundary and to the truncation surface along each direction."""
    s = reg.s if s is None else s
    R = np.full(len(dirs), np.inf)
    for Wi, si in zip(reg.Ws, s):
        R = np.minimum(R, quad.ray_roots(Wi.log_value, reg.centre, dirs, math.log(si)))
    if reg.W0 is None:
        return R, np.full(len(dirs), np.inf)
    full = MirrorPartition(reg.W0, tuple(reg.Ws), ()).full
    w0c = float(reg.W0.value(reg.centre))
    cut = w0c + reg.z * TRUNCATION_L + float(np.sum(s))
    Rt = quad.ray_roots(full.log_value, reg.centre, dirs, math.log(cut))
    return R, Rt


def _region_estimate(reg: _Region, level: int, s: np.ndarray | None = None) -> tuple[float, int]:
    n = reg.n
    dirs, w = _dirs(n, level)
    R, Rt = _region_radii(reg, dirs, s)
    if reg.W0 is None:
        if np.any(~np.isfinite(R)):
            raise UnboundedRegionError("region is unbounded")
        return float(np.sum(w * R ** n) / n), len(dirs)
    Rm = np.minimum(R, Rt)
    W0, z = reg.W0, reg.z

    def integrand(pts):
        return np.exp(-W0.value(pts) / z)

    val = quad.radial_integral(n, reg.centre, dirs, w, Rm, integrand, _panels(level))
    return val.real, len(dirs) * len(quad.radial_rule(_panels(level))[0])


def _box(reg: _Region) -> tuple[np.ndarray, np.ndarray]:
    """Coordinate bounding box of the region via support-point optimisation."""
    n = reg.n
    ls = np.log(reg.s)
    cons = [{"type": "ineq", "fun": (lambda t, Wi=Wi, l=l: l - Wi.log_value(t))} for Wi, l in zip(reg.Ws, ls)]
    lo, hi = np.empty(n), np.empty(n)
    for k in range(n):
        for sign, store in ((1.0, lo), (-1.0, hi)):
            res = minimize(lambda t: sign * t[k], reg.centre, method="SLSQP", constraints=cons,
                           options={"ftol": 1e-12, "maxiter": 500})
            store[k] = res.x[k]
    pad = 1e-6 * np.maximum(1.0, hi - lo)
    return lo - pad, hi + pad


def region_volume(Ws: Sequence[LaurentPoly], s: Sequence[float],
                  weight: tuple[LaurentPoly | None, float] | None = None, tol: float = 1e-10,
                  method: str = "auto", seed: int = 0, atol: float = 0.0) -> IntegralResult:
    """int over {t : W_i(e^t) <= s_i for all i} of exp(-W0(e^t)/z) dt (weight 1 if absent)."""
    reg = _prepare_region(Ws, s, weight)
    if reg.empty:
        return IntegralResult(0.0, 0.0, "exact-empty", 0, exact=True)
    method = _check_method(method, reg.n)
    if method == "mc":
        return _region_mc(reg, tol, seed, atol)
    res = _adaptive(reg.n, lambda lv: _region_estimate(reg, lv), tol, atol)
    res.value = complex(res.value.real)
    return res


def _region_mc(reg: _Region, tol: float, seed: int, atol: float) -> IntegralResult:
    n = reg.n

    def inside(x):
        ok = np.ones(len(x), dtype=bool)
        for Wi, si in zip(reg.Ws, reg.s):
            ok &= Wi.log_value(x) <= math.log(si)
        return ok

    if reg.W0 is None:
        lo, hi = _box(reg)
        vol = float(np.prod(hi - lo))

        def batch(rng, size):
            x = lo + (hi - lo) * rng.random((size, n))
            v = inside(x) * vol
            return v.sum(), np.sum(v ** 2), size

        return _mc_result(batch, seed, tol, atol, "mc-box", {"box": [lo.tolist(), hi.tolist()]})
    chol = np.linalg.cholesky(4.0 * np.linalg.inv(reg.hessian))
    W0, z = reg.W0, reg.z

    def batch(rng, size):
        x, logp = _student_t(rng, size, reg.centre, chol, 3.0)
        v = inside(x) * np.exp(-W0.value(x) / z - logp)
        return v.sum(), np.sum(v ** 2), size

    return _mc_result(batch, seed, tol, atol, "mc-student-t")


# ---------------------------------------------------------------------------
# fibers
# ---------------------------------------------------------------------------

def _fd_derivative(V: Callable[[np.ndarray], float], s: np.ndarray, h: np.ndarray) -> float:
    """Mixed partial d^c V / ds_1..ds_c by central differences."""
    c = len(s)
    total = 0.0
    for signs in np.ndindex(*(2,) * c):
        eps = np.array([1.0 if b == 0 else -1.0 for b in signs])
        total += np.prod(eps) * V(s + eps * h)
    return total / (2 ** c * np.prod(h))


def fiber_integral(Ws: Sequence[LaurentPoly], s: Sequence[float],
                   weight: tuple[LaurentPoly | None, float] | None = None, tol: float = 1e-10,
                   method: str = "auto", seed: int = 0, route: str = "fd", rel_step: float = 1e-3
                   ) -> IntegralResult:
    """Integral over the fiber {W_i = s_i} of weight * dt / (dW_1 ... dW_c).

    route="fd": mixed s-derivative of the region volume by central differences
    with one Richardson level.  route="direct" (c = 1 only): the coarea sum
    over boundary points, sum_w R^{n-1} f / (grad W . w).
    """
    s = np.asarray(s, dtype=float)
    reg = _prepare_region(Ws, s, weight)
    n = reg.n
    if reg.empty:
        return IntegralResult(0.0, 0.0, "exact-empty", 0, exact=True)
    method = _check_method(method, n)
    if route == "direct" or method == "mc":
        if len(reg.Ws) != 1:
            raise ValueError("direct fiber route needs a single constraint")
        return _fiber_direct(reg, tol, method, seed)
    if route != "fd":
        raise ValueError("route must be 'fd' or 'direct'")

    # pick the level from the adaptive volume at s, then keep the rule fixed
    base = _adaptive(n, lambda lv: _region_estimate(reg, lv), tol, 0.0)
    level = min(base.detail["level"] + 1, MAX_LEVEL.get(n, 3))
    h = rel_step * s
    lower = s - 2 * h
    if np.any(lower <= 0):
        raise ValueError("finite-difference step leaves s > 0")

    def V(x):
        return _region_estimate(reg, level, x)[0]

    d1 = _fd_derivative(V, s, h)
    d2 = _fd_derivative(V, s, h / 2)
    rich = (4 * d2 - d1) / 3
    resid = abs(rich - d2)
    scale = max(abs(rich), 1e-300)
    if not np.isfinite(rich) or resid > 1e-2 * scale:
        raise DegenerateFiberError(f"unstable Richardson residual {resid:.3e} at s = {s.tolist()}")
    err = resid + base.error_estimate / np.prod(h)
    return IntegralResult(complex(rich), float(err), "fd-richardson", base.samples_or_nodes,
                          converged=base.converged, detail={"level": level, "h": h.tolist()})


def _fiber_direct(reg: _Region, tol: float, method: str, seed: int) -> IntegralResult:
    n = reg.n
    W1, s1 = reg.Ws[0], reg.s[0]
    W0, z = reg.W0, reg.z

    def contributions(dirs):
        R, Rt = _region_radii(reg, dirs)
        ok = np.isfinite(R) & (R < Rt)
        if reg.W0 is None and not np.all(np.isfinite(R)):
            raise UnboundedRegionError("region is unbounded")
        out = np.zeros(len(dirs))
        if not ok.any():
            return out
        pts = reg.centre + R[ok, None] * dirs[ok]
        dW = W1.grad_along(pts, dirs[ok])
        f = np.ones(ok.sum()) if W0 is None else np.exp(-W0.value(pts) / z)
        out[ok] = R[ok] ** (n - 1) * f / dW
        return out

    if method == "mc":
        area = quad.sphere_area(n)

        def batch(rng, size):
            d = rng.standard_normal((size, n))
            d /= np.linalg.norm(d, axis=1, keepdims=True)
            v = area * contributions(d)
            return v.sum(), np.sum(v ** 2), size

        return _mc_result(batch, seed, tol, 0.0, "mc-directions")

    def estimate(lv):
        dirs, w = _dirs(n, lv)
        return float(np.sum(w * contributions(dirs))), len(dirs)

    res = _adaptive(n, estimate, tol, 0.0, method="coarea-direct")
    res.value = complex(res.value.real)
    return res


def convexity_certificate(W: LaurentPoly, points: np.ndarray) -> float:
    """Smallest Hessian eigenvalue of W(e^t) over the given points."""
    return float(min(np.linalg.eigvalsh(W.derivatives(p)[2])[0] for p in points))
