"""Combinatorics and cohomology of smooth toric Fano varieties.

Everything here is exact (``fractions.Fraction``); floating point only enters
in the downstream class/series/integral modules.

The cohomology ring is built as ``Q[D_1..D_c] / (SR + linear relations)``.
The linear relations are used up front to eliminate the divisors of one
maximal cone, so the remaining work is per-degree row reduction in the
``c - n`` free divisor variables.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from itertools import combinations, combinations_with_replacement
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class FanError(ValueError):
    """Base class for invalid fan input."""


class MalformedFanError(FanError):
    pass


class NonPrimitiveRayError(FanError):
    pass


class SingularConeError(FanError):
    pass


class IncompleteFanError(FanError):
    pass


class NonFanoError(FanError):
    pass


class PolytopeError(ValueError):
    """Raised for unbounded/degenerate moment polytopes (non-ample lambda)."""


# ---------------------------------------------------------------------------
# exact linear algebra helpers
# ---------------------------------------------------------------------------

def _det_int(rows: Sequence[Sequence[int]]) -> int:
    m = [[Fraction(x) for x in r] for r in rows]
    n = len(m)
    det = Fraction(1)
    for i in range(n):
        piv = next((r for r in range(i, n) if m[r][i] != 0), None)
        if piv is None:
            return 0
        if piv != i:
            m[i], m[piv] = m[piv], m[i]
            det = -det
        det *= m[i][i]
        for r in range(i + 1, n):
            f = m[r][i] / m[i][i]
            if f:
                for k in range(i, n):
                    m[r][k] -= f * m[i][k]
    return int(det)


def _solve_exact(a: Sequence[Sequence], b: Sequence) -> list[Fraction]:
    """Solve the square system a x = b over Q (a assumed invertible)."""
    n = len(a)
    m = [[Fraction(x) for x in row] + [Fraction(bi)] for row, bi in zip(a, b)]
    for i in range(n):
        piv = next(r for r in range(i, n) if m[r][i] != 0)
        m[i], m[piv] = m[piv], m[i]
        inv = 1 / m[i][i]
        m[i] = [x * inv for x in m[i]]
        for r in range(n):
            if r != i and m[r][i] != 0:
                f = m[r][i]
                m[r] = [x - f * y for x, y in zip(m[r], m[i])]
    return [m[i][n] for i in range(n)]


def _rref(rows: list[list[Fraction]], ncols: int) -> tuple[list[list[Fraction]], list[int]]:
    rows = [r[:] for r in rows if any(r)]
    pivots: list[int] = []
    r = 0
    for col in range(ncols):
        piv = next((i for i in range(r, len(rows)) if rows[i][col] != 0), None)
        if piv is None:
            continue
        rows[r], rows[piv] = rows[piv], rows[r]
        inv = 1 / rows[r][col]
        rows[r] = [x * inv for x in rows[r]]
        for i in range(len(rows)):
            if i != r and rows[i][col] != 0:
                f = rows[i][col]
                rows[i] = [x - f * y for x, y in zip(rows[i], rows[r])]
        pivots.append(col)
        r += 1
        if r == len(rows):
            break
    return rows[:r], pivots


# ---------------------------------------------------------------------------
# fans
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FanData:
    rays: tuple[tuple[int, ...], ...]
    max_cones: tuple[tuple[int, ...], ...]
    name: str = ""

    @property
    def dim(self) -> int:
        return len(self.rays[0])

    @property
    def nrays(self) -> int:
        return len(self.rays)

    @cached_property
    def cones(self) -> frozenset[frozenset[int]]:
        """All cones (as ray-index sets), including the zero cone."""
        out = set()
        for sigma in self.max_cones:
            for k in range(len(sigma) + 1):
                out.update(frozenset(s) for s in combinations(sigma, k))
        return frozenset(out)

    def is_cone(self, indices: Iterable[int]) -> bool:
        return frozenset(indices) in self.cones

    def ray_matrix(self) -> np.ndarray:
        return np.array(self.rays, dtype=np.int64)


def _cone_dual_basis(fan: FanData, sigma: Sequence[int]) -> list[list[Fraction]]:
    """Vectors m_k with <m_k, b_{sigma_i}> = delta_ik (integral for smooth cones)."""
    n = fan.dim
    b = [fan.rays[j] for j in sigma]
    cols = []
    for k in range(n):
        e = [1 if i == k else 0 for i in range(n)]
        cols.append(_solve_exact(b, e))
    return cols


def validate_fan(fan: FanData) -> FanData:
    rays, cones = fan.rays, fan.max_cones
    if not rays or not cones:
        raise MalformedFanError("fan needs at least one ray and one maximal cone")
    n = len(rays[0])
    if n < 1 or any(len(r) != n for r in rays):
        raise MalformedFanError("all rays must have the same positive length")
    if len(set(rays)) != len(rays):
        raise MalformedFanError("duplicate rays")
    for j, r in enumerate(rays):
        if math.gcd(*r) != 1:
            raise NonPrimitiveRayError(f"ray {j} = {list(r)} is not primitive")
    for sigma in cones:
        if len(sigma) != n or len(set(sigma)) != n:
            raise MalformedFanError(f"maximal cone {list(sigma)} must list {n} distinct rays")
        if any(not 0 <= j < len(rays) for j in sigma):
            raise MalformedFanError(f"maximal cone {list(sigma)} has an out-of-range index")
        if abs(_det_int([rays[j] for j in sigma])) != 1:
            raise SingularConeError(f"cone {list(sigma)} is not unimodular")
    used = set().union(*map(set, cones))
    if used != set(range(len(rays))):
        raise MalformedFanError("every ray must belong to some maximal cone")
    _check_complete(fan)
    _check_fano(fan)
    return fan


def _check_complete(fan: FanData) -> None:
    n = fan.dim
    # pseudo-manifold: each wall lies in exactly two maximal cones, on opposite sides
    walls: dict[frozenset[int], list[tuple[int, ...]]] = {}
    for sigma in fan.max_cones:
        for j in sigma:
            walls.setdefault(frozenset(sigma) - {j}, []).append(sigma)
    for wall, owners in walls.items():
        if len(owners) != 2:
            raise IncompleteFanError(f"wall {sorted(wall)} lies in {len(owners)} maximal cones")
        (a,) = set(owners[0]) - wall
        (b,) = set(owners[1]) - wall
        w = sorted(wall)
        da = _det_int([fan.rays[i] for i in w] + [fan.rays[a]])
        db = _det_int([fan.rays[i] for i in w] + [fan.rays[b]])
        if da * db >= 0:
            raise IncompleteFanError(f"cones across wall {w} overlap")
    # and the cones cover a generic point exactly once
    rng = np.random.default_rng(12345)
    inverses = []
    for sigma in fan.max_cones:
        b = np.array([fan.rays[j] for j in sigma], dtype=float)
        inverses.append(np.linalg.inv(b.T))
    for _ in range(8):
        p = rng.normal(size=n)
        hits = sum(bool(np.all(inv @ p > 0)) for inv in inverses)
        if hits != 1:
            raise IncompleteFanError(f"generic direction covered {hits} times")


def _check_fano(fan: FanData) -> None:
    # -K ample: the linear function equal to 1 on the rays of sigma is < 1 on every other ray
    for sigma in fan.max_cones:
        dual = _cone_dual_basis(fan, sigma)
        m = [sum(col[i] for col in dual) for i in range(fan.dim)]
        for j, r in enumerate(fan.rays):
            if j in sigma:
                continue
            val = sum(mi * ri for mi, ri in zip(m, r))
            if val >= 1:
                raise NonFanoError(
                    f"ray {j} is not a vertex of the ray polytope beyond cone {list(sigma)}")


def parse_fan(text: str) -> FanData:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedFanError(f"not valid JSON: {exc}") from None
    if not isinstance(obj, dict) or "rays" not in obj or "max_cones" not in obj:
        raise MalformedFanError('fan file needs "rays" and "max_cones"')
    try:
        rays = tuple(tuple(int(x) for x in r) for r in obj["rays"])
        cones = tuple(tuple(int(x) for x in c) for c in obj["max_cones"])
    except (TypeError, ValueError):
        raise MalformedFanError("rays and max_cones must be integer lists") from None
    for r in obj["rays"]:
        if any(isinstance(x, float) and not float(x).is_integer() for x in r):
            raise MalformedFanError("ray entries must be integers")
    return validate_fan(FanData(rays, cones, str(obj.get("name", ""))))


def load_fan(path: str | Path) -> FanData:
    return parse_fan(Path(path).read_text())


def fan_to_json(fan: FanData) -> str:
    return json.dumps({"name": fan.name, "rays": [list(r) for r in fan.rays],
                       "max_cones": [list(c) for c in fan.max_cones]})


# ---------------------------------------------------------------------------
# cohomology ring
# ---------------------------------------------------------------------------

Poly = dict  # exponent tuple (over free variables) -> Fraction


def _poly_mul(a: Poly, b: Poly) -> Poly:
    out: Poly = {}
    for ea, ca in a.items():
        for eb, cb in b.items():
            e = tuple(x + y for x, y in zip(ea, eb))
            out[e] = out.get(e, 0) + ca * cb
    return {e: c for e, c in out.items() if c != 0}


def _monomials(nvars: int, degree: int) -> list[tuple[int, ...]]:
    out = []
    for combo in combinations_with_replacement(range(nvars), degree):
        e = [0] * nvars
        for i in combo:
            e[i] += 1
        out.append(tuple(e))
    return sorted(out, reverse=True)


def betti_numbers(fan: FanData) -> list[int]:
    """Even Betti numbers h_k from the face numbers of the fan."""
    n = fan.dim
    f = [sum(1 for c in fan.cones if len(c) == i) for i in range(n + 1)]
    # sum_i f_i (t-1)^(n-i) = sum_k h_k t^(n-k)
    coeffs = [0] * (n + 1)  # coefficient of t^p
    for i, fi in enumerate(f):
        d = n - i
        for p in range(d + 1):
            coeffs[p] += fi * math.comb(d, p) * (-1) ** (d - p)
    return [coeffs[n - k] for k in range(n + 1)]


@dataclass(frozen=True)
class CurveClass:
    pairing: tuple[int, ...]  # (D_1.d, ..., D_c.d)

    @property
    def degree(self) -> int:
        return sum(self.pairing)

    def __repr__(self) -> str:
        return f"CurveClass({list(self.pairing)})"


@dataclass(eq=False)
class CohRing:
    """Graded cohomology ring H^*(F, Q) of a smooth toric variety.

    ``basis`` lists monomials in the free divisor variables, grouped by degree.
    Exact classes are lists of ``Fraction`` over this basis.
    """

    fan: FanData
    free: tuple[int, ...]
    linear_forms: tuple[tuple[Fraction, ...], ...]
    basis: tuple[tuple[int, ...], ...]
    degrees: tuple[int, ...]
    mult_table: dict = field(repr=False)
    top_value: Fraction = Fraction(1)
    _reducers: dict = field(default_factory=dict, repr=False)

    @property
    def dim(self) -> int:
        return self.fan.dim

    @property
    def size(self) -> int:
        return len(self.basis)

    def degree_slice(self, k: int) -> slice:
        idx = [i for i, d in enumerate(self.degrees) if d == k]
        return slice(idx[0], idx[-1] + 1) if idx else slice(0, 0)

    def basis_names(self) -> list[str]:
        names = []
        for e in self.basis:
            parts = []
            for v, p in zip(self.free, e):
                if p:
                    parts.append(f"D{v + 1}" + (f"^{p}" if p > 1 else ""))
            names.append("*".join(parts) or "1")
        return names

    # ---- exact arithmetic -------------------------------------------------

    def zero(self) -> list[Fraction]:
        return [Fraction(0)] * self.size

    def one(self) -> list[Fraction]:
        v = self.zero()
        v[0] = Fraction(1)
        return v

    def mul(self, a: Sequence[Fraction], b: Sequence[Fraction]) -> list[Fraction]:
        out = self.zero()
        for i, ai in enumerate(a):
            if ai == 0:
                continue
            for j, bj in enumerate(b):
                if bj == 0:
                    continue
                for k, c in self.mult_table.get((i, j), ()):
                    out[k] += ai * bj * c
        return out

    def add(self, a, b):
        return [x + y for x, y in zip(a, b)]

    def scale(self, a, s):
        return [x * s for x in a]

    def power(self, a, k: int):
        out = self.one()
        for _ in range(k):
            out = self.mul(out, a)
        return out

    def integrate(self, a: Sequence) -> Fraction:
        """Top-degree coefficient, normalized so the point class integrates to 1."""
        return a[-1] * self.top_value

    @cached_property
    def divisor_classes(self) -> tuple[tuple[Fraction, ...], ...]:
        out = []
        sl = self.degree_slice(1)
        for form in self.linear_forms:
            v = self.zero()
            v[sl] = self._reduce({self._unit(i): c for i, c in enumerate(form) if c}, 1)
            out.append(tuple(v))
        return tuple(out)

    @cached_property
    def c1(self) -> tuple[Fraction, ...]:
        v = self.zero()
        for d in self.divisor_classes:
            v = self.add(v, d)
        return tuple(v)

    def divisor_sum(self, coeffs: Sequence) -> list:
        """Class sum_j coeffs[j] D_j (coefficients may be Fractions or floats)."""
        v = [0] * self.size
        for cj, dj in zip(coeffs, self.divisor_classes):
            if cj:
                v = [x + cj * y for x, y in zip(v, dj)]
        return v

    def pair(self, h2_class: Sequence, d: CurveClass):
        """Pairing of a degree-2 class with a curve class.

        The degree-2 basis is the free divisors, so the pairing reads off
        D_f . d for the free indices.
        """
        sl = self.degree_slice(1)
        coeffs = list(h2_class[sl])
        return sum(c * d.pairing[self.free[self.basis[sl.start + i].index(1)]]
                   for i, c in enumerate(coeffs) if c)

    @cached_property
    def h2_pairing_matrix(self) -> np.ndarray:
        """Row i gives the free-divisor index used by H^2 basis element i."""
        sl = self.degree_slice(1)
        return np.array([self.free[self.basis[sl.start + i].index(1)]
                         for i in range(sl.stop - sl.start)], dtype=np.int64)

    @cached_property
    def structure_constants(self) -> np.ndarray:
        """Dense float tensor M[i, j, k] with e_i e_j = sum_k M[i,j,k] e_k."""
        m = np.zeros((self.size,) * 3)
        for (i, j), entries in self.mult_table.items():
            for k, c in entries:
                m[i, j, k] = float(c)
        return m

    @cached_property
    def integration_vector(self) -> np.ndarray:
        v = np.zeros(self.size)
        v[-1] = float(self.top_value)
        return v

    # ---- internals --------------------------------------------------------

    def _unit(self, i: int) -> tuple[int, ...]:
        return tuple(1 if k == i else 0 for k in range(len(self.free)))

    def _reduce(self, poly: Poly, k: int) -> list[Fraction]:
        rows, pivots, cols, basis_cols = self._reducers[k]
        col_index = {m: i for i, m in enumerate(cols)}
        vec = [Fraction(0)] * len(cols)
        for e, c in poly.items():
            vec[col_index[e]] += c
        for row, p in zip(rows, pivots):
            f = vec[p]
            if f:
                vec = [x - f * y for x, y in zip(vec, row)]
        return [vec[i] for i in basis_cols]


def build_cohomology(fan: FanData) -> CohRing:
    n, c = fan.dim, fan.nrays
    sigma0 = fan.max_cones[0]
    free = tuple(j for j in range(c) if j not in sigma0)
    rho = len(free)
    dual = _cone_dual_basis(fan, sigma0)

    # D_{sigma_k} = -sum_f <m_k, b_f> D_f ; free divisors are coordinates
    forms: list[tuple[Fraction, ...]] = []
    for j in range(c):
        if j in free:
            forms.append(tuple(Fraction(1 if f == j else 0) for f in free))
        else:
            k = sigma0.index(j)
            forms.append(tuple(-sum(dual[k][i] * fan.rays[f][i] for i in range(n)) for f in free))
    linear_polys = [{tuple(1 if q == i else 0 for q in range(rho)): a
                     for i, a in enumerate(form) if a != 0} for form in forms]

    # minimal non-faces generate the Stanley-Reisner ideal
    nonfaces = []
    for size in range(2, c + 1):
        for s in combinations(range(c), size):
            if fan.is_cone(s):
                continue
            if any(set(g) <= set(s) for g in nonfaces):
                continue
            nonfaces.append(s)
    sr_polys = []
    for s in nonfaces:
        p: Poly = {(0,) * rho: Fraction(1)}
        for j in s:
            p = _poly_mul(p, linear_polys[j])
        sr_polys.append((len(s), p))

    reducers = {}
    basis: list[tuple[int, ...]] = []
    degrees: list[int] = []
    for k in range(n + 1):
        cols = _monomials(rho, k)
        col_index = {m: i for i, m in enumerate(cols)}
        rows = []
        for deg, g in sr_polys:
            if deg > k:
                continue
            for mu in _monomials(rho, k - deg):
                prod = _poly_mul(g, {mu: Fraction(1)})
                row = [Fraction(0)] * len(cols)
                for e, a in prod.items():
                    row[col_index[e]] += a
                rows.append(row)
        rrows, pivots = _rref(rows, len(cols))
        basis_cols = [i for i in range(len(cols)) if i not in set(pivots)]
        reducers[k] = (rrows, pivots, cols, basis_cols)
        # prefer increasing order within a degree for readability
        for i in reversed(basis_cols):
            basis.append(cols[i])
            degrees.append(k)
        reducers[k] = (rrows, pivots, cols, list(reversed(basis_cols)))

    expected = betti_numbers(fan)
    got = [degrees.count(k) for k in range(n + 1)]
    if got != expected:
        raise FanError(f"cohomology dimensions {got} disagree with Betti numbers {expected}")

    ring = CohRing(fan, free, tuple(forms), tuple(basis), tuple(degrees), {},
                   Fraction(1), reducers)
    index = {m: i for i, m in enumerate(basis)}
    offsets = {k: degrees.index(k) for k in range(n + 1)}
    table = {}
    for i, a in enumerate(basis):
        for j, b in enumerate(basis):
            k = degrees[i] + degrees[j]
            if k > n:
                continue
            e = tuple(x + y for x, y in zip(a, b))
            red = ring._reduce({e: Fraction(1)}, k)
            entries = tuple((offsets[k] + q, v) for q, v in enumerate(red) if v != 0)
            if entries:
                table[(i, j)] = entries
    ring.mult_table = table
    assert index[basis[0]] == 0

    # normalize the top class so that a point (product over a smooth maximal cone) integrates to 1
    point: Poly = {(0,) * rho: Fraction(1)}
    for j in sigma0:
        point = _poly_mul(point, linear_polys[j])
    (pt_coeff,) = ring._reduce(point, n)
    ring.top_value = 1 / pt_coeff
    return ring


def intersection_number(ring: CohRing, divisor_indices: Sequence[int]) -> Fraction:
    if len(divisor_indices) != ring.dim:
        raise ValueError(f"need exactly {ring.dim} divisors, got {len(divisor_indices)}")
    v = ring.one()
    for j in divisor_indices:
        v = ring.mul(v, ring.divisor_classes[j])
    return ring.integrate(v)


def dh_pairing(ring: CohRing, lam: Sequence) -> Fraction:
    """Exact value of the integral of exp(sum_j lam_j D_j) over F."""
    lam = [Fraction(x) for x in lam]
    omega = ring.divisor_sum(lam)
    return ring.integrate(ring.power(omega, ring.dim)) / math.factorial(ring.dim)


# ---------------------------------------------------------------------------
# curve classes
# ---------------------------------------------------------------------------

def relation_matrix(fan: FanData) -> tuple[tuple[int, ...], np.ndarray]:
    """Free indices and the integer matrix A with k_j = sum_f A[j, f] k_f on ker(Z^c -> Z^n)."""
    sigma0 = fan.max_cones[0]
    free = tuple(j for j in range(fan.nrays) if j not in sigma0)
    dual = _cone_dual_basis(fan, sigma0)
    a = np.zeros((fan.nrays, len(free)), dtype=np.int64)
    for q, f in enumerate(free):
        a[f, q] = 1
        for k, j in enumerate(sigma0):
            val = -sum(dual[k][i] * fan.rays[f][i] for i in range(fan.dim))
            a[j, q] = int(val)
    return free, a


def _summand_nonzero(fan: FanData, pairing: Sequence[int]) -> bool:
    neg = [j for j, k in enumerate(pairing) if k < 0]
    return fan.is_cone(neg)


def enumerate_curve_classes(fan: FanData, N: int) -> list[CurveClass]:
    if N < 0:
        raise ValueError("N must be non-negative")
    free, a = relation_matrix(fan)
    rho = len(free)
    axes = [np.arange(-N, N + 1)] * rho
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, rho) if rho else np.zeros((1, 0), int)
    ks = grid @ a.T
    deg = ks.sum(axis=1)
    keep = (deg >= 0) & (deg <= N) & (np.abs(ks).max(axis=1, initial=0) <= N)
    out = []
    for row in ks[keep]:
        pairing = tuple(int(x) for x in row)
        if _summand_nonzero(fan, pairing):
            out.append(CurveClass(pairing))
    out.sort(key=lambda d: (d.degree, d.pairing))
    return out


# ---------------------------------------------------------------------------
# moment polytopes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MomentPolytope:
    normals: tuple[tuple[int, ...], ...]
    bounds: tuple[Fraction, ...]
    vertices: dict  # maximal cone (tuple) -> vertex (tuple of Fractions)
    volume: Fraction

    def contains(self, t: Sequence) -> bool:
        return all(sum(bi * ti for bi, ti in zip(b, t)) <= lam
                   for b, lam in zip(self.normals, self.bounds))


def moment_polytope(fan: FanData, lam: Sequence) -> MomentPolytope:
    """P = {t : <t, b_j> <= lam_j}, with vertices read off the maximal cones."""
    lam = tuple(Fraction(x) for x in lam)
    if len(lam) != fan.nrays:
        raise ValueError(f"lambda must have {fan.nrays} entries")
    n = fan.dim
    vertices = {}
    for sigma in fan.max_cones:
        v = _solve_exact([fan.rays[j] for j in sigma], [lam[j] for j in sigma])
        for j in range(fan.nrays):
            if j in sigma:
                continue
            if sum(b * x for b, x in zip(fan.rays[j], v)) >= lam[j]:
                raise PolytopeError(
                    f"lambda is not ample: vertex of cone {list(sigma)} violates facet {j}")
        vertices[tuple(sigma)] = tuple(v)
    if len(set(vertices.values())) != len(fan.max_cones):
        raise PolytopeError("degenerate polytope: coincident vertices")

    simplices = _pulling_triangulation(fan, frozenset())
    vol = Fraction(0)
    for simplex in simplices:
        pts = [vertices[s] for s in simplex]
        rows = [[p[i] - pts[0][i] for i in range(n)] for p in pts[1:]]
        vol += abs(_det_frac(rows))
    vol /= math.factorial(n)
    return MomentPolytope(fan.rays, lam, vertices, vol)


def _det_frac(rows):
    m = [r[:] for r in rows]
    n = len(m)
    det = Fraction(1)
    for i in range(n):
        piv = next((r for r in range(i, n) if m[r][i] != 0), None)
        if piv is None:
            return Fraction(0)
        if piv != i:
            m[i], m[piv] = m[piv], m[i]
            det = -det
        det *= m[i][i]
        for r in range(i + 1, n):
            f = m[r][i] / m[i][i]
            if f:
                m[r] = [a - f * b for a, b in zip(m[r], m[i])]
    return det


def _pulling_triangulation(fan: FanData, tau: frozenset) -> list[list[tuple[int, ...]]]:
    """Triangulate the face dual to cone tau by pulling from its first vertex."""
    verts = sorted(tuple(s) for s in fan.max_cones if tau <= set(s))
    if len(tau) == fan.dim:
        return [[verts[0]]]
    v0 = set(verts[0])
    out = []
    for j in range(fan.nrays):
        if j in tau:
            continue
        facet = tau | {j}
        if not fan.is_cone(facet) or facet <= v0:
            continue
        for simplex in _pulling_triangulation(fan, frozenset(facet)):
            out.append([verts[0]] + simplex)
    return out


def is_ample(fan: FanData, lam: Sequence) -> bool:
    try:
        moment_polytope(fan, lam)
    except PolytopeError:
        return False
    return True
