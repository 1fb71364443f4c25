from __future__ import annotations

import itertools
import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from msgamma.toric import (
    IncompleteFanError,
    MalformedFanError,
    NonFanoError,
    NonPrimitiveRayError,
    PolytopeError,
    SingularConeError,
    betti_numbers,
    build_cohomology,
    dh_pairing,
    enumerate_curve_classes,
    intersection_number,
    is_ample,
    moment_polytope,
    parse_fan,
)

from conftest import NAMES, fan, ring


def _fan_text(rays, cones):
    return json.dumps({"rays": rays, "max_cones": cones})


def test_parse_p1_and_p2():
    f1 = parse_fan(_fan_text([[1], [-1]], [[0], [1]]))
    assert f1.dim == 1 and f1.nrays == 2
    f2 = parse_fan(_fan_text([[1, 0], [0, 1], [-1, -1]], [[0, 1], [1, 2], [2, 0]]))
    assert f2.dim == 2 and f2.nrays == 3


def test_parse_rejects_non_primitive_ray():
    with pytest.raises(NonPrimitiveRayError):
        parse_fan(_fan_text([[2, 0], [0, 1], [-1, 0], [0, -1]], [[0, 1], [1, 2], [2, 3], [3, 0]]))


def test_parse_rejects_singular_cone():
    # cone spanned by (1,0),(1,2) has determinant 2
    with pytest.raises(SingularConeError):
        parse_fan(_fan_text([[1, 0], [1, 2], [-1, -1]], [[0, 1], [1, 2], [2, 0]]))


def test_parse_rejects_incomplete_fan():
    with pytest.raises(IncompleteFanError):
        parse_fan(_fan_text([[1, 0], [0, 1], [-1, -1]], [[0, 1], [1, 2]]))


def test_parse_rejects_non_fano():
    # Hirzebruch surface F_2 is smooth and complete but not Fano
    with pytest.raises(NonFanoError):
        parse_fan(_fan_text([[1, 0], [0, 1], [-1, 2], [0, -1]], [[0, 1], [1, 2], [2, 3], [3, 0]]))


@pytest.mark.parametrize("text", ["not json", "{}", '{"rays": [[1], [-1]], "max_cones": [[0], [2]]}',
                                  '{"rays": [[1.5], [-1]], "max_cones": [[0], [1]]}'])
def test_parse_rejects_malformed(text):
    with pytest.raises(MalformedFanError):
        parse_fan(text)


def test_p1_ring():
    r = ring("p1")
    assert r.basis_names() == ["1", "D2"]
    h = list(r.divisor_classes[1])
    assert r.mul(h, h) == r.zero()
    assert r.integrate(h) == 1
    assert list(r.c1) == r.scale(h, 2)


def test_p2_ring():
    r = ring("p2")
    h = list(r.divisor_classes[0])
    h2 = r.mul(h, h)
    assert r.integrate(h2) == 1
    assert r.mul(h2, h) == r.zero()
    assert list(r.c1) == r.scale(h, 3)


def test_p1xp1_ring():
    r = ring("p1xp1")
    h1, h2 = list(r.divisor_classes[0]), list(r.divisor_classes[2])
    assert r.mul(h1, h1) == r.zero() and r.mul(h2, h2) == r.zero()
    assert r.integrate(r.mul(h1, h2)) == 1
    assert list(r.c1) == r.add(r.scale(h1, 2), r.scale(h2, 2))


def test_intersection_numbers():
    assert intersection_number(ring("p2"), [0, 1]) == 1
    assert intersection_number(ring("p2"), [0, 0]) == 1
    assert intersection_number(ring("p1xp1"), [0, 1]) == 0
    with pytest.raises(ValueError):
        intersection_number(ring("p2"), [0])


def test_betti_numbers_match_ring(fixture_name):
    r = ring(fixture_name)
    dims = [r.degree_slice(k).stop - r.degree_slice(k).start for k in range(r.dim + 1)]
    assert dims == betti_numbers(fan(fixture_name))


def test_ring_axioms(fixture_name):
    r = ring(fixture_name)
    units = [[Fraction(int(i == k)) for i in range(r.size)] for k in range(r.size)]
    for a in units:
        assert r.mul(r.one(), a) == a
    for a, b in itertools.product(units, repeat=2):
        assert r.mul(a, b) == r.mul(b, a)
    for a, b, c in itertools.product(units, repeat=3):
        assert r.mul(r.mul(a, b), c) == r.mul(a, r.mul(b, c))


def test_nilpotency_and_poincare(fixture_name):
    r = ring(fixture_name)
    n = r.dim
    degs = r.degrees
    pair = np.zeros((r.size, r.size))
    for i, j in itertools.product(range(r.size), repeat=2):
        a = [Fraction(int(k == i)) for k in range(r.size)]
        b = [Fraction(int(k == j)) for k in range(r.size)]
        prod = r.mul(a, b)
        if degs[i] + degs[j] > n:
            assert prod == r.zero()
        val = r.integrate(prod)
        if degs[i] + degs[j] != n:
            assert val == 0
        pair[i, j] = float(val)
    assert abs(np.linalg.det(pair)) > 0.5


def test_linear_and_sr_relations(fixture_name):
    f, r = fan(fixture_name), ring(fixture_name)
    for k in range(f.dim):
        total = r.zero()
        for j, b in enumerate(f.rays):
            total = r.add(total, r.scale(list(r.divisor_classes[j]), b[k]))
        assert total == r.zero()
    for i, j in itertools.combinations(range(f.nrays), 2):
        if not f.is_cone([i, j]):
            assert r.mul(list(r.divisor_classes[i]), list(r.divisor_classes[j])) == r.zero()


def test_curve_class_examples():
    assert [c.pairing for c in enumerate_curve_classes(fan("p2"), 6)] == [(0, 0, 0), (1, 1, 1), (2, 2, 2)]
    assert [c.pairing for c in enumerate_curve_classes(fan("p1"), 4)] == [(0, 0), (1, 1), (2, 2)]
    got = {c.pairing for c in enumerate_curve_classes(fan("p1xp1"), 2)}
    # (d1, d2) = (0,0), (1,0), (0,1)
    assert got == {(0, 0, 0, 0), (1, 1, 0, 0), (0, 0, 1, 1)}


def test_curve_classes_blowup_include_exceptional():
    pairings = {c.pairing for c in enumerate_curve_classes(fan("blp2"), 6)}
    # exceptional curve: D_exc . E = -1, degree 1
    assert (1, -1, 1, 0) in pairings


@pytest.mark.parametrize("name", NAMES)
def test_curve_classes_in_relation_lattice(name):
    f = fan(name)
    classes = enumerate_curve_classes(f, 8)
    assert classes == sorted(classes, key=lambda c: (c.degree, c.pairing))
    for c in classes:
        assert 0 <= c.degree <= 8
        total = np.zeros(f.dim, dtype=int)
        for k, b in zip(c.pairing, f.rays):
            total += k * np.array(b)
        np.testing.assert_array_equal(total, 0)


def test_moment_polytope_examples():
    p = moment_polytope(fan("p1"), [1, 1])
    assert p.volume == 2
    p = moment_polytope(fan("p2"), [1, 1, 1])
    assert set(p.vertices.values()) == {(1, 1), (1, -2), (-2, 1)}
    assert p.volume == Fraction(9, 2)
    assert moment_polytope(fan("p1xp1"), [1, 2, 1, 2]).volume == 9


def test_moment_polytope_rejects_non_ample():
    with pytest.raises(PolytopeError):
        moment_polytope(fan("blp2"), [1, 3, 1, 1])
    assert not is_ample(fan("p1"), [-1, 0])


def test_dh_examples():
    assert dh_pairing(ring("p1"), [1, 1]) == 2
    assert dh_pairing(ring("p2"), [1, 1, 1]) == Fraction(9, 2)
    assert dh_pairing(ring("p2"), [0, 0, 0]) == 0


@settings(max_examples=30, deadline=None)
@given(name=st.sampled_from(NAMES), lam=st.lists(st.fractions(0, 6, max_denominator=7), min_size=5, max_size=5))
def test_dh_equals_polytope_volume(name, lam):
    f = fan(name)
    lam = [x + 1 for x in lam[: f.nrays]]
    if not is_ample(f, lam):
        return
    assert dh_pairing(ring(name), lam) == moment_polytope(f, lam).volume


def test_build_cohomology_is_deterministic():
    a, b = build_cohomology(fan("blp2")), build_cohomology(fan("blp2"))
    assert a.basis == b.basis and a.mult_table == b.mult_table
