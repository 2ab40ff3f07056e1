import math
import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wittenspec.errors import ConditionInconsistent
from wittenspec.quantize import brute_force_hull, newton_polygon, polygon_points, solve_condition
from wittenspec.transseries import TransSeries, TruncationPolicy

UNIT = 1 / (8 * math.pi)
WIDE = TruncationPolicy(window=100.0, max_m=12, max_k=6, max_l=2)


# ------------------------------------------------------------ two-well polynomial

POLYGON_TARGETS = [
    # (E_r power, rate in units of 1/(8 pi), ln h power, coefficient)
    (2, 34, 0, 1 / (15 * math.sqrt(15))),
    (1, 25, 0, -2 / math.sqrt(75)),
    (1, 16, 0, 1j / math.sqrt(60)),
    (2, 25, 1, -7 / (150 * math.sqrt(3) * math.pi)),
    (3, 34, 1, 4 / (15 ** 2 * math.sqrt(15) * math.pi)),
]


@pytest.mark.parametrize("m,rate,l,value", POLYGON_TARGETS)
def test_polygon_coefficients(two_well_run, m, rate, l, value):
    got = two_well_run.condition.coefficient(rate * UNIT, m, 0, l)
    assert abs(got - value) <= 1e-9


def test_polygon_build_time():
    from wittenspec.ingredients import build_ingredients
    from wittenspec.pipeline import two_well_polynomial
    from wittenspec.quantize import build_condition, build_G0
    from wittenspec.trigpoly import find_critical_points
    start = time.perf_counter()
    ing = build_ingredients(find_critical_points(two_well_polynomial()))
    newton_polygon(build_condition(build_G0(ing), ing.opk))
    assert time.perf_counter() - start < 10.0


def test_eigenvalue(two_well_run):
    zero = [s for s in two_well_run.solutions if s.is_zero]
    assert len(zero) == 1 and not zero[0].Er.terms
    (sol,) = two_well_run.nonzero
    hE = sol.energy()
    assert abs(hE.coefficient(-9 * UNIT, 0, 1, 0) - 6 * math.sqrt(5)) <= 1e-9
    assert abs(hE.coefficient(-18 * UNIT, 0, 1, 1) + 27 / math.pi) <= 1e-9
    assert hE.leading().key() == (TransSeries.monomial(1.0, c=-9 * UNIT).leading().c, 0, 2, 0)


def test_solution_cancels_the_balanced_terms(two_well_run):
    (sol,) = two_well_run.nonzero
    edge = two_well_run.polygon.edges[0]
    balance = edge.start[1] + edge.start[0] * sol.Er.exponential_type()
    residual = two_well_run.condition.substitute_Er(sol.Er)
    assert not residual or residual.exponential_type() < balance - 0.9


def test_hull_matches_brute_force(two_well_run):
    pts = [(p.m, p.c) for p in two_well_run.polygon.points]
    assert two_well_run.polygon.hull == brute_force_hull(pts)


# ------------------------------------------------------------ abstract two-well data

def test_abstract_solutions(abstract_run):
    assert len(abstract_run.solutions) == 2
    (sol,) = abstract_run.nonzero
    assert sol.Er.exponential_type() == pytest.approx(0.3 - 0.4, abs=1e-9)


# ------------------------------------------------------------ Newton polygon properties

point = st.tuples(st.integers(1, 8), st.integers(-40, 0).map(lambda n: n / 8))


@settings(max_examples=300, deadline=None)
@given(st.lists(point, min_size=1, max_size=12, unique=True))
def test_hull_agrees_with_pairwise_oracle(points):
    cond = TransSeries({(c, m, 0, 0): 1.0 for m, c in points}, WIDE)
    poly = newton_polygon(cond)
    assert poly.hull == brute_force_hull([(p.m, p.c) for p in polygon_points(cond)])
    slopes = [e.slope for e in poly.edges]
    assert all(s > 0 for s in slopes)
    assert all(a > b for a, b in zip(slopes, slopes[1:]))


@settings(max_examples=200, deadline=None)
@given(st.floats(0.1, 3.0), st.floats(-3, 3).filter(lambda x: abs(x) > 0.05),
       st.floats(-3, 3).filter(lambda x: abs(x) > 0.05))
def test_linear_balance_root(rate, a, b):
    """a E_r e^{-rate/h} + b E_r^2 = 0 has the root E_r = -(a/b) e^{-rate/h}."""
    cond = TransSeries({(-rate, 1, 0, 0): a, (0.0, 2, 0, 0): b}, WIDE)
    sols = solve_condition(cond)
    assert sols[0].is_zero
    (root,) = [s for s in sols if not s.is_zero]
    lead = root.Er.leading()
    assert lead.c == pytest.approx(-rate, abs=1e-9)
    assert lead.coeff == pytest.approx(-a / b, rel=1e-9)


def test_condition_must_be_divisible_by_Er():
    cond = TransSeries({(0.0, 0, 0, 0): 1.0, (0.0, 1, 0, 0): 1.0}, WIDE)
    with pytest.raises(ConditionInconsistent):
        solve_condition(cond)


def test_empty_condition_has_no_polygon():
    with pytest.raises(ConditionInconsistent):
        newton_polygon(TransSeries.zero(WIDE))
