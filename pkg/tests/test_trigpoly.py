import math
import time

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wittenspec.errors import CriticalAtOrigin, DegenerateCritical, InputFormatError, UnsupportedCase
from wittenspec.pipeline import two_well_polynomial
from wittenspec.trigpoly import (TrigPoly, eval_inversion, evaluate, find_critical_points, inversion_coeffs,
                                 path_integral_inv_fprime, revert_series, special_integral, sqrt_reduction,
                                 sum_a_series)

ARCSIN_QUARTER = math.asin(0.25) / (2 * math.pi)
TWO_WELL_TABLE = [
    (1 / 8, 0.0, 6 * math.pi),
    (3 / 8 - ARCSIN_QUARTER, 9 / (16 * math.pi), -7.5 * math.pi),
    (5 / 8, -1 / math.pi, 10 * math.pi),
    (7 / 8 + ARCSIN_QUARTER, 9 / (16 * math.pi), -7.5 * math.pi),
]


# ------------------------------------------------------------ critical points

def test_two_well_critical_table():
    f = two_well_polynomial()
    start = time.perf_counter()
    data = find_critical_points(f)
    elapsed = time.perf_counter() - start
    assert data.n == 2
    for p, (q, v, c) in zip(data.points, TWO_WELL_TABLE):
        assert p.location == pytest.approx(q, abs=1e-10)
        assert p.value == pytest.approx(v, abs=1e-10)
        assert p.curvature == pytest.approx(c, abs=1e-10)
    assert elapsed < 1.0


def test_evaluate_matches_finite_differences():
    f = two_well_polynomial()
    q, d = 0.37, 1e-5
    for order in range(3):
        numeric = (evaluate(f, q + d, order) - evaluate(f, q - d, order)) / (2 * d)
        assert evaluate(f, q, order + 1) == pytest.approx(numeric, rel=1e-7)


def test_phase_form_matches_direct_formula():
    f = two_well_polynomial()
    for q in np.linspace(0, 1, 7):
        direct = (math.sin(2 * math.pi * (q + 1 / 8)) + math.cos(4 * math.pi * (q + 1 / 8))) / (2 * math.pi)
        assert evaluate(f, q, 0) == pytest.approx(direct, abs=1e-14)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-1, 1, allow_nan=False), min_size=3, max_size=3),
       st.lists(st.floats(-1, 1, allow_nan=False), min_size=3, max_size=3))
def test_critical_points_of_random_polynomials(cos, sin):
    f = TrigPoly(0.0, tuple(cos), tuple(sin))
    grid = np.linspace(0, 1, 20001)[:-1]
    fp = np.asarray(evaluate(f, grid, 1)).real
    scale = max(np.abs(fp).max(), 1e-300)
    try:
        data = find_critical_points(f)
    except CriticalAtOrigin:
        assert abs(evaluate(f, 0.0, 1)) < 1e-9 * scale
        return
    except DegenerateCritical:
        return
    # every located point is a root of f' with the curvature sign fixing its kind
    for p in data.points:
        assert abs(evaluate(f, p.location, 1)) < 1e-9 * scale
        assert p.is_minimum == (evaluate(f, p.location, 2).real > 0)
    # robust sign changes on the grid are all accounted for
    sign = np.sign(fp)
    changes = np.count_nonzero(sign != np.roll(sign, 1))
    assert 2 * data.n >= changes - 2 * np.count_nonzero(np.abs(fp) < 1e-6 * scale)


def test_constant_function_is_degenerate():
    with pytest.raises(DegenerateCritical):
        find_critical_points(TrigPoly(1.0, (), ()))


def test_bad_input_rejected():
    with pytest.raises(InputFormatError):
        TrigPoly.from_dict({"coefficients": [1]})


# ------------------------------------------------------------ series reversion

@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-2, 2, allow_nan=False), min_size=4, max_size=8), st.floats(0.3, 3.0))
def test_reversion_composes_to_identity(tail, lead):
    d = np.array([0.0, lead] + tail)
    n = 10
    x = revert_series(d, n)
    u = 1e-3
    xu = sum(x[k] * u ** k for k in range(n + 1))
    back = sum(d[k] * xu ** k for k in range(len(d)))
    assert abs(back - u) < 1e-12


def test_inversion_series_reconstructs_displacement():
    f = two_well_polynomial()
    data = find_critical_points(f)
    for p in data.points:
        a, _ = inversion_coeffs(f, p.location, 40)
        for dq in (1e-3, -2e-3, 5e-3):
            u = evaluate(f, p.location + dq, 1).real
            assert eval_inversion(a, u) == pytest.approx(dq, rel=1e-10)


def test_b_series_is_minus_curvature_along_u():
    f = two_well_polynomial()
    p = find_critical_points(f).points[0]
    _, b = inversion_coeffs(f, p.location, 30)
    dq = 3e-3
    u = -evaluate(f, p.location + dq, 1).real
    assert sum(bj * u ** j for j, bj in enumerate(b)) == pytest.approx(-evaluate(f, p.location + dq, 2).real,
                                                                       rel=1e-10)


def test_series_sums_agree_with_quadrature():
    f = two_well_polynomial()
    data = find_critical_points(f)
    for p in data.points:
        for which in ("first", "second"):
            sum_a_series(p, f, 0.02, which, check=True)  # raises on disagreement


# ------------------------------------------------------------ contour integrals

def test_path_integral_does_not_depend_on_offset():
    f = two_well_polynomial()
    data = find_critical_points(f)
    qa, qb = data.location(1) - 0.02, data.location(2) - 0.02
    a = path_integral_inv_fprime(f, qa, qb, offset=0.05)
    b = path_integral_inv_fprime(f, qa, qb, offset=0.1)
    assert abs(a - b) < 1e-10 * abs(a)


def test_full_period_loop_integral():
    f = two_well_polynomial()
    a = path_integral_inv_fprime(f, 0.3, 1.3, offset=0.1)
    b = path_integral_inv_fprime(f, 0.3, 1.3, offset=0.15)
    assert abs(a - b) < 1e-10


# ------------------------------------------------------------ special integrals

def _mp_quadrature(kind, k, A, E):
    """High-precision reference value of the integral the record expands."""
    with mpmath.workdps(40):
        X = mpmath.acosh(mpmath.mpf(A) / mpmath.sqrt(mpmath.mpf(E)))
        if kind == "arccosh_asym":
            return X
        if kind == "cosh_power":
            g = lambda t: mpmath.cosh(t) ** k
        else:
            g = lambda t: mpmath.sinh(t) ** 2 * mpmath.cosh(t) ** k
        return -mpmath.quad(g, mpmath.linspace(0, X, 8))


def _mp_expansion(record, E):
    with mpmath.workdps(40):
        E = mpmath.mpf(E)
        val = mpmath.mpf(0)
        for p, c in record.powers.items():
            val += mpmath.mpf(c) * E ** (mpmath.mpf(p.numerator) / p.denominator)
        if record.arccosh:
            val += record.arccosh * mpmath.acosh(record.A / mpmath.sqrt(E))
        if record.log_E:
            val += record.log_E * mpmath.log(E)
        return val


SPECIAL_CASES = [("arccosh_asym", None)] + [("cosh_power", k) for k in range(7)] + [
    ("sinh2_cosh_power", k) for k in range(7)]


def _representation_floor(record, E):
    """Rounding of the binary64 coefficients of the record, magnified by the negative powers of E."""
    return 8 * 2.2e-16 * sum(abs(c) * E ** float(p) for p, c in record.powers.items())


@pytest.mark.parametrize("kind,k", SPECIAL_CASES)
@pytest.mark.parametrize("A", [0.5, 1.3])
def test_special_integral_error_decays_at_stated_order(kind, k, A):
    rec = special_integral(kind, k, A)
    errors = [float(abs(_mp_expansion(rec, E) - _mp_quadrature(kind, k, A, E))) for E in (1e-3, 1e-4)]
    if rec.exact:
        assert max(errors) < 1e-25
        return
    scaled = [err / E ** float(rec.order) for err, E in zip(errors, (1e-3, 1e-4))]
    # over one decade the error relative to E^order must shrink, unless it already sits at rounding level
    assert scaled[1] < 0.5 * scaled[0] or errors[1] <= _representation_floor(rec, 1e-4)
    assert errors[0] <= max(0.05 * 1e-3 ** float(rec.order), _representation_floor(rec, 1e-3))


def test_binary64_quadrature_agrees_with_reference():
    rec = special_integral("sinh2_cosh_power", 3, 1.0)
    assert rec.numeric(1e-3) == pytest.approx(float(_mp_quadrature("sinh2_cosh_power", 3, 1.0, 1e-3)), rel=1e-11)


def test_special_integral_rejects_unknown_cases():
    with pytest.raises(UnsupportedCase):
        special_integral("tanh_power", 1)
    with pytest.raises(UnsupportedCase):
        special_integral("cosh_power", -1)
    with pytest.raises(UnsupportedCase):
        special_integral("cosh_power", 2, A=-1.0)


@pytest.mark.parametrize("power", ["1/2", "3/2", "5/2"])
@pytest.mark.parametrize("k", range(5))
def test_sqrt_reduction_differentiates_back(power, k):
    from fractions import Fraction
    p = Fraction(power)
    E, u, d = 0.3, 1.7, 1e-5
    deriv = (sqrt_reduction(k, p, u + d, E) - sqrt_reduction(k, p, u - d, E)) / (2 * d)
    assert deriv == pytest.approx(u ** k * (u * u - E) ** (-float(p)), rel=1e-7)
