import math
import time

import numpy as np
import pytest

from wittenspec.errors import CutoffTooSmall, FloatingUnderflow
from wittenspec.oracle import (DEFAULT_H_GRID, assemble, cutoff_floor, eigenvalues_dense, eigenvalues_extended,
                               eigenvalues_factored, fit_and_compare, low_spectrum, partner_check,
                               zero_mode_similarity)
from wittenspec.pipeline import two_well_polynomial
from wittenspec.trigpoly import TrigPoly

F = two_well_polynomial()


def test_constant_potential_has_free_spectrum():
    # a negligible f leaves the free eigenvalues (2 pi k h)^2
    f = TrigPoly(0.0, (0.0,), (1e-300,))
    sp = assemble(f, 0.5, 8, check=False)
    vals = np.sort(eigenvalues_dense(sp))
    free = np.sort([(2 * math.pi * k * 0.5) ** 2 for k in range(-8, 9)])
    assert np.allclose(vals, free, atol=1e-12)


def test_matrix_is_hermitian_and_factored_exactly():
    sp = assemble(F, 0.1, 64)
    assert np.allclose(sp.matrix, sp.matrix.conj().T, atol=1e-14)
    B = sp.factor()
    assert np.abs(B.conj().T @ B - sp.matrix).max() < 1e-12


def test_dense_and_factored_agree_above_rounding():
    sp = assemble(F, 0.1, 64)
    d = eigenvalues_dense(sp, 6)
    f = eigenvalues_factored(sp, 6)
    assert np.allclose(d[2:], f[2:], rtol=1e-9)


def test_extended_precision_route():
    sp = assemble(F, 0.12, cutoff_floor(F, 0.12))
    ext = eigenvalues_extended(sp, 2, digits=30)
    fac = eigenvalues_factored(sp, 2)
    assert ext[1] == pytest.approx(fac[1], rel=1e-8)
    # at this cutoff the truncated zero mode is 4e-20, not exactly zero; both routes must see it
    assert ext[0] == pytest.approx(fac[0], rel=1e-3)


def test_zero_mode_is_the_ground_state():
    sp = assemble(F, 0.1, 64)
    assert zero_mode_similarity(sp) > 1 - 1e-9
    assert low_spectrum(sp, 1)[0] < 1e-12


def test_partner_operator_shares_nonzero_spectrum():
    for mismatch in partner_check(F, 0.1, 64):
        assert mismatch < 1e-8


def test_cutoff_below_floor_is_refused():
    with pytest.raises(CutoffTooSmall):
        assemble(F, 0.1, 4)


def test_dense_route_refuses_unresolved_eigenvalues():
    with pytest.raises(FloatingUnderflow):
        fit_and_compare(F, _prediction(), (0.014, 0.013, 0.012, 0.011, 0.010), method="dense")


def test_fit_needs_five_points():
    with pytest.raises(ValueError):
        fit_and_compare(F, _prediction(), (0.1, 0.09))


_CACHE = {}


def _prediction():
    if "p" not in _CACHE:
        from wittenspec.pipeline import run_spectrum
        from wittenspec.trigpoly import find_critical_points
        _CACHE["p"] = run_spectrum(find_critical_points(F), eigenfunctions=False).nonzero[0]
    return _CACHE["p"]


def test_fit_reproduces_the_predicted_law():
    start = time.perf_counter()
    fit = fit_and_compare(F, _prediction(), DEFAULT_H_GRID)
    elapsed = time.perf_counter() - start
    assert abs(fit.rate - 9 / (8 * math.pi)) / (9 / (8 * math.pi)) < 0.05
    assert 0.7 <= fit.ratios[-1] <= 1.3
    assert all(e1 < 1e-12 for e1, _ in fit.eigenvalues)
    assert elapsed < 120
    assert fit.predicted_prefactor == pytest.approx(6 * math.sqrt(5), rel=1e-9)


def test_two_exponentially_small_eigenvalues_then_a_gap():
    h = 0.1
    sp = assemble(F, h, 96)
    vals = eigenvalues_factored(sp)
    assert vals.min() >= -1e-10 * sp.norm()
    assert np.count_nonzero(vals < math.exp(-0.05 / h)) == 2
    assert vals[2] > 0.1 * h


def test_second_eigenvalue_within_envelope():
    h = 0.08
    (e1, e2) = low_spectrum(assemble(F, h, 96), 2)
    assert 0 < e2 < math.exp(-9 / (8 * math.pi * h)) * h * 30
