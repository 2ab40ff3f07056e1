"""Finite-h numerical spectrum of P = -h^2 d^2 + f'^2 - h f'' on the circle, and exponential-law fits.

The operator is discretized in the Fourier basis e^{2 pi i k q}, |k| <= K.
Multiplication operators have exact banded matrices because f is a
trigonometric polynomial.  Low eigenvalues are computed two ways: from the
dense Hermitian matrix, and as squared singular values of the rectangular
matrix of A = h d/dq + f' (P = A*A), which keeps the exponentially small
eigenvalues at full relative accuracy.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import CutoffTooSmall, FloatingUnderflow, NotConverged
from .trigpoly import evaluate

#: environment variable selecting the number of significant digits of the extended-precision solver
PRECISION_ENV = "WITTENSPEC_DIGITS"
DEFAULT_H_GRID = (0.12, 0.10, 0.09, 0.08, 0.07)
#: relative and absolute K-doubling tolerances
CONVERGENCE_RTOL = 1e-3
CONVERGENCE_ATOL = 1e-16
#: the edge-mode kinetic term must exceed the potential band by this factor
EDGE_DOMINANCE = 4.0
#: eigenvalues below this multiple of the matrix norm are unresolved in binary64 dense solves
DENSE_FLOOR = 1e-15


def cutoff_floor(f, h):
    """Smallest admissible mode cutoff: 4 deg(f) max(1, 1/h)^(1/2)."""
    return int(math.ceil(4 * max(f.degree, 1) * math.sqrt(max(1.0, 1.0 / h))))


def _fourier_vector(f):
    """f', f'' Fourier coefficients on -d..d as arrays."""
    d = max(f.degree, 1)
    F = f.fourier()
    ks = np.arange(-d, d + 1)
    base = np.array([F.get(int(k), 0j) for k in ks], dtype=complex)
    return d, 2j * np.pi * ks * base, -(2 * np.pi * ks) ** 2 * base


def potential_coefficients(f, h, sign=-1):
    """Exact Fourier coefficients of f'^2 + sign*h*f'' on -2d..2d."""
    d, fp, fpp = _fourier_vector(f)
    g = np.convolve(fp, fp)
    g[d:3 * d + 1] += sign * h * fpp
    return 2 * d, g


@dataclass
class SpectralProblem:
    f: object
    h: float
    K: int
    matrix: np.ndarray
    sign: int = -1  # -1: P itself, +1: the partner operator

    @property
    def size(self):
        return 2 * self.K + 1

    def norm(self):
        return float(np.abs(self.matrix).sum(axis=1).max())

    def factor(self):
        """Rectangular Fourier matrix B with B* B equal to ``matrix``.

        Rows cover every mode reachable from the columns, so the product is
        exact rather than truncated.
        """
        d, fp, _ = _fourier_vector(self.f)
        K = self.K
        rows = 2 * (K + d) + 1
        A = np.zeros((rows, self.size), dtype=complex)
        ks = np.arange(-K, K + 1)
        cols = np.arange(self.size)
        # A = h d/dq + f' for P; B = -h d/dq + f' for the partner (B* B = -h^2 d^2 + f'^2 + h f'')
        A[cols + d, cols] = (-self.sign) * 2j * np.pi * ks * self.h
        for j in range(-d, d + 1):
            A[cols + d + j, cols] += fp[j + d]
        return A


def assemble(f, h, K, *, partner=False, check=True):
    """Dense Hermitian matrix (2 pi k h)^2 delta + G_{k-k'} - h F_{k-k'} over modes -K..K."""
    if not h > 0:
        raise ValueError("h must be positive")
    sign = 1 if partner else -1
    if check and K < cutoff_floor(f, h):
        raise CutoffTooSmall("mode cutoff below the resolution floor", operation="assemble", K=K,
                             floor=cutoff_floor(f, h))
    band, g = potential_coefficients(f, h, sign)
    n = 2 * K + 1
    ks = np.arange(-K, K + 1)
    M = np.diag((2 * np.pi * ks * h) ** 2).astype(complex)
    for j in range(-band, band + 1):
        if abs(j) >= n:
            continue
        idx = np.arange(max(0, j), min(n, n + j))
        M[idx, idx - j] += g[j + band]
    if check:
        edge = (2 * np.pi * K * h) ** 2
        if edge < EDGE_DOMINANCE * float(np.abs(g).sum()):
            raise CutoffTooSmall("edge modes are not dominated by the kinetic term", operation="assemble", K=K,
                                 edge=edge, band=float(np.abs(g).sum()))
    return SpectralProblem(f, h, K, M, sign)


def eigenvalues_dense(sp, count=None):
    """Ascending eigenvalues of the Hermitian matrix (binary64 dense solve)."""
    vals = np.linalg.eigvalsh(sp.matrix)
    return vals if count is None else vals[:count]


def eigenvalues_factored(sp, count=None):
    """Ascending eigenvalues as squared singular values of the first-order factor."""
    sv = np.linalg.svd(sp.factor(), compute_uv=False)
    vals = np.sort(sv ** 2)
    return vals if count is None else vals[:count]


def eigenvalues_extended(sp, count, digits=None):
    """Smallest ``count`` eigenvalues with mpmath at ``digits`` significant digits (optional dependency)."""
    import mpmath

    digits = digits or int(os.environ.get(PRECISION_ENV, "30"))
    with mpmath.workdps(digits):
        A = mpmath.matrix(sp.factor().tolist())
        sv = mpmath.svd_c(A, compute_uv=False)
        vals = sorted(float(s) ** 2 for s in sv)
    return np.array(vals[:count])


def _solve(sp, count, method):
    if method == "factored":
        return eigenvalues_factored(sp, count)
    if method == "dense":
        return eigenvalues_dense(sp, count)
    if method == "extended":
        return eigenvalues_extended(sp, count)
    raise ValueError(f"unknown method {method!r}")


def low_spectrum(sp, count, *, method="factored", check_convergence=True):
    """The ``count`` smallest eigenvalues, ascending, confirmed stable under doubling K."""
    vals = _solve(sp, count, method)
    if check_convergence:
        finer = assemble(sp.f, sp.h, 2 * sp.K, partner=sp.sign > 0, check=False)
        vals2 = _solve(finer, count, method)
        change = np.abs(vals2 - vals)
        atol = CONVERGENCE_ATOL
        if method == "dense":
            # below the rounding floor of a dense solve, movement under refinement is noise
            atol = max(atol, DENSE_FLOOR * finer.norm())
        ok = (change <= CONVERGENCE_RTOL * np.abs(vals2)) | (change <= atol)
        if not ok.all():
            raise NotConverged("low eigenvalues move under doubling the mode cutoff", operation="low_spectrum",
                               K=sp.K, change=float(change.max()))
    return [float(v) for v in vals]


def zero_mode_similarity(sp):
    """Cosine similarity between the lowest eigenvector and the Fourier coefficients of e^{-f/h}."""
    _, vecs = np.linalg.eigh(sp.matrix)
    v = vecs[:, 0]
    N = 8 * sp.K + 8
    q = np.arange(N) / N
    samples = np.exp(-(np.asarray(evaluate(sp.f, q, 0)).real) / sp.h)
    coeffs = np.fft.fft(samples) / N
    ks = np.arange(-sp.K, sp.K + 1)
    w = coeffs[ks % N]
    return float(abs(np.vdot(w, v)) / (np.linalg.norm(w) * np.linalg.norm(v)))


def partner_check(f, h, K, count=2):
    """Relative mismatch of each nonzero low eigenvalue of P against the partner spectrum."""
    lows = low_spectrum(assemble(f, h, K), count + 1)
    partner = low_spectrum(assemble(f, h, K, partner=True), count + 1)
    out = []
    for v in lows[1:]:
        out.append(min(abs(v - w) / abs(v) for w in partner))
    return out


@dataclass
class FitResult:
    rate: float
    rate_stderr: float
    prefactor: float
    prefactor_stderr: float  # of ln C
    power: float
    residuals: list
    h_grid: list
    eigenvalues: list  # (E1, E2) per h
    predicted_rate: float | None = None
    predicted_prefactor: float | None = None
    ratios: list = field(default_factory=list)  # E2 / prediction per h

    @property
    def rate_error(self):
        return abs(self.rate - self.predicted_rate) / abs(self.predicted_rate)

    def to_dict(self):
        return {"rate": self.rate, "rate_stderr": self.rate_stderr, "prefactor": self.prefactor,
                "log_prefactor_stderr": self.prefactor_stderr, "power": self.power, "residuals": self.residuals,
                "h_grid": self.h_grid, "eigenvalues": self.eigenvalues, "predicted_rate": self.predicted_rate,
                "predicted_prefactor": self.predicted_prefactor, "ratios": self.ratios}


def prediction_leading(prediction):
    """(rate c*, h-power k*, coefficient C*) of the leading monomial of h E_r."""
    lead = prediction.energy().leading()
    if lead.l != 0:
        raise ValueError("prediction leads with a ln h term")
    return -lead.c, float(lead.k), lead.coeff.real


def spectrum_sweep(f, h_grid, K=None, *, count=2, method="factored"):
    """Low eigenvalues at each h, with the cutoff chosen per h when ``K`` is None."""
    out = []
    for h in h_grid:
        k = K or max(32, 2 * cutoff_floor(f, h))
        out.append(low_spectrum(assemble(f, h, k), count, method=method))
    return out


def fit_and_compare(f, prediction, h_grid=DEFAULT_H_GRID, K=None, *, method="factored"):
    """Regress ln(E_2 / h^{k*}) on 1/h and compare with the predicted leading monomial."""
    h_grid = list(h_grid)
    if len(h_grid) < 5:
        raise ValueError("the fit needs at least five values of h")
    rate_p, power, C_p = prediction_leading(prediction)
    eig = spectrum_sweep(f, h_grid, K, method=method)
    for h, (_, e2) in zip(h_grid, eig):
        if method == "dense" and e2 < DENSE_FLOOR * assemble(f, h, K or 64, check=False).norm():
            raise FloatingUnderflow("second eigenvalue below the binary64 floor; use the extended solver",
                                    operation="fit_and_compare", h=h, value=e2)
        if e2 <= 0:
            raise FloatingUnderflow("second eigenvalue not positive", operation="fit_and_compare", h=h)
    x = np.array([1.0 / h for h in h_grid])
    y = np.array([math.log(e2 / h ** power) for h, (_, e2) in zip(h_grid, eig)])
    design = np.vstack([np.ones_like(x), -x]).T
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    dof = max(len(x) - 2, 1)
    sigma2 = float(resid @ resid) / dof
    cov = sigma2 * np.linalg.inv(design.T @ design)
    ratios = [e2 / (C_p * h ** power * math.exp(-rate_p / h)) for h, (_, e2) in zip(h_grid, eig)]
    return FitResult(rate=float(coef[1]), rate_stderr=float(math.sqrt(cov[1, 1])), prefactor=float(math.exp(coef[0])),
                     prefactor_stderr=float(math.sqrt(cov[0, 0])), power=power, residuals=[float(r) for r in resid],
                     h_grid=h_grid, eigenvalues=[list(e) for e in eig], predicted_rate=rate_p,
                     predicted_prefactor=C_p, ratios=ratios)
