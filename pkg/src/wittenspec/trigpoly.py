"""Real trigonometric polynomials and the local data at their critical points.

``f(q) = constant + sum_k cos_k cos(2 pi k q) + sin_k sin(2 pi k q)``

Everything downstream is computed from this Fourier data: derivatives of
any order, the Morse critical points with their local inversion series,
integrals of ``1/f'`` along shifted paths, and the formal WKB terms.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from .errors import (
    ConvergenceRadius,
    CriticalAtOrigin,
    DegenerateCritical,
    InputFormatError,
    NonAlternating,
    PathThroughZero,
    UnsupportedCase,
)

TWO_PI = 2.0 * math.pi
DEFAULT_ORDER = 12

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(40)


# --------------------------------------------------------------------------
# the polynomial itself
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TrigPoly:
    constant: float = 0.0
    cos_coeffs: tuple = ()
    sin_coeffs: tuple = ()

    def __post_init__(self):
        cos = tuple(float(x) for x in self.cos_coeffs)
        sin = tuple(float(x) for x in self.sin_coeffs)
        n = max(len(cos), len(sin))
        cos = cos + (0.0,) * (n - len(cos))
        sin = sin + (0.0,) * (n - len(sin))
        while n and cos[-1] == 0.0 and sin[-1] == 0.0:
            cos, sin, n = cos[:-1], sin[:-1], n - 1
        object.__setattr__(self, "constant", float(self.constant))
        object.__setattr__(self, "cos_coeffs", cos)
        object.__setattr__(self, "sin_coeffs", sin)

    @property
    def degree(self):
        return len(self.cos_coeffs)

    # ---------------------------------------------------------------- I/O
    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict) or not ({"cos", "sin", "constant"} & set(data)):
            raise InputFormatError("expected an object with keys constant/cos/sin", operation="parse")
        try:
            return cls(float(data.get("constant", 0.0)),
                       tuple(float(x) for x in data.get("cos", [])),
                       tuple(float(x) for x in data.get("sin", [])))
        except (TypeError, ValueError) as exc:
            raise InputFormatError(f"bad trigonometric polynomial data: {exc}", operation="parse") from exc

    @classmethod
    def from_json(cls, text):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InputFormatError(f"invalid JSON: {exc}", operation="parse") from exc
        return cls.from_dict(data)

    def to_dict(self):
        return {"constant": self.constant, "cos": list(self.cos_coeffs), "sin": list(self.sin_coeffs)}

    @classmethod
    def from_phase_form(cls, terms, constant=0.0):
        """Build sum of ``amp * cos(2 pi k (q + shift))`` / ``sin`` terms.

        ``terms`` is an iterable of ``(kind, k, amp, shift)`` with kind
        ``"cos"`` or ``"sin"``.
        """
        deg = max(k for _, k, _, _ in terms)
        cos = [0.0] * deg
        sin = [0.0] * deg
        for kind, k, amp, shift in terms:
            ph = TWO_PI * k * shift
            if kind == "cos":
                cos[k - 1] += amp * math.cos(ph)
                sin[k - 1] -= amp * math.sin(ph)
            elif kind == "sin":
                cos[k - 1] += amp * math.sin(ph)
                sin[k - 1] += amp * math.cos(ph)
            else:
                raise ValueError(kind)
        return cls(constant, tuple(cos), tuple(sin))

    def shifted(self, s):
        """The polynomial ``q -> f(q + s)``."""
        terms = [("cos", k + 1, a, s) for k, a in enumerate(self.cos_coeffs) if a] + \
                [("sin", k + 1, b, s) for k, b in enumerate(self.sin_coeffs) if b]
        if not terms:
            return self
        return TrigPoly.from_phase_form(terms, self.constant)

    # ---------------------------------------------------------- evaluation
    def __call__(self, q, order=0):
        return evaluate(self, q, order)

    def fourier(self):
        """Complex exponential coefficients ``{k: F_k}`` with f = sum F_k e^{2 pi i k q}."""
        out = {0: complex(self.constant)}
        for k, (a, b) in enumerate(zip(self.cos_coeffs, self.sin_coeffs), start=1):
            out[k] = complex(a, -b) / 2
            out[-k] = complex(a, b) / 2
        return out


def evaluate(f, q, order=0):
    """``f^{(order)}(q)`` termwise from the Fourier data (q real or complex)."""
    q = np.asarray(q)
    scalar = q.ndim == 0
    if order < 0:
        raise ValueError("derivative order must be non-negative")
    ks = np.arange(1, f.degree + 1)
    if f.degree == 0:
        out = np.full(q.shape, f.constant if order == 0 else 0.0, dtype=complex if np.iscomplexobj(q) else float)
        return out[()] if scalar else out
    w = TWO_PI * ks
    phase = np.multiply.outer(q, w) + order * math.pi / 2
    amp = w ** order
    vals = np.cos(phase) @ (amp * np.array(f.cos_coeffs)) + np.sin(phase) @ (amp * np.array(f.sin_coeffs))
    if order == 0:
        vals = vals + f.constant
    return vals[()] if scalar else vals


# --------------------------------------------------------------------------
# critical data
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CriticalPoint:
    index: int
    location: float
    value: float
    curvature: float
    a_coeffs: tuple = ()
    b_coeffs: tuple = ()
    third: float | None = None
    fourth: float | None = None

    def __post_init__(self):
        if self.curvature == 0:
            raise DegenerateCritical("zero curvature", operation="CriticalPoint", index=self.index)

    @property
    def kind(self):
        return "minimum" if self.curvature > 0 else "maximum"

    @property
    def is_minimum(self):
        return self.curvature > 0

    def a(self, j):
        """a_j, or None when the record does not carry it."""
        if j == 0:
            return -1.0 / self.curvature
        return self.a_coeffs[j] if j < len(self.a_coeffs) and self.a_coeffs[j] is not None else None

    def b(self, j):
        if j == 0:
            return -self.curvature
        return self.b_coeffs[j] if j < len(self.b_coeffs) and self.b_coeffs[j] is not None else None

    def to_dict(self):
        return {"index": self.index, "q": self.location, "value": self.value, "curvature": self.curvature,
                "kind": self.kind, "a": list(self.a_coeffs), "b": list(self.b_coeffs)}


@dataclass(frozen=True)
class CriticalData:
    points: tuple
    source: str = "derived"
    f: TrigPoly | None = field(default=None, compare=False)

    def __post_init__(self):
        pts = self.points
        if len(pts) % 2 or not pts:
            raise NonAlternating("critical point count must be even and positive", operation="CriticalData")
        for j, p in enumerate(pts):
            want_min = j % 2 == 0
            if p.is_minimum != want_min:
                raise NonAlternating("critical points must alternate minimum/maximum starting with a minimum",
                                     operation="CriticalData", index=j + 1)

    @property
    def n(self):
        return len(self.points) // 2

    @property
    def derived(self):
        return self.source == "derived"

    def point(self, j):
        """1-based cyclic access (j = 2n + 1 is the first point again)."""
        return self.points[(j - 1) % len(self.points)]

    def location(self, j):
        """Unwrapped location: strictly increasing in j, period 1."""
        size = len(self.points)
        base = self.points[0].location
        wraps, idx = divmod(j - 1, size)
        loc = self.points[idx].location
        if loc < base:
            loc += 1.0
        return loc + wraps

    def value(self, j):
        return self.point(j).value

    def to_dict(self):
        return {"source": self.source, "n": self.n, "points": [p.to_dict() for p in self.points]}

    @classmethod
    def from_abstract(cls, data):
        """Abstract critical data: list of {q, value, curvature, a?, b?}."""
        try:
            raw = data["points"]
            pts = []
            for j, rec in enumerate(raw, start=1):
                curv = float(rec["curvature"])
                a = tuple(None if x is None else float(x) for x in rec.get("a", [])) or (-1.0 / curv,)
                b = tuple(None if x is None else float(x) for x in rec.get("b", [])) or (-curv,)
                pts.append(CriticalPoint(j, float(rec.get("q", (j - 0.5) / len(raw))), float(rec["value"]),
                                         curv, a, b))
        except (KeyError, TypeError, ValueError) as exc:
            raise InputFormatError(f"bad abstract critical data: {exc}", operation="parse") from exc
        return cls(tuple(pts), source="abstract")


def _fprime(f):
    return lambda q: float(evaluate(f, q, 1))


def find_critical_points(f, order=DEFAULT_ORDER):
    """All critical points of ``f`` on one period, cyclically ordered from a minimum."""
    if f.degree == 0:
        raise DegenerateCritical("constant function has no Morse critical points", operation="find_critical_points")
    scale = max(abs(x) for x in f.cos_coeffs + f.sin_coeffs) * TWO_PI * f.degree
    d0 = float(evaluate(f, 0.0, 1))
    n_grid = 64 * f.degree
    grid = np.arange(n_grid + 1) / n_grid
    vals = evaluate(f, grid, 1)
    if abs(d0) < 1e-10 * scale:
        nxt = next((g for g, v in zip(grid[1:], vals[1:]) if abs(v) > 1e-3 * scale), 0.5 / f.degree)
        raise CriticalAtOrigin("f'(0) = 0; shift the argument of f before analysis",
                               operation="find_critical_points", suggested_shift=float(nxt / 2))
    fp = _fprime(f)
    roots = []
    for i in range(n_grid):
        lo, hi = grid[i], grid[i + 1]
        vlo, vhi = vals[i], vals[i + 1]
        if vlo == 0.0:
            roots.append(lo)
        elif vlo * vhi < 0:
            roots.append(brentq(fp, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=200))
    # double roots hide between samples without a sign change
    mags = np.abs(vals[:-1])
    for i in range(n_grid):
        prev, nxt = mags[i - 1], mags[(i + 1) % n_grid]
        if mags[i] < prev and mags[i] < nxt and mags[i] < 1e-6 * scale:
            if not any(abs(r - grid[i]) < 2.0 / n_grid for r in roots):
                raise DegenerateCritical("f' touches zero without changing sign", operation="find_critical_points",
                                         near=float(grid[i]))
    roots = sorted(_newton_polish(f, r) % 1.0 for r in roots)
    points = []
    for r in roots:
        curv = float(evaluate(f, r, 2))
        if abs(curv) < 1e-8 * _curvature_scale(f):
            raise DegenerateCritical("vanishing curvature at a critical point", operation="find_critical_points",
                                     location=r)
        points.append((r, curv))
    if not points:
        raise DegenerateCritical("f' has no sign changes", operation="find_critical_points")
    if len(points) % 2:
        raise NonAlternating("odd number of critical points (a root was missed)", operation="find_critical_points")
    start = next(i for i, (_, c) in enumerate(points) if c > 0)
    points = points[start:] + points[:start]
    out = []
    for j, (r, curv) in enumerate(points, start=1):
        if (curv > 0) != (j % 2 == 1):
            raise NonAlternating("critical kinds do not alternate", operation="find_critical_points")
        a, b = inversion_coeffs(f, r, order)
        out.append(CriticalPoint(j, float(r), float(evaluate(f, r, 0)), curv, a, b,
                                 float(evaluate(f, r, 3)), float(evaluate(f, r, 4))))
    return CriticalData(tuple(out), "derived", f)


def _newton_polish(f, r):
    for _ in range(6):
        d1 = float(evaluate(f, r, 1))
        d2 = float(evaluate(f, r, 2))
        if d2 == 0:
            break
        step = d1 / d2
        r -= step
        if abs(step) < 1e-17:
            break
    return r


# --------------------------------------------------------------------------
# series inversion
# --------------------------------------------------------------------------

def _compose(outer, inner, n):
    """Truncated composition outer(inner(x)) with inner(0) = 0, coefficients up to x^n."""
    result = np.zeros(n + 1, dtype=complex)
    for c in outer[::-1]:
        result = _mul_trunc(result, inner, n)
        result[0] += c
    return result


def _mul_trunc(a, b, n):
    return np.convolve(a, b)[: n + 1] if len(a) and len(b) else np.zeros(n + 1, dtype=complex)


def revert_series(d, n):
    """Coefficients of x(u) solving u = sum_{k>=1} d[k] x^k, through u^n (Newton iteration)."""
    d = np.asarray(d, dtype=complex)
    if abs(d[1]) == 0:
        raise DegenerateCritical("series has no linear term", operation="revert_series")
    deriv = np.array([k * d[k] for k in range(1, len(d))], dtype=complex)
    x = np.zeros(n + 1, dtype=complex)
    x[1] = 1.0 / d[1]
    target = np.zeros(n + 1, dtype=complex)
    target[1] = 1.0
    prec = 2
    while True:
        prec = min(2 * prec, n + 1)
        for _ in range(2):
            ux = _compose(d, x, n)
            dux = _compose(deriv, x, n)
            inv = _series_reciprocal(dux, n)
            x = x - _mul_trunc(ux - target, inv, n)
        if prec >= n + 1:
            break
    ux = _compose(d, x, n)
    if np.max(np.abs(ux - target)) > 1e-9 * max(1.0, np.max(np.abs(x))):
        for _ in range(n):
            dux = _compose(deriv, x, n)
            x = x - _mul_trunc(_compose(d, x, n) - target, _series_reciprocal(dux, n), n)
    return x


def _series_reciprocal(a, n):
    out = np.zeros(n + 1, dtype=complex)
    out[0] = 1.0 / a[0]
    for k in range(1, n + 1):
        out[k] = -np.dot(a[1: k + 1], out[k - 1:: -1][:k]) / a[0]
    return out


def _curvature_scale(f):
    return max((abs(x) for x in f.cos_coeffs + f.sin_coeffs), default=0.0) * (TWO_PI * max(f.degree, 1)) ** 2


def inversion_coeffs(f, q_l, order=DEFAULT_ORDER):
    """Local inversion coefficients (a_0..a_J), (b_0..b_J) at a critical point.

    ``-(q - q_l) = sum_j a_j f'(q)^{j+1} / (j + 1)`` and
    ``-f''(q) = sum_j b_j u^j`` with ``u = -f'(q)``.
    """
    if isinstance(q_l, CriticalPoint):
        q_l = q_l.location
    return _inversion_coeffs_cached(f, float(q_l), int(order))


@lru_cache(maxsize=512)
def _inversion_coeffs_cached(f, q_l, order):
    J = order
    n = J + 2
    taylor = np.array([0.0] + [float(evaluate(f, q_l, k + 1)) / math.factorial(k) for k in range(1, n + 1)])
    if abs(taylor[1]) < 1e-8 * _curvature_scale(f):
        raise DegenerateCritical("vanishing curvature", operation="inversion_coeffs", location=q_l)
    x_of_u = revert_series(taylor, n).real
    a = tuple(float(-(j + 1) * x_of_u[j + 1]) for j in range(J + 1))
    # -f''(x(-u)) as a series in u
    fpp = np.array([(k + 1) * taylor[k + 1] for k in range(n)])
    x_neg = np.array([x_of_u[k] * (-1) ** k for k in range(n + 1)])
    b_series = -_compose(fpp, x_neg, n).real
    b = tuple(float(b_series[j]) for j in range(J + 1))
    return a, b


def eval_inversion(a, u):
    """q - q_l reconstructed from the a-series at u = f'(q)."""
    return -sum(aj * u ** (j + 1) / (j + 1) for j, aj in enumerate(a))


# --------------------------------------------------------------------------
# integrals
# --------------------------------------------------------------------------

def _segment_integral(fn, za, zb, panels=8):
    if za == zb:
        return 0j
    total = 0j
    edges = np.linspace(0.0, 1.0, panels + 1)
    dz = zb - za
    for t0, t1 in zip(edges[:-1], edges[1:]):
        t = 0.5 * (t1 - t0) * _GL_NODES + 0.5 * (t1 + t0)
        z = za + t * dz
        total += 0.5 * (t1 - t0) * np.dot(_GL_WEIGHTS, fn(z)) * dz
    return complex(total)


def sum_a_series(cp, f, eps, which="first", check=True, check_order=60, rtol=1e-9):
    """Sum_{j>=1} a_j (-1)^j A^j / j (``which="first"``) or
    Sum_{j>=3} a_j (-1)^j A^{j-2} / (j - 2) (``which="second"``), A = -f'(q_l - eps).

    Computed as a quadrature of a regular integrand from q_l to q_l - eps;
    optionally cross-checked against the truncated series.
    """
    if f is None:
        from .errors import AbstractDataInsufficient
        raise AbstractDataInsufficient("sum_a_series needs the trigonometric polynomial",
                                       operation="sum_a_series")
    q_l = cp.location
    eps = complex(eps)
    if eps == 0:
        return 0j
    a = cp.a_coeffs if len(cp.a_coeffs) > check_order else inversion_coeffs(f, q_l, check_order)[0]
    a0, a1, a2 = a[0], a[1], a[2]
    small = 1e-3 * abs(cp.curvature) * abs(eps)

    if which == "first":
        def integrand(q):
            u = evaluate(f, q, 1)
            g = evaluate(f, q, 2)
            near = np.abs(u) < small
            out = -(1.0 + a0 * g) / np.where(near, 1.0, u)
            if np.any(near):
                uu = u[near]
                out[near] = g[near] * sum(a[j] * uu ** (j - 1) for j in range(1, len(a)))
            return out
        series = sum(a[j] * complex(evaluate(f, q_l - eps, 1)) ** j / j for j in range(1, len(a)))
    elif which == "second":
        def integrand(q):
            u = evaluate(f, q, 1)
            g = evaluate(f, q, 2)
            near = np.abs(u) < 30 * small
            us = np.where(near, 1.0, u)
            out = -1.0 / us ** 3 - a0 * g / us ** 3 - a1 * g / us ** 2 - a2 * g / us
            if np.any(near):
                uu = u[near]
                out[near] = g[near] * sum(a[j] * uu ** (j - 3) for j in range(3, len(a)))
            return out
        series = sum(a[j] * complex(evaluate(f, q_l - eps, 1)) ** (j - 2) / (j - 2) for j in range(3, len(a)))
    else:
        raise ValueError(f"unknown variant {which!r}")

    value = _segment_integral(integrand, complex(q_l), complex(q_l) - eps, panels=8)
    if check and abs(value - series) > rtol * max(abs(value), 1e-300):
        raise ConvergenceRadius("inversion series and quadrature disagree; epsilon is too large",
                                operation="sum_a_series", quadrature=value, series=series)
    return value


def path_integral_inv_fprime(f, q_a, q_b, offset=0.1, side=1, floor=1e-6):
    """Integral of dq / f'(q) along q_a -> q_a + i s delta -> q_b + i s delta -> q_b.

    ``side = +1`` runs above the real axis, ``-1`` below.  When q_b = q_a + 1
    the vertical legs cancel by periodicity and only the shifted horizontal
    segment is integrated.
    """
    q_a, q_b = complex(q_a), complex(q_b)
    if q_a == q_b:
        return 0j
    shift = 1j * side * offset

    def inv(z):
        d = evaluate(f, z, 1)
        if np.min(np.abs(d)) < floor:
            raise PathThroughZero("integration path passes through a zero of f'",
                                  operation="path_integral_inv_fprime")
        return 1.0 / d

    loop = abs((q_b - q_a) - 1.0) < 1e-14
    legs = [(q_a + shift, q_b + shift)] if loop else [(q_a, q_a + shift), (q_a + shift, q_b + shift),
                                                      (q_b + shift, q_b)]
    panels = max(8, int(40 * abs(q_b - q_a) * max(f.degree, 1)))
    total = 0j
    for za, zb in legs:
        n = panels if abs(zb - za) > offset * 1.0001 else 6
        total += _segment_integral(inv, za, zb, panels=n)
    return total


# --------------------------------------------------------------------------
# appendix integrals
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class AsymptoticRecord:
    """``sum_p powers[p] E^p + arccosh * arccosh(A/sqrt E) + log_E * ln E + o(E^order)``."""

    kind: str
    k: int | None
    A: float
    powers: dict
    arccosh: float = 0.0
    log_E: float = 0.0
    order: Fraction = Fraction(0)
    exact: bool = False

    def expansion(self, E):
        val = sum(c * E ** float(p) for p, c in self.powers.items())
        if self.arccosh:
            val += self.arccosh * math.acosh(self.A / math.sqrt(E))
        if self.log_E:
            val += self.log_E * math.log(E)
        return val

    def numeric(self, E):
        return special_integral_numeric(self.kind, self.k, self.A, E)


def special_integral(kind, k=None, A=1.0):
    """Small-E expansions of the arccosh-type integrals as structured records."""
    A = float(A)
    F = Fraction
    if A <= 0:
        raise UnsupportedCase("A must be positive", operation="special_integral")
    if kind == "arccosh_asym":
        return AsymptoticRecord(kind, None, A, {F(0): math.log(2 * A), F(1): -1 / (4 * A * A)}, 0.0, -0.5, F(1))
    if kind == "cosh_power":
        if k is None or k < 0:
            raise UnsupportedCase("cosh_power needs k >= 0", operation="special_integral")
        if k == 0:
            return AsymptoticRecord(kind, 0, A, {}, -1.0, 0.0, F(10), exact=True)
        if k == 2:
            return AsymptoticRecord(kind, 2, A, {F(-1): -A * A / 2, F(0): 0.25, F(1): 1 / (16 * A * A)}, -0.5, 0.0,
                                    F(1))
        if k == 4:
            return AsymptoticRecord(kind, 4, A, {F(-2): -A ** 4 / 4, F(-1): -A * A / 4, F(0): 7 / 32}, -3 / 8, 0.0,
                                    F(0))
        p0 = F(-k, 2)
        return AsymptoticRecord(kind, k, A, {p0: -A ** k / k, p0 + 1: -A ** (k - 2) / (2 * (k - 2)),
                                             p0 + 2: -3 * A ** (k - 4) / (8 * (k - 4))}, 0.0, 0.0, p0 + 2)
    if kind == "sinh2_cosh_power":
        if k is None or k < 0:
            raise UnsupportedCase("sinh2_cosh_power needs k >= 0", operation="special_integral")
        if k == 0:
            return AsymptoticRecord(kind, 0, A, {F(-1): -A * A / 2, F(0): 0.25, F(1): 1 / (16 * A * A)}, 0.5, 0.0,
                                    F(1))
        if k == 2:
            return AsymptoticRecord(kind, 2, A, {F(-2): -A ** 4 / 4, F(-1): A * A / 4, F(0): -1 / 32}, 1 / 8, 0.0,
                                    F(0))
        p0 = F(-2 - k, 2)
        return AsymptoticRecord(kind, k, A, {p0: -A ** (k + 2) / (k + 2), p0 + 1: A ** k / (2 * k),
                                             p0 + 2: A ** (k - 2) / (8 * (k - 2))}, 0.0, 0.0, p0 + 2)
    raise UnsupportedCase(f"unknown special integral kind {kind!r}", operation="special_integral")


def special_integral_numeric(kind, k, A, E):
    """Direct quadrature of the integral the record expands (t from arccosh(A/sqrt E) down to 0)."""
    from scipy.integrate import quad

    X = math.acosh(A / math.sqrt(E))
    if kind == "arccosh_asym":
        return X
    if kind == "cosh_power":
        g = lambda t: math.cosh(t) ** k
    elif kind == "sinh2_cosh_power":
        g = lambda t: math.sinh(t) ** 2 * math.cosh(t) ** k
    else:
        raise UnsupportedCase(kind, operation="special_integral_numeric")
    # scale out the dominant exponential growth for an accurate quadrature
    val, _ = quad(g, 0.0, X, epsabs=0.0, epsrel=1e-13, limit=400)
    return -val


def sqrt_reduction(k, power, u, E):
    """Antiderivative of u^k (u^2 - E)^(-power) for power in {1/2, 3/2, 5/2}, via integration by parts."""
    power = Fraction(power)
    s = math.sqrt(u * u - E) if u * u > E else None
    if s is None:
        raise UnsupportedCase("sqrt_reduction needs u^2 > E", operation="sqrt_reduction")
    if power == Fraction(1, 2):
        if k == 0:
            return math.log(u + s)
        if k == 1:
            return s
        return u ** (k - 1) * s / k + (k - 1) * E / k * sqrt_reduction(k - 2, power, u, E)
    if power == Fraction(3, 2):
        if k == 0:
            return -u / (E * s)
        if k == 1:
            return -1.0 / s
        return -u ** (k - 1) / s + (k - 1) * sqrt_reduction(k - 2, Fraction(1, 2), u, E)
    if power == Fraction(5, 2):
        if k == 0:
            return u / (E * E * s) - u ** 3 / (3 * E * E * s ** 3)
        if k == 1:
            return -1.0 / (3 * s ** 3)
        return -u ** (k - 1) / (3 * s ** 3) + (k - 1) / 3 * sqrt_reduction(k - 2, Fraction(3, 2), u, E)
    raise UnsupportedCase(f"unsupported power {power}", operation="sqrt_reduction")


# --------------------------------------------------------------------------
# formal WKB terms
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FormalWKBSeries:
    """First two Riccati terms of the formal solution on a chosen sheet.

    On the first sheet ``i p(q, E) -> f'(q)`` as E -> 0, on the second
    ``i p -> -f'``; the branch of p is continued from that limit, so the
    formulas are valid away from the turning points.
    """

    f: TrigPoly
    q0: float = 0.0
    sheet: str = "first"

    def _sign(self):
        return 1.0 if self.sheet == "first" else -1.0

    def momentum(self, q, E):
        d1 = complex(evaluate(self.f, q, 1))
        return -1j * self._sign() * d1 * np.sqrt(1 - E / d1 ** 2 + 0j)

    def y_terms(self, q, E):
        d1, d2, d3 = (complex(evaluate(self.f, q, n)) for n in (1, 2, 3))
        p = self.momentum(q, E)
        w = E - d1 * d1
        y0 = d1 * d2 / (2 * w) - d2 / (2j * p)
        y1 = (-5 * d1 * d1 * d2 * d2 / (8j * p ** 5) - d1 * d2 * d2 / (2 * w * w) - d2 * d2 / (8j * p ** 3)
              - d1 * d3 / (4j * p ** 3) - d3 / (4 * w))
        return y0, y1

    def action(self, q_a, q_b, E, panels=16):
        """Integral of i p(q, E) along the straight segment q_a -> q_b."""
        fn = lambda z: np.array([1j * self.momentum(zz, E) for zz in np.atleast_1d(z)])
        return _segment_integral(fn, complex(q_a), complex(q_b), panels)
