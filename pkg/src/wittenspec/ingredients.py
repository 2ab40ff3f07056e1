"""Ingredients of the quantization condition as transseries in (E_r, h, ln h).

For every critical point the local monodromy exponent ``mu_j`` and for every
interval ``(q_j, q_{j+1})`` the tunnelling factor ``tau_j``; the global loop
factor ``1 + E_r kappa``; and, for cross-checking, the connection
coefficients ``c'`` (minima), ``c`` (maxima) and the interval monodromies
``M_j``, ``M'_j`` whose product reproduces ``tau_j`` independently.

Orders that the asymptotic formulas leave undetermined can be filled with
seeded pseudo-random coefficients (:class:`UnknownFill`).  Running the whole
pipeline with different fills and comparing results separates the output
coefficients that are fixed by the known orders from those that are not.
"""

from __future__ import annotations

import cmath
import math
import random
from dataclasses import dataclass, field

import numpy as np

from .errors import AbstractDataInsufficient, ExpansionDomain, UnsupportedCase
from .transseries import DEFAULT_POLICY, TransSeries, snap_c
from .trigpoly import CriticalData, evaluate, path_integral_inv_fprime, special_integral, sum_a_series

EULER_GAMMA = 0.57721566490153286061
DEFAULT_EPSILON = 0.02
PATH_OFFSET = 0.1


# --------------------------------------------------------------------------
# unknown-order filling
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class UnknownFill:
    """Deterministic pseudo-random stand-ins for coefficients no formula fixes."""

    seed: int = 1
    scale: float = 1.0

    def value(self, name, *key):
        rng = random.Random(f"{self.seed}-{name}-" + "-".join(str(x) for x in key))
        return self.scale * complex(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0))

    def relative(self, name, keys, policy):
        """A c = 0 series with one random coefficient per (m, kk, l) key."""
        return TransSeries({(0.0, m, kk, l): self.value(name, m, kk, l) for m, kk, l in keys}, policy)


def _keys(policy, unknown, log_max=None):
    """(m, kk, l) keys with integer h-powers satisfying ``unknown(m, k, l)``."""
    out = []
    for m in range(0, policy.max_m + 1):
        for k in range(0, int(policy.max_k) + 1):
            lmax = min(k if log_max is None else log_max(m, k), policy.max_l)
            for l in range(0, lmax + 1):
                if unknown(m, k, l):
                    out.append((m, 2 * k, l))
    return out


def tau_unknown_keys(policy):
    """Relative orders of a tunnelling factor not fixed by the closed form.

    Known: the relative constant, the E_r and E_r ln h terms, and the h term.
    """
    return _keys(policy, lambda m, k, l: (m >= 2 and k == 0 and l == 0) or (m >= 1 and k == 1) or k >= 2)


def mu_unknown_keys(policy):
    """Relative orders of a local monodromy factor not fixed by the closed form."""
    return _keys(policy, lambda m, k, l: m >= 2 or k >= 2, log_max=lambda m, k: 0)


def kappa_unknown_keys(policy):
    """Absolute orders of ``1 + E_r kappa`` not fixed by the loop integral."""
    return _keys(policy, lambda m, k, l: (m >= 2 and k == 1) or (m >= 1 and k >= 2), log_max=lambda m, k: 0)


# --------------------------------------------------------------------------
# small builders
# --------------------------------------------------------------------------

def _mono(coeff, c=0.0, m=0, k=0, l=0, policy=None):
    return TransSeries.monomial(coeff, c=c, m=m, k=k, l=l, policy=policy)


def _exp_of(terms, policy):
    """exp of an infinitesimal series given as {(m, k, l): coeff}."""
    x = TransSeries({(0.0, m, int(2 * k), l): v for (m, k, l), v in terms.items()}, policy)
    return x.exp_small() if x else TransSeries.constant(1.0, policy)


def _log(z):
    return cmath.log(complex(z))


# --------------------------------------------------------------------------
# local data at q_j - eps
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class LocalShift:
    """Quantities at the shifted base point ``q_j - eps`` that several ingredients share."""

    index: int
    location: float
    kind: str
    curvature: float
    value: float
    slope_eps: complex  # f'(q_j - eps)
    curv_eps: complex  # f''(q_j - eps)
    value_eps: complex  # f(q_j - eps)
    sum_a: complex  # sum_{j>=1} a_j f'(q_j - eps)^j / j
    a2: float | None
    b2: float | None

    @property
    def is_minimum(self):
        return self.kind == "minimum"

    def log_term(self):
        """(1/f'') log(2(-u)/sqrt(2 f'')) at a minimum; -(1/f'') log(2u/sqrt(-2 f'')) at a maximum."""
        f2 = self.curvature
        u = self.slope_eps
        if self.is_minimum:
            return _log(2 * (-u) / math.sqrt(2 * f2)) / f2
        return -_log(2 * u / math.sqrt(-2 * f2)) / f2

    def linear_term(self):
        """Coefficient of E_r in the exponent of the local connection data (without the path part)."""
        sign = -1.0 if self.is_minimum else 1.0
        return self.log_term() + sign * self.sum_a

    def h_term(self):
        """h-coefficient in the exponent of the local part of tau (ε-free)."""
        val = -self.b2 / 12 + self.a2 * self.curvature ** 2 / 24
        return val if self.is_minimum else -val


def local_shift(data, j, eps, *, cp=None):
    cp = cp or data.point(j)
    f = data.f
    if f is None:
        raise AbstractDataInsufficient("shifted local data needs the trigonometric polynomial",
                                       operation="local_shift", index=j)
    q = data.location(j) - eps
    return LocalShift(
        index=j, location=data.location(j), kind=cp.kind, curvature=cp.curvature, value=cp.value,
        slope_eps=complex(evaluate(f, q, 1)), curv_eps=complex(evaluate(f, q, 2)),
        value_eps=complex(evaluate(f, q, 0)), sum_a=sum_a_series(cp, f, eps, "first"),
        a2=cp.a(2), b2=cp.b(2))


# --------------------------------------------------------------------------
# mu
# --------------------------------------------------------------------------

def mu(cp, *, policy=None, fill=None, name=None, a2=None):
    """Local monodromy factor at one critical point (vanishes with E_r).

    ``E_r pi i / |f''| (1 -/+ a2 |f''| h E_r / 4 - pi i E_r / (2 |f''|))`` with
    the minus sign at minima and the plus sign at maxima.
    """
    policy = policy or DEFAULT_POLICY
    curv = abs(cp.curvature)
    if a2 is None:
        a2 = cp.a(2)
    if a2 is None:
        raise AbstractDataInsufficient("mu needs a_2 at the critical point", operation="mu", index=cp.index)
    sign = -1.0 if cp.is_minimum else 1.0
    rel = TransSeries({(0.0, 0, 0, 0): 1.0,
                       (0.0, 1, 2, 0): sign * a2 * curv / 4,
                       (0.0, 1, 0, 0): -math.pi * 1j / (2 * curv)}, policy)
    if fill is not None:
        rel = rel + fill.relative(name or f"mu{cp.index}", mu_unknown_keys(policy), policy)
    return rel * _mono(math.pi * 1j / curv, m=1, policy=policy)


# --------------------------------------------------------------------------
# tau, direct closed form
# --------------------------------------------------------------------------

def tau_rate(data, j):
    """Exponential rate of tau_j: twice (value at the minimum - value at the maximum)."""
    a, b = data.point(j), data.point(j + 1)
    lo, hi = (a, b) if a.is_minimum else (b, a)
    return 2.0 * (lo.value - hi.value)


def tau_log_slope(data, j):
    """Coefficient lambda of E_r ln h: -1/(2 f'') per minimum, +1/(2 f'') per maximum."""
    out = 0.0
    for p in (data.point(j), data.point(j + 1)):
        out += (-1.0 if p.is_minimum else 1.0) / (2 * p.curvature)
    return out


def tau_leading(data, j):
    a, b = data.point(j), data.point(j + 1)
    return math.pi / math.sqrt(abs(a.curvature * b.curvature))


def tau_path_integral(data, j, eps, offset=PATH_OFFSET):
    """First-sheet integral of dq/f' from q_j - eps to q_{j+1} - eps (path above the axis)."""
    return path_integral_inv_fprime(data.f, data.location(j) - eps, data.location(j + 1) - eps,
                                    offset=offset, side=1)


def tau_exponent_constants(data, j, eps, offset=PATH_OFFSET):
    """(K_j, H_j): the E_r and h coefficients in the exponent of tau_j."""
    la, lb = local_shift(data, j, eps), local_shift(data, j + 1, eps)
    a = data.point(j)
    path = tau_path_integral(data, j, eps, offset) + math.pi * 1j / a.curvature
    sign = 1.0 if a.is_minimum else -1.0
    K = la.linear_term() + lb.linear_term() + sign * path
    H = la.h_term() + lb.h_term()
    return K, H


def tau(j, data, eps=DEFAULT_EPSILON, *, policy=None, fill=None, constants=None):
    """Tunnelling factor of the interval (q_j, q_{j+1}) as a transseries.

    ``constants`` may supply (K_j, H_j) directly (abstract critical data);
    otherwise they are computed from the trigonometric polynomial.
    """
    policy = policy or DEFAULT_POLICY
    a, b = data.point(j), data.point(j + 1)
    if constants is None:
        if data.f is None:
            raise AbstractDataInsufficient("tau needs epsilon-dependent constants in abstract mode",
                                           operation="tau", index=j)
        constants = tau_exponent_constants(data, j, eps)
    K, H = constants
    lam = tau_log_slope(data, j)
    gamma_corr = EULER_GAMMA / (2 * abs(a.curvature)) + EULER_GAMMA / (2 * abs(b.curvature))
    body = _exp_of({(1, 0, 1): lam, (1, 0, 0): K, (0, 1, 0): H}, policy)
    body = body * TransSeries({(0.0, 0, 0, 0): 1.0, (0.0, 1, 0, 0): gamma_corr}, policy)
    if fill is not None:
        body = body * (1.0 + fill.relative(f"tau{j}", tau_unknown_keys(policy), policy))
    return body * _mono(tau_leading(data, j), c=tau_rate(data, j), m=1, policy=policy)


# --------------------------------------------------------------------------
# connection coefficients and interval monodromies
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class RatedSeries:
    """``exp(rate/h) * body`` with the rate kept as an unsnapped float."""

    rate: complex
    body: TransSeries

    def __mul__(self, other):
        return RatedSeries(self.rate + other.rate, self.body * other.body)

    def inverse(self):
        return RatedSeries(-self.rate, self.body.invert())

    def series(self):
        rate = complex(self.rate)
        if abs(rate.imag) > 1e-12:
            raise ValueError("complex exponential rate cannot be represented")
        return self.body * _mono(1.0, c=snap_c(rate.real), policy=self.body.policy)


def _connection_min(ls, policy):
    f2 = ls.curvature
    u = ls.slope_eps
    body = _mono(-1j * math.sqrt(2 * math.pi) * 2 * (-u) / math.sqrt(2 * f2), k=-0.5, policy=policy)
    body = body * TransSeries({(0.0, 0, 0, 0): 1.0, (0.0, 1, 0, 0): EULER_GAMMA / (2 * f2)}, policy)
    h_coeff = -ls.b2 / 12 - 0.5 * ls.curv_eps / u ** 2 + ls.a2 * f2 ** 2 / 24
    body = body * _exp_of({(1, 0, 1): -1.0 / (2 * f2), (1, 0, 0): ls.linear_term(), (0, 1, 0): h_coeff}, policy)
    return RatedSeries(2 * (ls.value - ls.value_eps), body)


def _connection_max(ls, policy):
    f2 = ls.curvature
    u = ls.slope_eps
    body = _mono(-1j * math.sqrt(2 * math.pi) * math.sqrt(-2 * f2) / (2 * u), k=0.5, policy=policy)
    body = body * TransSeries({(0.0, 1, 0, 0): -1.0 / (2 * f2),
                               (0.0, 2, 0, 0): EULER_GAMMA / (4 * f2 ** 2)}, policy)
    h_coeff = ls.b2 / 12 + 0.5 * ls.curv_eps / u ** 2 - ls.a2 * f2 ** 2 / 24
    body = body * _exp_of({(1, 0, 1): 1.0 / (2 * f2), (1, 0, 0): ls.linear_term(), (0, 1, 0): h_coeff}, policy)
    return RatedSeries(2 * (ls.value_eps - ls.value), body)


def connection_cprime(data, j, eps=DEFAULT_EPSILON, *, policy=None, rated=False):
    """Connection coefficient across the minimum q_j."""
    policy = policy or DEFAULT_POLICY
    if not data.point(j).is_minimum:
        raise ValueError(f"point {j} is not a minimum")
    out = _connection_min(local_shift(data, j, eps), policy)
    return out if rated else out.series()


def connection_c(data, j, eps=DEFAULT_EPSILON, *, policy=None, rated=False):
    """Connection coefficient across the maximum q_j (vanishes at E_r = 0)."""
    policy = policy or DEFAULT_POLICY
    if data.point(j).is_minimum:
        raise ValueError(f"point {j} is not a maximum")
    out = _connection_max(local_shift(data, j, eps), policy)
    return out if rated else out.series()


@dataclass(frozen=True)
class IntervalExponents:
    """Coefficients of ``M_j = exp(M_{-1}/h + M_0 + h M_1)`` and of ``M'_j``, each as E-expansions.

    Every entry is a tuple ``(E^0 coefficient, E^1 coefficient)``.
    """

    j: int
    M_minus1: tuple
    M0: tuple
    M1: tuple
    Mp_minus1: tuple
    Mp0: tuple
    Mp1: tuple

    def to_dict(self):
        enc = lambda t: [[complex(x).real, complex(x).imag] for x in t]
        return {"j": self.j, "M": [enc(self.M_minus1), enc(self.M0), enc(self.M1)],
                "M_prime": [enc(self.Mp_minus1), enc(self.Mp0), enc(self.Mp1)]}


def interval_exponents(j, data, eps=DEFAULT_EPSILON, offset=PATH_OFFSET):
    f = data.f
    if f is None:
        raise AbstractDataInsufficient("interval monodromies need the trigonometric polynomial",
                                       operation="interval_exponents", index=j)
    qa, qb = data.location(j) - eps, data.location(j + 1) - eps
    ua, ub = complex(evaluate(f, qa, 1)), complex(evaluate(f, qb, 1))
    fa2, fb2 = complex(evaluate(f, qa, 2)), complex(evaluate(f, qb, 2))
    df = complex(evaluate(f, qb, 0) - evaluate(f, qa, 0))
    first = path_integral_inv_fprime(f, qa, qb, offset=offset, side=1)
    second = path_integral_inv_fprime(f, qa, qb, offset=offset, side=-1)
    logratio = 0.5 * math.log(abs(ua / ub))
    quarter = 0.25 * _log(ua ** 2 / ub ** 2)
    M0 = ((-1) ** (j - 1) * math.pi * 1j + logratio + quarter,
          -0.25 / ua ** 2 + 0.25 / ub ** 2 + 1 / (8 * ub ** 2) - 1 / (8 * ua ** 2))
    Mp0 = (-logratio + quarter, -0.25 / ua ** 2 + 0.25 / ub ** 2 + 1 / (8 * ua ** 2) - 1 / (8 * ub ** 2))
    M1 = (fb2 / (2 * ub ** 2) - fa2 / (2 * ua ** 2), 0j)
    return IntervalExponents(j, (df, -0.5 * first), M0, M1, (-df, 0.5 * second), Mp0, (0j, 0j))


def interval_monodromies(j, data, eps=DEFAULT_EPSILON, *, policy=None, exps=None):
    """(M_j, M'_j) at E = h E_r as rated series."""
    policy = policy or DEFAULT_POLICY
    ex = exps or interval_exponents(j, data, eps)
    M = RatedSeries(ex.M_minus1[0], _exp_of({(1, 0, 0): ex.M_minus1[1], (1, 1, 0): ex.M0[1],
                                             (0, 1, 0): ex.M1[0]}, policy).scale(cmath.exp(ex.M0[0])))
    Mp = RatedSeries(ex.Mp_minus1[0], _exp_of({(1, 0, 0): ex.Mp_minus1[1], (1, 1, 0): ex.Mp0[1]},
                                              policy).scale(cmath.exp(ex.Mp0[0])))
    return M, Mp


def tau_from_connections(j, data, eps=DEFAULT_EPSILON, *, policy=None):
    """tau_j assembled as c'_j c_{j+1} M_j^{-1} M'_j (odd j) or c_j c'_{j+1} M_j M'_j^{-1} (even j)."""
    policy = policy or DEFAULT_POLICY
    la, lb = local_shift(data, j, eps), local_shift(data, j + 1, eps)
    M, Mp = interval_monodromies(j, data, eps, policy=policy)
    if data.point(j).is_minimum:
        out = _connection_min(la, policy) * _connection_max(lb, policy) * M.inverse() * Mp
    else:
        out = _connection_max(la, policy) * _connection_min(lb, policy) * M * Mp.inverse()
    return out.series()


#: absolute monomials (m, k, l) of tau_j that the closed form fixes
TAU_KNOWN_MONOMIALS = ((1, 0, 0), (1, 1, 0), (1, 1, 1), (2, 0, 0), (2, 0, 1))


# --------------------------------------------------------------------------
# kappa
# --------------------------------------------------------------------------

def loop_integral_second_sheet(data, eps=DEFAULT_EPSILON, offset=PATH_OFFSET):
    """Integral of dq/f' over one period along a path below the real axis."""
    q0 = data.location(1) - eps
    return path_integral_inv_fprime(data.f, q0, q0 + 1.0, offset=offset, side=-1)


def one_plus_Er_kappa(data, eps=DEFAULT_EPSILON, *, policy=None, fill=None, loop=None):
    """``1 + E_r kappa = exp((E_r/2) * second-sheet loop integral)`` plus unknown orders."""
    policy = policy or DEFAULT_POLICY
    if loop is None:
        if data.f is None:
            raise AbstractDataInsufficient("kappa needs the loop integral in abstract mode", operation="kappa")
        loop = loop_integral_second_sheet(data, eps)
    out = _exp_of({(1, 0, 0): 0.5 * loop}, policy)
    if fill is not None:
        out = out + fill.relative("kappa", kappa_unknown_keys(policy), policy)
    return out


def kappa(data, eps=DEFAULT_EPSILON, *, policy=None, fill=None, loop=None):
    """kappa itself: (1 + E_r kappa - 1) / E_r."""
    total = one_plus_Er_kappa(data, eps, policy=policy, fill=fill, loop=loop) - 1.0
    return total * _mono(1.0, m=-1, policy=total.policy)


# --------------------------------------------------------------------------
# the full set
# --------------------------------------------------------------------------

@dataclass
class IngredientSet:
    data: CriticalData
    epsilon: complex
    policy: object
    mu: list
    tau: list
    opk: TransSeries  # 1 + E_r kappa
    fill: UnknownFill | None = None
    unavailable: set = field(default_factory=set)
    extras: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.data.n

    @property
    def kappa(self):
        return (self.opk - 1.0) * _mono(1.0, m=-1, policy=self.policy)

    def mu_(self, j):
        return self.mu[(j - 1) % (2 * self.n)]

    def tau_(self, j):
        return self.tau[(j - 1) % (2 * self.n)]

    def with_policy(self, policy):
        """The same ingredients carried under different truncation bounds."""
        return IngredientSet(self.data, self.epsilon, policy, [m.with_policy(policy) for m in self.mu],
                             [t.with_policy(policy) for t in self.tau], self.opk.with_policy(policy), self.fill,
                             set(self.unavailable), dict(self.extras))

    def replace_tau(self, j, series):
        taus = list(self.tau)
        taus[(j - 1) % (2 * self.n)] = series
        return IngredientSet(self.data, self.epsilon, self.policy, list(self.mu), taus, self.opk, self.fill,
                             set(self.unavailable), dict(self.extras))

    def to_dict(self):
        return {
            "epsilon": [complex(self.epsilon).real, complex(self.epsilon).imag],
            "source": self.data.source,
            "unavailable": sorted(self.unavailable),
            "mu": [m.to_records() for m in self.mu],
            "tau": [t.to_records() for t in self.tau],
            "one_plus_Er_kappa": self.opk.to_records(),
        }


def build_ingredients(data, eps=DEFAULT_EPSILON, *, policy=None, fill=None):
    """All 2n mu's, 2n tau's and 1 + E_r kappa for the given critical data.

    In abstract mode (no trigonometric polynomial) every epsilon- or
    path-dependent constant, and any missing a_2/b_2, is recorded in
    ``unavailable``; with a ``fill`` those constants are drawn from it so that
    downstream bookkeeping can still run, otherwise they are set to zero.
    """
    policy = policy or DEFAULT_POLICY
    size = 2 * data.n
    unavailable = set()

    def stand_in(name):
        unavailable.add(name)
        return fill.value(name) if fill is not None else 0j

    mus = []
    for j in range(1, size + 1):
        cp = data.point(j)
        a2 = cp.a(2)
        if a2 is None:
            a2 = stand_in(f"a2[{j}]").real
        mus.append(mu(cp, policy=policy, fill=fill, name=f"mu{j}", a2=a2))

    taus = []
    for j in range(1, size + 1):
        if data.f is not None:
            constants = tau_exponent_constants(data, j, eps)
        else:
            constants = (stand_in(f"K[{j}]"), stand_in(f"H[{j}]"))
        taus.append(tau(j, data, eps, policy=policy, fill=fill, constants=constants))

    loop = loop_integral_second_sheet(data, eps) if data.f is not None else stand_in("loop")
    opk = one_plus_Er_kappa(data, eps, policy=policy, fill=fill, loop=loop)
    return IngredientSet(data, eps, policy, mus, taus, opk, fill, unavailable)


# --------------------------------------------------------------------------
# monodromy exponents along gamma and sigma, reduced connection data
# --------------------------------------------------------------------------
#
# Conventions.  ``k = +1`` at a minimum and ``-1`` at a maximum,
# ``A = -f'(q_j - eps)``.  For the closed loop gamma_j around both turning
# points ``2 pi i s_gamma = (i/h) omega + Omega0 + h Omega1 + ...``; for the
# open contour sigma_j from ``q_j - eps`` around the left turning point and
# back on the other sheet ``2 pi i s_sigma = DeltaS/h + Delta_y0 + h Delta_y1``.
# Two independent evaluations are offered: small-E expansions in terms of
# the local Taylor data, and contour quadrature of the WKB integrands with
# the square root continued along the path.

#: sigma expansions are refused when |E| / A^2 exceeds this
SIGMA_EXPANSION_LIMIT = 1e-2
_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)


def _double_factorial(n):
    return math.prod(range(n, 0, -2)) if n > 0 else 1


def _kind_sign(cp):
    return 1 if cp.is_minimum else -1


@dataclass(frozen=True)
class MonodromyExponent:
    """``2 pi i s = (i/h) omega(E) + Omega0 + h Omega1(E)`` for a closed loop around one critical point.

    ``omega`` and ``Omega1`` are tuples of E-power coefficients; an entry is
    None when the local data needed for it is not available.
    """

    contour: str  # "gamma" or "gamma_prime"
    index: int
    omega: tuple
    Omega0: complex
    Omega1: tuple

    @staticmethod
    def _poly(coeffs, E):
        if any(c is None for c in coeffs):
            raise AbstractDataInsufficient("an E-coefficient of the exponent is unavailable",
                                           operation="gamma_exponent")
        return sum(c * E ** p for p, c in enumerate(coeffs))

    def omega_at(self, E):
        return self._poly(self.omega, E)

    def Omega1_at(self, E):
        return self._poly(self.Omega1, E)

    def s(self, E, h):
        """The exponent itself through the h^1 term."""
        return (1j / h * self.omega_at(E) + self.Omega0 + h * self.Omega1_at(E)) / (2j * math.pi)

    def to_dict(self):
        enc = lambda c: None if c is None else [complex(c).real, complex(c).imag]
        return {"contour": self.contour, "index": self.index, "omega": [enc(c) for c in self.omega],
                "Omega0": enc(self.Omega0), "Omega1": [enc(c) for c in self.Omega1]}


def gamma_exponent(cp, E_order=2, *, prime=False):
    """Small-E coefficients of the loop exponent around ``cp`` (or of its partner loop when ``prime``).

    ``omega = -pi E / f'' + pi a_2 E^2 / 4``, ``Omega0 = -2 pi i`` and
    ``Omega1 = -i (pi/12) sum_{k>=2} b_{2k} E^{k-1} (2k-1)!!/(2k-4)!!``.
    The partner loop satisfies ``s + s' = -1``.
    """
    omega = [0.0, -math.pi / cp.curvature]
    if E_order >= 2:
        a2 = cp.a(2)
        omega.append(None if a2 is None else math.pi * a2 / 4)
    omega += [None] * max(0, E_order - 2)
    Omega1 = [0.0]
    for p in range(1, E_order + 1):
        k = p + 1
        b = cp.b(2 * k)
        Omega1.append(None if b is None else
                      -1j * math.pi / 12 * b * _double_factorial(2 * k - 1) / _double_factorial(2 * k - 4))
    omega, Omega1 = tuple(omega[:E_order + 1]), tuple(Omega1)
    if not prime:
        return MonodromyExponent("gamma", cp.index, omega, -2j * math.pi, Omega1)
    neg = lambda t: tuple(None if c is None else -c for c in t)
    return MonodromyExponent("gamma_prime", cp.index, neg(omega), 0j, neg(Omega1))


@dataclass(frozen=True)
class SigmaExponent:
    """``(DeltaS, Delta_y0, Delta_y1)`` at one value of E."""

    contour: str  # "sigma" (minimum) or "sigma_prime" (maximum)
    index: int
    E: complex
    eps: complex
    delta_S: complex
    delta_y0: complex
    delta_y1: complex
    route: str

    def to_dict(self):
        enc = lambda c: [complex(c).real, complex(c).imag]
        return {"contour": self.contour, "index": self.index, "E": enc(self.E), "eps": enc(self.eps),
                "delta_S": enc(self.delta_S), "delta_y0": enc(self.delta_y0), "delta_y1": enc(self.delta_y1),
                "route": self.route}


@dataclass(frozen=True)
class _SigmaLocal:
    """Local data entering the sigma expansions."""

    k: int
    A: float
    a: tuple  # a_0, a_1, a_2
    b0: float
    b2: float
    drop: float  # f(q_j) - f(q_j - eps)
    curv_eps: float  # f''(q_j - eps)
    first: complex
    second: complex


def _sigma_local(cp, f, eps):
    if f is None:
        raise AbstractDataInsufficient("sigma exponents need the trigonometric polynomial",
                                       operation="sigma_exponent", index=cp.index)
    if cp.a(2) is None or cp.b(2) is None:
        raise AbstractDataInsufficient("sigma exponents need a_2 and b_2", operation="sigma_exponent",
                                       index=cp.index)
    q = cp.location - eps
    return _SigmaLocal(
        k=_kind_sign(cp), A=float(-evaluate(f, q, 1)), a=(cp.a(0), cp.a(1), cp.a(2)), b0=cp.b(0), b2=cp.b(2),
        drop=float(cp.value - evaluate(f, q, 0)), curv_eps=float(evaluate(f, q, 2)),
        first=sum_a_series(cp, f, eps, "first"), second=sum_a_series(cp, f, eps, "second"))


def _arccosh_ratio(absA, E):
    return cmath.acosh(absA / cmath.sqrt(E))


def _special(record, E):
    """Evaluate a special-integral record at a possibly complex E."""
    val = sum(c * complex(E) ** float(p) for p, c in record.powers.items())
    if record.arccosh:
        val += record.arccosh * _arccosh_ratio(record.A, E)
    if record.log_E:
        val += record.log_E * cmath.log(E)
    return val


def sigma_exponent(cp, E, eps=DEFAULT_EPSILON, *, f, route="expansion"):
    """``DeltaS``, ``Delta_y0`` and ``Delta_y1`` along the contour leaving ``q_j - eps``.

    ``route="expansion"`` uses the small-E formulas built from the local
    coefficients (sums over a_j evaluated by quadrature); ``route="contour"``
    integrates the WKB integrands around the turning point directly.
    """
    if route == "contour":
        return _sigma_contour(cp, E, eps, f)
    if route != "expansion":
        raise ValueError(f"unknown route {route!r}")
    if E == 0:
        raise ExpansionDomain("E must be nonzero", operation="sigma_exponent", index=cp.index)
    loc = _sigma_local(cp, f, eps)
    A, (a0, a1, a2), k = loc.A, loc.a, loc.k
    if abs(E) > SIGMA_EXPANSION_LIMIT * A * A:
        raise ExpansionDomain("|E| / A^2 is too large for the small-E expansion", operation="sigma_exponent",
                              index=cp.index, ratio=abs(E) / (A * A))
    absA = abs(A)
    s0 = _special(special_integral("sinh2_cosh_power", 0, absA), E)
    s2 = _special(special_integral("sinh2_cosh_power", 2, absA), E)
    phi = (2 * (loc.drop - a0 * A ** 2 / 2 - a2 * A ** 4 / 4) - E * (loc.first - a2 * A ** 2 / 2)
           - E * E / 4 * (loc.second + a1 / A) - 2 * a0 * E * s0 - 2 * a2 * E * E * s2)
    dy0 = k * _arccosh_ratio(absA, E) - 0.5j * math.pi
    dy1 = k * (loc.b0 / (6 * E) - loc.b2 / 12 - loc.curv_eps / (2 * A * A))
    return SigmaExponent("sigma" if k > 0 else "sigma_prime", cp.index, complex(E), complex(eps), k * phi, dy0,
                         dy1, "expansion")


# ---- contour quadrature ----------------------------------------------------

def _wkb_integrands(f, q, p, E):
    """``i p``, ``y_0`` and ``y_1`` at points ``q`` for the given branch values ``p`` of sqrt(E - f'^2)."""
    d1, d2, d3 = (evaluate(f, q, n) for n in (1, 2, 3))
    w = E - d1 * d1
    y0 = d1 * d2 / (2 * w) - d2 / (2j * p)
    y1 = (-5 * d1 * d1 * d2 * d2 / (8j * p ** 5) - d1 * d2 * d2 / (2 * w * w) - d2 * d2 / (8j * p ** 3)
          - d1 * d3 / (4j * p ** 3) - d3 / (4 * w))
    return 1j * p, y0, y1


def _segment_nodes(za, zb, grade=None):
    """Gauss nodes on za -> zb, with panels halving toward zb down to the length ``grade``."""
    length = abs(zb - za)
    if grade is None:
        cuts = np.linspace(0.0, 1.0, 9)
    else:
        cuts, d = [0.0, 1.0], grade / length
        while d < 1.0:
            cuts.append(1.0 - d)
            d *= 2.0
        cuts = np.array(sorted(set(cuts)))
    nodes, weights = [], []
    for t0, t1 in zip(cuts[:-1], cuts[1:]):
        t = 0.5 * (t1 - t0) * _GL_X + 0.5 * (t1 + t0)
        nodes.append(za + t * (zb - za))
        weights.append(0.5 * (t1 - t0) * _GL_W * (zb - za))
    return np.concatenate(nodes), np.concatenate(weights)


def _arc_nodes(center, radius, th0, th1, panels=32):
    cuts = np.linspace(th0, th1, panels + 1)
    nodes, weights = [], []
    for t0, t1 in zip(cuts[:-1], cuts[1:]):
        t = 0.5 * (t1 - t0) * _GL_X + 0.5 * (t1 + t0)
        z = center + radius * np.exp(1j * t)
        nodes.append(z)
        weights.append(0.5 * (t1 - t0) * _GL_W * 1j * (z - center))
    return np.concatenate(nodes), np.concatenate(weights)


def _continued_sqrt(w, start):
    """Square roots of the samples ``w`` along a path, continuous from the value ``start``."""
    roots = np.sqrt(np.asarray(w, dtype=complex))
    out = np.empty_like(roots)
    prev = start
    for i, r in enumerate(roots):
        if abs(r - prev) > abs(r + prev):
            r = -r
        out[i] = prev = r
    return out


def turning_points(f, cp, E):
    """The two real zeros of ``E - f'^2`` next to the critical point, left one first."""
    from scipy.optimize import brentq

    if not (isinstance(E, (int, float)) and E > 0):
        raise UnsupportedCase("contour quadrature needs real positive E", operation="turning_points")
    qc, s = cp.location, math.sqrt(E)
    reach = min(0.2, 40 * s / abs(cp.curvature))
    slope = lambda q: float(evaluate(f, q, 1))
    sign = 1.0 if cp.is_minimum else -1.0
    try:
        left = brentq(lambda q: slope(q) + sign * s, qc - reach, qc)
        right = brentq(lambda q: slope(q) - sign * s, qc, qc + reach)
    except ValueError as exc:
        raise ExpansionDomain("turning points not isolated near the critical point", operation="turning_points",
                              index=cp.index) from exc
    return left, right


def _sigma_contour(cp, E, eps, f):
    if f is None:
        raise AbstractDataInsufficient("contour quadrature needs the trigonometric polynomial",
                                       operation="sigma_exponent", index=cp.index)
    eps = float(eps)
    left, right = turning_points(f, cp, E)
    start = cp.location - eps
    if not start < left:
        raise ExpansionDomain("the base point lies inside the turning-point gap", operation="sigma_exponent",
                              index=cp.index)
    delta = 0.5 * min(right - left, left - start)
    z1, w1 = _segment_nodes(start, left - delta, grade=delta)
    z2, w2 = _arc_nodes(left, delta, math.pi, 3 * math.pi)
    z = np.concatenate([z1, z2, z1[::-1]])
    w = np.concatenate([w1, w2, -w1[::-1]])
    d1 = complex(evaluate(f, start, 1))
    k = _kind_sign(cp)
    # first-sheet start (i p -> f') at a minimum, second-sheet start (i p -> -f') at a maximum
    p0 = -1j * k * d1 * cmath.sqrt(1 - E / d1 ** 2)
    p = _continued_sqrt(E - evaluate(f, z, 1) ** 2, p0)
    dS, dy0, dy1 = (complex(np.dot(w, x)) for x in _wkb_integrands(f, z, p, E))
    return SigmaExponent("sigma" if k > 0 else "sigma_prime", cp.index, complex(E), complex(eps), dS, dy0, dy1,
                         "contour")


def gamma_contour(f, cp, E, radius=None):
    """``(omega, Omega0, Omega1)`` at one E by quadrature on a circle enclosing both turning points."""
    left, right = turning_points(f, cp, E)
    spread = max(cp.location - left, right - cp.location)
    radius = radius or 0.02
    if radius < 3 * spread:
        raise ExpansionDomain("E too large for the loop radius", operation="gamma_contour", index=cp.index)
    z, w = _arc_nodes(cp.location, radius, 0.0, 2 * math.pi, panels=64)
    d1 = complex(evaluate(f, z[0], 1))
    p = _continued_sqrt(E - evaluate(f, z, 1) ** 2, -1j * d1 * cmath.sqrt(1 - E / d1 ** 2))
    _, y0, y1 = _wkb_integrands(f, z, p, E)
    return complex(np.dot(w, p)), complex(np.dot(w, y0)), complex(np.dot(w, y1))


# ---- reduced connection data -------------------------------------------------

@dataclass(frozen=True)
class ReducedConnectionData:
    """Theta_{-1}, Theta_0, Theta_1 of the reduced connection coefficient at one critical point.

    The reduced coefficient is the connection coefficient divided by the
    Gamma-function factor built from the loop exponent; with
    ``W = -k omega / 2 pi`` and ``beta = Omega1 / (2 pi i)``

    * ``Theta_{-1} = DeltaS + k (omega/2pi - (omega/2pi) Ln W)``
    * ``Theta_0 = Delta_y0 + (k/2) Ln W``
    * ``Theta_1 = Delta_y1 - k (pi / (6 omega) + beta Ln W)``.
    """

    cp: object
    eps: float
    f: object
    route: str = "contour"

    @property
    def k(self):
        return _kind_sign(self.cp)

    def _pieces(self, E):
        sig = sigma_exponent(self.cp, E, self.eps, f=self.f, route=self.route)
        if self.route == "contour":
            omega, _, Omega1 = gamma_contour(self.f, self.cp, E, radius=min(abs(self.eps), 0.02))
            omega = omega.real if isinstance(E, float) else omega
        else:
            ge = gamma_exponent(self.cp, 2)
            omega = ge.omega_at(E)
            try:
                Omega1 = ge.Omega1_at(E)
            except AbstractDataInsufficient:
                Omega1 = 0.0
        return sig, omega, Omega1 / (2j * math.pi)

    def values(self, E):
        """(Theta_{-1}, Theta_0, Theta_1) at E."""
        sig, omega, beta = self._pieces(E)
        k = self.k
        W = -k * omega / (2 * math.pi)
        LW = cmath.log(W)
        t_m1 = sig.delta_S + k * (omega / (2 * math.pi) - omega / (2 * math.pi) * LW)
        t_0 = sig.delta_y0 + 0.5 * k * LW
        t_1 = sig.delta_y1 - k * (math.pi / (6 * omega) + beta * LW)
        return t_m1, t_0, t_1

    def limits(self):
        """The E -> 0 values of (Theta_{-1}, Theta_0, Theta_1)."""
        cp, f, k = self.cp, self.f, self.k
        q = cp.location - self.eps
        A = float(-evaluate(f, q, 1))
        drop = float(cp.value - evaluate(f, q, 0))
        t_m1 = 2 * k * drop
        t_0 = k * (math.log(2 * abs(A)) + 0.5 * math.log(1 / (2 * abs(cp.curvature)))) - 0.5j * math.pi
        t_1 = k * (-cp.b(2) / 12 - float(evaluate(f, q, 2)) / (2 * A * A) + cp.a(2) * cp.curvature ** 2 / 24)
        return t_m1, t_0, t_1


def theta(cp, eps=DEFAULT_EPSILON, *, f, route="contour"):
    """Reduced connection data at ``cp``; see :class:`ReducedConnectionData`."""
    if route not in ("contour", "expansion"):
        raise ValueError(f"unknown route {route!r}")
    return ReducedConnectionData(cp, float(eps), f, route)
