"""Finite transseries in the symbols e^{c/h}, E_r, h and ln h.

A :class:`TransSeries` is a finite sum of monomials

    coeff * exp(c/h) * E_r**m * h**k * ln(h)**l

with complex coefficients, real exponential rates ``c``, integer powers
``m`` of the reduced energy (negative powers occur once a series that is
proportional to E_r gets inverted), half-integer powers ``k`` of h and
non-negative powers ``l`` of ln h.

Values are immutable.  Every arithmetic result is canonicalized (zero
coefficients pruned, exponents snapped to a fixed grid so that rates computed
along different routes compare equal) and truncated according to a
:class:`TruncationPolicy`.

Dominance order
---------------
``h -> 0+`` with ``E_r`` an exponentially small unknown.  Monomials are
ranked by ``c`` descending, then ``k`` ascending, then ``l`` descending
(``h ln h`` dominates ``h``), then ``m`` ascending.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, NamedTuple

import numpy as np

from .errors import (
    EmptySeries,
    LogLeading,
    NonInvertibleLeading,
    NotInfinitesimal,
    SubstitutionNotSmall,
)

#: exponential rates are snapped to this many decimals
C_DIGITS = 10
#: relative tolerance used when pruning cancelled coefficients
PRUNE_RTOL = 1e-12
_MAX_SERIES_STEPS = 512
#: products with more term pairs than this use the vectorized kernel
_VECTOR_MIN_PAIRS = 4096
_C_SCALE = 10 ** C_DIGITS


def snap_c(c):
    v = round(float(c), C_DIGITS)
    return 0.0 if v == 0 else v


def _as_half(k):
    """Return ``2k`` as an int, rejecting anything finer than halves."""
    frac = Fraction(k).limit_denominator(1000) if isinstance(k, float) else Fraction(k)
    twice = frac * 2
    if twice.denominator != 1:
        raise ValueError(f"h-power {k!r} is not a multiple of 1/2")
    return int(twice)


class Monomial(NamedTuple):
    c: float
    m: int
    k: Fraction
    l: int
    coeff: complex

    def key(self):
        return (self.c, self.m, _as_half(self.k), self.l)


def dominance_key(key):
    """Sort key putting the dominant monomial first."""
    c, m, kk, l = key
    return (-c, kk, -l, m)


@dataclass(frozen=True)
class TruncationPolicy:
    """Bounds applied after every operation.

    ``window`` discards monomials whose rate lies more than ``window`` below
    the leading rate of the same series.
    """

    window: float = 4.0
    max_m: int = 4
    max_k: Fraction = field(default=Fraction(2))
    max_l: int = 2

    def __post_init__(self):
        if not self.window > 0:
            raise ValueError("truncation window must be positive")
        object.__setattr__(self, "max_k", Fraction(self.max_k))

    def intersect(self, other):
        if other is None or other is self:
            return self
        return TruncationPolicy(
            window=min(self.window, other.window),
            max_m=min(self.max_m, other.max_m),
            max_k=min(self.max_k, other.max_k),
            max_l=min(self.max_l, other.max_l),
        )

    def loosened(self, dm=1, dk=1, dl=1, window_factor=1.25):
        return TruncationPolicy(
            window=self.window * window_factor,
            max_m=self.max_m + dm,
            max_k=self.max_k + dk,
            max_l=self.max_l + dl,
        )

    def widened(self, dm=0, dk=0):
        return replace(self, max_m=self.max_m + max(dm, 0), max_k=self.max_k + max(dk, 0))

    @property
    def max_kk(self):
        return int(self.max_k * 2)


DEFAULT_POLICY = TruncationPolicy()


class TransSeries:
    """Immutable finite transseries; see the module docstring."""

    __slots__ = ("_terms", "policy")

    def __init__(self, terms=None, policy=None, *, _floor=None, _trusted=False):
        self.policy = policy or DEFAULT_POLICY
        if _trusted:
            self._terms = terms
            return
        raw = {}
        if terms:
            items = terms.items() if isinstance(terms, dict) else (
                (mono.key(), mono.coeff) for mono in terms)
            for (c, m, kk, l), v in items:
                if v == 0:
                    continue
                key = (snap_c(c), int(m), int(kk), int(l))
                raw[key] = raw.get(key, 0) + complex(v)
        self._terms = _truncate(raw, self.policy, _floor)

    # ------------------------------------------------------------ builders
    @classmethod
    def monomial(cls, coeff=1.0, c=0.0, m=0, k=0, l=0, policy=None):
        return cls({(c, m, _as_half(k), l): coeff}, policy)

    @classmethod
    def constant(cls, value, policy=None):
        return cls({(0.0, 0, 0, 0): value}, policy)

    @classmethod
    def zero(cls, policy=None):
        return cls({}, policy)

    @classmethod
    def Er(cls, policy=None):
        return cls.monomial(1.0, m=1, policy=policy)

    # ---------------------------------------------------------- inspection
    @property
    def terms(self):
        return dict(self._terms)

    def __len__(self):
        return len(self._terms)

    def __bool__(self):
        return bool(self._terms)

    def is_zero(self):
        return not self._terms

    def monomials(self):
        """All monomials, dominant first."""
        return [Monomial(c, m, Fraction(kk, 2), l, v)
                for (c, m, kk, l), v in sorted(self._terms.items(), key=lambda kv: dominance_key(kv[0]))]

    def coefficient(self, c=0.0, m=0, k=0, l=0, *, c_tol=1e-8):
        """Coefficient of the monomial (c, m, k, l); rates within ``c_tol`` count as equal."""
        kk = _as_half(k)
        hit = self._terms.get((snap_c(c), m, kk, l))
        if hit is not None:
            return hit
        for (cc, mm, kq, lq), v in self._terms.items():
            if mm == m and kq == kk and lq == l and abs(cc - c) <= c_tol:
                return v
        return 0j

    def max_abs(self):
        return max((abs(v) for v in self._terms.values()), default=0.0)

    def leading(self):
        if not self._terms:
            raise EmptySeries("leading monomial of an empty series", operation="leading")
        key = min(self._terms, key=dominance_key)
        c, m, kk, l = key
        return Monomial(c, m, Fraction(kk, 2), l, self._terms[key])

    def exponential_type(self):
        return self.leading().c

    def m_values(self):
        return sorted({key[1] for key in self._terms})

    def column(self, m):
        """The E_r**m coefficient as an E_r-free series."""
        return TransSeries({(c, 0, kk, l): v for (c, mm, kk, l), v in self._terms.items() if mm == m},
                           self.policy, _floor=-math.inf)

    def bucket(self, c, m=0):
        """The (h, ln h) series multiplying exp(c/h) E_r**m, returned with c = 0."""
        c = snap_c(c)
        return TransSeries({(0.0, 0, kk, l): v for (cc, mm, kk, l), v in self._terms.items()
                            if cc == c and mm == m}, self.policy, _floor=-math.inf)

    def rates(self, m=None):
        return sorted({key[0] for key in self._terms if m is None or key[1] == m}, reverse=True)

    def with_policy(self, policy):
        return TransSeries(dict(self._terms), policy)

    def truncate(self, policy=None):
        return TransSeries(dict(self._terms), policy or self.policy)

    # ----------------------------------------------------------- arithmetic
    def _coerce(self, other):
        if isinstance(other, TransSeries):
            return other
        if isinstance(other, (int, float, complex)):
            return TransSeries.constant(other, self.policy)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        policy = self.policy.intersect(other.policy)
        out = dict(self._terms)
        mags = {}
        for key, v in other._terms.items():
            if key in out:
                mags[key] = max(abs(out[key]), abs(v))
                out[key] = out[key] + v
            else:
                out[key] = v
        return TransSeries(_prune(out, mags), policy)

    __radd__ = __add__

    def __neg__(self):
        return TransSeries({k: -v for k, v in self._terms.items()}, self.policy, _trusted=True)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, factor):
        factor = complex(factor)
        if factor == 0:
            return TransSeries.zero(self.policy)
        return TransSeries({k: v * factor for k, v in self._terms.items()}, self.policy, _trusted=True)

    def __mul__(self, other):
        if isinstance(other, (int, float, complex)):
            return self.scale(other)
        if not isinstance(other, TransSeries):
            return NotImplemented
        return self._mul(other, self.policy.intersect(other.policy))

    __rmul__ = __mul__

    def _mul(self, other, policy, floor=None):
        a, b = self._terms, other._terms
        if not a or not b:
            return TransSeries.zero(policy)
        lead = max(k[0] for k in a) + max(k[0] for k in b)
        cmin = (lead - policy.window if floor is None else floor) - 1e-9
        if len(a) * len(b) >= _VECTOR_MIN_PAIRS:
            out, mags = _mul_vectorized(a, b, cmin, policy)
        else:
            out, mags = _mul_pairs(a, b, cmin, policy)
        return TransSeries(_prune(out, mags), policy, _floor=floor)

    def __truediv__(self, other):
        if isinstance(other, (int, float, complex)):
            return self.scale(1.0 / complex(other))
        return self * other.invert()

    def __rtruediv__(self, other):
        return self.invert() * other

    def __pow__(self, n):
        if not isinstance(n, int):
            raise TypeError("only integer powers are supported")
        if n < 0:
            return self.invert() ** (-n)
        result = TransSeries.constant(1.0, self.policy)
        base = self
        while n:
            if n & 1:
                result = result * base
            n >>= 1
            if n:
                base = base * base
        return result

    # ---------------------------------------------------- analytic functions
    def invert(self):
        """Multiplicative inverse by a geometric series around the pivot."""
        if not self._terms:
            raise NonInvertibleLeading("cannot invert an empty series", operation="invert")
        pc, pm, pkk = _pivot(self._terms)
        for (c, m, kk, l), v in self._terms.items():
            if (c, m, kk) == (pc, pm, pkk) and l > 0:
                raise LogLeading("leading coefficient depends on ln h", operation="invert")
        pv = self._terms.get((pc, pm, pkk, 0), 0)
        if abs(pv) < 1e-300:
            raise NonInvertibleLeading("leading coefficient is zero", operation="invert")
        inner = self.policy.widened(dm=abs(pm), dk=abs(pkk) // 2 + 1)
        pinv = TransSeries({(-pc, -pm, -pkk, 0): 1.0 / pv}, inner)
        x = self.with_policy(inner)._mul(pinv, inner, floor=-inner.window) - 1.0
        _require_infinitesimal(x, "invert")
        total = TransSeries(_graded_inverse(x._terms, inner, -inner.window), inner, _floor=-inner.window)
        return total._mul(pinv, inner, floor=-pc - self.policy.window).truncate(self.policy)

    def exp_small(self):
        """exp(x) for an infinitesimal x, summed to the truncation bounds."""
        _require_infinitesimal(self, "exp_small")
        return _series_sum(self, self.policy, lambda n: 1.0 / math.factorial(n))

    # --------------------------------------------------------- substitution
    def substitute_Er(self, v):
        """Replace E_r by an exponentially small, E_r-free series ``v``."""
        if any(key[1] != 0 for key in v._terms) or any(key[0] >= 0 for key in v._terms):
            raise SubstitutionNotSmall("E_r can only be replaced by an exponentially small E_r-free series",
                                       operation="substitute_Er")
        if not v._terms:
            return self.column(0).truncate(self.policy)
        return self._compose(v)

    def rescale_Er(self, t, r):
        """Substitute ``E_r -> exp(-t/h) (r + E_r)``.

        ``r`` is an E_r-free series led by a nonzero constant; the new E_r
        stands for the remaining correction.  Used by the Newton polygon
        iteration.
        """
        shift = TransSeries.monomial(1.0, c=-t, policy=self.policy)
        y = (r.with_policy(self.policy) + TransSeries.Er(self.policy)) * shift
        return self._compose(y)

    def _compose(self, y):
        policy = self.policy
        ms = self.m_values()
        if not ms:
            return TransSeries.zero(policy)
        result = TransSeries.zero(policy)
        pos = TransSeries.constant(1.0, policy)
        current = 0
        for m in [m for m in ms if m >= 0]:
            while current < m:
                pos = pos * y
                current += 1
            result = result + self.column(m) * pos
        neg_ms = [m for m in ms if m < 0]
        if neg_ms:
            yinv = y.invert()
            pw = TransSeries.constant(1.0, policy)
            current = 0
            for m in sorted(neg_ms, reverse=True):
                while current > m:
                    pw = pw * yinv
                    current -= 1
                result = result + self.column(m) * pw
        return result

    # ------------------------------------------------------------- numerics
    def evaluate(self, h, Er=0.0):
        """Numerical value at a given h > 0 and E_r (no resummation)."""
        lh = math.log(h)
        total = 0j
        for (c, m, kk, l), v in self._terms.items():
            if m and Er == 0:
                continue
            total += v * cmath.exp(c / h) * (Er ** m if m else 1) * h ** (kk / 2) * lh ** l
        return total

    def allclose(self, other, rtol=1e-10, atol=0.0):
        other = self._coerce(other)
        keys = set(self._terms) | set(other._terms)
        scale = max(self.max_abs(), other.max_abs(), 1e-300)
        return all(abs(self._terms.get(k, 0) - other._terms.get(k, 0)) <= atol + rtol * scale for k in keys)

    def map_coefficients(self, fn):
        return TransSeries({k: fn(v) for k, v in self._terms.items()}, self.policy)

    # --------------------------------------------------------- serialization
    def to_records(self):
        return [
            {"c": mono.c, "m": mono.m, "k": f"{mono.k.numerator}/{mono.k.denominator}", "l": mono.l,
             "re": mono.coeff.real, "im": mono.coeff.imag}
            for mono in self.monomials()
        ]

    @classmethod
    def from_records(cls, records, policy=None):
        terms = {}
        for rec in records:
            k = Fraction(rec["k"])
            terms[(float(rec["c"]), int(rec["m"]), _as_half(k), int(rec["l"]))] = complex(rec["re"], rec["im"])
        return cls(terms, policy)

    def __repr__(self):
        if not self._terms:
            return "TransSeries(0)"
        parts = []
        for mono in self.monomials()[:8]:
            sym = []
            if mono.c:
                sym.append(f"e^({mono.c:.6g}/h)")
            if mono.m:
                sym.append(f"Er^{mono.m}")
            if mono.k:
                sym.append(f"h^{mono.k}")
            if mono.l:
                sym.append(f"ln(h)^{mono.l}")
            parts.append(f"({mono.coeff:.6g})" + ("*" + "*".join(sym) if sym else ""))
        more = " + ..." if len(self._terms) > 8 else ""
        return "TransSeries(" + " + ".join(parts) + more + ")"

    def __eq__(self, other):
        if not isinstance(other, TransSeries):
            return NotImplemented
        return self._terms == other._terms

    __hash__ = None


# ------------------------------------------------------------------ helpers

def _mul_pairs(a, b, cmin, policy):
    max_m, max_kk, max_l = policy.max_m, policy.max_kk, policy.max_l
    out = {}
    mags = {}
    get = out.get
    mag = mags.get
    bitems = list(b.items())
    for (c1, m1, k1, l1), v1 in a.items():
        for (c2, m2, k2, l2), v2 in bitems:
            c = c1 + c2
            if c < cmin:
                continue
            m = m1 + m2
            kk = k1 + k2
            l = l1 + l2
            if m > max_m or kk > max_kk or l > max_l:
                continue
            key = (snap_c(c), m, kk, l)
            prod = v1 * v2
            out[key] = get(key, 0) + prod
            a_ = abs(prod)
            if a_ > mag(key, 0.0):
                mags[key] = a_
    return out, mags


def _as_arrays(terms):
    keys = np.array(list(terms.keys()), dtype=float).reshape(-1, 4)
    vals = np.fromiter(terms.values(), dtype=complex, count=len(terms))
    return np.rint(keys[:, 0] * _C_SCALE).astype(np.int64), keys[:, 1:].astype(np.int64), vals


def _mul_vectorized(a, b, cmin, policy):
    """Same result as :func:`_mul_pairs`, with the pair loop done by numpy on integer-encoded rates."""
    ca, ia, va = _as_arrays(a)
    cb, ib, vb = _as_arrays(b)
    c = ca[:, None] + cb[None, :]
    m = ia[:, 0][:, None] + ib[:, 0][None, :]
    kk = ia[:, 1][:, None] + ib[:, 1][None, :]
    l = ia[:, 2][:, None] + ib[:, 2][None, :]
    keep = ((c >= math.ceil(cmin * _C_SCALE)) & (m <= policy.max_m) & (kk <= policy.max_kk)
            & (l <= policy.max_l))
    if not keep.any():
        return {}, {}
    c, m, kk, l = c[keep], m[keep], kk[keep], l[keep]
    prod = (va[:, None] * vb[None, :])[keep]
    order = np.lexsort((l, kk, m, c))
    c, m, kk, l, prod = c[order], m[order], kk[order], l[order], prod[order]
    new = np.ones(len(c), dtype=bool)
    new[1:] = (c[1:] != c[:-1]) | (m[1:] != m[:-1]) | (kk[1:] != kk[:-1]) | (l[1:] != l[:-1])
    starts = np.flatnonzero(new)
    sums = np.add.reduceat(prod, starts)
    peaks = np.maximum.reduceat(np.abs(prod), starts)
    out, mags = {}, {}
    for i, s0 in enumerate(starts):
        key = (snap_c(c[s0] / _C_SCALE), int(m[s0]), int(kk[s0]), int(l[s0]))
        out[key] = complex(sums[i])
        mags[key] = float(peaks[i])
    return out, mags


def _prune(terms, mags):
    """Drop sums that cancelled to rounding level relative to their own largest contribution."""
    return {k: v for k, v in terms.items() if k not in mags or abs(v) > PRUNE_RTOL * mags[k]}


def _truncate(terms, policy, floor=None):
    if not terms:
        return {}
    if floor is None:
        floor = max(k[0] for k in terms) - policy.window
    cmin = floor - 1e-9
    max_m, max_kk, max_l = policy.max_m, policy.max_kk, policy.max_l
    return {key: v for key, v in terms.items()
            if v != 0 and key[0] >= cmin and key[1] <= max_m and key[2] <= max_kk and key[3] <= max_l}


def _pivot(terms):
    pc = max(k[0] for k in terms)
    pm = min(k[1] for k in terms if k[0] == pc)
    pkk = min(k[2] for k in terms if k[0] == pc and k[1] == pm)
    return pc, pm, pkk


def is_infinitesimal_key(key):
    c, m, kk, _ = key
    if c < 0:
        return m >= 0
    if c > 0:
        return False
    return m > 0 or (m == 0 and kk > 0)


def _require_infinitesimal(x, operation):
    bad = [key for key in x._terms if not is_infinitesimal_key(key)]
    if bad:
        raise NotInfinitesimal(f"series has {len(bad)} non-infinitesimal monomials", operation=operation)


def _graded_inverse(x, policy, floor):
    """Coefficients of 1 / (1 + x) for infinitesimal ``x``, solved one monomial at a time.

    Keys are processed in the order (-c, m, kk, l), in which every
    infinitesimal monomial is strictly positive, so ``y_K = -sum x_J y_{K-J}``
    only uses coefficients already known.  Unlike summing the geometric
    series this never forms large alternating partial sums.
    """
    xs = list(x.items())
    one = (0.0, 0, 0, 0)
    cmin = floor - 1e-9
    keys, frontier = {one}, {one}
    while frontier:
        new = set()
        for k in frontier:
            for j, _ in xs:
                s = (snap_c(k[0] + j[0]), k[1] + j[1], k[2] + j[2], k[3] + j[3])
                if (s[0] >= cmin and s[1] <= policy.max_m and s[2] <= policy.max_kk and s[3] <= policy.max_l
                        and s not in keys):
                    new.add(s)
        keys |= new
        frontier = new
    y = {}
    for key in sorted(keys, key=lambda k: (-k[0], k[1], k[2], k[3])):
        if key == one:
            y[key] = 1.0 + 0j
            continue
        acc = 0j
        for j, v in xs:
            w = y.get((snap_c(key[0] - j[0]), key[1] - j[1], key[2] - j[2], key[3] - j[3]))
            if w is not None:
                acc += v * w
        if acc != 0:
            y[key] = -acc
    return y


def _series_sum(x, policy, weight):
    """sum_n weight(n) x**n with an absolute rate floor at -window."""
    floor = -policy.window
    total = TransSeries.constant(1.0, policy)
    power = TransSeries.constant(1.0, policy)
    for n in range(1, _MAX_SERIES_STEPS):
        power = power._mul(x, policy, floor=floor)
        if not power:
            return total
        total = total + power.scale(weight(n))
    raise NotInfinitesimal("series expansion did not terminate within the truncation bounds",
                           operation="series_sum")


def rate_scale_label(c, unit=1.0 / (8.0 * math.pi), max_den=1):
    """Express a rate as an integer multiple of ``unit`` when it is one."""
    q = c / unit
    r = round(q)
    if abs(q - r) < 1e-7:
        return int(r)
    return None
