"""Eigenfunction coefficients on each interval between critical points.

Starting from a kernel vector of ``G_0 - (1 + E_r kappa)^{-1} Id`` the pair
``(Z_+, Z_-)`` is carried across every critical point, then rescaled to the
tilde basis.  Periodicity closes the chain and gives a self-check.

For an exponentially small solution every ingredient is first evaluated at
E_r(h).  For the E_r = 0 branch tau^{-1} is singular, so the chain is run
with E_r kept symbolic and the E_r -> 0 limit is taken at the end.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace

from .errors import CancellationBelowDepth, InputFormatError, ZeroKernel
from .quantize import build_G0, g0_product
from .transseries import TransSeries

#: relative size of a sum below which its operands count as cancelling
NEAR_CANCEL_RTOL = 1e-9
#: window enlargement used when E_r is kept symbolic
SYMBOLIC_WINDOW_FACTOR = 3.0
#: a closure difference counts as zero when it is this small relative to both sides
CLOSURE_RTOL = 1e-8


def _difference(a, b, rtol=CLOSURE_RTOL):
    """``a - b`` with coefficients that agree to ``rtol`` (relative to the larger side) removed."""
    ta, tb = a.terms, b.terms
    out = {}
    for key in set(ta) | set(tb):
        x, y = ta.get(key, 0), tb.get(key, 0)
        if abs(x - y) > rtol * max(abs(x), abs(y)):
            out[key] = x - y
    return TransSeries(out, a.policy)


class _Evaluation:
    """Ingredients at a fixed solution, or symbolic in E_r for the zero branch."""

    def __init__(self, ing, tm, Er):
        self.symbolic = Er is None or Er.is_zero()
        if self.symbolic:
            # columns of high E_r degree carry large positive rates that vanish at E_r = 0; a wider
            # window keeps the E_r^0 terms they would otherwise crowd out
            ing = ing.with_policy(replace(ing.policy, window=ing.policy.window * SYMBOLIC_WINDOW_FACTOR))
            tm = build_G0(ing)
        self.ing = ing
        self.tm = tm
        self.Er = Er
        self._cache = {}

    def _sub(self, x):
        return x if self.symbolic else x.substitute_Er(self.Er)

    def get(self, name):
        if name not in self._cache:
            self._cache[name] = self._compute(name)
        return self._cache[name]

    def _compute(self, name):
        ing = self.ing
        if name == "opk":
            return self._sub(ing.opk)
        if name == "opkinv":
            return self.get("opk").invert() if not self.symbolic else ing.opk.invert()
        kind, j = re.fullmatch(r"(mu|tau|tauinv)(\d+)", name).groups()
        j = int(j)
        if kind == "mu":
            return self._sub(ing.mu_(j))
        if kind == "tau":
            return self._sub(ing.tau_(j))
        return self.get(f"tau{j}").invert()

    def G0(self, i, j):
        if self.symbolic:
            return self.tm.entry(i, j)
        if "G0" not in self._cache:
            # rebuilt from the evaluated ingredients so that algebraically equal products stay equal
            # after truncation
            self._cache["G0"], _ = g0_product(self.ing.n, lambda k: self.get(f"mu{k}"),
                                              lambda k: self.get(f"tau{k}"), lambda k: self.get(f"tauinv{k}"),
                                              TransSeries.constant(1.0, self.ing.policy))
        return self._cache["G0"][i - 1][j - 1]

    def finish(self, x):
        return x.column(0) if self.symbolic else x

    def with_scaled_tau(self, j, factor):
        """Copy in which tau_j (and its inverse) is multiplied by ``factor``; used as a negative control."""
        other = _Evaluation.__new__(_Evaluation)
        other.symbolic, other.ing, other.tm, other.Er = self.symbolic, self.ing, self.tm, self.Er
        other._cache = {k: v for k, v in self._cache.items() if k != "G0"}
        other._cache[f"tau{j}"] = self.get(f"tau{j}").scale(factor)
        other._cache[f"tauinv{j}"] = self.get(f"tauinv{j}").scale(1.0 / factor)
        return other


def parse_normalization(spec, n):
    """Parse ``"minus"``, ``"plus"``, ``"dominant"`` or a product like ``"tau3^-1*tau4*mu3"``."""
    if spec in ("minus", "plus", "dominant"):
        return spec
    factors = []
    for tok in spec.replace(" ", "").split("*"):
        m = re.fullmatch(r"(mu|tau)(\d+)(?:\^(-?\d+))?", tok)
        if not m or not 1 <= int(m.group(2)) <= 2 * n:
            raise InputFormatError(f"cannot parse normalization factor {tok!r}", operation="parse_normalization")
        factors.append((m.group(1), int(m.group(2)), int(m.group(3) or 1)))
    return factors


def _factor_product(ev, factors):
    out = TransSeries.constant(1.0, ev.ing.policy)
    for kind, j, p in factors:
        base = ev.get(f"{kind}{j}")
        if p < 0:
            base = base.invert() if kind == "mu" else ev.get(f"tauinv{j}") if kind == "tau" else base
            p = -p
        for _ in range(p):
            out = out * base
    return out


@dataclass
class CancellationEvent:
    step: int
    component: str
    operand_type: float
    result_type: float | None

    def to_dict(self):
        return {"step": self.step, "component": self.component, "operand_type": self.operand_type,
                "result_type": self.result_type}


def _tracked_sum(a, b, step, component, log, finish):
    """a + b, logging any drop of exponential type caused by cancellation."""
    total = a + b
    ops = [finish(x) for x in (a, b)]
    ops = [x for x in ops if x]
    if not ops:
        return total
    top = max(x.exponential_type() for x in ops)
    res = finish(total)
    if not res:
        log.append(CancellationEvent(step, component, top, None))
        raise CancellationBelowDepth("component cancels to below the truncation window; deepen the truncation",
                                     operation="propagate", step=step, component=component)
    rt = res.exponential_type()
    scale = max(x.max_abs() for x in ops)
    if rt < top - 1e-9 or res.leading().coeff and abs(res.leading().coeff) < NEAR_CANCEL_RTOL * scale and rt == top:
        log.append(CancellationEvent(step, component, top, rt))
    return total


@dataclass
class EigenfunctionTable:
    Z: list  # 2n + 1 pairs (Z_+, Z_-), j = 0..2n
    Dtilde: list  # 2n pairs for intervals j = 1..2n
    normalization: object
    cancellations: list = field(default_factory=list)
    symbolic: bool = False

    @property
    def n(self):
        return len(self.Dtilde) // 2

    def leading(self, j, sign):
        x = self.Dtilde[j - 1][0 if sign > 0 else 1]
        return x.leading() if x else None

    def to_records(self):
        out = []
        for j, (dp, dm) in enumerate(self.Dtilde, start=1):
            rec = {"interval": j, "D_plus": dp.to_records(), "D_minus": dm.to_records()}
            for key, x in (("leading_plus", dp), ("leading_minus", dm)):
                if x:
                    lead = x.leading()
                    rec[key] = {"c": lead.c, "k": str(lead.k), "l": lead.l,
                                "coeff": [lead.coeff.real, lead.coeff.imag]}
                else:
                    rec[key] = None
            out.append(rec)
        return out


def kernel_vector(tm, ing, Er, normalization="minus", *, _ev=None):
    """lambda * ([G_0]_12, -([G_0]_11 - (1 + E_r kappa)^{-1})) at the solution ``Er``.

    On the E_r = 0 branch the first row of ``G_0 - Id`` can vanish
    identically; the second row, ``([G_0]_22 - 1, -[G_0]_21)``, then gives
    the kernel.
    """
    ev = _ev or _Evaluation(ing, tm, Er)
    plus = ev.G0(1, 2)
    minus = -(ev.G0(1, 1) - ev.get("opkinv"))
    if ev.symbolic and not ev.finish(plus) and not ev.finish(minus):
        # the first row of G_0 - Id vanishes at E_r = 0; the kernel there is fixed by the second row
        plus = ev.G0(2, 2) - ev.get("opkinv")
        minus = -ev.G0(2, 1)
    fp, fm = ev.finish(plus), ev.finish(minus)
    if not fp and not fm:
        raise ZeroKernel("both kernel entries vanish; the energy is not a solution", operation="kernel_vector")
    norm = parse_normalization(normalization, ing.n)
    if norm == "minus":
        if not fm:
            norm = "plus"
        else:
            lam = TransSeries.monomial(-1.0 / fm.leading().coeff, c=-fm.leading().c, k=-fm.leading().k,
                                       policy=ev.ing.policy)
    if norm in ("plus", "dominant"):
        lead = fp.leading() if fp else fm.leading()
        lam = TransSeries.monomial(1.0 / lead.coeff, c=-lead.c, k=-lead.k, policy=ev.ing.policy)
    elif isinstance(norm, list):
        lam = _factor_product(ev, norm)
        lam = ev.finish(lam).invert() if not ev.symbolic else lam.invert()
    return plus * lam, minus * lam


def propagate(Z0, ing, tm=None, Er=None, *, _ev=None, log=None):
    """Z^{(1)}, ..., Z^{(2n)} from Z^{(0)} by alternating minimum and maximum steps.

    Odd step j: (tau_{j-1} Z_+ + mu_j Z_-, tau_{j-1} Z_+ + Z_-), with the tau
    factor absent for j = 1.  Even step j: (tau_{j-1}^{-1} Z_+ + Z_-,
    mu_j tau_{j-1}^{-1} Z_+ + Z_-).  The composition over one period is then
    exactly G_0 up to the closing diag(tau_{2n}, 1).
    """
    ev = _ev or _Evaluation(ing, tm, Er)
    log = [] if log is None else log
    out = [Z0]
    zp, zm = Z0
    for j in range(1, 2 * ing.n + 1):
        if j % 2 == 1:
            if j > 1:
                # the diag(tau_{2k}, 1) factor that separates consecutive pairs in G_0
                zp = ev.get(f"tau{j - 1}") * zp
            mu = ev.get(f"mu{j}")
            new_p = _tracked_sum(zp, mu * zm, j, "plus", log, ev.finish)
            new_m = _tracked_sum(zp, zm, j, "minus", log, ev.finish)
        else:
            ti = ev.get(f"tauinv{j - 1}")
            mu = ev.get(f"mu{j}")
            tz = ti * zp
            new_p = _tracked_sum(tz, zm, j, "plus", log, ev.finish)
            new_m = _tracked_sum(mu * tz, zm, j, "minus", log, ev.finish)
        zp, zm = new_p, new_m
        out.append((zp, zm))
    return out


def tilde_coefficients(Z, ing, tm=None, Er=None, *, _ev=None):
    """D~_+^{(j)} = Z_+^{(j)} prod_{l<j} tau_l^{(-1)^{l+1}}, D~_-^{(j)} = Z_-^{(j)}."""
    ev = _ev or _Evaluation(ing, tm, Er)
    out = []
    weight = TransSeries.constant(1.0, ev.ing.policy)
    for j in range(1, 2 * ing.n + 1):
        if j > 1:
            l = j - 1
            weight = weight * (ev.get(f"tau{l}") if l % 2 == 1 else ev.get(f"tauinv{l}"))
        zp, zm = Z[j]
        out.append((ev.finish(zp * weight), ev.finish(zm)))
    return out


def eigenfunction_table(ing, tm, Er, normalization="minus"):
    ev = _Evaluation(ing, tm, Er)
    Z0 = kernel_vector(tm, ing, Er, normalization, _ev=ev)
    log = []
    Z = propagate(Z0, ing, _ev=ev, log=log)
    D = tilde_coefficients(Z, ing, _ev=ev)
    Zf = [(ev.finish(a), ev.finish(b)) for a, b in Z]
    return EigenfunctionTable(Zf, D, normalization, log, ev.symbolic), ev, Z


@dataclass
class ClosureResidual:
    plus: TransSeries
    minus: TransSeries
    plus_type: float  # exponential type of Z_+^{(0)}
    minus_type: float  # exponential type of Z_-^{(0)}

    def gap(self):
        """How far each residual lies below its own component of Z^{(0)}; inf when both vanish."""
        gaps = [ref - r.exponential_type() for r, ref in ((self.plus, self.plus_type), (self.minus, self.minus_type))
                if r]
        return float("inf") if not gaps else min(gaps)

    def to_dict(self):
        return {"plus": self.plus.to_records(), "minus": self.minus.to_records(), "plus_type": self.plus_type,
                "minus_type": self.minus_type, "gap": self.gap()}


def closure_check(ing, tm, Er, normalization="minus", *, mutate=None):
    """Compare Z^{(0)} with the coefficients after one full period.

    The residuals are ``Z_+^{(0)} - (1 + E_r kappa) tau_{2n} Z_+^{(2n)}`` and
    ``Z_-^{(0)} - (1 + E_r kappa) Z_-^{(2n)}``.  ``mutate=(j, factor)``
    rescales tau_j along the chain while the kernel vector is still taken
    from the unmodified ingredients, which must break the identity.
    """
    ev = _Evaluation(ing, tm, Er)
    Z0 = kernel_vector(tm, ing, Er, normalization, _ev=ev)
    if mutate is not None:
        ev = ev.with_scaled_tau(*mutate)
    Z = propagate(Z0, ing, _ev=ev, log=[])
    opk = ev.get("opk")
    zp0, zm0 = Z[0]
    zpn, zmn = Z[-1]
    rp = _difference(ev.finish(zp0), ev.finish(opk * ev.get(f"tau{2 * ing.n}") * zpn))
    rm = _difference(ev.finish(zm0), ev.finish(opk * zmn))
    top = max(ev.finish(x).exponential_type() for x in (zp0, zm0) if ev.finish(x))
    plus_type, minus_type = (ev.finish(x).exponential_type() if ev.finish(x) else top for x in (zp0, zm0))
    return ClosureResidual(rp, rm, plus_type, minus_type)


@dataclass
class QCRelation:
    pair: int  # k: relation built from mu_{2k-1}, mu_{2k}, tau_{2k-1}
    offset: int
    value: TransSeries  # offset + mu mu tau^{-1} at the solution
    product_type: float

    @property
    def drop(self):
        """Decrease of exponential type produced by adding the offset."""
        return float("inf") if not self.value else self.product_type - self.value.exponential_type()

    def to_dict(self):
        return {"pair": self.pair, "offset": self.offset, "product_type": self.product_type,
                "value_type": self.value.exponential_type() if self.value else None, "drop": self.drop}


def qc_consequence(ing, Er):
    """Dominant-balance relations ``offset + mu_{2k-1} mu_{2k} tau_{2k-1}^{-1}`` at a solution.

    Whenever the product is of exponential type zero with a leading
    coefficient close to an integer, adding the negated integer must leave
    an exponentially smaller remainder.
    """
    out = []
    for k in range(1, ing.n + 1):
        prod = (ing.mu_(2 * k - 1) * ing.mu_(2 * k) * ing.tau_(2 * k - 1).invert()).substitute_Er(Er)
        if not prod:
            continue
        lead = prod.leading()
        if abs(lead.c) > 1e-9 or lead.k != 0 or lead.l != 0:
            continue
        offset = -round(lead.coeff.real)
        if offset == 0 or abs(lead.coeff + offset) > 1e-6:
            continue
        out.append(QCRelation(k, offset, prod + float(offset), lead.c))
    return out
