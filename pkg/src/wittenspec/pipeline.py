"""End-to-end runs: critical data -> ingredients -> condition -> eigenvalues -> eigenfunction tables.

Also holds the two worked inputs used throughout the test-suite and the
command line: a degree-two trigonometric polynomial with two wells, and
abstract critical data parametrized by two critical values ``(a, b)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .eigenfun import closure_check, eigenfunction_table, qc_consequence
from .errors import InputFormatError
from .ingredients import DEFAULT_EPSILON, UnknownFill, build_ingredients
from .quantize import build_condition, build_G0, newton_polygon, solve_condition
from .transseries import DEFAULT_POLICY, TruncationPolicy
from .trigpoly import CriticalData, TrigPoly, find_critical_points

#: truncation bounds for abstract two-well data: the eigenvalue is only
#: e^{-(a-b)/h} small, so many powers of E_r are needed before the columns
#: fall below the working window
ABSTRACT_POLICY = TruncationPolicy(window=4, max_m=8, max_k=2, max_l=2)
ABSTRACT_DEPTH = 2.0
ABSTRACT_MAX_LAYERS = 40
#: two coefficients agree between stand-in draws when within this relative distance
DETERMINACY_RTOL = 1e-8


def two_well_polynomial():
    """``f(q) = (1/2pi) [sin 2pi(q + 1/8) + cos 4pi(q + 1/8)]``."""
    amp = 1 / (2 * math.pi)
    return TrigPoly.from_phase_form([("sin", 1, amp, 1 / 8), ("cos", 2, amp, 1 / 8)])


def abstract_two_well(a=0.4, b=0.3):
    """Abstract data with minima at values 0 and b/2, maxima at 1/2 and a/2.

    Twice the minimum value minus the adjacent maximum value is then -1,
    -(1 - b), -(a - b), -a on intervals 1..4.  Locations and curvatures are
    fixed representative choices.
    """
    return CriticalData.from_abstract({"points": [
        {"q": 0.1, "value": 0.0, "curvature": 6.0},
        {"q": 0.35, "value": 0.5, "curvature": -8.0},
        {"q": 0.6, "value": b / 2, "curvature": 5.0},
        {"q": 0.85, "value": a / 2, "curvature": -7.0},
    ]})


def two_well_region(a, b):
    """Whether ``(a, b)`` lies in the parameter region where the two-well tables hold."""
    return 0 < b < a < 0.5 and 2 * a < 3 * b


def parse_input(text):
    """TrigPoly JSON (keys constant/cos/sin) or abstract critical data JSON (key points) -> CriticalData."""
    if not text or not text.strip():
        raise InputFormatError("empty input", operation="parse")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputFormatError(f"invalid JSON: {exc}", operation="parse") from exc
    if isinstance(raw, dict) and "points" in raw:
        return CriticalData.from_abstract(raw)
    return find_critical_points(TrigPoly.from_dict(raw))


@dataclass
class SpectrumResult:
    data: CriticalData
    ingredients: object
    transfer: object
    condition: object
    polygon: object
    solutions: list
    tables: list = field(default_factory=list)
    closures: list = field(default_factory=list)
    relations: list = field(default_factory=list)
    determinacy: list = field(default_factory=list)

    @property
    def nonzero(self):
        return [s for s in self.solutions if not s.is_zero]

    def to_dict(self, *, eigenfunctions=True):
        out = {
            "critical_data": self.data.to_dict(),
            "epsilon": complex(self.ingredients.epsilon).real,
            "unavailable": sorted(self.ingredients.unavailable),
            "polygon": {"points": self.polygon.to_records(), "hull": [list(v) for v in self.polygon.hull],
                        "slopes": [e.slope for e in self.polygon.edges]},
            "solutions": [s.to_dict() for s in self.solutions],
        }
        if self.determinacy:
            out["determinacy"] = self.determinacy
        if eigenfunctions and self.tables:
            out["eigenfunctions"] = [
                {"solution": i, "table": t.to_records(), "closure": c.to_dict(),
                 "relations": [r.to_dict() for r in rel]}
                for i, (t, c, rel) in enumerate(zip(self.tables, self.closures, self.relations))]
        return out


def default_settings(data):
    """(policy, depth, max_layers, fill) suited to derived or abstract data."""
    if data.derived:
        return DEFAULT_POLICY, None, 12, None
    return ABSTRACT_POLICY, ABSTRACT_DEPTH, ABSTRACT_MAX_LAYERS, UnknownFill(1)


def run_spectrum(data, eps=DEFAULT_EPSILON, *, policy=None, depth=None, max_layers=None, fill=None,
                 eigenfunctions=True, determinacy=None):
    """Solve the quantization condition and, optionally, build eigenfunction tables with closure checks.

    In abstract mode the constants no input fixes are drawn from ``fill``;
    ``determinacy`` (default on for abstract data) repeats the solve with a
    second draw and marks which results do not depend on the draw.
    """
    d_policy, d_depth, d_layers, d_fill = default_settings(data)
    policy = policy or d_policy
    depth = d_depth if depth is None else depth
    max_layers = max_layers or d_layers
    fill = fill if fill is not None else d_fill
    ing = build_ingredients(data, eps, policy=policy, fill=fill)
    tm = build_G0(ing)
    cond = build_condition(tm, ing.opk)
    sols = solve_condition(cond, depth=depth, max_layers=max_layers)
    result = SpectrumResult(data, ing, tm, cond, newton_polygon(cond), sols)
    if eigenfunctions:
        for s in sols:
            table, _, _ = eigenfunction_table(ing, tm, s.Er)
            result.tables.append(table)
            result.closures.append(closure_check(ing, tm, s.Er))
            result.relations.append(qc_consequence(ing, s.Er) if not s.is_zero else [])
    if determinacy is None:
        determinacy = bool(ing.unavailable)
    if determinacy:
        other = run_spectrum(data, eps, policy=policy, depth=depth, max_layers=max_layers,
                             fill=UnknownFill(fill.seed + 1 if fill else 2), eigenfunctions=eigenfunctions,
                             determinacy=False)
        result.determinacy = compare_draws(result, other)
    return result


def _same(x, y, rtol=DETERMINACY_RTOL):
    return abs(x - y) <= rtol * max(abs(x), abs(y), 1e-300)


def _leading_record(series):
    if not series:
        return None
    lead = series.leading()
    return {"c": lead.c, "k": str(lead.k), "l": lead.l}


def compare_draws(first, second):
    """Per solution: whether the leading eigenvalue monomial and the D-tilde types agree between draws."""
    out = []
    for i, (s1, s2) in enumerate(zip(first.solutions, second.solutions)):
        rec = {"solution": i, "zero": s1.is_zero}
        if not s1.is_zero:
            l1, l2 = s1.Er.leading(), s2.Er.leading()
            rec["leading_key_stable"] = l1.key() == l2.key()
            rec["leading_coefficient_stable"] = rec["leading_key_stable"] and _same(l1.coeff, l2.coeff)
        if first.tables and second.tables:
            t1, t2 = first.tables[i], second.tables[i]
            rec["types_stable"] = all(
                _leading_record(a) == _leading_record(b)
                for p1, p2 in zip(t1.Dtilde, t2.Dtilde) for a, b in zip(p1, p2))
        out.append(rec)
    return out
