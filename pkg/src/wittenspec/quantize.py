"""Quantization condition, its Newton polygon, and the layered solver.

The condition is a transseries in E_r.  Its exponentially small roots are
found by dominant balance: every north-west edge of the Newton polygon of
points ``(m, c)`` (E_r**m e^{c/h}) with slope ``t > 0`` yields roots
``E_r = e^{-t/h} (r + E')``, where ``r`` solves the edge polynomial and the
correction ``E'`` is found by repeating the construction on the rescaled
condition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConditionInconsistent, LogLeading, MultipleRootUnresolved
from .transseries import TransSeries, rate_scale_label, snap_c

#: relative size below which a coefficient counts as cancelled
CANCEL_RTOL = 1e-9


# --------------------------------------------------------------------------
# 2x2 matrices of transseries
# --------------------------------------------------------------------------

def _matmul(A, B):
    return [[A[0][0] * B[0][0] + A[0][1] * B[1][0], A[0][0] * B[0][1] + A[0][1] * B[1][1]],
            [A[1][0] * B[0][0] + A[1][1] * B[1][0], A[1][0] * B[0][1] + A[1][1] * B[1][1]]]


@dataclass
class TransferMatrixData:
    G0: list
    trace: TransSeries
    det: TransSeries
    n: int

    def entry(self, i, j):
        return self.G0[i - 1][j - 1]


def g0_product(n, mu, tau, tauinv, one):
    """G_0 and its factorized determinant from ingredient getters ``mu(j)``, ``tau(j)``, ``tauinv(j)``."""
    G = None
    det = one
    for k in range(n, 0, -1):
        tinv = tauinv(2 * k - 1)
        m1, m2 = mu(2 * k - 1), mu(2 * k)
        m1t = m1 * tinv
        t2 = tau(2 * k)
        factor = [[t2 * (tinv + 1.0), t2 * (m1t + 1.0)],
                  [m2 * tinv + 1.0, m1t * m2 + 1.0]]
        G = factor if G is None else _matmul(G, factor)
        det = det * t2 * tinv * (1.0 - m1) * (1.0 - m2)
    return G, det


def build_G0(ing):
    """G_0 as the ordered product over k = n..1; the determinant uses its factorized form."""
    G, det = g0_product(ing.n, ing.mu_, ing.tau_, lambda j: ing.tau_(j).invert(),
                        TransSeries.constant(1.0, ing.policy))
    return TransferMatrixData(G, G[0][0] + G[1][1], det, ing.n)


def build_condition(tm, opk, *, check_zero_column=True):
    """``-(1 + E_r kappa)^{-1} + Tr G_0 - (1 + E_r kappa) det G_0`` with its E_r^0 column removed.

    The E_r^0 column vanishes identically (E_r = 0 is always a root); what
    survives of it numerically is rounding and is checked, then discarded.
    """
    cond = -opk.invert() + tm.trace - opk * tm.det
    col0 = cond.column(0)
    if check_zero_column and col0:
        scale = max(cond.max_abs(), 1e-300)
        if col0.max_abs() > 1e-7 * scale:
            raise ConditionInconsistent("the E_r^0 part of the condition does not vanish",
                                  operation="build_condition", size=col0.max_abs() / scale)
    return TransSeries({key: v for key, v in cond.terms.items() if key[1] != 0}, cond.policy)


# --------------------------------------------------------------------------
# Newton polygon
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PolygonPoint:
    m: int
    c: float
    series: TransSeries  # (h, ln h) coefficient series a_{m,c}(h)

    def leading(self):
        return self.series.leading()


@dataclass(frozen=True)
class Edge:
    start: tuple  # (m, c)
    end: tuple
    slope: float
    points: tuple  # PolygonPoint's lying on the edge

    @property
    def degree(self):
        return self.end[0] - self.start[0]


@dataclass
class NewtonPolygon:
    points: list
    hull: list  # vertices (m, c), left to right
    edges: list  # all edges with positive slope, left to right
    horizontal_start: tuple | None
    scale: float | None = None

    def to_records(self):
        out = []
        for p in self.points:
            lead = p.leading()
            rec = {"m": p.m, "c": p.c, "coeff_re": lead.coeff.real, "coeff_im": lead.coeff.imag,
                   "k": str(lead.k), "l": lead.l}
            if self.scale:
                label = rate_scale_label(p.c, self.scale)
                if label is not None:
                    rec["c_scaled"] = label
            out.append(rec)
        return out


def polygon_points(cond):
    buckets = {}
    for (c, m, kk, l), v in cond.terms.items():
        buckets.setdefault((m, c), {})[(0.0, 0, kk, l)] = v
    return [PolygonPoint(m, c, TransSeries(terms, cond.policy, _floor=-math.inf))
            for (m, c), terms in sorted(buckets.items())]


def newton_polygon(cond, scale=None):
    """Upper-left boundary of the union of quadrants [m, inf) x (-inf, c]."""
    pts = polygon_points(cond)
    if not pts:
        raise ConditionInconsistent("empty condition has no Newton polygon", operation="newton_polygon")
    best = {}
    for p in pts:
        if p.m not in best or p.c > best[p.m]:
            best[p.m] = p.c
    ms = sorted(best)
    cur = (ms[0], best[ms[0]])
    hull = [cur]
    edges = []
    while True:
        cands = [(m, best[m]) for m in ms if m > cur[0]]
        if not cands:
            break
        slope = max((c - cur[1]) / (m - cur[0]) for m, c in cands)
        if slope <= 1e-12:
            break
        on = [(m, c) for m, c in cands if abs((c - cur[1]) / (m - cur[0]) - slope) <= 1e-9]
        nxt = max(on)
        edge_pts = tuple(p for p in pts if cur[0] <= p.m <= nxt[0]
                         and abs(p.c - (cur[1] + slope * (p.m - cur[0]))) <= 1e-9)
        edges.append(Edge(cur, nxt, slope, edge_pts))
        hull.append(nxt)
        cur = nxt
    return NewtonPolygon(pts, hull, edges, cur, scale)


def brute_force_hull(points):
    """Vertices of the upper-left boundary by checking every pair (test oracle)."""
    best = {}
    for m, c in points:
        best[m] = max(best.get(m, -math.inf), c)
    ms = sorted(best)
    verts = []
    for m in ms:
        c = best[m]
        # (m, c) is a vertex iff it lies strictly above every chord between a point to its left and
        # a point to its right, and above every point to its left (no dominance)
        if any(best[m2] >= c for m2 in ms if m2 < m):
            continue
        ok = True
        for m1 in ms:
            if m1 >= m:
                continue
            for m2 in ms:
                if m2 <= m:
                    continue
                chord = best[m1] + (best[m2] - best[m1]) * (m - m1) / (m2 - m1)
                if best[m2] > c and chord >= c - 1e-12:
                    ok = False
        if ok:
            verts.append((m, c))
    return verts


# --------------------------------------------------------------------------
# solving
# --------------------------------------------------------------------------

@dataclass
class EigenvalueSolution:
    Er: TransSeries
    residual: TransSeries | None
    trace: list = field(default_factory=list)

    @property
    def is_zero(self):
        return self.Er.is_zero()

    @property
    def rate(self):
        return None if self.is_zero else -self.trace[0]["slope"]

    def energy(self):
        """h E_r as a transseries."""
        return self.Er * TransSeries.monomial(1.0, k=1, policy=self.Er.policy)

    def to_dict(self):
        return {"Er": self.Er.to_records(), "hEr": self.energy().to_records(), "trace": self.trace,
                "zero": self.is_zero}


def _edge_polynomial(edge, policy):
    """Coefficient series of r^d, d = 0..degree, relative to the edge start."""
    coeffs = [TransSeries.zero(policy) for _ in range(edge.degree + 1)]
    for p in edge.points:
        coeffs[p.m - edge.start[0]] = coeffs[p.m - edge.start[0]] + p.series
    return coeffs


def _poly_eval(coeffs, r):
    out = coeffs[-1]
    for c in reversed(coeffs[:-1]):
        out = out * r + c
    return out


def _poly_deriv(coeffs):
    return [coeffs[d].scale(d) for d in range(1, len(coeffs))]


def edge_roots(edge, policy):
    """Roots of the edge polynomial as (h, ln h) series."""
    coeffs = _edge_polynomial(edge, policy)
    if edge.degree == 1:
        return [-(coeffs[0] * coeffs[1].invert())]
    kk_min = min(k[2] for c in coeffs if c for k in c.terms)
    top = []
    for d, c in enumerate(coeffs):
        for (cc, m, kk, l), v in c.terms.items():
            if kk == kk_min and l > 0 and d in (0, edge.degree):
                raise LogLeading("edge polynomial has a ln h dependent leading coefficient",
                                 operation="edge_roots")
        top.append(c.coefficient(0.0, 0, kk_min / 2, 0))
    if abs(top[-1]) == 0 or abs(top[0]) == 0:
        raise ConditionInconsistent("edge polynomial degenerates at its leading h order", operation="edge_roots")
    roots0 = np.roots(top[::-1])
    for i in range(len(roots0)):
        for j in range(i):
            if abs(roots0[i] - roots0[j]) <= 1e-8 * max(abs(roots0[i]), 1.0):
                raise MultipleRootUnresolved("edge polynomial has a repeated root", operation="edge_roots",
                                             root=complex(roots0[i]))
    deriv = _poly_deriv(coeffs)
    out = []
    for r0 in roots0:
        r = TransSeries.constant(complex(r0), policy)
        for _ in range(2 * policy.max_kk + 4):
            step = _poly_eval(coeffs, r) * _poly_eval(deriv, r).invert()
            r = r - step
            if not step or step.max_abs() <= 1e-15 * max(r.max_abs(), 1e-300):
                break
        out.append(r)
    return out


def _drop_cancelled_top(cond, rate, rtol=CANCEL_RTOL):
    """Remove the E^0 bucket at the balanced rate, which a root annihilates up to rounding."""
    rate = snap_c(rate)
    scale = max(cond.max_abs(), 1e-300)
    bucket = {k: v for k, v in cond.terms.items() if k[1] == 0 and abs(k[0] - rate) < 1e-9}
    if bucket and max(abs(v) for v in bucket.values()) > 1e-6 * scale:
        raise ConditionInconsistent("rescaled condition keeps a non-vanishing balanced term",
                              operation="solve_condition", size=max(abs(v) for v in bucket.values()) / scale)
    return TransSeries({k: v for k, v in cond.terms.items() if k not in bucket}, cond.policy)


def _rescaled_rate(edge):
    return edge.start[1] - edge.slope * edge.start[0]


def solve_condition(cond, depth=None, *, max_layers=12):
    """E_r = 0 plus every exponentially small root, each refined until its corrections drop below ``depth``.

    ``depth`` is an exponential-type budget measured from the first slope of
    each branch (default three times that slope).
    """
    solutions = [EigenvalueSolution(TransSeries.zero(cond.policy), TransSeries.zero(cond.policy),
                                    [{"branch": "zero"}])]
    poly = newton_polygon(cond)
    if min(p.m for p in poly.points) < 1:
        raise ConditionInconsistent("condition must be divisible by E_r", operation="solve_condition")
    for edge in poly.edges:
        for r in edge_roots(edge, cond.policy):
            budget = depth if depth is not None else 3.0 * edge.slope
            solutions.append(_refine_branch(cond, edge, r, budget, max_layers))
    return solutions


def _refine_branch(cond, edge, r, budget, max_layers):
    policy = cond.policy
    trace = []
    layers = []  # (t, r)
    current = cond
    t, total = edge.slope, edge.slope
    while True:
        lead = r.leading()
        trace.append({"slope": t, "edge": [list(edge.start), list(edge.end)], "root_leading":
                      [lead.coeff.real, lead.coeff.imag], "root_k": str(lead.k), "root_l": lead.l})
        layers.append((t, r))
        current = current.rescale_Er(t, r)
        current = _drop_cancelled_top(current, _rescaled_rate(edge))
        if total >= budget - 1e-12 or len(layers) >= max_layers:
            break
        try:
            poly = newton_polygon(current)
        except ConditionInconsistent:
            break
        if not poly.edges or poly.points[0].m != 0:
            break
        edge = poly.edges[0]
        if edge.degree != 1:
            raise MultipleRootUnresolved("a correction layer is not linear in the unknown",
                                         operation="solve_condition", degree=edge.degree)
        t = edge.slope
        if total + t > budget + 1e-12:
            break
        total += t
        r = edge_roots(edge, policy)[0]
    Er = TransSeries.zero(policy)
    for t_i, r_i in reversed(layers):
        Er = (r_i + Er) * TransSeries.monomial(1.0, c=-t_i, policy=policy)
    residual = cond.substitute_Er(Er)
    return EigenvalueSolution(Er, residual, trace)
