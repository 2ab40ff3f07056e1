import math

import pytest

from wittenspec.eigenfun import closure_check, eigenfunction_table, parse_normalization, qc_consequence
from wittenspec.errors import InputFormatError

UNIT = 1 / (8 * math.pi)
A, B = 0.4, 0.3


def normalized_rows(table):
    """(rate offset in 1/(8 pi) units, coefficient) of each D-tilde entry relative to D_+ on interval 1."""
    ref = table.leading(1, 1)
    rows = []
    for j in range(1, 2 * table.n + 1):
        p, m = table.leading(j, 1), table.leading(j, -1)
        rows.append(((p.c - ref.c) / UNIT, p.coeff / ref.coeff, (m.c - ref.c) / UNIT, m.coeff / ref.coeff))
    return rows


# ------------------------------------------------------------ two-well polynomial

def test_two_well_table_plus_column(two_well_run):
    rows = normalized_rows(two_well_run.tables[1])
    for (offset, coeff, _, _), want in zip(rows, (1, 1, -1, -1)):
        assert offset == pytest.approx(0.0, abs=1e-6)
        assert coeff == pytest.approx(want, abs=1e-6)


def test_two_well_table_minus_column(two_well_run):
    rows = normalized_rows(two_well_run.tables[1])
    outer, inner = 2 / math.sqrt(5), 2 / math.sqrt(3)
    # the outer intervals carry the same sign: the chain is symmetric under reflection
    expected = [(9, -1j * outer), (-7, 1j * inner), (-7, 1j * inner), (9, -1j * outer)]
    for (_, _, offset, coeff), (want_offset, want) in zip(rows, expected):
        assert offset == pytest.approx(want_offset, abs=1e-6)
        assert abs(coeff - want) <= 1e-6


def test_two_well_zero_branch_has_flat_table(two_well_run):
    table = two_well_run.tables[0]
    for dp, dm in table.Dtilde:
        assert dp or dm


def test_two_well_relation_at_the_solution(two_well_run):
    rels = two_well_run.relations[1]
    assert any(r.pair == 1 and r.offset == 2 and r.drop > 0 for r in rels)


# ------------------------------------------------------------ abstract two-well data

def test_abstract_types(abstract_run):
    idx = abstract_run.solutions.index(abstract_run.nonzero[0])
    types = [tuple(x.exponential_type() for x in pair) for pair in abstract_run.tables[idx].Dtilde]
    # on the third interval the chain gives D-_minus of type b
    expected = [(B - 1, 0.0), (B - 1, B), (B - A, B), (B - A, 0.0)]
    for got, want in zip(types, expected):
        assert got == pytest.approx(want, abs=1e-9)


def test_abstract_pair_relation_drops_type(abstract_run):
    idx = abstract_run.solutions.index(abstract_run.nonzero[0])
    (rel,) = [r for r in abstract_run.relations[idx] if r.pair == 2]
    assert rel.offset == 1
    assert rel.product_type == pytest.approx(0.0, abs=1e-9)
    assert rel.drop == pytest.approx(B, abs=1e-9)


def test_abstract_combined_relation_drops_below_b(abstract_run):
    """(1 + mu3 mu4 / tau3) + (mu3 / tau3 + 1) tau4 / mu1 is smaller than either summand at the solution."""
    ing = abstract_run.ingredients
    Er = abstract_run.nonzero[0].Er
    inv3 = ing.tau_(3).invert()
    first = 1 + ing.mu_(3) * ing.mu_(4) * inv3
    second = (ing.mu_(3) * inv3 + 1) * ing.tau_(4) * ing.mu_(1).invert()
    s2 = second.substitute_Er(Er)
    total = (first + second).substitute_Er(Er)
    assert s2.exponential_type() == pytest.approx(-B, abs=1e-9)
    assert total.exponential_type() <= -1 + 2 * A - B + 1e-9


def test_abstract_results_do_not_depend_on_stand_ins(abstract_run):
    for rec in abstract_run.determinacy:
        assert rec.get("types_stable", True)
        assert rec.get("leading_key_stable", True)


# ------------------------------------------------------------ closure

def test_closure_on_every_branch(two_well_run, abstract_run):
    for run in (two_well_run, abstract_run):
        for closure in run.closures:
            assert closure.gap() > 0


@pytest.mark.parametrize("j", range(1, 5))
def test_mutated_tau_breaks_two_well_closure(two_well_run, j):
    sol = two_well_run.nonzero[0]
    mutated = closure_check(two_well_run.ingredients, two_well_run.transfer, sol.Er, mutate=(j, 1.01))
    assert mutated.gap() <= 0


@pytest.mark.parametrize("j", range(1, 5))
def test_mutated_tau_raises_abstract_residual(abstract_run, j):
    idx = abstract_run.solutions.index(abstract_run.nonzero[0])
    sol = abstract_run.solutions[idx]
    base = abstract_run.closures[idx].gap()
    mutated = closure_check(abstract_run.ingredients, abstract_run.transfer, sol.Er, mutate=(j, 1.01))
    assert mutated.gap() < base


# ------------------------------------------------------------ normalization

def test_normalization_parsing():
    assert parse_normalization("minus", 2) == "minus"
    assert parse_normalization("plus", 2) == "plus"
    assert parse_normalization("tau3^-1*tau4*mu3", 2) == [("tau", 3, -1), ("tau", 4, 1), ("mu", 3, 1)]
    with pytest.raises(InputFormatError):
        parse_normalization("sideways", 2)
    with pytest.raises(InputFormatError):
        parse_normalization("tau5", 2)


def test_plus_normalization_rescales_the_table(two_well_run):
    sol = two_well_run.nonzero[0]
    ing, tm = two_well_run.ingredients, two_well_run.transfer
    plus, _, _ = eigenfunction_table(ing, tm, sol.Er, "plus")
    minus = two_well_run.tables[1]
    ratio = [plus.leading(j, 1).coeff / minus.leading(j, 1).coeff for j in range(1, 5)]
    assert all(abs(r - ratio[0]) <= 1e-9 * abs(ratio[0]) for r in ratio)


def test_relations_carry_nonzero_integer_offsets(two_well_run):
    sol = two_well_run.nonzero[0]
    rels = qc_consequence(two_well_run.ingredients, sol.Er)
    assert all(abs(r.offset) >= 1 for r in rels)
