import io
from fractions import Fraction

import pytest

import avoidkit as ak
from avoidkit.base import (
    KernelTable,
    all_configurations,
    kernel_from_json,
    kernel_to_json,
    stationary_distribution,
)


def test_trivial_sac_guards():
    with pytest.raises(ak.ParameterError):
        ak.trivial_sac(1)


def test_trivial_sac_k2_alternates():
    proc = ak.trivial_sac(2)
    assert proc.enumerate_step((1,)) == [((2,), (1,), Fraction(1))]
    assert proc.enumerate_step((2,)) == [((1,), (1,), Fraction(1))]


def test_trivial_sac_k3_uniform():
    proc = ak.trivial_sac(3)
    steps = proc.enumerate_step((2,))
    assert sorted(s[0] for s in steps) == [(1,), (3,)]
    assert all(w == Fraction(1, 2) for _, _, w in steps)


def test_trivial_table_stationary_uniform():
    pi = stationary_distribution(ak.trivial_kernel(3))
    assert pi == {(v,): Fraction(1, 3) for v in (1, 2, 3)}


def test_pair_kernel_guards():
    with pytest.raises(ak.ParameterError):
        ak.symmetric_pair_kernel(3)


def test_pair_kernel_k5_weights():
    table = ak.symmetric_pair_kernel(5)
    first = dict(table.row((1, 2), 1, ()))
    assert first == {3: Fraction(1, 3), 4: Fraction(1, 3), 5: Fraction(1, 3)}
    second = dict(table.row((1, 2), 2, (3,)))
    # vacated vertex at 1/4, the two remaining vertices at 3/8 each
    assert second == {1: Fraction(1, 4), 4: Fraction(3, 8), 5: Fraction(3, 8)}


def test_pair_kernel_k6_weights_and_law():
    table = ak.symmetric_pair_kernel(6)
    second = dict(table.row((1, 2), 2, (3,)))
    assert second[1] == Fraction(1, 5)
    assert all(second[v] == Fraction(4, 15) for v in (4, 5, 6))
    # don't trust the formula alone: certify with the exact oracle
    proc = ak.kernel_process(table)
    assert ak.exact_conditional_laws(proc, 3).passed


def test_pair_kernel_k4_single_other_target():
    table = ak.symmetric_pair_kernel(4)
    second = dict(table.row((1, 2), 2, (3,)))
    assert second == {1: Fraction(1, 3), 4: Fraction(2, 3)}
    assert ak.validate_kernel(table).ok


def test_validate_kernel_passes_builtin():
    assert ak.validate_kernel(ak.symmetric_pair_kernel(5)).ok


def test_validate_kernel_catches_same_round_support():
    table = ak.symmetric_pair_kernel(5)
    rows = dict(table.rows)
    # walker 2 given walker 1 moved to 3: put weight on 3 itself
    rows[((1, 2), 2, (3,))] = ((3, Fraction(1, 4)), (4, Fraction(3, 8)), (5, Fraction(3, 8)))
    bad = KernelTable(5, 2, rows)
    rep = ak.validate_kernel(bad)
    assert not rep.ok
    assert any(v.kind == "moved-new" and v.target == 3 for v in rep.violations)


def test_validate_kernel_catches_inexact_sum():
    table = ak.trivial_kernel(3)
    rows = dict(table.rows)
    rows[((1,), 1, ())] = ((2, Fraction(9, 20)), (3, Fraction(9, 20)))
    rep = ak.validate_kernel(KernelTable(3, 1, rows))
    assert not rep.ok
    assert any(v.kind == "sum" and "9/10" in v.detail for v in rep.violations)


def test_validate_kernel_catches_missing_row():
    table = ak.trivial_kernel(3)
    rows = dict(table.rows)
    del rows[((2,), 1, ())]
    rep = ak.validate_kernel(KernelTable(3, 1, rows))
    assert any(v.kind == "missing-row" for v in rep.violations)


def test_kernel_process_rejects_invalid():
    table = ak.trivial_kernel(3)
    rows = dict(table.rows)
    rows[((1,), 1, ())] = ((1, Fraction(1)),)  # self-transition
    with pytest.raises(ak.KernelInvalid):
        ak.kernel_process(KernelTable(3, 1, rows))


def test_pair_kernel_stationary_uniform_20(pair5):
    init = pair5.init_distribution()
    assert len(init) == 20
    assert all(w == Fraction(1, 20) for _, w in init)
    assert sorted(s for s, _ in init) == all_configurations(5, 2)


def test_disconnected_chain_reported():
    # one walker on K_4 trapped in two 2-cycles
    w = Fraction(1)
    rows = {
        ((1,), 1, ()): ((2, w),),
        ((2,), 1, ()): ((1, w),),
        ((3,), 1, ()): ((4, w),),
        ((4,), 1, ()): ((3, w),),
    }
    with pytest.raises(ak.KernelChainError) as exc:
        stationary_distribution(KernelTable(4, 1, rows))
    partition = exc.value.partition
    assert sorted(map(sorted, partition)) == [[(1,), (2,)], [(3,), (4,)]]


def test_kernel_json_roundtrip_exact():
    table = ak.symmetric_pair_kernel(5)
    buf = io.StringIO()
    kernel_to_json(table, buf)
    assert '"p": "3/8"' in buf.getvalue()
    buf.seek(0)
    back = kernel_from_json(buf)
    assert back.n == table.n and back.k == table.k
    assert back.rows == table.rows
    assert back.move_order == table.move_order


def test_search_recovers_pair_kernel():
    res = ak.search_equivariant_kernel(5, 2, horizon=4)
    assert res.table is not None
    assert res.free_parameters == 1
    assert res.table.rows == ak.symmetric_pair_kernel(5).rows


def test_search_k3_not_found_after_one_candidate():
    res = ak.search_equivariant_kernel(3, 2, horizon=3)
    assert res.table is None
    assert res.candidates_examined == 1  # fully forced family


def test_search_degenerate_trivial():
    res = ak.search_equivariant_kernel(2, 1, horizon=3)
    assert res.table is not None
    assert res.table.rows == ak.trivial_kernel(2).rows


def test_reversed_move_order_kernel():
    # mirror of the pair family: walker 2 moves first each round
    n = 5
    p = Fraction(1, n - 1)
    first_w = Fraction(1, n - 2)
    rows = {}
    for a, b in all_configurations(n, 2):
        targets2 = [v for v in range(1, n + 1) if v not in (a, b)]
        rows[((a, b), 2, ())] = tuple((v, first_w) for v in targets2)
        for b_new in targets2:
            others = [v for v in range(1, n + 1) if v not in (a, b, b_new)]
            dist = [(b, p)] + [(v, (1 - p) / (n - 3)) for v in others]
            rows[((a, b), 1, (b_new,))] = tuple(sorted(dist))
    table = KernelTable(n, 2, rows, move_order=ak.MoveOrder.from_sequence((2, 1)),
                        name="mirrored-pair")
    assert ak.validate_kernel(table).ok
    proc = ak.kernel_process(table)
    assert ak.exact_conditional_laws(proc, 3).passed
    traj = ak.sample_trajectory(proc, 5_000, seed=11)
    assert (traj.orders[0] == [2, 1]).all()
    assert ak.check_avoidance(traj).passed


def test_search_k3_terminates_with_cap():
    res = ak.search_equivariant_kernel(5, 3, horizon=2, grid_denominator=3,
                                       max_candidates=40)
    assert res.table is None
    assert res.candidates_examined == 40
    assert res.free_parameters >= 2


def test_search_guard():
    with pytest.raises(ak.ParameterError):
        ak.search_equivariant_kernel(8, 2, horizon=2)
    with pytest.raises(ak.ParameterError):
        ak.search_equivariant_kernel(6, 4, horizon=2)


def test_search_k4_pair_family_answer_is_stable():
    # the one-parameter family does contain a 2-walk coupling on K_4: the
    # search certifies the 1/3 weight (4th grid candidate) via the oracle
    res = ak.search_equivariant_kernel(4, 2, horizon=3, grid_denominator=12)
    assert res.table is not None
    assert res.candidates_examined == 4
    assert res.table.rows == ak.symmetric_pair_kernel(4).rows
    deep = ak.exact_conditional_laws(ak.kernel_process(res.table), 6)
    assert deep.passed
