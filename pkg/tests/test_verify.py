from fractions import Fraction

import numpy as np
import pytest

import avoidkit as ak
import avoidkit.verify as verify_mod
from avoidkit.base import KernelTable, all_configurations
from avoidkit.core import Trajectory
from avoidkit.permchain import swap_last


def _traj(configs, orders=None, n=5):
    configs = np.asarray(configs, dtype=np.int32)
    if orders is None:
        orders = np.tile(np.arange(1, configs.shape[1] + 1, dtype=np.int32),
                         (configs.shape[0], 1))
    return Trajectory(n=n, k=configs.shape[1], configs=configs,
                      orders=np.asarray(orders, dtype=np.int32))


def biased_pair_kernel(n, p):
    """Pair kernel with an arbitrary vacated-vertex weight (support is legal)."""
    rows = {}
    first_w = Fraction(1, n - 2)
    for a, b in all_configurations(n, 2):
        t1 = [v for v in range(1, n + 1) if v not in (a, b)]
        rows[((a, b), 1, ())] = tuple((v, first_w) for v in t1)
        for a_new in t1:
            others = [v for v in range(1, n + 1) if v not in (a, b, a_new)]
            rows[((a, b), 2, (a_new,))] = tuple(
                sorted([(a, p)] + [(v, (1 - p) / (n - 3)) for v in others]))
    return KernelTable(n, 2, rows, name="biased")


class PointInitProcess(ak.KernelProcess):
    """Deliberately mis-initialized copy: all mass on one configuration."""

    def init_distribution(self):
        states = super().init_distribution()
        return [(states[0][0], Fraction(1))]


class ReusedTranspositionWalk(ak.CouplingProcess):
    """Sampler-only corrupted chain: every other round reuses the last swap."""

    def __init__(self, n):
        self.n = n
        self.k = 1
        self.name = f"corrupted-reuse-{n}"
        self.partial_order = None

    def sample_init(self, streams):
        perm = tuple(int(v) + 1 for v in streams.perm_init(1).permutation(self.n))
        return (perm, 0, 1)

    def sample_step(self, state, streams):
        perm, parity, last_a = state
        if parity == 0:
            a = int(streams.perm_steps(1).integers(1, self.n))
        else:
            a = last_a
        return (swap_last(perm, a), 1 - parity, a), (1,)

    def config_of(self, state):
        return (state[0][self.n - 1],)

    def frame0_order(self):
        return (1,)

    def descriptor(self):
        return {"kind": "test-corrupted", "n": self.n}


# --- avoidance ---------------------------------------------------------------

def test_check_avoidance_passes_on_kernel_samples(pair5):
    traj = ak.sample_trajectory(pair5, 50_000, seed=2)
    rep = ak.check_avoidance(traj)
    assert rep.passed and rep.stats["rounds"] == 50_000


def test_check_avoidance_cross_round_witness():
    # walker 1 moves onto walker 2's old vertex while moving first
    rep = ak.check_avoidance(_traj([[1, 2], [2, 4]]))
    assert not rep.passed
    assert rep.stats["cross_round_collisions"] == 1
    assert rep.witnesses == [{"t": 1, "i": 1, "j": 2, "clause": "cross-round"}]


def test_check_avoidance_same_round_witness():
    rep = ak.check_avoidance(_traj([[1, 2], [3, 3]]))
    assert not rep.passed
    assert rep.witnesses[0]["clause"] == "same-round"
    assert rep.stats["same_round_collisions"] == 1


def test_check_avoidance_order_gates_cross_round():
    # same frames, but walker 1 moves second: landing on 2's old vertex is legal
    rep = ak.check_avoidance(_traj([[1, 2], [2, 4]], orders=[[2, 1], [2, 1]]))
    assert rep.passed


# --- exact conditional laws ---------------------------------------------------

def test_oracle_trivial_chain():
    rep = ak.exact_conditional_laws(ak.trivial_sac(4), 4)
    assert rep.passed and rep.stats["target_law"] == "1/3"


def test_oracle_rejects_biased_kernel_at_depth_two():
    table = biased_pair_kernel(5, Fraction(1, 2))
    assert ak.validate_kernel(table).ok
    proc = ak.kernel_process(table)
    assert ak.exact_conditional_laws(proc, 1).passed
    rep = ak.exact_conditional_laws(proc, 2)
    assert not rep.passed
    marks = {(w["expected"], w["actual"]) for w in rep.witnesses}
    assert ("1/4", "1/6") in marks  # exact wrong value, not a tolerance miss


def test_oracle_int64_and_bigint_paths_agree(pair5, monkeypatch):
    fast = ak.exact_conditional_laws(pair5, 3)
    monkeypatch.setattr(verify_mod, "INT64_MASS_LIMIT", 1)
    slow = ak.exact_conditional_laws(pair5, 3)
    assert fast.passed and slow.passed
    assert fast.stats["histories_checked"] == slow.stats["histories_checked"]
    assert fast.stats["conditionals_checked"] == slow.stats["conditionals_checked"]


def test_oracle_budget_abort(pair5_posac):
    big = ak.iterate_extension(pair5_posac, 7, "add")
    with pytest.raises(ak.BudgetExceeded) as exc:
        ak.exact_conditional_laws(big, 2, budget=20_000)
    assert exc.value.estimate > 20_000


def test_oracle_unsupported_without_enumeration():
    with pytest.raises(ak.UnsupportedCheck):
        ak.exact_conditional_laws(ReusedTranspositionWalk(5), 2)


def test_strong_identities_unsupported_on_plain_kernel(pair5):
    with pytest.raises(ak.UnsupportedCheck):
        ak.exact_conditional_laws(pair5, 1, strong_horizon=1)


def test_strong_identities_pass_small():
    ext = ak.extend_sac(ak.trivial_sac(3))
    rep = ak.exact_conditional_laws(ext, 2, strong_horizon=2)
    assert rep.passed
    assert rep.stats["strong_histories_checked"] > 0


# --- stationarity --------------------------------------------------------------

def test_stationarity_exact(pair5):
    rep = ak.stationarity_check(pair5, 2)
    assert rep.passed and rep.stats["states"] == 20


def test_stationarity_of_permchain_via_extension():
    rep = ak.stationarity_check(ak.extend_sac(ak.trivial_sac(3)), 3)
    assert rep.passed


def test_stationarity_detects_point_mass(pair5):
    bad = PointInitProcess(pair5.table, dict(pair5.init_distribution()))
    rep = ak.stationarity_check(bad, 1)
    assert not rep.passed
    assert rep.witnesses[0]["step"] == 1


# --- chi-square ----------------------------------------------------------------

def test_chi_square_uniform_sampler_passes():
    rep = ak.chi_square_uniformity(ak.trivial_sac(3), 100_000, 1, seed=6)
    assert rep.passed
    assert rep.stats["buckets_tested"] == 3  # one bucket per current vertex


def test_chi_square_detects_reused_transpositions():
    rep = ak.chi_square_uniformity(ReusedTranspositionWalk(6), 50_000, 2, seed=6)
    assert not rep.passed
    kinds = {w["kind"] for w in rep.witnesses}
    assert "chi-square" in kinds or "self-transition" in kinds


def test_chi_square_on_deep_keep_stack(pair5):
    proc = ak.iterate_extension(pair5, 10, "keep")
    rep = ak.chi_square_uniformity(proc, 1_000_000, 2, alpha=1e-3, seed=14)
    assert rep.passed
    assert rep.stats["buckets_skipped"] == 0


def test_chi_square_sample_precondition():
    with pytest.raises(ak.ParameterError):
        ak.chi_square_uniformity(ak.trivial_sac(8), 500, 1, seed=0)


def test_chi_square_flags_self_transition():
    configs = np.array([[1], [2], [2], [3]], dtype=np.int32)
    orders = np.ones_like(configs)

    class Canned(ak.CouplingProcess):
        n, k = 3, 1
        name = "canned"
        partial_order = None

        def sample_init(self, streams):
            return 0

        def sample_step(self, state, streams):
            return state + 1, (1,)

        def config_of(self, state):
            return (int(configs[state % 4, 0]),)

        def frame0_order(self):
            return (1,)

        def descriptor(self):
            return {"kind": "canned"}

    rep = ak.chi_square_uniformity(Canned(), 300, 1, seed=0)
    assert not rep.passed
    assert any(w["kind"] == "self-transition" for w in rep.witnesses)


# --- posac orders ----------------------------------------------------------------

def test_posac_orders_pass_with_debug(pair5_posac):
    ext = ak.extend_posac(pair5_posac)
    traj = ak.sample_trajectory(ext, 10_000, seed=4, debug=True)
    rep = ak.check_posac_orders(traj, ext.partial_order)
    assert rep.passed
    cases = rep.stats["insertion_cases"][0]
    assert cases["after_vacator"] > 0 and cases["moves_first"] > 0


def test_posac_orders_violation_witness():
    r = ak.PartialOrder(2, frozenset({(1, 2)}))
    traj = _traj([[1, 2], [3, 1]], orders=[[1, 2], [2, 1]])
    rep = ak.check_posac_orders(traj, r)
    assert not rep.passed
    assert rep.witnesses[0]["kind"] == "order-violation"


def test_posac_orders_insertion_rule_witness(pair5_posac):
    ext = ak.extend_posac(pair5_posac)
    traj = ak.sample_trajectory(ext, 500, seed=4, debug=True)
    traj.orders = traj.orders.copy()
    traj.orders[37] = (1, 2, 3)
    traj.orders[38] = (1, 2, 3)
    rep = ak.check_posac_orders(traj, ext.partial_order)
    assert not rep.passed
    assert any(w["kind"] == "insertion-rule" for w in rep.witnesses)


def test_posac_orders_k_mismatch(pair5):
    traj = ak.sample_trajectory(pair5, 10, seed=0)
    with pytest.raises(ak.ParameterError):
        ak.check_posac_orders(traj, ak.PartialOrder(3))


def test_brute_force_path_enumeration_agrees_with_oracle(pair5):
    # independent route: enumerate raw two-step paths with Fractions and
    # condition by hand, no TransitionCache involved
    cond = {}
    totals = {}
    for s0, w0 in pair5.init_distribution():
        for s1, _o1, w1 in pair5.enumerate_step(s0):
            for s2, _o2, w2 in pair5.enumerate_step(s1):
                hist = (s0[0], s1[0])
                mass = w0 * w1 * w2
                totals[hist] = totals.get(hist, 0) + mass
                cond[(hist, s2[0])] = cond.get((hist, s2[0]), 0) + mass
    assert len(totals) == 20  # (w0, w1) pairs with w1 != w0
    for (hist, v), mass in cond.items():
        assert v != hist[-1]
        assert mass / totals[hist] == Fraction(1, 4)
    by_hist = {}
    for (hist, _v) in cond:
        by_hist[hist] = by_hist.get(hist, 0) + 1
    assert all(c == 4 for c in by_hist.values())
    # the packaged oracle sees the same history layer sizes
    rep = ak.exact_conditional_laws(pair5, 2)
    assert rep.passed
    assert rep.stats["histories_checked"] == 2 * (5 + 20)  # both walkers, depths 1..2


# --- joint distribution -----------------------------------------------------------

def test_enumerate_joint_layers_sum_to_one(pair5):
    joint = ak.enumerate_joint(pair5, 3)
    assert joint.states == 20
    for t in range(4):
        assert joint.layer_total(t) == 1
    # stationary start: every layer is the uniform law over the 20 placements
    for t in range(4):
        assert all(w == Fraction(1, 20) for w in joint.layers[t].values())


def test_enumerate_joint_tracks_point_masses():
    joint = ak.enumerate_joint(ak.trivial_sac(2), 2)
    assert joint.layers[1] == {(1,): Fraction(1, 2), (2,): Fraction(1, 2)}


# --- sampler/enumerator consistency ----------------------------------------------

def test_sampler_agrees_with_enumerated_exact_distribution(pair5):
    # statistic: walker 1's two-step return probability under the pair kernel
    exact = Fraction(0)
    for s0, w0 in pair5.init_distribution():
        v0 = s0[0]
        for s1, _o1, w1 in pair5.enumerate_step(s0):
            for s2, _o2, w2 in pair5.enumerate_step(s1):
                if s2[0] == v0:
                    exact += w0 * w1 * w2
    # stationarity makes per-t indicators identically distributed, so one
    # long run estimates the same return probability
    runs = 100_000
    traj = ak.sample_trajectory(pair5, runs + 2, seed=123)
    hits = int((traj.configs[2:, 0] == traj.configs[:-2, 0]).sum())
    p = float(exact)
    sigma = (p * (1 - p) / runs) ** 0.5
    assert abs(hits / (runs + 1) - p) < 5 * sigma
