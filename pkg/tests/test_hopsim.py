import io

import numpy as np
import pytest

import avoidkit as ak
from avoidkit.hopsim import BUILTIN_STRATEGIES, build_jam_sets, round_robin_schedule
from avoidkit.seeds import substream


@pytest.fixture(scope="module")
def ext8(pair5):
    return ak.iterate_extension(pair5, 8, "keep")


def test_export_schedule_orthogonal(pair5):
    sched = ak.export_schedule(ak.extend_sac(pair5), 100, seed=5)
    assert sched.n_slots == 100
    assert sched.validate() == []


def test_export_schedule_trivial_alternates():
    sched = ak.export_schedule(ak.trivial_sac(2), 10, seed=1)
    f = sched.slots[:, 0]
    assert set(f.tolist()) == {1, 2}
    assert (f[1:] != f[:-1]).all()


def test_export_schedule_deterministic_bytes(pair5):
    buf1, buf2 = io.StringIO(), io.StringIO()
    ak.export_schedule(pair5, 50, seed=7).write_csv(buf1)
    ak.export_schedule(pair5, 50, seed=7).write_csv(buf2)
    assert buf1.getvalue() == buf2.getvalue()
    assert buf1.getvalue().startswith("slot,transmitter,frequency\n")


def test_round_robin_schedule_valid():
    sched = round_robin_schedule(8, 3, 100)
    assert sched.validate() == []
    assert sched.slots[0, 0] == 1 and sched.slots[1, 0] == 2


def test_jam_sets_respect_declared_invariants(ext8):
    traj = ak.sample_trajectory(ext8, 2_000, seed=9)
    freqs = traj.configs[:, 0].astype(np.int64)
    rng = substream(9, "adversary")
    for name, strat in BUILTIN_STRATEGIES.items():
        jam = build_jam_sets(strat, freqs, 8, 2, rng)
        assert jam.shape == (2_000, 2)
        # exactly f distinct frequencies in range
        assert all(len(set(row)) == 2 for row in jam.tolist())
        assert jam.min() >= 1 and jam.max() <= 8
        if strat.excludes_current:
            assert (jam != freqs[:-1, None]).all(), name


def test_repeat_last_never_hits(ext8):
    rep = ak.run_adversary(ext8, "repeat-last", 1, 20_000, seed=3)
    assert rep.hits == 0
    # jamming the current frequency cannot hit: the walk always moves


def test_uniform_random_other_matches_baseline(ext8):
    rep = ak.run_adversary(ext8, "uniform-random-other", 1, 100_000, seed=8)
    assert abs(rep.z_score) < 3
    assert rep.baseline == pytest.approx(1 / 7)


def test_histogram_matches_baseline_on_coupled_walks(ext8):
    rep = ak.run_adversary(ext8, "histogram-of-history", 2, 100_000, seed=2)
    assert abs(rep.z_score) < 3
    assert rep.baseline == pytest.approx(2 / 7)


def test_histogram_crushes_round_robin():
    sched = round_robin_schedule(8, 2, 50_001)
    rep = ak.run_adversary(sched, "histogram-of-history", 1, 50_000, seed=1)
    assert rep.z_score > 10
    assert rep.hit_rate == pytest.approx(0.25, abs=0.01)


def test_schedule_shorter_than_rounds():
    sched = round_robin_schedule(8, 2, 100)
    with pytest.raises(ak.ParameterError):
        ak.run_adversary(sched, "repeat-last", 1, 200, seed=0)


def test_f_out_of_range(ext8):
    with pytest.raises(ak.ParameterError):
        ak.run_adversary(ext8, "repeat-last", 0, 100, seed=0)
    with pytest.raises(ak.ParameterError):
        ak.run_adversary(ext8, "repeat-last", 8, 100, seed=0)


def test_unknown_strategy(ext8):
    with pytest.raises(ak.ParameterError):
        ak.run_adversary(ext8, "psychic", 1, 100, seed=0)


def test_observe_all_stress_mode(ext8):
    rep = ak.run_adversary(ext8, "histogram-of-history", 1, 20_000, seed=4,
                           observe="all")
    assert 0.0 <= rep.hit_rate <= 1.0
    with pytest.raises(ak.ParameterError):
        ak.run_adversary(ext8, "recent-other", 1, 100, seed=0, observe="all")


def test_hit_report_round_trip(ext8):
    rep = ak.run_adversary(ext8, "recent-other", 1, 5_000, seed=5)
    doc = rep.to_json()
    assert doc["rounds"] == 5_000
    assert doc["strategy"] == "recent-other"
    assert 0.0 <= doc["hit_rate"] <= 1.0


def test_target_selects_transmitter(ext8):
    r1 = ak.run_adversary(ext8, "recent-other", 1, 10_000, seed=5, target=1)
    r2 = ak.run_adversary(ext8, "recent-other", 1, 10_000, seed=5, target=2)
    assert r1.hits != r2.hits  # different walks, same seed
    with pytest.raises(ak.ParameterError):
        ak.run_adversary(ext8, "recent-other", 1, 100, seed=5, target=3)


def test_jsonl_schedule_format(pair5):
    sched = ak.export_schedule(pair5, 5, seed=2)
    buf = io.StringIO()
    sched.write_jsonl(buf)
    lines = buf.getvalue().strip().split("\n")
    assert len(lines) == 5
    assert lines[0].startswith('{"slot":0,')
