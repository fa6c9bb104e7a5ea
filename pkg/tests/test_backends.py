"""The numba and numpy backends must produce byte-identical results."""

import numpy as np
import pytest

import avoidkit as ak
from avoidkit import backend
from avoidkit._kernels import avoidance_scan, histogram_jam, recency_jam

pytestmark = pytest.mark.skipif(
    not backend.numba_available(), reason="numba not installed; single backend only")


@pytest.fixture
def both_backends():
    yield
    backend.set_backend("auto")


def _with(name, fn):
    backend.set_backend(name)
    try:
        return fn()
    finally:
        backend.set_backend("auto")


def test_trajectory_identical_across_backends(pair5, both_backends):
    proc = ak.iterate_extension(pair5, 8, "keep")
    a = _with("numba", lambda: ak.sample_trajectory(proc, 2_000, seed=31, labels=True))
    b = _with("numpy", lambda: ak.sample_trajectory(proc, 2_000, seed=31, labels=True))
    assert np.array_equal(a.configs, b.configs)
    assert np.array_equal(a.orders, b.orders)
    assert np.array_equal(a.labels, b.labels)


def test_posac_debug_channels_identical(pair5_posac, both_backends):
    proc = ak.iterate_extension(pair5_posac, 7, "add")
    a = _with("numba", lambda: ak.sample_trajectory(proc, 1_000, seed=5, debug=True))
    b = _with("numpy", lambda: ak.sample_trajectory(proc, 1_000, seed=5, debug=True))
    assert np.array_equal(a.configs, b.configs)
    assert np.array_equal(a.orders, b.orders)
    assert np.array_equal(a.debug["level_configs"], b.debug["level_configs"])
    assert np.array_equal(a.debug["level_orders"], b.debug["level_orders"])


def test_generic_sampler_matches_plan_path(pair5):
    proc = ak.iterate_extension(pair5, 7, "keep")

    class NoPlan:
        def __init__(self, inner):
            self.inner = inner

        def __getattr__(self, attr):
            return getattr(self.inner, attr)

        def stack_plan(self):
            return None

    fast = ak.sample_trajectory(proc, 400, seed=17, labels=True)
    slow = ak.sample_trajectory(NoPlan(proc), 400, seed=17, labels=True)
    assert np.array_equal(fast.configs, slow.configs)
    assert np.array_equal(fast.orders, slow.orders)
    assert np.array_equal(fast.labels, slow.labels)


def test_avoidance_scan_identical_witnesses(both_backends):
    rng = np.random.default_rng(3)
    configs = rng.integers(1, 5, size=(500, 3)).astype(np.int32)
    orders = np.tile(np.array([1, 2, 3], dtype=np.int32), (500, 1))
    a = _with("numba", lambda: avoidance_scan(configs, orders, cap=32))
    b = _with("numpy", lambda: avoidance_scan(configs, orders, cap=32))
    assert a[0] == b[0] and a[1] == b[1]
    assert [tuple(r) for r in a[2]] == [tuple(r) for r in b[2]]


def test_jam_builders_identical(both_backends):
    freqs = ak.sample_trajectory(ak.trivial_sac(8), 3_000, seed=2).configs[:, 0]
    freqs = freqs.astype(np.int64)
    for f in (1, 2, 3):
        for excl in (True, False):
            a = _with("numba", lambda: recency_jam(freqs, 8, f, excl))
            b = _with("numpy", lambda: recency_jam(freqs, 8, f, excl))
            assert np.array_equal(a, b), ("recency", f, excl)
        a = _with("numba", lambda: histogram_jam(freqs, 8, f))
        b = _with("numpy", lambda: histogram_jam(freqs, 8, f))
        assert np.array_equal(a, b), ("histogram", f)


def test_set_backend_rejects_unknown():
    with pytest.raises(ValueError):
        backend.set_backend("fortran")
    assert backend.active_backend() in ("numba", "numpy")
