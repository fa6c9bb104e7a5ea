import pytest

import avoidkit as ak


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    # compile the @njit kernels once up front (no-op on the numpy backend)
    from avoidkit._kernels import warmup
    warmup()


@pytest.fixture(scope="session")
def pair5():
    return ak.kernel_process(ak.symmetric_pair_kernel(5))


@pytest.fixture(scope="session")
def pair5_posac(pair5):
    return pair5.as_posac(ak.PartialOrder(2, frozenset({(1, 2)})))
