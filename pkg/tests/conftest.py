import pytest

from pulsecool import core, pulses


@pytest.fixture(scope="session")
def params40():
    return core.make_params(n_fock=40)


@pytest.fixture(scope="session")
def factory40(params40):
    return pulses.PropagatorFactory(params40)


@pytest.fixture(scope="session")
def params_small():
    # fast engine tests: nbar <= 1 states only
    return core.SystemParams(n_fock=20, guard_levels=2, leak_threshold=1e-3)
