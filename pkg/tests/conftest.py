import pytest

from optomech_eit.config import resolve_config
from optomech_eit.presets import preset_raw
from optomech_eit.dynamics import storage_retrieval


def scenario(name):
    return resolve_config(preset_raw(name), preset=name)


@pytest.fixture(scope="session")
def fig2():
    return scenario("fig2")


@pytest.fixture(scope="session")
def fig4():
    return scenario("fig4")


@pytest.fixture(scope="session")
def fig6():
    return scenario("fig6")


@pytest.fixture(scope="session")
def fig7():
    return scenario("fig7")


@pytest.fixture(scope="session")
def fig8():
    return scenario("fig8")


@pytest.fixture(scope="session")
def fig9():
    return scenario("fig9")


@pytest.fixture(scope="session")
def fig8_storage(fig8):
    """One shared storage run for the write/read scenario at delta = omega_1."""
    return storage_retrieval(fig8.system, fig8.protocol)


@pytest.fixture(scope="session")
def fig9_storage(fig9):
    """One shared storage run addressing the lower membrane (delta = omega_2)."""
    return storage_retrieval(fig9.system, fig9.protocol)
