import pytest

from parfinger import set_debug


@pytest.fixture(autouse=True)
def _debug_checks():
    set_debug(True)
    yield
    set_debug(False)
