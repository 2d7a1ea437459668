import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None)
settings.load_profile("default")


@pytest.fixture
def golden_row():
    return [0.04, 0.51, 0.03, 0.40, 0.01, 0.01]
