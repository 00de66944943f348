import pytest

from banditparse.toydb import default_db
from helpers import make_fixture_db


@pytest.fixture()
def fixture_db():
    return make_fixture_db()


@pytest.fixture(scope="session")
def shipped_db():
    return default_db()
