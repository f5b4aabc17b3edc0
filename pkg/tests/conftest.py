import pytest

from protocheck import annotate, parse_cpm, parse_dot
from protocheck.fixtures import fixture_text


@pytest.fixture(scope="session")
def two_state_machine():
    return parse_dot(fixture_text("illustrative.dot"))


@pytest.fixture(scope="session")
def two_state_cpm():
    return parse_cpm(fixture_text("illustrative.cpm"))


@pytest.fixture(scope="session")
def emrtd_cpm():
    return parse_cpm(fixture_text("emrtd.cpm"))


@pytest.fixture(scope="session")
def uds_cpm():
    return parse_cpm(fixture_text("uds.cpm"))


@pytest.fixture()
def two_state_annotated(two_state_machine, two_state_cpm):
    return annotate(two_state_machine, two_state_cpm)
