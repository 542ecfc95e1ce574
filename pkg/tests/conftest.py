import pytest

from fairpoi.corpus import (CheckIn, Dataset, Poi, SocialGraph, SyntheticConfig, assign_groups,
                            chronological_split, filter_sparse, generate_synthetic)
from fairpoi.recommenders import ModelKind, train

FIXTURE_CONFIG = SyntheticConfig(mean_checkins_per_user=60)
ACCEPTANCE_LINES = []


def make_fixture_dataset():
    """200-user / 500-POI synthetic fixture; POIs are kept even when rarely visited."""
    return filter_sparse(generate_synthetic(FIXTURE_CONFIG), 1, 10)


@pytest.fixture(scope="session")
def fixture_data():
    return make_fixture_dataset()


@pytest.fixture(scope="session")
def fixture_split(fixture_data):
    return chronological_split(fixture_data)


@pytest.fixture(scope="session")
def fixture_groups(fixture_split):
    return assign_groups(fixture_split.train)


@pytest.fixture(scope="session")
def fixture_models(fixture_split):
    return {k.value: train(k, fixture_split.train) for k in ModelKind}


def tiny_dataset():
    """Three users in two towns; u0 is the heavy user."""
    pois = {
        "a": Poi("a", 40.00, -100.00, "food"),
        "b": Poi("b", 40.01, -100.01, "food"),
        "c": Poi("c", 40.02, -100.00, "bar"),
        "d": Poi("d", 41.00, -101.00, "bar"),
        "e": Poi("e", 41.01, -101.02, "park"),
        "f": Poi("f", 40.03, -100.02, "park"),
    }
    visits = {
        "u0": "a b c a b d e a b c f a",
        "u1": "a b a c d a b c a b",
        "u2": "d e d e a d e d e f",
    }
    checkins = []
    for u, seq in visits.items():
        for t, p in enumerate(seq.split()):
            checkins.append(CheckIn(u, p, 1000 * t + int(u[1:])))
    social = SocialGraph.from_pairs([("u0", "u1"), ("u1", "u2")])
    return Dataset(frozenset(visits), pois, tuple(checkins), social)


@pytest.fixture
def tiny():
    return tiny_dataset()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
