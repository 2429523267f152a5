"""Shared fixtures."""
import pytest

from parley.config import resolve_condition
from parley.records import ConditionSpec, ScenarioSpec
from parley.scenarios import load_scenario


@pytest.fixture
def spec() -> ScenarioSpec:
    """Four-actor scenario, authority first."""
    return load_scenario("exp1_fragmented")


@pytest.fixture
def none_384() -> ConditionSpec:
    return resolve_condition("none_384")


@pytest.fixture
def scaffold_1024() -> ConditionSpec:
    return resolve_condition("scaffold_1024")
