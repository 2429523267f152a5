"""Test cases for the scenarios module."""
import pathlib

import pytest

from parley.scenarios import from_dict, identifiers, load_scenario, render_brief

PACKAGED = [
    "exp1_fragmented",
    "exp1_fragmented-authority_clear",
    "exp1_fragmented-hardline",
    "exp2_unified",
    "exp3_grid",
]


def test_identifiers():
    """Every packaged scenario is listed."""
    assert identifiers() == PACKAGED


@pytest.mark.parametrize("identifier", PACKAGED)
def test_load_scenario(identifier: str):
    """Packaged scenarios have one authority among several negotiators."""
    spec = load_scenario(identifier)
    assert spec.scenario_id == identifier
    assert sum(a.is_authority for a in spec.actors) == 1
    assert len(spec.actors) - 1 >= 2
    assert spec.turn_cap == 12
    assert spec.authority_min_turns == 5
    for actor in spec.actors:
        brief = render_brief(spec, actor.agent_id)
        assert actor.role_label in brief
        assert "{" not in brief


def test_load_scenario_unknown():
    """Raises when no packaged scenario has the identifier."""
    with pytest.raises(ValueError):
        load_scenario("exp9_missing")


def test_variant_overrides_one_brief():
    """A variant replaces the brief it names and inherits everything else."""
    base = load_scenario("exp1_fragmented")
    variant = load_scenario("exp1_fragmented-hardline")
    assert variant.base == "exp1_fragmented"
    assert variant.issue_bundle == base.issue_bundle
    assert variant.setting == base.setting
    changed = [
        a.agent_id
        for a, b in zip(variant.actors, base.actors)
        if a.brief_template != b.brief_template
    ]
    assert changed == ["dealers"]
    assert [a.role_label for a in variant.actors] == [a.role_label for a in base.actors]


def test_render_brief_lists_issues_and_counterparts(spec):
    """Briefs list the issues, the other parties and the turn cap."""
    brief = render_brief(spec, "exchange")
    for issue in spec.issue_bundle:
        assert f"- {issue}" in brief
    assert "the Dealers' Association" in brief
    assert str(spec.turn_cap) in brief


def _raw(brief: str = "Brief of {role_label}."):
    return {
        "scenario_id": "tiny",
        "issue_bundle": ["price"],
        "actors": [
            {"agent_id": "boss", "is_authority": True},
            {"agent_id": "a", "brief": brief},
            {"agent_id": "b"},
        ],
    }


def test_from_dict():
    """Briefs are rendered from the raw mapping."""
    spec = from_dict(_raw())
    assert render_brief(spec, "a") == "Brief of a."
    assert spec.authority.agent_id == "boss"


def test_from_dict_unknown_placeholder():
    """Raises when a brief uses an unknown placeholder."""
    with pytest.raises(ValueError):
        from_dict(_raw("Your budget is {budget}."))


def test_from_dict_unknown_key():
    """Raises on unknown top-level keys."""
    raw = _raw()
    raw["deadline"] = 3
    with pytest.raises(ValueError):
        from_dict(raw)


def test_load_scenario_from_path(tmp_path: pathlib.Path):
    """Scenario files outside the package load by path."""
    path = tmp_path / "tiny.yaml"
    path.write_text(
        "scenario_id: tiny\n"
        "issue_bundle: [price]\n"
        "actors:\n"
        "  - {agent_id: boss, is_authority: true}\n"
        "  - {agent_id: a}\n"
        "  - {agent_id: b}\n",
        encoding="utf-8",
    )
    spec = load_scenario(str(path))
    assert spec.agent_ids == ["boss", "a", "b"]


def test_load_scenario_base_cycle(tmp_path: pathlib.Path):
    """Raises when scenario bases form a cycle."""
    first, second = tmp_path / "first.yaml", tmp_path / "second.yaml"
    first.write_text(f"scenario_id: first\nbase: {second}\n", encoding="utf-8")
    second.write_text(f"scenario_id: second\nbase: {first}\n", encoding="utf-8")
    with pytest.raises(ValueError):
        load_scenario(str(first))
