"""Scenario loading.

Scenarios are declared in YAML files. The packaged ones live in
``parley/data/scenarios`` and are addressed by their identifier; other
files can be loaded by path. A scenario may name a `base` scenario and
override its title, setting, parameters or individual actors (matched by
``agent_id``).

Briefs are templates: the scenario's shared `setting` followed by the
actor's own brief, formatted with the placeholders listed in
`PLACEHOLDERS`.
"""
from __future__ import annotations

import logging
import os
import string
import typing as t

import importlib_resources
import yaml

from .records import Actor, ScenarioSpec

logger = logging.getLogger(__name__)

PACKAGE = "parley.data.scenarios"

PLACEHOLDERS = (
    "agent_id",
    "role_label",
    "title",
    "issues",
    "turn_cap",
    "authority_role",
    "counterparts",
)

SCENARIO_KEYS = {
    "scenario_id",
    "base",
    "title",
    "setting",
    "issue_bundle",
    "turn_cap",
    "authority_min_turns",
    "min_turn_unit",
    "transcript_window",
    "actors",
}


def identifiers() -> t.List[str]:
    """Identifiers of the packaged scenarios."""
    return sorted(
        path.name[: -len(".yaml")]
        for path in importlib_resources.files(PACKAGE).iterdir()
        if path.name.endswith(".yaml")
    )


def _read_raw(identifier: str) -> t.Dict[str, t.Any]:
    if identifier.endswith((".yaml", ".yml")) or os.sep in identifier:
        with open(identifier, encoding="utf-8") as f:
            raw = yaml.safe_load(f)
    else:
        path = importlib_resources.files(PACKAGE).joinpath(f"{identifier}.yaml")
        if not path.is_file():
            msg = (
                f"unknown scenario {identifier!r}; packaged scenarios are "
                f"{identifiers()}"
            )
            logger.critical(msg)
            raise ValueError(msg)
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    if not isinstance(raw, dict):
        msg = f"scenario {identifier!r} is not a mapping"
        logger.critical(msg)
        raise ValueError(msg)
    return raw


def _merge(base: t.Dict[str, t.Any], override: t.Dict[str, t.Any]) -> t.Dict[str, t.Any]:
    merged = {k: v for k, v in base.items() if k != "base"}
    for key, value in override.items():
        if key != "actors":
            merged[key] = value
    actors = {a["agent_id"]: dict(a) for a in base.get("actors", [])}
    for actor in override.get("actors", []):
        if actor["agent_id"] not in actors:
            msg = (
                f"scenario {override.get('scenario_id')!r} overrides unknown "
                f"actor {actor['agent_id']!r}"
            )
            logger.critical(msg)
            raise ValueError(msg)
        actors[actor["agent_id"]].update(actor)
    merged["actors"] = list(actors.values())
    return merged


def _resolve(identifier: str, seen: t.Tuple[str, ...] = ()) -> t.Dict[str, t.Any]:
    if identifier in seen:
        msg = f"scenario base cycle: {' -> '.join(seen + (identifier,))}"
        logger.critical(msg)
        raise ValueError(msg)
    raw = _read_raw(identifier)
    if raw.get("base"):
        return _merge(_resolve(raw["base"], seen + (identifier,)), raw)
    return raw


def from_dict(raw: t.Dict[str, t.Any]) -> ScenarioSpec:
    """Build a scenario from its mapping form (no `base` resolution).

    Raises:
        ValueError: If a key is unknown or a brief uses an unknown
            placeholder.
    """
    unknown = set(raw) - SCENARIO_KEYS
    if unknown:
        msg = f"unknown scenario keys {sorted(unknown)}"
        logger.critical(msg)
        raise ValueError(msg)
    fields = {k: v for k, v in raw.items() if k != "actors"}
    actors = [
        Actor(
            agent_id=a["agent_id"],
            role_label=a.get("role_label", a["agent_id"]),
            is_authority=bool(a.get("is_authority", False)),
            brief_template=a.get("brief", ""),
        )
        for a in raw.get("actors", [])
    ]
    spec = ScenarioSpec(actors=actors, **fields)
    for actor in spec.actors:
        render_brief(spec, actor.agent_id)
    return spec


def load_scenario(identifier: str) -> ScenarioSpec:
    """Load a packaged scenario by identifier, or a scenario file by path.

    Raises:
        ValueError: If the scenario is unknown or invalid.
    """
    logger.debug("loading scenario %s", identifier)
    raw = _resolve(identifier)
    try:
        return from_dict(raw)
    except (TypeError, KeyError) as e:
        msg = f"invalid scenario {identifier!r}: {e}"
        logger.critical(msg)
        raise ValueError(msg) from e


def render_brief(spec: ScenarioSpec, agent_id: str) -> str:
    """Private brief of `agent_id`.

    Raises:
        ValueError: If the template uses a placeholder outside
            `PLACEHOLDERS`.
    """
    actor = next(a for a in spec.actors if a.agent_id == agent_id)
    template = "\n\n".join(s.strip() for s in (spec.setting, actor.brief_template) if s)
    fields = [f for _, f, _, _ in string.Formatter().parse(template) if f is not None]
    unknown = sorted({f for f in fields if f not in PLACEHOLDERS})
    if unknown:
        msg = f"scenario {spec.scenario_id}: unknown brief placeholders {unknown}"
        logger.critical(msg)
        raise ValueError(msg)
    return template.format(
        agent_id=actor.agent_id,
        role_label=actor.role_label,
        title=spec.title,
        issues="\n".join(f"- {issue}" for issue in spec.issue_bundle),
        turn_cap=spec.turn_cap,
        authority_role=spec.authority.role_label,
        counterparts=", ".join(
            a.role_label for a in spec.actors if a.agent_id != agent_id
        ),
    )
