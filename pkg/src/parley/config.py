"""Matrix configuration.

A matrix is declared in a single YAML file::

    experiments: [exp1_fragmented, exp2_unified, exp3_grid]
    families: [gemini, deepseek]
    conditions: [none_384, scaffold_1024, native_1024]
    runs_per_cell: 15
    base_seed: 20240101
    output_dir: results

Experiments, families and conditions refer to packaged definitions unless
the file defines them itself under ``scenarios`` (paths to scenario files),
``family_definitions`` or ``condition_definitions``. Scripted families are
written ``scripted:<policy>``. Credentials are never part of the file: live
families name the environment variable holding their key.
"""
from __future__ import annotations

import logging
import os
import pathlib
import re
import typing as t

import importlib_resources
import yaml
from attrs import define, field, frozen, validators

from .backends.factory import factory
from .backends.scripted import ScriptedPolicy
from .constants import (
    DEFAULT_BACKOFF_FACTOR,
    DEFAULT_CI_LEVEL,
    DEFAULT_N_SHUFFLES,
    DEFAULT_RESAMPLES,
    DEFAULT_RETRIES,
    DEFAULT_RUNS_PER_CELL,
    MIN_RESAMPLES,
)
from .records import ConditionSpec, ScenarioSpec
from .scenarios import load_scenario

logger = logging.getLogger(__name__)

SCRIPTED_PREFIX = "scripted:"

MATRIX_KEYS = {
    "experiments",
    "families",
    "conditions",
    "runs_per_cell",
    "base_seed",
    "output_dir",
    "workers",
    "scenarios",
    "family_definitions",
    "condition_definitions",
    "n_shuffles",
    "resamples",
    "ci_level",
}


def _read_packaged(name: str) -> t.Dict[str, t.Any]:
    path = importlib_resources.files("parley.data").joinpath(name)
    return yaml.safe_load(path.read_text(encoding="utf-8"))


def slug(identifier: str) -> str:
    """File-name-safe form of an identifier."""
    return re.sub(r"[^A-Za-z0-9._+-]+", "-", identifier).strip("-")


# -- model families ---------------------------------------------------------


@frozen(kw_only=True)
class FamilySpec:
    """Model family: a live adapter configuration or a scripted policy."""

    family_id: str
    kind: str
    model: t.Optional[str] = None
    base_url: t.Optional[str] = None
    api_key_env: t.Optional[str] = None
    reasoning_style: str = "effort"
    max_concurrency: t.Optional[int] = None
    retries: int = DEFAULT_RETRIES
    backoff_factor: float = DEFAULT_BACKOFF_FACTOR
    policy: t.Optional[str] = None

    def __attrs_post_init__(self):
        if self.kind not in factory.registered_identifiers:
            msg = (
                f"family {self.family_id}: unknown backend kind {self.kind!r}; "
                f"known kinds are {factory.registered_identifiers}"
            )
            logger.critical(msg)
            raise ValueError(msg)
        if self.is_scripted:
            ScriptedPolicy.from_identifier(self.policy or "")
        elif not (self.model and self.base_url):
            msg = f"family {self.family_id}: live families need a model and a base_url"
            logger.critical(msg)
            raise ValueError(msg)

    @property
    def is_scripted(self) -> bool:
        return self.kind == "scripted"

    def check_credentials(self) -> None:
        """Ensure the family's API key is available.

        Raises:
            ValueError: If the environment variable is not set.
        """
        if self.is_scripted or self.api_key_env is None:
            return
        if not os.environ.get(self.api_key_env):
            msg = (
                f"family {self.family_id}: environment variable "
                f"{self.api_key_env} is not set"
            )
            logger.critical(msg)
            raise ValueError(msg)


def family_from_dict(family_id: str, raw: t.Dict[str, t.Any]) -> FamilySpec:
    try:
        return FamilySpec(family_id=family_id, **raw)
    except TypeError as e:
        msg = f"invalid family definition {family_id!r}: {e}"
        logger.critical(msg)
        raise ValueError(msg) from e


def load_families() -> t.Dict[str, FamilySpec]:
    """Packaged live model families."""
    raw = _read_packaged("families.yaml")["families"]
    return {k: family_from_dict(k, v) for k, v in raw.items()}


def resolve_family(
    identifier: str, inline: t.Optional[t.Dict[str, t.Any]] = None
) -> FamilySpec:
    """Resolve a family identifier.

    Raises:
        ValueError: If the identifier is unknown.
    """
    if identifier.startswith(SCRIPTED_PREFIX):
        return FamilySpec(
            family_id=identifier,
            kind="scripted",
            policy=identifier[len(SCRIPTED_PREFIX) :],
        )
    if inline and identifier in inline:
        return family_from_dict(identifier, inline[identifier])
    families = load_families()
    if identifier not in families:
        msg = f"unknown model family {identifier!r}; known: {sorted(families)}"
        logger.critical(msg)
        raise ValueError(msg)
    return families[identifier]


# -- conditions -------------------------------------------------------------


def condition_from_dict(condition_id: str, raw: t.Dict[str, t.Any]) -> ConditionSpec:
    try:
        return ConditionSpec(condition_id=condition_id, **raw)
    except TypeError as e:
        msg = f"invalid condition definition {condition_id!r}: {e}"
        logger.critical(msg)
        raise ValueError(msg) from e


def load_conditions() -> t.Dict[str, ConditionSpec]:
    """Packaged condition presets."""
    raw = _read_packaged("conditions.yaml")["conditions"]
    return {k: condition_from_dict(k, v) for k, v in raw.items()}


def resolve_condition(
    identifier: str, inline: t.Optional[t.Dict[str, t.Any]] = None
) -> ConditionSpec:
    """Resolve a condition identifier.

    Raises:
        ValueError: If the identifier is unknown.
    """
    if inline and identifier in inline:
        return condition_from_dict(identifier, inline[identifier])
    conditions = load_conditions()
    if identifier not in conditions:
        msg = f"unknown condition {identifier!r}; known: {sorted(conditions)}"
        logger.critical(msg)
        raise ValueError(msg)
    return conditions[identifier]


# -- matrix -----------------------------------------------------------------


def _non_empty(instance, attribute, value):
    if not value:
        msg = f"{attribute.name} must not be empty"
        logger.critical(msg)
        raise ValueError(msg)


@define(kw_only=True)
class MatrixConfig:
    """Run matrix declaration."""

    experiments: t.List[str] = field(converter=list, validator=_non_empty)
    families: t.List[str] = field(converter=list, validator=_non_empty)
    conditions: t.List[str] = field(converter=list, validator=_non_empty)
    runs_per_cell: int = field(default=DEFAULT_RUNS_PER_CELL, validator=validators.ge(1))
    base_seed: int = field(default=0, validator=validators.ge(0))
    output_dir: pathlib.Path = field(default="results", converter=pathlib.Path)
    workers: int = field(default=1, validator=validators.ge(1))
    scenarios: t.Dict[str, str] = field(factory=dict)
    family_definitions: t.Dict[str, t.Dict[str, t.Any]] = field(factory=dict)
    condition_definitions: t.Dict[str, t.Dict[str, t.Any]] = field(factory=dict)
    n_shuffles: int = field(default=DEFAULT_N_SHUFFLES, validator=validators.ge(1))
    resamples: int = field(default=DEFAULT_RESAMPLES, validator=validators.ge(MIN_RESAMPLES))
    ci_level: float = DEFAULT_CI_LEVEL

    @property
    def runs_dir(self) -> pathlib.Path:
        return self.output_dir / "runs"

    @property
    def summaries_dir(self) -> pathlib.Path:
        return self.output_dir / "summaries"

    @property
    def report_dir(self) -> pathlib.Path:
        return self.output_dir / "report"

    @property
    def sweeps_dir(self) -> pathlib.Path:
        return self.output_dir / "sweeps"

    def cells(self) -> t.Iterator[t.Tuple[int, str, str, str]]:
        """Cells as ``(cell_index, experiment, family, condition)``, iterated
        experiment first, then family, then condition."""
        index = 0
        for experiment in self.experiments:
            for family in self.families:
                for condition in self.conditions:
                    yield index, experiment, family, condition
                    index += 1

    def seed(self, cell_index: int, run_index: int) -> int:
        """Seed of a run: ``base_seed + cell_index * runs_per_cell + run_index``."""
        return self.base_seed + cell_index * self.runs_per_cell + run_index


def load_matrix(path: t.Union[str, os.PathLike]) -> MatrixConfig:
    """Read a matrix file.

    Relative `output_dir` and scenario paths are resolved against the
    directory of the file.

    Raises:
        ValueError: If the file is not a valid matrix declaration.
    """
    path = pathlib.Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as e:
        msg = f"cannot read matrix config {path}: {e}"
        logger.critical(msg)
        raise ValueError(msg) from e
    if not isinstance(raw, dict):
        msg = f"matrix config {path} is not a mapping"
        logger.critical(msg)
        raise ValueError(msg)
    unknown = set(raw) - MATRIX_KEYS
    if unknown:
        msg = f"matrix config {path}: unknown keys {sorted(unknown)}"
        logger.critical(msg)
        raise ValueError(msg)

    here = path.parent
    raw["output_dir"] = here / raw.get("output_dir", "results")
    raw["scenarios"] = {
        k: str(here / v) for k, v in (raw.get("scenarios") or {}).items()
    }
    try:
        return MatrixConfig(**raw)
    except TypeError as e:
        msg = f"invalid matrix config {path}: {e}"
        logger.critical(msg)
        raise ValueError(msg) from e


@frozen
class ResolvedMatrix:
    """Matrix identifiers resolved to definitions."""

    scenarios: t.Dict[str, ScenarioSpec]
    families: t.Dict[str, FamilySpec]
    conditions: t.Dict[str, ConditionSpec]


def resolve(config: MatrixConfig, check_credentials: bool = True) -> ResolvedMatrix:
    """Resolve every identifier of a matrix.

    Raises:
        ValueError: If an identifier does not resolve or, with
            `check_credentials`, a live family's key is missing.
    """
    scenarios = {
        e: load_scenario(config.scenarios.get(e, e)) for e in config.experiments
    }
    families = {
        f: resolve_family(f, config.family_definitions) for f in config.families
    }
    conditions = {
        c: resolve_condition(c, config.condition_definitions)
        for c in config.conditions
    }
    if check_credentials:
        for family in families.values():
            family.check_credentials()
    return ResolvedMatrix(scenarios, families, conditions)
