"""Test cases for the core module."""
import pathlib

import pytest
from attrs import evolve

import parley.core
from parley.backends.scripted import LINES
from parley.config import MatrixConfig
from parley.core import (
    aggregate_runs,
    cell_path,
    reclassify,
    run_matrix,
    run_sweep,
    summaries_dir,
)
from parley.metrics import qualify
from parley.records import Action
from parley.schema import read_runs

from .helpers import make_run


def _config(tmp_path: pathlib.Path, families, conditions=("none_384",), **kwargs):
    defaults = dict(runs_per_cell=15, base_seed=20240101, n_shuffles=1_000, resamples=1_000)
    defaults.update(kwargs)
    return MatrixConfig(
        experiments=["exp1_fragmented"],
        families=list(families),
        conditions=list(conditions),
        output_dir=tmp_path / "results",
        **defaults,
    )


@pytest.fixture
def acceptance(tmp_path: pathlib.Path):
    """One 15-run cell per scripted oracle policy."""
    config = _config(
        tmp_path,
        [
            "scripted:hardline",
            "scripted:conceder(2)",
            "scripted:active_unresolved",
            "scripted:noisy(1.0,hardline)",
        ],
    )
    tally = run_matrix(config)
    assert tally.ok
    assert tally.written == 60
    aggregate = aggregate_runs(config)
    return config, {s.model_family: s for s in aggregate.summaries}


def test_run_matrix_writes_cells(acceptance):
    """Each cell file holds its runs in order, seeded by cell and index."""
    config, _ = acceptance
    path = cell_path(config.runs_dir, "exp1_fragmented", "scripted:hardline", "none_384")
    assert path.name == "exp1_fragmented__scripted-hardline__none_384.jsonl"
    records = read_runs(path)
    assert [r.run_index for r in records] == list(range(15))
    assert records[3].seed == config.seed(0, 3)
    assert records[3].run_id == "exp1_fragmented/scripted:hardline/none_384/003"


def test_acceptance_hardline(acceptance):
    """Rigid agents: every run escalates to the authority at the turn cap."""
    _, summaries = acceptance
    summary = summaries["scripted:hardline"]
    assert summary.n_runs == 15
    assert summary.outcome_counts["AUTHORITY_DECISION"] == 15
    assert summary.max_turn_exhaustion_rate == 1.0
    assert summary.action_entropy_mean == 0.0
    assert summary.concession_arc_rate == 0.0
    assert summary.authority_subtypes["hardline_escalation"] == 15
    assert not qualify(summary).passed


def test_acceptance_conceder(acceptance):
    """Conceding agents reach compromise in every run."""
    _, summaries = acceptance
    summary = summaries["scripted:conceder(2)"]
    assert summary.outcome_counts["COMPROMISE"] == 15
    assert summary.max_turn_exhaustion_rate == 0.0
    assert summary.concession_arc_rate == 1.0
    assert summary.action_entropy_mean == pytest.approx(0.918296, abs=1e-6)
    assert summary.first_concession_turn_mean == 8.0
    assert summary.outcome_entropy == 0.0
    assert qualify(summary).passed


def test_acceptance_active_unresolved(acceptance):
    """Bargaining without closure: authority decisions with concession arcs."""
    _, summaries = acceptance
    summary = summaries["scripted:active_unresolved"]
    assert summary.outcome_counts["AUTHORITY_DECISION"] == 15
    assert summary.max_turn_exhaustion_rate == 1.0
    assert summary.concession_arc_rate == 1.0
    assert summary.action_entropy_mean == pytest.approx(2.0)
    assert summary.authority_subtypes["active_unresolved"] == 15
    assert qualify(summary).failed_checks == ("universal_exhaustion",)


def test_acceptance_noisy(acceptance):
    """Unparseable agents are counted as format errors, never as actions."""
    _, summaries = acceptance
    summary = summaries["scripted:noisy(1.0,hardline)"]
    assert summary.parse_success_rate == 0.0
    assert summary.zero_action_runs == 15
    assert summary.avg_format_error_turns == 48.0
    assert summary.avg_provider_error_turns == 0.0
    assert summary.action_entropy_mean == 0.0


def test_aggregate_writes_summaries(acceptance):
    """Summaries and contrasts are written as CSV and JSON lines."""
    config, _ = acceptance
    directory = summaries_dir(config)
    for name in ["summaries.csv", "summaries.jsonl", "contrasts.csv", "contrasts.jsonl"]:
        assert (directory / name).is_file()
    lines = (directory / "summaries.jsonl").read_text(encoding="utf-8").splitlines()
    assert len(lines) == 4


def test_run_matrix_resume(tmp_path: pathlib.Path):
    """Stored runs are skipped; without resume cells are rewritten."""
    config = _config(tmp_path, ["scripted:conceder(2)"], runs_per_cell=4)
    assert run_matrix(config).written == 4
    again = run_matrix(config)
    assert (again.written, again.skipped) == (0, 4)
    fresh = run_matrix(config, resume=False)
    assert (fresh.written, fresh.skipped) == (4, 0)
    path = cell_path(config.runs_dir, "exp1_fragmented", "scripted:conceder(2)", "none_384")
    assert len(read_runs(path)) == 4


def test_run_matrix_resume_partial_cell(tmp_path: pathlib.Path):
    """Only the missing runs of a cell are executed."""
    config = _config(tmp_path, ["scripted:hardline"], runs_per_cell=2)
    run_matrix(config)
    tally = run_matrix(evolve(config, runs_per_cell=3))
    assert (tally.written, tally.skipped) == (1, 2)


def test_run_matrix_stores_lone_surrogates(tmp_path: pathlib.Path, monkeypatch):
    """Provider text that is not encodable as UTF-8 is stored escaped."""
    monkeypatch.setitem(LINES, Action.CONCEDE, "We give ground \ud800")
    config = _config(tmp_path, ["scripted:conceder(2)", "scripted:hardline"], runs_per_cell=2)
    tally = run_matrix(config)
    assert tally.ok
    assert tally.written == 4
    path = cell_path(config.runs_dir, "exp1_fragmented", "scripted:conceder(2)", "none_384")
    path.read_bytes().decode("ascii")
    messages = [turn.message for record in read_runs(path) for turn in record.turns]
    assert "We give ground \ud800" in messages


def test_run_matrix_isolates_write_failures(tmp_path: pathlib.Path, monkeypatch):
    """A cell that cannot be written fails its runs and spares the others."""
    append = parley.core.append_runs

    def failing_append(path, records):
        if "conceder" in pathlib.Path(path).name:
            raise OSError("disk full")
        return append(path, records)

    monkeypatch.setattr(parley.core, "append_runs", failing_append)
    config = _config(tmp_path, ["scripted:conceder(2)", "scripted:hardline"], runs_per_cell=2)
    tally = run_matrix(config)
    assert not tally.ok
    assert tally.failed == [
        "exp1_fragmented/scripted:conceder(2)/none_384/000",
        "exp1_fragmented/scripted:conceder(2)/none_384/001",
    ]
    assert tally.written == 2
    path = cell_path(config.runs_dir, "exp1_fragmented", "scripted:hardline", "none_384")
    assert len(read_runs(path)) == 2


def test_run_matrix_is_deterministic(tmp_path: pathlib.Path):
    """Identical matrices produce byte-identical stores and summaries."""
    families = ["scripted:noisy(0.3,conceder(2))", "scripted:active_unresolved"]
    first = _config(tmp_path / "a", families, runs_per_cell=5)
    second = _config(tmp_path / "b", families, runs_per_cell=5, workers=3)
    for config in (first, second):
        run_matrix(config)
        aggregate_runs(config)
    names = sorted(p.name for p in first.runs_dir.iterdir())
    assert names == sorted(p.name for p in second.runs_dir.iterdir())
    for name in names:
        assert (first.runs_dir / name).read_bytes() == (second.runs_dir / name).read_bytes()
    for name in ["summaries.csv", "contrasts.csv"]:
        assert (first.summaries_dir / name).read_bytes() == (
            second.summaries_dir / name
        ).read_bytes()


def test_run_matrix_missing_credentials(tmp_path: pathlib.Path, monkeypatch):
    """A live family without its key stops the matrix before any run."""
    monkeypatch.delenv("GEMINI_API_KEY", raising=False)
    config = _config(tmp_path, ["scripted:hardline", "gemini"])
    with pytest.raises(ValueError):
        run_matrix(config)
    assert not config.runs_dir.exists()


def test_contrasts(tmp_path: pathlib.Path):
    """Scaffold-versus-native contrasts are primary and Holm-adjusted;
    scaffold-versus-none contrasts are supporting."""
    config = _config(
        tmp_path,
        ["scripted:hardline"],
        conditions=["none_384", "scaffold_1024", "native_1024"],
    )
    run_matrix(config)
    aggregate = aggregate_runs(config)
    primary = [c for c in aggregate.contrasts if c.family == "primary"]
    supporting = [c for c in aggregate.contrasts if c.family == "supporting"]
    assert sorted(c.metric_name for c in primary) == [
        "action_entropy",
        "concession_arc_rate",
        "max_turn_exhaustion_rate",
    ]
    for result in primary:
        assert (result.group_a, result.group_b) == ("scaffold_1024", "native_1024")
        assert result.p_value == 1.0
        assert result.cliffs_delta == 0.0
        assert result.p_holm == 1.0
    assert len(supporting) == 3
    assert all(c.group_b == "none_384" and c.p_holm is None for c in supporting)
    frame = aggregate.contrasts_frame()
    assert len(frame) == 6


def test_aggregate_error_excluded(tmp_path: pathlib.Path):
    """Error exclusion drops every run with an error turn."""
    config = _config(
        tmp_path,
        ["scripted:hardline", "scripted:noisy(1.0,hardline)"],
        runs_per_cell=3,
    )
    run_matrix(config)
    aggregate = aggregate_runs(config, error_excluded=True)
    assert [s.model_family for s in aggregate.summaries] == ["scripted:hardline"]
    assert all(s.error_excluded for s in aggregate.summaries)
    assert (config.summaries_dir / "error_excluded" / "summaries.csv").is_file()
    assert not (config.summaries_dir / "summaries.csv").exists()


def test_aggregate_rejects_invalid_store(tmp_path: pathlib.Path):
    """Raises when a stored run violates an invariant."""
    config = _config(tmp_path, ["scripted:hardline"], runs_per_cell=1)
    run_matrix(config)
    path = next(config.runs_dir.iterdir())
    text = path.read_text(encoding="utf-8")
    path.write_text(text.replace('"exhausted":true', '"exhausted":false'), encoding="utf-8")
    with pytest.raises(ValueError):
        aggregate_runs(config)


def test_min_turn_rule_sweep(tmp_path: pathlib.Path):
    """Stalled and agreed runs keep their outcome at every nearby minimum."""
    config = _config(
        tmp_path, ["scripted:hardline", "scripted:conceder(2)"], runs_per_cell=3
    )
    run_matrix(config)
    table = run_sweep("min_turn_rule", config)
    assert len(table) == 6
    assert list(table.columns[-4:]) == [
        "outcome_min_4",
        "outcome_min_5",
        "outcome_min_6",
        "changed",
    ]
    assert not table["changed"].any()
    assert (config.sweeps_dir / "min_turn_rule" / "reclassified.csv").is_file()


def test_reclassify_without_terminal_state():
    """Raises for runs stored without a terminal state."""
    with pytest.raises(ValueError):
        reclassify(make_run(), 5)


def test_temperature_sweep(tmp_path: pathlib.Path):
    """Each temperature re-executes the matrix under its own condition id."""
    config = _config(tmp_path, ["scripted:hardline"], runs_per_cell=2)
    table = run_sweep("temperature", config, values=[0.3, 1.0])
    assert sorted(table["condition_id"]) == ["none_384@t0.3", "none_384@t1"]
    assert (config.sweeps_dir / "temperature" / "sweep.csv").is_file()
    assert table.attrs["failed"] == []
    records = read_runs(
        cell_path(
            config.sweeps_dir / "temperature" / "runs",
            "exp1_fragmented",
            "scripted:hardline",
            "none_384@t0.3",
        )
    )
    assert records[0].condition.temperature == 0.3


def test_token_budget_sweep(tmp_path: pathlib.Path):
    """Each token budget becomes its own condition."""
    config = _config(tmp_path, ["scripted:hardline"], runs_per_cell=2)
    table = run_sweep("token_budget", config)
    assert sorted(table["condition_id"]) == ["none_1024", "none_384"]


def test_unknown_sweep(tmp_path: pathlib.Path):
    """Raises for sweep kinds that do not exist."""
    with pytest.raises(ValueError):
        run_sweep("seed", _config(tmp_path, ["scripted:hardline"]))
