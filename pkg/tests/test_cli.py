"""End-to-end tests of the ``slas`` command line."""

import json
from pathlib import Path

import pandas as pd
import pytest

from cli.main import (
    EXIT_BAD_SCENARIO,
    EXIT_OK,
    EXIT_RUN_FAILED,
    EXIT_UNWRITABLE,
    EXIT_USAGE,
    main,
)

CRASH_SCENARIO = {
    "name": "crash",
    "road": {"lanes": 1, "length_m": 200.0},
    "ego": {"s0_m": 0.0, "v0_mps": 15.0, "lane0": 0},
    "traffic": [{"id": 1, "lane": 0, "s0_m": 7.0, "v_mps": 0.0}],
    "sim": {"max_time_s": 10.0},
}


class TestRun:
    def test_writes_every_artifact(self, tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
        argv = ["run", "--scenario", "empty_road", "--policy", "nochange", "--out", str(tmp_path)]
        code = main(argv)
        assert code == EXIT_OK
        assert "seed: 0" in capsys.readouterr().out
        for name in ("episode.csv", "events.json", "summary.json"):
            assert (tmp_path / name).is_file()
        for panel in ("travel_time", "lateral", "headway"):
            assert (tmp_path / "plots" / f"{panel}.svg").is_file()

    def test_overrides_are_recorded(self, tmp_path: Path) -> None:
        argv = ["run", "--scenario", "empty_road", "--policy", "nochange", "--out", str(tmp_path)]
        code = main(argv + ["--set", "planner.gamma2=5", "--seed", "9"])
        assert code == EXIT_OK
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["scenario"]["planner"]["gamma2"] == 5.0
        assert summary["seed"] == 9
        assert summary["collisions"] == {"nochange": False}

    def test_collision_fails_the_run(self, tmp_path: Path) -> None:
        path = tmp_path / "crash.json"
        path.write_text(json.dumps(CRASH_SCENARIO))
        code = main(
            ["run", "--scenario", str(path), "--policy", "nochange", "--out", str(tmp_path / "o")]
        )
        assert code == EXIT_RUN_FAILED
        events = json.loads((tmp_path / "o" / "events.json").read_text())
        assert events[-1]["kind"] == "collision"


class TestCompare:
    def test_one_file_per_policy(self, tmp_path: Path) -> None:
        code = main(
            [
                "compare",
                "--scenario",
                "empty_road",
                "--policy",
                "nochange,mobil",
                "--out",
                str(tmp_path),
            ]
        )
        assert code == EXIT_OK
        assert (tmp_path / "episode_nochange.csv").is_file()
        assert (tmp_path / "episode_mobil_events.json").is_file()
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert set(summary["metrics"]) == {"nochange", "mobil"}
        assert summary["ratios"] == {}

    def test_needs_two_policies(self, tmp_path: Path) -> None:
        code = main(["compare", "--policy", "nochange", "--out", str(tmp_path)])
        assert code == EXIT_USAGE


class TestMonteCarlo:
    def test_tables_are_written(self, tmp_path: Path) -> None:
        code = main(
            [
                "montecarlo",
                "--scenario",
                "case_study",
                "--policy",
                "nochange",
                "--runs",
                "1",
                "--seed",
                "4",
                "--out",
                str(tmp_path),
            ]
        )
        assert code == EXIT_OK
        table = pd.read_csv(tmp_path / "montecarlo.csv")
        assert list(table["policy"]) == ["nochange"]
        runs = pd.read_csv(tmp_path / "montecarlo_runs.csv")
        assert len(runs) == 1
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["seed"] == 4
        assert summary["runs"] == 1

    def test_zero_runs(self, tmp_path: Path) -> None:
        assert main(["montecarlo", "--runs", "0", "--out", str(tmp_path)]) == EXIT_USAGE


class TestExitCodes:
    def test_invalid_field(self, tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
        code = main(["run", "--set", "planner.H=0", "--out", str(tmp_path)])
        assert code == EXIT_BAD_SCENARIO
        assert "planner.H" in capsys.readouterr().err

    def test_missing_scenario_file(self, tmp_path: Path) -> None:
        code = main(["run", "--scenario", str(tmp_path / "nope.json"), "--out", str(tmp_path)])
        assert code == EXIT_BAD_SCENARIO

    def test_malformed_override(self, tmp_path: Path) -> None:
        assert main(["run", "--set", "planner.H", "--out", str(tmp_path)]) == EXIT_BAD_SCENARIO

    def test_unwritable_output(self, tmp_path: Path) -> None:
        blocker = tmp_path / "file"
        blocker.write_text("")
        code = main(["run", "--policy", "nochange", "--out", str(blocker / "sub")])
        assert code == EXIT_UNWRITABLE

    def test_unknown_policy(self, tmp_path: Path) -> None:
        with pytest.raises(SystemExit) as exc:
            main(["run", "--policy", "greedy", "--out", str(tmp_path)])
        assert exc.value.code == EXIT_USAGE

    def test_run_takes_one_policy(self, tmp_path: Path) -> None:
        code = main(["run", "--policy", "nochange,mobil", "--out", str(tmp_path)])
        assert code == EXIT_USAGE

    def test_missing_subcommand(self) -> None:
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == EXIT_USAGE
