"""Closed-loop episode tests on the shipped scenarios."""

import pandas as pd
import pytest

from slas_engine.data.scenario import load_scenario
from slas_engine.models import PolicyName
from slas_engine.sim.episode import BASE_COLUMNS, EpisodeLog, EventKind, run_episode
from slas_engine.sim.policies import MobilPolicy, NoChangePolicy, SlasPolicy, make_policy

# empty road: 2 s ramp from 8 to 15 m/s covers 23 m, the remaining 327 m at 15 m/s
EMPTY_ROAD_TRAVEL_TIME = 2.0 + 327.0 / 15.0


@pytest.fixture(scope="module")
def nochange_case_study() -> EpisodeLog:
    return run_episode(load_scenario("case_study"), NoChangePolicy())


@pytest.fixture(scope="module")
def mobil_case_study() -> EpisodeLog:
    return run_episode(load_scenario("case_study"), MobilPolicy())


@pytest.fixture(scope="module")
def slas_case_study() -> EpisodeLog:
    return run_episode(load_scenario("case_study"), SlasPolicy())


class TestNoChange:
    def test_stays_in_lane(self, nochange_case_study: EpisodeLog) -> None:
        df = nochange_case_study.samples
        assert (df["target_lane"] == 1).all()
        assert (df["ego_lane"] == 1).all()
        assert nochange_case_study.count(EventKind.LANE_CHANGE_START) == 0

    def test_follows_the_slow_leader_to_the_goal(self, nochange_case_study: EpisodeLog) -> None:
        m = nochange_case_study.metrics
        assert m is not None
        assert not nochange_case_study.collided
        assert m.travel_time is not None
        # vehicle 1 holds 5 m/s on the 350 m road
        assert m.travel_time > 60.0
        assert nochange_case_study.events[-1].kind is EventKind.GOAL

    def test_samples_layout(self, nochange_case_study: EpisodeLog) -> None:
        df = nochange_case_study.samples
        assert list(df.columns[: len(BASE_COLUMNS)]) == list(BASE_COLUMNS)
        assert "veh5_lane" in df.columns
        assert (df["solve_status"] == "none").all()
        assert df["time"].diff().dropna().round(9).eq(0.05).all()

    def test_stops_behind_a_blocked_road(self) -> None:
        log = run_episode(load_scenario("blocked"), NoChangePolicy())
        assert log.metrics is not None
        assert not log.collided
        assert log.metrics.travel_time is None
        assert not log.metrics.valid
        assert log.samples["time"].iloc[-1] == pytest.approx(30.0)
        assert log.samples["ego_s"].iloc[-1] < 100.0 - 4.5

    def test_max_time_override(self) -> None:
        log = run_episode(load_scenario("empty_road"), NoChangePolicy(), max_time=2.0)
        assert log.samples["time"].iloc[-1] == pytest.approx(2.0)
        assert log.metrics is not None and not log.metrics.completed


class TestSerialisation:
    def test_csv_round_trip(self, nochange_case_study: EpisodeLog, tmp_path) -> None:
        csv_path, events_path = nochange_case_study.write(tmp_path)
        assert (csv_path.name, events_path.name) == ("episode.csv", "events.json")
        back = EpisodeLog.read_samples(csv_path)
        pd.testing.assert_frame_equal(back, nochange_case_study.samples, check_dtype=False)
        assert EpisodeLog.read_events(events_path) == nochange_case_study.events

    def test_named_stem(self, nochange_case_study: EpisodeLog, tmp_path) -> None:
        _, events_path = nochange_case_study.write(tmp_path, "episode_nochange")
        assert events_path.name == "episode_nochange_events.json"

    def test_header(self, nochange_case_study: EpisodeLog) -> None:
        header = nochange_case_study.header()
        assert header["policy"] == "nochange"
        assert header["events"]["goal"] == 1
        assert header["metrics"]["valid"] is True


class TestPolicies:
    def test_make_policy(self) -> None:
        assert isinstance(make_policy("slas"), SlasPolicy)
        assert isinstance(make_policy(PolicyName.MOBIL), MobilPolicy)
        assert isinstance(make_policy("nochange"), NoChangePolicy)
        with pytest.raises(ValueError):
            make_policy("greedy")

    def test_slas_requires_reset(self) -> None:
        policy = SlasPolicy()
        with pytest.raises(RuntimeError, match="reset"):
            policy.decide(None)  # type: ignore[arg-type]

    @pytest.mark.slow
    def test_mobil_case_study(self, mobil_case_study: EpisodeLog) -> None:
        assert not mobil_case_study.collided
        assert mobil_case_study.count(EventKind.LANE_CHANGE_START) >= 1


class TestAdvisoryPlanner:
    @pytest.mark.slow
    def test_empty_road_travel_time(self) -> None:
        sc = load_scenario("empty_road", ["planner.H=10", "planner.time_limit=2.0"])
        log = run_episode(sc, SlasPolicy())
        assert log.metrics is not None
        assert log.metrics.travel_time == pytest.approx(EMPTY_ROAD_TRAVEL_TIME, abs=0.06)
        assert (log.samples["target_lane"] == 1).all()
        assert log.planner_errors == 0

    @pytest.mark.slow
    def test_case_study_is_safe(self, slas_case_study: EpisodeLog) -> None:
        assert slas_case_study.metrics is not None
        assert not slas_case_study.collided
        assert slas_case_study.planner_errors == 0
        assert slas_case_study.count(EventKind.LANE_CHANGE_START) >= 1

    @pytest.mark.slow
    def test_travel_time_ordering(
        self,
        slas_case_study: EpisodeLog,
        mobil_case_study: EpisodeLog,
        nochange_case_study: EpisodeLog,
    ) -> None:
        slas, mobil, nochange = (
            _travel_time(log) for log in (slas_case_study, mobil_case_study, nochange_case_study)
        )
        assert slas < mobil < nochange
        assert slas <= 0.9 * mobil
        assert slas <= 0.7 * nochange

    @pytest.mark.slow
    def test_headway_ordering(
        self,
        slas_case_study: EpisodeLog,
        mobil_case_study: EpisodeLog,
        nochange_case_study: EpisodeLog,
    ) -> None:
        slas, mobil, nochange = (
            _headway(log) for log in (slas_case_study, mobil_case_study, nochange_case_study)
        )
        assert slas >= 1.15 * mobil
        assert slas >= 1.5 * nochange

    @pytest.mark.slow
    def test_first_incumbent_within_budget(self, slas_case_study: EpisodeLog) -> None:
        ticks = slas_case_study.samples
        ticks = ticks[ticks["solve_status"] != "none"]
        assert len(ticks) >= 50
        in_time = pd.to_numeric(ticks["first_incumbent_time"]).le(0.2)
        assert in_time.mean() >= 0.95

    @pytest.mark.slow
    def test_blocked_road_is_survived(self) -> None:
        sc = load_scenario("blocked", ["planner.H=15"])
        log = run_episode(sc, SlasPolicy())
        assert not log.collided
        assert log.metrics is not None and log.metrics.travel_time is None


class TestDeterminism:
    TIMING = ["first_incumbent_time", "solve_time"]

    @pytest.mark.slow
    def test_node_limited_planner_repeats_exactly(self) -> None:
        overrides = ["planner.H=15", "planner.node_limit=10", "planner.time_limit=60.0"]
        logs = [
            run_episode(load_scenario("case_study", overrides), SlasPolicy()) for _ in range(2)
        ]
        first, second = (log.samples.drop(columns=self.TIMING) for log in logs)
        pd.testing.assert_frame_equal(first, second)
        assert logs[0].events == logs[1].events

    @pytest.mark.slow
    def test_baseline_csv_is_byte_identical(self, tmp_path) -> None:
        paths = []
        for name in ("a", "b"):
            log = run_episode(load_scenario("case_study"), MobilPolicy())
            paths.append(log.write(tmp_path / name))
        for left, right in zip(*paths):
            assert left.read_bytes() == right.read_bytes()


# ─── Helpers ──────────────────────────────────────────────────────────────────


def _travel_time(log: EpisodeLog) -> float:
    assert log.metrics is not None and log.metrics.travel_time is not None
    return log.metrics.travel_time


def _headway(log: EpisodeLog) -> float:
    assert log.metrics is not None
    return log.metrics.mean_headway
