import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from perchsim.autonomy import (
    AutoAccept,
    AutoReject,
    AutonomyConfig,
    AutonomyState,
    Event,
    EventLog,
    FailureDetectorConfig,
    FsmInputs,
    Human,
    ReplayMismatch,
    ScheduledRecovery,
    detect_freefall,
    fsm_step,
    recovery_reaction,
    replay_events,
)
from perchsim.gripper import Engaged, MechanicalFailure, Triggered
from perchsim.sim_core import ImuSample

S = AutonomyState
CFG = AutonomyConfig()


def imu_stream(magnitude, n=10, rate=100.0, t0=0.0):
    return [
        ImuSample(specific_force=np.array([0.0, 0.0, magnitude]), timestamp=t0 + k / rate)
        for k in range(n)
    ]


class TestDetector:
    def test_threshold_decisions(self):
        cfg = FailureDetectorConfig()
        decisions = [
            detect_freefall(imu_stream(m), cfg, S.PERCHED) for m in (9.8, 7.1, 6.9, 0.0)
        ]
        assert decisions == [False, False, True, True]

    def test_never_fires_outside_armed_states(self):
        cfg = FailureDetectorConfig()
        for state in (S.IDLE, S.SEARCH_TREE, S.FLY_TO_PERCH, S.RECOVERING, S.SAFE_HOVER):
            assert not detect_freefall(imu_stream(0.0), cfg, state)

    def test_detection_delay_within_window_plus_tick(self):
        cfg = FailureDetectorConfig()
        rate = 100.0
        samples = imu_stream(9.8, n=200, rate=rate)
        fall_start = samples[-1].timestamp
        fired_at = None
        for k in range(1, 20):
            t = fall_start + k / rate
            samples.append(ImuSample(np.zeros(3), timestamp=t))
            if detect_freefall(samples, cfg, S.PERCHED):
                fired_at = t
                break
        assert fired_at is not None
        assert fired_at - fall_start <= cfg.window + 1.0 / rate + 1e-9

    def test_noisy_hover_never_fires(self):
        cfg = FailureDetectorConfig()
        rng = np.random.default_rng(1)
        samples = []
        for k in range(2000):
            f = np.array([0.0, 0.0, 9.8]) + rng.normal(0.0, 0.05, 3)
            samples.append(ImuSample(specific_force=f, timestamp=k / 100.0))
            assert not detect_freefall(samples[-5:], cfg, S.PERCHED)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            FailureDetectorConfig(accel_threshold=10.0)
        with pytest.raises(ValueError):
            FailureDetectorConfig(accel_threshold=0.0)


class TestRecoveryReaction:
    def test_latency_and_setpoint(self):
        sched = recovery_reaction(5.0, np.array([2.0, 0.0, 1.5]), np.array([-1.0, 0.0, 0.0]), CFG)
        assert isinstance(sched, ScheduledRecovery)
        assert sched.activate_at == pytest.approx(5.10)
        assert np.allclose(sched.setpoint.position, [1.0, 0.0, 1.5], atol=1e-12)
        assert np.all(sched.setpoint.velocity == 0.0)


def drive(state, log, **kwargs):
    inputs = FsmInputs(**kwargs)
    new_state, events, actions = fsm_step(state, inputs, kwargs.pop("cfg", CFG))
    log.extend(events)
    return new_state, actions


class TestFsmNominal:
    def make_candidate(self):
        from perchsim.perception import PerchCandidate

        return PerchCandidate(
            bbox=(0, 0, 1, 1),
            centroid_px=np.array([320.0, 240.0]),
            centroid_depth=2.0,
            diameter_est=0.3,
            diameter_ok=True,
            texture_ok=True,
            overhang_ok=True,
            target_pose=np.array([2.0, 0.0, 1.5]),
            approach_normal=np.array([-1.0, 0.0, 0.0]),
        )

    def run_nominal(self, log):
        cand = self.make_candidate()
        state = S.IDLE
        state, _ = drive(state, log, time=0.0, start_requested=True)
        state, _ = drive(state, log, time=0.1, candidate=cand)
        state, _ = drive(state, log, time=0.2, confirms=("confirm_detection",))
        state, _ = drive(state, log, time=0.3, trajectory_ready=True)
        state, _ = drive(state, log, time=5.0, dist_to_goal=0.03)
        state, _ = drive(state, log, time=5.1, confirms=("engage_perch",))
        # the loop owns the gripper: trigger and engage land in the log here
        log.append(Event(timestamp=6.0, kind="trigger", payload={"range": 0.15}))
        log.append(Event(timestamp=6.006, kind="engage", payload={}))
        state, _ = drive(state, log, time=10.0, gripper=Engaged(), thrust_zero=True)
        return state

    def test_nominal_sequence_reaches_perched(self):
        log = EventLog()
        state = self.run_nominal(log)
        assert state is S.PERCHED
        assert log.milestones() == [
            "start",
            "detect",
            "confirm",
            "plan",
            "arrive",
            "confirm",
            "trigger",
            "engage",
            "perched",
        ]

    def test_entry_exit_pairing_and_monotone_timestamps(self):
        log = EventLog()
        self.run_nominal(log)
        ts = [e.timestamp for e in log]
        assert all(b >= a for a, b in zip(ts, ts[1:]))
        entries = [e for e in log if e.kind == "state_entry"]
        exits = [e for e in log if e.kind == "state_exit"]
        assert len(entries) == len(exits)
        # each exit names the state entered by the previous entry
        seq = [e.payload["state"] for e in entries]
        exited = [e.payload["state"] for e in exits]
        assert exited == ["Idle"] + seq[:-1]

    def test_replay_reproduces_state_sequence(self):
        log = EventLog()
        self.run_nominal(log)
        seq = replay_events(log.events, CFG)
        assert [s.value for s in seq] == [
            "Idle",
            "SearchTree",
            "AwaitDetectConfirm",
            "Planning",
            "FlyToPerch",
            "AwaitPerchConfirm",
            "PerchSequence",
            "Perched",
        ]

    def test_replay_detects_corruption(self):
        log = EventLog()
        self.run_nominal(log)
        events = list(log.events)
        # drop the perch confirm: the recorded PerchSequence entry can no
        # longer be derived
        events = [
            e for e in events if not (e.kind == "confirm" and e.payload.get("gate") == "perch")
        ]
        with pytest.raises(ReplayMismatch):
            replay_events(events, CFG)


class TestFsmPaths:
    def test_abort_during_fly_to_perch(self):
        log = EventLog()
        state, _ = drive(S.FLY_TO_PERCH, log, time=3.0, confirms=("abort",))
        assert state is S.ABORTED
        kinds = [e.kind for e in log]
        assert "abort" in kinds and "trigger" not in kinds

    def test_autoreject_never_enters_planning(self):
        cfg = AutonomyConfig(confirm_policy=AutoReject())
        log = EventLog()
        state = S.AWAIT_DETECT_CONFIRM
        new_state, events, _ = fsm_step(state, FsmInputs(time=1.0), cfg)
        log.extend(events)
        assert new_state is S.ABORTED
        assert all(e.payload.get("state") != "Planning" for e in log)

    def test_illegal_confirm_logged_and_ignored(self):
        state, events, _ = fsm_step(
            S.FLY_TO_PERCH, FsmInputs(time=2.0, confirms=("engage_perch",)), CFG
        )
        assert state is S.FLY_TO_PERCH
        assert [e.kind for e in events] == ["illegal"]
        assert events[0].payload["message"] == "engage_perch"

    def test_freefall_to_safehover_path(self):
        log = EventLog()
        state, actions = drive(S.PERCHED, log, time=8.0, freefall_detected=True)
        assert state is S.FREE_FALL_DETECTED and "schedule_recovery" in actions
        state, actions = drive(state, log, time=8.1, latency_elapsed=True)
        assert state is S.RECOVERING and "activate_recovery" in actions
        state, _ = drive(state, log, time=12.0, dist_to_recovery=0.1, speed=0.05)
        assert state is S.SAFE_HOVER
        assert "recovery_complete" in [e.kind for e in log]

    def test_mechanical_failure_aborts(self):
        log = EventLog()
        state, _ = drive(S.PERCH_SEQUENCE, log, time=6.0, gripper=MechanicalFailure())
        assert state is S.ABORTED
        abort = [e for e in log if e.kind == "abort"][0]
        assert abort.payload["reason"] == "mechanical_failure"

    def test_grounded_lands_from_any_state(self):
        for state in (S.FLY_TO_PERCH, S.RECOVERING, S.SEARCH_TREE):
            new_state, _, _ = fsm_step(state, FsmInputs(time=1.0, grounded=True), CFG)
            assert new_state is S.LANDED

    def test_terminal_states_are_stable(self):
        for state in (S.SAFE_HOVER, S.LANDED, S.ABORTED):
            new_state, events, _ = fsm_step(
                state, FsmInputs(time=1.0, confirms=("abort",), grounded=True), CFG
            )
            assert new_state is state

    def test_track_lost_during_wait_returns_to_search(self):
        state, _, _ = fsm_step(S.AWAIT_DETECT_CONFIRM, FsmInputs(time=1.0, track_lost=True), CFG)
        assert state is S.SEARCH_TREE

    @given(
        engaged=st.booleans(),
        thrust_zero=st.booleans(),
        freefall=st.booleans(),
        triggered=st.booleans(),
    )
    def test_perched_requires_engaged_gripper(self, engaged, thrust_zero, freefall, triggered):
        gripper = Engaged() if engaged else (Triggered(0.0) if triggered else None)
        inputs = FsmInputs(
            time=1.0, gripper=gripper, thrust_zero=thrust_zero, freefall_detected=freefall
        )
        new_state, _, _ = fsm_step(S.PERCH_SEQUENCE, inputs, CFG)
        if new_state is S.PERCHED:
            assert engaged and thrust_zero and not freefall


class TestEventLog:
    def test_rejects_unknown_kind(self):
        with pytest.raises(ValueError):
            Event(timestamp=0.0, kind="mystery")

    def test_rejects_decreasing_timestamps(self):
        log = EventLog()
        log.append(Event(timestamp=1.0, kind="start"))
        with pytest.raises(ValueError):
            log.append(Event(timestamp=0.5, kind="detect"))

    def test_round_trip_dict(self):
        e = Event(timestamp=1.5, kind="confirm", payload={"gate": "detection"})
        assert Event.from_dict(e.to_dict()) == e
