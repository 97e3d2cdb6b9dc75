"""Acceptance suite: every criterion at its stated tolerance.

Each test prints one PASS line on success (run with -s or -rA to see them);
a failed assertion marks the criterion failed. The statistical checks run on
pinned seed ranges so the suite is fully deterministic.
"""

import dataclasses
import math
import time

import numpy as np
import pytest

from perchsim import quat
from perchsim.autonomy import AutonomyState, FailureDetectorConfig, detect_freefall
from perchsim.control import ControlCommand, GentlePerchConfig, gentle_perch_thrust
from perchsim.gripper import GraspModel
from perchsim.harness.batch import run_batch
from perchsim.harness.logs import write_logs
from perchsim.harness.scenario import CameraConfig, ScenarioConfig
from perchsim.harness.trial import run_trial
from perchsim.perception import CameraModel, DetectorConfig, detect_perch_site, localize_candidate, render_depth
from perchsim.planner import PlannerConfig, plan_perch_trajectory, sample
from perchsim.sim_core import (
    FreeFall,
    ImuSample,
    TreeModel,
    WorldState,
    make_vehicle_state,
    step_dynamics,
)

from oracles import ray_cylinder_oracle

G = 9.8
JOBS = 2


def report(name: str, detail: str = ""):
    print(f"\nACCEPTANCE {name}: PASS {detail}")


def elapsed_since(t0: float) -> float:
    return time.monotonic() - t0


class TestAcceptance:
    def test_1_free_fall_kinematics(self):
        t0 = time.monotonic()
        tree = TreeModel(np.array([50.0, 0.0, 0.0]), np.array([0.0, 0.0, 1.0]), 0.15, 3.0)
        world = WorldState(
            vehicle=make_vehicle_state((0.0, 0.0, 5.0)), tree=tree, phase=FreeFall()
        )
        cmd = ControlCommand(collective_thrust=0.0, attitude_command=quat.IDENTITY.copy())
        dt = world.params.physics_dt
        for _ in range(100):
            world = step_dynamics(world, cmd, dt)
        drop = 5.0 - world.vehicle.position[2]
        assert drop == pytest.approx(0.049, abs=1e-4)
        runtime = elapsed_since(t0)
        assert runtime < 1.0
        report("free-fall kinematics", f"(drop {drop:.6f} m, {runtime:.2f} s)")

    def test_2_detector_threshold(self):
        t0 = time.monotonic()
        cfg = FailureDetectorConfig()
        decisions = []
        for mag in (9.8, 7.1, 6.9, 0.0):
            stream = [
                ImuSample(np.array([0.0, 0.0, mag]), timestamp=k / 100.0) for k in range(10)
            ]
            decisions.append(detect_freefall(stream, cfg, AutonomyState.PERCHED))
        assert decisions == [False, False, True, True]
        runtime = elapsed_since(t0)
        assert runtime < 1.0
        report("detector threshold", f"(decisions {decisions}, {runtime:.2f} s)")

    def test_3_recovery_latency_and_offset(self):
        t0 = time.monotonic()
        cfg = dataclasses.replace(
            ScenarioConfig(), grasp=GraspModel(spine_sharpness=0.0, p_mechanical=1.0)
        )
        summary, results = run_batch(cfg, n_trials=100, seed_base=0, parallelism=JOBS,
                                     keep_details=True)
        assert summary.counts == {"RecoverySuccess": 100}
        tick = 1.0 / cfg.vehicle.control_rate
        for r in results:
            t_ff = [e.timestamp for e in r.events if e.kind == "freefall"][0]
            t_rec = [
                e.timestamp
                for e in r.events
                if e.kind == "state_entry" and e.payload["state"] == "Recovering"
            ][0]
            assert t_rec - t_ff == pytest.approx(0.10, abs=tick + 1e-9)
            assert r.safe_hover_distance == pytest.approx(1.0, abs=0.2)
        runtime = elapsed_since(t0)
        assert runtime < 60.0
        report(
            "recovery latency",
            f"(100/100 recovered, switch +0.10 s, offsets "
            f"{min(r.safe_hover_distance for r in results):.3f}"
            f"..{max(r.safe_hover_distance for r in results):.3f} m, {runtime:.0f} s)",
        )

    def test_4_perch_statistics(self):
        t0 = time.monotonic()
        summary, _ = run_batch(ScenarioConfig(), n_trials=1000, seed_base=1000,
                               parallelism=JOBS)
        rate = summary.rates.get("PerchSuccess", 0.0)
        assert 0.72 <= rate <= 0.78
        runtime = elapsed_since(t0)
        assert runtime < 300.0
        report("perch statistics", f"(success rate {rate:.3f} over 1000 trials, {runtime:.0f} s)")

    def test_5_trajectory_contract(self):
        t0 = time.monotonic()
        cfg = PlannerConfig()
        rng = np.random.default_rng(7)
        fd_checked = 0
        for i in range(1000):
            start = make_vehicle_state(
                rng.uniform(-5, 5, 3) + [0, 0, 6], velocity=rng.uniform(-0.4, 0.4, 3)
            )
            ang = rng.uniform(0, 2 * math.pi)
            normal = np.array([math.cos(ang), math.sin(ang), 0.0])
            target = start.position + rng.uniform(-4, 4, 3)
            if np.linalg.norm(target - start.position) < 1e-6:
                continue
            traj = plan_perch_trajectory(start, target, normal, cfg)
            seg = traj.segments[0]
            T = seg.duration
            assert np.max(np.abs(seg.position(0.0) - start.position)) <= 1e-9
            assert np.max(np.abs(seg.velocity(0.0) - start.velocity)) <= 1e-9
            assert np.max(np.abs(seg.acceleration(0.0))) <= 1e-9
            assert np.max(np.abs(seg.position(T) - target)) <= 1e-9
            v_end = seg.velocity(T)
            speed = float(np.linalg.norm(v_end))
            assert speed == pytest.approx(cfg.terminal_speed, abs=1e-9)
            assert float(np.dot(v_end / speed, normal)) == pytest.approx(-1.0, abs=1e-9)
            assert np.max(np.abs(seg.acceleration(T))) <= 1e-9
            if i % 10 == 0:
                h = 1e-3
                for t in np.linspace(h, T - h, 25):
                    fd = (seg.position(t + h) - seg.position(t - h)) / (2 * h)
                    assert np.max(np.abs(seg.velocity(t) - fd)) <= 1e-5
                fd_checked += 1
        runtime = elapsed_since(t0)
        assert runtime < 10.0
        report("trajectory contract", f"(1000 plans, {fd_checked} finite-difference sweeps, "
                                      f"{runtime:.1f} s)")

    def test_6_gentle_perch(self):
        t0 = time.monotonic()
        gp = GentlePerchConfig()
        hover = 1.2 * G
        values = [gentle_perch_thrust(k / gp.rate, hover, gp) for k in range(int(4.5 * gp.rate))]
        assert values[0] == pytest.approx(hover)
        assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))
        assert all(v == 0.0 for k, v in enumerate(values) if k / gp.rate >= gp.duration)

        cfg = dataclasses.replace(
            ScenarioConfig(), grasp=GraspModel(p_mechanical=1.0, p_hold=1.0)
        )
        summary, results = run_batch(cfg, n_trials=50, seed_base=0, parallelism=JOBS,
                                     keep_details=True)
        assert summary.counts == {"PerchSuccess": 50}
        brace = cfg.gripper.pivot_limit
        for r in results:
            assert not any(e.kind == "freefall" for e in r.events)
            pitches = np.array([row[8] for row in r.trace])
            assert pitches[-1] == pytest.approx(brace, abs=math.radians(0.1))
            # monotone rise onto the brace with no bounce-back beyond 1 degree
            drop = np.max(np.maximum.accumulate(pitches) - pitches)
            assert drop <= math.radians(1.0)
        runtime = elapsed_since(t0)
        assert runtime < 60.0
        report("gentle perch", f"(50/50 braced at {math.degrees(brace):.0f} deg, no detector "
                               f"fire, {runtime:.0f} s)")

    def test_7_perception_oracle(self):
        t0 = time.monotonic()
        tree = TreeModel(np.array([2.15, 0.0, 0.0]), np.array([0.0, 0.0, 1.0]), 0.15, 3.0)
        cam_small = CameraModel(fx=30.0, fy=30.0, cx=16.0, cy=12.0, width=32, height=24)
        rng = np.random.default_rng(13)
        checked = 0
        from perchsim.sim_core import FreeFlight

        for _ in range(1000):
            pos = (rng.uniform(-1.5, 1.0), rng.uniform(-1.5, 1.5), rng.uniform(0.4, 2.6))
            yaw = rng.uniform(-0.7, 0.7)
            world = WorldState(
                vehicle=make_vehicle_state(pos, yaw=yaw), tree=tree, phase=FreeFlight()
            )
            ours = render_depth(cam_small, world).data
            center, r_wc = cam_small.pose_in_world(world.vehicle)
            for v in range(0, cam_small.height, 3):
                for u in range(0, cam_small.width, 3):
                    d = r_wc @ np.array(
                        [(u - cam_small.cx) / cam_small.fx, (v - cam_small.cy) / cam_small.fy, 1.0]
                    )
                    t_tree = ray_cylinder_oracle(
                        center, d, tree.base_point, tree.axis_direction, tree.radius, tree.height
                    )
                    t_ground = -center[2] / d[2] if d[2] < -1e-12 else None
                    cands = [x for x in (t_tree, t_ground) if x is not None and x > 1e-9]
                    expected = 0.0
                    if cands:
                        depth = min(cands)
                        if cam_small.depth_min <= depth <= cam_small.depth_max:
                            expected = depth
                    assert abs(ours[v, u] - expected) <= 1e-9
                    checked += 1

        # nominal scene: trunk of diameter 0.30 at 2 m range
        cam = CameraModel()
        world = WorldState(
            vehicle=make_vehicle_state((0.0, 0.0, 1.5)), tree=tree, phase=FreeFlight()
        )
        img = render_depth(cam, world)
        cand = detect_perch_site(img, cam, DetectorConfig())
        assert cand is not None
        assert cand.diameter_est == pytest.approx(0.30, rel=0.10)
        cand = localize_candidate(cand, cam, world.vehicle)
        assert np.linalg.norm(cand.target_pose - np.array([2.0, 0.0, 1.5])) <= 0.05

        # overhanging trunk is rejected
        tilt = math.radians(15.0)
        tilted = TreeModel(
            np.array([2.15, 0.0, 0.0]),
            np.array([-math.sin(tilt), 0.0, math.cos(tilt)]),
            0.15,
            3.0,
        )
        world_tilted = WorldState(
            vehicle=make_vehicle_state((0.0, 0.0, 1.5)), tree=tilted, phase=FreeFlight()
        )
        img = render_depth(cam, world_tilted)
        assert detect_perch_site(img, cam, DetectorConfig()) is None
        runtime = elapsed_since(t0)
        assert runtime < 30.0
        report("perception oracle", f"({checked} rays over 1000 poses, diameter "
                                    f"{cand.diameter_est:.3f} m, {runtime:.0f} s)")

    def test_8_determinism(self, tmp_path):
        t0 = time.monotonic()
        cfg = ScenarioConfig()
        _, serial = run_batch(cfg, n_trials=16, seed_base=400, parallelism=1, keep_details=True)
        _, parallel = run_batch(cfg, n_trials=16, seed_base=400, parallelism=8, keep_details=True)
        dir_a, dir_b = tmp_path / "serial", tmp_path / "parallel"
        for r in serial:
            write_logs(r, dir_a)
        for r in parallel:
            write_logs(r, dir_b)
        names = sorted(p.name for p in dir_a.iterdir())
        assert names == sorted(p.name for p in dir_b.iterdir())
        for name in names:
            assert (dir_a / name).read_bytes() == (dir_b / name).read_bytes()
        runtime = elapsed_since(t0)
        assert runtime < 60.0
        report("determinism", f"({len(names)} files byte-identical across 1 vs 8 workers, "
                              f"{runtime:.0f} s)")
