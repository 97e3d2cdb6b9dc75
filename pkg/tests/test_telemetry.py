import dataclasses
import json
import logging
import threading
import time

import pytest
from websockets.sync.client import connect

from perchsim.autonomy import Human
from perchsim.gripper import GraspModel
from perchsim.harness.scenario import ScenarioConfig
from perchsim.harness.telemetry import Pacer, TelemetryBridge
from perchsim.harness.trial import Outcome, run_trial


def console_cfg():
    return dataclasses.replace(
        ScenarioConfig(),
        confirm_policy=Human(),
        grasp=GraspModel(p_mechanical=1.0, p_hold=1.0),
        trial_timeout=120.0,
    )


class ConsoleClient:
    """Small scripted stand-in for the browser console."""

    def __init__(self, port):
        self.ws = connect(f"ws://127.0.0.1:{port}", open_timeout=5)

    def close(self):
        self.ws.close()

    def send(self, msg: dict):
        self.ws.send(json.dumps(msg))

    def next_message(self, timeout=10.0):
        return json.loads(self.ws.recv(timeout=timeout))

    def wait_for(self, predicate, timeout=30.0):
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            msg = self.next_message(timeout=deadline - time.monotonic())
            if predicate(msg):
                return msg
        raise TimeoutError("expected message never arrived")


@pytest.fixture
def live_run():
    cfg = console_cfg()
    pacer = Pacer(factor=50.0)  # fast but still paced, so gates stay observable
    bridge = TelemetryBridge(port=0, pacer=pacer)
    bridge.start()
    result_box = {}

    def work():
        result_box["result"] = run_trial(cfg, seed=42, link=bridge, pacer=pacer)

    thread = threading.Thread(target=work, daemon=True)
    thread.start()
    client = ConsoleClient(bridge.port)
    yield client, result_box, thread
    client.close()
    thread.join(timeout=60)
    bridge.stop()


class TestProtocol:
    def test_full_operator_run(self, live_run):
        client, box, thread = live_run

        msg = client.wait_for(lambda m: m["type"] == "state")
        assert msg["v"] == 1
        assert {"t", "fsm", "position", "velocity", "setpoint", "thrust"} <= set(msg)

        client.wait_for(lambda m: m["type"] == "state" and m["fsm"] == "AwaitDetectConfirm")
        # a frame with overlay metadata arrives while the detector tracks
        frame = client.wait_for(lambda m: m["type"] == "frame")
        assert frame["width"] == 320 and frame["height"] == 240
        assert len(frame["depth_mm_b64"]) > 0
        if "bbox" in frame:
            assert len(frame["bbox"]) == 4

        client.send({"v": 1, "type": "confirm_detection"})
        client.wait_for(lambda m: m["type"] == "state" and m["fsm"] == "AwaitPerchConfirm",
                        timeout=60.0)
        client.send({"v": 1, "type": "engage_perch"})
        client.wait_for(
            lambda m: m["type"] == "event" and m["kind"] == "engage", timeout=60.0
        )
        thread.join(timeout=60)
        assert box["result"].outcome is Outcome.PERCH_SUCCESS

    def test_abort_from_flight(self):
        cfg = console_cfg()
        pacer = Pacer(factor=20.0)
        bridge = TelemetryBridge(port=0, pacer=pacer)
        bridge.start()
        box = {}
        thread = threading.Thread(
            target=lambda: box.update(result=run_trial(cfg, seed=1, link=bridge, pacer=pacer)),
            daemon=True,
        )
        thread.start()
        client = ConsoleClient(bridge.port)
        try:
            # the trial holds at the detect gate under a Human policy
            client.wait_for(lambda m: m["type"] == "state" and m["fsm"] == "AwaitDetectConfirm")
            client.send({"v": 1, "type": "confirm_detection"})
            client.wait_for(lambda m: m["type"] == "state" and m["fsm"] == "FlyToPerch")
            client.send({"v": 1, "type": "abort"})
            client.wait_for(lambda m: m["type"] == "state" and m["fsm"] == "Aborted", timeout=30.0)
        finally:
            client.close()
        thread.join(timeout=30)
        assert box["result"].outcome is Outcome.ABORTED
        kinds = [e.kind for e in box["result"].events]
        assert "trigger" not in kinds

    def test_illegal_confirm_produces_illegal_event(self):
        cfg = console_cfg()
        pacer = Pacer(factor=20.0)
        bridge = TelemetryBridge(port=0, pacer=pacer)
        bridge.start()
        box = {}
        thread = threading.Thread(
            target=lambda: box.update(result=run_trial(cfg, seed=1, link=bridge, pacer=pacer)),
            daemon=True,
        )
        thread.start()
        client = ConsoleClient(bridge.port)
        try:
            # engage_perch at the detect gate is the wrong confirm: logged, ignored
            client.wait_for(lambda m: m["type"] == "state" and m["fsm"] == "AwaitDetectConfirm")
            client.send({"v": 1, "type": "engage_perch"})
            msg = client.wait_for(
                lambda m: m["type"] == "event" and m["kind"] == "illegal", timeout=20.0
            )
            assert msg["payload"]["message"] == "engage_perch"
            client.send({"v": 1, "type": "abort"})
            client.wait_for(lambda m: m["type"] == "state" and m["fsm"] == "Aborted", timeout=20.0)
        finally:
            client.close()
        thread.join(timeout=30)

    def test_unknown_message_type_ignored_with_warning(self, caplog):
        pacer = Pacer(factor=1.0)
        bridge = TelemetryBridge(port=0, pacer=pacer)
        bridge.start()
        try:
            with connect(f"ws://127.0.0.1:{bridge.port}") as ws:
                with caplog.at_level(logging.WARNING, logger="perchsim.harness.telemetry"):
                    ws.send(json.dumps({"v": 1, "type": "mystery"}))
                    ws.send("not json at all")
                    time.sleep(0.3)
            assert any("unknown message type" in r.message for r in caplog.records)
            assert bridge.poll_commands() == []
        finally:
            bridge.stop()

    def test_set_speed_adjusts_pacer(self):
        pacer = Pacer(factor=1.0)
        bridge = TelemetryBridge(port=0, pacer=pacer)
        bridge.start()
        try:
            with connect(f"ws://127.0.0.1:{bridge.port}") as ws:
                ws.send(json.dumps({"v": 1, "type": "set_speed", "factor": 4.0}))
                time.sleep(0.3)
            assert pacer._factor == 4.0
        finally:
            bridge.stop()


class TestPacer:
    def test_paces_sim_time(self):
        pacer = Pacer(factor=10.0)
        t0 = time.monotonic()
        for k in range(1, 6):
            pacer.wait(k * 0.2)  # one sim second total
        elapsed = time.monotonic() - t0
        assert elapsed == pytest.approx(0.1, abs=0.06)

    def test_pause_and_resume(self):
        pacer = Pacer(factor=0.0)
        box = {}

        def waiter():
            t0 = time.monotonic()
            pacer.wait(0.01)
            box["waited"] = time.monotonic() - t0

        th = threading.Thread(target=waiter)
        th.start()
        time.sleep(0.35)
        assert "waited" not in box  # paused
        pacer.set_factor(100.0)
        th.join(timeout=5)
        assert box["waited"] >= 0.3
