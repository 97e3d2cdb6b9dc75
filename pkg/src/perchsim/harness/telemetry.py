"""WebSocket telemetry bridge for the operator console.

JSON text messages, all carrying a protocol version field "v". Server to
client: `state` (10 Hz), `frame` (depth image as base64 16-bit millimeters
with detection overlay metadata, 5 Hz), and `event` (mirrors the event log).
Client to server: `confirm_detection`, `engage_perch`, `abort`, and
`set_speed {factor}`; unknown types are ignored with a logged warning.

Outbound messages go through bounded per-client queues and are dropped when
a client cannot keep up: telemetry is lossy by design, the on-disk event log
is not.
"""

from __future__ import annotations

import base64
import json
import logging
import queue
import threading
import time
from typing import Optional

import numpy as np

from .. import quat
from ..autonomy import Event

logger = logging.getLogger(__name__)

PROTOCOL_VERSION = 1
CLIENT_COMMANDS = ("confirm_detection", "engage_perch", "abort", "set_speed")
QUEUE_DEPTH = 64


class Pacer:
    """Real-time throttle for console runs: factor = sim seconds per wall second.

    A factor of 0 pauses; the bridge adjusts the factor from `set_speed`
    commands while the trial thread waits.
    """

    def __init__(self, factor: float = 1.0):
        self._factor = factor
        self._lock = threading.Lock()
        self._anchor_wall = time.monotonic()
        self._anchor_sim = 0.0

    def set_factor(self, factor: float) -> None:
        factor = max(0.0, float(factor))
        with self._lock:
            self._factor = factor
            self._anchor_wall = time.monotonic()

    def wait(self, sim_t: float) -> None:
        while True:
            with self._lock:
                factor = self._factor
                anchor_wall, anchor_sim = self._anchor_wall, self._anchor_sim
            if factor > 0.0:
                target = anchor_wall + (sim_t - anchor_sim) / factor
                now = time.monotonic()
                if now >= target:
                    if now - target > 0.25:
                        # fell behind (slow tick or resume): re-anchor, no catch-up burst
                        with self._lock:
                            self._anchor_wall = now
                            self._anchor_sim = sim_t
                    else:
                        with self._lock:
                            self._anchor_sim = sim_t
                            self._anchor_wall = target
                    return
                time.sleep(min(0.05, target - now))
            else:
                time.sleep(0.05)


class _Client:
    def __init__(self, conn):
        self.conn = conn
        self.queue: queue.Queue = queue.Queue(maxsize=QUEUE_DEPTH)
        self.alive = True

    def pump(self):
        while self.alive:
            try:
                msg = self.queue.get(timeout=0.2)
            except queue.Empty:
                continue
            try:
                self.conn.send(msg)
            except Exception:
                self.alive = False

    def offer(self, msg: str):
        try:
            self.queue.put_nowait(msg)
        except queue.Full:
            pass  # lossy by design


class TelemetryBridge:
    """Threaded WebSocket server owning the operator command queue."""

    def __init__(self, host: str = "127.0.0.1", port: int = 8866, pacer: Optional[Pacer] = None):
        self.host = host
        self.requested_port = port
        self.port: Optional[int] = None
        self.pacer = pacer
        self._commands: queue.Queue = queue.Queue()
        self._clients: set[_Client] = set()
        self._clients_lock = threading.Lock()
        self._server = None
        self._thread: Optional[threading.Thread] = None

    # --- lifecycle -----------------------------------------------------------

    def start(self) -> None:
        from websockets.sync.server import serve

        self._server = serve(self._handle, self.host, self.requested_port)
        self.port = self._server.socket.getsockname()[1]
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        logger.info("telemetry bridge listening on ws://%s:%s", self.host, self.port)

    def stop(self) -> None:
        if self._server is not None:
            self._server.shutdown()
            self._server = None

    def __enter__(self):
        self.start()
        return self

    def __exit__(self, *exc):
        self.stop()

    def _handle(self, conn) -> None:
        client = _Client(conn)
        sender = threading.Thread(target=client.pump, daemon=True)
        sender.start()
        with self._clients_lock:
            self._clients.add(client)
        try:
            for raw in conn:
                self._on_message(raw)
        except Exception:
            pass
        finally:
            client.alive = False
            with self._clients_lock:
                self._clients.discard(client)

    def _on_message(self, raw) -> None:
        try:
            msg = json.loads(raw)
        except (TypeError, ValueError):
            logger.warning("telemetry: dropping unparseable message")
            return
        kind = msg.get("type")
        if kind not in CLIENT_COMMANDS:
            logger.warning("telemetry: ignoring unknown message type %r", kind)
            return
        if kind == "set_speed" and self.pacer is not None:
            self.pacer.set_factor(msg.get("factor", 1.0))
            return
        self._commands.put(msg)

    def _broadcast(self, payload: dict) -> None:
        payload["v"] = PROTOCOL_VERSION
        msg = json.dumps(payload)
        with self._clients_lock:
            clients = list(self._clients)
        for client in clients:
            client.offer(msg)

    # --- operator-link interface used by run_trial ----------------------------

    def poll_commands(self) -> list:
        out = []
        while True:
            try:
                out.append(self._commands.get_nowait())
            except queue.Empty:
                return out

    def send_state(self, state, world, setpoint, thrust, t: float) -> None:
        veh = world.vehicle
        hover = world.params.mass * world.constants.g
        self._broadcast(
            {
                "type": "state",
                "t": round(t, 4),
                "fsm": state.value,
                "position": [round(float(x), 4) for x in veh.position],
                "velocity": [round(float(x), 4) for x in veh.velocity],
                "yaw": round(quat.yaw_of(veh.attitude), 4),
                "setpoint": [round(float(x), 4) for x in setpoint.position],
                "thrust": round(float(thrust), 4),
                "thrust_frac": round(float(thrust) / hover, 4),
            }
        )

    def send_frame(self, frame, candidate, t: float) -> None:
        mm = np.clip(np.round(frame.data * 1000.0), 0, 65535).astype("<u2")
        msg = {
            "type": "frame",
            "t": round(t, 4),
            "width": int(frame.data.shape[1]),
            "height": int(frame.data.shape[0]),
            "depth_mm_b64": base64.b64encode(mm.tobytes()).decode("ascii"),
        }
        if candidate is not None:
            msg["bbox"] = [int(x) for x in candidate.bbox]
            msg["centroid"] = [round(float(x), 2) for x in candidate.centroid_px]
            msg["diameter"] = round(float(candidate.diameter_est), 4)
            msg["flags"] = {
                "diameter_ok": candidate.diameter_ok,
                "texture_ok": candidate.texture_ok,
                "overhang_ok": candidate.overhang_ok,
            }
        self._broadcast(msg)

    def send_event(self, event: Event) -> None:
        self._broadcast({"type": "event", **event.to_dict()})
