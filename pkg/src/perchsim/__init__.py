"""perchsim: deterministic quadrotor tree-trunk perching simulator.

Seeded end-to-end simulation of a 1.2 kg quadrotor detecting a vertical trunk
in synthetic depth imagery, flying a polynomial approach, perching with an
active gripper, detecting perch failures from the IMU, and recovering to a
safe hover. Includes a Monte Carlo harness and a WebSocket telemetry bridge
for a browser operator console.
"""

__version__ = "0.1.0"
