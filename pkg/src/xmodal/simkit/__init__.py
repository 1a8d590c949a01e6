from xmodal.simkit.camera import Camera, SensorFrame, render
from xmodal.simkit.dynamics import RobotState, apply_disturbance, check_collision, step
from xmodal.simkit.room import OBSTACLE_CATALOG, Obstacle, RoomSpec, sample_room

__all__ = [
    "OBSTACLE_CATALOG",
    "Camera",
    "Obstacle",
    "RobotState",
    "RoomSpec",
    "SensorFrame",
    "apply_disturbance",
    "check_collision",
    "render",
    "sample_room",
    "step",
]
