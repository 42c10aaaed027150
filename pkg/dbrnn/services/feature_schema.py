"""The 50-channel feature contract, grouped by sensing modality."""
from typing import Dict, List, Literal, Tuple
import hashlib

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

ChannelKind = Literal["float", "factor"]

GROUP_SIZES: Dict[str, int] = {
    "can_bus": 8,
    "face": 9,
    "hand": 19,
    "dash": 12,
    "gps_map": 2,
}

# Native sampling rates of the logging vehicle, Hz
NATIVE_RATES_HZ: Dict[str, float] = {
    "can_bus": 80.0,
    "face": 30.0,
    "hand": 30.0,
    "dash": 30.0,
    "gps_map": 1.0,
}


class ChannelSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    group: str
    kind: ChannelKind


class FeatureSchema(BaseModel):
    """Ordered channels; the order is the column order of every frame."""
    model_config = ConfigDict(frozen=True)

    version: int = 1
    channels: Tuple[ChannelSpec, ...]

    @model_validator(mode="after")
    def validate_groups(self):
        names = [channel.name for channel in self.channels]
        if len(set(names)) != len(names):
            raise ValueError("channel names must be unique")
        sizes = {group: 0 for group in GROUP_SIZES}
        for channel in self.channels:
            if channel.group not in sizes:
                raise ValueError(f"unknown channel group '{channel.group}'")
            sizes[channel.group] += 1
        if sizes != GROUP_SIZES:
            raise ValueError(f"group sizes {sizes} differ from {GROUP_SIZES}")
        return self

    @property
    def size(self) -> int:
        return len(self.channels)

    @property
    def names(self) -> List[str]:
        return [channel.name for channel in self.channels]

    @property
    def schema_id(self) -> str:
        """Short hash identifying channel order and kinds."""
        text = "\n".join(f"{c.group}/{c.name}/{c.kind}" for c in self.channels)
        return hashlib.sha256(f"v{self.version}\n{text}".encode()).hexdigest()[:16]

    def index(self, name: str) -> int:
        for position, channel in enumerate(self.channels):
            if channel.name == name:
                return position
        raise KeyError(f"Unknown channel '{name}'")

    def channel(self, name: str) -> ChannelSpec:
        return self.channels[self.index(name)]

    def float_mask(self) -> np.ndarray:
        return np.array([channel.kind == "float" for channel in self.channels])

    def group_channels(self, group: str) -> List[ChannelSpec]:
        return [channel for channel in self.channels if channel.group == group]


def _build_default_channels() -> Tuple[ChannelSpec, ...]:
    layout: List[Tuple[str, str, ChannelKind]] = [
        # CAN bus
        ("can_bus", "brake_pressure", "float"),
        ("can_bus", "accel_pressure", "float"),
        ("can_bus", "gear_position", "factor"),
        ("can_bus", "steering_angle", "float"),
        ("can_bus", "velocity", "float"),
        ("can_bus", "acceleration", "float"),
        ("can_bus", "engine_rpm", "float"),
        ("can_bus", "elevation", "float"),
        # Face camera: mean motion, horizontal-motion histogram, angular-motion histogram
        ("face", "head_mean_motion", "float"),
        ("face", "head_hmotion_le_m2", "float"),
        ("face", "head_hmotion_m2_0", "float"),
        ("face", "head_hmotion_0_2", "float"),
        ("face", "head_hmotion_ge_2", "float"),
        ("face", "head_angle_q1", "float"),
        ("face", "head_angle_q2", "float"),
        ("face", "head_angle_q3", "float"),
        ("face", "head_angle_q4", "float"),
    ]
    # Hand camera
    for side in ("left", "right"):
        layout += [
            ("hand", f"{side}_hand_x", "float"),
            ("hand", f"{side}_hand_y", "float"),
            ("hand", f"{side}_hand_distance", "float"),
            ("hand", f"{side}_hand_angle", "float"),
            ("hand", f"{side}_hand_wheel_position", "float"),
            ("hand", f"{side}_hand_moving", "factor"),
            ("hand", f"{side}_hand_move_distance", "float"),
            ("hand", f"{side}_hand_move_direction", "float"),
            ("hand", f"{side}_hand_on_wheel", "factor"),
        ]
    layout += [
        ("hand", "hands_visible", "factor"),
        # Dash camera
        ("dash", "left_lane_available", "factor"),
        ("dash", "right_lane_available", "factor"),
        ("dash", "left_lane_offset", "float"),
        ("dash", "right_lane_offset", "float"),
        ("dash", "left_lane_curvature", "float"),
        ("dash", "right_lane_curvature", "float"),
        ("dash", "lead_object_distance", "float"),
        ("dash", "lead_object_speed", "float"),
        ("dash", "left_object_distance", "float"),
        ("dash", "left_object_speed", "float"),
        ("dash", "right_object_distance", "float"),
        ("dash", "right_object_speed", "float"),
        # GPS + map; state codes 0 at, 1 approaching, 2 departing
        ("gps_map", "intersection_state", "factor"),
        ("gps_map", "intersection_distance", "float"),
    ]
    return tuple(ChannelSpec(group=group, name=name, kind=kind) for group, name, kind in layout)


DEFAULT_SCHEMA = FeatureSchema(channels=_build_default_channels())
