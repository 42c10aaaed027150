"""Pydantic schemas for configurations, reports and file headers."""
from enum import Enum
from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class ActionClass(str, Enum):
    """Driver actions of interest."""
    BRAKING = "braking"
    LANE_CHANGE_LEFT = "lane_change_left"
    LANE_CHANGE_RIGHT = "lane_change_right"
    TURN_LEFT = "turn_left"
    TURN_RIGHT = "turn_right"


NEGATIVE_CLASS = "negative"


# ---------------------------------------------------------------- network


class LayerSpec(BaseModel):
    """One recurrent layer of the stack."""
    model_config = ConfigDict(frozen=True)

    bidirectional: bool = False
    cell: Literal["simple", "lstm", "gru"] = "lstm"


# Bi-LSTM under a GRU: the three-unit system
BI_ARCHITECTURE: Tuple[LayerSpec, ...] = (
    LayerSpec(bidirectional=True, cell="lstm"),
    LayerSpec(bidirectional=False, cell="gru"),
)
# Ablation with the backward LSTM removed
UNI_ARCHITECTURE: Tuple[LayerSpec, ...] = (
    LayerSpec(bidirectional=False, cell="lstm"),
    LayerSpec(bidirectional=False, cell="gru"),
)
ARCHITECTURES = {"bi": BI_ARCHITECTURE, "uni": UNI_ARCHITECTURE}


class NetworkConfig(BaseModel):
    """Sizes and layer stack of a prediction network."""
    model_config = ConfigDict(frozen=True)

    input_size: int = Field(50, ge=1)
    hidden_size: int = Field(64, ge=1)
    num_classes: int = Field(2, ge=2)
    architecture: Tuple[LayerSpec, ...] = BI_ARCHITECTURE
    window_length: int = Field(50, ge=1)
    feature_schema: Optional[str] = None  # schema identifier of the training data

    @field_validator("architecture")
    @classmethod
    def validate_architecture(cls, value):
        if not value:
            raise ValueError("architecture needs at least one layer")
        return value

    @property
    def arch_name(self) -> str:
        for name, layers in ARCHITECTURES.items():
            if tuple(self.architecture) == layers:
                return name
        return "custom"


# ---------------------------------------------------------------- training


class TrainingConfig(BaseModel):
    """Optimizer, schedule and loop settings."""
    model_config = ConfigDict(frozen=True)

    learning_rate: float = Field(1e-2, gt=0)
    decay_factor: float = Field(0.1, gt=0, le=1)
    decay_every: int = Field(100, ge=1)
    max_epochs: int = Field(1000, ge=0)
    clip_value: float = Field(10.0, gt=0)
    batch_size: int = Field(32, ge=1)
    seed: int = Field(0, ge=0, lt=2 ** 64)
    shuffle: bool = True


class EpochReport(BaseModel):
    """Progress row emitted after every epoch."""
    epoch: int
    train_loss: float = Field(ge=0)
    val_loss: Optional[float] = Field(default=None, ge=0)
    val_accuracy: Optional[float] = None
    learning_rate: float


# ---------------------------------------------------------------- data


class TaskSpec(BaseModel):
    """A prediction task: negative class 0 followed by its positive classes."""
    model_config = ConfigDict(frozen=True)

    name: Literal["braking", "lane_change", "turns"]
    positive_classes: Tuple[ActionClass, ...]
    balance_ratio: float = Field(1.5, gt=0)

    @field_validator("positive_classes")
    @classmethod
    def validate_classes(cls, value):
        if not value:
            raise ValueError("a task needs at least one positive class")
        if len(set(value)) != len(value):
            raise ValueError("positive classes must be distinct")
        return value

    @property
    def class_names(self) -> List[str]:
        return [NEGATIVE_CLASS] + [action.value for action in self.positive_classes]

    @property
    def num_classes(self) -> int:
        return 1 + len(self.positive_classes)

    def label_of(self, action: ActionClass) -> Optional[int]:
        """Class index of an action, or None if the task ignores it."""
        action = ActionClass(action)
        if action in self.positive_classes:
            return 1 + self.positive_classes.index(action)
        return None


TASKS: Dict[str, TaskSpec] = {
    "braking": TaskSpec(name="braking", positive_classes=(ActionClass.BRAKING,)),
    "lane_change": TaskSpec(
        name="lane_change",
        positive_classes=(ActionClass.LANE_CHANGE_LEFT, ActionClass.LANE_CHANGE_RIGHT),
    ),
    "turns": TaskSpec(name="turns", positive_classes=(ActionClass.TURN_LEFT, ActionClass.TURN_RIGHT)),
}


def get_task(name: str, balance_ratio: Optional[float] = None) -> TaskSpec:
    """Look up a task, optionally overriding its balance ratio."""
    if name not in TASKS:
        raise ValueError(f"Unknown task '{name}', expected one of {', '.join(TASKS)}")
    task = TASKS[name]
    if balance_ratio is not None:
        task = TaskSpec(**{**task.model_dump(), "balance_ratio": balance_ratio})
    return task


class ActionEvent(BaseModel):
    """An action onset, either recognized from a series or planted by the generator."""
    model_config = ConfigDict(frozen=True)

    action: ActionClass
    onset_s: float
    source: Literal["recognizer", "ground_truth"] = "recognizer"


class RecognitionRules(BaseModel):
    """Threshold rules of the onset recognizer."""
    brake_channel: str = "brake_pressure"
    brake_threshold: float = 1.0
    steering_channel: str = "steering_angle"
    steering_threshold: float = 1.0  # positive angles steer left
    steering_sustain_s: float = Field(0.5, ge=0)
    left_offset_channel: str = "left_lane_offset"
    right_offset_channel: str = "right_lane_offset"
    refractory_s: float = Field(2.0, ge=0)


class ExampleSetHeader(BaseModel):
    """First record of an example-set file."""
    format: Literal["dbrnn-examples"] = "dbrnn-examples"
    format_version: int = 1
    task: str
    split: str
    horizon_s: float
    window: int
    stride: int
    exec_len_s: float
    seed: int
    schema_id: str
    num_features: int
    class_names: List[str]
    count: int = 0


# ---------------------------------------------------------------- synthetic data


class PrecursorSignature(BaseModel):
    """Deflection of one channel during the lead before an action.

    Float channels ramp linearly from 0 to ±amplitude (or hold it, for a
    boxcar); factor channels hold `code` for the whole lead.
    """
    channel: str
    shape: Literal["ramp", "boxcar"] = "ramp"
    sign: float = 1.0
    code: Optional[int] = None


class ActionSignature(BaseModel):
    """Deflection of a recognition channel from the onset through the execution."""
    channel: str
    shape: Literal["step", "ramp", "crossing"]
    amplitude: float


def _default_rates() -> Dict[ActionClass, float]:
    return {
        ActionClass.BRAKING: 0.5,
        ActionClass.LANE_CHANGE_LEFT: 0.15,
        ActionClass.LANE_CHANGE_RIGHT: 0.15,
        ActionClass.TURN_LEFT: 0.15,
        ActionClass.TURN_RIGHT: 0.15,
    }


def _default_precursors() -> Dict[ActionClass, List[PrecursorSignature]]:
    return {
        ActionClass.BRAKING: [
            PrecursorSignature(channel="lead_object_distance", shape="ramp", sign=-1.0),
            PrecursorSignature(channel="lead_object_speed", shape="ramp", sign=-1.0),
            PrecursorSignature(channel="accel_pressure", shape="boxcar", sign=-1.0),
        ],
        ActionClass.LANE_CHANGE_LEFT: [
            PrecursorSignature(channel="head_angle_q2", shape="ramp"),
            PrecursorSignature(channel="head_mean_motion", shape="boxcar"),
            PrecursorSignature(channel="left_hand_move_direction", shape="ramp"),
        ],
        ActionClass.LANE_CHANGE_RIGHT: [
            PrecursorSignature(channel="head_angle_q4", shape="ramp"),
            PrecursorSignature(channel="head_mean_motion", shape="boxcar"),
            PrecursorSignature(channel="right_hand_move_direction", shape="ramp"),
        ],
        ActionClass.TURN_LEFT: [
            PrecursorSignature(channel="intersection_distance", shape="ramp", sign=-1.0),
            PrecursorSignature(channel="intersection_state", shape="boxcar", code=1),
            PrecursorSignature(channel="head_angle_q2", shape="ramp"),
            PrecursorSignature(channel="left_hand_wheel_position", shape="ramp"),
        ],
        ActionClass.TURN_RIGHT: [
            PrecursorSignature(channel="intersection_distance", shape="ramp", sign=-1.0),
            PrecursorSignature(channel="intersection_state", shape="boxcar", code=1),
            PrecursorSignature(channel="head_angle_q4", shape="ramp"),
            PrecursorSignature(channel="right_hand_wheel_position", shape="ramp"),
        ],
    }


def _default_actions() -> Dict[ActionClass, ActionSignature]:
    return {
        ActionClass.BRAKING: ActionSignature(channel="brake_pressure", shape="step", amplitude=2.0),
        ActionClass.LANE_CHANGE_LEFT: ActionSignature(channel="left_lane_offset", shape="crossing", amplitude=1.5),
        ActionClass.LANE_CHANGE_RIGHT: ActionSignature(channel="right_lane_offset", shape="crossing", amplitude=1.5),
        ActionClass.TURN_LEFT: ActionSignature(channel="steering_angle", shape="ramp", amplitude=2.5),
        ActionClass.TURN_RIGHT: ActionSignature(channel="steering_angle", shape="ramp", amplitude=-2.5),
    }


class ScenarioConfig(BaseModel):
    """Parameters of a synthetic multi-session dataset."""
    num_sessions: int = Field(10, ge=1)
    session_length_s: float = Field(600.0, gt=0)
    event_rates: Dict[ActionClass, float] = Field(default_factory=_default_rates)  # events per minute
    min_gap_s: float = Field(20.0, gt=0)
    exec_len_s: float = Field(2.0, ge=0)
    precursor_lead_s: float = Field(4.0, gt=0)
    lead_jitter_s: float = Field(0.0, ge=0)
    precursor_amplitude: float = Field(0.3, ge=0)
    precursors: Dict[ActionClass, List[PrecursorSignature]] = Field(default_factory=_default_precursors)
    actions: Dict[ActionClass, ActionSignature] = Field(default_factory=_default_actions)
    noise_std: float = Field(0.1, ge=0)
    noise_smoothing: float = Field(0.9, ge=0, lt=1)
    native_rates: bool = False
    seed: int = Field(0, ge=0, lt=2 ** 64)

    @field_validator("event_rates")
    @classmethod
    def validate_rates(cls, value):
        if any(rate < 0 for rate in value.values()):
            raise ValueError("event rates must be non-negative")
        return value

    @model_validator(mode="after")
    def validate_gap(self):
        if self.min_gap_s <= self.exec_len_s:
            raise ValueError(f"min_gap_s ({self.min_gap_s}) must exceed exec_len_s ({self.exec_len_s})")
        missing = [action.value for action, rate in self.event_rates.items() if rate > 0 and action not in self.actions]
        if missing:
            raise ValueError(f"no action signature for: {', '.join(missing)}")
        return self


class TruthEvent(BaseModel):
    """A planted event."""
    session_id: str
    action: ActionClass
    onset_s: float
    precursor_onset_s: float

    @property
    def lead_s(self) -> float:
        return self.onset_s - self.precursor_onset_s


class GroundTruth(BaseModel):
    """All planted events of a generated dataset."""
    events: List[TruthEvent] = Field(default_factory=list)

    def for_session(self, session_id: str) -> List[TruthEvent]:
        return [event for event in self.events if event.session_id == session_id]

    def action_events(self, session_id: str) -> List[ActionEvent]:
        return [
            ActionEvent(action=event.action, onset_s=event.onset_s, source="ground_truth")
            for event in self.for_session(session_id)
        ]


# ---------------------------------------------------------------- evaluation


class PiecewiseBin(BaseModel):
    """Confusion counts and rates for positives whose time-to-event falls in (start_s, end_s]."""
    start_s: float
    end_s: float
    n_pos: int
    n_neg: int
    tp: int  # positives predicted as their own class
    fn: int
    tn: int
    fp: int  # negatives predicted as any positive class
    accuracy: Optional[float] = None
    tpr: Optional[float] = None
    fpr: Optional[float] = None


class PiecewiseMetrics(BaseModel):
    """Performance as a function of time-to-event plus whole-set aggregates."""
    horizon_s: float
    bin_width_s: float
    bins: List[PiecewiseBin]
    n_examples: int
    accuracy: Optional[float] = None
    class_tpr: Dict[str, Optional[float]] = Field(default_factory=dict)
    tpr: Optional[float] = None
    fpr: Optional[float] = None


class BinDelta(BaseModel):
    start_s: float
    end_s: float
    accuracy_delta: Optional[float] = None
    tpr_delta: Optional[float] = None
    fpr_delta: Optional[float] = None


class CurveComparison(BaseModel):
    """Per-bin differences a - b between two piecewise curves."""
    label_a: str
    label_b: str
    margin: float
    deltas: List[BinDelta]
    mean_accuracy_delta: Optional[float] = None
    earliest_advantage_s: Optional[float] = None  # largest time-to-event bin where a leads b by > margin


# ---------------------------------------------------------------- model file


class MatrixRecord(BaseModel):
    name: str
    rows: int = Field(ge=1)
    cols: int = Field(ge=1)
    values: List[float]


class ModelFile(BaseModel):
    """On-disk layout of a saved model."""
    format: Literal["dbrnn-model"] = "dbrnn-model"
    format_version: int
    config: NetworkConfig
    seed: int
    feature_schema: Optional[str] = None
    matrices: List[MatrixRecord]
