from __future__ import annotations

from dataclasses import dataclass, field

from dscx.dynamics import DynamicsWindow
from dscx.errors import InvalidLabel
from dscx.heatmap import Detection

KEYFRAMES = 12
NUM_CLASSES = 5


@dataclass
class Sample:
    """One 4-second segment: 12 keyframe detection sets, dynamics, and a label.

    ``label`` may be None for unlabelled inference input. ``moving`` is the
    driving(1)/stopped(0) flag from the labelling sheet; it is carried along
    for filtering and is not a model input.
    """

    keyframes: list[list[Detection]]
    dynamics: DynamicsWindow
    label: int | None = None
    moving: bool = True
    sample_id: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.label is not None:
            if int(self.label) != self.label or not 0 <= self.label < NUM_CLASSES:
                raise InvalidLabel(f"complexity label must be 0..{NUM_CLASSES - 1}, got {self.label!r}")
            self.label = int(self.label)
