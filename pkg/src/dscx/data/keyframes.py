from __future__ import annotations

from dscx.errors import TooFewFrames

NUM_KEYFRAMES = 12


def select_keyframes(frame_count: int, count: int = NUM_KEYFRAMES) -> list[int]:
    """Evenly spaced frame indices over [0, frame_count - 1].

    Index i is round(i * (frame_count - 1) / (count - 1)) with halves rounded
    up; a collision is resolved by shifting the later index forward.
    """
    if frame_count < count:
        raise TooFewFrames(f"need at least {count} frames, got {frame_count}")
    span = frame_count - 1
    picks = []
    for i in range(count):
        # integer round-half-up of i*span/(count-1), free of float error
        idx = (2 * i * span + (count - 1)) // (2 * (count - 1))
        if picks and idx <= picks[-1]:
            idx = picks[-1] + 1
        picks.append(idx)
    return picks
