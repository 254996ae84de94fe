"""Dataset manifest CSV and sample loading."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass
from pathlib import Path

from dscx.data.keyframes import NUM_KEYFRAMES, select_keyframes
from dscx.dynamics import read_dynamics_csv
from dscx.errors import InvalidLabel
from dscx.heatmap import DetectionParseError, read_keyframes
from dscx.sample import Sample

log = logging.getLogger(__name__)

MANIFEST_HEADER = ("sample_id", "detections_path", "dynamics_path", "label", "moving", "video_id", "segment")


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class ManifestEntry:
    sample_id: str
    detections_path: str
    dynamics_path: str
    label: int | None
    moving: bool
    video_id: str
    segment: int

    def row(self) -> list[str]:
        label = "" if self.label is None else str(self.label)
        return [self.sample_id, self.detections_path, self.dynamics_path, label, str(int(self.moving)), self.video_id, str(self.segment)]


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry]
    root: Path = Path(".")

    def __post_init__(self):
        seen = set()
        for e in self.entries:
            if e.sample_id in seen:
                raise ManifestError(f"duplicate sample_id {e.sample_id!r}")
            seen.add(e.sample_id)

    def __len__(self):
        return len(self.entries)

    def resolve(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.root / p

    def subset(self, indices) -> DatasetManifest:
        return DatasetManifest([self.entries[i] for i in indices], self.root)


def parse_manifest(text: str, root=".") -> DatasetManifest:
    reader = csv.reader(io.StringIO(text))
    try:
        header = tuple(h.strip() for h in next(reader))
    except StopIteration:
        raise ManifestError("manifest is empty") from None
    if header != MANIFEST_HEADER:
        raise ManifestError(f"manifest header must be {','.join(MANIFEST_HEADER)}")
    entries = []
    for lineno, row in enumerate(reader, 2):
        if not row:
            continue
        if len(row) != len(MANIFEST_HEADER):
            raise ManifestError(f"line {lineno}: expected {len(MANIFEST_HEADER)} fields, got {len(row)}")
        sid, det, dyn, label, moving, video, segment = (x.strip() for x in row)
        try:
            lab = int(label) if label else None
            if lab is not None and not 0 <= lab <= 4:
                raise InvalidLabel(f"label {lab} outside 0..4")
            entries.append(ManifestEntry(sid, det, dyn, lab, bool(int(moving)), video, int(segment)))
        except ValueError as exc:
            raise ManifestError(f"line {lineno}: {exc}") from exc
    return DatasetManifest(entries, Path(root))


def read_manifest(path) -> DatasetManifest:
    path = Path(path)
    return parse_manifest(path.read_text(encoding="utf-8"), path.parent)


def format_manifest(manifest: DatasetManifest) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(MANIFEST_HEADER)
    for e in manifest.entries:
        writer.writerow(e.row())
    return buf.getvalue()


def load_sample(manifest: DatasetManifest, entry: ManifestEntry) -> Sample:
    frames = read_keyframes(manifest.resolve(entry.detections_path))
    picks = select_keyframes(len(frames), NUM_KEYFRAMES)
    keyframes = [frames[i][1] for i in picks]
    window = read_dynamics_csv(manifest.resolve(entry.dynamics_path))
    meta = {"video_id": entry.video_id, "segment": entry.segment}
    return Sample(keyframes, window, entry.label, entry.moving, entry.sample_id, meta)


def load_samples(manifest: DatasetManifest) -> tuple[list[Sample], list[tuple[str, str]]]:
    """Load every entry, dropping unreadable samples and ones with under 12 frames.

    Returns the samples and a list of ``(sample_id, reason)`` for the drops;
    each drop is also logged.
    """
    samples, dropped = [], []
    for e in manifest.entries:
        try:
            samples.append(load_sample(manifest, e))
        except (OSError, ValueError, DetectionParseError, StopIteration) as exc:
            reason = f"{type(exc).__name__}: {exc}"
            log.warning("dropping sample %s: %s", e.sample_id, reason)
            dropped.append((e.sample_id, reason))
    return samples, dropped
