"""Tracklet record type and the line-delimited JSON tracklet file."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, NonMonotonicTimestamps, ParseError

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Tracklet:
    """One person's observations inside one camera.

    ``person_id`` is ground truth and must not be used by inference code.
    """

    camera_id: int
    person_id: int
    times: np.ndarray  # (T,) seconds
    foot_px: np.ndarray  # (T, 2)
    head_px: np.ndarray  # (T, 2)
    features: np.ndarray  # (T, D)

    def __post_init__(self):
        for name in ("times", "foot_px", "head_px", "features"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n = len(self.times)
        if self.foot_px.shape != (n, 2) or self.head_px.shape != (n, 2) or len(self.features) != n:
            raise DataError(f"tracklet cam={self.camera_id} pid={self.person_id}: inconsistent frame arrays")
        if n > 1 and np.any(np.diff(self.times) <= 0):
            raise NonMonotonicTimestamps(self.camera_id, self.person_id)

    def __len__(self):
        return len(self.times)

    def __eq__(self, other):
        if not isinstance(other, Tracklet):
            return NotImplemented
        return (
            self.camera_id == other.camera_id
            and self.person_id == other.person_id
            and all(
                np.array_equal(getattr(self, k), getattr(other, k))
                for k in ("times", "foot_px", "head_px", "features")
            )
        )

    __hash__ = None

    @property
    def first_time(self) -> float:
        return float(self.times[0])

    @property
    def last_time(self) -> float:
        return float(self.times[-1])

    def sort_key(self):
        return (self.camera_id, self.first_time, self.person_id)


def tracklet_to_record(tr: Tracklet) -> dict:
    frames = np.hstack([tr.times[:, None], tr.foot_px, tr.head_px, tr.features])
    return {"cam": int(tr.camera_id), "pid": int(tr.person_id), "frames": frames.tolist()}


def write_tracklets(path, tracklets) -> None:
    with open(path, "w") as fh:
        for tr in tracklets:
            fh.write(json.dumps(tracklet_to_record(tr)) + "\n")


def read_tracklets(path) -> tuple[list[Tracklet], int]:
    """Parse a tracklet file.

    Returns the tracklets sorted by (camera, first timestamp) and the number
    of single-frame tracklets that were dropped.
    """
    name = Path(path).name
    out, dropped = [], 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                cam, pid = int(rec["cam"]), int(rec["pid"])
                frames = np.asarray(rec["frames"], dtype=float)
            except (ValueError, KeyError, TypeError) as exc:
                raise ParseError(name, lineno, str(exc)) from exc
            if frames.ndim != 2 or frames.shape[1] < 6:
                if frames.size == 0:
                    dropped += 1
                    continue
                raise ParseError(name, lineno, "each frame needs [t, fu, fv, hu, hv, feat...]")
            if len(frames) < 2:
                dropped += 1
                continue
            out.append(Tracklet(cam, pid, frames[:, 0], frames[:, 1:3], frames[:, 3:5], frames[:, 5:]))
    if dropped:
        log.warning("%s: dropped %d single-frame tracklet(s)", name, dropped)
    out.sort(key=Tracklet.sort_key)
    return out, dropped


def ingest_tracklets(path) -> list[Tracklet]:
    return read_tracklets(path)[0]


def by_camera(tracklets) -> dict[int, list[Tracklet]]:
    """Group tracklets per camera, preserving (camera, first time) order.

    The position inside each list is the tracklet index used by
    correspondence sets.
    """
    groups: dict[int, list[Tracklet]] = {}
    for tr in sorted(tracklets, key=Tracklet.sort_key):
        groups.setdefault(tr.camera_id, []).append(tr)
    return groups
