"""Relative scale between cameras from matched human heights.

For a camera pair (k, l) the ratio S minimizes the L1 objective
``sum |S - H_k / H_l|`` over matched identities; its exact minimizer is the
median of the ratios. Updating ``t_l <- S * t_l`` brings camera l's heights
onto camera k's scale. Pairwise ratios are chained over a maximum-support
spanning tree rooted at a reference camera.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, EmptyEstimates, GeometryError, NoValidFrames, NoValidPairs
from .geometry import CameraModel, measure_height

AVERAGE_HEIGHT = 1.72
# Outlier gate relative to AVERAGE_HEIGHT * camera scale. Symmetric in log
# space so reported translations off by up to 2x in either direction still pass.
GATE_LOW = 0.25
GATE_HIGH = 4.0


@dataclass
class CorrespondenceSet:
    cam_k: int
    cam_l: int
    # (index in k, index in l, similarity)
    pairs: list = field(default_factory=list)

    def __post_init__(self):
        left = [p[0] for p in self.pairs]
        right = [p[1] for p in self.pairs]
        if len(set(left)) != len(left) or len(set(right)) != len(right):
            raise DataError(f"correspondences {self.cam_k}-{self.cam_l} are not one-to-one")
        if any(not 0.0 <= p[2] <= 1.0 for p in self.pairs):
            raise DataError(f"correspondences {self.cam_k}-{self.cam_l}: score outside [0, 1]")

    def __len__(self):
        return len(self.pairs)

    def reliable(self, threshold: float) -> "CorrespondenceSet":
        return CorrespondenceSet(self.cam_k, self.cam_l, [p for p in self.pairs if p[2] > threshold])

    def to_json(self) -> dict:
        return {"k": self.cam_k, "l": self.cam_l, "pairs": [[int(i), int(j), float(s)] for i, j, s in self.pairs]}

    @classmethod
    def from_json(cls, rec) -> "CorrespondenceSet":
        return cls(int(rec["k"]), int(rec["l"]), [(int(i), int(j), float(s)) for i, j, s in rec["pairs"]])


def write_correspondences(path, corr_sets) -> None:
    with open(path, "w") as fh:
        json.dump([c.to_json() for c in corr_sets], fh)
        fh.write("\n")


def read_correspondences(path) -> list[CorrespondenceSet]:
    with open(path) as fh:
        return [CorrespondenceSet.from_json(r) for r in json.load(fh)]


@dataclass(frozen=True)
class ScaleEstimate:
    cam_k: int
    cam_l: int
    ratio: float
    support: int


def gate_heights(raw, scale=1.0, low=GATE_LOW, high=GATE_HIGH) -> np.ndarray:
    raw = np.asarray(raw, dtype=float)
    ref = AVERAGE_HEIGHT * scale
    return raw[(raw >= low * ref) & (raw <= high * ref)]


def mean_height(tracklet, cam: CameraModel, low=GATE_LOW, high=GATE_HIGH) -> float:
    """Average world height of a tracklet after the outlier gate."""
    try:
        raw = measure_height(cam, tracklet.foot_px, tracklet.head_px)
    except GeometryError as exc:
        raise NoValidFrames(f"camera {cam.camera_id}: {exc}") from exc
    kept = gate_heights(raw, cam.scale, low, high)
    if kept.size == 0:
        raise NoValidFrames(f"camera {cam.camera_id}: no frame passed the height gate")
    return float(kept.mean())


def lower_median(values) -> float:
    """Lower median; an exact minimizer of ``sum |S - x_i|``."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise NoValidPairs("no ratios to fit")
    return float(v[(v.size - 1) // 2])


def l1_objective(s, ratios) -> float:
    return float(np.abs(s - np.asarray(ratios, dtype=float)).sum())


def estimate_scale_ratio(corrs: CorrespondenceSet, heights_k, heights_l) -> ScaleEstimate:
    """Median of H_k / H_l over matched pairs with valid heights.

    ``heights_k`` / ``heights_l`` are indexed by tracklet index; entries that
    are None, NaN or non-positive are skipped.
    """
    ratios = []
    for i, j, _ in corrs.pairs:
        hk, hl = heights_k[i], heights_l[j]
        if hk is None or hl is None or not (hk > 0 and hl > 0):
            continue
        ratios.append(hk / hl)
    if not ratios:
        raise NoValidPairs(f"cameras {corrs.cam_k}-{corrs.cam_l}: no pair with valid heights")
    return ScaleEstimate(corrs.cam_k, corrs.cam_l, lower_median(ratios), len(ratios))


@dataclass
class ScaleSolution:
    scales: dict  # camera -> multiplicative factor on current scale
    flagged: set  # cameras unreachable from the reference
    tree: list  # estimates used as spanning-tree edges
    residuals: list  # (k, l, |log cycle mismatch|) for non-tree edges
    reference: int = 0


def propagate_scales(estimates, n_cameras, reference=None, camera_ids=None) -> ScaleSolution:
    """Chain pairwise ratios from ``reference`` over a max-support spanning tree.

    ``scale(l) = scale(k) * ratio(k, l)`` along every tree edge. Cameras not
    connected to the reference keep factor 1 and are flagged.
    """
    estimates = list(estimates)
    if not estimates:
        raise EmptyEstimates("no scale estimates to propagate")
    cams = sorted(camera_ids) if camera_ids is not None else list(range(n_cameras))
    if reference is None:
        reference = cams[0]

    # Prim's algorithm on support, ties to lower (k, l) for determinism
    scales = {reference: 1.0}
    tree = []
    remaining = sorted(estimates, key=lambda e: (-e.support, e.cam_k, e.cam_l))
    grown = True
    while grown:
        grown = False
        for est in remaining:
            k_in, l_in = est.cam_k in scales, est.cam_l in scales
            if k_in == l_in:
                continue
            if k_in:
                scales[est.cam_l] = scales[est.cam_k] * est.ratio
            else:
                scales[est.cam_k] = scales[est.cam_l] / est.ratio
            tree.append(est)
            remaining.remove(est)
            grown = True
            break

    residuals = []
    for est in remaining:
        if est.cam_k in scales and est.cam_l in scales:
            mismatch = scales[est.cam_k] * est.ratio / scales[est.cam_l]
            residuals.append((est.cam_k, est.cam_l, abs(math.log(mismatch))))
    flagged = {c for c in cams if c not in scales}
    for c in flagged:
        scales[c] = 1.0
    return ScaleSolution({c: scales[c] for c in cams}, flagged, tree, residuals, reference)


def apply_scales(cams, solution: ScaleSolution) -> list[CameraModel]:
    return [c.with_scale(c.scale * solution.scales.get(c.camera_id, 1.0)) for c in cams]


def scale_report(solution: ScaleSolution, estimates, cams) -> dict:
    by_id = {c.camera_id: c for c in cams}
    return {
        "reference": solution.reference,
        "cameras": [
            {"id": cid, "scale": by_id[cid].scale if cid in by_id else s, "flagged": cid in solution.flagged}
            for cid, s in solution.scales.items()
        ],
        "links": [
            {"k": e.cam_k, "l": e.cam_l, "ratio": e.ratio, "support": e.support, "in_tree": e in solution.tree}
            for e in sorted(estimates, key=lambda e: (e.cam_k, e.cam_l))
        ],
        "cycle_residuals": [{"k": k, "l": l, "residual": r} for k, l, r in solution.residuals],
    }
