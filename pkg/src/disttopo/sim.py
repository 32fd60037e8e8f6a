"""Synthetic multi-camera pedestrian world.

Each camera watches a rectangular patch of the ground plane. Cameras are
connected by blind corridors of fixed length. Every person walks a simple
path over the link graph at a constant personal speed, crossing each visited
patch along its long side, and is observed at ``frame_rate`` while inside.

The translation written to each reported camera is the true translation times
``camera_scale_errors[id]``, which stretches that camera's reconstructed
scene by the same factor.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidConfig, MissingArtifact, ParseError
from .geometry import CameraModel, look_at, project
from .tracklets import Tracklet

# odd lengths keep noise-free distances off the default 2 m bin edges
DEFAULT_LINKS = ((0, 1, 47.0), (1, 2, 53.0), (2, 3, 39.0), (3, 4, 61.0))


@dataclass
class WorldConfig:
    n_cameras: int = 5
    links: list = field(default_factory=lambda: [list(l) for l in DEFAULT_LINKS])
    # (length along walking direction, width) in meters, shared by all cameras
    fov_footprint: list = field(default_factory=lambda: [12.0, 6.0])
    frame_rate: float = 5.0
    n_persons: int = 600
    speed_range: list = field(default_factory=lambda: [0.8, 2.1])
    height_mean_std: list = field(default_factory=lambda: [1.72, 0.07])
    height_noise_std: float = 0.02
    pixel_noise_std: float = 0.5
    feature_dim: int = 32
    feature_noise_std: float = 0.4
    feature_clusters: int = 6
    cluster_spread: float = 0.4
    camera_scale_errors: list | None = None
    arrival_window_s: float = 900.0
    max_hops: int = 4
    speed_jitter: bool = False
    image_size: list = field(default_factory=lambda: [1920, 1080])
    rng_seed: int = 0

    def scale_errors(self) -> list[float]:
        if self.camera_scale_errors is None:
            return [1.0] * self.n_cameras
        return [float(s) for s in self.camera_scale_errors]

    def validate(self) -> None:
        if self.n_cameras < 1:
            raise InvalidConfig("n_cameras", "must be >= 1")
        if self.n_persons < 0:
            raise InvalidConfig("n_persons", "must be >= 0")
        length, width = self.fov_footprint
        if not (length > 0 and width > 0):
            raise InvalidConfig("fov_footprint", "sides must be positive")
        for link in self.links:
            if len(link) != 3:
                raise InvalidConfig("links", f"{link!r} is not (cam_a, cam_b, length)")
            a, b, d = link
            if not (0 <= a < self.n_cameras and 0 <= b < self.n_cameras) or a == b:
                raise InvalidConfig("links", f"{link!r} must join two distinct existing cameras")
            # overlap deeper than a whole footprint is not a valid layout
            if not d > -length or d == 0:
                raise InvalidConfig("links", f"{link!r} has an impossible path length")
        lo, hi = self.speed_range
        if not (0 < lo <= hi):
            raise InvalidConfig("speed_range", "need 0 < min <= max")
        if not self.frame_rate > 0:
            raise InvalidConfig("frame_rate", "must be > 0")
        if self.feature_noise_std < 0:
            raise InvalidConfig("feature_noise_std", "must be >= 0")
        if self.height_noise_std < 0 or self.pixel_noise_std < 0:
            raise InvalidConfig("height_noise_std", "noise levels must be >= 0")
        if self.feature_dim < 1:
            raise InvalidConfig("feature_dim", "must be >= 1")
        if self.feature_clusters < 1:
            raise InvalidConfig("feature_clusters", "must be >= 1")
        if self.height_mean_std[0] <= 0:
            raise InvalidConfig("height_mean_std", "mean must be positive")
        errs = self.scale_errors()
        if len(errs) != self.n_cameras or any(not s > 0 for s in errs):
            raise InvalidConfig("camera_scale_errors", "need one positive factor per camera")
        if self.max_hops < 1:
            raise InvalidConfig("max_hops", "must be >= 1")
        if self.arrival_window_s < 0:
            raise InvalidConfig("arrival_window_s", "must be >= 0")


@dataclass
class GroundTruth:
    # (cam_a, pid, cam_b, pid, dt) with cam_a visited first
    pairs: list = field(default_factory=list)
    link_distances: list = field(default_factory=list)
    person_speeds: dict = field(default_factory=dict)
    person_heights: dict = field(default_factory=dict)
    camera_scale_errors: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "pairs": [list(p) for p in self.pairs],
            "link_distances": [list(l) for l in self.link_distances],
            "person_speeds": {str(k): v for k, v in self.person_speeds.items()},
            "person_heights": {str(k): v for k, v in self.person_heights.items()},
            "camera_scale_errors": list(self.camera_scale_errors),
        }

    @classmethod
    def from_json(cls, data: dict) -> "GroundTruth":
        return cls(
            pairs=[(int(a), int(p), int(b), int(q), float(dt)) for a, p, b, q, dt in data["pairs"]],
            link_distances=[(int(a), int(b), float(d)) for a, b, d in data["link_distances"]],
            person_speeds={int(k): float(v) for k, v in data.get("person_speeds", {}).items()},
            person_heights={int(k): float(v) for k, v in data.get("person_heights", {}).items()},
            camera_scale_errors=[float(s) for s in data.get("camera_scale_errors", [])],
        )


def write_truth(path, truth: GroundTruth) -> None:
    with open(path, "w") as fh:
        json.dump(truth.to_json(), fh)
        fh.write("\n")


def read_truth(path) -> GroundTruth:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError as exc:
        raise MissingArtifact(f"ground truth file not found: {path}") from exc
    except ValueError as exc:
        raise ParseError(str(path), getattr(exc, "lineno", 0), str(exc)) from exc
    return GroundTruth.from_json(data)


def _footprint_center(cam_id: int) -> np.ndarray:
    # patches laid out on a coarse grid; the blind corridors are abstract
    return np.array([150.0 * (cam_id % 3), 150.0 * (cam_id // 3)])


def _make_camera(cam_id, cfg: WorldConfig, rng) -> CameraModel:
    length, width = cfg.fov_footprint
    w_img, h_img = cfg.image_size
    center = _footprint_center(cam_id)
    corners = np.array(
        [[sx * length / 2, sy * width / 2, 0.0] for sx in (-1, 1) for sy in (-1, 1)]
    ) + np.r_[center, 0.0]
    margin = 20.0
    base_reach = max(length, width)
    for attempt in range(200):
        reach = base_reach * (1.0 + 0.05 * attempt)
        height = rng.uniform(6.0, 9.0)
        setback = reach * rng.uniform(0.9, 1.2)
        azimuth = rng.uniform(-math.pi / 6, math.pi / 6) - math.pi / 2
        focal = rng.uniform(900.0, 1200.0)
        pos = [center[0] + setback * math.cos(azimuth), center[1] + setback * math.sin(azimuth), height]
        cam = look_at(cam_id, pos, [center[0], center[1], 0.0], focal, (w_img / 2, h_img / 2), (w_img, h_img))
        uv = project(cam, corners)
        if np.all((uv[:, 0] > margin) & (uv[:, 0] < w_img - margin) & (uv[:, 1] > margin) & (uv[:, 1] < h_img - margin)):
            return cam
    raise InvalidConfig("fov_footprint", f"camera {cam_id}: footprint cannot be fitted in the image")


def _feature_bases(cfg: WorldConfig, rng) -> np.ndarray:
    centers = rng.standard_normal((cfg.feature_clusters, cfg.feature_dim))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    labels = rng.integers(0, cfg.feature_clusters, size=cfg.n_persons)
    jitter = rng.standard_normal((cfg.n_persons, cfg.feature_dim)) * (cfg.cluster_spread / math.sqrt(cfg.feature_dim))
    bases = centers[labels] + jitter
    return bases / np.linalg.norm(bases, axis=1, keepdims=True)


def _random_path(start, adjacency, n_hops, rng):
    path = [(start, None)]  # (camera, link used to get there)
    visited = {start}
    for _ in range(n_hops):
        here = path[-1][0]
        options = [(nb, li) for nb, li in adjacency[here] if nb not in visited]
        if not options:
            break
        nb, li = options[rng.integers(len(options))]
        path.append((nb, li))
        visited.add(nb)
    return path


def generate_world(cfg: WorldConfig) -> tuple[list[CameraModel], list[Tracklet], GroundTruth]:
    """Build cameras, tracklets and ground truth. Deterministic in ``rng_seed``."""
    cfg.validate()
    rng = np.random.default_rng(cfg.rng_seed)
    errors = cfg.scale_errors()
    true_cams = [_make_camera(k, cfg, rng) for k in range(cfg.n_cameras)]
    reported = [
        CameraModel(c.camera_id, c.intrinsics, c.rotation, c.translation * errors[c.camera_id], 1.0, c.image_size)
        for c in true_cams
    ]

    adjacency = {k: [] for k in range(cfg.n_cameras)}
    for li, (a, b, _) in enumerate(cfg.links):
        adjacency[a].append((b, li))
        adjacency[b].append((a, li))

    length, width = cfg.fov_footprint
    v_lo, v_hi = cfg.speed_range
    h_mu, h_sd = cfg.height_mean_std
    speeds = rng.uniform(v_lo, v_hi, size=cfg.n_persons)
    heights = rng.normal(h_mu, h_sd, size=cfg.n_persons)
    starts = rng.uniform(0.0, cfg.arrival_window_s, size=cfg.n_persons)
    bases = _feature_bases(cfg, rng) if cfg.n_persons else np.zeros((0, cfg.feature_dim))
    feat_sd = cfg.feature_noise_std / math.sqrt(cfg.feature_dim)

    tracklets: list[Tracklet] = []
    pairs = []
    for pid in range(cfg.n_persons):
        start_cam = int(rng.integers(cfg.n_cameras))
        n_hops = int(rng.integers(1, cfg.max_hops + 1))
        path = _random_path(start_cam, adjacency, n_hops, rng)
        t_enter = starts[pid]
        prev = None
        for cam_id, link_idx in path:
            if link_idx is not None:
                v_blind = speeds[pid] * (rng.uniform(0.9, 1.1) if cfg.speed_jitter else 1.0)
                t_enter = prev.last_time + cfg.links[link_idx][2] / v_blind
            v_seg = speeds[pid] * (rng.uniform(0.9, 1.1) if cfg.speed_jitter else 1.0)
            tr = _walk_through(cfg, pid, true_cams[cam_id], t_enter, v_seg, heights[pid], bases[pid], feat_sd, rng)
            tracklets.append(tr)
            if prev is not None:
                pairs.append((prev.camera_id, pid, cam_id, pid, tr.first_time - prev.last_time))
            prev = tr

    truth = GroundTruth(
        pairs=pairs,
        link_distances=[(int(a), int(b), float(d)) for a, b, d in cfg.links],
        person_speeds={pid: float(speeds[pid]) for pid in range(cfg.n_persons)},
        person_heights={pid: float(heights[pid]) for pid in range(cfg.n_persons)},
        camera_scale_errors=errors,
    )
    tracklets.sort(key=Tracklet.sort_key)
    return reported, tracklets, truth


def _walk_through(cfg, pid, cam, t_enter, speed, height, base, feat_sd, rng) -> Tracklet:
    length, width = cfg.fov_footprint
    center = _footprint_center(cam.camera_id)
    direction = 1.0 if rng.random() < 0.5 else -1.0
    y0, y1 = rng.uniform(-0.4 * width, 0.4 * width, size=2)
    p0 = center + np.array([-direction * length / 2, y0])
    p1 = center + np.array([direction * length / 2, y1])
    seg = float(np.linalg.norm(p1 - p0))
    duration = seg / speed
    n = max(1, math.ceil(duration * cfg.frame_rate))
    frac = np.arange(n + 1) / n
    times = t_enter + duration * frac
    ground = p0[None, :] + frac[:, None] * (p1 - p0)[None, :]
    zeros = np.zeros(n + 1)
    head_z = height + rng.normal(0.0, cfg.height_noise_std, size=n + 1) if cfg.height_noise_std else np.full(n + 1, height)
    foot = project(cam, np.column_stack([ground, zeros]))
    head = project(cam, np.column_stack([ground, head_z]))
    if cfg.pixel_noise_std:
        foot = foot + rng.normal(0.0, cfg.pixel_noise_std, size=foot.shape)
        head = head + rng.normal(0.0, cfg.pixel_noise_std, size=head.shape)
    w_img, h_img = cam.image_size
    inside = (foot[:, 0] >= 0) & (foot[:, 0] < w_img) & (foot[:, 1] >= 0) & (foot[:, 1] < h_img)
    dim = len(base)
    # per-view appearance shift; its strength varies from view to view
    view = rng.standard_normal(dim) * feat_sd * rng.uniform(0.0, 2.0)
    frame_noise = rng.standard_normal((n + 1, dim)) * feat_sd
    feats = base[None, :] + view[None, :] + frame_noise
    feats /= np.linalg.norm(feats, axis=1, keepdims=True)
    return Tracklet(cam.camera_id, pid, times[inside], foot[inside], head[inside], feats[inside])
