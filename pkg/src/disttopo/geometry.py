"""Pinhole projection, ground-plane back-projection and height measurement.

World frame: Z up, ground plane at Z = 0, units in meters. A camera maps a
world point X to pixels through ``P = K [R | scale * t]``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import (
    DataError,
    DegenerateProjection,
    NonPositiveHeight,
    ParseError,
    PointBehindCamera,
    RayParallelToGround,
)

W_EPS = 1e-12
DIR_EPS = 1e-9
ORTHO_TOL = 1e-9


@dataclass(frozen=True)
class CameraModel:
    camera_id: int
    intrinsics: np.ndarray
    rotation: np.ndarray
    translation: np.ndarray
    scale: float = 1.0
    # image bounds (width, height) in pixels; informational only
    image_size: tuple = field(default=(1920, 1080), compare=False)

    def __post_init__(self):
        K = np.asarray(self.intrinsics, dtype=float).reshape(3, 3)
        R = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        for arr in (K, R, t):
            arr.setflags(write=False)
        object.__setattr__(self, "intrinsics", K)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "scale", float(self.scale))
        if not np.all(np.abs(R.T @ R - np.eye(3)) <= ORTHO_TOL):
            raise DataError(f"camera {self.camera_id}: rotation is not orthonormal")
        if np.any(np.abs(np.tril(K, -1)) > 0) or np.any(np.diag(K) <= 0):
            raise DataError(f"camera {self.camera_id}: K must be upper-triangular with positive diagonal")
        if not self.scale > 0:
            raise DataError(f"camera {self.camera_id}: scale must be positive")

    def __eq__(self, other):
        if not isinstance(other, CameraModel):
            return NotImplemented
        return (
            self.camera_id == other.camera_id
            and self.scale == other.scale
            and np.array_equal(self.intrinsics, other.intrinsics)
            and np.array_equal(self.rotation, other.rotation)
            and np.array_equal(self.translation, other.translation)
        )

    __hash__ = None

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.rotation.T @ (self.scale * self.translation)

    def with_scale(self, scale: float) -> "CameraModel":
        return replace(self, scale=scale)


def projection_matrix(cam: CameraModel) -> np.ndarray:
    Rt = np.hstack([cam.rotation, (cam.scale * cam.translation)[:, None]])
    return cam.intrinsics @ Rt


def project(cam: CameraModel, world_point) -> np.ndarray:
    """Project world point(s) to pixels.

    Accepts a single 3-vector or an (N, 3) array and returns (2,) or (N, 2).
    """
    X = np.asarray(world_point, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    h = np.hstack([X, np.ones((len(X), 1))]) @ projection_matrix(cam).T
    w = h[:, 2]
    if np.any(np.abs(w) < W_EPS):
        raise DegenerateProjection(f"camera {cam.camera_id}: point projects to infinity")
    uv = h[:, :2] / w[:, None]
    return uv[0] if single else uv


def back_project_ground(cam: CameraModel, pixel) -> np.ndarray:
    """Intersect the viewing ray(s) through ``pixel`` with the Z = 0 plane.

    Returns ground (x, y) as (2,) or (N, 2) for an (N, 2) input.
    """
    px = np.asarray(pixel, dtype=float)
    single = px.ndim == 1
    px = np.atleast_2d(px)
    homog = np.hstack([px, np.ones((len(px), 1))])
    # ray in camera frame has unit depth, so the ray parameter is the depth
    rays_cam = np.linalg.solve(cam.intrinsics, homog.T)
    rays = (cam.rotation.T @ rays_cam).T
    C = cam.center
    dz = rays[:, 2] / np.linalg.norm(rays, axis=1)
    if np.any(np.abs(dz) < DIR_EPS):
        raise RayParallelToGround(f"camera {cam.camera_id}: viewing ray parallel to ground")
    depth = -C[2] / rays[:, 2]
    if np.any(depth < 0):
        raise PointBehindCamera(f"camera {cam.camera_id}: ground intersection behind camera")
    ground = C[None, :2] + depth[:, None] * rays[:, :2]
    return ground[0] if single else ground


def measure_height(cam: CameraModel, foot_px, head_px):
    """World height of a vertical segment standing on the ground.

    The foot pixel is back-projected to (X, Y, 0); the height Z is the
    least-squares solution of the two linear equations obtained by requiring
    (X, Y, Z) to project onto ``head_px``. Vectorized over (N, 2) inputs.
    """
    foot = np.asarray(foot_px, dtype=float)
    head = np.asarray(head_px, dtype=float)
    single = foot.ndim == 1
    foot = np.atleast_2d(foot)
    head = np.atleast_2d(head)
    g = back_project_ground(cam, foot)
    P = projection_matrix(cam)
    a = g @ P[:, :2].T + P[:, 3]  # projection of the foot point, homogeneous
    b = P[:, 2]
    u, v = head[:, 0], head[:, 1]
    cu = b[0] - u * b[2]
    cv = b[1] - v * b[2]
    ru = u * a[:, 2] - a[:, 0]
    rv = v * a[:, 2] - a[:, 1]
    denom = cu * cu + cv * cv
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(denom > 0, (cu * ru + cv * rv) / denom, 0.0)
    if single:
        if not z[0] > 0:
            raise NonPositiveHeight(f"camera {cam.camera_id}: measured height {z[0]:.4g} <= 0")
        return float(z[0])
    return z


def look_at(camera_id, position, target, focal, principal, image_size=(1920, 1080)) -> CameraModel:
    """Camera at ``position`` (world) looking at ``target`` with zero roll."""
    C = np.asarray(position, dtype=float)
    forward = np.asarray(target, dtype=float) - C
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, [0.0, 0.0, 1.0])
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    R = np.vstack([right, down, forward])
    K = np.array([[focal, 0.0, principal[0]], [0.0, focal, principal[1]], [0.0, 0.0, 1.0]])
    return CameraModel(camera_id, K, R, -R @ C, 1.0, image_size=tuple(image_size))


def camera_to_record(cam: CameraModel) -> dict:
    return {
        "id": int(cam.camera_id),
        "K": [float(x) for x in cam.intrinsics.ravel()],
        "R": [float(x) for x in cam.rotation.ravel()],
        "t": [float(x) for x in cam.translation.ravel()],
        "scale": float(cam.scale),
        "image_size": [int(s) for s in cam.image_size],
    }


def camera_from_record(rec: dict) -> CameraModel:
    return CameraModel(
        int(rec["id"]),
        np.array(rec["K"], dtype=float).reshape(3, 3),
        np.array(rec["R"], dtype=float).reshape(3, 3),
        np.array(rec["t"], dtype=float),
        float(rec.get("scale", 1.0)),
        image_size=tuple(rec.get("image_size", (1920, 1080))),
    )


def write_cameras(path, cams) -> None:
    with open(path, "w") as fh:
        for cam in sorted(cams, key=lambda c: c.camera_id):
            fh.write(json.dumps(camera_to_record(cam)) + "\n")


def read_cameras(path) -> list[CameraModel]:
    cams = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                cams.append(camera_from_record(rec))
            except (ValueError, KeyError, TypeError) as exc:
                raise ParseError(Path(path).name, lineno, str(exc)) from exc
    return sorted(cams, key=lambda c: c.camera_id)
