"""Ray-cast renderer for a textured box room with exact depth and poses.

The room is an axis-aligned box; each wall carries random 3-D points that
are drawn as Gaussian splats (fixed world-space size) over a smooth shading
field. Every pixel takes the nearest wall hit along its ray (a per-pixel
z-buffer), so depth and intensity are consistent across viewpoints.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import CameraIntrinsics, Pose, rodrigues


@dataclass(frozen=True)
class Room:
    lo: tuple[float, float, float] = (-2.0, -1.5, -3.0)
    hi: tuple[float, float, float] = (2.0, 1.5, 8.0)


@dataclass(frozen=True)
class Trajectory:
    """Forward motion along +z with smooth lateral, vertical and yaw wiggle."""

    n_frames: int = 10
    step: float = 0.1
    lateral: float = 0.0
    vertical: float = 0.0
    yaw_deg: float = 0.0
    period: float = 20.0
    start: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def poses(self) -> list[Pose]:
        out = []
        for i in range(self.n_frames):
            ph = 2.0 * np.pi * i / self.period
            c = np.array(self.start) + [self.lateral * np.sin(ph), self.vertical * np.sin(0.5 * ph),
                                        self.step * i]
            R = rodrigues([0.0, np.deg2rad(self.yaw_deg) * np.sin(0.7 * ph), 0.0])
            out.append(Pose(R, c))
        return out


@dataclass
class SyntheticScene:
    seed: int
    K: CameraIntrinsics
    size: tuple[int, int]  # (width, height)
    points: np.ndarray  # (N, 3) splat centres in world coordinates
    point_wall: np.ndarray  # (N,) wall index per point
    poses: list[Pose]  # camera-to-world
    images: list[np.ndarray] = field(default_factory=list)
    depths: list[np.ndarray] = field(default_factory=list)


@dataclass(frozen=True)
class _Texture:
    centres: np.ndarray
    amps: np.ndarray
    sigma: float
    shade_centres: np.ndarray
    shade_amps: np.ndarray
    shade_sigma: float


def _wall_planes(room: Room):
    # (axis, coordinate) for the six inner walls
    return [(a, v) for a in range(3) for v in (room.lo[a], room.hi[a])]


def _sample_points(rng, room: Room, n_points: int):
    walls = _wall_planes(room)
    lo, hi = np.array(room.lo), np.array(room.hi)
    area = []
    for a, _ in walls:
        o = [i for i in range(3) if i != a]
        area.append((hi[o[0]] - lo[o[0]]) * (hi[o[1]] - lo[o[1]]))
    area = np.array(area) / np.sum(area)
    wall = rng.choice(len(walls), size=n_points, p=area)
    pts = rng.uniform(lo, hi, size=(n_points, 3))
    for k, (a, v) in enumerate(walls):
        pts[wall == k, a] = v
    return pts, wall


def _shade(X, centres, amps, sigma):
    if len(centres) == 0:
        return np.zeros(len(X))
    d2 = (X * X).sum(axis=1)[:, None] + (centres * centres).sum(axis=1)[None, :] - 2.0 * X @ centres.T
    return np.exp(-np.maximum(d2, 0.0) / (2.0 * sigma * sigma)) @ amps


def _splats(X, centres, amps, sigma, axes):
    """Sum of splats truncated at 4 sigma, looked up through a uniform cell grid."""
    out = np.zeros(len(X))
    if len(centres) == 0:
        return out
    cs = 4.0 * sigma
    c2 = centres[:, axes]
    lo = c2.min(axis=0)
    cell = np.floor((c2 - lo) / cs).astype(np.int64)
    nx, ny = cell.max(axis=0) + 1
    lin = cell[:, 0] * ny + cell[:, 1]
    order = np.argsort(lin, kind="stable")
    lin_s = lin[order]
    start = np.searchsorted(lin_s, lin_s, side="left")
    slot = np.arange(len(lin_s)) - start
    table = np.full((nx * ny, slot.max() + 1), -1, dtype=np.int64)
    table[lin_s, slot] = order
    q = np.floor((X[:, axes] - lo) / cs).astype(np.int64)
    inv = 1.0 / (2.0 * sigma * sigma)
    for dx in (-1, 0, 1):
        for dy in (-1, 0, 1):
            gx, gy = q[:, 0] + dx, q[:, 1] + dy
            ok = (gx >= 0) & (gx < nx) & (gy >= 0) & (gy < ny)
            rows = np.flatnonzero(ok)
            idx = table[gx[ok] * ny + gy[ok]]
            for j in range(idx.shape[1]):
                k = idx[:, j]
                has = k >= 0
                r, kk = rows[has], k[has]
                d2 = ((X[r] - centres[kk]) ** 2).sum(axis=1)
                near = d2 < cs * cs
                out[r[near]] += amps[kk[near]] * np.exp(-d2[near] * inv)
    return out


def render_view(room: Room, textures: list[_Texture], K: CameraIntrinsics, size, cam_to_world: Pose):
    """Image and depth map of the room seen from ``cam_to_world``."""
    w, h = size
    v, u = np.mgrid[0:h, 0:w].astype(np.float64)
    rays_c = np.stack([(u - K.cx) / K.fx, (v - K.cy) / K.fy, np.ones_like(u)], axis=-1).reshape(-1, 3)
    rays_w = rays_c @ cam_to_world.R.T
    o = cam_to_world.t
    best_t = np.full(len(rays_w), np.inf)
    best_wall = np.full(len(rays_w), -1)
    for k, (a, val) in enumerate(_wall_planes(room)):
        den = rays_w[:, a]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (val - o[a]) / den
        hit = (t > 1e-9) & (t < best_t)
        best_t[hit] = t[hit]
        best_wall[hit] = k
    X = o + best_t[:, None] * rays_w
    shade = np.zeros(len(X))
    for k, tex in enumerate(textures):
        sel = best_wall == k
        if not sel.any():
            continue
        Xs = X[sel]
        axes = [i for i in range(3) if i != _wall_planes(room)[k][0]]
        shade[sel] = (_splats(Xs, tex.centres, tex.amps, tex.sigma, axes)
                      + _shade(Xs, tex.shade_centres, tex.shade_amps, tex.shade_sigma))
    img = (0.5 + 0.45 * np.tanh(shade)).reshape(h, w).astype(np.float32)
    # the ray parameter equals camera-frame depth because rays_c has unit z
    depth = best_t.reshape(h, w)
    return img, depth


def render_synthetic(seed: int = 0, n_points: int = 3000, trajectory: Trajectory = Trajectory(),
                     size: tuple[int, int] = (320, 240), K: CameraIntrinsics | None = None,
                     room: Room = Room(), splat_sigma: float = 0.03) -> SyntheticScene:
    """Render a seeded scene along a trajectory; deterministic in ``seed``."""
    if n_points <= 0 or size[0] <= 0 or size[1] <= 0:
        raise ValueError("parameters must be positive")
    w, h = size
    if K is None:
        K = CameraIntrinsics(0.75 * w, 0.75 * w, (w - 1) / 2.0, (h - 1) / 2.0)
    rng = np.random.default_rng(seed)
    pts, wall = _sample_points(rng, room, n_points)
    amps = rng.choice([-1.0, 1.0], size=n_points) * rng.uniform(0.6, 1.4, size=n_points)
    n_shade = 48
    shade_pts, _ = _sample_points(rng, room, n_shade)
    shade_amps = rng.normal(0.0, 0.5, size=n_shade)
    textures = []
    for k in range(6):
        # one shading field for the whole room keeps intensity continuous across wall edges
        textures.append(_Texture(pts[wall == k], amps[wall == k], splat_sigma, shade_pts, shade_amps, 0.5))
    poses = trajectory.poses()
    scene = SyntheticScene(seed, K, (w, h), pts, wall, poses)
    for pose in poses:
        img, depth = render_view(room, textures, K, (w, h), pose)
        scene.images.append(img)
        scene.depths.append(depth)
    return scene
