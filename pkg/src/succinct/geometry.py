"""Pinhole camera, P3P, RANSAC pose estimation, stereo depth and pose errors.

Convention: a relative pose ``T_1^0`` maps camera-0 coordinates into camera-1
coordinates, ``X1 = R @ X0 + t``. Ground-truth files store camera-to-world.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .descriptors import MatchSet
from .image_core import box_filter

INLIER, OUTLIER, UNLABELED = 1, 0, -1


class GeometryError(ValueError):
    """Degenerate input to a geometric solver."""


class PoseEstimationError(RuntimeError):
    """RANSAC could not produce a pose."""


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class Pose:
    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.R, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.t, dtype=np.float64).reshape(3)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    def is_valid(self, tol: float = 1e-9) -> bool:
        return (np.abs(self.R.T @ self.R - np.eye(3)).max() <= tol
                and abs(np.linalg.det(self.R) - 1.0) <= tol)

    def apply(self, X) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.R.T + self.t

    def inverse(self) -> "Pose":
        return Pose(self.R.T, -self.R.T @ self.t)

    def compose(self, other: "Pose") -> "Pose":
        """``self ∘ other``: apply ``other`` first."""
        return Pose(self.R @ other.R, self.R @ other.t + self.t)

    def as_matrix34(self) -> np.ndarray:
        return np.hstack([self.R, self.t[:, None]])


def relative_pose(cam_to_world_0: Pose, cam_to_world_1: Pose) -> Pose:
    """T_1^0 from two camera-to-world poses."""
    return cam_to_world_1.inverse().compose(cam_to_world_0)


def hat(w) -> np.ndarray:
    return np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])


def rodrigues(w) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    th = float(np.linalg.norm(w))
    if th < 1e-12:
        return np.eye(3) + hat(w)
    k = hat(w / th)
    return np.eye(3) + math.sin(th) * k + (1.0 - math.cos(th)) * (k @ k)


def project(pose: Pose, K: CameraIntrinsics, X) -> np.ndarray:
    """Pixel coordinates of world point(s) ``X``; raises if any lies behind the camera."""
    Xc = pose.apply(np.atleast_2d(X))
    if np.any(Xc[:, 2] <= 1e-6):
        raise GeometryError("point is not in front of the camera")
    uv = np.stack([K.fx * Xc[:, 0] / Xc[:, 2] + K.cx, K.fy * Xc[:, 1] / Xc[:, 2] + K.cy], axis=1)
    return uv[0] if np.ndim(X) == 1 else uv


def backproject(K: CameraIntrinsics, pixel, depth) -> np.ndarray:
    uv = np.atleast_2d(np.asarray(pixel, dtype=np.float64))
    d = np.broadcast_to(np.asarray(depth, dtype=np.float64), uv.shape[:1])
    if np.any(~(d > 0)):
        raise GeometryError("depth must be positive")
    X = np.stack([(uv[:, 0] - K.cx) / K.fx * d, (uv[:, 1] - K.cy) / K.fy * d, d], axis=1)
    return X[0] if np.ndim(pixel) == 1 else X


def bearings(K: CameraIntrinsics, pixels) -> np.ndarray:
    uv = np.atleast_2d(np.asarray(pixels, dtype=np.float64))
    f = np.stack([(uv[:, 0] - K.cx) / K.fx, (uv[:, 1] - K.cy) / K.fy, np.ones(len(uv))], axis=1)
    return f / np.linalg.norm(f, axis=1, keepdims=True)


# --- P3P --------------------------------------------------------------------

def _absolute_orientation(world: np.ndarray, cam: np.ndarray) -> Pose:
    """Least-squares R, t with cam ≈ R @ world + t (Kabsch)."""
    mw, mc = world.mean(axis=0), cam.mean(axis=0)
    H = (world - mw).T @ (cam - mc)
    U, _, Vt = np.linalg.svd(H)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(Vt.T @ U.T))])
    R = Vt.T @ D @ U.T
    return Pose(R, mc - R @ mw)


def _grunert_quartic(a2, b2, c2, ca, cb, cg) -> np.ndarray:
    """Coefficients (highest first) of the quartic in v = s3/s1."""
    amc = (a2 - c2) / b2
    apc = (a2 + c2) / b2
    A4 = (amc - 1.0) ** 2 - 4.0 * c2 / b2 * ca * ca
    A3 = 4.0 * (amc * (1.0 - amc) * cb - (1.0 - apc) * ca * cg + 2.0 * c2 / b2 * ca * ca * cb)
    A2 = 2.0 * (amc * amc - 1.0 + 2.0 * amc * amc * cb * cb + 2.0 * (b2 - c2) / b2 * ca * ca
                - 4.0 * apc * ca * cb * cg + 2.0 * (b2 - a2) / b2 * cg * cg)
    A1 = 4.0 * (-amc * (1.0 + amc) * cb + 2.0 * a2 / b2 * cg * cg * cb - (1.0 - apc) * ca * cg)
    A0 = (1.0 + amc) ** 2 - 4.0 * a2 / b2 * cg * cg
    return np.array([A4, A3, A2, A1, A0])


def _polish_distances(s, a2, b2, c2, ca, cb, cg, iters: int = 8):
    """Newton refinement of the three ray lengths on the law-of-cosines system."""
    s1, s2, s3 = (float(v) for v in s)
    for _ in range(iters):
        F1 = s1 * s1 + s2 * s2 - 2 * s1 * s2 * cg - c2
        F2 = s1 * s1 + s3 * s3 - 2 * s1 * s3 * cb - b2
        F3 = s2 * s2 + s3 * s3 - 2 * s2 * s3 * ca - a2
        # Jacobian rows (j11, j12, 0), (j21, 0, j23), (0, j32, j33); Cramer's rule
        j11, j12 = 2 * (s1 - s2 * cg), 2 * (s2 - s1 * cg)
        j21, j23 = 2 * (s1 - s3 * cb), 2 * (s3 - s1 * cb)
        j32, j33 = 2 * (s2 - s3 * ca), 2 * (s3 - s2 * ca)
        det = -j11 * j23 * j32 - j12 * j21 * j33
        if abs(det) < 1e-300:
            break
        d1 = (F1 * (-j23 * j32) - j12 * (F2 * j33 - j23 * F3)) / det
        d2 = (j11 * (F2 * j33 - j23 * F3) - F1 * j21 * j33) / det
        d3 = (j11 * (-j32 * F2) - j12 * (j21 * F3) + F1 * (j21 * j32)) / det
        s1, s2, s3 = s1 - d1, s2 - d2, s3 - d3
        if max(abs(d1), abs(d2), abs(d3)) < 1e-15 * max(1.0, abs(s1), abs(s2), abs(s3)):
            break
    return np.array([s1, s2, s3])


def p3p_solve(bearing_vectors, world_points) -> list[Pose]:
    """Grunert three-point resection; returns up to four poses.

    ``bearing_vectors`` are unit rays in the camera frame, ``world_points``
    the matching 3-D points. Each pose maps world into camera coordinates.
    """
    f = np.asarray(bearing_vectors, dtype=np.float64).reshape(3, 3)
    P = np.asarray(world_points, dtype=np.float64).reshape(3, 3)
    f = f / np.linalg.norm(f, axis=1, keepdims=True)
    area = 0.5 * np.linalg.norm(np.cross(P[1] - P[0], P[2] - P[0]))
    if area <= 1e-9:
        raise GeometryError("world points are collinear or coincident")
    if min(np.linalg.norm(np.cross(f[i], f[j])) for i, j in ((0, 1), (0, 2), (1, 2))) < 1e-12:
        raise GeometryError("coincident bearing vectors")

    a2 = float(np.sum((P[1] - P[2]) ** 2))
    b2 = float(np.sum((P[0] - P[2]) ** 2))
    c2 = float(np.sum((P[0] - P[1]) ** 2))
    ca, cb, cg = float(f[1] @ f[2]), float(f[0] @ f[2]), float(f[0] @ f[1])

    coeffs = _grunert_quartic(a2, b2, c2, ca, cb, cg)
    roots = np.roots(coeffs / np.abs(coeffs).max()) if np.abs(coeffs).max() > 0 else np.array([])
    cands = []
    for r in roots:
        if abs(r.imag) > 1e-4 * (1.0 + abs(r.real)):
            continue
        v = r.real
        if v <= 0:
            continue
        q = 1.0 + v * v - 2.0 * v * cb
        if q <= 0:
            continue
        s1 = math.sqrt(b2 / q)
        # u = s2/s1 from the s1-s2 constraint; the third constraint is checked below.
        # (Grunert's closed form for u is singular on symmetric layouts.)
        disc = cg * cg - 1.0 + c2 / (s1 * s1)
        us = [cg + sg * math.sqrt(max(disc, 0.0)) for sg in (1.0, -1.0)]
        for u in us:
            if u <= 0:
                continue
            s2, s3 = u * s1, v * s1
            # the wrong branch of u misses the remaining constraint by a wide margin
            if abs(s2 * s2 + s3 * s3 - 2.0 * s2 * s3 * ca - a2) > 1e-2 * max(a2, b2, c2):
                continue
            s = _polish_distances([s1, u * s1, v * s1], a2, b2, c2, ca, cb, cg)
            if np.all(s > 0):
                cands.append(s)

    poses: list[Pose] = []
    scale = math.sqrt(max(a2, b2, c2))
    for s in cands:
        cam = f * s[:, None]
        # reject spurious roots that fail the distance constraints
        d = np.array([np.sum((cam[0] - cam[1]) ** 2) - c2, np.sum((cam[0] - cam[2]) ** 2) - b2,
                      np.sum((cam[1] - cam[2]) ** 2) - a2])
        if np.abs(d).max() > 1e-6 * scale * scale:
            continue
        pose = _absolute_orientation(P, cam)
        if any(np.abs(pose.R - q.R).max() < 1e-9 and np.abs(pose.t - q.t).max() < 1e-9 * (1 + scale)
               for q in poses):
            continue
        poses.append(pose)
    return poses


# --- RANSAC -----------------------------------------------------------------

@dataclass(frozen=True)
class LabeledMatches:
    """A MatchSet with one label per match: INLIER, OUTLIER or UNLABELED."""

    matches: MatchSet
    labels: np.ndarray

    def _subset(self, value: int) -> MatchSet:
        return self.matches.take(np.flatnonzero(self.labels == value))

    @property
    def inliers(self) -> MatchSet:
        return self._subset(INLIER)

    @property
    def outliers(self) -> MatchSet:
        return self._subset(OUTLIER)

    @property
    def unlabeled(self) -> MatchSet:
        return self._subset(UNLABELED)

    @property
    def n_inliers(self) -> int:
        return int(np.sum(self.labels == INLIER))

    @property
    def n_outliers(self) -> int:
        return int(np.sum(self.labels == OUTLIER))


def reprojection_errors(pose: Pose, K: CameraIntrinsics, X: np.ndarray, uv: np.ndarray) -> np.ndarray:
    Xc = pose.apply(X)
    z = Xc[:, 2]
    err = np.full(len(X), np.inf)
    ok = z > 1e-6
    pu = K.fx * Xc[ok, 0] / z[ok] + K.cx
    pv = K.fy * Xc[ok, 1] / z[ok] + K.cy
    err[ok] = np.hypot(pu - uv[ok, 0], pv - uv[ok, 1])
    return err


def refine_pose(pose: Pose, K: CameraIntrinsics, X: np.ndarray, uv: np.ndarray, iters: int = 10) -> Pose:
    """Gauss-Newton on the summed squared reprojection error."""
    R, t = pose.R, pose.t
    for _ in range(iters):
        Xc = X @ R.T + t
        if np.any(Xc[:, 2] <= 1e-6):
            break
        x, y, z = Xc.T
        r = np.concatenate([K.fx * x / z + K.cx - uv[:, 0], K.fy * y / z + K.cy - uv[:, 1]])
        # d(pixel)/d(Xc)
        ju = np.stack([K.fx / z, np.zeros_like(z), -K.fx * x / z ** 2], axis=1)
        jv = np.stack([np.zeros_like(z), K.fy / z, -K.fy * y / z ** 2], axis=1)
        # dXc/d(omega) = -[Xc]x ; dXc/dt = I
        JX = np.concatenate([ju, jv])
        Xrep = np.concatenate([Xc, Xc])
        jw = np.cross(Xrep, JX)
        J = np.hstack([jw, JX])
        step, *_ = np.linalg.lstsq(J, -r, rcond=None)
        dR = rodrigues(step[:3])
        R, t = dR @ R, dR @ t + step[3:]
        if np.abs(step).max() < 1e-14:
            break
    U, _, Vt = np.linalg.svd(R)
    return Pose(U @ Vt, t)


def _needed_iterations(inlier_ratio: float, confidence: float, sample_size: int = 4) -> float:
    p = inlier_ratio ** sample_size
    if p >= 1.0:
        return 0.0
    if p <= 0.0:
        return math.inf
    return math.log(1.0 - confidence) / math.log(1.0 - p)


def ransac_p3p(points2d, points3d, matches: MatchSet, K: CameraIntrinsics, threshold: float = 2.0,
               max_iters: int = 1000, seed: int = 0, confidence: float = 0.99) -> tuple[Pose, LabeledMatches]:
    """P3P RANSAC over matches.

    ``points2d`` are pixel positions of all image-1 points; ``points3d`` the
    camera-0 3-D positions of all image-0 points, NaN where depth is missing.
    Matches without depth come back unlabeled.
    """
    X_all = np.asarray(points3d, dtype=np.float64).reshape(-1, 3)
    uv_all = np.asarray(points2d, dtype=np.float64).reshape(-1, 2)
    labels = np.full(len(matches), UNLABELED, dtype=np.int64)
    X = X_all[matches.idx0]
    uv = uv_all[matches.idx1]
    usable = np.flatnonzero(np.all(np.isfinite(X), axis=1))
    m = len(usable)
    if m < 4:
        raise PoseEstimationError(f"need at least 4 matches with depth, got {m}")
    X, uv = X[usable], uv[usable]
    f = bearings(K, uv)

    rng = np.random.default_rng(seed)
    best_count, best_pose = 0, None
    needed = math.inf
    it = 0
    while it < max_iters and it < needed:
        it += 1
        sample = rng.choice(m, size=4, replace=False)
        try:
            sols = p3p_solve(f[sample[:3]], X[sample[:3]])
        except GeometryError:
            continue
        if not sols:
            continue
        e4 = [reprojection_errors(p, K, X[sample[3:]], uv[sample[3:]])[0] for p in sols]
        pose = sols[int(np.argmin(e4))]
        count = int(np.sum(reprojection_errors(pose, K, X, uv) < threshold))
        if count > best_count:
            best_count, best_pose = count, pose
            needed = _needed_iterations(count / m, confidence)
    if best_pose is None or best_count < 4:
        raise PoseEstimationError(f"no model with at least 4 inliers (best {best_count})")

    inl = reprojection_errors(best_pose, K, X, uv) < threshold
    refit = refine_pose(best_pose, K, X[inl], uv[inl])
    inl_refit = reprojection_errors(refit, K, X, uv) < threshold
    if inl_refit.sum() >= inl.sum():
        best_pose, inl = refit, inl_refit
    labels[usable] = np.where(inl, INLIER, OUTLIER)
    return best_pose, LabeledMatches(matches, labels)


def pose_errors(estimate: Pose, ground_truth: Pose) -> tuple[float, float]:
    """Geodesic rotation error in degrees and translation error in metres."""
    dR = estimate.R @ ground_truth.R.T
    c = np.clip((np.trace(dR) - 1.0) / 2.0, -1.0, 1.0)
    return math.degrees(math.acos(c)), float(np.linalg.norm(estimate.t - ground_truth.t))


# --- stereo -----------------------------------------------------------------

def _sad_disparity(ref: np.ndarray, other: np.ndarray, sign: int, block: int, max_disp: int):
    """Winner-take-all disparity; ``other`` sampled at x + sign * d."""
    h, w = ref.shape
    r = block // 2
    costs = np.full((max_disp + 1, h, w), np.inf)
    xs = np.arange(w)
    for d in range(max_disp + 1):
        xo = xs + sign * d
        valid = (xo >= 0) & (xo < w)
        diff = np.abs(ref - other[:, np.clip(xo, 0, w - 1)])
        c = box_filter(diff, r)
        c[:, ~valid] = np.inf
        costs[d] = c
    disp = costs.argmin(axis=0)
    best = costs.min(axis=0)
    disp[~np.isfinite(best)] = 0
    return disp


def stereo_block_match(left, right, baseline: float, K: CameraIntrinsics, block: int = 7,
                       max_disparity: int = 64) -> np.ndarray:
    """SAD block matching with a 1 px left-right check; returns depth in metres (0 = invalid)."""
    L = np.asarray(left, dtype=np.float64)
    Rt = np.asarray(right, dtype=np.float64)
    if L.shape != Rt.shape:
        raise ValueError("stereo images differ in size")
    if block % 2 == 0:
        raise ValueError("block must be odd")
    h, w = L.shape
    dl = _sad_disparity(L, Rt, -1, block, max_disparity)
    dr = _sad_disparity(Rt, L, +1, block, max_disparity)
    xs = np.broadcast_to(np.arange(w), (h, w))
    xr = xs - dl
    inside = xr >= 0
    back = np.zeros_like(dl)
    back[inside] = dr[np.nonzero(inside)[0], xr[inside]]
    ok = inside & (dl > 0) & (np.abs(back - dl) <= 1)
    depth = np.zeros((h, w))
    depth[ok] = K.fx * baseline / dl[ok]
    return depth


def points3d_from_depth(K: CameraIntrinsics, xy, depth_map) -> np.ndarray:
    """Camera-frame 3-D points for integer pixels; NaN rows where depth is invalid."""
    xy = np.asarray(xy, dtype=np.int64).reshape(-1, 2)
    d = np.asarray(depth_map, dtype=np.float64)[xy[:, 1], xy[:, 0]]
    out = np.full((len(xy), 3), np.nan)
    ok = d > 0
    if ok.any():
        out[ok] = backproject(K, xy[ok].astype(np.float64), d[ok]).reshape(-1, 3)
    return out
