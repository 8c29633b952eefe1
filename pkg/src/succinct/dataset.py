"""On-disk sequence layout, synthetic-scene export and report files.

Layout of a sequence directory::

    images/000000.png   grayscale, 8 or 16 bit
    calib.txt           fx fy cx cy [baseline_m]
    poses.txt           optional, 12 floats per line: row-major [R | t], camera-to-world
    depth/000000.png    optional, 16 bit, millimetres, 0 = invalid
    right/000000.png    optional stereo partner images
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import CameraIntrinsics, Pose, stereo_block_match
from .image_core import load_image, load_png16_raw, save_png16
from .succinctness import SuccinctnessReport
from .synthetic import SyntheticScene


class DatasetError(ValueError):
    """Malformed or inconsistent dataset directory."""


@dataclass(frozen=True)
class SequenceDataset:
    root: Path
    images: list[Path]
    K: CameraIntrinsics
    poses: list[Pose] | None = None
    depths: list[Path] | None = None
    right: list[Path] | None = None
    baseline: float | None = None
    notes: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.images)

    @property
    def has_depth(self) -> bool:
        return self.depths is not None or (self.right is not None and self.baseline is not None)

    @property
    def can_train_p3p(self) -> bool:
        return self.has_depth

    @property
    def can_evaluate(self) -> bool:
        return self.has_depth and self.poses is not None

    def image(self, i: int) -> np.ndarray:
        return load_image(self.images[i])

    def depth(self, i: int) -> np.ndarray:
        """Metric depth for frame ``i``; 0 where unknown."""
        if self.depths is not None:
            return load_png16_raw(self.depths[i]).astype(np.float64) / 1000.0
        if self.right is not None and self.baseline is not None:
            return stereo_block_match(self.image(i), load_image(self.right[i]), self.baseline, self.K)
        raise DatasetError(f"{self.root} has neither depth maps nor stereo pairs")


def _frames(d: Path) -> list[Path]:
    return sorted(d.glob("*.png")) if d.is_dir() else []


def parse_calib(path: Path) -> tuple[CameraIntrinsics, float | None]:
    try:
        vals = [float(v) for v in path.read_text().split()]
    except (OSError, ValueError) as exc:
        raise DatasetError(f"unreadable calibration {path}: {exc}") from exc
    if len(vals) not in (4, 5):
        raise DatasetError(f"{path}: expected 'fx fy cx cy [baseline]', got {len(vals)} values")
    if vals[0] <= 0 or vals[1] <= 0:
        raise DatasetError(f"{path}: focal lengths must be positive")
    return CameraIntrinsics(*vals[:4]), (vals[4] if len(vals) == 5 else None)


def parse_poses(path: Path) -> list[Pose]:
    poses = []
    for ln, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            vals = [float(v) for v in line.split()]
        except ValueError as exc:
            raise DatasetError(f"{path}:{ln}: {exc}") from exc
        if len(vals) != 12:
            raise DatasetError(f"{path}:{ln}: expected 12 floats, got {len(vals)}")
        m = np.array(vals).reshape(3, 4)
        poses.append(Pose(m[:, :3], m[:, 3]))
    return poses


def load_dataset(root) -> SequenceDataset:
    root = Path(root)
    images = _frames(root / "images")
    if not images:
        raise DatasetError(f"no images under {root / 'images'}")
    if not (root / "calib.txt").exists():
        raise DatasetError(f"missing {root / 'calib.txt'}")
    K, baseline = parse_calib(root / "calib.txt")
    notes = []
    poses = parse_poses(root / "poses.txt") if (root / "poses.txt").exists() else None
    depths = _frames(root / "depth") or None
    right = _frames(root / "right") or None
    for name, lst in (("poses", poses), ("depth maps", depths), ("right images", right)):
        if lst is None:
            notes.append(f"no {name}")
        elif len(lst) != len(images):
            raise DatasetError(f"{root}: {len(images)} images but {len(lst)} {name}")
    if right is not None and baseline is None:
        notes.append("right images present but calib.txt has no baseline")
    return SequenceDataset(root, images, K, poses, depths, right, baseline, notes)


def write_synthetic(scene: SyntheticScene, root) -> SequenceDataset:
    """Export a rendered scene in the sequence layout (16-bit images, depth in mm)."""
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "depth").mkdir(exist_ok=True)
    K = scene.K
    (root / "calib.txt").write_text(f"{K.fx!r} {K.fy!r} {K.cx!r} {K.cy!r}\n")
    lines = []
    for pose in scene.poses:
        m = np.hstack([pose.R, pose.t[:, None]])
        lines.append(" ".join(repr(float(v)) for v in m.ravel()))
    (root / "poses.txt").write_text("\n".join(lines) + "\n")
    for i, (img, depth) in enumerate(zip(scene.images, scene.depths)):
        save_png16(root / "images" / f"{i:06d}.png", np.round(np.clip(img, 0, 1) * 65535.0))
        mm = np.where(np.isfinite(depth), np.round(depth * 1000.0), 0)
        save_png16(root / "depth" / f"{i:06d}.png", np.clip(mm, 0, 65535))
    return load_dataset(root)


# --- reports ----------------------------------------------------------------

def write_report(report: SuccinctnessReport, out_dir, name: str = "report") -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"json": out / f"{name}.json", "curve_csv": out / f"{name}_curve.csv",
             "curve_dat": out / f"{name}_curve.dat", "errors_csv": out / f"{name}_errors.csv"}
    paths["json"].write_text(json.dumps(report.as_dict(), indent=1) + "\n")
    n = np.arange(report.n_max + 1)
    with open(paths["curve_csv"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "s"])
        w.writerows((int(a), repr(float(b))) for a, b in zip(n, report.curve))
    with open(paths["curve_dat"], "w") as fh:
        fh.write(f"# succinctness curve, k={report.k}, n_max={report.n_max}, AUC={float(report.auc_n)!r}\n# n s\n")
        for a, b in zip(n, report.curve):
            fh.write(f"{a} {float(b)!r}\n")
    with open(paths["errors_csv"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index0", "index1", "n_k", "e_R_deg", "e_t_m"])
        for r in report.results:
            w.writerow([r.index0, r.index1, "" if r.n_k is None else r.n_k,
                        "" if r.e_R is None else repr(float(r.e_R)), "" if r.e_t is None else repr(float(r.e_t))])
    return paths


def read_report(path) -> SuccinctnessReport:
    path = Path(path)
    if path.is_dir():
        path = path / "report.json"
    return SuccinctnessReport.from_dict(json.loads(path.read_text()))
