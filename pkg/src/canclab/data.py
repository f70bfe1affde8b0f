"""Scene generation, tiling into masks, labeling, splits, and dataset files.

A "mask" is an m x m image patch; its binary label says whether enough of
the ground-truth raster under it is building (fraction >= tau_label).
Synthetic scenes stand in for real satellite/label imagery: axis-aligned
rectangular buildings on a darker background, plus pixel noise.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DataError

__all__ = [
    "Scene",
    "SceneGenParams",
    "MaskDataset",
    "generate_scene",
    "tile_scene",
    "label_mask",
    "build_mask_dataset",
    "split_dataset",
    "write_dataset",
    "read_dataset",
    "MAGIC",
]

MAGIC = b"CANC"
_HEADER = struct.Struct("<4sIIII")  # magic, version, m, channels, count


@dataclass(frozen=True, eq=False)
class Scene:
    """One raster scene: image (n,n,C) in [0,1], ground truth (n,n) in {0,1}."""

    image: np.ndarray
    gt: np.ndarray
    scene_id: int = 0

    def __post_init__(self):
        img = np.asarray(self.image, dtype=np.float64)
        gt = np.asarray(self.gt)
        if img.ndim != 3:
            raise DataError(f"scene image must be (n,n,C), got shape {img.shape}")
        if img.shape[0] != img.shape[1]:
            raise DataError("scene image must be square")
        if gt.shape != img.shape[:2]:
            raise DataError("ground truth must match the image spatially")
        object.__setattr__(self, "image", img)
        object.__setattr__(self, "gt", gt.astype(np.uint8))

    @property
    def size(self) -> int:
        return self.image.shape[0]


@dataclass(frozen=True)
class SceneGenParams:
    """Knobs for the synthetic scene generator. All ranges are inclusive."""

    size: int = 512
    channels: int = 1
    building_count: tuple = (8, 24)
    building_side: tuple = (16, 64)
    building_intensity: tuple = (0.55, 0.95)
    background_intensity: tuple = (0.05, 0.45)
    pixel_noise: float = 0.04
    seed: int = 0

    def __post_init__(self):
        for name in ("building_count", "building_side"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < 0:
                raise ConfigError(f"{name} range ({lo},{hi}) is empty or negative")
        if self.building_side[1] > self.size:
            raise ConfigError(
                f"building side up to {self.building_side[1]} exceeds scene size {self.size}"
            )
        if self.pixel_noise < 0:
            raise ConfigError("pixel_noise must be >= 0")


_PLACEMENT_ATTEMPTS = 40  # rejection-sampling budget per building


def generate_scene(params: SceneGenParams, scene_id: int = 0) -> Scene:
    """Render one synthetic scene, deterministic in (params.seed, scene_id).

    Buildings are non-overlapping axis-aligned rectangles; placement uses
    rejection sampling with a fixed attempt budget, so crowded parameter
    choices may yield fewer buildings than drawn.
    """
    n, c = params.size, params.channels
    rng = np.random.default_rng(np.random.SeedSequence((params.seed, scene_id)))
    lo, hi = params.background_intensity
    image = rng.uniform(lo, hi, size=(n, n, c))
    gt = np.zeros((n, n), dtype=np.uint8)

    count = int(rng.integers(params.building_count[0], params.building_count[1] + 1))
    blo, bhi = params.building_intensity
    for _ in range(count):
        h = int(rng.integers(params.building_side[0], params.building_side[1] + 1))
        w = int(rng.integers(params.building_side[0], params.building_side[1] + 1))
        for _attempt in range(_PLACEMENT_ATTEMPTS):
            r = int(rng.integers(0, n - h + 1))
            col = int(rng.integers(0, n - w + 1))
            if not gt[r : r + h, col : col + w].any():
                image[r : r + h, col : col + w, :] = rng.uniform(blo, bhi, size=c)
                gt[r : r + h, col : col + w] = 1
                break

    if params.pixel_noise > 0:
        image += rng.uniform(-params.pixel_noise, params.pixel_noise, size=(n, n, c))
        np.clip(image, 0.0, 1.0, out=image)
    return Scene(image=image, gt=gt, scene_id=scene_id)


def tile_scene(scene: Scene, m: int):
    """Cut the scene into (n/m)^2 non-overlapping m x m patches, row-major.

    Returns (patches (K,m,m,C), gt_patches (K,m,m), positions (K,2)).
    Concatenating the patches back in grid order reproduces the scene
    pixel-exactly.
    """
    n = scene.size
    if m < 1 or n % m != 0:
        raise ConfigError(f"mask size {m} does not divide scene size {n}")
    g = n // m
    c = scene.image.shape[2]
    patches = (
        scene.image.reshape(g, m, g, m, c).transpose(0, 2, 1, 3, 4).reshape(g * g, m, m, c)
    )
    gt_patches = scene.gt.reshape(g, m, g, m).transpose(0, 2, 1, 3).reshape(g * g, m, m)
    rows, cols = np.divmod(np.arange(g * g), g)
    positions = np.stack([rows, cols], axis=1)
    return patches.copy(), gt_patches.copy(), positions


def label_mask(gt_patch: np.ndarray, tau_label: float) -> int:
    """1 iff the building-pixel fraction reaches tau_label (inclusive)."""
    patch = np.asarray(gt_patch)
    s1 = int(patch.sum())
    return int(s1 / patch.size >= tau_label)


@dataclass(eq=False)
class MaskDataset:
    """A flat collection of labeled masks tagged with their scene/grid origin.

    labels are what a trainer sees; clean_labels (when present) keep the
    pre-noise truth for diagnostics only.
    """

    patches: np.ndarray  # (N, m, m, C) float64
    labels: np.ndarray  # (N,) int64 in {0,1}
    scene_ids: np.ndarray  # (N,) int64
    rows: np.ndarray  # (N,) int64
    cols: np.ndarray  # (N,) int64
    m: int
    tau_label: float
    clean_labels: np.ndarray = field(default=None)

    def __post_init__(self):
        n = len(self.labels)
        if not (len(self.patches) == len(self.scene_ids) == len(self.rows) == len(self.cols) == n):
            raise DataError("mask dataset arrays have mismatched lengths")

    def __len__(self):
        return len(self.labels)

    @property
    def channels(self) -> int:
        return self.patches.shape[3]

    def take(self, idx) -> "MaskDataset":
        idx = np.asarray(idx, dtype=np.int64)
        clean = None if self.clean_labels is None else self.clean_labels[idx]
        return MaskDataset(
            patches=self.patches[idx],
            labels=self.labels[idx],
            scene_ids=self.scene_ids[idx],
            rows=self.rows[idx],
            cols=self.cols[idx],
            m=self.m,
            tau_label=self.tau_label,
            clean_labels=clean,
        )

    def with_labels(self, labels, clean_labels=None) -> "MaskDataset":
        return replace(
            self,
            labels=np.asarray(labels, dtype=np.int64),
            clean_labels=None if clean_labels is None else np.asarray(clean_labels, dtype=np.int64),
        )


def build_mask_dataset(scenes, m: int, tau_label: float) -> MaskDataset:
    """Tile every scene and label each mask; mask order is scene-major,
    then row-major within the scene."""
    if not 0 < tau_label < 1:
        raise ConfigError(f"tau_label must be in (0,1), got {tau_label}")
    all_patches, labels, sids, rows, cols = [], [], [], [], []
    for scene in scenes:
        patches, gt_patches, positions = tile_scene(scene, m)
        all_patches.append(patches)
        labels.append(
            np.array([label_mask(gp, tau_label) for gp in gt_patches], dtype=np.int64)
        )
        sids.append(np.full(len(patches), scene.scene_id, dtype=np.int64))
        rows.append(positions[:, 0].astype(np.int64))
        cols.append(positions[:, 1].astype(np.int64))
    if not all_patches:
        raise ConfigError("no scenes given")
    return MaskDataset(
        patches=np.concatenate(all_patches),
        labels=np.concatenate(labels),
        scene_ids=np.concatenate(sids),
        rows=np.concatenate(rows),
        cols=np.concatenate(cols),
        m=m,
        tau_label=tau_label,
    )


def split_dataset(ds: MaskDataset, fractions, seed: int):
    """Split into (train, modelsel, eval) datasets.

    The eval partition takes whole scenes (per-scene SP-IoU needs complete
    grids); train/modelsel are split mask-wise from the remaining pool.
    Deterministic in seed; partitions are disjoint and exhaustive. A
    partition that was requested with a positive fraction but comes out
    empty raises ConfigError.
    """
    f = tuple(float(x) for x in fractions)
    if len(f) != 3 or any(x < 0 for x in f):
        raise ConfigError(f"fractions must be three non-negative numbers, got {fractions}")
    if abs(sum(f) - 1.0) > 1e-9:
        raise ConfigError(f"fractions must sum to 1, got {sum(f)}")
    f_train, f_modelsel, f_eval = f
    rng = np.random.default_rng(seed)

    scene_ids = np.unique(ds.scene_ids)
    n_eval_scenes = int(round(f_eval * len(scene_ids)))
    eval_scenes = rng.permutation(scene_ids)[:n_eval_scenes]
    eval_mask = np.isin(ds.scene_ids, eval_scenes)
    eval_idx = np.flatnonzero(eval_mask)

    pool = np.flatnonzero(~eval_mask)
    pool = pool[rng.permutation(len(pool))]
    denom = f_train + f_modelsel
    n_train = int(round(f_train / denom * len(pool))) if denom > 0 else 0
    train_idx, modelsel_idx = pool[:n_train], pool[n_train:]

    for name, frac, idx in (
        ("train", f_train, train_idx),
        ("modelsel", f_modelsel, modelsel_idx),
        ("eval", f_eval, eval_idx),
    ):
        if frac > 0 and len(idx) == 0:
            raise ConfigError(f"{name} partition is empty at fraction {frac}")
    return ds.take(np.sort(train_idx)), ds.take(np.sort(modelsel_idx)), ds.take(np.sort(eval_idx))


# ---------------------------------------------------------------------------
# flat binary dataset files
#
# Header (little-endian): magic "CANC", version u32, m u32, channels u32,
# count u32. Version 1 records: label u8 + m*m*C float32 (row-major).
# Version 2 records (noise-injected datasets): noisy-label u8 + clean-label
# u8 + the same float32 patch.


def write_dataset(path, ds: MaskDataset):
    version = 1 if ds.clean_labels is None else 2
    m, c, n = ds.m, ds.channels, len(ds)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, version, m, c, n))
        patches32 = ds.patches.astype("<f4")
        for i in range(n):
            fh.write(struct.pack("<B", int(ds.labels[i])))
            if version == 2:
                fh.write(struct.pack("<B", int(ds.clean_labels[i])))
            fh.write(patches32[i].tobytes())


def read_dataset(path, tau_label: float = 0.01, scene_id: int = 0) -> MaskDataset:
    """Read a dataset file back. Grid positions are synthesized row-major
    (per-scene files written by gen-data preserve them exactly)."""
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise DataError(f"{path}: truncated header")
        magic, version, m, c, n = _HEADER.unpack(header)
        if magic != MAGIC:
            raise DataError(f"{path}: bad magic {magic!r}")
        if version not in (1, 2):
            raise DataError(f"{path}: unsupported version {version}")
        patch_bytes = m * m * c * 4
        labels = np.empty(n, dtype=np.int64)
        clean = np.empty(n, dtype=np.int64) if version == 2 else None
        patches = np.empty((n, m, m, c), dtype=np.float64)
        for i in range(n):
            labels[i] = struct.unpack("<B", fh.read(1))[0]
            if version == 2:
                clean[i] = struct.unpack("<B", fh.read(1))[0]
            raw = fh.read(patch_bytes)
            if len(raw) != patch_bytes:
                raise DataError(f"{path}: truncated record {i}")
            patches[i] = np.frombuffer(raw, dtype="<f4").reshape(m, m, c)
    g = max(1, int(np.sqrt(n)))
    rows, cols = np.divmod(np.arange(n, dtype=np.int64), g)
    return MaskDataset(
        patches=patches,
        labels=labels,
        scene_ids=np.full(n, scene_id, dtype=np.int64),
        rows=rows,
        cols=cols,
        m=m,
        tau_label=tau_label,
        clean_labels=clean,
    )
