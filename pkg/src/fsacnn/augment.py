"""Training-time augmentation: vertical-axis rotation, bone-length scaling, noise."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .skeleton import SPINE_BASE, BoneTopology, SkeletonSequence, kinect_topology


@dataclass(frozen=True)
class AugmentConfig:
    rotation_deg: float = 30.0
    scale_range: tuple[float, float] = (0.9, 1.1)
    noise_std: float = 0.01

    def __post_init__(self):
        lo, hi = self.scale_range
        if lo <= 0 or hi <= 0 or lo > hi:
            raise ValueError(f"bone scale range must be positive and ordered, got {self.scale_range}")
        if self.rotation_deg < 0 or self.noise_std < 0:
            raise ValueError("rotation range and noise std must be non-negative")

    @classmethod
    def identity(cls) -> "AugmentConfig":
        return cls(0.0, (1.0, 1.0), 0.0)


def yaw_matrix(theta: float) -> np.ndarray:
    """Rotation about the vertical (y) axis."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rotate_vertical(frames: np.ndarray, theta: float) -> np.ndarray:
    pivot = frames[0, SPINE_BASE]
    return (frames - pivot) @ yaw_matrix(theta).T + pivot


def scale_bones(frames: np.ndarray, scales: np.ndarray, topology: BoneTopology) -> np.ndarray:
    """Rescale each bone (indexed by child joint) and re-propagate down the tree."""
    out = np.empty_like(frames)
    out[:, 0] = frames[:, 0]
    for j in topology.children:
        p = topology.parent[j]
        out[:, j] = out[:, p] + scales[j] * (frames[:, j] - frames[:, p])
    return out


def augment(seq: SkeletonSequence, cfg: AugmentConfig, rng: np.random.Generator,
            topology: BoneTopology | None = None) -> SkeletonSequence:
    """Rotate about the vertical through SpineBase, vary bone lengths, add noise.

    Rotation is skipped for skeletons with fewer than three coordinates.
    """
    topology = topology or kinect_topology(seq.bodies)
    frames = seq.frames
    theta = np.deg2rad(rng.uniform(-cfg.rotation_deg, cfg.rotation_deg))
    if cfg.rotation_deg > 0 and seq.dims == 3:
        frames = rotate_vertical(frames, theta)
    lo, hi = cfg.scale_range
    scales = rng.uniform(lo, hi, size=topology.n_joints)
    if lo != 1.0 or hi != 1.0:
        frames = scale_bones(frames, scales, topology)
    if cfg.noise_std > 0:
        frames = frames + rng.normal(0.0, cfg.noise_std, size=frames.shape)
    return seq.with_frames(frames)
