"""Synthetic skeleton corpus: per-class joint-angle oscillations on the Kinect tree.

Elderly subjects (ids ``1..n/2``) move through a time-dilated version of the
same patterns with reduced range of motion and a forward trunk lean, so their
sequences are longer and their per-frame motion is smaller.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import DatasetManifest, ManifestEntry
from .skeleton import KINECT_PARENTS, SkeletonSequence, kinect_topology, save_sequence

# bone offsets from parent in metres; y up, z towards the camera, x to the subject's left
REST_OFFSETS = {
    1: (0.0, 0.25, 0.0), 20: (0.0, 0.25, 0.0), 2: (0.0, 0.07, 0.0), 3: (0.0, 0.13, 0.0),
    4: (0.17, -0.03, 0.0), 5: (0.0, -0.27, 0.0), 6: (0.0, -0.25, 0.0), 7: (0.0, -0.07, 0.0),
    21: (0.0, -0.07, 0.0), 22: (0.03, -0.05, 0.01),
    8: (-0.17, -0.03, 0.0), 9: (0.0, -0.27, 0.0), 10: (0.0, -0.25, 0.0), 11: (0.0, -0.07, 0.0),
    23: (0.0, -0.07, 0.0), 24: (-0.03, -0.05, 0.01),
    12: (0.08, -0.06, 0.0), 13: (0.0, -0.42, 0.0), 14: (0.0, -0.40, 0.0), 15: (0.0, -0.04, 0.11),
    16: (-0.08, -0.06, 0.0), 17: (0.0, -0.42, 0.0), 18: (0.0, -0.40, 0.0), 19: (0.0, -0.04, 0.11),
}

# (joint whose outgoing bones rotate, axis)
DRIVERS = (
    (4, 0), (4, 2), (5, 0), (8, 0), (8, 2), (9, 0),
    (12, 0), (12, 2), (13, 0), (16, 0), (16, 2), (17, 0),
    (1, 0), (1, 2), (1, 1), (2, 0),
)


@dataclass(frozen=True)
class SynthConfig:
    reps: int = 1
    fps: float = 30.0
    length_range: tuple[int, int] = (70, 100)
    age_dilation: float = 1.4
    elderly_amplitude: float = 0.7
    elderly_lean: float = 0.3
    drivers_per_class: int = 3
    noise_std: float = 0.005


def axis_rotations(axis: int, angles: np.ndarray) -> np.ndarray:
    """Stack of [T, 3, 3] rotations about coordinate axis 0 (x), 1 (y) or 2 (z)."""
    c, s = np.cos(angles), np.sin(angles)
    R = np.zeros(angles.shape + (3, 3))
    i, j = [(1, 2), (2, 0), (0, 1)][axis]
    R[..., axis, axis] = 1.0
    R[..., i, i] = c
    R[..., j, j] = c
    R[..., i, j] = -s
    R[..., j, i] = s
    return R


def forward_kinematics(local: dict[int, np.ndarray], root_rot: np.ndarray, root_pos: np.ndarray,
                       offsets: dict[int, np.ndarray]) -> np.ndarray:
    """Joint positions [T, 25, 3]; ``local[j]`` rotates the bones leaving joint ``j``."""
    T = root_pos.shape[0]
    topo = kinect_topology()
    glob = {0: root_rot @ local[0] if 0 in local else root_rot}
    pos = np.zeros((T, topo.n_joints, 3))
    pos[:, 0] = root_pos
    for j in topo.children:
        p = KINECT_PARENTS[j]
        pos[:, j] = pos[:, p] + np.einsum("tab,b->ta", glob[p], offsets[j])
        glob[j] = glob[p] @ local[j] if j in local else glob[p]
    return pos


def _class_patterns(n_classes: int, cfg: SynthConfig, rng: np.random.Generator) -> list[list[tuple]]:
    patterns, used = [], set()
    while len(patterns) < n_classes:
        pick = tuple(sorted(rng.choice(len(DRIVERS), size=cfg.drivers_per_class, replace=False)))
        if pick in used:
            continue
        used.add(pick)
        patterns.append([
            (DRIVERS[d], rng.uniform(0.4, 1.0), rng.uniform(0.4, 1.2),
             rng.uniform(0, 2 * np.pi), rng.uniform(-0.5, 0.5))
            for d in pick
        ])
    return patterns


def synth_sequence(pattern, subject: dict, elderly: bool, T: int, t0: float,
                   cfg: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    t = t0 + np.arange(T) / cfg.fps
    speed = subject["speed"] / (cfg.age_dilation if elderly else 1.0)
    amp = subject["amplitude"] * (cfg.elderly_amplitude if elderly else 1.0)
    local: dict[int, np.ndarray] = {}
    for (joint, axis), a, f, phase, offset in pattern:
        angle = offset + amp * a * np.sin(2 * np.pi * f * speed * t + phase)
        R = axis_rotations(axis, angle)
        local[joint] = local[joint] @ R if joint in local else R
    if elderly:
        lean = axis_rotations(0, np.full(T, cfg.elderly_lean))
        local[1] = lean @ local[1] if 1 in local else lean
    root_rot = axis_rotations(1, np.full(T, subject["yaw"]))
    root_pos = np.tile(subject["origin"], (T, 1))
    root_pos[:, 1] += 0.01 * np.sin(2 * np.pi * 0.5 * speed * t)
    frames = forward_kinematics(local, root_rot, root_pos, subject["offsets"])
    return frames + rng.normal(0.0, cfg.noise_std, size=frames.shape)


def synth_generate(n_subjects: int, n_classes: int, cfg: SynthConfig | None = None,
                   rng: np.random.Generator | None = None) -> DatasetManifest:
    """In-memory corpus of ``n_subjects * n_classes * reps`` sequences.

    Subjects ``1..n/2`` are elderly and the rest adult.
    """
    cfg = cfg or SynthConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    if n_subjects < 2 or n_subjects % 2:
        raise ValueError(f"n_subjects must be even and >= 2, got {n_subjects}")
    if n_classes < 2:
        raise ValueError(f"n_classes must be >= 2, got {n_classes}")
    patterns = _class_patterns(n_classes, cfg, rng)
    seqs = []
    for sid in range(1, n_subjects + 1):
        elderly = sid <= n_subjects // 2
        height = rng.uniform(0.9, 1.1)
        subject = {
            "amplitude": rng.uniform(0.8, 1.2),
            "speed": rng.uniform(0.9, 1.1),
            "yaw": np.deg2rad(rng.uniform(-15, 15)),
            "origin": np.array([rng.uniform(-0.3, 0.3), 0.0, rng.uniform(2.0, 3.0)]),
            "offsets": {j: height * rng.uniform(0.9, 1.1) * np.array(v) for j, v in REST_OFFSETS.items()},
        }
        for action in range(n_classes):
            for _ in range(cfg.reps):
                lo, hi = cfg.length_range
                T = int(round(rng.uniform(lo, hi) * (cfg.age_dilation if elderly else 1.0)))
                frames = synth_sequence(patterns[action], subject, elderly, T, rng.uniform(0, 10), cfg, rng)
                seqs.append(SkeletonSequence(frames, sid, action, "elderly" if elderly else "adult"))
    return DatasetManifest.from_sequences(seqs, prefix="synth")


def write_corpus(manifest: DatasetManifest, out_dir) -> Path:
    """Write every sequence as ``.skl`` plus ``manifest.tsv``; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, e in enumerate(manifest):
        name = f"s{e.subject_id:03d}_a{e.action_id:03d}_{i:06d}.skl"
        save_sequence(manifest.load(i), out / name)
        entries.append(ManifestEntry(name, e.subject_id, e.action_id, e.age_group, e.frames))
    path = out / "manifest.tsv"
    DatasetManifest(entries, root=out).write(path)
    return path
