"""Skeleton sequences, the ``.skl`` text format, normalization and the four
input streams (raw coordinates, short/long temporal differences, bones)."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

JOINT_NAMES = (
    "SpineBase", "SpineMid", "Neck", "Head",
    "ShoulderLeft", "ElbowLeft", "WristLeft", "HandLeft",
    "ShoulderRight", "ElbowRight", "WristRight", "HandRight",
    "HipLeft", "KneeLeft", "AnkleLeft", "FootLeft",
    "HipRight", "KneeRight", "AnkleRight", "FootRight",
    "SpineShoulder", "HandTipLeft", "ThumbLeft", "HandTipRight", "ThumbRight",
)
SPINE_BASE, SPINE_SHOULDER, HEAD = 0, 20, 3

# Kinect v2 bone hierarchy, child -> parent
KINECT_PARENTS = {
    1: 0, 20: 1, 2: 20, 3: 2,
    4: 20, 5: 4, 6: 5, 7: 6, 21: 7, 22: 6,
    8: 20, 9: 8, 10: 9, 11: 10, 23: 11, 24: 10,
    12: 0, 13: 12, 14: 13, 15: 14,
    16: 0, 17: 16, 18: 17, 19: 18,
}

AGE_GROUPS = ("elderly", "adult")


@dataclass(frozen=True)
class BoneTopology:
    """Parent map over ``n_joints`` joints forming one tree rooted at joint 0."""

    n_joints: int
    parent: dict[int, int]

    def __post_init__(self):
        J = self.n_joints
        if set(self.parent) != set(range(1, J)):
            raise ValueError("topology must give exactly one parent to every non-root joint")
        for child, par in self.parent.items():
            if not 0 <= par < J:
                raise ValueError(f"joint {child} has out-of-range parent {par}")
        for j in range(1, J):
            seen = set()
            while j != 0:
                if j in seen:
                    raise ValueError("topology is not a tree (cycle detected)")
                seen.add(j)
                j = self.parent[j]

    @property
    def children(self) -> list[int]:
        """Non-root joints in an order where every parent precedes its children."""
        depth = {}
        for j in range(1, self.n_joints):
            d, k = 0, j
            while k != 0:
                k, d = self.parent[k], d + 1
            depth[j] = d
        return sorted(range(1, self.n_joints), key=lambda j: (depth[j], j))

    def path_to_root(self, j: int) -> list[int]:
        path = [j]
        while j != 0:
            j = self.parent[j]
            path.append(j)
        return path


def kinect_topology(bodies: int = 1) -> BoneTopology:
    """The 25-joint Kinect v2 tree; a second body hangs off joint 0 by its SpineBase."""
    parent = dict(KINECT_PARENTS)
    J = len(JOINT_NAMES)
    for b in range(1, bodies):
        off = b * J
        parent[off] = 0
        parent.update({c + off: p + off for c, p in KINECT_PARENTS.items()})
    return BoneTopology(J * bodies, parent)


@dataclass
class SkeletonSequence:
    """``frames`` is [T, joints*bodies, dims]; absent bodies are zero-filled."""

    frames: np.ndarray
    subject_id: int = 1
    action_id: int = 0
    age_group: str = "adult"
    bodies: int = 1

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 3 or self.frames.shape[0] < 1:
            raise ValueError(f"frames must be [T>=1, J, D], got {self.frames.shape}")
        if not np.all(np.isfinite(self.frames)):
            raise ValueError("non-finite coordinates")
        if self.age_group not in AGE_GROUPS:
            raise ValueError(f"age group must be one of {AGE_GROUPS}, got {self.age_group!r}")
        if self.bodies not in (1, 2) or self.frames.shape[1] % self.bodies:
            raise ValueError(f"bad body count {self.bodies} for {self.frames.shape[1]} joints")

    @property
    def T(self) -> int:
        return self.frames.shape[0]

    @property
    def joints(self) -> int:
        return self.frames.shape[1] // self.bodies

    @property
    def dims(self) -> int:
        return self.frames.shape[2]

    def with_frames(self, frames: np.ndarray) -> "SkeletonSequence":
        return replace(self, frames=frames)


# --- .skl format -----------------------------------------------------------

class SklFormatError(ValueError):
    def __init__(self, path, line: int, msg: str):
        super().__init__(f"{path}:{line}: {msg}")
        self.line = line


def save_sequence(seq: SkeletonSequence, path) -> None:
    T, _, D = seq.frames.shape
    lines = [
        "SKL 1",
        f"subject={seq.subject_id} action={seq.action_id} age={seq.age_group} "
        f"bodies={seq.bodies} joints={seq.joints} dims={D} frames={T}",
    ]
    for frame in seq.frames.reshape(T, -1):
        lines.append(" ".join(repr(float(v)) for v in frame))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


_HEADER_KEYS = ("subject", "action", "age", "bodies", "joints", "dims", "frames")


def load_sequence(path) -> SkeletonSequence:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0].strip() != "SKL 1":
        raise SklFormatError(path, 1, "missing 'SKL 1' magic line")
    if len(lines) < 2:
        raise SklFormatError(path, 2, "missing header line")
    header = {}
    for tok in lines[1].split():
        key, sep, val = tok.partition("=")
        if not sep or key not in _HEADER_KEYS:
            raise SklFormatError(path, 2, f"malformed header token {tok!r}")
        header[key] = val
    missing = [k for k in _HEADER_KEYS if k not in header]
    if missing:
        raise SklFormatError(path, 2, f"header lacks {', '.join(missing)}")
    try:
        ints = {k: int(header[k]) for k in _HEADER_KEYS if k != "age"}
    except ValueError as exc:
        raise SklFormatError(path, 2, f"non-integer header value ({exc})") from None
    T, J, D, bodies = ints["frames"], ints["joints"], ints["dims"], ints["bodies"]
    if T < 1 or J < 1 or D < 1 or bodies not in (1, 2):
        raise SklFormatError(path, 2, "header sizes out of range")
    width = J * D * bodies
    body = lines[2:]
    if len(body) != T:
        raise SklFormatError(path, 3 + min(len(body), T), f"expected {T} frame lines, found {len(body)}")
    frames = np.empty((T, width))
    for t, line in enumerate(body):
        toks = line.split()
        if len(toks) != width:
            raise SklFormatError(path, t + 3, f"expected {width} values, found {len(toks)}")
        try:
            frames[t] = [float(v) for v in toks]
        except ValueError as exc:
            raise SklFormatError(path, t + 3, f"non-numeric token ({exc})") from None
    if header["age"] not in AGE_GROUPS:
        raise SklFormatError(path, 2, f"unknown age group {header['age']!r}")
    return SkeletonSequence(frames.reshape(T, J * bodies, D), ints["subject"], ints["action"],
                            header["age"], bodies)


# --- geometry --------------------------------------------------------------

def torso_length(seq: SkeletonSequence) -> float:
    f = seq.frames
    return float(np.mean(np.linalg.norm(f[:, SPINE_SHOULDER] - f[:, SPINE_BASE], axis=-1)))


def normalize(seq: SkeletonSequence) -> SkeletonSequence:
    """Centre on frame-0 SpineBase and scale to unit mean torso length."""
    length = torso_length(seq)
    if not length > 0:
        raise ValueError("degenerate skeleton: zero torso length")
    origin = seq.frames[0, SPINE_BASE]
    frames = (seq.frames - origin) / length
    if seq.bodies > 1:
        # keep absent bodies zero-filled
        J = seq.joints
        for b in range(seq.bodies):
            block = slice(b * J, (b + 1) * J)
            absent = ~np.any(seq.frames[:, block] != 0, axis=(1, 2))
            frames[absent, block] = 0.0
    return seq.with_frames(frames)


def project(seq: SkeletonSequence, dims: int = 2) -> SkeletonSequence:
    """Orthographic projection onto the first ``dims`` axes (x, y for the vertical plane)."""
    if dims > seq.dims:
        raise ValueError(f"cannot project {seq.dims}-d skeleton to {dims} dims")
    return seq.with_frames(seq.frames[..., :dims])


def temporal_diff(seq: SkeletonSequence, gap: int) -> np.ndarray:
    """[(J*D) x (T-gap)] map whose column t is frames[t+gap] - frames[t]."""
    if gap < 1:
        raise ValueError(f"gap must be >= 1, got {gap}")
    if gap >= seq.T:
        raise ValueError(f"sequence shorter than gap: T={seq.T}, gap={gap}")
    d = seq.frames[gap:] - seq.frames[:-gap]
    return d.reshape(d.shape[0], -1).T.copy()


def bone_vectors(frames: np.ndarray, topology: BoneTopology) -> np.ndarray:
    """[T, J-1, D] child-minus-parent vectors, in child order 1..J-1."""
    if frames.shape[1] != topology.n_joints:
        raise ValueError(f"topology has {topology.n_joints} joints, frames have {frames.shape[1]}")
    children = np.arange(1, topology.n_joints)
    parents = np.array([topology.parent[j] for j in children])
    return frames[:, children] - frames[:, parents]


def spatial_diff(seq: SkeletonSequence, topology: BoneTopology | None = None) -> np.ndarray:
    """[((J-1)*D) x T] map of bone vectors per frame."""
    topology = topology or kinect_topology(seq.bodies)
    bones = bone_vectors(seq.frames, topology)
    return bones.reshape(seq.T, -1).T.copy()


def raw_map(seq: SkeletonSequence) -> np.ndarray:
    return seq.frames.reshape(seq.T, -1).T.copy()


@dataclass(frozen=True)
class FourStreamInput:
    raw: np.ndarray
    short_diff: np.ndarray
    long_diff: np.ndarray
    spatial_diff: np.ndarray
    gaps: tuple[int, int] = field(default=(1, 5))

    def as_tuple(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        return self.raw, self.short_diff, self.long_diff, self.spatial_diff


def four_streams(seq: SkeletonSequence, short_gap: int = 1, long_gap: int = 5,
                 topology: BoneTopology | None = None) -> FourStreamInput:
    """Build the four input maps of ``seq`` (pass a normalized sequence)."""
    if not short_gap < long_gap < seq.T:
        raise ValueError(f"need short_gap < long_gap < T, got {short_gap}, {long_gap}, T={seq.T}")
    return FourStreamInput(
        raw=raw_map(seq),
        short_diff=temporal_diff(seq, short_gap),
        long_diff=temporal_diff(seq, long_gap),
        spatial_diff=spatial_diff(seq, topology),
        gaps=(short_gap, long_gap),
    )


# --- temporal resampling ---------------------------------------------------

def sample_length(seq: SkeletonSequence, L: int, rng: np.random.Generator) -> SkeletonSequence:
    """Random temporally ordered subsample of ``L`` frames.

    Distinct frames when ``T >= L``; otherwise sorted draws with replacement.
    """
    if L < 2:
        raise ValueError(f"target length must be >= 2, got {L}")
    T = seq.T
    if T >= L:
        idx = np.sort(rng.choice(T, size=L, replace=False))
    else:
        idx = np.sort(rng.integers(0, T, size=L))
    return seq.with_frames(seq.frames[idx])


def even_indices(T: int, L: int) -> np.ndarray:
    return np.round(np.linspace(0, T - 1, L)).astype(int)


def resample_even(seq: SkeletonSequence, L: int) -> SkeletonSequence:
    """Deterministic evenly spaced subsample (repeats frames when ``T < L``)."""
    if L < 1:
        raise ValueError(f"target length must be >= 1, got {L}")
    return seq.with_frames(seq.frames[even_indices(seq.T, L)])
