"""Sample manifests and the frame-length / motion-differential statistics."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .skeleton import AGE_GROUPS, SkeletonSequence, load_sequence, normalize


@dataclass
class ManifestEntry:
    path: str
    subject_id: int
    action_id: int
    age_group: str
    frames: int
    sequence: SkeletonSequence | None = field(default=None, repr=False, compare=False)


class DatasetManifest:
    """Index of samples; entries either point to ``.skl`` files or carry the sequence."""

    def __init__(self, entries: Iterable[ManifestEntry], root: str | Path | None = None):
        self.entries = list(entries)
        self.root = Path(root) if root is not None else None
        paths = [e.path for e in self.entries]
        if len(set(paths)) != len(paths):
            raise ValueError("duplicate paths in manifest")
        for e in self.entries:
            if e.age_group not in AGE_GROUPS:
                raise ValueError(f"{e.path}: unknown age group {e.age_group!r}")
        self._cache: dict[int, SkeletonSequence] = {}

    @classmethod
    def from_sequences(cls, seqs: Sequence[SkeletonSequence], prefix: str = "mem") -> "DatasetManifest":
        entries = [
            ManifestEntry(f"{prefix}/{i:06d}.skl", s.subject_id, s.action_id, s.age_group, s.T, s)
            for i, s in enumerate(seqs)
        ]
        return cls(entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[ManifestEntry]:
        return iter(self.entries)

    @property
    def subjects(self) -> list[int]:
        return sorted({e.subject_id for e in self.entries})

    @property
    def classes(self) -> list[int]:
        return sorted({e.action_id for e in self.entries})

    @property
    def n_classes(self) -> int:
        return max(self.classes) + 1 if self.entries else 0

    def indices(self, subjects: Iterable[int] | None = None,
                exclude_actions: Iterable[int] = ()) -> list[int]:
        keep = None if subjects is None else set(subjects)
        drop = set(exclude_actions)
        return [i for i, e in enumerate(self.entries)
                if (keep is None or e.subject_id in keep) and e.action_id not in drop]

    def load(self, i: int) -> SkeletonSequence:
        e = self.entries[i]
        if e.sequence is not None:
            return e.sequence
        if i not in self._cache:
            path = Path(e.path)
            if not path.is_absolute() and self.root is not None:
                path = self.root / path
            self._cache[i] = load_sequence(path)
        return self._cache[i]

    def write(self, path) -> None:
        lines = [f"{e.path}\t{e.subject_id}\t{e.action_id}\t{e.age_group}\t{e.frames}" for e in self.entries]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def read(cls, path) -> "DatasetManifest":
        path = Path(path)
        entries = []
        for n, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 5:
                raise ValueError(f"{path}:{n}: expected 5 tab-separated fields, found {len(parts)}")
            try:
                entries.append(ManifestEntry(parts[0], int(parts[1]), int(parts[2]), parts[3], int(parts[4])))
            except ValueError as exc:
                raise ValueError(f"{path}:{n}: {exc}") from None
        return cls(entries, root=path.parent)


@dataclass(frozen=True)
class DatasetStats:
    count: int
    avg_frame_length: float
    var_frame_length: float
    avg_motion_diff: float
    var_motion_diff: float


def motion_differential(seq: SkeletonSequence) -> float:
    """Mean over consecutive frame pairs of the summed joint displacement norms."""
    if seq.T < 2:
        return 0.0
    steps = np.linalg.norm(np.diff(seq.frames, axis=0), axis=-1)
    return float(np.mean(steps.sum(axis=1)))


def _stats(manifest: DatasetManifest, idx: list[int]) -> DatasetStats:
    lengths = np.array([manifest.entries[i].frames for i in idx], dtype=np.float64)
    motion = np.array([motion_differential(normalize(manifest.load(i))) for i in idx])
    return DatasetStats(len(idx), float(lengths.mean()), float(lengths.var()),
                        float(motion.mean()), float(motion.var()))


def dataset_stats(manifest: DatasetManifest, excluded_actions: Iterable[int] = (),
                  by_age: bool = False) -> DatasetStats | dict[str, DatasetStats]:
    """Frame-length and motion-differential mean/population-variance."""
    idx = manifest.indices(exclude_actions=excluded_actions)
    if not idx:
        raise ValueError("no samples left after excluding actions")
    if not by_age:
        return _stats(manifest, idx)
    out = {}
    for group in AGE_GROUPS:
        sub = [i for i in idx if manifest.entries[i].age_group == group]
        if sub:
            out[group] = _stats(manifest, sub)
    return out
