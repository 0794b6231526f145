"""Accuracy reports, the frozen-model length sweep, the cross-age matrix and
two-modality score fusion."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .dataset import DatasetManifest
from .model import FsaModel, ModelConfig, build_model, forward, fuse_scores, prepare_streams
from .skeleton import resample_even


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    per_class: np.ndarray
    confusion: np.ndarray  # rows: true class, columns: predicted
    n_samples: int
    excluded: int
    mode: str

    def summary(self) -> str:
        lines = [f"mode\t{self.mode}", f"samples\t{self.n_samples}", f"excluded\t{self.excluded}",
                 f"accuracy\t{self.accuracy:.6f}"]
        lines += [f"class_{c}\t{a:.6f}" for c, a in enumerate(self.per_class)]
        return "\n".join(lines)


def build_report(labels: Sequence[int], preds: Sequence[int], n_classes: int, excluded: int,
                 mode: str) -> EvalReport:
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    for y, p in zip(labels, preds):
        confusion[y, p] += 1
    total = int(confusion.sum())
    support = confusion.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        per_class = np.where(support > 0, np.diag(confusion) / np.maximum(support, 1), np.nan)
    acc = float(np.trace(confusion) / total) if total else float("nan")
    return EvalReport(acc, per_class, confusion, total, excluded, mode)


def _subjects(test) -> frozenset[int] | None:
    if test is None:
        return None
    return getattr(test, "test", None) or frozenset(test)


def score_samples(model: FsaModel, manifest: DatasetManifest, test, length: int | None = None,
                  threads: int = 1) -> dict[int, np.ndarray | None]:
    """Logits per manifest index; ``None`` marks samples too short for the model.

    ``length`` switches to fixed-length mode with evenly spaced frame indices.
    """
    idx = manifest.indices(_subjects(test))

    def one(i: int) -> np.ndarray | None:
        seq = manifest.load(i)
        if length is not None:
            seq = resample_even(seq, length)
        if seq.T < model.cfg.min_sequence_length():
            return None
        try:
            return forward(model, prepare_streams(seq, model.cfg)).data
        except ValueError:
            return None

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return dict(zip(idx, pool.map(one, idx)))
    return {i: one(i) for i in idx}


def _report_from_scores(manifest: DatasetManifest, scores: dict[int, np.ndarray | None], n_classes: int,
                        mode: str) -> EvalReport:
    labels, preds, excluded = [], [], 0
    for i, logits in scores.items():
        if logits is None:
            excluded += 1
            continue
        labels.append(manifest.entries[i].action_id)
        preds.append(int(np.argmax(logits)))
    return build_report(labels, preds, n_classes, excluded, mode)


def evaluate(model: FsaModel, manifest: DatasetManifest, test, length: int | None = None,
             threads: int = 1) -> EvalReport:
    """Deterministic accuracy report over the test subjects (a SplitSpec or id set)."""
    if length is not None and length < 1:
        raise ValueError(f"fixed length must be positive, got {length}")
    scores = score_samples(model, manifest, test, length, threads)
    if not scores:
        raise ValueError("no test samples for the requested subjects")
    mode = "native" if length is None else f"fixed:{length}"
    return _report_from_scores(manifest, scores, model.cfg.n_classes, mode)


@dataclass(frozen=True)
class SweepRow:
    length: int
    accuracy: float
    excluded: int


def length_sweep(model: FsaModel, manifest: DatasetManifest, test, lengths: Iterable[int],
                 threads: int = 1) -> list[SweepRow]:
    """Fixed-length accuracy of a frozen model for each length in ascending order."""
    lengths = [int(L) for L in lengths]
    if lengths != sorted(lengths):
        raise ValueError(f"lengths must be ascending, got {lengths}")
    rows = []
    for L in lengths:
        rep = evaluate(model, manifest, test, length=L, threads=threads)
        rows.append(SweepRow(L, rep.accuracy, rep.excluded))
    return rows


def format_sweep(rows: Sequence[SweepRow]) -> str:
    return "\n".join(["length\taccuracy\texcluded"] +
                     [f"{r.length}\t{r.accuracy:.6f}\t{r.excluded}" for r in rows])


def fusion_eval(model_a: FsaModel, model_b: FsaModel, manifest: DatasetManifest, test,
                weight: float = 0.5, threads: int = 1) -> EvalReport:
    """Late fusion of two models that see parallel views (modalities) of each sample."""
    if model_a.cfg.n_classes != model_b.cfg.n_classes:
        raise ValueError("models disagree on the class set")
    a = score_samples(model_a, manifest, test, threads=threads)
    b = score_samples(model_b, manifest, test, threads=threads)
    fused = {}
    for i in a:
        if a[i] is None or b.get(i) is None:
            fused[i] = None
        else:
            fused[i] = fuse_scores(a[i], b[i], weight)
    return _report_from_scores(manifest, fused, model_a.cfg.n_classes, "fused")


@dataclass(frozen=True)
class CrossDomainResult:
    matrix: dict[str, dict[str, float]]  # train domain -> test domain -> accuracy
    models: dict[str, FsaModel]

    def format(self) -> str:
        lines = ["train\\test\telderly\tadult"]
        for row in ("elderly", "adult", "mixed"):
            lines.append(f"{row}\t{self.matrix[row]['elderly']:.6f}\t{self.matrix[row]['adult']:.6f}")
        return "\n".join(lines)


def cross_domain_matrix(manifest: DatasetManifest, model_cfg: ModelConfig, train_cfg,
                        threads: int = 1) -> CrossDomainResult:
    """Train elderly-only, adult-only and mixed models; test each on both age groups."""
    from .training import split_cross_age, train

    splits = split_cross_age(manifest)
    tests = {"elderly": splits["elderly"].test, "adult": splits["adult"].test}
    matrix, models = {}, {}
    for k, row in enumerate(("elderly", "adult", "mixed")):
        rng = np.random.default_rng([train_cfg.seed, k])
        model = build_model(model_cfg, rng)
        model, _ = train(model, manifest, splits[row], train_cfg, rng)
        models[row] = model
        matrix[row] = {col: evaluate(model, manifest, ids, threads=threads).accuracy for col, ids in tests.items()}
    return CrossDomainResult(matrix, models)
