"""Protocol splits, the Adam update, and the random-length training loop."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import numerics as nx
from .augment import AugmentConfig, augment
from .dataset import DatasetManifest
from .model import FsaModel, forward, prepare_streams
from .skeleton import FourStreamInput, normalize, sample_length

log = logging.getLogger(__name__)

ELDERLY_MAX_ID = 50


@dataclass(frozen=True)
class SplitSpec:
    train: frozenset[int]
    test: frozenset[int]
    domain: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "train", frozenset(self.train))
        object.__setattr__(self, "test", frozenset(self.test))
        if not self.train or not self.test:
            raise ValueError(f"split {self.domain or ''} has an empty side")
        if self.train & self.test:
            raise ValueError(f"train and test subjects overlap: {sorted(self.train & self.test)}")


def split_cross_subject(manifest: DatasetManifest) -> SplitSpec:
    """Test on subjects whose id is a multiple of 3, train on the rest."""
    ids = manifest.subjects
    return SplitSpec(frozenset(i for i in ids if i % 3), frozenset(i for i in ids if i % 3 == 0), "cs")


def split_cross_age(manifest: DatasetManifest) -> dict[str, SplitSpec]:
    """Elderly (ids <= 50) and adult (ids > 50) specialist splits plus the
    subject-matched mixed split that trains on ids ``1, 4, 7, ...``.

    A mixed-train id ``i`` is used only when its test partner ``i + 2`` exists,
    which yields ``1..97`` (33 ids) on a 100-subject corpus.
    """
    for e in manifest:
        expected = "elderly" if e.subject_id <= ELDERLY_MAX_ID else "adult"
        if e.age_group != expected:
            raise ValueError(f"subject {e.subject_id} is {e.age_group}; cross-age protocol expects "
                             f"elderly ids 1..{ELDERLY_MAX_ID} and adult ids above")
    ids = manifest.subjects
    elderly = [i for i in ids if i <= ELDERLY_MAX_ID]
    adult = [i for i in ids if i > ELDERLY_MAX_ID]
    e_test = frozenset(i for i in elderly if i % 3 == 0)
    a_test = frozenset(i for i in adult if i % 3 == 0)
    return {
        "elderly": SplitSpec(frozenset(elderly) - e_test, e_test, "elderly"),
        "adult": SplitSpec(frozenset(adult) - a_test, a_test, "adult"),
        "mixed": SplitSpec(frozenset(i for i in ids if i % 3 == 1 and i + 2 in ids), e_test | a_test, "mixed"),
    }


def parse_split(name: str, manifest: DatasetManifest) -> SplitSpec:
    if name == "cs":
        return split_cross_subject(manifest)
    if name.startswith("age:"):
        splits = split_cross_age(manifest)
        key = name.split(":", 1)[1]
        if key in splits:
            return splits[key]
    raise ValueError(f"unknown split {name!r}; use cs, age:elderly, age:adult or age:mixed")


# --- optimizer -------------------------------------------------------------

@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState,
              lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> tuple[dict[str, np.ndarray], AdamState]:
    """Bias-corrected adaptive-moment update; returns new params and state."""
    for name, g in grads.items():
        if g.shape != params[name].shape:
            raise ValueError(f"gradient shape {g.shape} does not match {name} {params[name].shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for {name}; step aborted")
    step = state.step + 1
    new_params, m_new, v_new = {}, {}, {}
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            new_params[name] = p
            continue
        m = beta1 * state.m.get(name, 0.0) + (1 - beta1) * g
        v = beta2 * state.v.get(name, 0.0) + (1 - beta2) * g * g
        m_hat = m / (1 - beta1 ** step)
        v_hat = v / (1 - beta2 ** step)
        new_params[name] = p - lr * m_hat / (np.sqrt(v_hat) + eps)
        m_new[name], v_new[name] = m, v
    return new_params, AdamState(step, {**state.m, **m_new}, {**state.v, **v_new})


# --- training --------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 16
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    l_min: int = 32
    l_max: int = 128
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    seed: int = 0
    clip_norm: float | None = None

    def __post_init__(self):
        if not 2 <= self.l_min <= self.l_max:
            raise ValueError(f"need 2 <= l_min <= l_max, got {self.l_min}, {self.l_max}")
        if self.lr <= 0 or self.epochs < 0 or self.batch_size < 1:
            raise ValueError("invalid learning rate, epoch count or batch size")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    test_acc: float
    wall_seconds: float
    skipped: int = 0
    aborted_steps: int = 0


def batch_loss(model: FsaModel, batch: Sequence[tuple[FourStreamInput, int]],
               tensors: dict[str, nx.Tensor]) -> nx.Tensor:
    losses = [nx.softmax_cross_entropy(forward(model, streams, tensors), label) for streams, label in batch]
    return nx.mean(nx.stack(losses))


def train_step(model: FsaModel, batch: Sequence[tuple[FourStreamInput, int]], state: AdamState,
               cfg: TrainConfig) -> tuple[FsaModel, AdamState, float]:
    """One averaged-loss gradient step over per-sample graphs (no padding)."""
    tensors = model.tensors(requires_grad=True)
    loss = batch_loss(model, batch, tensors)
    names = list(tensors)
    grads = dict(zip(names, nx.gradients(loss, [tensors[n] for n in names])))
    if cfg.clip_norm is not None:
        norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
        if norm > cfg.clip_norm:
            grads = {n: g * (cfg.clip_norm / norm) for n, g in grads.items()}
    params, state = adam_step(dict(model.params), grads, state, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    return model.with_params(params), state, loss.item()


def draw_training_input(manifest: DatasetManifest, i: int, model: FsaModel, cfg: TrainConfig,
                        rng: np.random.Generator) -> FourStreamInput:
    seq = manifest.load(i)
    L = int(rng.integers(cfg.l_min, cfg.l_max + 1))
    if L < model.cfg.min_sequence_length():
        raise ValueError(f"sampled length {L} below model minimum {model.cfg.min_sequence_length()}")
    seq = normalize(sample_length(seq, L, rng))
    seq = augment(seq, cfg.augment, rng)
    return prepare_streams(seq, model.cfg)


def train(model: FsaModel, manifest: DatasetManifest, split, cfg: TrainConfig,
          rng: np.random.Generator | None = None, test_ids=None,
          on_epoch: Callable[[EpochRecord], None] | None = None) -> tuple[FsaModel, list[EpochRecord]]:
    """Random-length, augmented mini-batch training on the split's train subjects.

    ``test_ids`` (subject ids) adds a native-length test accuracy to each epoch.
    """
    from .evaluation import evaluate

    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    train_subjects = split.train if isinstance(split, SplitSpec) else frozenset(split)
    idx = manifest.indices(train_subjects)
    if not idx:
        raise ValueError("split has no training samples in this manifest")
    state = AdamState()
    history = []
    for epoch in range(1, cfg.epochs + 1):
        start = time.perf_counter()
        order = rng.permutation(idx)
        losses, skipped, aborted = [], 0, 0
        for b in range(0, len(order), cfg.batch_size):
            batch = []
            for i in order[b:b + cfg.batch_size]:
                try:
                    streams = draw_training_input(manifest, int(i), model, cfg, rng)
                except ValueError as exc:
                    log.debug("skipping sample %d: %s", i, exc)
                    skipped += 1
                    continue
                batch.append((streams, manifest.entries[int(i)].action_id))
            if not batch:
                continue
            try:
                model, state, loss = train_step(model, batch, state, cfg)
            except FloatingPointError as exc:
                log.warning("epoch %d: %s", epoch, exc)
                aborted += 1
                skipped += len(batch)
                continue
            losses.append(loss * len(batch))
        n_used = len(idx) - skipped
        mean_loss = float(sum(losses) / n_used) if n_used else float("nan")
        acc = evaluate(model, manifest, test_ids).accuracy if test_ids is not None else float("nan")
        rec = EpochRecord(epoch, mean_loss, acc, time.perf_counter() - start, skipped, aborted)
        history.append(rec)
        log.info("epoch %d loss %.4f test_acc %.4f skipped %d (%.1fs)", epoch, mean_loss, acc, skipped,
                 rec.wall_seconds)
        if on_epoch is not None:
            on_epoch(rec)
    return model, history


def write_history(history: Sequence[EpochRecord], path) -> None:
    lines = [f"{r.epoch}\t{r.train_loss!r}\t{r.test_acc!r}\t{r.wall_seconds:.3f}" for r in history]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
