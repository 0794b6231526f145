"""Four-stream adaptive CNN: per-stream temporal conv backbones built from
activation-network layers, global max pooling, and a fused classifier head."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import numerics as nx
from .actnet import ActivationNetworkParams, act_conv_forward, act_forward, init_actnet
from .numerics import Tensor
from .skeleton import FourStreamInput, SkeletonSequence, four_streams, normalize, project

MAGIC = b"FSAC1\n"
STREAMS = ("raw", "short", "long", "spatial")


@dataclass(frozen=True)
class ModelConfig:
    widths: tuple[int, ...] = (32, 64, 128)
    kernel: int = 3
    stride: int = 1
    pad: int = 0
    K: int = 3
    short_gap: int = 1
    long_gap: int = 5
    n_classes: int = 10
    joints: int = 25
    dims: int = 3
    bodies: int = 1
    share_temporal: bool = True
    per_node_branch: bool = False
    input_scale: float = 0.15

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if not self.widths or min(self.widths) < 1:
            raise ValueError("need at least one conv block with positive width")
        if self.n_classes < 2:
            raise ValueError("n_classes must be >= 2")
        if not 1 <= self.short_gap < self.long_gap:
            raise ValueError(f"need 1 <= short_gap < long_gap, got {self.short_gap}, {self.long_gap}")
        if self.kernel < 1 or self.stride < 1 or self.pad < 0 or self.K < 1:
            raise ValueError("invalid kernel / stride / pad / K")
        if not self.input_scale > 0:
            raise ValueError("input_scale must be positive")
        if self.dims not in (2, 3) or self.bodies not in (1, 2) or self.joints < 2:
            raise ValueError("invalid skeleton geometry")

    @property
    def coord_channels(self) -> int:
        return self.joints * self.bodies * self.dims

    @property
    def bone_channels(self) -> int:
        return (self.joints * self.bodies - 1) * self.dims

    def backbones(self) -> dict[str, int]:
        """Backbone name -> input channels, in parameter order."""
        if self.share_temporal:
            return {"raw": self.coord_channels, "temporal": self.coord_channels,
                    "spatial": self.bone_channels}
        return {"raw": self.coord_channels, "short": self.coord_channels,
                "long": self.coord_channels, "spatial": self.bone_channels}

    def stream_backbone(self, stream: str) -> str:
        if stream in ("short", "long") and self.share_temporal:
            return "temporal"
        return stream

    def min_stream_length(self) -> int:
        """Shortest stream map that keeps at least one column through every block."""
        m = 1
        for _ in self.widths:
            m = max((m - 1) * self.stride + self.kernel - 2 * self.pad, 1)
        return m

    def min_sequence_length(self) -> int:
        return self.min_stream_length() + self.long_gap

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ModelConfig":
        d = json.loads(text)
        d["widths"] = tuple(d["widths"])
        return cls(**d)


@dataclass
class FsaModel:
    cfg: ModelConfig
    params: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def n_params(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def tensors(self, requires_grad: bool = False) -> dict[str, Tensor]:
        return {k: Tensor(v, requires_grad) for k, v in self.params.items()}

    def with_params(self, params: dict[str, np.ndarray]) -> "FsaModel":
        return FsaModel(self.cfg, {k: _frozen(params[k]) for k in self.params})


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.flags.writeable = False
    return a


def _layer(t: dict[str, Tensor], prefix: str, per_node: bool) -> ActivationNetworkParams:
    return ActivationNetworkParams(t[prefix + ".W"], t[prefix + ".b"], t[prefix + ".V"], t[prefix + ".z"],
                                   per_node_branch=per_node)


def build_model(cfg: ModelConfig, rng: np.random.Generator) -> FsaModel:
    params: dict[str, np.ndarray] = {}

    def put(prefix, layer: ActivationNetworkParams):
        for name, tensor in zip("WbVz", layer.tensors()):
            params[f"{prefix}.{name}"] = _frozen(tensor.data)

    for bb, c_in in cfg.backbones().items():
        for i, width in enumerate(cfg.widths):
            put(f"{bb}.{i}", init_actnet(c_in, width, cfg.K, rng, width=cfg.kernel, requires_grad=False))
            c_in = width
    put("head", init_actnet(len(STREAMS) * cfg.widths[-1], cfg.n_classes, cfg.K, rng, requires_grad=False))
    return FsaModel(cfg, params)


def backbone_forward(x: Tensor, t: dict[str, Tensor], backbone: str, cfg: ModelConfig) -> Tensor:
    for i in range(len(cfg.widths)):
        x = act_conv_forward(x, _layer(t, f"{backbone}.{i}", cfg.per_node_branch), cfg.stride, cfg.pad)
    return x


def stream_features(model: FsaModel, streams: FourStreamInput,
                    tensors: dict[str, Tensor] | None = None) -> list[Tensor]:
    """Pooled fixed-width feature vector of each stream."""
    cfg = model.cfg
    t = tensors if tensors is not None else model.tensors()
    need = cfg.min_stream_length()
    feats = []
    for name, arr in zip(STREAMS, streams.as_tuple()):
        expected = cfg.bone_channels if name == "spatial" else cfg.coord_channels
        if arr.shape[0] != expected:
            raise ValueError(f"{name} stream has {arr.shape[0]} channels, model expects {expected}")
        if arr.shape[1] < need:
            raise ValueError(f"{name} stream length {arr.shape[1]} below minimum {need} "
                             f"(minimum sequence length {cfg.min_sequence_length()})")
        fmap = backbone_forward(Tensor(arr * cfg.input_scale), t, cfg.stream_backbone(name), cfg)
        feats.append(nx.global_max_pool_time(fmap))
    return feats


def forward(model: FsaModel, streams: FourStreamInput,
            tensors: dict[str, Tensor] | None = None) -> Tensor:
    t = tensors if tensors is not None else model.tensors()
    pooled = nx.concat(stream_features(model, streams, t))
    return act_forward(pooled, _layer(t, "head", model.cfg.per_node_branch))


def prepare_streams(seq: SkeletonSequence, cfg: ModelConfig) -> FourStreamInput:
    """Project to the model's modality if needed, normalize, and build the four maps."""
    if seq.dims > cfg.dims:
        seq = project(seq, cfg.dims)
    return four_streams(normalize(seq), cfg.short_gap, cfg.long_gap)


def fuse_scores(logits_a, logits_b, weight: float = 0.5) -> np.ndarray:
    """Log of the weighted mean of the two softmax distributions."""
    a = np.asarray(getattr(logits_a, "data", logits_a), dtype=np.float64)
    b = np.asarray(getattr(logits_b, "data", logits_b), dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"class-count mismatch: {a.shape} vs {b.shape}")
    if not 0.0 <= weight <= 1.0:
        raise ValueError(f"fusion weight must lie in [0, 1], got {weight}")
    # mixed in log space so confident classes do not underflow to log(0)
    with np.errstate(divide="ignore"):
        log_w = np.log([weight, 1.0 - weight])
    return np.logaddexp(log_w[0] + nx.log_softmax(a), log_w[1] + nx.log_softmax(b))


# --- checkpoints -----------------------------------------------------------

def save_checkpoint(model: FsaModel, path) -> None:
    """``FSAC1`` magic, ``#config`` line, one ``name<TAB>shape`` line per parameter,
    a blank line, then little-endian float64 payloads in manifest order."""
    head = [MAGIC.decode().rstrip("\n"), "#config\t" + model.cfg.to_json()]
    for name, arr in model.params.items():
        head.append(f"{name}\t{','.join(str(n) for n in arr.shape)}")
    blob = ("\n".join(head) + "\n\n").encode("utf-8")
    payload = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in model.params.values())
    Path(path).write_bytes(blob + payload)


def load_checkpoint(path) -> FsaModel:
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise ValueError(f"{path}: not an FSAC1 checkpoint")
    end = raw.find(b"\n\n", len(MAGIC) - 1)
    if end < 0:
        raise ValueError(f"{path}: truncated manifest")
    lines = raw[len(MAGIC):end].decode("utf-8").split("\n")
    cfg = None
    shapes: list[tuple[str, tuple[int, ...]]] = []
    for line in lines:
        if line.startswith("#config\t"):
            cfg = ModelConfig.from_json(line.split("\t", 1)[1])
            continue
        name, shape = line.split("\t")
        shapes.append((name, tuple(int(n) for n in shape.split(",") if n)))
    if cfg is None:
        raise ValueError(f"{path}: checkpoint lacks a #config line")
    offset = end + 2
    params = {}
    for name, shape in shapes:
        n = int(np.prod(shape)) * 8
        chunk = raw[offset:offset + n]
        if len(chunk) != n:
            raise ValueError(f"{path}: payload truncated at {name}")
        params[name] = _frozen(np.frombuffer(chunk, dtype="<f8").reshape(shape))
        offset += n
    if offset != len(raw):
        raise ValueError(f"{path}: {len(raw) - offset} trailing bytes")
    return FsaModel(cfg, params)
