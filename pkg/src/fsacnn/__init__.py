"""Four-stream adaptive CNN for skeleton-based action recognition, built on a
small numpy reverse-mode autodiff engine."""

from .actnet import ActivationNetworkParams, act_conv_forward, act_forward, init_actnet
from .model import FsaModel, ModelConfig, build_model, forward, fuse_scores, load_checkpoint, save_checkpoint
from .skeleton import SkeletonSequence, four_streams, load_sequence, normalize, save_sequence

__all__ = [
    "ActivationNetworkParams", "act_conv_forward", "act_forward", "init_actnet",
    "FsaModel", "ModelConfig", "build_model", "forward", "fuse_scores", "load_checkpoint", "save_checkpoint",
    "SkeletonSequence", "four_streams", "load_sequence", "normalize", "save_sequence",
]
