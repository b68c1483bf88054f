from .schedule import NoiseSchedule, make_schedule, forward_noise
from .model import ModelDescriptor, DenoiserModel
from .sampler import sample
from .train import TrainConfig, TrainingDiverged, loss_and_gradients, train
from .checkpoint import save_checkpoint, load_checkpoint

__all__ = [
    "NoiseSchedule", "make_schedule", "forward_noise",
    "ModelDescriptor", "DenoiserModel", "sample",
    "TrainConfig", "TrainingDiverged", "loss_and_gradients", "train",
    "save_checkpoint", "load_checkpoint",
]
