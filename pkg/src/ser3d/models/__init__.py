from .checkpoint import load_checkpoint, save_checkpoint
from .config import ArchConfig, count_params, layer_table
from .network import ModelParams, build, forward, loss_and_grads, predict, top_activations
from .training import TrainSettings, classify, fit_elm, stack_partition, train
