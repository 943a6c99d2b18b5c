"""Files, configuration, training, experiments and the command line."""
from .arrayfile import ArrayFileError, decode, encode, read_arrays, write_arrays
from .config import RunConfig, load_config, one_cycle_lr, parse_config
from .data import Acquisition, build_corpus, pair_sampler, undersample
from .train import TrainState, load_checkpoint, save_checkpoint, train
