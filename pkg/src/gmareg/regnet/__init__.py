"""Registration network: encoders, correlation lookup, GMA and recurrent flow updates."""
from .config import VARIANTS, NetConfig, variant_config
from .corr import CorrelationPyramid, build_pyramid, lookup, pyramid_nbytes
from .denoiser import denoise, unet_denoise
from .encoders import context_encode, encode, feature_encode
from .gma import gma_aggregate, gma_apply, gma_attention
from .model import RegistrationOutput, register, upsample_flow
from .params import count_parameters, declare, init_weights
from .update import flow_head, gru_cell, lstm_cell, motion_encode

__all__ = [
    "VARIANTS", "NetConfig", "variant_config", "CorrelationPyramid", "build_pyramid",
    "lookup", "pyramid_nbytes", "denoise", "unet_denoise", "context_encode", "encode",
    "feature_encode", "gma_aggregate", "gma_apply", "gma_attention", "RegistrationOutput",
    "register", "upsample_flow", "count_parameters", "declare", "init_weights",
    "flow_head", "gru_cell", "lstm_cell", "motion_encode",
]
