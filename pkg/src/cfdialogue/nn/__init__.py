from .autodiff import GradTape, Var, backward
from .layers import LstmParams, MlpParams, encode_batch, lstm_forward, mlp_forward
from .optim import AdamState, NonFiniteGradientError, optimizer_step

__all__ = [
    "AdamState",
    "GradTape",
    "LstmParams",
    "MlpParams",
    "NonFiniteGradientError",
    "Var",
    "backward",
    "encode_batch",
    "lstm_forward",
    "mlp_forward",
    "optimizer_step",
]
