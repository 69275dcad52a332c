"""Velocity models: analytic oracles and the toy dual-branch denoiser."""

from .attention import MacCounter, attention, attention_weights, lora_apply
from .conditioning import ConditioningBundle, MicroCondition, VelocityModel
from .oracle import (
    OracleModel,
    StochasticOracleModel,
    oracle_velocity,
    smooth_perturbation,
    stochastic_oracle_velocity,
)
from .toy import (
    ToyDenoiser,
    base_forward,
    global_encode,
    micro_embed,
    patch_branch_features,
    toy_denoiser_predict,
)
from .weights import ModelWeights, ToyConfig

__all__ = [
    "ConditioningBundle",
    "MacCounter",
    "MicroCondition",
    "ModelWeights",
    "OracleModel",
    "StochasticOracleModel",
    "ToyConfig",
    "ToyDenoiser",
    "VelocityModel",
    "attention",
    "attention_weights",
    "base_forward",
    "global_encode",
    "lora_apply",
    "micro_embed",
    "oracle_velocity",
    "patch_branch_features",
    "smooth_perturbation",
    "stochastic_oracle_velocity",
    "toy_denoiser_predict",
]
