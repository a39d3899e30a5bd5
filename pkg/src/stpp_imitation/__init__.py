"""Intensity-free spatio-temporal point process generator trained by kernel
discrepancy minimisation, with a self-exciting simulator, a likelihood baseline
and a county-level epidemic pipeline."""

__version__ = "0.1.0"

from .events import (  # noqa: E402
    Event,
    EventSequence,
    ScalingTransform,
    SpaceRegion,
    StaticFeatures,
    fit_scaling,
    validate_sequence,
)
from .kernels import EmbeddingBatch, KernelConfig, kernel_eval, mmd_grad_events, mmd_squared, reward_field  # noqa: E402
from .generator import (  # noqa: E402
    GeneratorParams,
    RolloutTrace,
    condition_and_predict,
    emit_event,
    init_params,
    match_event_rate,
    rnn_step,
    rollout,
    rollout_batch,
)
from .trainer import TrainConfig, TrainReport, backprop_rollout, expert_self_discrepancy, train  # noqa: E402
from .hawkes import TriggeringModel, empirical_intensity, intensity, simulate  # noqa: E402
