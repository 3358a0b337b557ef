"""
Stream model factory - builds the K per-stream models from a models config block.
"""

import logging
from enum import Enum
from typing import TYPE_CHECKING, Any, Dict, List, Sequence

from .errors import ConfigValidationError
from .interfaces import CompositeModel, StreamModel
from .stream_models import BernoulliModel, GaussianCompositeModel, GaussianMeanModel

if TYPE_CHECKING:
    from ..config_service import ModelsConfig

logger = logging.getLogger(__name__)


class StreamModelType(Enum):
    """Available stream model families."""
    GAUSSIAN_MEAN = "gaussian_mean"            # N(0,1) vs N(mu,1)
    BERNOULLI = "bernoulli"                    # Bernoulli(p0) vs Bernoulli(p1), exact oracle
    COMPOSITE_GAUSSIAN = "composite_gaussian"  # unknown mean in interval hypotheses


def parse_model_type(kind: str) -> StreamModelType:
    try:
        return StreamModelType(kind)
    except ValueError:
        raise ConfigValidationError(
            f"Unknown stream model kind: {kind}. "
            f"Available kinds: {[t.value for t in StreamModelType]}"
        )


def stream_means(K: int, mu: float, phi: float = 1.0) -> List[float]:
    """Per-stream means: phi * mu in the first K/2 streams, mu in the rest."""
    return [phi * mu if k < K // 2 else mu for k in range(K)]


class StreamModelFactory:
    """Factory for per-stream model lists."""

    @staticmethod
    def create_models(config: "ModelsConfig") -> List[StreamModel]:
        """Simple-hypothesis models for every stream."""
        model_type = parse_model_type(config.kind)
        if model_type is StreamModelType.COMPOSITE_GAUSSIAN:
            raise ConfigValidationError("composite_gaussian models have no simple-hypothesis form")
        if model_type is StreamModelType.BERNOULLI:
            logger.debug(f"🎲 Bernoulli streams p0={config.p0}, p1={config.p1}, K={config.K}")
            return [BernoulliModel(config.p0, config.p1) for _ in range(config.K)]

        means = list(config.means) if config.means else stream_means(config.K, config.mu, config.phi)
        if len(means) != config.K:
            raise ConfigValidationError(f"models.means has {len(means)} entries for K={config.K}")
        logger.debug(f"📈 Gaussian streams with means {means}")
        return [GaussianMeanModel(mean) for mean in means]

    @staticmethod
    def create_composite_models(config: "ModelsConfig") -> List[CompositeModel]:
        if parse_model_type(config.kind) is not StreamModelType.COMPOSITE_GAUSSIAN:
            raise ConfigValidationError(f"models.kind must be composite_gaussian, got {config.kind}")
        if len(config.null) != 2 or len(config.alt) != 2:
            raise ConfigValidationError("models.null and models.alt must be [low, high] intervals")
        return [GaussianCompositeModel(*config.null, *config.alt) for _ in range(config.K)]


def describe_models(models: Sequence) -> List[Dict[str, Any]]:
    return [dict(model.describe(), stream=k + 1) for k, model in enumerate(models)]
