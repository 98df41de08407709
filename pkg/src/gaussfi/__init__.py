"""Fisher information of Gaussian measurements on Gaussian states."""

from .errors import *  # noqa: F401,F403
from .fisher import *  # noqa: F401,F403
from .gaussian import *  # noqa: F401,F403
from .mle import *  # noqa: F401,F403
from .models import (  # noqa: F401
    REGISTRY,
    ModelConfig,
    ParametricModel,
    custom_model,
    load_model_config,
    loss_thermal_model,
    parse_model_config,
    squeeze_coherent_model,
)
from .symplectic import *  # noqa: F401,F403

__version__ = "0.1.0"
