"""Neural ODEs trained on short rollouts with Jacobian regularisation.

The learned right-hand side is a small MLP integrated with RK4. Its Jacobian
is pulled toward the true system's, either exactly through Jacobian-vector
products (``ad``) or from data alone with finite differences (``fd``).
"""

__version__ = "0.1.0"

from ._accel import backend_name, numba_enabled
from .dynamics import SystemId
from .losses import RegMode
from .model import MlpParams, TrueDynamicsModel, init_params
from .train import ExperimentConfig, desk_profile, full_profile, train

__all__ = [
    "ExperimentConfig", "MlpParams", "RegMode", "SystemId", "TrueDynamicsModel", "backend_name",
    "desk_profile", "init_params", "numba_enabled", "full_profile", "train",
]
