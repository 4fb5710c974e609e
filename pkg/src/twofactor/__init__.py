"""Two-factor affine processes with stable noise: simulation, couplings and drift certificates."""

__version__ = "0.1.0"

from .model import ModelKind, ModelSpec, validate_model  # noqa: E402
from .lyapunov import LyapunovShape  # noqa: E402
from .paths import PathConfig, simulate_path, simulate_ensemble  # noqa: E402
from .coupling import CouplingMode, simulate_coupled, simulate_coupled_ensemble  # noqa: E402
from .certify import GridSpec, coupling_generator_eval, drift_certificate_search  # noqa: E402

__all__ = [
    "ModelKind", "ModelSpec", "validate_model", "LyapunovShape", "PathConfig", "simulate_path",
    "simulate_ensemble", "CouplingMode", "simulate_coupled", "simulate_coupled_ensemble", "GridSpec",
    "coupling_generator_eval", "drift_certificate_search",
]
