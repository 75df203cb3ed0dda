"""Physical-layer backends.

Every backend satisfies the same forward contract: ``input_dim``,
``output_dim`` and ``forward(x)`` mapping a (B, input_dim) float64 batch to a
(B, output_dim) float64 batch, deterministically. Simulators additionally
expose ``vjp`` (analytic input gradients, for gradient-based baselines) and
``perturbed`` (parameter-noise copies); a RemoteSystem exposes neither.
"""

import numpy as np

from .acoustic import AcousticSystem
from .microwave import MicrowaveSystem, k_factor, linearity_metric
from .optics import OpticsSystem
from .remote import BackendError, RemoteSystem, remote_forward, serve_backend


def is_simulator(sys) -> bool:
    return hasattr(sys, "vjp") and hasattr(sys, "perturbed")


def perturb(sys, mu, sigma, seed=0):
    """Copy of ``sys`` with Gaussian(mu, sigma) noise on every free parameter
    tensor. The original is untouched; remote backends are not perturbable."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if not hasattr(sys, "perturbed"):
        raise TypeError(f"{type(sys).__name__} cannot be perturbed")
    return sys.perturbed(mu, sigma, seed)


def clone_with_param_noise(sys, sigma, seed=0):
    """Model-mismatch twin: same as perturb with mu = 0. The clone plays the
    role of an inaccurate digital model while ``sys`` stays the real system."""
    return perturb(sys, 0.0, sigma, seed)


def backend_vjp(sys, x, cotangent):
    """d(cotangent . forward(x))/dx for a single input vector."""
    if not hasattr(sys, "vjp"):
        raise TypeError(f"{type(sys).__name__} does not support vjp")
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    cotangent = np.atleast_2d(np.asarray(cotangent, dtype=np.float64))
    return sys.vjp(x, cotangent)[0]


__all__ = [
    "AcousticSystem", "BackendError", "MicrowaveSystem", "OpticsSystem",
    "RemoteSystem", "backend_vjp", "clone_with_param_noise", "is_simulator",
    "k_factor", "linearity_metric", "perturb", "remote_forward",
    "serve_backend",
]
