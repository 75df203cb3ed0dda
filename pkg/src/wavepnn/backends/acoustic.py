"""Acoustic cavity backend with actively controlled power-law resonators.

Linear input mixing feeds a bank of nonlinear channels i = G * |p|^alpha
(odd-extended to keep sign information), followed by linear output mixing.
"""

import numpy as np


class AcousticSystem:
    """out = W_out @ phi(W_in @ x), phi_k(u) = gain_k * sign(u) * |u|^alpha_k."""

    def __init__(self, w_in, w_out, gain, alpha):
        self.w_in = np.asarray(w_in, dtype=np.float64)
        self.w_out = np.asarray(w_out, dtype=np.float64)
        self.gain = np.asarray(gain, dtype=np.float64)
        self.alpha = np.asarray(alpha, dtype=np.float64)
        if self.w_in.ndim != 2 or self.w_out.ndim != 2 \
                or self.w_out.shape[1] != self.w_in.shape[0]:
            raise ValueError("w_out columns must match w_in rows")
        n_chan = self.w_in.shape[0]
        if self.gain.shape != (n_chan,) or self.alpha.shape != (n_chan,):
            raise ValueError(f"gain/alpha must have shape ({n_chan},)")
        if np.any(self.alpha <= 0):
            raise ValueError("alpha must be > 0")
        self.input_dim = self.w_in.shape[1]
        self.output_dim = self.w_out.shape[0]

    @classmethod
    def random(cls, input_dim=20, output_dim=None, n_channels=None, seed=0,
               w_scale=None, gain_range=(5.3, 5.7), alpha_range=(1.4, 1.7)):
        """Random mixing matrices with control parameters in the measured ANM range.

        The default input-mixing scale of 1/input_dim keeps the pre-activations
        in the resonators' sensitive range, where small parameter offsets
        visibly move the response (the regime the mismatch experiments probe).
        """
        output_dim = output_dim or input_dim
        n_channels = n_channels or max(input_dim, output_dim)
        rng = np.random.default_rng(seed)
        w_scale = w_scale if w_scale is not None else 1.0 / input_dim
        w_in = rng.normal(0.0, w_scale, size=(n_channels, input_dim))
        w_out = rng.normal(0.0, 1.0 / np.sqrt(n_channels), size=(output_dim, n_channels))
        gain = rng.uniform(*gain_range, size=n_channels)
        alpha = rng.uniform(*alpha_range, size=n_channels)
        return cls(w_in, w_out, gain, alpha)

    def _pre(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ValueError(
                f"expected (B, {self.input_dim}) input, got {x.shape}")
        return x @ self.w_in.T

    def forward(self, x):
        u = self._pre(x)
        phi = self.gain * np.sign(u) * np.abs(u) ** self.alpha
        return phi @ self.w_out.T

    def vjp(self, x, cotangent):
        """Exact input gradient; subgradient 0 at u = 0 when alpha < 1."""
        cotangent = np.asarray(cotangent, dtype=np.float64)
        u = self._pre(x)
        au = np.abs(u)
        with np.errstate(divide="ignore", invalid="ignore"):
            dphi = self.gain * self.alpha * au ** (self.alpha - 1.0)
        # |u|^(alpha-1) at u=0: alpha > 1 -> 0, alpha == 1 -> 1, alpha < 1 -> inf
        at_zero = np.where(self.alpha == 1.0, self.gain, 0.0)
        dphi = np.where(au == 0.0, at_zero, dphi)
        return ((cotangent @ self.w_out) * dphi) @ self.w_in

    def perturbed(self, mu, sigma, seed):
        """New system with Gaussian(mu, sigma) added to both mixing matrices."""
        rng = np.random.default_rng(seed)
        return AcousticSystem(
            self.w_in + rng.normal(mu, sigma, size=self.w_in.shape),
            self.w_out + rng.normal(mu, sigma, size=self.w_out.shape),
            self.gain, self.alpha)
