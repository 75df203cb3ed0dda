"""Multimode-fiber style optical backend.

Inputs are phase-encoded onto a unit-modulus field, propagated through a
complex transmission matrix between a forward and an inverse unitary DFT, and
read out as intensity. All nonlinearity comes from the phase encoding and the
squared-magnitude readout; the propagation itself is linear in the field.
"""

import numpy as np


class OpticsSystem:
    """Fixed transmission-matrix simulator, dim -> dim.

    forward(x) = |IDFT(T @ DFT(exp(1j * phase_gain * x)))|^2 per row, with
    unitary DFTs. Immutable after construction; forward and vjp are safe to
    call concurrently.
    """

    def __init__(self, t_matrix, phase_gain=np.pi):
        t_matrix = np.asarray(t_matrix, dtype=np.complex128)
        if t_matrix.ndim != 2 or t_matrix.shape[0] != t_matrix.shape[1]:
            raise ValueError("transmission matrix must be square")
        if not np.all(np.isfinite(t_matrix.view(np.float64))):
            raise ValueError("non-finite transmission matrix")
        self.t_matrix = t_matrix
        self.phase_gain = float(phase_gain)
        self.input_dim = t_matrix.shape[0]
        self.output_dim = t_matrix.shape[0]

    @classmethod
    def random(cls, dim, seed=0, phase_gain=np.pi):
        """i.i.d. complex Gaussian T with E|T_ij|^2 = 1/dim (standard MMF statistics)."""
        rng = np.random.default_rng(seed)
        t = (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim)))
        return cls(t / np.sqrt(2 * dim), phase_gain)

    def _field(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ValueError(
                f"expected (B, {self.input_dim}) input, got {x.shape}")
        e = np.exp(1j * self.phase_gain * x)
        u = np.fft.fft(e, axis=1, norm="ortho")
        w = np.fft.ifft(u @ self.t_matrix.T, axis=1, norm="ortho")
        return e, w

    def forward(self, x):
        _, w = self._field(x)
        return w.real ** 2 + w.imag ** 2

    def vjp(self, x, cotangent):
        """d(sum(cotangent * forward(x)))/dx, rowwise, via the complex chain rule."""
        cotangent = np.asarray(cotangent, dtype=np.float64)
        e, w = self._field(x)
        g_w = 2.0 * cotangent * w                     # d/d(Re w) + 1j d/d(Im w)
        g_v = np.fft.fft(g_w, axis=1, norm="ortho")   # adjoint of unitary IDFT
        g_u = g_v @ np.conj(self.t_matrix)            # rows of T^H applied
        g_e = np.fft.ifft(g_u, axis=1, norm="ortho")
        return np.real(np.conj(g_e) * (1j * self.phase_gain * e))

    def perturbed(self, mu, sigma, seed):
        """New system with Gaussian(mu, sigma) added to Re and Im of T independently."""
        rng = np.random.default_rng(seed)
        noise = rng.normal(mu, sigma, size=self.t_matrix.shape) \
            + 1j * rng.normal(mu, sigma, size=self.t_matrix.shape)
        return OpticsSystem(self.t_matrix + noise, self.phase_gain)
