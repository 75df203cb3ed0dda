"""Reverberant cavity backend parametrized by a binary metasurface.

The configuration-to-transfer-function map is modelled by a resolvent:
t_f(c) = u_f^T (I - eta * A * D(c))^{-1} v_f, with D(c) the diagonal of
per-element reflection phases. The Neumann series of the resolvent is the
multi-bounce reverberation that makes the map nonlinear in c even though wave
propagation itself is linear; working with |t_f|^2 adds readout nonlinearity.
"""

import numpy as np


def _abs_spectral_radius(a, iters=200):
    """Spectral radius of |a| (elementwise), by power iteration."""
    m = np.abs(a)
    v = np.ones(m.shape[0])
    rho = 0.0
    for _ in range(iters):
        w = m @ v
        rho = np.linalg.norm(w)
        if rho == 0.0:
            return 0.0
        v = w / rho
    return float(rho)


class MicrowaveSystem:
    """Metasurface-configured chaotic cavity, d_in pixels -> n_freqs intensities.

    Inputs in [0, 1] are binarized at 0.5 before entering the cavity unless
    ``relaxed`` is set, in which case they drive the reflection phase
    continuously (the differentiable variant used by gradient baselines; vjp
    always differentiates this relaxed map).
    """

    def __init__(self, coupling, u_out, v_in, pixel_map, eta, phase_on=np.pi,
                 relaxed=False):
        self.coupling = np.asarray(coupling, dtype=np.complex128)
        self.u_out = np.asarray(u_out, dtype=np.complex128)
        self.v_in = np.asarray(v_in, dtype=np.complex128)
        self.pixel_map = np.asarray(pixel_map, dtype=np.int64)
        self.eta = float(eta)
        self.phase_on = float(phase_on)
        self.relaxed = bool(relaxed)
        m = self.coupling.shape[0]
        if self.coupling.shape != (m, m):
            raise ValueError("coupling matrix must be square")
        if self.u_out.ndim != 2 or self.u_out.shape[1] != m:
            raise ValueError("u_out must be (n_freqs, m)")
        if self.v_in.shape != (m, self.u_out.shape[0]):
            raise ValueError("v_in must be (m, n_freqs)")
        if self.pixel_map.shape != (m,) or self.pixel_map.min() < 0:
            raise ValueError("pixel_map must assign one input pixel per element")
        self.n_elements = m
        self.input_dim = int(self.pixel_map.max()) + 1
        self.output_dim = self.u_out.shape[0]
        # |d| = 1 for every config, so rho(|eta A|) < 1 guarantees the
        # resolvent converges for all of them (worst case over D).
        if self.eta != 0.0 and abs(self.eta) * _abs_spectral_radius(self.coupling) >= 1.0:
            raise ValueError(
                "eta * spectral_radius(|A|) >= 1: resolvent not convergent "
                "for all configurations")

    @classmethod
    def random(cls, d_in=40, n_elements=64, n_freqs=20, eta=0.85, seed=0,
               dense_mix=0.25, phase_on=np.pi, relaxed=False):
        """Calibrated default cavity: median linearity metric near 10 dB.

        The coupling is a random phased permutation (long reverberation paths)
        blended with a dense complex Gaussian part (mode mixing), normalized so
        the worst-case spectral radius of |A| is 1; eta then sets the margin.
        """
        if n_elements < d_in:
            raise ValueError("need at least one element per input pixel")
        rng = np.random.default_rng(seed)
        perm = rng.permutation(n_elements)
        a = np.zeros((n_elements, n_elements), dtype=np.complex128)
        a[np.arange(n_elements), perm] = np.exp(2j * np.pi * rng.random(n_elements))
        dense = (rng.normal(size=(n_elements, n_elements))
                 + 1j * rng.normal(size=(n_elements, n_elements)))
        a = (1.0 - dense_mix) * a + dense_mix * dense / np.sqrt(2 * n_elements)
        a /= _abs_spectral_radius(a)
        u_out = (rng.normal(size=(n_freqs, n_elements))
                 + 1j * rng.normal(size=(n_freqs, n_elements))) / np.sqrt(2 * n_elements)
        v_in = (rng.normal(size=(n_elements, n_freqs))
                + 1j * rng.normal(size=(n_elements, n_freqs))) / np.sqrt(2)
        pixel_map = np.concatenate([np.arange(d_in),
                                    rng.integers(0, d_in, size=n_elements - d_in)])
        return cls(a, u_out, v_in, pixel_map, eta, phase_on, relaxed)

    def _phases(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ValueError(
                f"expected (B, {self.input_dim}) input, got {x.shape}")
        if not self.relaxed:
            x = (x >= 0.5).astype(np.float64)
        return x[:, self.pixel_map]

    def transfer(self, x):
        """Complex transfer coefficients (B, n_freqs), before intensity readout."""
        levels = self._phases(x)
        eye = np.eye(self.n_elements)
        out = np.empty((len(levels), self.output_dim), dtype=np.complex128)
        for b, lv in enumerate(levels):
            d = np.exp(1j * self.phase_on * lv)
            resolv = np.linalg.solve(eye - self.eta * self.coupling * d[None, :],
                                     self.v_in)
            out[b] = np.einsum("fm,mf->f", self.u_out, resolv)
        return out

    def forward(self, x):
        t = self.transfer(x)
        return t.real ** 2 + t.imag ** 2

    def vjp(self, x, cotangent):
        """Input gradient of the continuous-phase relaxation of forward."""
        cotangent = np.asarray(cotangent, dtype=np.float64)
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ValueError(
                f"expected (B, {self.input_dim}) input, got {x.shape}")
        levels = x[:, self.pixel_map]
        eye = np.eye(self.n_elements)
        out = np.zeros_like(x)
        for b, lv in enumerate(levels):
            d = np.exp(1j * self.phase_on * lv)
            m = eye - self.eta * self.coupling * d[None, :]
            rv = np.linalg.solve(m, self.v_in)                 # R v   (m, F)
            ru = np.linalg.solve(m.T, self.u_out.T)            # R^T u (m, F)
            t = np.einsum("fm,mf->f", self.u_out, rv)
            # dt_f/d(level_m) = eta * (A^T R^T u_f)_m * i*phase_on*d_m * (R v_f)_m
            dt = self.eta * (self.coupling.T @ ru) * (1j * self.phase_on * d)[:, None] * rv
            contrib = 2.0 * np.real(np.conj(t)[None, :] * dt) @ cotangent[b]
            np.add.at(out[b], self.pixel_map, contrib)
        return out

    def perturbed(self, mu, sigma, seed):
        """New system with Gaussian(mu, sigma) added to Re and Im of the coupling."""
        rng = np.random.default_rng(seed)
        noise = rng.normal(mu, sigma, size=self.coupling.shape) \
            + 1j * rng.normal(mu, sigma, size=self.coupling.shape)
        return MicrowaveSystem(self.coupling + noise, self.u_out, self.v_in,
                               self.pixel_map, self.eta, self.phase_on,
                               self.relaxed)


def k_factor(sys: MicrowaveSystem, n_configs=400, seed=0, configs=None):
    """Unstirred-to-stirred power ratio |mean|^2 / (2 var) per frequency.

    Computed over ``n_configs`` random binary configurations (or a given
    ensemble); frequencies whose ensemble variance is zero report +inf.
    """
    if configs is None:
        if n_configs < 2:
            raise ValueError("need at least 2 configurations")
        rng = np.random.default_rng(seed)
        configs = rng.integers(0, 2, size=(n_configs, sys.input_dim)).astype(np.float64)
    elif len(configs) < 2:
        raise ValueError("need at least 2 configurations")
    t = sys.transfer(configs)
    mu = t.mean(axis=0)
    var = np.mean(np.abs(t - mu) ** 2, axis=0)
    # an unstirred ensemble leaves only summation rounding in var
    degenerate = var <= (1e-12 * np.mean(np.abs(t), axis=0)) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(degenerate, np.inf, np.abs(mu) ** 2 / (2.0 * var))


ZETA_CAP_DB = 120.0


def linearity_metric(sys: MicrowaveSystem, n_train=600, n_test=300, seed=0):
    """Best-linear-fit SNR of the complex transfer vs configuration, in dB.

    Fits h = h0 + t^T c on random binary configs, evaluates the residual on a
    held-out split, and returns 20*log10(SD(h)/SD(h - fit)) per frequency,
    capped at ZETA_CAP_DB. Low values mean strong structural nonlinearity.
    """
    if n_train <= sys.input_dim + 1:
        raise ValueError("n_train must exceed input_dim + 1")
    rng = np.random.default_rng(seed)
    configs = rng.integers(0, 2, size=(n_train + n_test, sys.input_dim)).astype(np.float64)
    h = sys.transfer(configs)
    design = np.hstack([np.ones((len(configs), 1)), configs])
    if np.linalg.matrix_rank(design[:n_train]) < sys.input_dim + 1:
        raise np.linalg.LinAlgError("rank-deficient design matrix")
    coef, *_ = np.linalg.lstsq(design[:n_train], h[:n_train], rcond=None)
    residual = h[n_train:] - design[n_train:] @ coef
    sd_h = np.std(h[n_train:], axis=0)
    sd_r = np.std(residual, axis=0)
    # a configuration-independent transfer is perfectly linear: cap it, and
    # likewise when the residual vanishes relative to the spread
    scale = np.mean(np.abs(h[n_train:]), axis=0)
    degenerate = (sd_h <= 1e-12 * scale) | (sd_r <= 10.0 ** (-ZETA_CAP_DB / 20.0) * sd_h)
    zeta = np.full(sys.output_dim, ZETA_CAP_DB)
    ok = ~degenerate
    zeta[ok] = 20.0 * np.log10(sd_h[ok] / sd_r[ok])
    return np.minimum(zeta, ZETA_CAP_DB)
