"""Localized two-mode forcing and the driven stochastic convolution.

The noise acts through profiles e_1, e_2 supported in a subinterval
[a, b] of (0, pi): one and two arches of a sine, projected onto the global
sine basis by high-order quadrature.  Brownian driving paths are generated
by a counter-based (Philox) generator keyed by (seed, member, stream), so
ensembles are reproducible and independent of evaluation order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from burgers_lab.spectral import SpectralState

__all__ = [
    "ForcingBasis",
    "NoisePath",
    "StochasticConvolution",
    "build_basis",
    "sample_noise",
    "convolution_step",
    "member_seed",
    "make_generator",
    "NOISE_BLOCK",
]

# Brownian increments are drawn in (2, NOISE_BLOCK) blocks so that streaming
# consumers and whole-path sampling see the identical sequence.
NOISE_BLOCK = 1024


def make_generator(*key: int) -> np.random.Generator:
    """Counter-based generator for a hierarchical integer key."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(list(key))))


def member_seed(master_seed: int, member_index: int, stream: int = 0) -> int:
    """Derive a 64-bit per-member seed; independent of evaluation order."""
    ss = np.random.SeedSequence([int(master_seed), int(member_index), int(stream)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class ForcingBasis:
    """Sine-basis projections of the two localized forcing profiles.

    e1(x) = c1 sin(pi (x-a)/(b-a)) and e2(x) = c2 sin(2 pi (x-a)/(b-a)) on
    [a, b], zero outside.  ``trunc_error`` reports the sup of the
    reconstructed profiles outside [a, b] (they vanish there only up to
    spectral truncation).
    """

    a: float
    b: float
    c1: float
    c2: float
    e1: SpectralState
    e2: SpectralState
    trunc_error: float

    @property
    def n_modes(self) -> int:
        return self.e1.n_modes

    def coeff_matrix(self) -> np.ndarray:
        """Stacked coefficients, shape (2, N)."""
        return np.stack([self.e1.coeffs, self.e2.coeffs])

    def gram(self) -> np.ndarray:
        """L2 Gram matrix of (e1, e2) in the truncated basis."""
        E = self.coeff_matrix()
        return 0.5 * np.pi * (E @ E.T)


def _profile_sine_coeffs(n_modes: int, a: float, b: float, amplitude: float, arches: int) -> np.ndarray:
    # Gauss-Legendre on [a, b]; the integrand oscillates at most with
    # wavenumber n_modes, so ~8 nodes per wavelength is ample.
    n_quad = max(2048, 8 * n_modes)
    xq, wq = np.polynomial.legendre.leggauss(n_quad)
    xq = 0.5 * (b - a) * (xq + 1.0) + a
    wq = 0.5 * (b - a) * wq
    profile = amplitude * np.sin(arches * np.pi * (xq - a) / (b - a))
    k = np.arange(1, n_modes + 1)
    return (2.0 / np.pi) * ((wq * profile) @ np.sin(np.outer(xq, k)))


def build_basis(a: float, b: float, c1: float, c2: float, n_modes: int) -> ForcingBasis:
    """Project the localized profiles onto the first n_modes sine modes.

    Raises on a degenerate interval or zero amplitude.  The reported
    truncation error is the sup of |e_j| over a fine grid outside [a, b].
    """
    if not 0.0 < a < b < np.pi:
        raise ValueError(f"need 0 < a < b < pi, got a={a}, b={b}")
    if c1 == 0.0 or c2 == 0.0:
        raise ValueError("amplitudes c1, c2 must be non-zero")
    e1 = _profile_sine_coeffs(n_modes, a, b, c1, 1)
    e2 = _profile_sine_coeffs(n_modes, a, b, c2, 2)

    x_fine = np.linspace(0.0, np.pi, 8 * n_modes + 1)
    outside = (x_fine < a) | (x_fine > b)
    k = np.arange(1, n_modes + 1)
    sines = np.sin(np.outer(x_fine[outside], k))
    trunc = max(np.max(np.abs(sines @ e1)), np.max(np.abs(sines @ e2)))

    return ForcingBasis(a=a, b=b, c1=c1, c2=c2,
                        e1=SpectralState(e1), e2=SpectralState(e2),
                        trunc_error=float(trunc))


@dataclass(frozen=True)
class NoisePath:
    """Discrete Brownian increments for the two driving motions.

    ``increments`` has shape (2, M) with independent rows; each entry is
    N(0, dt).  The path is a pure function of (seed, dt, M).
    """

    dt: float
    increments: np.ndarray
    seed: int

    @property
    def n_steps(self) -> int:
        return self.increments.shape[1]


def _draw_increment_blocks(gen: np.random.Generator, dt: float, n_steps: int):
    """Yield (2, block) increment arrays; block layout is part of the contract."""
    scale = np.sqrt(dt)
    done = 0
    while done < n_steps:
        nb = min(NOISE_BLOCK, n_steps - done)
        yield gen.normal(0.0, scale, size=(2, nb))
        done += nb


def sample_noise(seed: int, dt: float, n_steps: int) -> NoisePath:
    """Draw a reproducible two-row Brownian increment path."""
    if dt <= 0:
        raise ValueError(f"dt={dt} must be positive")
    if n_steps < 0:
        raise ValueError("n_steps must be nonnegative")
    gen = make_generator(seed)
    if n_steps == 0:
        return NoisePath(dt=dt, increments=np.zeros((2, 0)), seed=int(seed))
    blocks = list(_draw_increment_blocks(gen, dt, n_steps))
    return NoisePath(dt=dt, increments=np.concatenate(blocks, axis=1), seed=int(seed))


@dataclass(frozen=True)
class StochasticConvolution:
    """State of the noise-driven heat equation z, started from z(0) = 0."""

    current: SpectralState
    nu: float
    t: float

    @staticmethod
    def initial(n_modes: int, nu: float) -> "StochasticConvolution":
        return StochasticConvolution(current=SpectralState.zero(n_modes), nu=nu, t=0.0)


def convolution_step(z: StochasticConvolution, basis: ForcingBasis,
                     d_beta: tuple[float, float], dt: float) -> StochasticConvolution:
    """One exponential-Euler update of the stochastic convolution.

    Per mode: z_k <- exp(-nu k^2 dt) z_k + e_{1,k} dB_1 + e_{2,k} dB_2.
    The discrete stationary per-mode variance is then
    (e_{1,k}^2 + e_{2,k}^2) * dt / (1 - exp(-2 nu k^2 dt)).
    """
    if dt <= 0:
        raise ValueError(f"dt={dt} must be positive")
    k = np.arange(1, z.current.n_modes + 1, dtype=float)
    decay = np.exp(-z.nu * k**2 * dt)
    new = decay * z.current.coeffs + d_beta[0] * basis.e1.coeffs + d_beta[1] * basis.e2.coeffs
    return StochasticConvolution(current=SpectralState(new), nu=z.nu, t=z.t + dt)


def convolution_decay(n_modes: int, nu: float, dt: float) -> np.ndarray:
    k = np.arange(1, n_modes + 1, dtype=float)
    return np.exp(-nu * k**2 * dt)


def stationary_mode_variance(basis: ForcingBasis, nu: float, dt: float) -> np.ndarray:
    """Closed-form stationary variance of each z mode under the discrete update."""
    k = np.arange(1, basis.n_modes + 1, dtype=float)
    s2 = (basis.e1.coeffs**2 + basis.e2.coeffs**2) * dt
    return s2 / (1.0 - np.exp(-2.0 * nu * k**2 * dt))


def sup_norm_embedding(n_modes: int, s: float) -> float:
    """Constant c with ||u||_inf <= c ||u||_{H^s} in the truncated basis.

    Cauchy-Schwarz over modes: sup |u| <= sum |a_k| <= c * spectral H^s norm
    with c = sqrt((2/pi) sum k^{-2s}).
    """
    k = np.arange(1, n_modes + 1, dtype=float)
    return float(np.sqrt(2.0 / np.pi * np.sum(k ** (-2.0 * s))))


def sup_deriv_embedding(n_modes: int, s: float) -> float:
    """Constant c with ||du/dx||_inf <= c ||u||_{H^s} in the truncated basis."""
    k = np.arange(1, n_modes + 1, dtype=float)
    return float(np.sqrt(2.0 / np.pi * np.sum(k ** (2.0 - 2.0 * s))))
