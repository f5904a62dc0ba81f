"""Scalar Wiener paths, dyadic coarsening and noise models.

Paths are keyed by ``(seed, sample)`` through numpy's Philox4x64-10
counter-based bit generator, so any sample can be regenerated on its own.
Normals come from the basic Box-Muller transform applied to the raw 64-bit
stream: consecutive words ``w0, w1`` give uniforms
``u = (w >> 11) * 2**-53`` and the pair

    r = sqrt(-2 log(1 - u0)),  z0 = r cos(2 pi u1),  z1 = r sin(2 pi u1).

Increments are ``sqrt(T / M0) * z`` in that order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

DEFAULT_FINE_STEPS = 2048
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True, eq=False)
class WienerPath:
    T: float
    n_steps: int
    increments: np.ndarray
    seed: int
    sample: int = 0

    @property
    def k(self) -> float:
        return self.T / self.n_steps

    def terminal_value(self) -> float:
        """W(T) computed with the same summation tree as coarsening."""
        return float(coarse_increments(self, 1)[0])


def _bit_generator(seed: int, sample: int) -> np.random.Philox:
    if seed < 0 or sample < 0:
        raise ValueError("seed and sample index must be non-negative")
    return np.random.Philox(key=(int(seed) & _MASK64) | (int(sample) << 64))


def standard_normals(seed: int, sample: int, size: int) -> np.ndarray:
    """``size`` N(0,1) draws for ``(seed, sample)`` via Box-Muller."""
    pairs = (size + 1) // 2
    raw = _bit_generator(seed, sample).random_raw(2 * pairs)
    u = (raw >> np.uint64(11)).astype(np.float64) * 2.0**-53
    u0, u1 = u[0::2], u[1::2]
    r = np.sqrt(-2.0 * np.log1p(-u0))
    theta = 2.0 * np.pi * u1
    z = np.empty(2 * pairs)
    z[0::2] = r * np.cos(theta)
    z[1::2] = r * np.sin(theta)
    return z[:size]


def generate_path(seed: int, M0: int = DEFAULT_FINE_STEPS, T: float = 1.0, sample: int = 0) -> WienerPath:
    if M0 < 1:
        raise ValueError(f"fine step count must be >= 1, got {M0}")
    if not T > 0:
        raise ValueError(f"horizon must be positive, got {T}")
    inc = np.sqrt(T / M0) * standard_normals(seed, sample, M0)
    inc.setflags(write=False)
    return WienerPath(T=float(T), n_steps=int(M0), increments=inc, seed=int(seed), sample=int(sample))


def generate_paths(seed: int, samples, M0: int = DEFAULT_FINE_STEPS, T: float = 1.0) -> np.ndarray:
    """Stacked fine increments, shape ``(M0, len(samples))``."""
    return np.stack([generate_path(seed, M0, T, s).increments for s in samples], axis=1)


def _coarsen(inc: np.ndarray, ratio: int) -> np.ndarray:
    # Dyadic ratios use a pairwise tree so that halving twice == quartering once.
    if ratio & (ratio - 1) == 0:
        out = np.asarray(inc)
        while ratio > 1:
            out = out[0::2] + out[1::2]
            ratio //= 2
        return out
    blocks = np.asarray(inc).reshape((-1, ratio) + np.shape(inc)[1:])
    out = blocks[:, 0].copy()
    for i in range(1, ratio):
        out = out + blocks[:, i]
    return out


def coarse_increments(path: WienerPath | np.ndarray, M: int) -> np.ndarray:
    """Increments over ``M`` equal steps built from the fine path.

    Accepts a :class:`WienerPath` or a raw ``(M0, ...)`` increment array.
    """
    inc = path.increments if isinstance(path, WienerPath) else np.asarray(path)
    M0 = inc.shape[0]
    if M < 1 or M0 % M != 0:
        raise ValueError(f"coarse step count {M} must divide the fine step count {M0}")
    if M == M0:
        return np.array(inc, copy=True)
    return _coarsen(inc, M0 // M)


def milstein_weight(dW, k: float):
    """Iterated Ito integral of dW over one step: ``((dW)^2 - k) / 2``."""
    if not k > 0:
        raise ValueError(f"time step must be positive, got {k}")
    return 0.5 * (dW * dW - k)


class NoiseModel:
    """Diffusion map ``u -> G(u)`` and the Milstein term ``u -> DG(u) G(u)``.

    Both act on velocity coefficient vectors (or ``(n, J)`` batches).
    Implementations must be Lipschitz with linear growth and map discretely
    divergence-free fields to discretely divergence-free fields.
    """

    name = "abstract"

    def G(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def DGG(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class CallableNoise(NoiseModel):
    def __init__(self, G: Callable[[np.ndarray], np.ndarray], DGG: Callable[[np.ndarray], np.ndarray], name: str = "custom"):
        self._G, self._DGG, self.name = G, DGG, name

    def G(self, u):
        return self._G(u)

    def DGG(self, u):
        return self._DGG(u)


class LinearNoise(NoiseModel):
    """``G(u) = alpha u``, hence ``DG(u) G(u) = alpha^2 u``."""

    def __init__(self, alpha: float = 0.5):
        self.alpha = float(alpha)
        self.name = f"linear(alpha={self.alpha!r})"

    def G(self, u):
        return self.alpha * u

    def DGG(self, u):
        return (self.alpha * self.alpha) * u

    @property
    def lipschitz_constant(self) -> float:
        return abs(self.alpha)

    def __repr__(self) -> str:
        return f"LinearNoise(alpha={self.alpha!r})"
