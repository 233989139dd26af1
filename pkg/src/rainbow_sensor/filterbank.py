"""Causal damped-sinusoid filter bank built from resonant frequencies."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.signal import fftconvolve

TRUNC_TOL = 1e-6


class FilterError(ValueError):
    pass


@dataclass(frozen=True)
class Signal:
    """Real samples at ``sample_rate`` Hz, starting at ``t = 0``."""

    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        s = np.array(self.samples, dtype=float).ravel()
        if not self.sample_rate > 0:
            raise FilterError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(s)):
            raise FilterError("signal contains non-finite samples")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self)) / self.sample_rate

    @property
    def l1_norm(self) -> float:
        """Rectangle-rule ``||s||_1``."""
        return float(np.sum(np.abs(self.samples))) / self.sample_rate

    @classmethod
    def impulse(cls, length: int, sample_rate: float, at: int = 0) -> "Signal":
        s = np.zeros(length)
        s[at] = 1.0
        return cls(s, sample_rate)

    @classmethod
    def tone(cls, freq_hz: float, duration: float, sample_rate: float, amplitude: float = 1.0) -> "Signal":
        t = np.arange(int(round(duration * sample_rate))) / sample_rate
        return cls(amplitude * np.sin(2.0 * np.pi * freq_hz * t), sample_rate)

    def delayed(self, k: int) -> "Signal":
        return Signal(np.concatenate([np.zeros(k), self.samples]), self.sample_rate)


@dataclass(frozen=True)
class Kernel:
    """Sampled ``c_n exp(Im w t) sin(Re w t)`` for ``t >= 0``, truncated once the
    envelope falls below ``trunc_tol``."""

    omega: complex
    c_n: float
    sample_rate: float
    samples: np.ndarray
    truncation_time: float
    trunc_tol: float
    normalized: bool = False

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self)) / self.sample_rate

    @property
    def decay(self) -> float:
        return -self.omega.imag


def make_kernel(
    omega: complex,
    sample_rate: float,
    trunc_tol: float = TRUNC_TOL,
    c_n: float = 1.0,
    normalize: bool = False,
) -> Kernel:
    """Sample the causal kernel of one resonance.

    Parameters
    ----------
    omega : complex angular frequency in rad/s, ``Im < 0 < Re``.
    sample_rate : Hz; must exceed twice ``Re(omega) / 2 pi``.
    trunc_tol : envelope level (relative to ``|c_n|``) at which to stop.
    normalize : rescale to unit discrete L2 norm instead of using ``c_n``.
    """
    omega = complex(omega)
    if not omega.imag < 0:
        raise FilterError(f"Im(omega) must be negative for a decaying kernel, got {omega}")
    if not omega.real > 0:
        raise FilterError(f"Re(omega) must be positive, got {omega}")
    if not sample_rate > omega.real / math.pi:
        raise FilterError(
            f"sample rate {sample_rate} Hz is below Nyquist for {omega.real / (2 * math.pi):.6g} Hz"
        )
    if not 0 < trunc_tol < 1:
        raise FilterError(f"trunc_tol must lie in (0, 1), got {trunc_tol}")
    t_trunc = math.log(1.0 / trunc_tol) / -omega.imag
    n = int(math.ceil(t_trunc * sample_rate)) + 1
    t = np.arange(n) / sample_rate
    h = np.exp(omega.imag * t) * np.sin(omega.real * t)
    if normalize:
        c_n = 1.0 / float(np.linalg.norm(h))
    h = c_n * h
    h.setflags(write=False)
    return Kernel(omega, float(c_n), float(sample_rate), h, t_trunc, trunc_tol, normalize)


def kernels_from_omegas(omegas: Sequence[complex], sample_rate: float, **kwargs) -> list:
    return [make_kernel(w, sample_rate, **kwargs) for w in omegas]


def _direct_convolve(s: np.ndarray, h: np.ndarray, length: int) -> np.ndarray:
    # Accumulate shifted copies of the longer array in a fixed order; zero
    # samples contribute exact zeros, so delays and causality are exact.
    out = np.zeros(length)
    short, long_ = (s, h) if len(s) <= len(h) else (h, s)
    for k in np.flatnonzero(short):
        out[k : k + len(long_)] += short[k] * long_
    return out


def apply_transform(
    signal: Signal,
    kernels: Sequence[Kernel],
    method: str = "direct",
    workers: Optional[int] = None,
) -> np.ndarray:
    """Channel outputs ``(s * h_n)(t_k)`` as an ``(N, len(s) + max_len - 1)`` array.

    Shorter channels are zero-padded. Sums are scaled by ``1 / sample_rate``.
    ``method="fft"`` is a fast path that agrees with the direct sum to ~1e-9.
    """
    if method not in ("direct", "fft"):
        raise ValueError(f"unknown method {method!r}")
    if not kernels:
        raise FilterError("no kernels")
    for k in kernels:
        if k.sample_rate != signal.sample_rate:
            raise FilterError(f"kernel rate {k.sample_rate} != signal rate {signal.sample_rate}")
    length = len(signal) + max(len(k) for k in kernels) - 1
    s = signal.samples

    def channel(k: Kernel) -> np.ndarray:
        if method == "fft":
            y = fftconvolve(s, k.samples)
            out = np.zeros(length)
            out[: len(y)] = y
        else:
            out = _direct_convolve(s, k.samples, length)
        return out / signal.sample_rate

    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            rows = list(pool.map(channel, kernels))
    else:
        rows = [channel(k) for k in kernels]
    return np.vstack(rows)


@dataclass(frozen=True)
class FrequencyResponse:
    freqs_hz: np.ndarray
    magnitude: np.ndarray
    peak_hz: float


def frequency_response(kernel: Kernel, n_fft: Optional[int] = None) -> FrequencyResponse:
    """L2-normalised DFT magnitude of the truncated kernel.

    By default the kernel is zero-padded to at least eight times its length.
    """
    if n_fft is None:
        n_fft = 1 << int(math.ceil(math.log2(8 * len(kernel))))
    mag = np.abs(np.fft.rfft(kernel.samples, n_fft))
    mag = mag / np.linalg.norm(mag)
    freqs = np.fft.rfftfreq(n_fft, 1.0 / kernel.sample_rate)
    return FrequencyResponse(freqs, mag, float(freqs[np.argmax(mag)]))


def half_power_band(response: FrequencyResponse) -> tuple:
    """``(lo, hi)`` in Hz where the power is at least half its peak (linear interpolation)."""
    m2 = response.magnitude**2
    f = response.freqs_hz
    p = int(np.argmax(m2))
    half = 0.5 * m2[p]

    def cross(idx_range):
        prev = p
        for i in idx_range:
            if m2[i] < half:
                return f[i] + (half - m2[i]) * (f[prev] - f[i]) / (m2[prev] - m2[i])
            prev = i
        return f[prev]

    return float(cross(range(p - 1, -1, -1))), float(cross(range(p + 1, len(f))))


def band_gaps(bands: Sequence[tuple]) -> list:
    """Frequency intervals not covered by the union of the given bands."""
    ordered = sorted(bands)
    gaps = []
    reach = ordered[0][1]
    for lo, hi in ordered[1:]:
        if lo > reach:
            gaps.append((float(reach), float(lo)))
        reach = max(reach, hi)
    return gaps


def _check_floor(omega: complex, c: float, name: str) -> None:
    if complex(omega).imag > -c:
        raise FilterError(f"Im({name}) = {complex(omega).imag} violates the decay floor -{c}")


def stability_bound(omega_old: complex, omega_new: complex, c: float, s_l1: float) -> float:
    """``sqrt(2)/(c e) |omega_old - omega_new| ||s||_1`` for unit-amplitude kernels."""
    if not c > 0:
        raise FilterError(f"decay floor c must be positive, got {c}")
    _check_floor(omega_old, c, "omega_old")
    _check_floor(omega_new, c, "omega_new")
    return math.sqrt(2.0) / (c * math.e) * abs(complex(omega_old) - complex(omega_new)) * s_l1


@dataclass(frozen=True)
class KernelDifference:
    sup_difference: float
    analytic_bound: float
    argmax_time: float

    @property
    def ok(self) -> bool:
        return self.sup_difference <= self.analytic_bound


def kernel_sup_difference(
    omega_old: complex,
    omega_new: complex,
    c: float,
    n_points: int = 200_001,
    t_max: Optional[float] = None,
) -> KernelDifference:
    """Sampled ``sup_t |h_old(t) - h_new(t)|`` (unit amplitudes) against
    ``(|dIm| + |dRe|) / (c e)``."""
    if not c > 0:
        raise FilterError(f"decay floor c must be positive, got {c}")
    _check_floor(omega_old, c, "omega_old")
    _check_floor(omega_new, c, "omega_new")
    wo, wn = complex(omega_old), complex(omega_new)
    if t_max is None:
        t_max = math.log(1e16) / c
    t = np.linspace(0.0, t_max, n_points)
    d = np.abs(np.exp(wo.imag * t) * np.sin(wo.real * t) - np.exp(wn.imag * t) * np.sin(wn.real * t))
    i = int(np.argmax(d))
    bound = (abs(wo.imag - wn.imag) + abs(wo.real - wn.real)) / (c * math.e)
    return KernelDifference(float(d[i]), bound, float(t[i]))


def envelope_sup(c: float) -> tuple:
    """Numerically maximise ``t exp(-c t)``; returns ``(t_star, value)``.

    The closed form is ``t_star = 1/c`` and value ``1/(c e)``.
    """
    if not c > 0:
        raise FilterError(f"c must be positive, got {c}")
    res = minimize_scalar(lambda t: -t * math.exp(-c * t), bounds=(0.0, 20.0 / c), method="bounded",
                          options={"xatol": 1e-12 / c})
    return float(res.x), float(-res.fun)
