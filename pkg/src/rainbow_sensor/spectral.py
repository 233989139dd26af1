"""Eigenpairs of the generalized capacitance matrix and resonant frequencies."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .capacitance import GeneralizedCapacitanceMatrix, ones_interaction
from .geometry import Material

SIGN_TIE_RTOL = 1e-10


class NonPhysicalSpectrumError(ValueError):
    """A non-positive eigenvalue where a capacitance eigenvalue must be positive."""


def fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip columns so the largest-magnitude entry is positive.

    Entries within ``SIGN_TIE_RTOL`` of the maximum magnitude tie; the lowest
    index wins.
    """
    vectors = np.array(vectors, dtype=float)
    mags = np.abs(vectors)
    top = mags.max(axis=0)
    lead = np.argmax(mags >= top * (1.0 - SIGN_TIE_RTOL), axis=0)
    signs = np.sign(vectors[lead, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def eigendecompose(matrix) -> tuple:
    """Ascending eigenvalues and sign-normalised orthonormal eigenvectors (columns)."""
    values = matrix.values if isinstance(matrix, GeneralizedCapacitanceMatrix) else np.asarray(matrix, dtype=float)
    if not np.allclose(values, values.T, rtol=0, atol=1e-12 * np.max(np.abs(values))):
        raise ValueError("matrix is not symmetric")
    lam, vec = np.linalg.eigh(0.5 * (values + values.T))
    return lam, fix_signs(vec)


@dataclass(frozen=True)
class Spectrum:
    """Leading-order resonances of an array.

    ``omegas`` are complex angular frequencies ``sqrt(delta v^2 lambda) - i delta tau``.
    """

    lambdas: np.ndarray
    vectors: np.ndarray
    taus: np.ndarray
    omegas: np.ndarray
    material: Material
    volume_scaling: np.ndarray
    labels: tuple = ()

    @property
    def n(self) -> int:
        return len(self.lambdas)

    @property
    def gap(self) -> float:
        """Smallest gap between adjacent eigenvalues (inf for a single resonator)."""
        return float(np.min(np.diff(self.lambdas))) if self.n > 1 else float("inf")

    @property
    def frequencies_hz(self) -> np.ndarray:
        return self.omegas.real / (2.0 * np.pi)

    def dominant_resonators(self) -> np.ndarray:
        """0-based index of the resonator carrying the largest weight in each mode."""
        return np.argmax(np.abs(self.vectors), axis=0)


def resonant_frequencies(
    lambdas: np.ndarray,
    vectors: np.ndarray,
    C: np.ndarray,
    V: np.ndarray,
    material: Material,
    labels: tuple = (),
) -> Spectrum:
    """Complex resonant frequencies and radiative damping coefficients."""
    lambdas = np.asarray(lambdas, dtype=float)
    if np.any(lambdas <= 0):
        raise NonPhysicalSpectrumError(f"non-positive capacitance eigenvalue {lambdas.min():.6g}")
    delta, v, v0 = material.delta, material.v, material.v0
    K = ones_interaction(C, V)
    quad = np.einsum("in,ij,jn->n", vectors, K, vectors) / np.einsum("in,in->n", vectors, vectors)
    taus = v**2 / (8.0 * np.pi * v0) * quad
    omegas = np.sqrt(delta * v**2 * lambdas) - 1j * delta * taus
    return Spectrum(lambdas, np.asarray(vectors, dtype=float), taus, omegas, material, np.asarray(V), tuple(labels))


def compute_spectrum(gcm: GeneralizedCapacitanceMatrix, material: Material) -> Spectrum:
    lam, vec = eigendecompose(gcm)
    return resonant_frequencies(lam, vec, gcm.capacitance, gcm.volume_scaling, material, gcm.labels)


def mode_weights(spectrum: Spectrum, n: int) -> np.ndarray:
    """Per-resonator weights ``V v_n`` of the n-th mode (1-based)."""
    if not 1 <= n <= spectrum.n:
        raise ValueError(f"mode index {n} outside 1..{spectrum.n}")
    return spectrum.volume_scaling @ spectrum.vectors[:, n - 1]


def mode_field(densities, spectrum: Spectrum, n: int, points) -> np.ndarray:
    """Leading-order mode ``u_n`` evaluated at points off the boundary."""
    from .bem import evaluate_potential

    return evaluate_potential(densities, mode_weights(spectrum, n), points)
