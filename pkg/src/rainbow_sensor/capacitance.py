"""Generalized capacitance matrices from the BEM or the dilute closed form."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .bem import BemCapacitance, capacitance_matrix_bem
from .geometry import GeometryError, ResonatorArray


def sphere_capacitance(radius) -> float:
    """Capacitance ``4 pi r`` of a sphere (metres, in the -1/(4 pi |x|) convention)."""
    radius = np.asarray(radius, dtype=float)
    if np.any(radius <= 0):
        raise GeometryError("radius must be positive")
    return 4.0 * np.pi * radius


def sphere_volume(radius):
    return 4.0 / 3.0 * np.pi * np.asarray(radius, dtype=float) ** 3


def volume_scaling(array: ResonatorArray) -> np.ndarray:
    """Diagonal matrix with entries ``|D_i|^-1/2``."""
    return np.diag(1.0 / np.sqrt(array.volumes))


@dataclass(frozen=True)
class GeneralizedCapacitanceMatrix:
    """Symmetric ``VCV`` together with the ``C`` and ``V`` it was built from.

    ``source`` is ``"bem"`` or ``"dilute"``; ``params`` records the refinement
    and panel model, or epsilon.
    """

    values: np.ndarray
    capacitance: np.ndarray
    volume_scaling: np.ndarray
    source: str
    labels: tuple
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        n = values.shape[0]
        if values.shape != (n, n):
            raise ValueError(f"matrix must be square, got {values.shape}")
        values = 0.5 * (values + values.T)
        if np.any(np.diag(values) <= 0):
            raise ValueError("generalized capacitance diagonal must be positive")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if len(self.labels) != n:
            raise ValueError(f"{len(self.labels)} labels for a {n}x{n} matrix")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def asymmetric(self) -> np.ndarray:
        """The similar, non-symmetric form ``V^2 C``."""
        v = self.volume_scaling
        return v @ v @ self.capacitance

    def principal_submatrix(self, removed) -> "GeneralizedCapacitanceMatrix":
        """Delete the rows/columns at the given 1-based positions."""
        removed = sorted({int(i) for i in removed})
        if not removed:
            raise ValueError("nothing to remove")
        if removed[0] < 1 or removed[-1] > self.n:
            raise ValueError(f"indices {removed} outside 1..{self.n}")
        if len(removed) >= self.n:
            raise ValueError("cannot remove every resonator")
        keep = np.setdiff1d(np.arange(self.n), np.asarray(removed) - 1)
        sub = np.ix_(keep, keep)
        return GeneralizedCapacitanceMatrix(
            self.values[sub],
            self.capacitance[sub],
            self.volume_scaling[sub],
            self.source,
            tuple(self.labels[i] for i in keep),
            dict(self.params, submatrix_of=list(self.labels)),
        )


def dilute_capacitance(array: ResonatorArray) -> np.ndarray:
    """Point-interaction capacitance: ``Cap_i`` on the diagonal,
    ``-eps Cap_i Cap_j / (4 pi |z_i - z_j|)`` off it."""
    if not array.is_dilute:
        raise GeometryError("dilute capacitance needs an epsilon-dilute array (see geometry.as_dilute)")
    cap = sphere_capacitance(array.radii)
    z = array.reference_centers
    dist = np.linalg.norm(z[:, None, :] - z[None, :, :], axis=-1)
    off = ~np.eye(array.n, dtype=bool)
    if np.any(dist[off] == 0):
        raise GeometryError("coincident anchors")
    C = np.diag(cap)
    with np.errstate(divide="ignore"):
        coupling = -array.epsilon * np.outer(cap, cap) / (4.0 * np.pi * dist)
    C[off] = coupling[off]
    return C


def dilute_gcm(array: ResonatorArray) -> GeneralizedCapacitanceMatrix:
    """Closed-form dilute generalized capacitance matrix of a sphere array."""
    C = dilute_capacitance(array)
    V = volume_scaling(array)
    return GeneralizedCapacitanceMatrix(
        V @ C @ V, C, V, "dilute", array.labels, {"epsilon": array.epsilon}
    )


def gcm_from_bem(
    array: ResonatorArray,
    refinement: int = 3,
    panels: str = "curved",
    bem: Optional[BemCapacitance] = None,
) -> GeneralizedCapacitanceMatrix:
    """``VCV`` with ``C`` from the boundary element solve.

    Pass a precomputed ``bem`` result to reuse its densities.
    """
    if bem is None:
        bem = capacitance_matrix_bem(array, refinement, panels)
    V = volume_scaling(array)
    return GeneralizedCapacitanceMatrix(
        V @ bem.matrix @ V,
        bem.matrix,
        V,
        "bem",
        array.labels,
        {"refinement": bem.refinement, "panels": bem.densities.panels, "asymmetry": bem.asymmetry},
    )


def ones_interaction(C: np.ndarray, V: np.ndarray) -> np.ndarray:
    """``V C J C V`` with ``J`` the all-ones matrix; equals ``w w^T`` for ``w = V C 1``."""
    w = V @ C @ np.ones(C.shape[0])
    return np.outer(w, w)
