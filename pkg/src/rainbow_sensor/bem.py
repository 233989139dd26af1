"""Static single layer potential on sphere meshes and the capacitance matrix.

Piecewise-constant collocation for

    S[psi](x) = -1/(4 pi) * integral |x - y|^-1 psi(y) dS(y)

on the union of resonator boundaries. Two panel models are supported:

``flat``
    The inscribed polyhedron. Collocation at triangle centroids, exact
    planar-triangle potential for self and near entries, centroid rule for
    the rest.
``curved``
    Each flat triangle projected radially onto its sphere. Collocation at the
    projected centroid, Duffy-transformed Gauss rules for self and near
    entries, a six-point rule for the rest.

Near entries are those whose collocation point lies within
``NEAR_DIAMETERS`` triangle diameters of the source triangle's centroid.
"""

from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.linalg import lapack

from .mesh import SurfaceMesh, mesh_array, project_to_sphere

logger = logging.getLogger(__name__)

NEAR_DIAMETERS = 2.0
SELF_ORDER = 8
NEAR_ORDER = 5
ROW_BLOCK = 512
RCOND_MIN = 1e-13


def _gauss01(order: int) -> tuple:
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


class SingularOperatorError(RuntimeError):
    """Raised when the discretised single layer operator cannot be factorised."""


class QuadratureWarning(UserWarning):
    """Evaluation point too close to a boundary for the panel quadrature."""


# -- panel integrals ------------------------------------------------------------------------


def planar_triangle_potential(points: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Exact ``integral_T |x - y|^-1 dS(y)`` for a unit density on planar triangles.

    ``points`` (M, 3) and ``triangles`` (M, 3, 3) are paired row by row. Uses
    the edge-logarithm plus solid-angle decomposition; valid for points on the
    triangle's plane (including its interior) and off it.
    """
    points = np.asarray(points, dtype=float)
    triangles = np.asarray(triangles, dtype=float)
    rel = triangles - points[:, None, :]
    cross = np.cross(triangles[:, 1] - triangles[:, 0], triangles[:, 2] - triangles[:, 0])
    twice_area = np.linalg.norm(cross, axis=1)
    scale = np.max(np.linalg.norm(triangles - np.roll(triangles, 1, axis=1), axis=2), axis=1)
    if np.any(twice_area <= 1e-14 * scale**2):
        raise ValueError("degenerate triangle in potential integral")
    normal = cross / twice_area[:, None]
    height = np.einsum("ij,ij->i", rel[:, 0], normal)
    dist = np.linalg.norm(rel, axis=2)

    total = np.zeros(len(points))
    for i in range(3):
        j = (i + 1) % 3
        edge = triangles[:, j] - triangles[:, i]
        length = np.linalg.norm(edge, axis=1)
        outward = np.cross(edge, normal) / length[:, None]
        offset = np.einsum("ij,ij->i", rel[:, i], outward)
        s = dist[:, i] + dist[:, j]
        # line integral of 1/R along the edge; s > length away from the edge itself
        with np.errstate(divide="ignore", invalid="ignore"):
            line = np.log((s + length) / (s - length))
        total += np.where(np.abs(offset) > 0, offset * line, 0.0)

    triple = np.einsum("ij,ij->i", rel[:, 0], np.cross(rel[:, 1], rel[:, 2]))
    denom = (
        dist[:, 0] * dist[:, 1] * dist[:, 2]
        + np.einsum("ij,ij->i", rel[:, 0], rel[:, 1]) * dist[:, 2]
        + np.einsum("ij,ij->i", rel[:, 1], rel[:, 2]) * dist[:, 0]
        + np.einsum("ij,ij->i", rel[:, 2], rel[:, 0]) * dist[:, 1]
    )
    solid_angle = 2.0 * np.arctan2(triple, denom)
    return total - height * solid_angle


def _closest_reference_point(points: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Reference coordinates (u, v) of the point of each flat triangle closest to ``points``."""
    p0 = triangles[:, 0]
    e1 = triangles[:, 1] - p0
    e2 = triangles[:, 2] - p0
    d = points - p0
    a11 = np.einsum("ij,ij->i", e1, e1)
    a12 = np.einsum("ij,ij->i", e1, e2)
    a22 = np.einsum("ij,ij->i", e2, e2)
    b1 = np.einsum("ij,ij->i", e1, d)
    b2 = np.einsum("ij,ij->i", e2, d)
    det = a11 * a22 - a12**2
    u = (a22 * b1 - a12 * b2) / det
    v = (a11 * b2 - a12 * b1) / det
    uv = np.column_stack([u, v])
    inside = (u >= 0) & (v >= 0) & (u + v <= 1)
    if np.all(inside):
        return uv

    # clamp onto the nearest edge segment
    ref = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    best = np.full(len(points), np.inf)
    best_uv = uv.copy()
    for i in range(3):
        j = (i + 1) % 3
        a = triangles[:, i]
        b = triangles[:, j]
        ab = b - a
        t = np.clip(np.einsum("ij,ij->i", points - a, ab) / np.einsum("ij,ij->i", ab, ab), 0.0, 1.0)
        dist = np.linalg.norm(a + t[:, None] * ab - points, axis=1)
        cand = ref[i] + t[:, None] * (ref[j] - ref[i])
        better = dist < best
        best = np.where(better, dist, best)
        best_uv = np.where(better[:, None], cand, best_uv)
    return np.where(inside[:, None], uv, best_uv)


def _duffy_rule(anchor: np.ndarray, order: int) -> tuple:
    """Reference points and weights of a Duffy rule singular at ``anchor``.

    ``anchor`` is (M, 2); returns points (M, 3*G*G, 2) and weights (M, 3*G*G)
    covering the reference triangle as three sub-triangles meeting at the anchor.
    """
    ref = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    gx, gw = _gauss01(order)
    xi, eta = np.meshgrid(gx, gx, indexing="ij")
    w = np.outer(gw, gw).ravel()
    xi = xi.ravel()
    eta = eta.ravel()
    pts, wts = [], []
    for i in range(3):
        a = ref[i]
        b = ref[(i + 1) % 3]
        sa = a[None, :] - anchor
        ba = b - a
        p = anchor[:, None, :] + xi[None, :, None] * sa[:, None, :] + (xi * eta)[None, :, None] * ba
        det = np.abs(sa[:, 0] * ba[1] - sa[:, 1] * ba[0])
        pts.append(p)
        wts.append(det[:, None] * (w * xi)[None, :])
    return np.concatenate(pts, axis=1), np.concatenate(wts, axis=1)


def curved_panel_potential(
    points: np.ndarray,
    triangles: np.ndarray,
    centers: np.ndarray,
    radii: np.ndarray,
    order: int = SELF_ORDER,
) -> np.ndarray:
    """``integral |x - y|^-1 dS(y)`` over curved spherical patches, row-paired.

    The patch is the radial projection of the flat triangle onto the sphere of
    the given centre and radius. Integration uses a Duffy rule anchored at the
    point of the flat triangle closest to ``x``, which removes the 1/R
    singularity when ``x`` lies on the patch.
    """
    points = np.asarray(points, dtype=float)
    p0 = triangles[:, 0]
    e1 = triangles[:, 1] - p0
    e2 = triangles[:, 2] - p0
    # the singular point of the patch maps back along the ray from the sphere centre
    normal = np.cross(e1, e2)
    ray = points - centers
    t = np.einsum("ij,ij->i", normal, p0 - centers) / np.einsum("ij,ij->i", normal, ray)
    anchor = _closest_reference_point(centers + t[:, None] * ray, triangles)
    uv, w = _duffy_rule(anchor, order)
    q = p0[:, None, :] + uv[..., :1] * e1[:, None, :] + uv[..., 1:] * e2[:, None, :] - centers[:, None, :]
    nq = np.linalg.norm(q, axis=-1)
    y = centers[:, None, :] + radii[:, None, None] * q / nq[..., None]
    jac = radii[:, None] ** 2 * np.abs(np.einsum("tqk,tk->tq", q, np.cross(e1, e2))) / nq**3
    r = np.linalg.norm(y - points[:, None, :], axis=-1)
    return np.sum(w * jac / r, axis=1)


def _squared_distances(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Pairwise squared distances via one matrix product (clipped at zero)."""
    d2 = np.einsum("ij,ij->i", x, x)[:, None] + np.einsum("ij,ij->i", y, y)[None, :] - 2.0 * (x @ y.T)
    return np.maximum(d2, 0.0)


# -- assembly --------------------------------------------------------------------------------


@dataclass(frozen=True)
class _Boundary:
    """Concatenated panel data for a list of meshes."""

    colloc: np.ndarray
    corners: np.ndarray
    centroids: np.ndarray
    diameters: np.ndarray
    areas: np.ndarray
    nodes: np.ndarray
    weights: np.ndarray
    sphere_center: np.ndarray
    sphere_radius: np.ndarray
    owner: np.ndarray
    panels: str

    @classmethod
    def from_meshes(cls, meshes: Sequence[SurfaceMesh], panels: str) -> "_Boundary":
        nodes, weights = zip(*(m.quadrature(panels) for m in meshes))
        return cls(
            colloc=np.concatenate([m.collocation_points(panels) for m in meshes]),
            corners=np.concatenate([m.corners for m in meshes]),
            centroids=np.concatenate([m.centroids for m in meshes]),
            diameters=np.concatenate([m.diameters for m in meshes]),
            areas=np.concatenate([m.panel_areas(panels) for m in meshes]),
            nodes=np.concatenate(nodes),
            weights=np.concatenate(weights),
            sphere_center=np.concatenate([np.tile(m.center, (m.n_triangles, 1)) for m in meshes]),
            sphere_radius=np.concatenate([np.full(m.n_triangles, m.radius) for m in meshes]),
            owner=np.concatenate([np.full(m.n_triangles, k) for k, m in enumerate(meshes)]),
            panels=panels,
        )

    def potential_rows(self, x: np.ndarray, self_index: Optional[np.ndarray] = None) -> np.ndarray:
        """Rows of ``integral_q |x_p - y|^-1 dS`` for points ``x``; no -1/(4 pi) factor."""
        m = len(x)
        origin = x.mean(axis=0)
        xs = x - origin
        out = np.zeros((m, len(self.areas)))
        for k in range(self.nodes.shape[1]):
            with np.errstate(divide="ignore"):
                out += self.weights[None, :, k] / np.sqrt(_squared_distances(xs, self.nodes[:, k, :] - origin))
        dist2 = _squared_distances(xs, self.centroids - origin)
        near = dist2 < (NEAR_DIAMETERS * self.diameters[None, :]) ** 2
        if self_index is not None:
            near[np.arange(m), self_index] = False
            out[np.arange(m), self_index] = self.near_integrals(x, self_index, SELF_ORDER)
        p, q = np.nonzero(near)
        if len(p):
            out[p, q] = self.near_integrals(x[p], q, NEAR_ORDER)
        return out

    def near_integrals(self, x: np.ndarray, q: np.ndarray, order: int) -> np.ndarray:
        if self.panels == "flat":
            return planar_triangle_potential(x, self.corners[q])
        return curved_panel_potential(
            x, self.corners[q], self.sphere_center[q], self.sphere_radius[q], order
        )


def _check_disjoint_meshes(meshes: Sequence[SurfaceMesh]) -> None:
    for i, a in enumerate(meshes):
        for b in meshes[i + 1:]:
            if np.linalg.norm(a.center - b.center) <= a.radius + b.radius:
                raise ValueError(f"meshes {a.owner} and {b.owner} intersect")


def assemble_single_layer(
    meshes: Sequence[SurfaceMesh],
    panels: str = "curved",
    workers: Optional[int] = None,
) -> np.ndarray:
    """Collocation matrix of the static single layer operator.

    Entry ``(p, q)`` approximates ``-1/(4 pi) integral_{panel q} |x_p - y|^-1 dS``.
    The matrix is not symmetrised; ``diag(areas) @ S`` is the quantity that is
    symmetric up to quadrature error. Row blocks are independent and may be
    assembled by ``workers`` threads.
    """
    _check_disjoint_meshes(meshes)
    boundary = _Boundary.from_meshes(meshes, panels)
    n = len(boundary.areas)
    S = np.empty((n, n))
    starts = list(range(0, n, ROW_BLOCK))

    def fill(start: int) -> None:
        rows = np.arange(start, min(start + ROW_BLOCK, n))
        S[rows] = boundary.potential_rows(boundary.colloc[rows], self_index=rows)

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(fill, starts))
    else:
        for start in starts:
            fill(start)
    S *= -1.0 / (4.0 * np.pi)
    return S


# -- solve -------------------------------------------------------------------------------------


@dataclass(frozen=True)
class DensitySet:
    """Layer densities ``psi_j`` solving ``S psi_j = indicator(boundary j)``.

    ``psi`` has one column per resonator, each defined over every panel of
    the whole boundary.
    """

    psi: np.ndarray
    meshes: tuple
    panels: str
    rcond: float

    @property
    def n_resonators(self) -> int:
        return self.psi.shape[1]

    def boundary(self) -> _Boundary:
        return _Boundary.from_meshes(self.meshes, self.panels)

    def owner(self) -> np.ndarray:
        return np.concatenate([np.full(m.n_triangles, k) for k, m in enumerate(self.meshes)])

    def areas(self) -> np.ndarray:
        return np.concatenate([m.panel_areas(self.panels) for m in self.meshes])


def indicator_matrix(meshes: Sequence[SurfaceMesh]) -> np.ndarray:
    owner = np.concatenate([np.full(m.n_triangles, k) for k, m in enumerate(meshes)])
    return (owner[:, None] == np.arange(len(meshes))[None, :]).astype(float)


def solve_densities(S: np.ndarray, meshes: Sequence[SurfaceMesh], panels: str = "curved") -> DensitySet:
    """Factorise ``S`` once (LU) and solve for all resonator indicators."""
    n = sum(m.n_triangles for m in meshes)
    if S.shape != (n, n):
        raise ValueError(f"matrix shape {S.shape} does not match {n} panels")
    anorm = np.linalg.norm(S, 1)
    with warnings.catch_warnings():
        warnings.simplefilter("error", sla.LinAlgWarning)
        try:
            lu, piv = sla.lu_factor(S, check_finite=True)
        except (sla.LinAlgWarning, np.linalg.LinAlgError, ValueError) as exc:
            raise SingularOperatorError(f"single layer factorisation failed: {exc}") from exc
    rcond, info = lapack.dgecon(lu, anorm, norm="1")
    if info != 0 or not rcond > RCOND_MIN:
        raise SingularOperatorError(f"single layer operator ill-conditioned: rcond estimate {rcond:.3e}")
    psi = sla.lu_solve((lu, piv), indicator_matrix(meshes))
    logger.debug("solved %d panels, rcond %.3e", n, rcond)
    return DensitySet(psi, tuple(meshes), panels, float(rcond))


# -- capacitance ---------------------------------------------------------------------------------


@dataclass(frozen=True)
class BemCapacitance:
    """Boundary-element capacitance matrix and its diagnostics.

    ``matrix`` is the symmetrised ``(raw + raw.T) / 2``; ``asymmetry`` is
    ``||raw - raw.T||_F / ||raw||_F`` before symmetrisation.
    """

    matrix: np.ndarray
    raw: np.ndarray
    asymmetry: float
    densities: DensitySet
    refinement: int


def capacitance_from_densities(densities: DensitySet) -> np.ndarray:
    """Raw ``C_ij = -sum_{t on boundary i} area_t psi_j(t)``."""
    weighted = densities.areas()[:, None] * densities.psi
    return -(indicator_matrix(densities.meshes).T @ weighted)


def capacitance_matrix_bem(
    array,
    refinement: int = 3,
    panels: str = "curved",
    workers: Optional[int] = None,
) -> BemCapacitance:
    """Capacitance matrix of a resonator array by collocation BEM."""
    meshes = mesh_array(array, refinement)
    S = assemble_single_layer(meshes, panels, workers)
    densities = solve_densities(S, meshes, panels)
    raw = capacitance_from_densities(densities)
    C = 0.5 * (raw + raw.T)
    asym = float(np.linalg.norm(raw - raw.T) / np.linalg.norm(raw))
    return BemCapacitance(C, raw, asym, densities, int(refinement))


# -- field evaluation ------------------------------------------------------------------------------


def near_surface(densities: DensitySet, points: np.ndarray) -> np.ndarray:
    """True where a point lies within one triangle diameter of some boundary."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    flags = np.zeros(len(points), dtype=bool)
    for m in densities.meshes:
        gap = np.abs(np.linalg.norm(points - m.center, axis=1) - m.radius)
        flags |= gap < np.max(m.diameters)
    return flags


def evaluate_potential(densities: DensitySet, weights, points) -> np.ndarray:
    """``sum_i weights_i * S[psi_i](x)`` at points off the boundary.

    Uses the far-field panel quadrature only. Points within a triangle
    diameter of the surface trigger a :class:`QuadratureWarning`.
    """
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (densities.n_resonators,):
        raise ValueError(f"need {densities.n_resonators} weights, got shape {weights.shape}")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if np.any(near_surface(densities, pts)):
        warnings.warn("evaluation point within one triangle diameter of a boundary", QuadratureWarning, stacklevel=2)
    boundary = densities.boundary()
    density = densities.psi @ weights
    out = np.empty(len(pts))
    for start in range(0, len(pts), ROW_BLOCK):
        block = pts[start:start + ROW_BLOCK]
        acc = np.zeros(len(block))
        for k in range(boundary.nodes.shape[1]):
            diff = block[:, None, :] - boundary.nodes[None, :, k, :]
            r = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
            acc += (boundary.weights[None, :, k] / r) @ density
        out[start:start + len(block)] = -acc / (4.0 * np.pi)
    return out if np.ndim(points) > 1 else out[0]
