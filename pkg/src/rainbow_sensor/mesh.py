"""Icosphere surface meshes for spherical resonators."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np

# Strang-Fix 6-point rule, exact for degree 4; barycentric (l0, l1, l2), weights sum to 1.
_A1, _B1, _W1 = 0.445948490915965, 0.108103018168070, 0.223381589678011
_A2, _B2, _W2 = 0.091576213509771, 0.816847572980459, 0.109951743655322
SIX_POINT_BARY = np.array(
    [
        [_A1, _A1, _B1],
        [_A1, _B1, _A1],
        [_B1, _A1, _A1],
        [_A2, _A2, _B2],
        [_A2, _B2, _A2],
        [_B2, _A2, _A2],
    ]
)
SIX_POINT_WEIGHTS = np.array([_W1] * 3 + [_W2] * 3)

PANEL_MODELS = ("curved", "flat")


@lru_cache(maxsize=None)
def _unit_icosphere(level: int) -> tuple:
    t = (1.0 + 5.0**0.5) / 2.0
    verts = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    vertices = [np.array(v, dtype=float) / np.linalg.norm(v) for v in verts]
    for _ in range(level):
        midpoint = {}

        def mid(a, b):
            key = (a, b) if a < b else (b, a)
            if key not in midpoint:
                m = vertices[a] + vertices[b]
                vertices.append(m / np.linalg.norm(m))
                midpoint[key] = len(vertices) - 1
            return midpoint[key]

        refined = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            refined += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = refined
    v = np.array(vertices)
    f = np.array(faces, dtype=np.int64)
    # orient outward
    tri = v[f]
    normal = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    inward = np.einsum("ij,ij->i", normal, tri.mean(axis=1)) < 0
    f[inward] = f[inward][:, ::-1]
    v.setflags(write=False)
    f.setflags(write=False)
    return v, f


@dataclass(frozen=True)
class SurfaceMesh:
    """Triangulated sphere boundary of one resonator.

    Vertices lie on the sphere; triangles are oriented with outward normals.
    The flat-panel quantities (``centroids``, ``areas``) describe the
    inscribed polyhedron. The curved-panel quantities describe the spherical
    patches obtained by projecting each flat triangle radially onto the sphere.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    center: np.ndarray
    radius: float
    owner: int = 0

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def corners(self) -> np.ndarray:
        """(T, 3, 3) triangle corner coordinates."""
        return self.vertices[self.triangles]

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.corners.mean(axis=1)

    @cached_property
    def normals(self) -> np.ndarray:
        c = self.corners
        n = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
        return n / np.linalg.norm(n, axis=1)[:, None]

    @cached_property
    def areas(self) -> np.ndarray:
        c = self.corners
        return 0.5 * np.linalg.norm(np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]), axis=1)

    @cached_property
    def diameters(self) -> np.ndarray:
        c = self.corners
        return np.max(np.linalg.norm(c - np.roll(c, 1, axis=1), axis=2), axis=1)

    @cached_property
    def projected_centroids(self) -> np.ndarray:
        rel = self.centroids - self.center
        return self.center + self.radius * rel / np.linalg.norm(rel, axis=1)[:, None]

    @cached_property
    def curved_nodes(self) -> tuple:
        """Six-point quadrature on each curved patch: nodes (T, 6, 3), weights (T, 6)."""
        nodes, weights = project_to_sphere(
            self.corners, SIX_POINT_BARY[:, 1:], self.center, self.radius
        )
        return nodes, 0.5 * weights * SIX_POINT_WEIGHTS[None, :]

    @cached_property
    def curved_areas(self) -> np.ndarray:
        # The Jacobian of the radial projection is smooth; a degree-4 rule on each
        # of the four midpoint sub-triangles gives areas to ~1e-10 relative.
        sub = _midpoint_subtriangles(SIX_POINT_BARY[:, 1:])
        _, w = project_to_sphere(self.corners, sub, self.center, self.radius)
        return (w * np.tile(SIX_POINT_WEIGHTS, 4)[None, :] / 8.0).sum(axis=1)

    def collocation_points(self, panels: str = "curved") -> np.ndarray:
        _check_panels(panels)
        return self.projected_centroids if panels == "curved" else self.centroids

    def panel_areas(self, panels: str = "curved") -> np.ndarray:
        _check_panels(panels)
        return self.curved_areas if panels == "curved" else self.areas

    def quadrature(self, panels: str = "curved") -> tuple:
        """Far-field quadrature nodes (T, Q, 3) and weights (T, Q)."""
        _check_panels(panels)
        if panels == "curved":
            return self.curved_nodes
        return self.centroids[:, None, :], self.areas[:, None]

    def total_area(self) -> float:
        return float(self.areas.sum())


def _check_panels(panels: str) -> None:
    if panels not in PANEL_MODELS:
        raise ValueError(f"panels must be one of {PANEL_MODELS}, got {panels!r}")


def _midpoint_subtriangles(uv: np.ndarray) -> np.ndarray:
    """Map reference points ``uv`` into each of the four midpoint sub-triangles."""
    corners = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    m01, m12, m20 = (corners[0] + corners[1]) / 2, (corners[1] + corners[2]) / 2, (corners[2] + corners[0]) / 2
    subs = [
        (corners[0], m01, m20),
        (m01, corners[1], m12),
        (m20, m12, corners[2]),
        (m12, m20, m01),
    ]
    out = []
    for a, b, c in subs:
        out.append(a + uv[:, :1] * (b - a) + uv[:, 1:] * (c - a))
    return np.concatenate(out)


def project_to_sphere(corners: np.ndarray, uv: np.ndarray, center, radius: float) -> tuple:
    """Map reference-triangle points to the sphere through each flat triangle.

    Parameters
    ----------
    corners : (T, 3, 3) flat triangles inscribed in the sphere.
    uv : (Q, 2) or (T, Q, 2) reference coordinates.

    Returns
    -------
    points : (T, Q, 3) points on the sphere.
    jacobian : (T, Q) surface element per unit reference area.
    """
    p0 = corners[:, 0, :]
    e1 = corners[:, 1, :] - p0
    e2 = corners[:, 2, :] - p0
    if uv.ndim == 2:
        uv = np.broadcast_to(uv, (len(corners),) + uv.shape)
    q = p0[:, None, :] + uv[..., :1] * e1[:, None, :] + uv[..., 1:] * e2[:, None, :] - center
    nq = np.linalg.norm(q, axis=-1)
    cross = np.cross(e1, e2)
    points = center + radius * q / nq[..., None]
    jac = radius**2 * np.abs(np.einsum("tqk,tk->tq", q, cross)) / nq**3
    return points, jac


def mesh_sphere(center: Sequence[float], radius: float, refinement: int, owner: int = 0) -> SurfaceMesh:
    """Icosahedron subdivided ``refinement`` times and projected to the sphere.

    The mesh has ``20 * 4**refinement`` triangles.
    """
    if refinement < 0:
        raise ValueError(f"refinement must be >= 0, got {refinement}")
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius}")
    unit_v, faces = _unit_icosphere(int(refinement))
    center = np.asarray(center, dtype=float)
    vertices = center + radius * unit_v
    vertices.setflags(write=False)
    return SurfaceMesh(vertices, faces, center, float(radius), owner)


def mesh_array(array, refinement: int) -> list:
    return [mesh_sphere(c, r, refinement, owner=i) for i, (c, r) in enumerate(zip(array.centers, array.radii))]


def write_obj(meshes: Sequence[SurfaceMesh], path) -> None:
    """Write meshes as one OBJ file, one object group per resonator."""
    lines = []
    offset = 1
    for mesh in meshes:
        lines.append(f"o resonator_{mesh.owner + 1}")
        lines += [f"v {x:.12g} {y:.12g} {z:.12g}" for x, y, z in mesh.vertices]
        lines += [f"f {a + offset} {b + offset} {c + offset}" for a, b, c in mesh.triangles]
        offset += len(mesh.vertices)
    Path(path).write_text("\n".join(lines) + "\n")
