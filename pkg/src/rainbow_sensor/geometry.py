"""Resonator arrays: graded and dilute layouts, perturbations, config files.

All resonators are spheres. Arrays are immutable; every operation returns a
new :class:`ResonatorArray` and re-validates disjointness.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence

import numpy as np

WATER_SOUND_SPEED = 1480.0
AIR_SOUND_SPEED = 343.0


class GeometryError(ValueError):
    """Invalid resonator layout (overlap, bad radii, bad perturbation)."""


class ConfigError(ValueError):
    """Malformed array/material configuration. ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Material:
    """Material constants shared by every resonator.

    Attributes
    ----------
    delta : float
        Density contrast between resonator interior and background.
    v : float
        Wave speed inside the resonators (m/s).
    v0 : float
        Wave speed in the background medium (m/s).
    """

    delta: float
    v: float
    v0: float

    def __post_init__(self):
        for name in ("delta", "v", "v0"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise GeometryError(f"material {name} must be positive, got {value!r}")

    @classmethod
    def nondimensional(cls, delta: float = 1e-3) -> "Material":
        return cls(delta=delta, v=1.0, v0=1.0)

    @classmethod
    def air_in_water(cls, delta: float = 1e-3) -> "Material":
        return cls(delta=delta, v=AIR_SOUND_SPEED, v0=WATER_SOUND_SPEED)

    @classmethod
    def water(cls, delta: float = 1e-3) -> "Material":
        return cls(delta=delta, v=WATER_SOUND_SPEED, v0=WATER_SOUND_SPEED)

    def to_dict(self) -> dict:
        return {"delta": self.delta, "v": self.v, "v0": self.v0}


@dataclass(frozen=True)
class ResonatorArray:
    """An ordered collection of disjoint spherical resonators.

    ``labels`` are the 1-based indices of the resonators in the array they
    were derived from; they survive removal so reports can refer back to the
    original device. When ``epsilon`` is set the array is dilute and
    ``centers == reference_centers / epsilon`` exactly.
    """

    centers: np.ndarray
    radii: np.ndarray
    material: Material = field(default_factory=Material.nondimensional)
    epsilon: Optional[float] = None
    reference_centers: Optional[np.ndarray] = None
    labels: tuple = ()

    def __post_init__(self):
        centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        radii = np.atleast_1d(np.asarray(self.radii, dtype=float))
        n = len(radii)
        if n == 0:
            raise GeometryError("array must contain at least one resonator")
        if centers.shape != (n, 3):
            raise GeometryError(f"centers shape {centers.shape} != ({n}, 3)")
        if not np.all(np.isfinite(centers)) or not np.all(np.isfinite(radii)):
            raise GeometryError("non-finite centers or radii")
        if np.any(radii <= 0):
            raise GeometryError("radii must be positive")
        labels = tuple(int(i) for i in self.labels) if self.labels else tuple(range(1, n + 1))
        if len(labels) != n:
            raise GeometryError(f"{len(labels)} labels for {n} resonators")
        if any(b <= a for a, b in zip(labels, labels[1:])):
            raise GeometryError("labels must be strictly increasing")

        reference = None
        if self.epsilon is not None:
            if not (self.epsilon > 0):
                raise GeometryError(f"epsilon must be positive, got {self.epsilon!r}")
            if self.reference_centers is None:
                raise GeometryError("dilute array needs reference_centers")
            reference = np.atleast_2d(np.asarray(self.reference_centers, dtype=float))
            if reference.shape != (n, 3):
                raise GeometryError(f"reference_centers shape {reference.shape} != ({n}, 3)")
            if not np.array_equal(centers, reference / self.epsilon):
                raise GeometryError("centers must equal reference_centers / epsilon")
        elif self.reference_centers is not None:
            raise GeometryError("reference_centers given without epsilon")

        object.__setattr__(self, "centers", _frozen(centers))
        object.__setattr__(self, "radii", _frozen(radii))
        object.__setattr__(self, "labels", labels)
        if reference is not None:
            object.__setattr__(self, "reference_centers", _frozen(reference))
        _check_disjoint(self.centers, self.radii)

    def __len__(self) -> int:
        return len(self.radii)

    @property
    def n(self) -> int:
        return len(self.radii)

    @property
    def is_dilute(self) -> bool:
        return self.epsilon is not None

    @property
    def volumes(self) -> np.ndarray:
        return 4.0 / 3.0 * np.pi * self.radii**3

    def pairwise_distances(self) -> np.ndarray:
        diff = self.centers[:, None, :] - self.centers[None, :, :]
        return np.linalg.norm(diff, axis=-1)

    def scaled(self, factor: float) -> "ResonatorArray":
        """Uniformly dilate every length by ``factor`` (drops dilute metadata)."""
        return ResonatorArray(
            self.centers * factor, self.radii * factor, self.material, labels=self.labels
        )

    def with_material(self, material: Material) -> "ResonatorArray":
        return ResonatorArray(
            self.centers, self.radii, material, self.epsilon, self.reference_centers, self.labels
        )

    def to_config(self) -> dict:
        if self.is_dilute:
            body = {
                "dilute": {
                    "anchors": self.reference_centers.tolist(),
                    "radii": self.radii.tolist(),
                    "epsilon": self.epsilon,
                }
            }
        else:
            body = {
                "spheres": [
                    {"center": c.tolist(), "radius": float(r)}
                    for c, r in zip(self.centers, self.radii)
                ]
            }
        body["material"] = self.material.to_dict()
        return body


def _check_disjoint(centers: np.ndarray, radii: np.ndarray) -> None:
    n = len(radii)
    if n < 2:
        return
    diff = centers[:, None, :] - centers[None, :, :]
    dist = np.linalg.norm(diff, axis=-1)
    reach = radii[:, None] + radii[None, :]
    iu = np.triu_indices(n, 1)
    bad = dist[iu] <= reach[iu]
    if np.any(bad):
        k = int(np.argmax(bad))
        i, j = iu[0][k], iu[1][k]
        raise GeometryError(
            f"resonators {i + 1} and {j + 1} overlap: distance {dist[i, j]:.6g} "
            f"<= radius sum {reach[i, j]:.6g}"
        )


def make_graded_array(
    n: int,
    first_radius: float,
    growth: float,
    spacing: float,
    material: Optional[Material] = None,
) -> ResonatorArray:
    """Collinear spheres along x with geometrically growing radii.

    Radius ``i`` (1-based) is ``first_radius * growth**(i-1)``; the gap
    between sphere ``i`` and ``i+1`` is ``spacing * r_i``. The first sphere
    is centred at the origin.
    """
    if n < 1:
        raise GeometryError(f"n must be >= 1, got {n}")
    if not first_radius > 0:
        raise GeometryError(f"first_radius must be positive, got {first_radius}")
    if not growth >= 1:
        raise GeometryError(f"growth must be >= 1, got {growth}")
    if not spacing > 0:
        raise GeometryError(f"spacing must be positive, got {spacing}")
    radii = first_radius * growth ** np.arange(n)
    x = np.zeros(n)
    for i in range(1, n):
        x[i] = x[i - 1] + radii[i - 1] * (1.0 + spacing) + radii[i]
    centers = np.column_stack([x, np.zeros(n), np.zeros(n)])
    return ResonatorArray(centers, radii, material or Material.nondimensional())


def graded_array_for_length(
    n: int,
    total_length: float,
    growth: float,
    spacing: float,
    material: Optional[Material] = None,
) -> ResonatorArray:
    """Graded array whose extent (left edge to right edge) is ``total_length``."""
    if not total_length > 0:
        raise GeometryError(f"total_length must be positive, got {total_length}")
    powers = growth ** np.arange(n, dtype=float)
    unit_length = 2.0 * powers.sum() + spacing * powers[:-1].sum()
    return make_graded_array(n, total_length / unit_length, growth, spacing, material)


def make_dilute_array(
    anchors: Sequence[Sequence[float]],
    base_radii,
    epsilon: float,
    material: Optional[Material] = None,
) -> ResonatorArray:
    """Array of spheres ``B_i + z_i / epsilon``.

    ``base_radii`` may be a scalar (identical resonators) or one radius per
    anchor.
    """
    z = np.atleast_2d(np.asarray(anchors, dtype=float))
    if z.shape[1] != 3:
        raise GeometryError(f"anchors must be 3-vectors, got shape {z.shape}")
    if not epsilon > 0:
        raise GeometryError(f"epsilon must be positive, got {epsilon}")
    radii = np.broadcast_to(np.asarray(base_radii, dtype=float), (len(z),)).copy()
    if len(z) > 1:
        d = np.linalg.norm(z[:, None] - z[None], axis=-1)
        np.fill_diagonal(d, np.inf)
        if np.min(d) == 0:
            raise GeometryError("anchors must be distinct")
    return ResonatorArray(z / epsilon, radii, material or Material.nondimensional(), epsilon, z)


def as_dilute(array: ResonatorArray, epsilon: float = 1.0) -> ResonatorArray:
    """Attach dilute metadata ``z_i = epsilon * center_i`` to an arbitrary array."""
    if array.is_dilute and array.epsilon == epsilon:
        return array
    z = array.centers * epsilon
    return ResonatorArray(z / epsilon, array.radii, array.material, epsilon, z, array.labels)


@dataclass(frozen=True)
class PerturbationSpec:
    """One of: per-resonator size factors, anchor translations, or a removal set.

    ``removed`` holds 1-based positions in the array being perturbed.
    """

    kind: str
    alphas: Optional[np.ndarray] = None
    betas: Optional[np.ndarray] = None
    removed: Optional[tuple] = None

    def __post_init__(self):
        payload = {
            "size": self.alphas is not None,
            "position": self.betas is not None,
            "removal": self.removed is not None,
        }
        if self.kind not in payload:
            raise GeometryError(f"unknown perturbation kind {self.kind!r}")
        if sum(payload.values()) != 1 or not payload[self.kind]:
            raise GeometryError(f"{self.kind} perturbation needs exactly its own payload")
        if self.alphas is not None:
            alphas = _frozen(np.atleast_1d(self.alphas))
            if np.any(alphas <= -1):
                raise GeometryError("size factors must satisfy alpha > -1")
            object.__setattr__(self, "alphas", alphas)
        if self.betas is not None:
            betas = _frozen(np.atleast_2d(self.betas))
            if betas.shape[1] != 3:
                raise GeometryError(f"betas must be 3-vectors, got shape {betas.shape}")
            object.__setattr__(self, "betas", betas)
        if self.removed is not None:
            removed = tuple(sorted({int(i) for i in self.removed}))
            if not removed:
                raise GeometryError("removal set must be nonempty")
            object.__setattr__(self, "removed", removed)

    @classmethod
    def size(cls, alphas) -> "PerturbationSpec":
        return cls("size", alphas=np.asarray(alphas, dtype=float))

    @classmethod
    def position(cls, betas) -> "PerturbationSpec":
        return cls("position", betas=np.asarray(betas, dtype=float))

    @classmethod
    def removal(cls, indices: Iterable[int]) -> "PerturbationSpec":
        return cls("removal", removed=tuple(indices))


def apply_perturbation(array: ResonatorArray, spec: PerturbationSpec) -> ResonatorArray:
    """Return the perturbed array; raises :class:`GeometryError` on overlap."""
    n = array.n
    if spec.kind == "size":
        if len(spec.alphas) != n:
            raise GeometryError(f"{len(spec.alphas)} size factors for {n} resonators")
        radii = array.radii * (1.0 + spec.alphas)
        return ResonatorArray(
            array.centers, radii, array.material, array.epsilon, array.reference_centers, array.labels
        )
    if spec.kind == "position":
        if spec.betas.shape != (n, 3):
            raise GeometryError(f"betas shape {spec.betas.shape} != ({n}, 3)")
        if array.is_dilute:
            z = array.reference_centers + spec.betas
            return ResonatorArray(z / array.epsilon, array.radii, array.material, array.epsilon, z, array.labels)
        return ResonatorArray(array.centers + spec.betas, array.radii, array.material, labels=array.labels)

    removed = spec.removed
    if removed[0] < 1 or removed[-1] > n:
        raise GeometryError(f"removal indices {removed} outside 1..{n}")
    if len(removed) == n:
        raise GeometryError("cannot remove every resonator")
    keep = np.setdiff1d(np.arange(n), np.asarray(removed) - 1)
    reference = None if array.reference_centers is None else array.reference_centers[keep]
    return ResonatorArray(
        array.centers[keep],
        array.radii[keep],
        array.material,
        array.epsilon,
        reference,
        tuple(array.labels[i] for i in keep),
    )


def random_perturbation(kind: str, n: int, sigma: float, seed=None) -> PerturbationSpec:
    """I.i.d. zero-mean Gaussian size factors or translation vectors.

    ``seed`` is anything accepted by :func:`numpy.random.default_rng`,
    including a ``Generator``.
    """
    if not sigma >= 0:
        raise GeometryError(f"sigma must be >= 0, got {sigma}")
    rng = np.random.default_rng(seed)
    if kind == "size":
        return PerturbationSpec.size(rng.normal(0.0, sigma, size=n) if sigma > 0 else np.zeros(n))
    if kind == "position":
        return PerturbationSpec.position(
            rng.normal(0.0, sigma, size=(n, 3)) if sigma > 0 else np.zeros((n, 3))
        )
    raise GeometryError(f"random perturbations exist only for size/position, not {kind!r}")


# -- config files ---------------------------------------------------------------------------


def _number(mapping: Mapping, key: str, path: str) -> float:
    if key not in mapping:
        raise ConfigError(f"{path}.{key}", "missing")
    value = mapping[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}.{key}", f"expected a number, got {value!r}")
    return float(value)


def _vector(value: Any, path: str) -> list:
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise ConfigError(path, f"expected a 3-vector, got {value!r}")
    if any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in value):
        raise ConfigError(path, f"expected numbers, got {value!r}")
    return [float(x) for x in value]


def material_from_config(config: Mapping) -> Material:
    if "material" not in config:
        return Material.nondimensional()
    block = config["material"]
    if not isinstance(block, Mapping):
        raise ConfigError("material", "expected an object")
    try:
        return Material(
            _number(block, "delta", "material"),
            _number(block, "v", "material"),
            _number(block, "v0", "material"),
        )
    except GeometryError as exc:
        raise ConfigError("material", str(exc)) from exc


def array_from_config(config: Mapping) -> ResonatorArray:
    """Build an array from the JSON-compatible config schema.

    Exactly one of ``spheres``, ``graded`` or ``dilute`` must be present,
    optionally with ``material``.
    """
    if not isinstance(config, Mapping):
        raise ConfigError("<root>", "expected an object")
    kinds = [k for k in ("spheres", "graded", "dilute") if k in config]
    if len(kinds) != 1:
        raise ConfigError("<root>", "need exactly one of 'spheres', 'graded', 'dilute'")
    unknown = set(config) - {"spheres", "graded", "dilute", "material"}
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown key")
    material = material_from_config(config)
    kind = kinds[0]
    block = config[kind]
    try:
        if kind == "spheres":
            if not isinstance(block, list) or not block:
                raise ConfigError("spheres", "expected a nonempty list")
            centers, radii = [], []
            for i, item in enumerate(block):
                path = f"spheres[{i}]"
                if not isinstance(item, Mapping):
                    raise ConfigError(path, "expected an object")
                if "center" not in item:
                    raise ConfigError(f"{path}.center", "missing")
                centers.append(_vector(item["center"], f"{path}.center"))
                radii.append(_number(item, "radius", path))
            return ResonatorArray(np.array(centers), np.array(radii), material)
        if kind == "graded":
            if not isinstance(block, Mapping):
                raise ConfigError("graded", "expected an object")
            n = _number(block, "n", "graded")
            if n != int(n):
                raise ConfigError("graded.n", f"expected an integer, got {n}")
            spacing = _number(block, "spacing", "graded")
            growth = _number(block, "growth", "graded")
            if "total_length" in block:
                return graded_array_for_length(
                    int(n), _number(block, "total_length", "graded"), growth, spacing, material
                )
            return make_graded_array(
                int(n), _number(block, "first_radius", "graded"), growth, spacing, material
            )
        if not isinstance(block, Mapping):
            raise ConfigError("dilute", "expected an object")
        if "anchors" not in block or not isinstance(block["anchors"], list) or not block["anchors"]:
            raise ConfigError("dilute.anchors", "expected a nonempty list")
        anchors = [_vector(a, f"dilute.anchors[{i}]") for i, a in enumerate(block["anchors"])]
        if "radii" not in block:
            raise ConfigError("dilute.radii", "missing")
        radii = block["radii"]
        if isinstance(radii, list):
            if len(radii) != len(anchors):
                raise ConfigError("dilute.radii", f"{len(radii)} radii for {len(anchors)} anchors")
            radii = [_number({"r": r}, "r", "dilute.radii") for r in radii]
        else:
            radii = _number(block, "radii", "dilute")
        return make_dilute_array(anchors, radii, _number(block, "epsilon", "dilute"), material)
    except GeometryError as exc:
        raise ConfigError(kind, str(exc)) from exc


def load_array_config(path) -> ResonatorArray:
    text = Path(path).read_text()
    try:
        config = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON: {exc}") from exc
    return array_from_config(config)
