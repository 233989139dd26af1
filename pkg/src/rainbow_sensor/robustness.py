"""Stability of the resonances under size/position perturbations and removal.

Eigenvalues before and after a perturbation are always paired by ascending
order.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .capacitance import (
    GeneralizedCapacitanceMatrix,
    dilute_gcm,
    gcm_from_bem,
    sphere_capacitance,
    sphere_volume,
)
from .geometry import (
    GeometryError,
    Material,
    PerturbationSpec,
    ResonatorArray,
    apply_perturbation,
    as_dilute,
    make_dilute_array,
    random_perturbation,
)
from .spectral import Spectrum, compute_spectrum, eigendecompose

logger = logging.getLogger(__name__)

WH_RTOL = 1e-12
INTERLACE_RTOL = 1e-12
GAP_RTOL = 1e-8


class NearDegenerateError(ValueError):
    """Eigenvalue gap below tolerance; first-order vector formula undefined."""


class InadmissibleScalingError(ValueError):
    """The large-array constant violates the Gershgorin admissibility inequality."""

    def __init__(self, value: float):
        super().__init__(f"admissibility quantity {value:.6g} is not < 1")
        self.value = value


def _values(m) -> np.ndarray:
    return m.values if isinstance(m, GeneralizedCapacitanceMatrix) else np.asarray(m, dtype=float)


# -- perturbed dilute matrices ------------------------------------------------------------------


@dataclass(frozen=True)
class PerturbedMatrix:
    """Exact perturbed matrix, exact correction ``after - before`` and its linearisation."""

    before: GeneralizedCapacitanceMatrix
    after: GeneralizedCapacitanceMatrix
    correction: np.ndarray
    first_order: np.ndarray
    array: ResonatorArray


def _require_dilute(array: ResonatorArray) -> None:
    if not array.is_dilute:
        raise GeometryError("perturbation formulas need an epsilon-dilute array")


def perturbed_gcm_size(array: ResonatorArray, alphas) -> PerturbedMatrix:
    """Dilute matrix after scaling resonator ``i`` by ``1 + alpha_i``.

    The first-order correction has diagonal ``-2 alpha_i C_ii`` and
    off-diagonal ``-(alpha_i + alpha_j)/2 * C_ij``.
    """
    _require_dilute(array)
    spec = PerturbationSpec.size(alphas)
    perturbed = apply_perturbation(array, spec)
    before = dilute_gcm(array)
    after = dilute_gcm(perturbed)
    a = spec.alphas
    first = -0.5 * (a[:, None] + a[None, :]) * before.values
    np.fill_diagonal(first, -2.0 * a * np.diag(before.values))
    return PerturbedMatrix(before, after, after.values - before.values, first, perturbed)


def perturbed_gcm_position(array: ResonatorArray, betas) -> PerturbedMatrix:
    """Dilute matrix after translating anchor ``z_i`` by ``beta_i``."""
    _require_dilute(array)
    spec = PerturbationSpec.position(betas)
    perturbed = apply_perturbation(array, spec)
    before = dilute_gcm(array)
    after = dilute_gcm(perturbed)
    z = array.reference_centers
    b = spec.betas
    dz = z[:, None, :] - z[None, :, :]
    db = b[:, None, :] - b[None, :, :]
    dist = np.linalg.norm(dz, axis=-1)
    np.fill_diagonal(dist, 1.0)
    cap = sphere_capacitance(array.radii)
    vol = array.volumes
    first = (
        array.epsilon
        * np.einsum("ijk,ijk->ij", db, dz)
        * np.outer(cap, cap)
        / (4.0 * np.pi * dist**3 * np.sqrt(np.outer(vol, vol)))
    )
    np.fill_diagonal(first, 0.0)
    return PerturbedMatrix(before, after, after.values - before.values, first, perturbed)


# -- eigenvalue bounds ----------------------------------------------------------------------------


@dataclass(frozen=True)
class PerturbationReport:
    """Eigenvalue pairing and bound checks for one perturbation.

    ``bound_ok`` is the Wielandt-Hoffman check ``wh_lhs <= frobenius**2`` with
    slack ``WH_RTOL * ||before||_F**2``; ``weyl_ok`` checks that every shift
    lies between the extreme eigenvalues of the correction.
    """

    gcm_before: np.ndarray
    gcm_after: np.ndarray
    correction: np.ndarray
    lambda_pairs: np.ndarray
    frobenius: float
    wh_lhs: float
    bound_ok: bool
    weyl_ok: bool
    omega_pairs: Optional[np.ndarray] = None


def wielandt_hoffman_check(before, after, correction=None, material: Optional[Material] = None) -> PerturbationReport:
    A = _values(before)
    B = _values(after)
    if A.shape != B.shape or A.shape[0] != A.shape[1]:
        raise ValueError(f"size mismatch: {A.shape} vs {B.shape}")
    E = B - A if correction is None else np.asarray(correction, dtype=float)
    if E.shape != A.shape:
        raise ValueError(f"correction shape {E.shape} != {A.shape}")
    lam_a = np.linalg.eigvalsh(A)
    lam_b = np.linalg.eigvalsh(B)
    lhs = float(np.sum((lam_a - lam_b) ** 2))
    frob = float(np.linalg.norm(E))
    slack = WH_RTOL * float(np.linalg.norm(A)) ** 2
    e_lam = np.linalg.eigvalsh(0.5 * (E + E.T))
    shift = lam_b - lam_a
    weyl_slack = WH_RTOL * float(np.linalg.norm(A))
    weyl_ok = bool(np.all(shift >= e_lam[0] - weyl_slack) and np.all(shift <= e_lam[-1] + weyl_slack))
    omega_pairs = None
    if material is not None and isinstance(before, GeneralizedCapacitanceMatrix) and isinstance(after, GeneralizedCapacitanceMatrix):
        s0 = compute_spectrum(before, material)
        s1 = compute_spectrum(after, material)
        omega_pairs = np.column_stack([s0.omegas, s1.omegas])
    return PerturbationReport(
        A, B, E, np.column_stack([lam_a, lam_b]), frob, lhs, lhs <= frob**2 + slack, weyl_ok, omega_pairs
    )


@dataclass(frozen=True)
class FrequencyShift:
    """Per-mode frequency shifts and their ratio to ``sqrt(delta (size + eps^2))``."""

    shifts: np.ndarray
    re_shifts: np.ndarray
    im_shifts: np.ndarray
    scale: float
    ratios: np.ndarray


def frequency_shift_bound(before: Spectrum, after: Spectrum, size: float, epsilon: float = 0.0) -> FrequencyShift:
    """Compare resonances paired by ascending eigenvalue.

    ``size`` is the perturbation magnitude (alpha or beta); ``epsilon`` the
    diluteness parameter.
    """
    if before.n != after.n:
        raise ValueError(f"spectra of different sizes: {before.n} vs {after.n}")
    if before.material != after.material:
        raise ValueError("spectra computed with different materials")
    diff = after.omegas - before.omegas
    scale = math.sqrt(before.material.delta * (abs(size) + epsilon**2))
    shifts = np.abs(diff)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = shifts / scale if scale > 0 else np.full_like(shifts, np.nan)
    return FrequencyShift(shifts, np.abs(diff.real), np.abs(diff.imag), scale, ratios)


# -- eigenvectors ------------------------------------------------------------------------------------


@dataclass(frozen=True)
class EigenvectorApproximation:
    """First-order perturbed eigenvectors (columns, not renormalised) and the exact ones."""

    approx: np.ndarray
    exact: np.ndarray
    lambdas_before: np.ndarray
    errors: np.ndarray


def gap_tolerance(matrix) -> float:
    return GAP_RTOL * float(np.linalg.norm(_values(matrix), 2))


def eigvec_first_order(gcm_before, correction) -> EigenvectorApproximation:
    A = _values(gcm_before)
    G = np.asarray(correction, dtype=float)
    lam, vec = eigendecompose(A)
    if len(lam) > 1 and np.min(np.diff(lam)) < gap_tolerance(A):
        raise NearDegenerateError(
            f"near-degenerate spectrum: gap {np.min(np.diff(lam)):.3e} < {gap_tolerance(A):.3e}"
        )
    coupling = vec.T @ G @ vec  # coupling[k, n] = <G v_n, v_k>
    denom = lam[None, :] - lam[:, None]  # lambda_n - lambda_k
    np.fill_diagonal(denom, 1.0)
    coeff = coupling / denom
    np.fill_diagonal(coeff, 0.0)
    approx = vec + vec @ coeff
    _, exact = eigendecompose(A + G)
    signs = np.sign(np.einsum("in,in->n", approx, exact))
    signs[signs == 0] = 1.0
    exact = exact * signs
    errors = np.linalg.norm(approx - exact, axis=0)
    return EigenvectorApproximation(approx, exact, lam, errors)


# -- removal ------------------------------------------------------------------------------------------


def interlacing_violations(full: np.ndarray, reduced: np.ndarray, rtol: float = INTERLACE_RTOL) -> list:
    """Violations of ``full_j <= reduced_j <= full_{j+k}`` for a k-row deletion."""
    k = len(full) - len(reduced)
    tol = rtol * max(1.0, float(np.max(np.abs(full))))
    out = []
    for j, mu in enumerate(reduced):
        if mu < full[j] - tol:
            out.append((j + 1, "below", float(full[j] - mu)))
        if mu > full[j + k] + tol:
            out.append((j + 1, "above", float(mu - full[j + k])))
    return out


@dataclass(frozen=True)
class InterlacingStep:
    removed_label: int
    labels_after: tuple
    lambdas: np.ndarray
    violations: list


@dataclass(frozen=True)
class InterlacingReport:
    """Outcome of deleting resonators from a generalized capacitance matrix.

    ``steps`` chain single deletions in the requested order; ``violations``
    collects those of every step plus the direct full-vs-final comparison.
    For BEM matrices with the array supplied, ``lambda_recomputed`` comes from
    a fresh solve on the reduced geometry.
    """

    removed: tuple
    removed_labels: tuple
    lambda_full: np.ndarray
    lambda_reduced: np.ndarray
    interlaced: bool
    violations: list
    steps: list
    omega_real_full: Optional[np.ndarray] = None
    omega_real_reduced: Optional[np.ndarray] = None
    omega_ordered: Optional[bool] = None
    lambda_recomputed: Optional[np.ndarray] = None
    submatrix_discrepancy: Optional[float] = None


def removal_analysis(
    gcm_full: GeneralizedCapacitanceMatrix,
    removed: Sequence[int],
    material: Optional[Material] = None,
    array: Optional[ResonatorArray] = None,
) -> InterlacingReport:
    """Principal-submatrix removal with chained interlacing checks.

    ``removed`` lists 1-based rows of ``gcm_full`` in removal order.
    """
    removed = tuple(int(i) for i in removed)
    if not removed:
        raise ValueError("removal set must be nonempty")
    if len(set(removed)) != len(removed):
        raise ValueError(f"repeated removal indices {removed}")
    if min(removed) < 1 or max(removed) > gcm_full.n:
        raise ValueError(f"removal indices {removed} outside 1..{gcm_full.n}")
    if len(removed) >= gcm_full.n:
        raise ValueError("cannot remove every resonator")

    labels = [gcm_full.labels[i - 1] for i in removed]
    lam_full = np.linalg.eigvalsh(gcm_full.values)
    current = gcm_full
    lam_current = lam_full
    steps = []
    violations = []
    for label in labels:
        pos = current.labels.index(label) + 1
        nxt = current.principal_submatrix([pos])
        lam_next = np.linalg.eigvalsh(nxt.values)
        v = interlacing_violations(lam_current, lam_next)
        steps.append(InterlacingStep(label, nxt.labels, lam_next, v))
        violations += [(label,) + item for item in v]
        current, lam_current = nxt, lam_next
    if len(removed) > 1:
        violations += [("all",) + item for item in interlacing_violations(lam_full, lam_current)]

    re_full = re_reduced = ordered = None
    if material is not None:
        re_full = np.sqrt(material.delta * material.v**2 * lam_full)
        re_reduced = np.sqrt(material.delta * material.v**2 * lam_current)
        slack = material.delta * max(
            float(np.max(compute_spectrum(gcm_full, material).taus)),
            float(np.max(compute_spectrum(current, material).taus)),
        )
        k = len(removed)
        ordered = bool(
            np.all(re_full[: len(re_reduced)] <= re_reduced + slack)
            and np.all(re_reduced <= re_full[k:] + slack)
        )

    lam_recomputed = discrepancy = None
    if gcm_full.source == "bem" and array is not None:
        reduced_array = apply_perturbation(array, PerturbationSpec.removal(removed))
        fresh = gcm_from_bem(reduced_array, gcm_full.params["refinement"], gcm_full.params["panels"])
        lam_recomputed = np.linalg.eigvalsh(fresh.values)
        discrepancy = float(np.linalg.norm(fresh.values - current.values) / np.linalg.norm(fresh.values))

    return InterlacingReport(
        removed,
        tuple(labels),
        lam_full,
        lam_current,
        not violations,
        violations,
        steps,
        re_full,
        re_reduced,
        ordered,
        lam_recomputed,
        discrepancy,
    )


# -- large arrays --------------------------------------------------------------------------------------


@dataclass(frozen=True)
class GershgorinReport:
    n: int
    c: float
    epsilon: float
    admissibility: float
    eigenvalues: np.ndarray
    bound: float
    max_disc_radius: float
    all_inside: bool


def large_array_matrix(base_radius: float, anchors: np.ndarray, epsilon: float) -> np.ndarray:
    """Identical-sphere dilute matrix: ``Cap/|B|`` diagonal,
    ``-eps Cap^2 / (4 pi |B| |z_i - z_j|)`` off the diagonal."""
    cap = float(sphere_capacitance(base_radius))
    vol = float(sphere_volume(base_radius))
    dist = np.linalg.norm(anchors[:, None, :] - anchors[None, :, :], axis=-1)
    np.fill_diagonal(dist, np.inf)
    M = -epsilon * cap**2 / (4.0 * np.pi * vol * dist)
    np.fill_diagonal(M, cap / vol)
    return M


def equispaced_anchors(n: int, spacing: float = 1.0) -> np.ndarray:
    return np.column_stack([spacing * np.arange(n), np.zeros(n), np.zeros(n)])


def gershgorin_large_array_check(
    base_radius: float,
    n: int,
    c: float,
    anchors: Optional[np.ndarray] = None,
) -> GershgorinReport:
    """Eigenvalues of an ``n``-sphere array with ``epsilon = c / n`` against ``(0, 2 Cap/|B|)``.

    Raises :class:`InadmissibleScalingError` when
    ``epsilon (n-1) Cap/(4 pi) sup|z_i - z_j|^-1 >= 1``.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not c > 0:
        raise ValueError(f"c must be positive, got {c}")
    z = equispaced_anchors(n) if anchors is None else np.asarray(anchors, dtype=float)
    if z.shape != (n, 3):
        raise ValueError(f"anchors shape {z.shape} != ({n}, 3)")
    eps = c / n
    cap = float(sphere_capacitance(base_radius))
    vol = float(sphere_volume(base_radius))
    if n > 1:
        dist = np.linalg.norm(z[:, None] - z[None], axis=-1)
        np.fill_diagonal(dist, np.inf)
        q = eps * (n - 1) * cap / (4.0 * np.pi) / float(np.min(dist))
    else:
        q = 0.0
    if q >= 1.0:
        raise InadmissibleScalingError(q)
    # the geometry itself must be a valid (disjoint) array
    make_dilute_array(z, base_radius, eps)
    M = large_array_matrix(base_radius, z, eps)
    lam = np.linalg.eigvalsh(M)
    radius = float(np.max(np.sum(np.abs(M), axis=1) - np.abs(np.diag(M))))
    bound = 2.0 * cap / vol
    return GershgorinReport(n, c, eps, q, lam, bound, radius, bool(np.all((lam > 0) & (lam < bound))))


# -- Monte Carlo ----------------------------------------------------------------------------------------


MC_COLUMNS = (
    "sigma",
    "n",
    "mean_shift",
    "std_shift",
    "re_shift_std",
    "wh_pass_rate",
    "weyl_pass_rate",
    "interlace_pass_rate",
    "eigvec_err_mean",
    "eigvec_err_max",
    "accepted",
    "discarded",
)


@dataclass
class MonteCarloResult:
    kind: str
    seed: int
    trials: int
    rows: list = field(default_factory=list)

    def column(self, name: str, sigma: Optional[float] = None) -> np.ndarray:
        return np.array([r[name] for r in self.rows if sigma is None or r["sigma"] == sigma])


def _trial_rng(seed: int, sigma_index: int, trial: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), sigma_index, trial])


def monte_carlo_robustness(
    array: ResonatorArray,
    kind: str,
    sigmas: Sequence[float],
    trials: int,
    seed: int = 0,
    gcm_fn: Optional[Callable[[ResonatorArray], GeneralizedCapacitanceMatrix]] = None,
) -> MonteCarloResult:
    """Repeated random perturbations; per (sigma, mode) statistics.

    ``kind`` is ``size``, ``position`` or ``removal`` (one uniformly random
    resonator per trial; ``sigma`` is then only a row key). ``gcm_fn``
    defaults to the dilute matrix (arrays without epsilon are treated with
    ``epsilon = 1``). Trials whose perturbed geometry overlaps are discarded
    and counted.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if kind not in ("size", "position", "removal"):
        raise ValueError(f"unknown perturbation kind {kind!r}")
    if gcm_fn is None:
        array = as_dilute(array) if not array.is_dilute else array
        gcm_fn = dilute_gcm
    material = array.material
    base = gcm_fn(array)
    base_spec = compute_spectrum(base, material)
    n = array.n
    result = MonteCarloResult(kind, seed, trials)

    for si, sigma in enumerate(sigmas):
        shifts, re_shifts, vec_err = [], [], []
        wh = weyl = inter = 0
        discarded = 0
        for t in range(trials):
            rng = _trial_rng(seed, si, t)
            if kind == "removal":
                spec = PerturbationSpec.removal([int(rng.integers(1, n + 1))]) if n > 1 else None
                if spec is None:
                    discarded += 1
                    continue
                report = removal_analysis(base, spec.removed, material)
                inter += report.interlaced
                after = base.principal_submatrix(spec.removed)
                s1 = compute_spectrum(after, material)
                d = np.full(n, np.nan)
                d[: n - 1] = np.abs(s1.omegas - base_spec.omegas[: n - 1])
                r = np.full(n, np.nan)
                r[: n - 1] = s1.omegas.real - base_spec.omegas.real[: n - 1]
                shifts.append(d)
                re_shifts.append(r)
                continue
            spec = random_perturbation(kind, n, sigma, rng)
            try:
                perturbed = apply_perturbation(array, spec)
            except GeometryError:
                discarded += 1
                continue
            after = gcm_fn(perturbed)
            report = wielandt_hoffman_check(base, after)
            wh += report.bound_ok
            weyl += report.weyl_ok
            s1 = compute_spectrum(after, material)
            shifts.append(np.abs(s1.omegas - base_spec.omegas))
            re_shifts.append(s1.omegas.real - base_spec.omegas.real)
            try:
                vec_err.append(eigvec_first_order(base, report.correction).errors)
            except NearDegenerateError:
                vec_err.append(np.full(n, np.nan))

        accepted = len(shifts)
        shifts = np.array(shifts).reshape(accepted, n)
        re_shifts = np.array(re_shifts).reshape(accepted, n)
        vec_err = np.array(vec_err).reshape(len(vec_err), n)
        for mode in range(n):
            row = {
                "sigma": float(sigma),
                "n": mode + 1,
                "mean_shift": _nanstat(np.nanmean, shifts[:, mode]),
                "std_shift": _nanstat(np.nanstd, shifts[:, mode]),
                "re_shift_std": _nanstat(np.nanstd, re_shifts[:, mode]),
                "wh_pass_rate": wh / accepted if kind != "removal" and accepted else float("nan"),
                "weyl_pass_rate": weyl / accepted if kind != "removal" and accepted else float("nan"),
                "interlace_pass_rate": inter / accepted if kind == "removal" and accepted else float("nan"),
                "eigvec_err_mean": _nanstat(np.nanmean, vec_err[:, mode]),
                "eigvec_err_max": _nanstat(np.nanmax, vec_err[:, mode]),
                "accepted": accepted,
                "discarded": discarded,
            }
            result.rows.append(row)
        logger.info("sigma=%g: %d accepted, %d discarded", sigma, accepted, discarded)
    return result


def _nanstat(fn, values: np.ndarray) -> float:
    values = values[~np.isnan(values)]
    return float(fn(values)) if len(values) else float("nan")
