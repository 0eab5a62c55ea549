"""Covariance structure of ``(f(x), f(y), grad f(x), grad f(y))`` and the
Kac-Rice moment formulas built on it.

Everything here is a function of the frequency set and the separation
``z = x - y``; Monte Carlo draws come from counter streams keyed by
``(seed, stream)`` so that results do not depend on evaluation order.
"""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import calibration, rng
from .ensemble import TWO_PI, two_point_jet
from .errors import (
    DegenerateSeparationError,
    InvalidArgumentError,
    NonPositiveDefiniteOmegaError,
)
from .lattice import FrequencySet

log = logging.getLogger(__name__)

DEGENERATE_U2 = 1e-12
EIG_ZERO_RTOL = 1e-10
# never refine cells whose center has 1 - u^2 above this
REFINE_CAP = 0.25


def gradient_variance(d: int, E: int) -> float:
    """``4 pi^2 E / d``, the variance of each partial derivative of ``f``."""
    return 4.0 * math.pi**2 * E / d


@dataclass(frozen=True, eq=False)
class CovarianceBlocks:
    dim: int
    energy: int
    z: Optional[np.ndarray]
    u: float
    one_minus_u2: float
    grad_u: np.ndarray
    hess_u: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    Sigma: np.ndarray
    Omega: np.ndarray
    S: np.ndarray
    sigma_norm: float


@dataclass(frozen=True)
class KernelEstimate:
    value: float
    std_error: float
    mc_samples: int
    seed: int


@dataclass(frozen=True)
class SingularClassification:
    kind: str
    density_witness: float


@dataclass
class SecondMomentEstimate:
    value: float
    std_error: float
    grid_M: int
    mc_per_point: int
    seed: int
    skipped_cells: int = 0
    skipped_mass: float = 0.0
    skipped_bound: float = 0.0
    non_positive_definite_cells: int = 0
    kernel_evaluations: int = 0
    cell_values: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def error(self) -> float:
        """Statistical standard error plus the bound on skipped cells."""
        return self.std_error + self.skipped_bound

    def to_json(self) -> dict:
        out = asdict(self)
        out.pop("cell_values")
        out["error"] = self.error
        return out


def _assemble(u: float, grad_u: np.ndarray, hess_u: np.ndarray, d: int, E: int):
    s = gradient_variance(d, E)
    A = np.array([[1.0, u], [u, 1.0]])
    zero = np.zeros(d)
    B = np.array([np.concatenate([zero, -grad_u]), np.concatenate([grad_u, zero])])
    eye = np.eye(d)
    C = np.block([[s * eye, -hess_u], [-hess_u, s * eye]])
    Sigma = np.block([[A, B], [B.T, C]])
    return A, B, C, Sigma


def sigma_matrix(fs: FrequencySet, z: Sequence[float]) -> np.ndarray:
    """Covariance of ``(f(x), f(y), grad f(x), grad f(y))`` for ``x - y = z``."""
    jet = two_point_jet(fs, z)
    return _assemble(jet.u, jet.grad_u, jet.hess_u, fs.dim, fs.energy)[3]


def one_minus_u_squared(fs: FrequencySet, points) -> np.ndarray:
    """``1 - u(z)^2`` without cancellation near ``u = +-1``.

    Uses ``1 - u = (4/N) sum sin^2(pi<lam,z>)`` and ``1 + u = (4/N) sum cos^2(pi<lam,z>)``.
    """
    phase = np.pi * (np.asarray(points, dtype=float) @ fs.half_array.T)
    scale = 4.0 / fs.N
    return (scale * (np.sin(phase) ** 2).sum(axis=-1)) * (scale * (np.cos(phase) ** 2).sum(axis=-1))


def _reduced_covariance(fs: FrequencySet, z: np.ndarray) -> np.ndarray:
    # Omega as the Gram matrix of the gradient rows projected off the two
    # value rows, in coefficient space. PSD by construction and free of the
    # cancellation in C - B^T A^-1 B when u^2 is close to 1.
    lam = fs.half_array.astype(float)
    phase = TWO_PI * (lam @ z)
    cos, sin = np.cos(phase), np.sin(phase)
    n = len(lam)
    values = np.array([np.concatenate([cos, -sin]), np.concatenate([np.ones(n), np.zeros(n)])])
    grads = TWO_PI * np.vstack([np.hstack([-(sin[:, None] * lam).T, -(cos[:, None] * lam).T]),
                                np.hstack([np.zeros((fs.dim, n)), -lam.T])])
    q, _ = np.linalg.qr(values.T)
    resid = grads - (grads @ q) @ q.T
    return (2.0 / fs.N) * (resid @ resid.T)


def blocks_from_two_point(u: float, grad_u, hess_u, dim: int, energy: int,
                          z: Optional[np.ndarray] = None, *, one_minus_u2: Optional[float] = None,
                          omega: Optional[np.ndarray] = None) -> CovarianceBlocks:
    """Assemble all blocks from given values of ``u``, ``grad u`` and ``Hess u``.

    Also used with synthetic inputs (e.g. ``u = 0, grad u = 0, Hess u = 0``).
    ``one_minus_u2`` and ``omega`` may be supplied when computed more
    accurately elsewhere.
    """
    grad_u = np.asarray(grad_u, dtype=float).reshape(dim)
    hess_u = np.asarray(hess_u, dtype=float).reshape(dim, dim)
    one_minus = 1.0 - u * u if one_minus_u2 is None else float(one_minus_u2)
    if one_minus <= DEGENERATE_U2:
        raise DegenerateSeparationError(f"1 - u^2 = {one_minus!r} is below {DEGENERATE_U2}")
    A, B, C, Sigma = _assemble(u, grad_u, hess_u, dim, energy)
    if omega is None:
        omega = C - B.T @ np.linalg.solve(A, B)
    Omega = 0.5 * (omega + omega.T)
    s = gradient_variance(dim, energy)
    DtD = np.outer(grad_u, grad_u)
    off = one_minus * hess_u + u * DtD
    S = (1.0 / s) / one_minus * np.block([[DtD, off], [off, DtD]])
    sigma_norm = float(np.max(np.abs(np.linalg.eigvalsh(S))))
    return CovarianceBlocks(dim, energy, z, float(u), one_minus, grad_u, hess_u, A, B, C, Sigma, Omega, S,
                            sigma_norm)


def covariance_blocks(fs: FrequencySet, z: Sequence[float]) -> CovarianceBlocks:
    z = np.asarray(z, dtype=float)
    jet = two_point_jet(fs, z)
    one_minus = float(one_minus_u_squared(fs, z))
    omega = _reduced_covariance(fs, z) if one_minus > DEGENERATE_U2 else None
    return blocks_from_two_point(jet.u, jet.grad_u, jet.hess_u, fs.dim, fs.energy, z=z,
                                 one_minus_u2=one_minus, omega=omega)


def _value_density_at_zero(one_minus_u2: float) -> float:
    # joint density of (f(x), f(y)) at (0, 0)
    return 1.0 / (TWO_PI * math.sqrt(one_minus_u2))


def _omega_root(blocks: CovarianceBlocks, semidefinite_ok: bool = False) -> np.ndarray:
    w, Q = np.linalg.eigh(blocks.Omega)
    tol = EIG_ZERO_RTOL * gradient_variance(blocks.dim, blocks.energy)
    if w.min() <= (-tol if semidefinite_ok else tol):
        raise NonPositiveDefiniteOmegaError(f"smallest eigenvalue of Omega is {w.min():.3e} (tolerance {tol:.3e})")
    return (Q * np.sqrt(np.clip(w, 0.0, None))) @ Q.T


def kernel_K(blocks: CovarianceBlocks, mc_samples: int, seed: int, stream: int = 0, *,
             semidefinite_ok: bool = False) -> KernelEstimate:
    """Monte Carlo estimate of the second-moment kernel at one separation.

    ``K = E[|v1| |v2|] / (2 pi sqrt(1 - u^2))`` for ``v = (v1, v2) ~ N(0, Omega)``;
    ``v`` is drawn as ``Omega^{1/2} g`` with the symmetric square root.
    ``Omega`` must be positive definite unless ``semidefinite_ok``, in which
    case eigenvalues down to ``-1e-10 * 4 pi^2 E / d`` are clamped to zero
    (the expectation is still well defined for a degenerate Gaussian).
    """
    if mc_samples < 2:
        raise InvalidArgumentError("mc_samples must be at least 2")
    d = blocks.dim
    root = _omega_root(blocks, semidefinite_ok)
    g = rng.normals(seed, stream, mc_samples * 2 * d).reshape(mc_samples, 2 * d)
    v = g @ root
    prod = np.linalg.norm(v[:, :d], axis=1) * np.linalg.norm(v[:, d:], axis=1)
    dens = _value_density_at_zero(blocks.one_minus_u2)
    mean = float(prod.mean())
    se = float(prod.std(ddof=1) / math.sqrt(mc_samples))
    return KernelEstimate(mean * dens, se * dens, int(mc_samples), int(seed))


def nodal_constant(d: int) -> float:
    """``sqrt(4 pi / d) Gamma((d+1)/2) / Gamma(d/2)``."""
    if d < 1:
        raise InvalidArgumentError("d must be positive")
    return math.sqrt(4.0 * math.pi / d) * math.exp(math.lgamma((d + 1) / 2) - math.lgamma(d / 2))


def expected_volume(d: int, E: int) -> float:
    if E < 1:
        raise InvalidArgumentError("E must be positive")
    return nodal_constant(d) * math.sqrt(E)


# ---------------------------------------------------------------------------
# second moment by quadrature of the kernel


def cell_centers(d: int, M: int) -> np.ndarray:
    k = (np.arange(M) + 0.5) / M
    mesh = np.meshgrid(*([k] * d), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


@dataclass
class _CellResult:
    value: float = 0.0
    variance: float = 0.0
    skipped_mass: float = 0.0
    skipped_bound: float = 0.0
    skipped_leaves: int = 0
    npd_leaves: int = 0
    evaluations: int = 0

    def add(self, other: "_CellResult") -> None:
        for name in self.__dataclass_fields__:
            setattr(self, name, getattr(self, name) + getattr(other, name))


@dataclass(frozen=True)
class _QuadratureSpec:
    mc: int
    seed: int
    delta: float
    kernel_bound: float
    refine_levels: int
    refine_radius: float


def _integrate_cell(fs: FrequencySet, center: np.ndarray, h: float, key: tuple,
                    q: _QuadratureSpec) -> _CellResult:
    # Midpoint rule, refined dyadically where the center lies within
    # refine_radius cells of a point with u^2 = 1 (there the kernel has an
    # integrable singularity and the plain midpoint rule is only first order).
    d, E = fs.dim, fs.energy
    measure = h**d
    one_minus = float(one_minus_u_squared(fs, center))
    level = len(key) - 1
    near = min(gradient_variance(d, E) * (q.refine_radius * h) ** 2, REFINE_CAP)
    if level < q.refine_levels and one_minus < near:
        out = _CellResult()
        for i, corner in enumerate(np.ndindex(*([2] * d))):
            sub = center + (np.array(corner) - 0.5) * (h / 2)
            out.add(_integrate_cell(fs, sub, h / 2, key + (i,), q))
        return out
    skipped = _CellResult(skipped_mass=measure, skipped_leaves=1,
                          skipped_bound=q.kernel_bound * E / math.sqrt(max(one_minus, 1e-16)) * measure)
    if one_minus < q.delta:
        return skipped
    if level == 0:
        seed, stream = q.seed, rng.KERNEL_STREAM_BASE + key[0]
    else:
        seed, stream = rng.derive_seed(q.seed, *key), rng.KERNEL_STREAM_BASE
    try:
        est = kernel_K(covariance_blocks(fs, center), q.mc, seed, stream=stream, semidefinite_ok=True)
    except (NonPositiveDefiniteOmegaError, DegenerateSeparationError):
        skipped.npd_leaves = 1
        return skipped
    return _CellResult(value=est.value * measure, variance=(est.std_error * measure) ** 2, evaluations=1)


def _integrate_cells(args) -> list[tuple[int, _CellResult]]:
    fs, centers, indices, h, q = args
    return [(int(i), _integrate_cell(fs, c, h, (int(i),), q)) for i, c in zip(indices, centers)]


def default_workers() -> int:
    return max(1, int(os.environ.get("TORUS_NODAL_WORKERS", "1")))


def second_moment(fs: FrequencySet, M: int, mc_per_point: int, seed: int, *,
                  delta: float = 1e-6, kernel_bound: Optional[float] = None,
                  refine_levels: int = 6, refine_radius: float = 2.0,
                  workers: Optional[int] = None, keep_cells: bool = False) -> SecondMomentEstimate:
    """``E(Z^2)`` as the integral of the kernel over ``M^d`` midpoint cells.

    Cells within ``refine_radius`` cell widths of a point where ``u^2 = 1``
    are split dyadically up to ``refine_levels`` times. Leaves whose center
    has ``u^2 > 1 - delta`` are skipped and their mass is bounded by
    ``kernel_bound * E / sqrt(1 - u^2)`` per unit measure. Near those
    points ``Omega`` is close to rank deficient; it is sampled through its
    clamped square root, and only leaves with a clearly negative eigenvalue
    are skipped (and bounded) as non-positive-definite.
    """
    if fs.N == 0:
        raise InvalidArgumentError("empty frequency set")
    if M < 1 or mc_per_point < 2:
        raise InvalidArgumentError("need M >= 1 and mc_per_point >= 2")
    d = fs.dim
    if kernel_bound is None:
        kernel_bound = calibration.KERNEL_BOUND_CONSTANT
    q = _QuadratureSpec(int(mc_per_point), int(seed), float(delta), float(kernel_bound),
                        int(refine_levels), float(refine_radius))
    centers = cell_centers(d, M)
    idx = np.arange(len(centers))
    tasks = [(fs, centers[i:i + 256], idx[i:i + 256], 1.0 / M, q) for i in range(0, len(idx), 256)]
    workers = workers or default_workers()
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = [r for chunk in pool.map(_integrate_cells, tasks) for r in chunk]
    else:
        results = []
        for i, t in enumerate(tasks):
            results.extend(_integrate_cells(t))
            if i % 8 == 0:
                log.info("second moment: %d/%d cells", len(results), len(idx))

    total = _CellResult()
    values = np.zeros(len(idx))
    for i, r in sorted(results, key=lambda item: item[0]):
        total.add(r)
        values[i] = r.value
    return SecondMomentEstimate(
        value=float(values.sum()),
        std_error=math.sqrt(total.variance),
        grid_M=M, mc_per_point=int(mc_per_point), seed=int(seed),
        skipped_cells=total.skipped_leaves,
        skipped_mass=total.skipped_mass,
        skipped_bound=total.skipped_bound,
        non_positive_definite_cells=total.npd_leaves,
        kernel_evaluations=total.evaluations,
        cell_values=values.reshape((M,) * d) * M**d if keep_cells else None,
    )


# ---------------------------------------------------------------------------
# singular points and cubes


def _singular_fractions(fs: FrequencySet, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    cos = np.cos(TWO_PI * (np.asarray(points, dtype=float) @ fs.array.T))
    return (cos > 0.75).mean(axis=-1), (cos < -0.75).mean(axis=-1)


def classify_points(fs: FrequencySet, points: np.ndarray) -> np.ndarray:
    """+1 for positive singular, -1 for negative singular, 0 otherwise."""
    pos, neg = _singular_fractions(fs, points)
    thr = 1.0 - 1.0 / (4 * fs.dim)
    return np.where(pos > thr, 1, np.where(neg > thr, -1, 0))


def classify_singular(fs: FrequencySet, x: Sequence[float]) -> SingularClassification:
    pos, neg = _singular_fractions(fs, np.asarray(x, dtype=float)[None, :])
    pos, neg = float(pos[0]), float(neg[0])
    thr = 1.0 - 1.0 / (4 * fs.dim)
    if pos > thr:
        return SingularClassification("positive", pos)
    if neg > thr:
        return SingularClassification("negative", neg)
    return SingularClassification("nonsingular", max(pos, neg))


def cube_sample_points(d: int, M: int, seed: int = 0, interior: int = 8) -> np.ndarray:
    """Per-cube test points: center, the 2^d corners and ``interior`` random points.

    Returns shape ``(M^d, 1 + 2^d + interior, d)``; cube ``k`` is centered at ``k/M``.
    """
    h = 1.0 / M
    k = np.arange(M) / M
    mesh = np.meshgrid(*([k] * d), indexing="ij")
    centers = np.stack([m.ravel() for m in mesh], axis=-1)
    corners = np.array(list(np.ndindex(*([2] * d))), dtype=float) - 0.5
    offs = rng.uniforms(seed, rng.STREAM_CUBE_POINTS, M**d * interior * d).reshape(M**d, interior, d) - 0.5
    local = np.concatenate([np.zeros((1, d)), corners], axis=0)
    fixed = centers[:, None, :] + h * local[None, :, :]
    return np.concatenate([fixed, centers[:, None, :] + h * offs], axis=1)


def singular_cubes(fs: FrequencySet, M: int, seed: int = 0) -> np.ndarray:
    """Boolean array of shape ``(M,)*d``: cubes containing a sampled singular point."""
    if M < 1:
        raise InvalidArgumentError("M must be positive")
    pts = cube_sample_points(fs.dim, M, seed)
    kinds = classify_points(fs, pts)
    return (kinds != 0).any(axis=1).reshape((M,) * fs.dim)


def singular_set_measure(fs: FrequencySet, M: int, seed: int = 0) -> float:
    """Fraction of the ``M^d`` cubes flagged singular (a lower estimate of meas(B))."""
    return float(singular_cubes(fs, M, seed).mean())


# ---------------------------------------------------------------------------
# non-degeneracy


def min_eig_sigma(fs: FrequencySet, x: Sequence[float], y: Sequence[float]) -> float:
    """Smallest eigenvalue of the covariance with gradient entries scaled to O(1)."""
    z = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    Sigma = sigma_matrix(fs, z)
    r = 1.0 / math.sqrt(gradient_variance(fs.dim, fs.energy))
    D = np.concatenate([[1.0, 1.0], np.full(2 * fs.dim, r)])
    return float(np.linalg.eigvalsh(D[:, None] * Sigma * D[None, :])[0])


@dataclass(frozen=True)
class SigmaStatistics:
    mean_sigma: float
    mean_sigma_sq: float
    nonsingular_points: int
    total_points: int


def sigma_statistics(fs: FrequencySet, M: int) -> SigmaStatistics:
    """Averages of ``sigma_norm`` and its square over nonsingular cell centers.

    The averages are normalized by the full number of grid points, so they
    approximate integrals over the complement of the singular set.
    """
    centers = cell_centers(fs.dim, M)
    kinds = classify_points(fs, centers)
    sig = []
    for z in centers[kinds == 0]:
        sig.append(covariance_blocks(fs, z).sigma_norm)
    sig = np.array(sig)
    n = len(centers)
    return SigmaStatistics(float(sig.sum() / n), float((sig**2).sum() / n), len(sig), n)
