"""Numerical nodal-set volume of a single eigenfunction.

Two estimators are provided:

* ``nodal_volume_marching`` extracts the zero set of the piecewise-linear
  interpolant on a periodic grid (segments in 2-D, triangles from a
  Freudenthal tetrahedral split of each cube in 3-D) and sums its measure.
* ``nodal_volume_smoothed`` evaluates the smoothed functional
  ``Z_eps(f) = (1/2eps) * integral over {|f| <= eps} of |grad f|``
  exactly for the piecewise-linear interpolant of ``f`` on a simplicial
  split of the grid.

Both run at ``M`` and ``2M``; the finer value is reported and the
difference is kept as ``refinement_error``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass
from typing import Callable, Optional

import numpy as np

from . import rng
from .ensemble import (
    Eigenfunction,
    evaluate,
    evaluate_grid,
    from_amplitudes,
)
from .errors import InvalidArgumentError, UnderResolvedError, UnsupportedDimensionError
from .lattice import enumerate_frequencies


@dataclass(frozen=True)
class NodalEstimate:
    volume: float
    method: str
    grid_M: int
    epsilon: Optional[float]
    refinement_error: float

    def to_json(self) -> dict:
        return asdict(self)


def default_grid(E: int) -> int:
    """Roughly eight cells per wavelength, never fewer than 64."""
    return max(64, 8 * math.isqrt(E))


def _resolve_grid(f: Eigenfunction, M: Optional[int]) -> int:
    if M is None:
        return default_grid(f.energy)
    M = int(M)
    need = 4 * math.isqrt(f.energy)
    if M < need:
        raise UnderResolvedError(f"grid M={M} is below 4*floor(sqrt(E)) = {need}")
    return M


# ---------------------------------------------------------------------------
# 2-D: marching squares

# edges: 0 bottom (00-10), 1 right (10-11), 2 top (01-11), 3 left (00-01)
_EDGE_PAIRS = list(itertools.combinations(range(4), 2))


def marching_segments(grid: np.ndarray, center_values: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Zero-level segments of a periodic 2-D grid, shape (n, 2, 2) in unit coordinates.

    ``grid[i, j]`` is the value at ``(i/M, j/M)``. Saddle cells are split
    according to the sign of ``center_values`` at the cell center.
    """
    M = grid.shape[0]
    v00 = grid
    v10 = np.roll(grid, -1, axis=0)
    v01 = np.roll(grid, -1, axis=1)
    v11 = np.roll(v10, -1, axis=1)
    s00, s10, s01, s11 = (v >= 0 for v in (v00, v10, v01, v11))
    crossed = [s00 != s10, s10 != s11, s01 != s11, s00 != s01]
    ncross = sum(c.astype(np.int8) for c in crossed)
    I, J = np.indices(grid.shape, dtype=float)

    def point(edge: int, mask: np.ndarray) -> np.ndarray:
        i, j = I[mask], J[mask]
        if edge == 0:
            a, b = v00[mask], v10[mask]
            return np.stack([i + a / (a - b), j], axis=-1)
        if edge == 1:
            a, b = v10[mask], v11[mask]
            return np.stack([i + 1, j + a / (a - b)], axis=-1)
        if edge == 2:
            a, b = v01[mask], v11[mask]
            return np.stack([i + a / (a - b), j + 1], axis=-1)
        a, b = v00[mask], v01[mask]
        return np.stack([i, j + a / (a - b)], axis=-1)

    pieces = []
    simple = ncross == 2
    for ea, eb in _EDGE_PAIRS:
        mask = simple & crossed[ea] & crossed[eb]
        if mask.any():
            pieces.append(np.stack([point(ea, mask), point(eb, mask)], axis=1))

    saddle = ncross == 4
    if saddle.any():
        centers = np.stack([I[saddle] + 0.5, J[saddle] + 0.5], axis=-1) / M
        joined = (center_values(centers) >= 0) == s00[saddle]
        # center shares the sign of corner 00: isolate corners 10 and 01
        split = np.zeros_like(saddle)
        split[saddle] = joined
        for ea, eb in ((0, 1), (2, 3)):
            if split.any():
                pieces.append(np.stack([point(ea, split), point(eb, split)], axis=1))
        other = saddle & ~split
        for ea, eb in ((3, 0), (1, 2)):
            if other.any():
                pieces.append(np.stack([point(ea, other), point(eb, other)], axis=1))

    if not pieces:
        return np.zeros((0, 2, 2))
    return np.concatenate(pieces) / M


# ---------------------------------------------------------------------------
# 3-D: marching tetrahedra on the Freudenthal split of each cube

_CORNERS = list(itertools.product((0, 1), repeat=3))


def _freudenthal_tets() -> list[tuple[tuple[int, int, int], ...]]:
    tets = []
    for perm in itertools.permutations(range(3)):
        path = [(0, 0, 0)]
        cur = [0, 0, 0]
        for axis in perm:
            cur[axis] = 1
            path.append(tuple(cur))
        tets.append(tuple(path))
    return tets


_TETS = _freudenthal_tets()


def _tet_table() -> dict[int, list[tuple[int, int]]]:
    # sign pattern (bit k set = vertex k nonnegative) -> crossed edges in polygon order
    table = {}
    for code in range(1, 15):
        pos = [k for k in range(4) if code >> k & 1]
        neg = [k for k in range(4) if not code >> k & 1]
        if len(pos) == 1:
            table[code] = [(pos[0], n) for n in neg]
        elif len(neg) == 1:
            table[code] = [(neg[0], p) for p in pos]
        else:
            (a, b), (c, d) = pos, neg
            table[code] = [(a, c), (a, d), (b, d), (b, c)]
    return table


_TET_TABLE = _tet_table()


def marching_triangles(grid: np.ndarray) -> np.ndarray:
    """Zero-level triangles of a periodic 3-D grid, shape (n, 3, 3) in unit coordinates."""
    M = grid.shape[0]
    corner_vals = {c: np.roll(grid, tuple(-x for x in c), axis=(0, 1, 2)) for c in _CORNERS}
    signs = np.stack([corner_vals[c] >= 0 for c in _CORNERS])
    mixed = signs.any(axis=0) & ~signs.all(axis=0)
    idx = np.nonzero(mixed)
    base = np.stack(idx, axis=-1).astype(float)
    vals = {c: v[idx] for c, v in corner_vals.items()}

    tris = []
    for tet in _TETS:
        V = np.stack([vals[c] for c in tet], axis=-1)
        P = base[:, None, :] + np.array(tet, dtype=float)[None, :, :]
        code = ((V >= 0) * (1 << np.arange(4))).sum(axis=-1)
        for pattern, edges in _TET_TABLE.items():
            sel = code == pattern
            if not sel.any():
                continue
            Vs, Ps = V[sel], P[sel]
            pts = []
            for a, b in edges:
                va, vb = Vs[:, a], Vs[:, b]
                t = (va / (va - vb))[:, None]
                pts.append(Ps[:, a] + t * (Ps[:, b] - Ps[:, a]))
            tris.append(np.stack(pts[:3], axis=1))
            if len(pts) == 4:
                tris.append(np.stack([pts[0], pts[2], pts[3]], axis=1))
    if not tris:
        return np.zeros((0, 3, 3))
    return np.concatenate(tris) / M


def _segments_length(seg: np.ndarray) -> float:
    return float(np.linalg.norm(seg[:, 1] - seg[:, 0], axis=-1).sum())


def _triangles_area(tri: np.ndarray) -> float:
    cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    return float(0.5 * np.linalg.norm(cross, axis=-1).sum())


def nodal_mesh(f: Eigenfunction, M: int) -> np.ndarray:
    """Segments (d=2) or triangles (d=3) of the grid-``M`` nodal set."""
    if f.dim not in (2, 3):
        raise UnsupportedDimensionError(f"nodal extraction supports d in {{2, 3}}, got {f.dim}")
    grid = evaluate_grid(f, M, backend="spectral")
    if f.dim == 2:
        return marching_segments(grid, lambda pts: evaluate(f, pts))
    return marching_triangles(grid)


def _marching_volume(f: Eigenfunction, M: int) -> float:
    mesh = nodal_mesh(f, M)
    return _segments_length(mesh) if f.dim == 2 else _triangles_area(mesh)


def nodal_volume_marching(f: Eigenfunction, M: Optional[int] = None) -> NodalEstimate:
    if f.dim not in (2, 3):
        raise UnsupportedDimensionError(f"nodal extraction supports d in {{2, 3}}, got {f.dim}")
    M = _resolve_grid(f, M)
    coarse = _marching_volume(f, M)
    fine = _marching_volume(f, 2 * M)
    return NodalEstimate(fine, "marching", M, None, abs(fine - coarse))


# ---------------------------------------------------------------------------
# smoothed functional


def _simplex_cdf(t: float, v: np.ndarray) -> np.ndarray:
    """Volume fraction of a simplex where a linear function is at most ``t``.

    ``v`` holds the sorted vertex values, shape (n, d+1) with d in {1, 2, 3}.
    Each branch is only evaluated where its denominator is nonzero.
    """
    n, k = v.shape
    d = k - 1
    out = np.where(t >= v[:, -1], 1.0, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        if d == 1:
            inside = (t > v[:, 0]) & (t < v[:, 1])
            out = np.where(inside, (t - v[:, 0]) / (v[:, 1] - v[:, 0]), out)
        elif d == 2:
            v0, v1, v2 = v.T
            low = (t > v0) & (t <= v1)
            high = (t > v1) & (t < v2)
            out = np.where(low, (t - v0) ** 2 / ((v1 - v0) * (v2 - v0)), out)
            out = np.where(high, 1.0 - (v2 - t) ** 2 / ((v2 - v0) * (v2 - v1)), out)
        elif d == 3:
            v0, v1, v2, v3 = v.T
            d10, d20, d30 = v1 - v0, v2 - v0, v3 - v0
            d21, d31, d32 = v2 - v1, v3 - v1, v3 - v2
            low = (t > v0) & (t <= v1)
            mid = (t > v1) & (t < v2)
            high = (t >= v2) & (t < v3)
            out = np.where(low, (t - v0) ** 3 / (d10 * d20 * d30), out)
            out = np.where(high, 1.0 - (v3 - t) ** 3 / (d30 * d31 * d32), out)
            # middle piece, written without the 1/d10 cancellation
            a = t - v0
            num = (3 * a**2 * d20 * d30 - a**3 * (d20 + d30)
                   + d10 * (a**3 - 3 * a * d20 * d30) + d10**2 * d20 * d30)
            middle = num / (d20 * d30 * d21 * d31)
            # a vanishing middle interval: interpolate between its end values
            at_v1 = d10**2 / (d20 * d30)
            at_v2 = 1.0 - d32**2 / (d30 * d31)
            thin = d21 <= 1e-9 * np.maximum(d30, 1e-300)
            lerp = at_v1 + (at_v2 - at_v1) * np.clip((t - v1) / d21, 0.0, 1.0)
            out = np.where(mid, np.where(thin, lerp, middle), out)
        else:
            raise UnsupportedDimensionError(f"simplex band measure needs d <= 3, got {d}")
    return np.clip(np.nan_to_num(out), 0.0, 1.0)


def _freudenthal_paths(d: int) -> list[list[tuple[int, ...]]]:
    paths = []
    for perm in itertools.permutations(range(d)):
        cur = [0] * d
        path = [tuple(cur)]
        for axis in perm:
            cur[axis] = 1
            path.append(tuple(cur))
        paths.append(path)
    return paths


def smoothed_functional(f: Eigenfunction, epsilon: float, M: int) -> float:
    """``Z_eps`` of the piecewise-linear interpolant of ``f`` on the ``M^d`` grid.

    Every grid cube is split into ``d!`` simplices along its main diagonal.
    On a simplex the interpolant is linear, so the measure of the band
    ``|f| <= eps`` and the gradient norm are exact there; by the co-area
    formula the result is the band average of the interpolant's level-set
    volumes, which converges to ``Z_eps(f)`` at second order in ``1/M``.
    """
    d = f.dim
    if d > 3:
        raise UnsupportedDimensionError(f"smoothed estimator supports d <= 3, got {d}")
    grid = evaluate_grid(f, M)
    corners = list(itertools.product((0, 1), repeat=d))
    shifted = {c: np.roll(grid, tuple(-x for x in c), axis=tuple(range(d))) for c in corners}
    stack = np.stack([shifted[c] for c in corners])
    # cubes whose value range can meet [-eps, eps]
    live = (stack.min(axis=0) <= epsilon) & (stack.max(axis=0) >= -epsilon)
    vals = {c: v[live] for c, v in shifted.items()}
    h = 1.0 / M
    total = 0.0
    for path in _freudenthal_paths(d):
        V = np.stack([vals[c] for c in path], axis=-1)
        grad = np.diff(V, axis=-1) / h  # components along the path axes
        gnorm = np.linalg.norm(grad, axis=-1)
        Vs = np.sort(V, axis=-1)
        frac = _simplex_cdf(epsilon, Vs) - _simplex_cdf(-epsilon, Vs)
        total += float((gnorm * frac).sum())
    return total * h**d / math.factorial(d) / (2.0 * epsilon)


def nodal_volume_smoothed(f: Eigenfunction, epsilon: float, M: Optional[int] = None) -> NodalEstimate:
    if not epsilon > 0:
        raise InvalidArgumentError("epsilon must be positive")
    M = _resolve_grid(f, M)
    coarse = smoothed_functional(f, epsilon, M)
    fine = smoothed_functional(f, epsilon, 2 * M)
    return NodalEstimate(fine, "smoothed", M, float(epsilon), abs(fine - coarse))


# ---------------------------------------------------------------------------
# one-variable trigonometric polynomials


@dataclass(frozen=True)
class TrigPolynomial:
    """``g(t) = sum_k cos_coeffs[k] cos 2pi k t + sin_coeffs[k] sin 2pi k t``."""

    cos_coeffs: np.ndarray
    sin_coeffs: np.ndarray

    @property
    def degree(self) -> int:
        nz = np.nonzero(np.abs(self.cos_coeffs) + np.abs(self.sin_coeffs))[0]
        return int(nz[-1]) if nz.size else 0

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        k = np.arange(len(self.cos_coeffs))
        phase = 2 * np.pi * np.multiply.outer(t, k)
        return np.cos(phase) @ self.cos_coeffs + np.sin(phase) @ self.sin_coeffs


def random_trig_polynomial(degree: int, seed: int) -> TrigPolynomial:
    z = rng.normals(seed, 0, 2 * (degree + 1))
    return TrigPolynomial(z[: degree + 1], np.concatenate([[0.0], z[degree + 2:]]))


def crossing_functional_1d(g: TrigPolynomial, epsilon: float, points: Optional[int] = None) -> float:
    """``(1/2eps) * integral over {|g| <= eps} of |g'|`` on the circle.

    The integral equals the total variation of ``clip(g, -eps, eps)``, which
    is summed over a dense periodic sample (at least 64 points per degree).
    """
    if not epsilon > 0:
        raise InvalidArgumentError("epsilon must be positive")
    n = points or max(4096, 256 * g.degree)
    n = max(n, 64 * max(g.degree, 1))
    y = np.clip(g(np.arange(n) / n), -epsilon, epsilon)
    return float(np.abs(np.diff(y, append=y[:1])).sum() / (2.0 * epsilon))


# ---------------------------------------------------------------------------
# deterministic eigenfunctions


def make_separable_eigenfunction(d: int, m: int, kind: str = "single-sine") -> Eigenfunction:
    """``sin 2pi m x_1`` (E = m^2) or ``prod_j sin 2pi m x_j`` (E = d m^2) in the coefficient basis."""
    if m < 1 or d < 1:
        raise InvalidArgumentError("d and m must be positive")
    if kind == "single-sine":
        fs = enumerate_frequencies(d, m * m)
        amps = {(m,) + (0,) * (d - 1): -1j}
    elif kind == "product-of-sines":
        fs = enumerate_frequencies(d, d * m * m)
        amps = {}
        for signs in itertools.product((1, -1), repeat=d):
            mu = tuple(m * s for s in signs)
            amps[mu] = amps.get(mu, 0) + np.prod(signs) * (2j) ** (-d)
    else:
        raise InvalidArgumentError(f"unknown kind {kind!r}")
    return from_amplitudes(fs, amps)


def separable_closed_form(d: int, m: int, kind: str) -> Callable[[np.ndarray], np.ndarray]:
    if kind == "single-sine":
        return lambda x: np.sin(2 * np.pi * m * np.asarray(x)[..., 0])
    return lambda x: np.prod(np.sin(2 * np.pi * m * np.asarray(x)), axis=-1)


def write_mesh(mesh: np.ndarray, path) -> None:
    """One primitive per line: the flattened vertex coordinates."""
    with open(path, "w") as fh:
        for prim in mesh.reshape(len(mesh), -1):
            fh.write(" ".join(f"{v:.12g}" for v in prim) + "\n")
