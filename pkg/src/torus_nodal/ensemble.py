"""Gaussian random eigenfunctions on the flat torus and their two-point function.

An eigenfunction is stored through its independent coefficients over the
half set ``Lambda/+-``::

    f(x) = sqrt(2/N) * sum_{lam in Lambda/+-} b_lam cos 2pi<lam,x> - c_lam sin 2pi<lam,x>

Internally it is convenient to use the complex amplitudes
``a_lam = sqrt(2/N) (b_lam + i c_lam)``, for which ``f(x) = Re sum a_lam e(<lam,x>)``.
"""
from __future__ import annotations

import itertools
import json
import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from . import rng
from .errors import (
    AliasingRiskError,
    EmptyFrequencySetError,
    FrequencyNotInLatticeError,
    InvalidArgumentError,
)
from .lattice import FrequencySet, enumerate_frequencies

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True, eq=False)
class Eigenfunction:
    fs: FrequencySet
    b: np.ndarray
    c: np.ndarray
    seed: Optional[int] = None

    def __post_init__(self):
        n = len(self.fs.half_set)
        b = np.asarray(self.b, dtype=np.float64)
        c = np.asarray(self.c, dtype=np.float64)
        if b.shape != (n,) or c.shape != (n,):
            raise InvalidArgumentError(f"coefficient vectors must have length N/2 = {n}")
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)

    @property
    def dim(self) -> int:
        return self.fs.dim

    @property
    def energy(self) -> int:
        return self.fs.energy

    @property
    def amplitudes(self) -> np.ndarray:
        return np.sqrt(2.0 / self.fs.N) * (self.b + 1j * self.c)

    def __mul__(self, scalar: float) -> "Eigenfunction":
        return Eigenfunction(self.fs, self.b * scalar, self.c * scalar, self.seed)

    __rmul__ = __mul__

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "energy": self.energy,
            "seed": self.seed,
            "half_set": [list(lam) for lam in self.fs.half_set],
            "b": [float(v) for v in self.b],
            "c": [float(v) for v in self.c],
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "Eigenfunction":
        fs = enumerate_frequencies(int(data["dim"]), int(data["energy"]))
        if [list(lam) for lam in fs.half_set] != [list(lam) for lam in data["half_set"]]:
            raise InvalidArgumentError("half_set in file does not match the canonical enumeration")
        return cls(fs, np.array(data["b"], dtype=float), np.array(data["c"], dtype=float), data.get("seed"))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1))

    @classmethod
    def load(cls, path) -> "Eigenfunction":
        return cls.from_json(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class JetValue:
    value: float
    gradient: np.ndarray
    hessian: np.ndarray


@dataclass(frozen=True)
class TwoPointJet:
    u: float
    grad_u: np.ndarray
    hess_u: np.ndarray


def _require_nonempty(fs: FrequencySet) -> None:
    if fs.N == 0:
        raise EmptyFrequencySetError(f"E={fs.energy} has no representations in dimension {fs.dim}")


def sample_eigenfunction(fs: FrequencySet, seed: int) -> Eigenfunction:
    """Draw ``b, c`` i.i.d. N(0,1) from the counter stream keyed by ``seed``."""
    _require_nonempty(fs)
    n = len(fs.half_set)
    z = rng.normals(seed, rng.STREAM_COEFFICIENTS, 2 * n)
    return Eigenfunction(fs, z[:n], z[n:], seed=int(seed))


def from_amplitudes(fs: FrequencySet, amplitudes: Mapping[Sequence[int], complex],
                    seed: Optional[int] = None) -> Eigenfunction:
    """Build ``f = Re sum_mu A_mu e(<mu,x>)`` from amplitudes on any members of Lambda."""
    _require_nonempty(fs)
    a = np.zeros(len(fs.half_set), dtype=complex)
    for mu, amp in amplitudes.items():
        mu = tuple(int(v) for v in mu)
        neg = tuple(-v for v in mu)
        try:
            a[fs.index_of(mu)] += amp
        except KeyError:
            try:
                a[fs.index_of(neg)] += np.conj(amp)
            except KeyError:
                raise FrequencyNotInLatticeError(f"{mu} is not in Lambda_{fs.energy}") from None
    scale = np.sqrt(fs.N / 2.0)
    return Eigenfunction(fs, a.real * scale, a.imag * scale, seed)


def _linear_image(f: Eigenfunction, matrix: np.ndarray) -> Eigenfunction:
    # g(x) = f(matrix @ x); frequencies map to lam @ matrix
    lam = f.fs.half_array
    amps = f.amplitudes
    images = lam @ matrix.astype(np.int64)
    return from_amplitudes(f.fs, {tuple(mu): a for mu, a in zip(images.tolist(), amps)}, f.seed)


def translate(f: Eigenfunction, shift: Sequence[float]) -> Eigenfunction:
    """Return ``g(x) = f(x + shift)``."""
    shift = np.asarray(shift, dtype=float)
    phase = np.exp(1j * TWO_PI * (f.fs.half_array @ shift))
    return Eigenfunction(f.fs, *_split(f.amplitudes * phase, f.fs), seed=f.seed)


def permute_coordinates(f: Eigenfunction, perm: Sequence[int]) -> Eigenfunction:
    """Return ``g(x) = f(x[perm[0]], ..., x[perm[d-1]])``."""
    d = f.dim
    P = np.zeros((d, d), dtype=np.int64)
    for j, p in enumerate(perm):
        P[j, p] = 1
    return _linear_image(f, P)


def reflect(f: Eigenfunction) -> Eigenfunction:
    """Return ``g(x) = f(-x)``."""
    return Eigenfunction(f.fs, f.b, -f.c, f.seed)


def _split(a: np.ndarray, fs: FrequencySet) -> tuple[np.ndarray, np.ndarray]:
    scale = np.sqrt(fs.N / 2.0)
    return a.real * scale, a.imag * scale


def evaluate(f: Eigenfunction, points) -> np.ndarray:
    """Values of ``f`` at an array of points of shape (..., d)."""
    x = np.asarray(points, dtype=float)
    phase = TWO_PI * (x @ f.fs.half_array.T)
    s = np.sqrt(2.0 / f.fs.N)
    return s * (np.cos(phase) @ f.b - np.sin(phase) @ f.c)


def evaluate_gradient(f: Eigenfunction, points) -> np.ndarray:
    """Gradients at points of shape (..., d); result has shape (..., d)."""
    x = np.asarray(points, dtype=float)
    lam = f.fs.half_array
    phase = TWO_PI * (x @ lam.T)
    s = np.sqrt(2.0 / f.fs.N)
    w = -np.sin(phase) * f.b - np.cos(phase) * f.c
    return s * TWO_PI * (w @ lam)


def evaluate_jet(f: Eigenfunction, x: Sequence[float]) -> JetValue:
    """Value, gradient and Hessian of ``f`` at one point by direct summation."""
    x = np.asarray(x, dtype=float)
    lam = f.fs.half_array.astype(float)
    phase = TWO_PI * (lam @ x)
    s = np.sqrt(2.0 / f.fs.N)
    cos, sin = np.cos(phase), np.sin(phase)
    even = f.b * cos - f.c * sin
    odd = -f.b * sin - f.c * cos
    value = s * even.sum()
    gradient = s * TWO_PI * (odd @ lam)
    hessian = -s * TWO_PI**2 * (lam.T * even) @ lam
    return JetValue(float(value), gradient, hessian)


def _check_grid(M: int) -> int:
    if isinstance(M, bool) or int(M) != M or M < 1:
        raise InvalidArgumentError(f"grid size must be a positive integer, got {M!r}")
    return int(M)


def _spectral_array(fs: FrequencySet, amps: np.ndarray, M: int) -> np.ndarray:
    bound = 2 * math.isqrt(fs.energy)
    if M <= bound:
        raise AliasingRiskError(f"spectral grid needs M > 2*floor(sqrt(E)) = {bound}, got {M}")
    F = np.zeros((M,) * fs.dim, dtype=complex)
    idx = tuple((fs.half_array % M).T)
    np.add.at(F, idx, amps)
    return F


def _inverse_dft(F: np.ndarray) -> np.ndarray:
    return np.fft.ifftn(F).real * F.size


def evaluate_grid(f: Eigenfunction, M: int, backend: str = "spectral") -> np.ndarray:
    """Values ``f(k/M)`` on the full periodic grid, array of shape ``(M,)*d``."""
    M = _check_grid(M)
    if backend == "spectral":
        return _inverse_dft(_spectral_array(f.fs, f.amplitudes, M))
    if backend == "direct":
        return _direct_grid(f.fs, f.amplitudes, M)
    raise InvalidArgumentError(f"unknown backend {backend!r}")


def gradient_grid(f: Eigenfunction, M: int, backend: str = "spectral") -> np.ndarray:
    """Gradient of ``f`` on the grid, shape ``(d,) + (M,)*d``."""
    M = _check_grid(M)
    lam = f.fs.half_array
    out = []
    for j in range(f.dim):
        amps = f.amplitudes * (1j * TWO_PI * lam[:, j])
        if backend == "spectral":
            out.append(_inverse_dft(_spectral_array(f.fs, amps, M)))
        elif backend == "direct":
            out.append(_direct_grid(f.fs, amps, M))
        else:
            raise InvalidArgumentError(f"unknown backend {backend!r}")
    return np.stack(out)


def _direct_grid(fs: FrequencySet, amps: np.ndarray, M: int) -> np.ndarray:
    d = fs.dim
    k = np.arange(M)
    tables = [np.exp(1j * TWO_PI * np.outer(fs.half_array[:, j], k) / M) for j in range(d)]
    letters = "abcdefghijk"[:d]
    spec = "l," + ",".join(f"l{c}" for c in letters) + "->" + letters
    return np.einsum(spec, amps, *tables).real


def two_point_values(fs: FrequencySet, points) -> np.ndarray:
    """``u(z)`` at an array of points of shape (..., d)."""
    _require_nonempty(fs)
    z = np.asarray(points, dtype=float)
    return (2.0 / fs.N) * np.cos(TWO_PI * (z @ fs.half_array.T)).sum(axis=-1)


def two_point_jet(fs: FrequencySet, z: Sequence[float]) -> TwoPointJet:
    """``u``, its gradient ``D`` and Hessian ``H`` at the separation ``z``."""
    _require_nonempty(fs)
    z = np.asarray(z, dtype=float)
    lam = fs.half_array.astype(float)
    phase = TWO_PI * (lam @ z)
    cos, sin = np.cos(phase), np.sin(phase)
    scale = 2.0 / fs.N
    u = scale * cos.sum()
    grad = -scale * TWO_PI * (sin @ lam)
    hess = -scale * TWO_PI**2 * (lam.T * cos) @ lam
    return TwoPointJet(float(u), grad, hess)


def u_moment_exact(fs: FrequencySet, k: int) -> Fraction:
    """Exact ``integral of u^k`` over the torus for ``k`` in {2, 4}.

    The product of ``k`` cosines averages to ``2^-(k-1)`` times the number of
    sign choices ``s`` with ``lam1 + s2 lam2 + ... + sk lamk = 0``.
    """
    _require_nonempty(fs)
    if k not in (2, 4):
        raise InvalidArgumentError("only k = 2 and k = 4 are supported")
    half = fs.half_set
    signs = (1, -1)

    def pair_sums(first_signed: bool) -> Counter:
        counts: Counter = Counter()
        for l1, l2 in itertools.product(half, repeat=2):
            for s1 in (signs if first_signed else (1,)):
                for s2 in signs:
                    counts[tuple(s1 * a + s2 * b for a, b in zip(l1, l2))] += 1
        return counts

    if k == 2:
        solutions = pair_sums(False)[(0,) * fs.dim]
    else:
        left, right = pair_sums(False), pair_sums(True)
        solutions = sum(n * right.get(tuple(-v for v in key), 0) for key, n in left.items())
    return Fraction(2, fs.N) ** k * Fraction(solutions, 2 ** (k - 1))


def export_grid(grid: np.ndarray, path, fmt: str = "bin") -> None:
    """Write a grid as row-major float64 with a JSON header line, or as CSV.

    The binary layout is one UTF-8 JSON line (``shape``, ``dtype``, ``order``)
    terminated by ``\\n``, followed by the raw little-endian doubles.
    """
    path = Path(path)
    grid = np.ascontiguousarray(grid, dtype="<f8")
    if fmt == "bin":
        header = json.dumps({"shape": list(grid.shape), "dtype": "float64", "order": "C",
                             "endianness": "little"})
        with path.open("wb") as fh:
            fh.write(header.encode() + b"\n")
            fh.write(grid.tobytes(order="C"))
    elif fmt == "csv":
        if grid.ndim > 2:
            grid = grid.reshape(grid.shape[0], -1)
        np.savetxt(path, np.atleast_2d(grid), delimiter=",", fmt="%.17g")
    else:
        raise InvalidArgumentError(f"unknown grid format {fmt!r}")


def load_grid(path) -> np.ndarray:
    with Path(path).open("rb") as fh:
        header = json.loads(fh.readline())
        data = np.frombuffer(fh.read(), dtype="<f8")
    return data.reshape(header["shape"])
