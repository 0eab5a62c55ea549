"""Lattice points on spheres: the frequency set of a toral eigenspace.

All arithmetic here is on Python integers, so the moment identities are
checked exactly.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidArgumentError, NonInvariantSubsetError

Vector = tuple[int, ...]


@dataclass(frozen=True)
class FrequencySet:
    """All integer vectors of squared length ``energy`` in dimension ``dim``.

    ``frequencies`` is sorted lexicographically; ``half_set`` keeps the
    member of each ``{lam, -lam}`` pair whose first nonzero coordinate is
    positive, in the same order.
    """

    dim: int
    energy: int
    frequencies: tuple[Vector, ...]
    half_set: tuple[Vector, ...]

    @property
    def N(self) -> int:
        return len(self.frequencies)

    @cached_property
    def array(self) -> np.ndarray:
        return np.array(self.frequencies, dtype=np.int64).reshape(-1, self.dim)

    @cached_property
    def half_array(self) -> np.ndarray:
        return np.array(self.half_set, dtype=np.int64).reshape(-1, self.dim)

    def index_of(self, lam: Sequence[int]) -> int:
        """Position of ``lam`` in ``half_set``; raises KeyError if absent."""
        return self._half_index[tuple(int(v) for v in lam)]

    @cached_property
    def _half_index(self) -> dict[Vector, int]:
        return {lam: i for i, lam in enumerate(self.half_set)}


@dataclass(frozen=True)
class Orbit:
    representative: Vector
    members: tuple[Vector, ...]

    @property
    def size(self) -> int:
        return len(self.members)


def _check_positive(name: str, value: int) -> int:
    if isinstance(value, bool) or int(value) != value or value < 1:
        raise InvalidArgumentError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def _representations(d: int, budget: int) -> Iterable[Vector]:
    # Box search |x_i| <= isqrt(budget), pruned by the remaining square budget;
    # the last coordinate is solved for directly.
    if d == 1:
        r = math.isqrt(budget)
        if r * r == budget:
            yield (-r,)
            if r:
                yield (r,)
        return
    r = math.isqrt(budget)
    for x in range(-r, r + 1):
        for rest in _representations(d - 1, budget - x * x):
            yield (x,) + rest


def _is_half_representative(lam: Vector) -> bool:
    for v in lam:
        if v:
            return v > 0
    return False


def enumerate_frequencies(d: int, E: int) -> FrequencySet:
    """Return the complete frequency set ``{lam in Z^d : |lam|^2 = E}``."""
    d = _check_positive("d", d)
    E = _check_positive("E", E)
    freqs = tuple(sorted(set(_representations(d, E))))
    half = tuple(lam for lam in freqs if _is_half_representative(lam))
    return FrequencySet(dim=d, energy=E, frequencies=freqs, half_set=half)


def _factorize(n: int) -> dict[int, int]:
    factors: dict[int, int] = {}
    p = 2
    while p * p <= n:
        while n % p == 0:
            factors[p] = factors.get(p, 0) + 1
            n //= p
        p += 1 if p == 2 else 2
    if n > 1:
        factors[n] = factors.get(n, 0) + 1
    return factors


def multiplicity_formula_d2(E: int) -> int:
    """Number of representations of ``E`` as a sum of two squares.

    Uses the prime factorization: zero if some prime ``q = 3 mod 4`` occurs
    to an odd power, else ``4 * prod(beta_j + 1)`` over primes ``p = 1 mod 4``.
    """
    E = _check_positive("E", E)
    count = 4
    for p, exp in _factorize(E).items():
        if p % 4 == 1:
            count *= exp + 1
        elif p % 4 == 3 and exp % 2:
            return 0
    return count


def signed_permutations(lam: Sequence[int]) -> set[Vector]:
    lam = tuple(int(v) for v in lam)
    out = set()
    for perm in itertools.permutations(lam):
        for signs in itertools.product((1, -1), repeat=len(lam)):
            out.add(tuple(s * v for s, v in zip(signs, perm)))
    return out


def orbit_decomposition(fs: FrequencySet) -> list[Orbit]:
    """Split the frequency set into orbits of the signed-permutation group.

    Orbits are returned sorted by representative, the representative being
    the orbit member with nonnegative ascending coordinates.
    """
    seen: set[Vector] = set()
    orbits = []
    for lam in fs.frequencies:
        if lam in seen:
            continue
        members = signed_permutations(lam)
        seen |= members
        rep = tuple(sorted(abs(v) for v in lam))
        orbits.append(Orbit(representative=rep, members=tuple(sorted(members))))
    orbits.sort(key=lambda o: o.representative)
    return orbits


def is_invariant(subset: Iterable[Sequence[int]]) -> bool:
    members = {tuple(int(v) for v in lam) for lam in subset}
    return all(signed_permutations(lam) <= members for lam in members)


def moment_matrix(subset: Sequence[Sequence[int]], d: int, E: int) -> list[list[int]]:
    """Exact second moments ``M[j][k] = sum lam_j lam_k`` over ``subset``.

    For an invariant subset this equals ``(|subset| E / d)`` times the identity.
    """
    d = _check_positive("d", d)
    E = _check_positive("E", E)
    vecs = [tuple(int(v) for v in lam) for lam in subset]
    if not vecs:
        raise InvalidArgumentError("subset must be nonempty")
    if any(len(lam) != d or sum(v * v for v in lam) != E for lam in vecs):
        raise InvalidArgumentError(f"subset contains a vector not of dimension {d} and norm^2 {E}")
    if not is_invariant(vecs):
        raise NonInvariantSubsetError("subset is not closed under signed permutations")
    return [[sum(lam[j] * lam[k] for lam in vecs) for k in range(d)] for j in range(d)]
