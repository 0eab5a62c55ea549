from __future__ import annotations

import itertools
import math

import pytest
from hypothesis import given, settings, strategies as st

from torus_nodal.errors import InvalidArgumentError, NonInvariantSubsetError
from torus_nodal.lattice import (
    enumerate_frequencies,
    is_invariant,
    moment_matrix,
    multiplicity_formula_d2,
    orbit_decomposition,
    signed_permutations,
)


def brute_force(d, E):
    r = math.isqrt(E)
    return sorted(v for v in itertools.product(range(-r, r + 1), repeat=d) if sum(x * x for x in v) == E)


@pytest.mark.parametrize("d,E,N", [(2, 1, 4), (2, 5, 8), (2, 25, 12), (2, 65, 16), (2, 325, 24),
                                   (2, 1105, 32), (2, 3, 0), (3, 2, 12), (3, 3, 8), (3, 6, 24), (3, 7, 0)])
def test_multiplicities(d, E, N):
    assert enumerate_frequencies(d, E).N == N


def test_e25_frequency_list():
    fs = enumerate_frequencies(2, 25)
    assert set(fs.frequencies) == {(0, 5), (0, -5), (5, 0), (-5, 0)} | {
        (a * x, b * y) for x, y in ((3, 4), (4, 3)) for a in (1, -1) for b in (1, -1)}
    assert len(fs.half_set) == 6
    assert all(lam in fs.frequencies for lam in fs.half_set)


@pytest.mark.parametrize("d,E", [(1, 9), (2, 50), (3, 27), (4, 12)])
def test_matches_brute_force(d, E):
    assert list(enumerate_frequencies(d, E).frequencies) == brute_force(d, E)


@given(st.integers(1, 3), st.integers(1, 300))
@settings(max_examples=60, deadline=None)
def test_symmetric_under_negation_and_signed_permutation(d, E):
    fs = enumerate_frequencies(d, E)
    freqs = set(fs.frequencies)
    assert all(tuple(-v for v in lam) in freqs for lam in freqs)
    assert is_invariant(freqs)
    assert 2 * len(fs.half_set) == fs.N
    # half set holds exactly one member of each +-pair
    assert {lam for lam in fs.half_set} | {tuple(-v for v in lam) for lam in fs.half_set} == freqs


def test_orbits_partition_e25():
    orbits = orbit_decomposition(enumerate_frequencies(2, 25))
    assert [(o.representative, o.size) for o in orbits] == [((0, 5), 4), ((3, 4), 8)]


@given(st.sampled_from([2, 3]), st.integers(1, 500))
@settings(max_examples=80, deadline=None)
def test_orbit_sizes_sum_to_N(d, E):
    fs = enumerate_frequencies(d, E)
    orbits = orbit_decomposition(fs)
    assert sum(o.size for o in orbits) == fs.N
    members = [lam for o in orbits for lam in o.members]
    assert len(members) == len(set(members))


def test_moment_identity_example():
    fs = enumerate_frequencies(2, 25)
    assert moment_matrix(fs.frequencies, 2, 25) == [[150, 0], [0, 150]]
    for o in orbit_decomposition(fs):
        target = o.size * 25 // 2
        assert moment_matrix(o.members, 2, 25) == [[target, 0], [0, target]]


def test_moment_matrix_rejects_non_invariant():
    with pytest.raises(NonInvariantSubsetError):
        moment_matrix([(3, 4), (-3, -4)], 2, 25)
    with pytest.raises(InvalidArgumentError):
        moment_matrix([(1, 1)], 2, 25)


def test_signed_permutations_size():
    assert len(signed_permutations((0, 5))) == 4
    assert len(signed_permutations((3, 4))) == 8
    assert len(signed_permutations((1, 2, 3))) == 48
    assert len(signed_permutations((1, 1, 0))) == 12


@pytest.mark.parametrize("E,expected", [(1, 4), (2, 4), (3, 0), (5, 8), (9, 4), (25, 12), (45, 8),
                                        (65, 16), (325, 24), (1105, 32), (21, 0)])
def test_multiplicity_formula(E, expected):
    assert multiplicity_formula_d2(E) == expected


@given(st.integers(1, 3000))
@settings(max_examples=100, deadline=None)
def test_multiplicity_formula_matches_enumeration(E):
    assert multiplicity_formula_d2(E) == enumerate_frequencies(2, E).N


@pytest.mark.parametrize("bad", [0, -1, 2.5, True])
def test_rejects_bad_input(bad):
    with pytest.raises(InvalidArgumentError):
        enumerate_frequencies(2, bad)
    with pytest.raises(InvalidArgumentError):
        enumerate_frequencies(bad, 5)


def test_index_of():
    fs = enumerate_frequencies(2, 5)
    for i, lam in enumerate(fs.half_set):
        assert fs.index_of(lam) == i
    with pytest.raises(KeyError):
        fs.index_of((9, 9))
