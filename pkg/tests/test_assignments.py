import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from optbalance.assignments import (
    canonical,
    count_canonical,
    enumerate_canonical,
    from_signs,
    iter_canonical,
    permute_labels,
    to_signs,
    validate_assignment,
)
from optbalance.errors import InputError, InstanceTooLargeError

from helpers import all_partitions_labels


def test_validate():
    np.testing.assert_array_equal(validate_assignment([0, 1, 1, 0]), [0, 1, 1, 0])
    for bad in ([0, 0, 1], [0, 0, 0, 1], [0, 2, 1, 3, 3, 3], [0.5, 1]):
        with pytest.raises(InputError):
            validate_assignment(bad)


def test_signs_round_trip():
    w = np.array([0, 1, 1, 0])
    np.testing.assert_array_equal(to_signs(w), [1, -1, -1, 1])
    np.testing.assert_array_equal(from_signs(to_signs(w)), w)
    with pytest.raises(InputError):
        from_signs([1, 1, -1, 1])


@pytest.mark.parametrize("n,m", [(2, 2), (4, 2), (6, 2), (8, 2), (6, 3), (9, 3), (8, 4)])
def test_enumeration_matches_itertools(n, m):
    rows = enumerate_canonical(n, m)
    assert rows.shape[0] == count_canonical(n, m) == math.factorial(n) // (
        math.factorial(n // m) ** m * math.factorial(m))
    labeled = all_partitions_labels(n, m)
    canon = {tuple(canonical(r)) for r in labeled}
    assert canon == {tuple(r) for r in rows}
    assert np.all(rows[:, 0] == 0)


def test_iter_chunks_concatenate():
    full = enumerate_canonical(12, 2)
    chunked = np.concatenate(list(iter_canonical(12, 2, chunk=100)))
    np.testing.assert_array_equal(full, chunked)


def test_enumeration_guard():
    with pytest.raises(InstanceTooLargeError):
        enumerate_canonical(40, 2)


@settings(max_examples=30, deadline=None)
@given(m=st.integers(2, 4), p=st.integers(1, 4), seed=st.integers(0, 10**6))
def test_permute_labels_keeps_partition(m, p, seed):
    r = np.random.default_rng(seed)
    w = r.permutation(np.repeat(np.arange(m), p))
    v = permute_labels(w, m, r)
    validate_assignment(v, m)
    np.testing.assert_array_equal(canonical(v), canonical(w))
