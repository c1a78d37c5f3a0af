import numpy as np
import pytest

from dgs import (
    in_cooldown,
    keep_count,
    matching_count,
    n_words,
    pack_sign_bits,
    query_direction_bits,
    random_discard,
    select_neighbors,
    unpack_sign_bits,
)
from utils.rng import stream


def test_word_count():
    assert [n_words(d) for d in (1, 32, 33, 70, 100)] == [1, 1, 2, 3, 4]


def test_edge_sign_packing_example():
    u, v = np.array([1, 2]), np.array([3, 1])
    np.testing.assert_array_equal(pack_sign_bits(v - u >= 0), [0x00000001])


def test_zero_difference_sets_every_bit():
    v = np.array([0.5, -1.0, 2.0, 0.0, 3.0], dtype=np.float32)
    np.testing.assert_array_equal(query_direction_bits(v, v), [0b11111])


def test_query_direction_example():
    np.testing.assert_array_equal(query_direction_bits([2, 0], [1, 2]), [0x00000001])


def test_padding_bits_stay_zero():
    words = pack_sign_bits(np.ones(40, dtype=bool))
    assert words.tolist() == [0xFFFFFFFF, 0xFF]


def test_unpack_reproduces_random_signs():
    rng = np.random.default_rng(0)
    q, v = rng.normal(size=100), rng.normal(size=100)
    words = query_direction_bits(q, v)
    assert words.shape == (4,)
    np.testing.assert_array_equal(unpack_sign_bits(words, 100), (q.astype(np.float32) - v.astype(np.float32)) >= 0)


def test_query_direction_rejects_mismatch():
    with pytest.raises(ValueError):
        query_direction_bits([1, 2], [1, 2, 3])


def test_matching_count_extremes():
    bits = np.random.default_rng(1).random(70) < 0.5
    a = pack_sign_bits(bits)
    assert matching_count(a, a, 70) == 70
    assert matching_count(a, pack_sign_bits(~bits), 70) == 0


def test_matching_count_matches_bit_loop():
    rng = np.random.default_rng(2)
    for _ in range(50):
        x, y = rng.random(70) < 0.5, rng.random(70) < 0.5
        expected = sum(1 for s, t in zip(x, y) if s == t)
        assert matching_count(pack_sign_bits(x), pack_sign_bits(y), 70) == expected


def test_matching_count_over_a_row():
    row = pack_sign_bits(np.array([[1, 1, 0], [0, 0, 0], [1, 0, 1]], dtype=bool))
    query = pack_sign_bits(np.array([1, 1, 1], dtype=bool))
    np.testing.assert_array_equal(matching_count(row, query, 3), [2, 0, 2])


def test_keep_count_rounds_half_up_with_floor_of_one():
    assert keep_count(64, 0.5) == 32
    assert keep_count(3, 0.5) == 2
    assert keep_count(4, 0.99) == 1
    assert keep_count(10, 0.0) == 10
    with pytest.raises(ValueError):
        keep_count(10, 1.0)


def _instance(seed, j=24, d=40):
    rng = np.random.default_rng(seed)
    directions = pack_sign_bits(rng.random((3, j, d)) < 0.5)
    query_bits = pack_sign_bits(rng.random(d) < 0.5)
    return directions, query_bits, j, d


def test_no_discard_is_a_sorted_permutation():
    directions, query_bits, j, d = _instance(3)
    slots = select_neighbors(1, query_bits, directions, d, 0.0)
    assert sorted(slots.tolist()) == list(range(j))
    counts = matching_count(directions[1][slots], query_bits, d)
    assert np.all(np.diff(counts) <= 0)


def test_selection_equals_exhaustive_sort():
    for seed in range(10):
        directions, query_bits, j, d = _instance(seed)
        counts = matching_count(directions[2], query_bits, d)
        expected = sorted(range(j), key=lambda s: (-counts[s], s))[:keep_count(j, 0.5)]
        assert select_neighbors(2, query_bits, directions, d, 0.5).tolist() == expected


def test_two_aligned_neighbors_are_chosen():
    # slots 1 and 3 point the same way as the query, the rest oppose it
    d = 8
    query = np.ones(d, dtype=bool)
    row = np.zeros((4, d), dtype=bool)
    row[1] = True
    row[3, :7] = True
    directions = pack_sign_bits(row[None])
    slots = select_neighbors(0, pack_sign_bits(query), directions, d, 0.5)
    assert slots.tolist() == [1, 3]


def test_selections_are_nested_across_ratios():
    directions, query_bits, j, d = _instance(7)
    small = set(select_neighbors(0, query_bits, directions, d, 0.75).tolist())
    large = set(select_neighbors(0, query_bits, directions, d, 0.25).tolist())
    assert small <= large


def test_random_discard_keeps_distinct_slots():
    slots = random_discard(16, 0.5, stream(0, 99))
    assert len(slots) == 8 and len(set(slots.tolist())) == 8
    assert all(0 <= s < 16 for s in slots)


def test_cooldown_window():
    assert [i for i in range(10) if in_cooldown(i, 10, 0.3)] == [7, 8, 9]
    assert all(in_cooldown(i, 10, 1.0) for i in range(10))
    assert not any(in_cooldown(i, 10, 0.0) for i in range(10))
    with pytest.raises(ValueError):
        in_cooldown(0, 10, 1.5)
