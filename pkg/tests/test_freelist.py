"""First-fit extent allocator used for both the cache and the object region."""

import random

import pytest

from vnvheap.freelist import FirstFitAllocator, align_up


def test_align_up():
    assert align_up(0) == 0
    assert align_up(1) == 4
    assert align_up(4) == 4
    assert align_up(5) == 8
    assert align_up(10, 8) == 16


def test_alloc_is_first_fit():
    a = FirstFitAllocator(0, 100)
    x = a.alloc(10)
    y = a.alloc(10)
    assert (x, y) == (0, 12)  # 10 rounds to a 12-byte extent
    a.free(x, 10)
    # the freed hole at 0 is the first fit for anything that fits it
    assert a.alloc(8) == 0


def test_free_coalesces_neighbours():
    a = FirstFitAllocator(0, 48)
    offs = [a.alloc(12) for _ in range(4)]
    assert a.total_free() == 0
    a.free(offs[1], 12)
    a.free(offs[3], 12)
    assert len(a.free_extents()) == 2
    a.free(offs[2], 12)  # bridges both holes
    assert a.free_extents() == [(12, 36)]
    a.free(offs[0], 12)
    assert a.free_extents() == [(0, 48)]


def test_alloc_exhaustion_returns_none():
    a = FirstFitAllocator(0, 16)
    assert a.alloc(16) == 0
    assert a.alloc(1) is None


def test_double_free_is_a_bug():
    a = FirstFitAllocator(0, 32)
    off = a.alloc(8)
    a.free(off, 8)
    with pytest.raises(AssertionError):
        a.free(off, 8)


def test_allocate_at_carves_an_exact_range():
    a = FirstFitAllocator(100, 100)
    a.allocate_at(120, 20)
    assert a.total_free() == 80
    # the carved range is gone
    got = {a.alloc(40) for _ in range(2)}
    assert 120 not in got


def test_allocate_at_rejects_occupied_ranges():
    a = FirstFitAllocator(0, 64)
    a.allocate_at(0, 16)
    with pytest.raises(ValueError):
        a.allocate_at(12, 8)


def test_clone_is_independent():
    a = FirstFitAllocator(0, 64)
    a.alloc(16)
    b = a.clone()
    b.alloc(16)
    assert a.total_free() == 48
    assert b.total_free() == 32


def test_can_fit():
    a = FirstFitAllocator(0, 32)
    a.alloc(16)
    assert a.can_fit(16)
    assert not a.can_fit(20)


def test_randomized_against_byte_map_oracle():
    """Every byte is either inside exactly one live allocation or free.

    The oracle is a plain byte-occupancy array updated alongside the
    allocator; after every operation the allocator's free extents must
    describe exactly the unoccupied bytes.
    """
    rng = random.Random(0xF1EE)
    size = 256
    a = FirstFitAllocator(0, size, alignment=4)
    occupied = bytearray(size)  # 1 = allocated
    live: list[tuple[int, int]] = []

    def check():
        free_from_oracle = []
        i = 0
        while i < size:
            if occupied[i]:
                i += 1
                continue
            j = i
            while j < size and not occupied[j]:
                j += 1
            free_from_oracle.append((i, j - i))
            i = j
        assert a.free_extents() == free_from_oracle
        assert a.total_free() == sum(length for _, length in free_from_oracle)

    for _ in range(2000):
        if live and rng.random() < 0.45:
            off, n = live.pop(rng.randrange(len(live)))
            a.free(off, n)
            block = align_up(n)
            occupied[off : off + block] = bytes(block)
        else:
            n = rng.randint(1, 40)
            off = a.alloc(n)
            block = align_up(n)
            if off is None:
                assert not a.can_fit(block)
            else:
                assert off % 4 == 0
                assert not any(occupied[off : off + block])
                occupied[off : off + block] = b"\x01" * block
                live.append((off, n))
        check()
