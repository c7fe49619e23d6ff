"""First-fit free-list allocator used for both the cache buffer and the NVM
object region. Offsets and lengths are kept word-aligned."""

from __future__ import annotations

from bisect import insort

from .storage import WORD_BYTES


def align_up(n: int, alignment: int = WORD_BYTES) -> int:
    return (n + alignment - 1) // alignment * alignment


class FirstFitAllocator:
    """Manages free extents of ``[start, start + size)`` in address order.

    ``alloc`` returns the lowest-addressed fit (deterministic), ``free``
    coalesces with adjacent extents. All requests are rounded up to the
    alignment, so callers must free with the same length they allocated.
    """

    def __init__(self, start: int, size: int, alignment: int = WORD_BYTES) -> None:
        assert start % alignment == 0 and size % alignment == 0
        self.start = start
        self.size = size
        self.alignment = alignment
        self._free: list[list[int]] = [[start, size]] if size else []

    def alloc(self, nbytes: int) -> int | None:
        """Return the offset of a new extent, or None if nothing fits."""
        assert nbytes > 0
        need = align_up(nbytes, self.alignment)
        for ext in self._free:
            if ext[1] >= need:
                offset = ext[0]
                ext[0] += need
                ext[1] -= need
                if ext[1] == 0:
                    self._free.remove(ext)
                return offset
        return None

    def allocate_at(self, offset: int, nbytes: int) -> None:
        """Carve a specific extent out of the free space (restore path)."""
        need = align_up(nbytes, self.alignment)
        for i, (off, length) in enumerate(self._free):
            if off <= offset and offset + need <= off + length:
                del self._free[i]
                if offset > off:
                    insort(self._free, [off, offset - off])
                tail = (off + length) - (offset + need)
                if tail:
                    insort(self._free, [offset + need, tail])
                return
        raise ValueError(f"extent [{offset}, {offset + need}) is not free")

    def free(self, offset: int, nbytes: int) -> None:
        assert nbytes > 0
        length = align_up(nbytes, self.alignment)
        assert self.start <= offset and offset + length <= self.start + self.size
        for off, ln in self._free:
            assert offset + length <= off or off + ln <= offset, "double free"
        insort(self._free, [offset, length])
        self._coalesce()

    def _coalesce(self) -> None:
        merged: list[list[int]] = []
        for ext in self._free:
            if merged and merged[-1][0] + merged[-1][1] == ext[0]:
                merged[-1][1] += ext[1]
            else:
                merged.append(ext)
        self._free = merged

    def can_fit(self, nbytes: int) -> bool:
        need = align_up(nbytes, self.alignment)
        return any(length >= need for _, length in self._free)

    def total_free(self) -> int:
        return sum(length for _, length in self._free)

    def free_extents(self) -> list[tuple[int, int]]:
        return [(off, length) for off, length in self._free]

    def clone(self) -> "FirstFitAllocator":
        c = FirstFitAllocator(self.start, 0, self.alignment)
        c.size = self.size
        c._free = [list(ext) for ext in self._free]
        return c
