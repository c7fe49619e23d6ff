"""On-device image layout and the double-buffered metadata table manager.

Image layout (all integers little-endian):

====================  =======================================================
offset 0              superblock, 24 bytes:
                      magic ``VNVH`` (4) | version u16 | active-slot u8 |
                      commit-flag u8 | slot A offset u32 | slot A length u32 |
                      slot B offset u32 | slot B length u32
24                    metadata slot A (``max_objects`` entries of 20 bytes)
24 + table length     metadata slot B (same shape)
after slot B          object region (payload extents)
====================  =======================================================

A metadata entry is ``handle id u32 | nvm offset u32 | size u32 | flags u8 |
pad u8*3 | cache offset u32``; flags bit 0 records pinned-at-persist. A handle
id of zero marks a free entry slot.

Commit protocol: version, active-slot and commit-flag share the superblock's
second word, so a single atomic word write publishes a new checkpoint. The
slot being committed must be fully written before that word; the other slot
("staging") is where all between-checkpoint entry writes go, keeping the
committed table untouched until the next flip.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .errors import ConfigInvalidError, NoValidCheckpointError
from .storage import StorageDevice, WORD_BYTES

MAGIC = b"VNVH"
VERSION = 1
SUPERBLOCK_BYTES = 24
COMMIT_WORD_OFFSET = 4  # version u16 | active u8 | commit u8, one word
ENTRY_BYTES = 20
ENTRY_WORDS = ENTRY_BYTES // WORD_BYTES
FLAG_PINNED = 0x01

_SB = struct.Struct("<4sHBBIIII")
_ENTRY = struct.Struct("<IIIB3xI")


def pack_entry(handle_id: int, nvm_offset: int, size: int, pinned: bool, cache_offset: int) -> bytes:
    flags = FLAG_PINNED if pinned else 0
    return _ENTRY.pack(handle_id, nvm_offset, size, flags, cache_offset)


def unpack_entry(raw: bytes | memoryview) -> tuple[int, int, int, int, int]:
    """-> (handle_id, nvm_offset, size, flags, cache_offset)"""
    return _ENTRY.unpack(bytes(raw))


FREE_ENTRY = pack_entry(0, 0, 0, False, 0)


@dataclass(frozen=True)
class ImageLayout:
    capacity_bytes: int
    max_objects: int
    table_a_offset: int
    table_b_offset: int
    table_bytes: int
    object_offset: int
    object_bytes: int

    @classmethod
    def compute(cls, capacity_bytes: int, max_objects: int) -> "ImageLayout":
        if max_objects < 1:
            raise ConfigInvalidError("max_objects must be >= 1")
        table_bytes = max_objects * ENTRY_BYTES
        object_offset = SUPERBLOCK_BYTES + 2 * table_bytes
        object_bytes = capacity_bytes - object_offset
        object_bytes -= object_bytes % WORD_BYTES
        if object_bytes < WORD_BYTES:
            raise ConfigInvalidError(
                f"device of {capacity_bytes} B leaves no object region for "
                f"{max_objects} metadata entries"
            )
        return cls(
            capacity_bytes=capacity_bytes,
            max_objects=max_objects,
            table_a_offset=SUPERBLOCK_BYTES,
            table_b_offset=SUPERBLOCK_BYTES + table_bytes,
            table_bytes=table_bytes,
            object_offset=object_offset,
            object_bytes=object_bytes,
        )

    def table_offset(self, index: int) -> int:
        return self.table_a_offset if index == 0 else self.table_b_offset


@dataclass
class Superblock:
    version: int
    active_slot: int
    committed: bool
    a_offset: int
    a_length: int
    b_offset: int
    b_length: int


def read_superblock(device: StorageDevice) -> Superblock:
    raw = device.read(0, SUPERBLOCK_BYTES)
    magic, version, active, commit, a_off, a_len, b_off, b_len = _SB.unpack(raw)
    if magic != MAGIC or version != VERSION:
        raise NoValidCheckpointError("device holds no recognizable heap image")
    return Superblock(version, active, commit == 1, a_off, a_len, b_off, b_len)


class CheckpointTables:
    """Owns the two metadata slots and the commit word.

    Volatile mirrors of both slots let every NVM table write be a minimal
    word-granular delta. Entry identity fields never change after allocation,
    so steady-state persists write almost nothing here: pin flags, cache
    offsets of pinned objects, and any deferred clears for objects whose
    deallocation predates the previous commit.
    """

    def __init__(self, device: StorageDevice, layout: ImageLayout) -> None:
        self.device = device
        self.layout = layout
        self.staging = 0
        self.committed: int | None = None
        self._mirror = [bytearray(layout.table_bytes), bytearray(layout.table_bytes)]
        # Slots with a nonzero id word, per table.
        self._occupied: list[set[int]] = [set(), set()]
        self.metadata_bytes_written = 0  # cumulative, callers diff it

    # -- formatting / adoption ---------------------------------------------

    def format(self) -> None:
        """Write a fresh superblock (no commit) and zero both tables."""
        lay = self.layout
        sb = _SB.pack(
            MAGIC, VERSION, 0, 0,
            lay.table_a_offset, lay.table_bytes,
            lay.table_b_offset, lay.table_bytes,
        )
        self.device.write(0, sb)
        zeros = bytes(lay.table_bytes)
        self.device.write(lay.table_a_offset, zeros)
        self.device.write(lay.table_b_offset, zeros)
        self.staging = 0
        self.committed = None
        self._mirror = [bytearray(lay.table_bytes), bytearray(lay.table_bytes)]
        self._occupied = [set(), set()]

    def adopt(self, superblock: Superblock) -> None:
        """Load mirrors from a device that already holds a committed image."""
        lay = self.layout
        for t in (0, 1):
            raw = self.device.read(lay.table_offset(t), lay.table_bytes)
            self._mirror[t] = bytearray(raw)
            occ = set()
            for slot in range(lay.max_objects):
                if raw[slot * ENTRY_BYTES : slot * ENTRY_BYTES + 4] != b"\x00\x00\x00\x00":
                    occ.add(slot)
            self._occupied[t] = occ
        self.committed = superblock.active_slot
        self.staging = 1 - superblock.active_slot

    # -- entry access -------------------------------------------------------

    def committed_entries(self) -> list[tuple[int, bytes]]:
        assert self.committed is not None
        table = self._mirror[self.committed]
        out = []
        for slot in sorted(self._occupied[self.committed]):
            out.append((slot, bytes(table[slot * ENTRY_BYTES : (slot + 1) * ENTRY_BYTES])))
        return out

    def free_slot(self, live_slots: set[int]) -> int | None:
        """Lowest slot that is free in truth and in both tables."""
        for slot in range(self.layout.max_objects):
            if slot in live_slots:
                continue
            if slot in self._occupied[0] or slot in self._occupied[1]:
                continue
            return slot
        return None

    # -- writes (all word-granular, metered by the device) ------------------

    def _write_entry(self, table: int, slot: int, entry: bytes) -> None:
        lay = self.layout
        base = slot * ENTRY_BYTES
        mirror = self._mirror[table]
        order = list(range(ENTRY_WORDS))
        if bytes(mirror[base : base + 4]) == b"\x00\x00\x00\x00":
            # Birth of an entry: the id word goes last, so a power failure in
            # the middle leaves the slot reading as free, never as a torn
            # half-written object.
            order = order[1:] + order[:1]
        for w in order:
            lo = base + w * WORD_BYTES
            want = entry[w * WORD_BYTES : (w + 1) * WORD_BYTES]
            if bytes(mirror[lo : lo + WORD_BYTES]) != want:
                self.device.write(lay.table_offset(table) + lo, want)
                mirror[lo : lo + WORD_BYTES] = want
                self.metadata_bytes_written += WORD_BYTES
        if entry[:4] == b"\x00\x00\x00\x00":
            self._occupied[table].discard(slot)
        else:
            self._occupied[table].add(slot)

    def record_alloc(self, slot: int, entry: bytes) -> None:
        """Write a new object's entry into both tables (birth is eager)."""
        self._write_entry(0, slot, entry)
        self._write_entry(1, slot, entry)

    def record_dealloc(self, slot: int) -> None:
        """Clear the staging id word; the committed table keeps the entry
        until the next flip so a fallback restore still sees the object."""
        self._clear_id(self.staging, slot)

    def _clear_id(self, table: int, slot: int) -> None:
        lay = self.layout
        lo = slot * ENTRY_BYTES
        mirror = self._mirror[table]
        if bytes(mirror[lo : lo + 4]) != b"\x00\x00\x00\x00":
            self.device.write(lay.table_offset(table) + lo, b"\x00\x00\x00\x00")
            mirror[lo : lo + 4] = b"\x00\x00\x00\x00"
            self.metadata_bytes_written += WORD_BYTES
        self._occupied[table].discard(slot)

    def drain(self, live_slots: set[int], max_slots: int) -> int:
        """Clear up to ``max_slots`` stale dead entries in the staging table.

        Called from operations that already transfer words, so the deferred
        clears left behind by a slot flip never pile up for persist to pay.
        """
        cleared = 0
        for slot in sorted(self._occupied[self.staging] - live_slots):
            if cleared >= max_slots:
                break
            self._clear_id(self.staging, slot)
            cleared += 1
        return cleared

    def flush_truth(self, truth: dict[int, bytes]) -> None:
        """Make the staging table byte-identical to ``truth`` (live entries)
        for every slot that could differ. Dead slots only need a zero id."""
        staging = self.staging
        for slot in sorted(set(truth) | (self._occupied[staging] - set(truth))):
            if slot in truth:
                self._write_entry(staging, slot, truth[slot])
            else:
                self._clear_id(staging, slot)

    def commit(self) -> None:
        """Atomically publish the staging table and flip the roles."""
        word = struct.pack("<HBB", VERSION, self.staging, 1)
        self.device.write(COMMIT_WORD_OFFSET, word)
        self.metadata_bytes_written += WORD_BYTES
        self.committed = self.staging
        self.staging = 1 - self.staging
