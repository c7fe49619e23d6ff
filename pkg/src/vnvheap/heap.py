"""Ownership-checked virtually non-volatile heap.

Objects live in NVM extents and are staged through a fixed-size volatile
cache at whole-object granularity. Access goes through guards: any number of
live read guards, or exactly one write guard, never both. A guard pins its
object in the cache; pinned objects are never evicted and keep a stable cache
address for the guard's lifetime.

Two budgets constrain every operation:

* cache space - each resident object occupies ``align4(size + 3)`` bytes of
  the cache buffer (3 bytes model the packed per-object metadata that lives
  beside the payload).
* modified state - ``dirty_bytes`` = sum of modified payload sizes
  + 3 bytes per resident object + a fixed 16-byte persist header, and must
  never exceed ``max_modified_state_bytes``. The heap enforces this by
  syncing (and under cache pressure also unloading) the oldest unpinned
  residents first, in cache-arrival order.

The bound matters because checkpointing writes only modified state: a heap
that keeps ``dirty_bytes`` under the limit can always be persisted within a
fixed, configuration-derived number of word transfers.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass

from .errors import (
    CachePressureUnresolvableError,
    ConfigInvalidError,
    DirtyBudgetUnsatisfiableError,
    GuardActiveError,
    GuardReleasedError,
    HeapPoisonedError,
    ObjectTooLargeError,
    OutOfNvmError,
    PowerFailureInjected,
    PreconditionError,
    StaleHandleError,
    StillPinnedError,
    WriteGuardActiveError,
)
from .freelist import FirstFitAllocator, align_up
from .layout import CheckpointTables, ImageLayout, pack_entry
from .storage import StorageDevice, WORD_BYTES

HEADER_CHARGE_BYTES = 16
META_CHARGE_BYTES = 3


@dataclass(frozen=True)
class HeapConfig:
    """Validated heap parameters."""

    cache_size_bytes: int = 4096
    max_modified_state_bytes: int = 2048
    max_objects: int = 1024

    def __post_init__(self) -> None:
        if self.cache_size_bytes < align_up(1 + META_CHARGE_BYTES):
            raise ConfigInvalidError("cache cannot hold even a one-byte object")
        if self.cache_size_bytes % WORD_BYTES:
            raise ConfigInvalidError("cache size must be word-aligned")
        if self.max_modified_state_bytes <= 0:
            raise ConfigInvalidError("modified-state limit must be positive")
        if self.max_modified_state_bytes > self.cache_size_bytes:
            raise ConfigInvalidError("modified-state limit exceeds the cache size")
        if self.max_modified_state_bytes < HEADER_CHARGE_BYTES:
            raise ConfigInvalidError(
                "modified-state limit cannot cover the fixed persist header"
            )
        if self.max_objects < 1:
            raise ConfigInvalidError("max_objects must be >= 1")


@dataclass
class ObjectMeta:
    """Per-object state record (internal)."""

    handle_id: int
    entry_slot: int
    nvm_offset: int
    size_bytes: int
    resident: bool = False
    modified: bool = False
    pin_count: int = 0
    write_guarded: bool = False
    restored_pin: bool = False
    cache_offset: int = -1

    @property
    def pinned(self) -> bool:
        return self.pin_count > 0

    @property
    def block_bytes(self) -> int:
        return align_up(self.size_bytes + META_CHARGE_BYTES)


@dataclass(frozen=True)
class ObjectInfo:
    """Public snapshot of one object's state."""

    handle_id: int
    size_bytes: int
    resident: bool
    modified: bool
    pinned: bool
    cache_offset: int
    nvm_offset: int


@dataclass(frozen=True)
class HeapStats:
    resident_bytes: int
    dirty_bytes: int
    resident_count: int
    pinned_count: int
    cache_free_bytes: int
    nvm_free_bytes: int


class ObjectHandle:
    """Names one allocation from creation to deallocation.

    Only valid with the heap that produced it. The ``id`` is stable across
    persist/restore cycles, which is how an application reattaches its state
    after a power cycle.
    """

    __slots__ = ("id", "size_bytes", "_heap")

    def __init__(self, handle_id: int, size_bytes: int, heap: "VnvHeap") -> None:
        self.id = handle_id
        self.size_bytes = size_bytes
        self._heap = heap

    def __repr__(self) -> str:
        return f"ObjectHandle(id={self.id}, size={self.size_bytes})"


class _Guard:
    def __init__(self, heap: "VnvHeap", meta: ObjectMeta, writable: bool) -> None:
        self._heap = heap
        self._meta = meta
        self._writable = writable
        view = memoryview(heap._cache)[meta.cache_offset : meta.cache_offset + meta.size_bytes]
        self._view = view if writable else view.toreadonly()
        self._released = False

    def _check_live(self) -> None:
        if self._released:
            raise GuardReleasedError("guard was already released")

    @property
    def data(self) -> memoryview:
        """Zero-copy view of the payload. Invalid after release."""
        self._check_live()
        return self._view

    def read(self, offset: int = 0, length: int | None = None) -> bytes:
        self._check_live()
        if length is None:
            length = self._meta.size_bytes - offset
        if offset < 0 or length < 0 or offset + length > self._meta.size_bytes:
            raise PreconditionError("read outside the object")
        return bytes(self._view[offset : offset + length])

    def release(self) -> None:
        self._check_live()
        self._released = True
        self._view.release()
        self._heap._release_guard(self._meta, self._writable)

    @property
    def released(self) -> bool:
        return self._released

    def __enter__(self):
        self._check_live()
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        if not self._released:
            self.release()


class ReadGuard(_Guard):
    """Shared, immutable access to a resident object."""

    def __init__(self, heap: "VnvHeap", meta: ObjectMeta) -> None:
        super().__init__(heap, meta, writable=False)


class WriteGuard(_Guard):
    """Exclusive, mutable access; the object is charged as modified."""

    def __init__(self, heap: "VnvHeap", meta: ObjectMeta) -> None:
        super().__init__(heap, meta, writable=True)

    def write(self, data: bytes | bytearray | memoryview, offset: int = 0) -> None:
        self._check_live()
        data = bytes(data)
        if offset < 0 or offset + len(data) > self._meta.size_bytes:
            raise PreconditionError("write outside the object")
        self._view[offset : offset + len(data)] = data


class VnvHeap:
    """The heap itself. See the module docstring for the model."""

    def __init__(
        self,
        device: StorageDevice,
        cache_size_bytes: int = 4096,
        max_modified_state_bytes: int = 2048,
        max_objects: int = 1024,
        _adopt_layout: ImageLayout | None = None,
    ) -> None:
        self.config = HeapConfig(cache_size_bytes, max_modified_state_bytes, max_objects)
        self.device = device
        self.layout = _adopt_layout or ImageLayout.compute(device.capacity_bytes, max_objects)
        self._cache = bytearray(cache_size_bytes)
        self._cache_alloc = FirstFitAllocator(0, cache_size_bytes)
        self._nvm_alloc = FirstFitAllocator(self.layout.object_offset, self.layout.object_bytes)
        self._metas: dict[int, ObjectMeta] = {}
        self._residents: dict[int, ObjectMeta] = {}  # insertion order = cache arrival
        self._live_slots: set[int] = set()
        self._dirty = HEADER_CHARGE_BYTES
        self._quarantine: list[tuple[int, int]] = []
        self._next_id = 1
        self._poisoned = False
        self.tables = CheckpointTables(device, self.layout)
        if _adopt_layout is None:
            self.tables.format()

    # -- inspection ---------------------------------------------------------

    @property
    def dirty_bytes(self) -> int:
        return self._dirty

    def stats(self) -> HeapStats:
        return HeapStats(
            resident_bytes=sum(m.size_bytes for m in self._residents.values()),
            dirty_bytes=self._dirty,
            resident_count=len(self._residents),
            pinned_count=sum(1 for m in self._metas.values() if m.pinned),
            cache_free_bytes=self._cache_alloc.total_free(),
            nvm_free_bytes=self._nvm_alloc.total_free(),
        )

    def object_info(self, handle: ObjectHandle) -> ObjectInfo:
        m = self._resolve(handle)
        return ObjectInfo(
            handle_id=m.handle_id,
            size_bytes=m.size_bytes,
            resident=m.resident,
            modified=m.modified,
            pinned=m.pinned,
            cache_offset=m.cache_offset if m.resident else -1,
            nvm_offset=m.nvm_offset,
        )

    def live_handle_ids(self) -> list[int]:
        return sorted(self._metas)

    def handle(self, handle_id: int) -> ObjectHandle:
        """Reattach a handle by its stable id (e.g. after restore)."""
        meta = self._metas.get(handle_id)
        if meta is None:
            raise StaleHandleError(f"no live object with id {handle_id}")
        return ObjectHandle(meta.handle_id, meta.size_bytes, self)

    # -- allocation ---------------------------------------------------------

    def alloc(self, payload: bytes | bytearray | memoryview) -> ObjectHandle:
        """Create an object holding ``payload``. It starts resident and
        modified (nothing has been synced to its extent yet)."""
        self._check_usable()
        payload = bytes(payload)
        size = len(payload)
        if size == 0:
            raise PreconditionError("zero-sized objects are not representable")
        if size + META_CHARGE_BYTES > self.config.cache_size_bytes:
            raise ObjectTooLargeError(
                f"{size} B object cannot ever be cached "
                f"(cache is {self.config.cache_size_bytes} B)"
            )
        if size + META_CHARGE_BYTES + HEADER_CHARGE_BYTES > self.config.max_modified_state_bytes:
            raise DirtyBudgetUnsatisfiableError(
                f"{size} B object cannot fit the modified-state limit"
            )
        slot = self.tables.free_slot(self._live_slots)
        if slot is None:
            raise OutOfNvmError("metadata table is full")
        nvm_offset = self._nvm_alloc.alloc(size)
        if nvm_offset is None:
            raise OutOfNvmError(f"no free NVM extent of {size} B")
        block = align_up(size + META_CHARGE_BYTES)
        try:
            cache_offset = self._make_cache_room(block)
            try:
                self._make_dirty_room(size + META_CHARGE_BYTES)
            except Exception:
                self._cache_alloc.free(cache_offset, block)
                raise
        except Exception:
            self._nvm_alloc.free(nvm_offset, size)
            raise

        handle_id = self._next_id
        self._next_id += 1
        # Entry identity never changes, so it is written to both tables now;
        # persist() then only ever touches pin flags and deferred clears.
        self._live_slots.add(slot)
        with self._poison_on_power_failure():
            self.tables.record_alloc(slot, pack_entry(handle_id, nvm_offset, size, False, 0))
            self.tables.drain(self._live_slots, 2)

        meta = ObjectMeta(handle_id, slot, nvm_offset, size, resident=True,
                          modified=True, cache_offset=cache_offset)
        self._cache[cache_offset : cache_offset + size] = payload
        self._metas[handle_id] = meta
        self._residents[handle_id] = meta
        self._dirty += size + META_CHARGE_BYTES
        return ObjectHandle(handle_id, size, self)

    def dealloc(self, handle: ObjectHandle) -> None:
        """Drop an object. Its extent is quarantined until the next commit so
        a checkpoint fallback can still restore it."""
        self._check_usable()
        meta = self._resolve(handle)
        if meta.pinned:
            raise StillPinnedError(f"object {meta.handle_id} has a live guard")
        if meta.resident:
            self._cache_alloc.free(meta.cache_offset, meta.block_bytes)
            del self._residents[meta.handle_id]
            self._dirty -= META_CHARGE_BYTES
            if meta.modified:
                self._dirty -= meta.size_bytes
        del self._metas[meta.handle_id]
        self._live_slots.discard(meta.entry_slot)
        self._quarantine.append((meta.nvm_offset, meta.size_bytes))
        with self._poison_on_power_failure():
            self.tables.record_dealloc(meta.entry_slot)
            self.tables.drain(self._live_slots, 2)

    # -- access -------------------------------------------------------------

    def get_ref(self, handle: ObjectHandle) -> ReadGuard:
        """Shared read access. Loads the object if it is swapped out."""
        self._check_usable()
        meta = self._resolve(handle)
        if meta.write_guarded:
            raise WriteGuardActiveError(f"object {meta.handle_id} has a live write guard")
        self._ensure_resident(meta)
        meta.pin_count += 1
        return ReadGuard(self, meta)

    def get_mut(self, handle: ObjectHandle) -> WriteGuard:
        """Exclusive write access. Charges the full object size to the dirty
        budget up front, whether or not the caller writes."""
        self._check_usable()
        meta = self._resolve(handle)
        if meta.pinned:
            raise GuardActiveError(f"object {meta.handle_id} is already guarded")
        if (meta.size_bytes + META_CHARGE_BYTES + HEADER_CHARGE_BYTES
                > self.config.max_modified_state_bytes):
            raise DirtyBudgetUnsatisfiableError(
                f"{meta.size_bytes} B object cannot fit the modified-state limit"
            )
        self._ensure_resident(meta)
        self._mark_modified(meta)
        meta.pin_count = 1
        meta.write_guarded = True
        return WriteGuard(self, meta)

    def _release_guard(self, meta: ObjectMeta, writable: bool) -> None:
        meta.pin_count -= 1
        if writable:
            meta.write_guarded = False

    def release_restored_pin(self, handle: ObjectHandle) -> None:
        """Drop the pin a restore placed on an object that was guarded when
        the checkpoint was taken."""
        meta = self._resolve(handle)
        if not meta.restored_pin:
            raise PreconditionError(f"object {meta.handle_id} holds no restored pin")
        meta.restored_pin = False
        meta.pin_count -= 1

    # -- explicit state management -------------------------------------------

    def sync_object(self, handle: ObjectHandle) -> None:
        """Write a modified resident object back to its extent."""
        self._check_usable()
        meta = self._resolve(handle)
        if meta.write_guarded:
            raise GuardActiveError("cannot sync under a live write guard")
        if not meta.resident or not meta.modified:
            raise PreconditionError("sync requires a modified, resident object")
        self._sync(meta)
        with self._poison_on_power_failure():
            self.tables.drain(self._live_slots, 2)

    def unload(self, handle: ObjectHandle) -> None:
        """Drop a clean, unpinned object from the cache. No transfers."""
        self._check_usable()
        meta = self._resolve(handle)
        if not meta.resident:
            raise PreconditionError("object is not resident")
        if meta.pinned:
            raise StillPinnedError("pinned objects cannot be unloaded")
        if meta.modified:
            raise PreconditionError("sync the object before unloading it")
        self._unload(meta)

    def choose_victims(self, needed_cache_bytes: int = 0, needed_dirty_bytes: int = 0) -> list[int]:
        """Plan (without acting) which residents the heap would evict or sync
        to admit ``needed_cache_bytes`` of payload and/or ``needed_dirty_bytes``
        of new modified state. Returns handle ids, oldest arrival first."""
        limit = self.config.max_modified_state_bytes
        sim_cache = self._cache_alloc.clone()
        sim_dirty = self._dirty
        block = align_up(needed_cache_bytes + META_CHARGE_BYTES) if needed_cache_bytes else 0
        plan: list[int] = []

        def cache_ok() -> bool:
            return block == 0 or sim_cache.can_fit(block)

        def dirty_ok() -> bool:
            return sim_dirty + needed_dirty_bytes <= limit

        for meta in list(self._residents.values()):
            if cache_ok() and dirty_ok():
                break
            if meta.pinned:
                continue
            if not cache_ok():
                sim_cache.free(meta.cache_offset, meta.block_bytes)
                sim_dirty -= META_CHARGE_BYTES
                if meta.modified:
                    sim_dirty -= meta.size_bytes
                plan.append(meta.handle_id)
            elif not dirty_ok() and meta.modified:
                sim_dirty -= meta.size_bytes
                plan.append(meta.handle_id)
        if not cache_ok():
            raise CachePressureUnresolvableError("every resident is pinned")
        if not dirty_ok():
            raise DirtyBudgetUnsatisfiableError("cannot retire enough modified state")
        return plan

    # -- internals ------------------------------------------------------------

    def _check_usable(self) -> None:
        if self._poisoned:
            raise HeapPoisonedError("heap is unusable after an interrupted persist")

    @contextmanager
    def _poison_on_power_failure(self):
        # Any interrupted transfer leaves volatile bookkeeping out of step with
        # the device; the only way forward is restore() from the image.
        try:
            yield
        except PowerFailureInjected:
            self._poisoned = True
            raise

    def _resolve(self, handle: ObjectHandle) -> ObjectMeta:
        if handle._heap is not self:
            raise StaleHandleError("handle belongs to a different heap")
        meta = self._metas.get(handle.id)
        if meta is None:
            raise StaleHandleError(f"object {handle.id} was deallocated")
        return meta

    def _ensure_resident(self, meta: ObjectMeta) -> None:
        if meta.resident:
            return
        # Residency itself charges 3 bytes of metadata to the dirty budget.
        self._make_dirty_room(META_CHARGE_BYTES)
        offset = self._make_cache_room(meta.block_bytes)
        with self._poison_on_power_failure():
            payload = self.device.read(meta.nvm_offset, meta.size_bytes)
        self._cache[offset : offset + meta.size_bytes] = payload
        meta.resident = True
        meta.cache_offset = offset
        self._residents[meta.handle_id] = meta
        self._dirty += META_CHARGE_BYTES

    def _mark_modified(self, meta: ObjectMeta) -> None:
        if meta.modified:
            return
        self._make_dirty_room(meta.size_bytes)
        meta.modified = True
        self._dirty += meta.size_bytes

    def _make_cache_room(self, block: int) -> int:
        while True:
            offset = self._cache_alloc.alloc(block)
            if offset is not None:
                return offset
            victim = next((m for m in self._residents.values() if not m.pinned), None)
            if victim is None:
                raise CachePressureUnresolvableError(
                    f"no unpinned resident to evict for a {block} B block"
                )
            if victim.modified:
                self._sync(victim)
            self._unload(victim)

    def _make_dirty_room(self, extra: int) -> None:
        limit = self.config.max_modified_state_bytes
        while self._dirty + extra > limit:
            victim = next(
                (m for m in self._residents.values() if m.modified and not m.pinned),
                None,
            )
            if victim is None:
                raise DirtyBudgetUnsatisfiableError(
                    f"{extra} B of new modified state cannot be admitted"
                )
            self._sync(victim)

    def _sync(self, meta: ObjectMeta) -> None:
        self._write_payload(meta)
        meta.modified = False
        self._dirty -= meta.size_bytes

    def _write_payload(self, meta: ObjectMeta) -> None:
        start = meta.cache_offset
        with self._poison_on_power_failure():
            self.device.write(meta.nvm_offset, self._cache[start : start + meta.size_bytes])

    def _unload(self, meta: ObjectMeta) -> None:
        self._cache_alloc.free(meta.cache_offset, meta.block_bytes)
        del self._residents[meta.handle_id]
        meta.resident = False
        meta.cache_offset = -1
        self._dirty -= META_CHARGE_BYTES

    def _entry_truth(self) -> dict[int, bytes]:
        """Current table content as it must appear in a committed slot."""
        truth: dict[int, bytes] = {}
        for meta in self._metas.values():
            pinned = meta.pinned
            truth[meta.entry_slot] = pack_entry(
                meta.handle_id,
                meta.nvm_offset,
                meta.size_bytes,
                pinned,
                meta.cache_offset if pinned else 0,
            )
        return truth


def init(
    device: StorageDevice,
    cache_size_bytes: int = 4096,
    max_modified_state_bytes: int = 2048,
    max_objects: int = 1024,
) -> VnvHeap:
    """Format ``device`` and return an empty heap on it."""
    return VnvHeap(device, cache_size_bytes, max_modified_state_bytes, max_objects)
