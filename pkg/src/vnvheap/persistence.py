"""Checkpointing: persist the heap's modified state, restore it after a
power cycle, and bound/estimate the cost of doing so.

persist() writes, in order: every modified payload (in cache-arrival order),
the word-granular metadata deltas for the staging table (pin flags, cache
offsets of pinned objects, deferred clears), and finally one commit word that
atomically publishes the staging table. Because object identity entries were
already written when the objects were allocated, the transfer count is capped
by the modified-state budget: ``persist_bound()`` words, independent of cache
size. A power failure anywhere in the sequence leaves the previous committed
checkpoint readable.

restore() rebuilds a heap from the committed table: objects that were pinned
when the checkpoint was taken come back resident at their recorded cache
offsets (so outstanding accesses stay meaningful); everything else starts
swapped out and loads lazily on first access.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import NoValidCheckpointError, PowerFailureInjected
from .heap import HEADER_CHARGE_BYTES, META_CHARGE_BYTES, HeapConfig, ObjectHandle, ObjectMeta, VnvHeap
from .layout import ENTRY_BYTES, ImageLayout, read_superblock, unpack_entry
from .storage import StorageDevice, WORD_BYTES, words_for


@dataclass(frozen=True)
class EnergyModel:
    """Worst-case energy parameters of the persist path."""

    power_milliwatts: float = 132.0
    word_transfer_seconds: float = 1e-6


@dataclass(frozen=True)
class PersistReport:
    words_transferred: int
    objects_synced: int
    metadata_bytes_written: int


def persist_bound(config: HeapConfig) -> int:
    """Worst-case words one persist may transfer. Depends only on the
    modified-state limit (plus the fixed header), never on cache size."""
    return words_for(config.max_modified_state_bytes + HEADER_CHARGE_BYTES)


def wcec_millijoules(words: int, model: EnergyModel = EnergyModel()) -> float:
    """Energy to move ``words`` at the model's transfer latency and power."""
    return words * model.word_transfer_seconds * model.power_milliwatts


def persist(heap: VnvHeap) -> PersistReport:
    """Checkpoint the heap. The heap stays usable afterwards: guards stay
    live, residents stay resident, and only the modified flags of objects
    without a live write guard are cleared."""
    heap._check_usable()
    meter = heap.device.cost_meter
    written_before = meter.words_written
    metadata_before = heap.tables.metadata_bytes_written
    synced = 0
    try:
        for meta in list(heap._residents.values()):
            if not meta.modified:
                continue
            heap._write_payload(meta)
            synced += 1
            if not meta.write_guarded:
                # A live write guard keeps the object charged as modified:
                # its holder can keep writing after we return.
                meta.modified = False
                heap._dirty -= meta.size_bytes
        heap.tables.flush_truth(heap._entry_truth())
        heap.tables.commit()
    except PowerFailureInjected:
        heap._poisoned = True
        raise
    # The commit published every deallocation, so quarantined extents are
    # safe to reuse now.
    for offset, size in heap._quarantine:
        heap._nvm_alloc.free(offset, size)
    heap._quarantine.clear()
    return PersistReport(
        words_transferred=meter.words_written - written_before,
        objects_synced=synced,
        metadata_bytes_written=heap.tables.metadata_bytes_written - metadata_before,
    )


def restore(
    device: StorageDevice,
    cache_size_bytes: int = 4096,
    max_modified_state_bytes: int = 2048,
) -> tuple[VnvHeap, dict[int, ObjectHandle]]:
    """Rebuild a heap from the device's committed checkpoint.

    Returns the heap and a handle per surviving object, keyed by the stable
    handle id the application saw before the power cycle.
    """
    superblock = read_superblock(device)
    if not superblock.committed:
        raise NoValidCheckpointError("device was formatted but never persisted")
    if superblock.a_length != superblock.b_length or superblock.a_length % ENTRY_BYTES:
        raise NoValidCheckpointError("metadata slot geometry is inconsistent")
    max_objects = superblock.a_length // ENTRY_BYTES
    layout = ImageLayout.compute(device.capacity_bytes, max_objects)
    if (layout.table_a_offset, layout.table_b_offset) != (superblock.a_offset, superblock.b_offset):
        raise NoValidCheckpointError("metadata slot offsets do not match the device size")

    heap = VnvHeap(
        device,
        cache_size_bytes=cache_size_bytes,
        max_modified_state_bytes=max_modified_state_bytes,
        max_objects=max_objects,
        _adopt_layout=layout,
    )
    heap.tables.adopt(superblock)

    pinned: list[tuple[int, ObjectMeta]] = []
    for slot, raw in heap.tables.committed_entries():
        handle_id, nvm_offset, size, flags, cache_offset = unpack_entry(raw)
        meta = ObjectMeta(handle_id, slot, nvm_offset, size)
        heap._nvm_alloc.allocate_at(nvm_offset, size)
        heap._metas[handle_id] = meta
        heap._live_slots.add(slot)
        heap._next_id = max(heap._next_id, handle_id + 1)
        if flags & 0x01:
            pinned.append((cache_offset, meta))

    # Objects pinned at persist time come back resident at the exact cache
    # offsets their guards saw; everything else reloads lazily.
    for cache_offset, meta in sorted(pinned, key=lambda p: p[0]):
        heap._cache_alloc.allocate_at(cache_offset, meta.block_bytes)
        payload = device.read(meta.nvm_offset, meta.size_bytes)
        heap._cache[cache_offset : cache_offset + meta.size_bytes] = payload
        meta.resident = True
        meta.cache_offset = cache_offset
        meta.pin_count = 1
        meta.restored_pin = True
        heap._residents[meta.handle_id] = meta
        heap._dirty += META_CHARGE_BYTES

    # Bring the staging table up to date now so the next persist stays a
    # minimal delta (the staging slot may predate this checkpoint).
    heap.tables.flush_truth(heap._entry_truth())

    handles = {
        handle_id: ObjectHandle(handle_id, meta.size_bytes, heap)
        for handle_id, meta in heap._metas.items()
    }
    return heap, handles
