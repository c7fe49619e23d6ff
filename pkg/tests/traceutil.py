"""Randomized operation traces checked against a shadow model.

The machine drives a heap with a seeded stream of operations while holding a
plain dict of what every object must contain. After every step it re-derives
the heap's invariants from scratch:

* the dirty total equals header + modified payload bytes + 3 per resident,
* the dirty total never exceeds the configured limit,
* modified and pinned objects are resident,
* resident cache blocks never overlap and stay inside the cache,
* object content matches the shadow.
"""

import random

from vnvheap import (
    CachePressureUnresolvableError,
    DirtyBudgetUnsatisfiableError,
    GuardActiveError,
    HEADER_CHARGE_BYTES,
    META_CHARGE_BYTES,
    OutOfNvmError,
    PreconditionError,
    SimulatedNvm,
    StillPinnedError,
    VnvHeap,
    WriteGuardActiveError,
    persist,
    restore,
)
from vnvheap.freelist import align_up

EXPECTED_PRESSURE_ERRORS = (
    CachePressureUnresolvableError,
    DirtyBudgetUnsatisfiableError,
    OutOfNvmError,
)


class TraceMachine:
    def __init__(self, seed, cache=1024, dirty=512, max_objects=32,
                 capacity=64 * 1024):
        self.rng = random.Random(seed)
        self.cache = cache
        self.dirty = dirty
        self.dev = SimulatedNvm(capacity)
        self.heap = VnvHeap(self.dev, cache_size_bytes=cache,
                            max_modified_state_bytes=dirty,
                            max_objects=max_objects)
        self.shadow = {}        # handle id -> bytearray
        self.handles = {}       # handle id -> ObjectHandle
        self.guards = []        # (handle id, guard, writable)

    # -- invariants ----------------------------------------------------------

    def check(self):
        heap = self.heap
        assert set(heap.live_handle_ids()) == set(self.shadow)
        infos = {hid: heap.object_info(self.handles[hid]) for hid in self.shadow}

        derived = HEADER_CHARGE_BYTES
        blocks = []
        for hid, info in infos.items():
            if info.modified:
                assert info.resident, f"object {hid} modified but not resident"
                derived += info.size_bytes
            if info.pinned:
                assert info.resident, f"object {hid} pinned but not resident"
            if info.resident:
                derived += META_CHARGE_BYTES
                assert 0 <= info.cache_offset
                assert info.cache_offset + info.size_bytes <= self.cache
                blocks.append((info.cache_offset,
                               align_up(info.size_bytes + META_CHARGE_BYTES)))
        assert heap.dirty_bytes == derived
        assert heap.dirty_bytes <= self.dirty

        blocks.sort()
        for (o1, n1), (o2, _) in zip(blocks, blocks[1:]):
            assert o1 + n1 <= o2, "resident cache blocks overlap"

        stats = heap.stats()
        assert stats.resident_count == sum(i.resident for i in infos.values())
        assert stats.pinned_count == sum(i.pinned for i in infos.values())

    def verify_content(self, hid):
        guard = self.heap.get_ref(self.handles[hid])
        try:
            assert guard.read() == bytes(self.shadow[hid])
        finally:
            guard.release()

    # -- operations ------------------------------------------------------------

    def op_alloc(self):
        size = self.rng.randint(1, self.dirty - 19 - META_CHARGE_BYTES)
        payload = bytes(self.rng.randrange(256) for _ in range(size))
        try:
            h = self.heap.alloc(payload)
        except EXPECTED_PRESSURE_ERRORS:
            return
        self.shadow[h.id] = bytearray(payload)
        self.handles[h.id] = h

    def op_dealloc(self):
        hid = self.pick()
        if hid is None:
            return
        try:
            self.heap.dealloc(self.handles[hid])
        except StillPinnedError:
            assert any(g[0] == hid for g in self.guards)
            return
        del self.shadow[hid], self.handles[hid]

    def op_read(self):
        hid = self.pick()
        if hid is None:
            return
        try:
            self.verify_content(hid)
        except EXPECTED_PRESSURE_ERRORS:
            pass
        except WriteGuardActiveError:
            assert any(g[0] == hid and g[2] for g in self.guards)

    def op_write(self):
        hid = self.pick()
        if hid is None or any(g[0] == hid for g in self.guards):
            return
        size = len(self.shadow[hid])
        at = self.rng.randrange(size)
        data = bytes(self.rng.randrange(256) for _ in range(self.rng.randint(1, size - at)))
        try:
            with self.heap.get_mut(self.handles[hid]) as w:
                w.write(data, at)
        except EXPECTED_PRESSURE_ERRORS:
            return
        self.shadow[hid][at : at + len(data)] = data

    def op_hold_guard(self):
        if len(self.guards) >= 4:
            return
        hid = self.pick()
        if hid is None or any(g[0] == hid for g in self.guards):
            return
        writable = self.rng.random() < 0.4
        try:
            g = (self.heap.get_mut if writable else self.heap.get_ref)(self.handles[hid])
        except EXPECTED_PRESSURE_ERRORS:
            return
        self.guards.append((hid, g, writable))

    def op_release_guard(self):
        if not self.guards:
            return
        hid, g, writable = self.guards.pop(self.rng.randrange(len(self.guards)))
        if writable:
            # make held-guard writes visible to the shadow before releasing
            data = bytes(self.rng.randrange(256) for _ in range(1))
            g.write(data, 0)
            self.shadow[hid][0:1] = data
        g.release()

    def op_sync(self):
        hid = self.pick()
        if hid is None:
            return
        try:
            self.heap.sync_object(self.handles[hid])
        except (PreconditionError, GuardActiveError):
            pass

    def op_unload(self):
        hid = self.pick()
        if hid is None:
            return
        try:
            self.heap.unload(self.handles[hid])
        except (PreconditionError, StillPinnedError):
            pass

    def op_persist(self):
        persist(self.heap)

    def pick(self):
        return self.rng.choice(sorted(self.shadow)) if self.shadow else None

    # -- driving -----------------------------------------------------------------

    OPS = [
        ("op_alloc", 5),
        ("op_dealloc", 2),
        ("op_read", 6),
        ("op_write", 5),
        ("op_hold_guard", 2),
        ("op_release_guard", 2),
        ("op_sync", 1),
        ("op_unload", 1),
        ("op_persist", 1),
    ]

    def run(self, steps):
        names = [n for n, w in self.OPS for _ in range(w)]
        for _ in range(steps):
            getattr(self, self.rng.choice(names))()
            self.check()
        for _, g, _ in self.guards:
            g.release()
        self.guards.clear()

    def power_cycle(self):
        """Persist, reboot, restore, and verify every byte survived."""
        persist(self.heap)
        self.dev = self.dev.reopen()
        self.heap, self.handles = restore(
            self.dev, cache_size_bytes=self.cache,
            max_modified_state_bytes=self.dirty)
        assert set(self.handles) == set(self.shadow)
        self.check()
        for hid in self.shadow:
            self.verify_content(hid)
            self.check()
