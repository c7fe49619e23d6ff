"""Ownership-checked virtually non-volatile heap over word-granular storage.

The heap stages NVM-backed objects through a small volatile cache, enforces
single-writer/multi-reader access through guards, keeps the amount of
modified state under a configured budget, and can therefore always be
checkpointed within a fixed number of word transfers.
"""

from .errors import (
    CachePressureUnresolvableError,
    ConfigInvalidError,
    DirtyBudgetUnsatisfiableError,
    GuardActiveError,
    GuardReleasedError,
    HeapPoisonedError,
    KeyNotFoundError,
    NoValidCheckpointError,
    ObjectTooLargeError,
    OutOfNvmError,
    OutOfRangeError,
    PowerFailureInjected,
    PreconditionError,
    QueueEmptyError,
    RamCapacityExceededError,
    SizeMismatchError,
    StaleHandleError,
    StillPinnedError,
    VnvHeapError,
    WriteGuardActiveError,
)
from .heap import (
    HEADER_CHARGE_BYTES,
    META_CHARGE_BYTES,
    HeapConfig,
    HeapStats,
    ObjectHandle,
    ObjectInfo,
    ReadGuard,
    VnvHeap,
    WriteGuard,
    init,
)
from .persistence import (
    EnergyModel,
    PersistReport,
    persist,
    persist_bound,
    restore,
    wcec_millijoules,
)
from .storage import (
    CostMeter,
    FileBackedNvm,
    SimulatedNvm,
    StorageDevice,
    WORD_BYTES,
    words_for,
)

__all__ = [
    "CachePressureUnresolvableError",
    "ConfigInvalidError",
    "CostMeter",
    "DirtyBudgetUnsatisfiableError",
    "EnergyModel",
    "FileBackedNvm",
    "GuardActiveError",
    "GuardReleasedError",
    "HEADER_CHARGE_BYTES",
    "HeapConfig",
    "HeapPoisonedError",
    "HeapStats",
    "KeyNotFoundError",
    "META_CHARGE_BYTES",
    "NoValidCheckpointError",
    "ObjectHandle",
    "ObjectInfo",
    "ObjectTooLargeError",
    "OutOfNvmError",
    "OutOfRangeError",
    "PersistReport",
    "PowerFailureInjected",
    "PreconditionError",
    "QueueEmptyError",
    "RamCapacityExceededError",
    "ReadGuard",
    "SimulatedNvm",
    "SizeMismatchError",
    "StaleHandleError",
    "StillPinnedError",
    "StorageDevice",
    "VnvHeap",
    "VnvHeapError",
    "WORD_BYTES",
    "WriteGuard",
    "WriteGuardActiveError",
    "init",
    "persist",
    "persist_bound",
    "restore",
    "wcec_millijoules",
    "words_for",
]
