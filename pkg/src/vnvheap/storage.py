"""Simulated non-volatile storage with a word-granular cost and failure model.

Every transfer moves 4-byte words: reading or writing ``n`` bytes costs
``ceil(n / 4)`` words, mirroring a transport that issues one bus transaction
per word. Word writes are atomic. A device can be armed with a transfer
budget; the transfer after the budget is exhausted raises
:class:`~vnvheap.errors.PowerFailureInjected`, leaving every word written
before it durable and the failing word untouched.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

from .errors import OutOfRangeError, PowerFailureInjected

WORD_BYTES = 4

DEFAULT_CAPACITY_BYTES = 512 * 1024


def words_for(length_bytes: int) -> int:
    """Number of word transfers needed to move ``length_bytes`` bytes."""
    return (length_bytes + WORD_BYTES - 1) // WORD_BYTES


@dataclass
class CostMeter:
    """Counts word transfers performed by one device."""

    words_read: int = 0
    words_written: int = 0

    @property
    def words_total(self) -> int:
        return self.words_read + self.words_written

    def reset(self) -> None:
        self.words_read = 0
        self.words_written = 0

    def snapshot(self) -> tuple[int, int]:
        return (self.words_read, self.words_written)


class StorageDevice:
    """Base class: bounds checks, metering, and fault injection.

    Subclasses provide ``_read_raw``/``_write_raw`` over their backing store.
    """

    def __init__(self, capacity_bytes: int) -> None:
        if capacity_bytes <= 0:
            raise OutOfRangeError(f"capacity must be positive, got {capacity_bytes}")
        self.capacity_bytes = capacity_bytes
        self.cost_meter = CostMeter()
        self._budget_words: int | None = None

    # -- fault plan -------------------------------------------------------

    def arm_power_failure(self, budget_words: int) -> None:
        """Permit exactly ``budget_words`` further word transfers."""
        if budget_words < 0:
            raise ValueError("budget_words must be >= 0")
        self._budget_words = budget_words

    def disarm_power_failure(self) -> None:
        self._budget_words = None

    @property
    def armed(self) -> bool:
        return self._budget_words is not None

    @property
    def remaining_budget_words(self) -> int | None:
        return self._budget_words

    # -- transfers --------------------------------------------------------

    def _check_range(self, offset: int, length: int) -> None:
        if length < 0:
            raise OutOfRangeError(f"negative length {length}")
        if offset < 0 or offset + length > self.capacity_bytes:
            raise OutOfRangeError(
                f"[{offset}, {offset + length}) outside capacity {self.capacity_bytes}"
            )

    def read(self, offset: int, length: int) -> bytes:
        self._check_range(offset, length)
        if length == 0:
            return b""
        if self._budget_words is None:
            self.cost_meter.words_read += words_for(length)
            return self._read_raw(offset, length)
        # Armed: transfer word by word so the failure lands on a word boundary.
        out = bytearray()
        pos = offset
        end = offset + length
        while pos < end:
            step = min(WORD_BYTES, end - pos)
            if self._budget_words == 0:
                raise PowerFailureInjected(
                    f"transfer budget exhausted reading [{pos}, {pos + step})"
                )
            self._budget_words -= 1
            self.cost_meter.words_read += 1
            out += self._read_raw(pos, step)
            pos += step
        return bytes(out)

    def write(self, offset: int, data: bytes | bytearray | memoryview) -> None:
        data = bytes(data)
        self._check_range(offset, len(data))
        if not data:
            return
        if self._budget_words is None:
            self.cost_meter.words_written += words_for(len(data))
            self._write_raw(offset, data)
            return
        pos = 0
        while pos < len(data):
            step = min(WORD_BYTES, len(data) - pos)
            if self._budget_words == 0:
                raise PowerFailureInjected(
                    f"transfer budget exhausted writing [{offset + pos}, {offset + pos + step})"
                )
            self._budget_words -= 1
            self.cost_meter.words_written += 1
            self._write_raw(offset + pos, data[pos : pos + step])
            pos += step

    # -- backing store hooks ------------------------------------------------

    def _read_raw(self, offset: int, length: int) -> bytes:
        raise NotImplementedError

    def _write_raw(self, offset: int, data: bytes) -> None:
        raise NotImplementedError


class SimulatedNvm(StorageDevice):
    """In-memory device. Deterministic, zero-filled at creation."""

    def __init__(self, capacity_bytes: int = DEFAULT_CAPACITY_BYTES) -> None:
        super().__init__(capacity_bytes)
        self._buf = bytearray(capacity_bytes)

    def _read_raw(self, offset: int, length: int) -> bytes:
        return bytes(self._buf[offset : offset + length])

    def _write_raw(self, offset: int, data: bytes) -> None:
        self._buf[offset : offset + len(data)] = data

    def reopen(self) -> "SimulatedNvm":
        """Simulate a reboot: same bytes, fresh meter, no armed failure."""
        dev = SimulatedNvm(self.capacity_bytes)
        dev._buf[:] = self._buf
        return dev


class FileBackedNvm(StorageDevice):
    """Device persisted as a raw byte image on disk (no header).

    A missing or short file is zero-extended to the requested capacity; an
    existing longer file keeps its full size as the capacity.
    """

    def __init__(self, path: str | os.PathLike, capacity_bytes: int = DEFAULT_CAPACITY_BYTES) -> None:
        self.path = os.fspath(path)
        existing = os.path.getsize(self.path) if os.path.exists(self.path) else 0
        super().__init__(max(capacity_bytes, existing))
        mode = "r+b" if existing else "w+b"
        self._file = open(self.path, mode)
        if existing < self.capacity_bytes:
            self._file.truncate(self.capacity_bytes)

    def _read_raw(self, offset: int, length: int) -> bytes:
        self._file.seek(offset)
        return self._file.read(length)

    def _write_raw(self, offset: int, data: bytes) -> None:
        self._file.seek(offset)
        self._file.write(data)
        self._file.flush()

    def close(self) -> None:
        if not self._file.closed:
            self._file.flush()
            self._file.close()

    def reopen(self) -> "FileBackedNvm":
        self.close()
        return FileBackedNvm(self.path, self.capacity_bytes)

    def __del__(self):  # pragma: no cover - interpreter shutdown ordering
        try:
            self.close()
        except Exception:
            pass
