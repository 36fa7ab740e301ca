"""Core data model: block addresses, split counters, memory tuples and the
golden (oracle) plaintext memory.

Everything here is functional state shared by the rest of the simulator;
no timing lives in this module.
"""

from __future__ import annotations

from dataclasses import dataclass, field

BLOCK_SIZE = 64
PAGE_SIZE = 4096
BLOCKS_PER_PAGE = PAGE_SIZE // BLOCK_SIZE
MINOR_MAX = 127  # 7-bit per-block minor counters


class MisalignedAddress(ValueError):
    """Raised for addresses that are not 64-byte block aligned."""


@dataclass(frozen=True)
class BlockAddr:
    """A 64-bit, block-aligned physical address of one 64-byte block."""

    value: int

    def __post_init__(self) -> None:
        if self.value < 0 or self.value >= 1 << 64:
            raise MisalignedAddress(f"address out of 64-bit range: {self.value:#x}")
        if self.value % BLOCK_SIZE != 0:
            raise MisalignedAddress(f"address not {BLOCK_SIZE}B aligned: {self.value:#x}")

    @property
    def page(self) -> int:
        return self.value // PAGE_SIZE

    @property
    def block_in_page(self) -> int:
        return (self.value // BLOCK_SIZE) % BLOCKS_PER_PAGE

    def __int__(self) -> int:
        return self.value


@dataclass(frozen=True)
class SplitCounter:
    """One counter block: a per-page major counter plus 64 per-block minors.

    A bump increments the target minor; when the minor is already at its
    7-bit maximum the major is incremented and every minor of the page
    resets to zero.  The effective counter of a block is the
    (major, minor) pair, totally ordered as major * 128 + minor, and it
    never repeats for a given block across any bump sequence.
    """

    major: int = 0
    minors: tuple = tuple([0] * BLOCKS_PER_PAGE)

    def bump(self, block_in_page: int) -> "SplitCounter":
        if not 0 <= block_in_page < BLOCKS_PER_PAGE:
            raise IndexError(f"minor index out of range: {block_in_page}")
        if self.minors[block_in_page] >= MINOR_MAX:
            return SplitCounter(self.major + 1, tuple([0] * BLOCKS_PER_PAGE))
        minors = list(self.minors)
        minors[block_in_page] += 1
        return SplitCounter(self.major, tuple(minors))

    def effective(self, block_in_page: int) -> tuple:
        """(major, minor) freshness value for one block of the page."""
        return (self.major, self.minors[block_in_page])

    def to_block_bytes(self) -> bytes:
        """Pack into exactly one 64-byte metadata block.

        8 bytes of major counter followed by 64 minors packed 7 bits each
        (56 bytes): the layout that makes the whole page's counters fit a
        single cache block.
        """
        packed = 0
        for i, m in enumerate(self.minors):
            packed |= (m & 0x7F) << (7 * i)
        return self.major.to_bytes(8, "little") + packed.to_bytes(56, "little")


def bump_counter(ctr_block: SplitCounter, block_in_page: int) -> SplitCounter:
    """Increment one block's minor counter, handling page-wide overflow."""
    return ctr_block.bump(block_in_page)


@dataclass
class MemoryTuple:
    """The full durable footprint of one persisted block.

    A block is recoverable only when the ciphertext, its counter, its MAC
    and the root effect are all durable; the engine tracks these as flags
    on the write-pending-queue entry, this type is the assembled view.
    """

    addr: BlockAddr
    ciphertext: bytes
    counter: tuple
    mac: int
    root_done: bool = False

    @property
    def recoverable(self) -> bool:
        return (
            self.ciphertext is not None
            and self.counter is not None
            and self.mac is not None
            and self.root_done
        )


@dataclass(frozen=True)
class StoreRecord:
    persist_id: int
    addr: BlockAddr
    plaintext: bytes
    epoch: int


class GoldenMemory:
    """Plaintext shadow memory plus an append-only persist-order log.

    The log order equals trace order of stores; recovery checks compare
    durable state against replayed prefixes of this log.
    """

    def __init__(self) -> None:
        self.blocks: dict = {}
        self.log: list = []

    def apply_store(self, addr: BlockAddr, data: bytes, epoch: int = 0) -> int:
        if not isinstance(addr, BlockAddr):
            addr = BlockAddr(int(addr))
        if len(data) != BLOCK_SIZE:
            raise ValueError(f"payload must be {BLOCK_SIZE} bytes, got {len(data)}")
        persist_id = len(self.log)
        self.blocks[addr.value] = data
        self.log.append(StoreRecord(persist_id, addr, data, epoch))
        return persist_id

    def state_after(self, n: int) -> dict:
        """Plaintext state after replaying the first ``n`` log records."""
        state: dict = {}
        for rec in self.log[:n]:
            state[rec.addr.value] = rec.plaintext
        return state

    def state_at_epoch_end(self, epoch: int) -> dict:
        """Plaintext state after every store of epochs <= ``epoch``."""
        state: dict = {}
        for rec in self.log:
            if rec.epoch <= epoch:
                state[rec.addr.value] = rec.plaintext
        return state

    def addrs_in_epoch(self, epoch: int) -> set:
        return {rec.addr.value for rec in self.log if rec.epoch == epoch}

    def __len__(self) -> int:
        return len(self.log)
