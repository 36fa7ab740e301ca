"""Crash injection and recovery verification.

``crash`` cuts a finished simulation at a chosen point and reconstructs
exactly what the persist domain held: NVMM images folded from durable
write-pending-queue components, plus the root register.  ``recover``
then replays what a real controller could do after power loss - rebuild
the integrity tree from durable counters, check every MAC, decrypt - and
reports per-block verdicts.  ``check_prefix_consistency`` is the
recovery observer: under strict persistency the recovered state must
equal some prefix of the persist-order log; under epoch persistency it
must match the last completed epoch boundary outside the crashed epoch's
footprint.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .bmt import BmtGeometry, rebuild_from_counters
from .crypto import KeySet, decrypt, verify_mac
from .model_core import BLOCK_SIZE, GoldenMemory, PAGE_SIZE

CRASH_MODES = ("at-cycle", "after-persist", "epoch-boundary", "tuple-omission")
TUPLE_COMPONENTS = ("ciphertext", "counter", "mac", "root")


@dataclass(frozen=True)
class CrashPlan:
    """One injection: a crash point, or a crash plus one dropped tuple item."""

    mode: str
    cycle: Optional[int] = None
    persist_id: Optional[int] = None
    epoch: Optional[int] = None
    component: Optional[str] = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.mode not in CRASH_MODES:
            raise ValueError(f"unknown crash mode {self.mode!r}")
        if self.mode == "at-cycle" and self.cycle is None:
            raise ValueError("at-cycle plan needs a cycle")
        if self.mode in ("after-persist", "tuple-omission") and self.persist_id is None:
            raise ValueError(f"{self.mode} plan needs a persist id")
        if self.mode == "epoch-boundary" and self.epoch is None:
            raise ValueError("epoch-boundary plan needs an epoch")
        if self.mode == "tuple-omission" and self.component not in TUPLE_COMPONENTS:
            raise ValueError(f"omission component must be one of {TUPLE_COMPONENTS}")


@dataclass
class DurableSnapshot:
    """Everything that survived the crash, and nothing that did not."""

    crash_cycle: int
    persistency: str  # "SP" | "EP"
    data: dict  # addr value -> ciphertext
    counters: dict  # page -> SplitCounter snapshot
    macs: dict  # addr value -> tag
    root_register: int
    expected_plain: dict  # addr -> plaintext the durable image should decode to
    touched: set  # addrs with any durable per-block component
    completed_epochs: set
    incomplete_epochs: set
    excluded_addrs: set
    omitted: Optional[tuple] = None


@dataclass
class BlockVerdict:
    wrong_plaintext: bool = False
    mac_failure: bool = False
    bmt_failure: bool = False
    incomplete_epoch: bool = False

    def failures(self) -> set:
        out = set()
        if self.wrong_plaintext:
            out.add("wrong-plaintext")
        if self.mac_failure:
            out.add("mac-failure")
        if self.bmt_failure:
            out.add("bmt-failure")
        return out


@dataclass
class RecoveryReport:
    crash_cycle: int
    persistency: str
    bmt_ok: bool
    rebuilt_root: int
    root_register: int
    verdicts: dict  # addr -> BlockVerdict
    plaintexts: dict  # addr -> decrypted bytes (all durable blocks)
    recovered: dict  # addr -> plaintext, blocks with no failure verdicts
    completed_epochs: set
    incomplete_epochs: set
    excluded_addrs: set
    matched_prefix: Optional[int] = None

    def verdict_set(self, addr: int) -> set:
        return self.verdicts[addr].failures()

    def as_dict(self) -> dict:
        return {
            "crash_cycle": self.crash_cycle,
            "persistency": self.persistency,
            "bmt_ok": self.bmt_ok,
            "matched_prefix": self.matched_prefix,
            "blocks": {
                f"0x{addr:x}": sorted(v.failures()) + (["incomplete-epoch"] if v.incomplete_epoch else [])
                for addr, v in sorted(self.verdicts.items())
            },
            "recovered_blocks": len(self.recovered),
            "completed_epochs": sorted(self.completed_epochs),
            "incomplete_epochs": sorted(self.incomplete_epochs),
        }


@dataclass
class Violation:
    block: Optional[int]
    invariant: str
    detail: str

    def __bool__(self) -> bool:  # a violation is truthy but reads as failure
        return True


@dataclass
class ConsistencyResult:
    ok: bool
    matched: Optional[int] = None
    violation: Optional[Violation] = None


def _resolve_cut(sim, plan: CrashPlan) -> int:
    if plan.mode == "at-cycle":
        return plan.cycle
    if plan.mode in ("after-persist", "tuple-omission"):
        if plan.persist_id is None or plan.persist_id >= len(sim.wpq_entries):
            raise ValueError(f"no such persist: {plan.persist_id}")
        cycle = sim.wpq_entries[plan.persist_id].complete_cycle
        if cycle is None:
            raise ValueError(f"persist {plan.persist_id} never completed")
        return cycle
    if plan.epoch not in sim.epoch_completion:
        raise ValueError(f"epoch {plan.epoch} never completed")
    return sim.epoch_completion[plan.epoch]


def crash(sim, plan: CrashPlan) -> DurableSnapshot:
    """Cut the run at the plan's point and fold the durable state.

    Volatile state (metadata caches, tracking tables) is discarded; under
    strict persistency an entry survives only if its whole tuple completed
    by the cut, under epoch persistency individual components survive once
    arrived and their epoch is unlocked.  In tuple-omission mode the named
    component of the named persist is deleted after the cut.
    """
    cut = _resolve_cut(sim, plan)
    omitted = (plan.persist_id, plan.component) if plan.mode == "tuple-omission" else None

    sim.counter_cache.flush_volatile()
    sim.mac_cache.flush_volatile()
    sim.bmt_cache.flush_volatile()

    is_ep = sim.is_ep
    data: dict = {}
    counters: dict = {}
    macs: dict = {}
    expected_plain: dict = {}
    touched: set = set()
    incomplete_epochs: set = set()

    def component_durable(entry, comp: str) -> bool:
        if omitted is not None and entry.pid == omitted[0] and comp == omitted[1]:
            return False
        if is_ep:
            arrival = entry.arrivals.get(comp)
            if arrival is None or arrival > cut:
                return False
            unlock = sim.unlock_cycle(entry.epoch)
            return unlock is not None and unlock <= cut
        return entry.complete_cycle is not None and entry.complete_cycle <= cut

    for entry in sim.wpq_entries:
        addr = entry.addr.value
        durable_any = False
        if component_durable(entry, "ciphertext"):
            data[addr] = entry.ciphertext
            touched.add(addr)
            expected_plain[addr] = sim.golden.log[entry.pid].plaintext
            durable_any = True
        if component_durable(entry, "counter"):
            counters[entry.addr.page] = entry.counter_block
            durable_any = True
        if component_durable(entry, "mac"):
            macs[addr] = entry.mac
            touched.add(addr)
            expected_plain[addr] = sim.golden.log[entry.pid].plaintext
            durable_any = True
        if is_ep and durable_any:
            done = sim.epoch_completion.get(entry.epoch)
            if done is None or done > cut:
                incomplete_epochs.add(entry.epoch)

    root_register = sim.bmt.default_value(1)
    for cycle, pid, value in sim.root_history:
        if cycle > cut:
            break
        if omitted is not None and pid == omitted[0] and omitted[1] == "root":
            continue
        root_register = value
        if is_ep:
            # a root effect from a still-running epoch marks it in flight even
            # when none of its tuple components became durable yet
            epoch = sim.golden.log[pid].epoch
            done = sim.epoch_completion.get(epoch)
            if done is None or done > cut:
                incomplete_epochs.add(epoch)

    completed_epochs = {e for e, c in sim.epoch_completion.items() if c <= cut} if is_ep else set()

    excluded_addrs: set = set()
    if is_ep and incomplete_epochs:
        tainted_pages = set()
        for entry in sim.wpq_entries:
            if entry.epoch in incomplete_epochs and entry.submit_cycle <= cut:
                excluded_addrs.add(entry.addr.value)
                tainted_pages.add(entry.addr.page)
        for addr in touched:
            if addr // PAGE_SIZE in tainted_pages:
                excluded_addrs.add(addr)

    return DurableSnapshot(
        crash_cycle=cut,
        persistency="EP" if is_ep else "SP",
        data=data,
        counters=counters,
        macs=macs,
        root_register=root_register,
        expected_plain=expected_plain,
        touched=touched,
        completed_epochs=completed_epochs,
        incomplete_epochs=incomplete_epochs,
        excluded_addrs=excluded_addrs,
        omitted=omitted,
    )


def recover(snapshot: DurableSnapshot, keys: KeySet, geometry: BmtGeometry) -> RecoveryReport:
    """Post-crash verification from durable state, keys and the root register.

    The tree is rebuilt bottom-up from durable counter blocks and its root
    compared with the root register; each durable data block's MAC is
    checked over (ciphertext, address, counter) and the block decrypted.
    The wrong-plaintext verdict compares against the recorded write the
    durable image claims to hold - an oracle label for tests, not an input
    any real recovery would have.
    """
    rebuilt = rebuild_from_counters(snapshot.counters, geometry, keys)
    rebuilt_root = rebuilt.root()
    bmt_ok = rebuilt_root == snapshot.root_register

    verdicts: dict = {}
    plaintexts: dict = {}
    recovered: dict = {}
    for addr in sorted(snapshot.touched):
        # a block whose new ciphertext never persisted reads as NVMM zeros
        ciphertext = snapshot.data.get(addr, b"\x00" * BLOCK_SIZE)
        page = addr // PAGE_SIZE
        block_in_page = (addr // BLOCK_SIZE) % (PAGE_SIZE // BLOCK_SIZE)
        ctr_block = snapshot.counters.get(page)
        counter = ctr_block.effective(block_in_page) if ctr_block else (0, 0)
        stored_mac = snapshot.macs.get(addr)
        mac_ok = stored_mac is not None and verify_mac(stored_mac, ciphertext, addr, counter, keys)
        plain = decrypt(ciphertext, addr, counter, keys)
        expected = snapshot.expected_plain.get(addr)
        verdict = BlockVerdict(
            wrong_plaintext=expected is not None and plain != expected,
            mac_failure=not mac_ok,
            bmt_failure=not bmt_ok,
            incomplete_epoch=addr in snapshot.excluded_addrs,
        )
        verdicts[addr] = verdict
        plaintexts[addr] = plain
        if not verdict.failures():
            recovered[addr] = plain

    return RecoveryReport(
        crash_cycle=snapshot.crash_cycle,
        persistency=snapshot.persistency,
        bmt_ok=bmt_ok,
        rebuilt_root=rebuilt_root,
        root_register=snapshot.root_register,
        verdicts=verdicts,
        plaintexts=plaintexts,
        recovered=recovered,
        completed_epochs=set(snapshot.completed_epochs),
        incomplete_epochs=set(snapshot.incomplete_epochs),
        excluded_addrs=set(snapshot.excluded_addrs),
    )


def check_prefix_consistency(
    report: RecoveryReport, golden: GoldenMemory, persistency: Optional[str] = None
) -> ConsistencyResult:
    """The crash recovery observer's pass/fail call.

    SP: the recovered state must equal the golden state after some prefix
    of the persist log, with every block verifying.  EP: every block
    outside the crashed epoch's footprint must verify and match the last
    completed epoch boundary; crashed-epoch blocks are classified, not
    judged.
    """
    model = persistency or report.persistency
    if model == "SP":
        for addr, verdict in report.verdicts.items():
            if verdict.failures():
                return ConsistencyResult(
                    False,
                    violation=Violation(
                        addr,
                        "crash-recovery-tuple",
                        f"block 0x{addr:x} failed {sorted(verdict.failures())} at a plain crash point",
                    ),
                )
        target = report.plaintexts
        state: dict = {}
        if state == target:
            report.matched_prefix = 0
            return ConsistencyResult(True, matched=0)
        for i, rec in enumerate(golden.log, start=1):
            state[rec.addr.value] = rec.plaintext
            if state == target:
                report.matched_prefix = i
                return ConsistencyResult(True, matched=i)
        return ConsistencyResult(
            False,
            violation=Violation(
                None,
                "persist-order",
                f"recovered state matches no persist-log prefix (blocks={len(target)})",
            ),
        )

    # EP
    boundary = max(report.completed_epochs) if report.completed_epochs else None
    expected = golden.state_at_epoch_end(boundary) if boundary is not None else {}
    for addr in sorted(set(expected) | set(report.plaintexts)):
        if addr in report.excluded_addrs:
            continue
        verdict = report.verdicts.get(addr)
        if verdict is not None and verdict.mac_failure:
            return ConsistencyResult(
                False,
                violation=Violation(addr, "epoch-order", f"block 0x{addr:x} MAC failed outside crashed epoch"),
            )
        if report.plaintexts.get(addr) != expected.get(addr):
            return ConsistencyResult(
                False,
                violation=Violation(
                    addr, "epoch-order", f"block 0x{addr:x} does not match epoch {boundary} boundary state"
                ),
            )
    if not report.incomplete_epochs and not report.bmt_ok:
        return ConsistencyResult(
            False,
            violation=Violation(None, "epoch-order", "tree root mismatch at a clean epoch boundary"),
        )
    report.matched_prefix = boundary if boundary is not None else -1
    return ConsistencyResult(True, matched=report.matched_prefix)
