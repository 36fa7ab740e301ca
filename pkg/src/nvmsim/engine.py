"""Persist engine: write-pending queue, persist/epoch tracking tables and
the four BMT update schedulers.

Scheme summary:

* ``sequential``  - strict persistency, one persist owns the whole tree
  update path at a time; the next leaf update starts only after the
  previous persist's full tuple (including the root effect) completed.
* ``pipeline``    - strict persistency, lockstep waves: every tracked
  persist sits on a distinct tree level and the whole set advances one
  level when all of them finished their current node, so root updates
  retire in allocation order at one per MAC latency.
* ``ooo``         - epoch persistency: persists of the same epoch climb
  independently; a level may only be occupied by one epoch at a time
  (younger epochs stay strictly deeper than any older epoch's deepest
  straggler), which kills cross-epoch write-after-write hazards.
* ``coalesce``    - ooo plus paired update coalescing: a new persist
  adopts its predecessor's remaining path at their least common
  ancestor; the leading persist stops below the merge point and the
  trailing one carries the update from there to the root.

Node updates read their inputs at issue time and commit the new value at
completion.  That matches a hardware dataflow pipeline and is what keeps
strict-persistency roots exactly equal to persist-order prefixes even
while younger persists overwrite shared state underneath.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, replace as _dc_replace
from typing import Optional

from .bmt import BmtGeometry, BmtState
from .caches import CacheConfig, MetadataCache
from .crypto import KeySet, encrypt, mac_tag, payload_block
from .model_core import BLOCK_SIZE, GoldenMemory, SplitCounter
from .timing import (
    ARRIVAL,
    DRAIN,
    FILL_DONE,
    KICK,
    MAC_DONE,
    SUBMIT,
    EventQueue,
    LatencyConfig,
)
from .trace import Fence, Store

SCHEMES = ("sequential", "pipeline", "ooo", "coalesce")
EPOCH_SCHEMES = ("ooo", "coalesce")

COMPONENTS = ("ciphertext", "counter", "mac")


@dataclass(frozen=True)
class EngineConfig:
    """Scheduler structure sizes; epoch_size is a workload hint, not a gate."""

    scheme: str = "sequential"
    wpq_capacity: int = 128
    ptt_capacity: int = 64
    ett_capacity: int = 2
    epoch_size: int = 32
    mac_units: int = 0  # 0 = one pipelined unit per tree level (ooo/coalesce)

    def __post_init__(self) -> None:
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}, expected one of {SCHEMES}")
        if min(self.wpq_capacity, self.ptt_capacity, self.ett_capacity) < 1:
            raise ValueError("capacities must be >= 1")


@dataclass(frozen=True)
class SimParams:
    """Flat bundle of every knob a single simulation needs."""

    scheme: str = "sequential"
    arity: int = 8
    levels: int = 9
    latency: LatencyConfig = LatencyConfig()
    wpq_capacity: int = 128
    ptt_capacity: int = 64
    ett_capacity: int = 2
    epoch_size: int = 32
    mac_units: int = 0
    cache_kb: int = 128
    cache_assoc: int = 8
    ideal_caches: bool = False
    event_log: bool = True
    seed: int = 0

    def replace(self, **kw) -> "SimParams":
        return _dc_replace(self, **kw)

    def geometry(self) -> BmtGeometry:
        return BmtGeometry(self.arity, self.levels)

    def engine_config(self) -> EngineConfig:
        return EngineConfig(
            scheme=self.scheme,
            wpq_capacity=self.wpq_capacity,
            ptt_capacity=self.ptt_capacity,
            ett_capacity=self.ett_capacity,
            epoch_size=self.epoch_size,
            mac_units=self.mac_units,
        )


class WpqEntry:
    """One write-pending-queue slot: the gathering point of a memory tuple."""

    __slots__ = (
        "pid",
        "addr",
        "epoch",
        "submit_cycle",
        "ciphertext",
        "counter_block",
        "counter",
        "mac",
        "arrivals",
        "root_done_cycle",
        "complete_cycle",
        "drained_cycle",
        "drain_queued",
    )

    def __init__(self, pid, addr, epoch, submit_cycle, ciphertext, counter_block, counter, mac):
        self.pid = pid
        self.addr = addr
        self.epoch = epoch
        self.submit_cycle = submit_cycle
        self.ciphertext = ciphertext
        self.counter_block = counter_block  # SplitCounter snapshot carried by this persist
        self.counter = counter
        self.mac = mac
        self.arrivals = {}  # component -> arrival cycle
        self.root_done_cycle = None
        self.complete_cycle = None
        self.drained_cycle = None
        self.drain_queued = False

    @property
    def state(self) -> str:
        if self.drained_cycle is not None:
            return "drained"
        if self.complete_cycle is not None:
            return "complete"
        return "locked-incomplete"

    def all_arrived(self) -> bool:
        return len(self.arrivals) == len(COMPONENTS)


class PttEntry:
    """Persist tracking table entry: one persist's walk up the tree."""

    __slots__ = (
        "pid",
        "epoch",
        "leaf",
        "path",
        "levels",
        "wpq",
        "ready_cycle",
        "next_idx",
        "inflight",
        "stop_level",
        "last_plan_idx",
        "gate_count",
        "completed_below",
        "delegated",
        "obligations",
        "valid",
        "ready",
        "persisted",
        "joined",
    )

    def __init__(self, pid, epoch, leaf, path, levels, wpq, ready_cycle):
        self.pid = pid
        self.epoch = epoch
        self.leaf = leaf
        self.path = path
        self.levels = levels
        self.wpq = wpq
        self.ready_cycle = ready_cycle
        self.next_idx = 0  # next path index to issue; issued count == next_idx
        self.inflight = False
        self.stop_level = 0  # 0 = walk to the root; >0 = delegate at that level
        self.last_plan_idx = levels - 1
        self.gate_count = levels  # plan nodes strictly below stop_level
        self.completed_below = 0
        self.delegated = False
        self.obligations = []  # [(level, leader)] merge points inherited from leaders
        self.valid = True
        self.ready = False
        self.persisted = False
        self.joined = False  # pipeline wave membership

    def level_at(self, idx: int) -> int:
        return self.levels - idx

    @property
    def pending_level(self) -> Optional[int]:
        """Level this persist currently occupies (in flight or next to issue)."""
        if self.inflight:
            return self.levels - (self.next_idx - 1)
        if self.next_idx <= self.last_plan_idx:
            return self.levels - self.next_idx
        return None

    @property
    def below_done(self) -> bool:
        return self.completed_below >= self.gate_count

    @property
    def plan_finished(self) -> bool:
        return not self.inflight and self.next_idx > self.last_plan_idx


class EttEntry:
    """Epoch tracking table entry: order and level occupancy of one epoch."""

    __slots__ = ("epoch", "members", "completed", "level_counts", "start_pid", "end_pid")

    def __init__(self, epoch, levels):
        self.epoch = epoch
        self.members = []
        self.completed = 0
        self.level_counts = [0] * (levels + 1)
        self.start_pid = None
        self.end_pid = None

    def max_occupied_level(self) -> Optional[int]:
        for level in range(len(self.level_counts) - 1, 0, -1):
            if self.level_counts[level]:
                return level
        return None


class Simulator:
    """Single-threaded, deterministic event-driven persist-path model."""

    def __init__(self, params: SimParams, trace_events) -> None:
        params.engine_config()  # validates scheme and capacities
        self.params = params
        self.scheme = params.scheme
        self.is_ep = params.scheme in EPOCH_SCHEMES
        self.geometry = params.geometry()
        self.latency = params.latency
        self.keys = KeySet.from_seed(params.seed)

        self.clock = 0
        self.events = EventQueue()
        self.golden = GoldenMemory()
        self.counters: dict = {}
        self.bmt = BmtState(self.geometry, self.keys, counter_lookup=self.counters.get)

        kb = params.cache_kb * 1024
        self.counter_cache = MetadataCache(
            CacheConfig("counter", kb, params.cache_assoc), ideal=params.ideal_caches
        )
        self.mac_cache = MetadataCache(
            CacheConfig("mac", kb, params.cache_assoc), ideal=params.ideal_caches
        )
        self.bmt_cache = MetadataCache(
            CacheConfig("bmt", kb, params.cache_assoc), ideal=params.ideal_caches
        )

        self.trace = list(trace_events)
        self.trace_pos = 0
        self.trace_done = False
        self.current_epoch = 0  # global epoch counter
        self.page_ready: dict = {}

        self.wpq_entries: list = []  # by pid
        self.wpq_occupancy = 0
        self.ptt_order: deque = deque()
        self.ptt_by_pid: dict = {}
        self.ett_order: deque = deque()
        self.ett_by_epoch: dict = {}
        self.epoch_members: dict = {}
        self.epoch_completion: dict = {}

        self.completions: dict = {}
        self.root_history: list = []  # (cycle, pid, value)
        self.update_log: list = []  # (start, end, pid, epoch, label, level)

        # scheduler state
        self.seq_queue: deque = deque()
        self.seq_active: Optional[PttEntry] = None
        self.wave_members: list = []
        self.wave_inflight = 0
        self.pending_join: deque = deque()
        self.node_last_issue: dict = {}
        self.node_commit_horizon: dict = {}
        self.level_last_issue: dict = {}
        self._issue_cycle = -1
        self._issues_this_cycle = 0
        self.last_submitted: Optional[PttEntry] = None

        self.drain_eligible: list = []  # pids, kept sorted (drain in persist order)
        self.next_drain_free = 0
        self.drain_scheduled = False

        self._kick_cycles: set = set()
        self._submit_waiting = False
        self._stall_start = None  # (cycle, causes)

        self.stats = {
            "persists_submitted": 0,
            "persists_completed": 0,
            "node_updates": 0,
            "root_updates": 0,
            "coalesce_pairs": 0,
            "counter_overflows": 0,
            "bmt_fills": 0,
            "drains": 0,
            "stall_cycles": {"wpq_full": 0, "ptt_full": 0, "ett_full": 0},
        }

        self.events.push(0, SUBMIT, self._ev_submit)

    # ------------------------------------------------------------------
    # submission
    # ------------------------------------------------------------------

    def _ev_submit(self, ev) -> None:
        now = self.clock
        while self.trace_pos < len(self.trace) and isinstance(self.trace[self.trace_pos], Fence):
            self.epoch_boundary(now)
            self.trace_pos += 1
        if self.trace_pos >= len(self.trace):
            self._finish_trace(now)
            return
        store = self.trace[self.trace_pos]
        epoch = self.current_epoch

        causes = []
        if self.wpq_occupancy >= self.params.wpq_capacity:
            causes.append("wpq_full")
        if len(self.ptt_order) >= self.params.ptt_capacity:
            causes.append("ptt_full")
        if self.is_ep and epoch not in self.ett_by_epoch and len(self.ett_order) >= self.params.ett_capacity:
            causes.append("ett_full")
        if causes:
            if self._stall_start is None:
                self._stall_start = (now, causes)
            self._submit_waiting = True
            return

        if self._stall_start is not None:
            start, stalled_causes = self._stall_start
            for cause in stalled_causes:
                self.stats["stall_cycles"][cause] += now - start
            self._stall_start = None

        self.trace_pos += 1
        self._submit_store(store, epoch, now)
        self.events.push(now + 1, SUBMIT, self._ev_submit)

    def _finish_trace(self, now: int) -> None:
        if not self.trace_done:
            self.trace_done = True
            # final epoch's membership is closed; it may already be complete
            if self.is_ep:
                for epoch in list(self.epoch_members):
                    self._epoch_maybe_complete(epoch, now)

    def epoch_boundary(self, now: int) -> None:
        """Persist fence: subsequent stores belong to the next epoch."""
        closed = self.current_epoch
        self.current_epoch += 1
        if self.is_ep and closed in self.epoch_members:
            self._epoch_maybe_complete(closed, now)

    def _submit_store(self, store: Store, epoch: int, now: int) -> None:
        addr = store.addr
        page = addr.page
        payload = payload_block(store.payload_seed)
        pid = self.golden.apply_store(addr, payload, epoch)

        old_block = self.counters.get(page, SplitCounter())
        new_block = old_block.bump(addr.block_in_page)
        if new_block.major != old_block.major:
            self.stats["counter_overflows"] += 1
        self.counters[page] = new_block
        counter = new_block.effective(addr.block_in_page)

        ciphertext = encrypt(payload, addr, counter, self.keys)
        mac = mac_tag(ciphertext, addr, counter, self.keys)

        wpq = WpqEntry(pid, addr, epoch, now, ciphertext, new_block, counter, mac)
        self.wpq_entries.append(wpq)
        self.wpq_occupancy += 1
        self.stats["persists_submitted"] += 1

        # counter block access decides when the new counter (and thus the
        # leaf update and tuple components) is available; bumps to one page
        # chain on the same block, so readiness is non-decreasing per page
        hit = self.counter_cache.access(page, write=True)
        if hit:
            ready = now + self.latency.cache_hit
        else:
            ready = now + self.latency.cache_fill + self.latency.mac_latency
        ready = max(ready, self.page_ready.get(page, 0))
        self.page_ready[page] = ready
        self.mac_cache.access((addr.value // BLOCK_SIZE) // 8, write=True)

        for comp in COMPONENTS:
            self.events.push(
                ready + self.latency.wpq_enqueue, ARRIVAL, self._ev_arrival, (pid, comp)
            )

        leaf = self.geometry.leaf_for_page(page)
        entry = PttEntry(pid, epoch, leaf, self.geometry.update_path(leaf),
                         self.geometry.levels, wpq, ready)
        self.ptt_by_pid[pid] = entry
        self.ptt_order.append(entry)

        if self.is_ep:
            ett = self.ett_by_epoch.get(epoch)
            if ett is None:
                ett = EttEntry(epoch, self.geometry.levels)
                ett.start_pid = pid
                self.ett_by_epoch[epoch] = ett
                self.ett_order.append(ett)
                self.epoch_members[epoch] = []
            ett.members.append(entry)
            ett.end_pid = pid
            ett.level_counts[self.geometry.levels] += 1
            self.epoch_members[epoch].append(pid)

        if self.scheme == "coalesce":
            self.coalesce_pair(entry, self.last_submitted)
        self.last_submitted = entry

        if self.scheme == "sequential":
            self.seq_queue.append(entry)
            self._schedule_kick(ready)
        elif self.scheme == "pipeline":
            self.pending_join.append(entry)
            self._schedule_kick(ready)
        else:
            self._schedule_kick(ready)

    def _wake_submit(self, now: int) -> None:
        if self._submit_waiting:
            self._submit_waiting = False
            self.events.push(now, SUBMIT, self._ev_submit)

    # ------------------------------------------------------------------
    # coalescing
    # ------------------------------------------------------------------

    def coalesce_pair(self, new_entry: PttEntry, prev: Optional[PttEntry]) -> Optional[int]:
        """Pair a new persist with its predecessor at their LCA if legal.

        The predecessor becomes the leading persist: its walk stops below
        the LCA (it always keeps at least its own leaf update, which has
        usually already issued) and the new, trailing persist carries the
        shared path from the LCA to the root.  Returns the LCA label when
        a pair formed, else None.
        """
        if prev is None or prev.epoch != new_entry.epoch:
            return None
        if prev.delegated or prev.persisted:
            return None
        levels = self.geometry.levels
        lca_label = self.geometry.lca(prev.leaf, new_entry.leaf)
        lca_level = self.geometry.level_of(lca_label)
        if prev.next_idx > 0:
            shallowest_issued = levels - (prev.next_idx - 1)
            # the leading persist must not have gone past the merge point;
            # an already-issued leaf is fine when the merge point is the leaf
            if shallowest_issued < lca_level:
                return None
            if shallowest_issued == lca_level and lca_level != levels:
                return None

        prev.delegated = True
        prev.stop_level = lca_level
        prev.last_plan_idx = max(levels - lca_level - 1, 0)
        prev.gate_count = levels - lca_level
        completed = prev.next_idx - (1 if prev.inflight else 0)
        prev.completed_below = min(completed, prev.gate_count)

        new_entry.obligations.append((lca_level, prev))
        keep = []
        for ob_level, leader in prev.obligations:
            if ob_level <= lca_level:
                new_entry.obligations.append((ob_level, leader))
            else:
                keep.append((ob_level, leader))
        prev.obligations = keep

        if self.is_ep and not prev.inflight:
            # truncation may have emptied the remaining plan: vacate the level
            pending_after = prev.pending_level
            old_pending = levels - prev.next_idx
            if pending_after is None and prev.next_idx <= levels - 1:
                ett = self.ett_by_epoch[prev.epoch]
                if ett.level_counts[old_pending] > 0:
                    ett.level_counts[old_pending] -= 1

        self.stats["coalesce_pairs"] += 1
        return lca_label

    # ------------------------------------------------------------------
    # node updates
    # ------------------------------------------------------------------

    def _issue_update(self, entry: PttEntry, now: int) -> None:
        idx = entry.next_idx
        label = entry.path[idx]
        level = entry.level_at(idx)
        entry.next_idx = idx + 1
        entry.inflight = True
        entry.ready = False
        self.node_last_issue[label] = now
        self.level_last_issue[level] = now
        if self._issue_cycle != now:
            self._issue_cycle = now
            self._issues_this_cycle = 0
        self._issues_this_cycle += 1

        if self.geometry.is_leaf(label):
            value = self.bmt.compute_node(label, entry.wpq.counter_block)
        else:
            value = self.bmt.compute_node(label)

        hit = self.bmt_cache.access(label, write=True)
        if hit:
            duration = self.latency.mac_latency
        else:
            # fetch, verify the fetched node (one MAC), then compute the update
            self.stats["bmt_fills"] += 1
            duration = self.latency.cache_fill + 2 * self.latency.mac_latency
        # overlapped updates of one node write back in issue order: a fast
        # later update must not overtake a slow earlier one with stale inputs
        commit = max(now + duration, self.node_commit_horizon.get(label, -1) + 1)
        self.node_commit_horizon[label] = commit
        payload = (entry, label, level, value, now, commit)
        if hit:
            self.events.push(commit, MAC_DONE, self._ev_mac_done, payload)
        else:
            self.events.push(now + self.latency.cache_fill, FILL_DONE, self._ev_fill_done, payload)

    def _ev_fill_done(self, ev) -> None:
        entry, label, level, value, start, commit = ev.payload
        self.events.push(commit, MAC_DONE, self._ev_mac_done, ev.payload)

    def _ev_mac_done(self, ev) -> None:
        entry, label, level, value, start, _commit = ev.payload
        now = self.clock
        self.bmt.commit_node(label, value)
        self.stats["node_updates"] += 1
        if self.params.event_log:
            self.update_log.append((start, now, entry.pid, entry.epoch, label, level))

        entry.inflight = False
        entry.ready = True
        idx = entry.next_idx - 1
        if idx < entry.gate_count:
            entry.completed_below += 1

        if self.is_ep:
            ett = self.ett_by_epoch[entry.epoch]
            ett.level_counts[level] -= 1
            pending = entry.pending_level
            if pending is not None:
                ett.level_counts[pending] += 1

        if label == 0:
            self.stats["root_updates"] += 1
            self.bmt.root_register = value
            self.root_history.append((now, entry.pid, value))
            self._mark_persisted(entry, now)

        # a trailing persist passing a merge point releases its leader
        if entry.obligations:
            remaining = []
            for ob_level, leader in entry.obligations:
                if ob_level == level:
                    self._mark_persisted(leader, now)
                else:
                    remaining.append((ob_level, leader))
            entry.obligations = remaining

        if self.scheme == "sequential":
            if entry.next_idx <= entry.last_plan_idx:
                self._issue_update(entry, now)
        elif self.scheme == "pipeline":
            self.wave_inflight -= 1
            if self.wave_inflight == 0:
                self._pipe_boundary(now)
        else:
            self._ooo_kick(now)

    def _mark_persisted(self, entry: PttEntry, now: int) -> None:
        if entry.persisted:
            return
        entry.persisted = True
        entry.valid = False
        wpq = self.wpq_entries[entry.pid]
        wpq.root_done_cycle = now
        self._dealloc_ptt(now)
        self._check_complete(wpq, now)

    def _dealloc_ptt(self, now: int) -> None:
        freed = False
        while self.ptt_order and self.ptt_order[0].persisted:
            self.ptt_order.popleft()
            freed = True
        if freed:
            self._wake_submit(now)

    # ------------------------------------------------------------------
    # per-scheme scheduling
    # ------------------------------------------------------------------

    def _schedule_kick(self, cycle: int) -> None:
        cycle = max(cycle, self.clock)
        if cycle not in self._kick_cycles:
            self._kick_cycles.add(cycle)
            self.events.push(cycle, KICK, self._ev_kick)

    def _ev_kick(self, ev) -> None:
        self._kick_cycles.discard(self.clock)
        self._dispatch(self.clock)

    def _dispatch(self, now: int) -> None:
        if self.scheme == "sequential":
            self._seq_try_start(now)
        elif self.scheme == "pipeline":
            if self.wave_inflight == 0:
                self._pipe_boundary(now)
        else:
            self._ooo_kick(now)

    # sequential -------------------------------------------------------

    def _seq_try_start(self, now: int) -> None:
        if self.seq_active is not None or not self.seq_queue:
            return
        head = self.seq_queue[0]
        if head.ready_cycle > now:
            self._schedule_kick(head.ready_cycle)
            return
        self.seq_queue.popleft()
        self.seq_active = head
        self._issue_update(head, now)

    # pipeline ---------------------------------------------------------

    def _pipe_boundary(self, now: int) -> None:
        if self.wave_inflight > 0:
            return
        self.wave_members = [m for m in self.wave_members if not m.persisted]
        if self.pending_join:
            head = self.pending_join[0]
            if head.ready_cycle <= now:
                self.pending_join.popleft()
                head.joined = True
                self.wave_members.append(head)
            else:
                self._schedule_kick(head.ready_cycle)
        if not self.wave_members:
            return
        for member in self.wave_members:
            self._issue_update(member, now)
            self.wave_inflight += 1

    # out-of-order / coalescing ----------------------------------------

    def _epoch_authorized(self, entry: PttEntry, level: int) -> bool:
        for ett in self.ett_order:
            if ett.epoch >= entry.epoch:
                break
            occupied = ett.max_occupied_level()
            if occupied is not None and level <= occupied:
                return False
        return True

    def _ooo_kick(self, now: int) -> None:
        units = self.params.mac_units
        for entry in self.ptt_order:
            if entry.inflight or entry.persisted or entry.next_idx > entry.last_plan_idx:
                continue
            if entry.ready_cycle > now:
                continue
            level = entry.level_at(entry.next_idx)
            if not self._epoch_authorized(entry, level):
                continue
            gated = False
            for ob_level, leader in entry.obligations:
                if ob_level == level and not leader.below_done:
                    gated = True
                    break
            if gated:
                continue
            label = entry.path[entry.next_idx]
            earliest = max(
                self.node_last_issue.get(label, -1) + 1,
                self.level_last_issue.get(level, -1) + 1,
            )
            if units > 0 and self._issue_cycle == now and self._issues_this_cycle >= units:
                earliest = max(earliest, now + 1)
            if earliest > now:
                self._schedule_kick(earliest)
                continue
            self._issue_update(entry, now)

    # ------------------------------------------------------------------
    # WPQ lifecycle
    # ------------------------------------------------------------------

    def _ev_arrival(self, ev) -> None:
        pid, comp = ev.payload
        wpq = self.wpq_entries[pid]
        wpq.arrivals[comp] = self.clock
        self._check_complete(wpq, self.clock)
        if self.is_ep and wpq.all_arrived():
            self._maybe_drain(wpq, self.clock)

    def _check_complete(self, wpq: WpqEntry, now: int) -> None:
        if wpq.complete_cycle is not None:
            return
        if not wpq.all_arrived() or wpq.root_done_cycle is None:
            return
        wpq.complete_cycle = now
        self.completions[wpq.pid] = now
        self.stats["persists_completed"] += 1
        if self.is_ep:
            ett = self.ett_by_epoch.get(wpq.epoch)
            if ett is not None:
                ett.completed += 1
            self._epoch_maybe_complete(wpq.epoch, now)
        else:
            self._maybe_drain(wpq, now)
        if self.scheme == "sequential" and self.seq_active is not None and self.seq_active.pid == wpq.pid:
            self.seq_active = None
            self._seq_try_start(now)

    def _epoch_membership_final(self, epoch: int) -> bool:
        return epoch < self.current_epoch or self.trace_done

    def epoch_unlocked_now(self, epoch: int) -> bool:
        """True when every older epoch with members has fully completed."""
        for older in self.epoch_members:
            if older >= epoch:
                break
            if older not in self.epoch_completion:
                return False
        return True

    def _epoch_maybe_complete(self, epoch: int, now: int) -> None:
        if epoch in self.epoch_completion or epoch not in self.epoch_members:
            return
        if not self._epoch_membership_final(epoch):
            return
        # epochs complete strictly in order; a younger epoch whose tuples all
        # arrived early still waits for every older boundary
        for older in self.epoch_members:
            if older >= epoch:
                break
            if older not in self.epoch_completion:
                return
        members = self.epoch_members[epoch]
        if any(self.wpq_entries[pid].complete_cycle is None for pid in members):
            return
        self.epoch_completion[epoch] = now
        retired = False
        while self.ett_order and self.ett_order[0].epoch in self.epoch_completion:
            self.ett_order.popleft()
            retired = True
        if retired:
            self._wake_submit(now)
        for pid in members:
            self._maybe_drain(self.wpq_entries[pid], now)
        # successor epoch's entries unlock strictly after this boundary
        self._schedule_kick(now + 1)
        self.events.push(now + 1, KICK, self._ev_unlock_sweep)

    def _ev_unlock_sweep(self, ev) -> None:
        now = self.clock
        for epoch in self.epoch_members:
            if epoch in self.epoch_completion:
                continue
            # the successor may have been waiting only on the boundary order
            self._epoch_maybe_complete(epoch, now)
            if epoch in self.epoch_completion:
                break
            if self.epoch_unlocked_now(epoch):
                for pid in self.epoch_members[epoch]:
                    wpq = self.wpq_entries[pid]
                    if wpq.all_arrived():
                        self._maybe_drain(wpq, now)
            break

    def unlock_cycle(self, epoch: int) -> Optional[int]:
        """Cycle from which this epoch's WPQ entries stop being invalidatable.

        The oldest epoch is unlocked from the start; epoch e unlocks one
        cycle after the last older epoch completed.  None while still locked.
        """
        latest = 0
        for older in self.epoch_members:
            if older >= epoch:
                break
            done = self.epoch_completion.get(older)
            if done is None:
                return None
            latest = max(latest, done + 1)
        return latest

    # drains -------------------------------------------------------------

    def _maybe_drain(self, wpq: WpqEntry, now: int) -> None:
        if wpq.drain_queued or wpq.drained_cycle is not None:
            return
        if self.is_ep:
            if not wpq.all_arrived():
                return
            unlock = self.unlock_cycle(wpq.epoch)
            if unlock is None or unlock > now:
                return
        else:
            if wpq.complete_cycle is None:
                return
        wpq.drain_queued = True
        self.drain_eligible.append(wpq.pid)
        self.drain_eligible.sort()
        self._schedule_drain(now)

    def _schedule_drain(self, now: int) -> None:
        if self.drain_scheduled or not self.drain_eligible:
            return
        self.drain_scheduled = True
        self.events.push(max(now, self.next_drain_free), DRAIN, self._ev_drain)

    def _ev_drain(self, ev) -> None:
        now = self.clock
        self.drain_scheduled = False
        if not self.drain_eligible:
            return
        pid = self.drain_eligible.pop(0)
        wpq = self.wpq_entries[pid]
        wpq.drained_cycle = now
        self.wpq_occupancy -= 1
        self.stats["drains"] += 1
        self.next_drain_free = now + self.latency.drain_interval
        self._wake_submit(now)
        self._schedule_drain(now)

    def drain_complete(self) -> set:
        """Persist ids already released to NVMM."""
        return {e.pid for e in self.wpq_entries if e.drained_cycle is not None}

    # ------------------------------------------------------------------
    # introspection
    # ------------------------------------------------------------------

    def submit_persist(self, store: Store) -> int:
        """Directly lodge one store (test surface; trace-driven runs use events)."""
        epoch = self.current_epoch
        self._submit_store(store, epoch, self.clock)
        return self.stats["persists_submitted"] - 1

    def completion_cycle(self, pid: int) -> int:
        return self.completions[pid]

    def outstanding_persists(self) -> list:
        return [e.pid for e in self.wpq_entries if e.complete_cycle is None]

    def pending_trace_events(self) -> int:
        return len(self.trace) - self.trace_pos

    @property
    def submit_overhead_cycles(self) -> int:
        """Constant per-persist cost before the leaf update can start
        (counter-cache hit), reported so closed-form checks can subtract it."""
        return self.latency.cache_hit

    def last_completion_cycle(self) -> int:
        return max(self.completions.values(), default=0)

    def stats_dict(self) -> dict:
        out = dict(self.stats)
        out["stall_cycles"] = dict(self.stats["stall_cycles"])
        out["total_cycles"] = self.clock
        out["last_completion_cycle"] = self.last_completion_cycle()
        out["submit_overhead_cycles"] = self.submit_overhead_cycles
        out["scheme"] = self.scheme
        out["caches"] = {
            "counter": self.counter_cache.stats.as_dict(),
            "mac": self.mac_cache.stats.as_dict(),
            "bmt": self.bmt_cache.stats.as_dict(),
        }
        return out
