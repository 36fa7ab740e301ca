"""Acceptance suite: one test per shipping criterion, each printing a
PASS line with the measured numbers.  Run with `pytest tests/test_acceptance.py -v -s`.
"""

import json
import random

from nvmsim import (
    CrashPlan,
    LatencyConfig,
    SCHEMES,
    SimParams,
    Simulator,
    check_prefix_consistency,
    crash,
    parse,
    recover,
    run_until_idle,
    throughput_probe,
)
from nvmsim.bmt import BmtGeometry
from nvmsim.trace import Fence, GenSpec, Store, generate, refence

from conftest import page_addr, random_trace_text, run_sim, trace_text
from oracles import dedup_update_count, replay_plaintext_prefix

G4 = BmtGeometry(arity=8, levels=4)


def _all_hit_trace(n, stride_pages=1):
    return trace_text(*[page_addr(i * stride_pages) for i in range(n)])


def _completions(sim, n):
    return [sim.completion_cycle(i) for i in range(n)]


def test_criterion_01_sequential_golden_timing():
    sim = run_sim(
        "sequential", trace_text(page_addr(0)), levels=12,
        latency=LatencyConfig(mac_latency=80),
    )
    path_12 = sim.completion_cycle(0) - sim.submit_overhead_cycles
    assert path_12 == 960

    sim = run_sim("sequential", trace_text(page_addr(0)), levels=9)
    path_9 = sim.completion_cycle(0) - sim.submit_overhead_cycles
    assert path_9 == 360
    print(f"\nACCEPTANCE 01 PASS - sequential critical paths: 12x80={path_12}, 9x40={path_9}")


def test_criterion_02_pipeline_throughput():
    n = 100
    sim = run_sim("pipeline", _all_hit_trace(n), levels=9)
    comps = _completions(sim, n)
    gaps = {b - a for a, b in zip(comps[n // 3 :], comps[n // 3 + 1 :])}
    assert gaps == {40}, f"steady-state gap must be exactly 40, got {gaps}"
    total = comps[-1] - sim.submit_overhead_cycles
    assert abs(total - (9 + 99) * 40) <= 40  # within one wave
    interval_seq = throughput_probe("sequential", 12)
    interval_pipe = throughput_probe("pipeline", 40)
    speedup = interval_seq / interval_pipe
    assert abs(speedup - 9.0) <= 9.0 * 0.05
    print(
        f"ACCEPTANCE 02 PASS - pipeline: gap=40, total={total} (target {(9+99)*40}), "
        f"steady-state speedup={speedup:.2f}x"
    )


def test_criterion_03_ooo_throughput():
    # tracking tables sized so they are not the binding resource: sustaining
    # one completion per cycle across a 360-cycle path needs >= 360 persists
    # in flight (the 64-entry default throttles long back-to-back bursts)
    n = 100
    sim = run_sim("ooo", _all_hit_trace(n), levels=9, ptt_capacity=512, wpq_capacity=512)
    comps = _completions(sim, n)
    mid = comps[n // 3 : 2 * n // 3]
    gaps = [b - a for a, b in zip(mid, mid[1:])]
    worst = max(gaps)
    assert worst <= 2, f"ooo steady-state gap must be <= 2 cycles, got {worst}"
    print(f"ACCEPTANCE 03 PASS - ooo steady-state gap={worst} cycle(s)")


def test_criterion_04_coalescing_update_count():
    text = trace_text(page_addr(0), page_addr(1), page_addr(8))
    co = run_sim("coalesce", text)
    oo = run_sim("ooo", text)
    assert co.stats["node_updates"] == 7
    assert oo.stats["node_updates"] == 12
    reduction = 1 - co.stats["node_updates"] / oo.stats["node_updates"]
    assert co.bmt.root_register == oo.bmt.root_register
    print(f"ACCEPTANCE 04 PASS - merge scenario: 7 vs 12 node updates ({reduction:.0%} reduction)")


def test_criterion_05_commutativity_fuzz():
    rng = random.Random(2024)
    trials = 1000
    mismatches = 0
    for trial in range(trials):
        from nvmsim.model_core import BlockAddr

        n = rng.randrange(2, 9)
        events = [
            Store(BlockAddr(rng.randrange(24) * 4096 + rng.randrange(64) * 64), i)
            for i in range(n)
        ]
        roots = set()
        for scheme in SCHEMES:
            sim = Simulator(SimParams(scheme=scheme, levels=4, ideal_caches=True), events)
            run_until_idle(sim)
            roots.add(sim.bmt.root_register)
        for _ in range(10):
            perm = events[:]
            rng.shuffle(perm)
            sim = Simulator(SimParams(scheme="ooo", levels=4, ideal_caches=True), perm)
            run_until_idle(sim)
            roots.add(sim.bmt.root_register)
        if len(roots) != 1:
            mismatches += 1
    assert mismatches == 0
    print(f"ACCEPTANCE 05 PASS - {trials} traces x (4 schemes + 10 permutations): 0 root mismatches")


def test_criterion_06_recovery_failure_matrix():
    sim = run_sim("sequential", trace_text(page_addr(0), page_addr(1), page_addr(2), page_addr(0, 3)))
    target = len(sim.wpq_entries) - 1
    addr = sim.golden.log[target].addr.value
    expected = {
        "root": {"bmt-failure"},
        "mac": {"mac-failure"},
        "counter": {"wrong-plaintext", "mac-failure", "bmt-failure"},
        "ciphertext": {"wrong-plaintext", "mac-failure"},
    }
    matched = 0
    for comp, want in expected.items():
        plan = CrashPlan("tuple-omission", persist_id=target, component=comp)
        report = recover(crash(sim, plan), sim.keys, sim.geometry)
        got = report.verdict_set(addr)
        assert got == want, f"omit {comp}: expected {sorted(want)}, got {sorted(got)}"
        matched += 1
    print(f"ACCEPTANCE 06 PASS - tuple-omission verdict matrix {matched}/4 exact")


def test_criterion_07_sp_crash_prefix_sweep():
    rng = random.Random(7)
    traces = 20
    points_per_trace = 50
    violations = 0
    checked = 0
    for t in range(traces):
        text = random_trace_text(rng, rng.randrange(10, 40), rng.randrange(2, 8))
        sim = run_sim("sequential", text)
        for _ in range(points_per_trace):
            cycle = rng.randrange(sim.clock + 1)
            report = recover(
                crash(sim, CrashPlan("at-cycle", cycle=cycle)), sim.keys, sim.geometry
            )
            res = check_prefix_consistency(report, sim.golden)
            checked += 1
            if not res.ok:
                violations += 1
            elif report.plaintexts != replay_plaintext_prefix(sim.golden, res.matched):
                violations += 1
    assert checked == 1000
    assert violations == 0
    print(f"ACCEPTANCE 07 PASS - {checked} SP crash points, 0 prefix violations")


def test_criterion_08_epoch_ordering():
    rng = random.Random(8)
    traces = 100
    violations = 0
    boundary_checks = 0
    for t in range(traces):
        scheme = "coalesce" if t % 2 else "ooo"
        text = random_trace_text(rng, rng.randrange(8, 28), rng.randrange(2, 6),
                                 fence_every=rng.randrange(3, 9))
        sim = run_sim(scheme, text)
        # no component of epoch f becomes durable before every older epoch completed
        for entry in sim.wpq_entries:
            unlock = sim.unlock_cycle(entry.epoch)
            for older, done in sim.epoch_completion.items():
                if older < entry.epoch:
                    durable_from = max(min(entry.arrivals.values()), unlock)
                    if durable_from <= done and older == max(
                        e for e in sim.epoch_members if e < entry.epoch
                    ):
                        violations += 1
            if entry.drained_cycle is not None and entry.drained_cycle < unlock:
                violations += 1
        # root updates never interleave epochs out of order
        epochs_at_root = [sim.golden.log[pid].epoch for _c, pid, _v in sim.root_history]
        if epochs_at_root != sorted(epochs_at_root):
            violations += 1
        # crash at every epoch boundary lands exactly on the boundary state
        for epoch in sim.epoch_completion:
            report = recover(
                crash(sim, CrashPlan("epoch-boundary", epoch=epoch)), sim.keys, sim.geometry
            )
            res = check_prefix_consistency(report, sim.golden)
            boundary_checks += 1
            if not (res.ok and report.bmt_ok
                    and report.plaintexts == sim.golden.state_at_epoch_end(epoch)):
                violations += 1
    assert violations == 0
    print(f"ACCEPTANCE 08 PASS - {traces} multi-epoch traces, {boundary_checks} boundary crashes, 0 violations")


def test_criterion_09_direction_of_effect():
    events = generate(GenSpec(store_count=128, pages=8, run_length=64, fence_interval=32, seed=9))
    cycles = {}
    updates = {}
    sims = {}
    for scheme in SCHEMES:
        sim = Simulator(SimParams(scheme=scheme, levels=9, ideal_caches=True), events)
        run_until_idle(sim)
        cycles[scheme] = sim.last_completion_cycle()
        updates[scheme] = sim.stats_dict()["node_updates"]
        sims[scheme] = sim
    assert cycles["sequential"] > cycles["pipeline"] > cycles["ooo"] >= cycles["coalesce"]
    assert updates["coalesce"] <= updates["ooo"] * 0.5

    # the symbolic dedup oracle confirms the engine's coalesced count
    g9 = sims["coalesce"].geometry
    by_epoch = {}
    for rec in sims["coalesce"].golden.log:
        by_epoch.setdefault(rec.epoch, []).append(g9.leaf_for_page(rec.addr.page))
    oracle_count = sum(dedup_update_count(leaves, g9) for leaves in by_epoch.values())
    assert updates["coalesce"] == oracle_count
    reduction = 1 - updates["coalesce"] / updates["ooo"]
    print(
        f"ACCEPTANCE 09 PASS - cycles {cycles['sequential']}>{cycles['pipeline']}>"
        f"{cycles['ooo']}>={cycles['coalesce']}; updates {updates['coalesce']} vs "
        f"{updates['ooo']} ({reduction:.0%} fewer, oracle-confirmed)"
    )


def test_criterion_10_epoch_size_one_reduces_to_ordered():
    stores = [page_addr(i % 6, i % 11) for i in range(40)]
    fenced = []
    for i, s in enumerate(stores):
        if i:
            fenced.append("F")
        fenced.append(s)
    # epoch size 1, with tracking tables deep enough to expose the ordering
    ooo1 = run_sim("ooo", trace_text(*fenced), levels=9, ett_capacity=64)
    pipe = run_sim("pipeline", trace_text(*stores), levels=9)
    diff = abs(ooo1.last_completion_cycle() - pipe.last_completion_cycle())
    assert diff <= 40  # within one wave of the in-order pipeline

    # node updates never increase with epoch size on a fixed store sequence
    base = generate(GenSpec(store_count=60, pages=4, run_length=8, fence_interval=1, seed=10))
    counts = []
    for size in (1, 2, 4, 8, 16, 32):
        sim = Simulator(
            SimParams(scheme="coalesce", levels=4, ideal_caches=True, ett_capacity=4),
            refence(base, size),
        )
        run_until_idle(sim)
        counts.append(sim.stats_dict()["node_updates"])
    assert all(a >= b for a, b in zip(counts, counts[1:]))
    print(f"ACCEPTANCE 10 PASS - ooo@epoch1 vs pipeline diff={diff} cycles; updates by epoch size {counts}")


def test_criterion_11_determinism():
    from nvmsim.cli import RunConfig, build_report, run_simulation

    config = RunConfig(scheme="coalesce", levels=4, ideal_caches=True,
                       gen_stores=40, gen_pages=6, seed=11)
    sim1 = run_simulation(config)
    sim2 = run_simulation(config)
    report1 = json.dumps(build_report(config, sim1), sort_keys=True)
    report2 = json.dumps(build_report(config, sim2), sort_keys=True)
    assert report1 == report2
    assert sim1.update_log == sim2.update_log
    assert sim1.root_history == sim2.root_history
    print("ACCEPTANCE 11 PASS - identical config+trace+seed -> byte-identical report and event log")
