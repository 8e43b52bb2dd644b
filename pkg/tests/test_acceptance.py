"""Acceptance criteria, one test each.

Every test records a PASS or FAIL line (shown in the terminal summary) and
then asserts, so a criterion that does not hold also fails the run.
"""
import os
import random
import subprocess
import sys
import time

import pytest

from splitcast.engine import Simulation
from splitcast.evaluation import ROWS, compare_regimes, make_trial, run_scenario, sweep
from splitcast.fabric import sad_geometry
from splitcast.oracles import Infeasible, brute_force_spt, brute_force_tree, propagate_power
from splitcast.protocol import ProtocolParams, Regime, validate_tree
from splitcast.topology import generate_topology, save_topology
from splitcast.evaluation import save_scenario
from splitcast.tree import leaf_power

SEED = 2026
SIZES = (12, 36, 50)
PER_SIZE = 34


@pytest.fixture(scope="module")
def trials():
    start = time.perf_counter()
    made = [make_trial(n, i, SEED) for n in SIZES for i in range(PER_SIZE)]
    return made, time.perf_counter() - start


@pytest.fixture(scope="module")
def reports(trials):
    made, _ = trials
    out = {}
    for kind in ("on_path", "off_path"):
        start = time.perf_counter()
        reps = [compare_regimes(getattr(t, kind)) for t in made]
        out[kind] = (reps, time.perf_counter() - start)
    return out


def test_regime_equality_on_path(trials, reports, verdict):
    made, gen = trials
    reps, run = reports["on_path"]
    real = [r for r in reps if r.condition == "on-path"]
    equal = [r for r in real
             if r.cost("knowledge+on-path") == r.cost("no-knowledge+on-path")
             and r.row("knowledge+on-path").tree_hash == r.row("no-knowledge+on-path").tree_hash]
    elapsed = gen + run
    ok = len(real) >= 100 and len(equal) == len(real) and elapsed < 60
    assert verdict(1, ok, f"on-path equality {len(equal)}/{len(real)} scenarios "
                          f"(N in {SIZES}), {elapsed:.1f}s")


def test_regime_ordering_off_path(trials, reports, verdict):
    made, gen = trials
    reps, run = reports["off_path"]
    real = [r for r in reps if r.condition == "off-path"]
    k, nk = "knowledge+off-path", "no-knowledge+off-path"
    ordered = sum(r.cost(k) <= r.cost(nk) for r in real)
    strict = sum(r.cost(k) < r.cost(nk) for r in real)
    elapsed = gen + run
    ok = len(real) >= 100 and ordered == len(real) and strict >= 1 and elapsed < 60
    assert verdict(2, ok, f"off-path knowledge <= no-knowledge {ordered}/{len(real)}, "
                          f"strict in {strict}, {elapsed:.1f}s")


def test_all_splitters_lower_bound(reports, verdict):
    reps = reports["on_path"][0] + reports["off_path"][0]
    bad = [r for r in reps if any(r.cost("all-splitters") > r.cost(x) for x in ROWS[1:])]
    assert verdict(3, not bad, f"row 1 minimal in {len(reps) - len(bad)}/{len(reps)} scenarios")


def test_monotone_in_size(verdict):
    start = time.perf_counter()
    sizes = (12, 36, 50, 100)
    table = sweep(sizes, 30, SEED)
    elapsed = time.perf_counter() - start
    means = {r: [table.mean(r, n) for n in sizes] for r in ROWS}
    bad = [r for r, m in means.items() if any(a > b for a, b in zip(m, m[1:]))]
    shown = "; ".join(f"{r} " + "/".join(f"{v:.1f}" for v in m) for r, m in means.items())
    assert verdict(4, not bad and elapsed < 300, f"means nondecreasing in N for {5 - len(bad)}/5 rows "
                                                 f"({shown}), {elapsed:.1f}s")


def fuzz_runs(episodes, seed):
    """Randomized join/prune episodes; yields each simulator after every episode."""
    rng = random.Random(seed)
    done = 0
    while done < episodes:
        gen = rng.choice(["ring", "grid", "random-connected"])
        n = rng.randint(5, 20) if gen != "grid" else rng.choice([6, 9, 12, 16])
        t = generate_topology(gen, n, rng.uniform(0.0, 0.5), rng.randrange(2**31))
        params = ProtocolParams(regime=rng.choice(Regime.ALL), oeo_fallback=rng.random() < 0.3)
        ids = list(t.node_ids)
        sim = Simulation(t, rng.choice(ids), params)
        for _ in range(rng.randint(5, 40)):
            source = sim.sessions["s0"].source
            members = sim.members()
            joinable = [x for x in ids if x not in members and x != source]
            if members and (not joinable or rng.random() < 0.35):
                e = sim.prune(rng.choice(members))
            else:
                e = sim.join(rng.choice(joinable))
            yield sim, e
            done += 1
            if done >= episodes:
                return


def test_fuzz_validity(verdict):
    count, bad, outcomes = 0, [], {}
    for sim, e in fuzz_runs(10_000, SEED):
        count += 1
        key = e.reason or e.outcome
        outcomes[key] = outcomes.get(key, 0) + 1
        rep = validate_tree(sim.tree(), sim.fabrics, sim.topology)
        if not rep.ok:
            bad.append((count, rep.violations[:2]))
    summary = ", ".join(f"{k} {v}" for k, v in sorted(outcomes.items()))
    assert verdict(5, count >= 10_000 and not bad, f"{count - len(bad)}/{count} episodes valid ({summary})")


def small_cases(samples, seed):
    rng = random.Random(seed)
    for _ in range(samples):
        n = rng.randint(3, 7)
        t = generate_topology("random-connected", n, 0.0, rng.randrange(2**31))
        ids = list(t.node_ids)
        rng.shuffle(ids)
        k = rng.randint(1, n - 1)
        splitters = [x for x in t.node_ids if rng.random() < 0.3]
        yield t, ids[0], ids[1 : 1 + k], splitters


def test_oracle_equivalence(verdict):
    spt_ok = spt_total = 0
    sound = complete = infeasible = feasible = 0
    for t, source, members, splitters in small_cases(600, SEED):
        full = t.with_splitters(t.node_ids)
        want = brute_force_spt(full, source, members).branches
        for regime in Regime.ALL:
            sim = Simulation(full, source, ProtocolParams(regime=regime))
            ok = all(sim.join(m).ok for m in members)
            spt_total += 1
            spt_ok += ok and sim.tree().branches == want
        sparse = t.with_splitters(splitters)
        try:
            brute_force_tree(sparse, source, members)
            possible = True
        except Infeasible:
            possible = False
        for regime in Regime.ALL:
            sim = Simulation(sparse, source, ProtocolParams(regime=regime))
            failed = not all([sim.join(m).ok for m in members])
            if possible:
                feasible += 1
                complete += not failed
            else:
                infeasible += 1
                sound += failed
    ok = spt_ok == spt_total and sound == infeasible and complete == feasible
    assert verdict(6, ok, f"all-splitter tree == SPT {spt_ok}/{spt_total}; sparse: oracle infeasible -> "
                          f"failure {sound}/{infeasible}, oracle feasible -> success {complete}/{feasible}")


def test_power_conservation(verdict):
    trees = checked = 0
    bad = []
    for sim, e in fuzz_runs(3_000, SEED + 1):
        tree = sim.tree()
        if not tree.branches:
            continue
        trees += 1
        electrical = {n for n, f in sim.fabrics.items() if f.electrical}
        oracle = propagate_power(tree, electrical=electrical)
        for m in tree.members:
            if m == tree.source:
                continue
            checked += 1
            if leaf_power(tree, sim.fabrics, m, sim.topology) != oracle[m]:
                bad.append(("leaf", m))
        for node, f in sim.fabrics.items():
            for (port, w), outs in f.branches.items():
                factors = f.power_factors(port, w)
                if (port, w) not in f.electrical and sum(factors.values()) != 1:
                    bad.append(("split", node))
        for node in tree.nodes:
            kids = tree.children(node)
            if kids and node not in electrical and node != tree.source:
                if sum(oracle[k] for k in kids) != oracle[node]:
                    bad.append(("sum", node))
    assert verdict(7, not bad and checked > 0,
                   f"{checked} leaf powers exact over {trees} trees, {len(bad)} mismatches")


def test_sad_geometry(verdict):
    bad = []
    for p in range(1, 17):
        for w in range(1, 9):
            g = sad_geometry(p, w)
            got = (g.splitters, g.gates, g.switching_elements, g.sad_planes, g.demultiplexers, g.multiplexers)
            if got != (p, p * p, p * p, w, p, p):
                bad.append((p, w))
    g = sad_geometry(3, 2)
    fig = (g.splitters, g.gates, g.switching_elements, g.sad_planes) == (3, 9, 9, 2)
    assert verdict(8, not bad and fig, f"{128 - len(bad)}/128 closed forms, P=3 W=2 gives "
                                       f"{g.splitters} splitters {g.gates} gates {g.sad_planes} planes")


def _cli(args, cwd, hashseed):
    env = dict(os.environ, PYTHONHASHSEED=str(hashseed))
    return subprocess.run([sys.executable, "-m", "splitcast.cli", *args], cwd=cwd, env=env,
                          capture_output=True, text=True, check=False)


def test_determinism(tmp_path, verdict):
    trial = make_trial(12, 0, SEED)
    (tmp_path / "net.txt").write_text(save_topology(trial.off_path.topology))
    (tmp_path / "s.txt").write_text(save_scenario(trial.off_path, "net.txt"))
    same = []
    for regime in Regime.ALL:
        outputs = []
        for hashseed in (1, 2):
            d = tmp_path / f"{regime}-{hashseed}"
            d.mkdir()
            _cli(["run", "--scenario", "../s.txt", "--regime", regime, "--trace", "trace.tsv",
                  "--snapshot", "snap.txt", "-o", "run.txt"], d, hashseed)
            _cli(["compare", "--scenario", "../s.txt", "--report", "report.txt", "-o", "cmp.txt"], d, hashseed)
            outputs.append([(d / f).read_bytes() for f in ("trace.tsv", "snap.txt", "run.txt", "report.txt")])
        same.append(outputs[0] == outputs[1] and all(outputs[0]))
    twice = [run_scenario(trial.on_path, r).simulation.trace_text() for r in Regime.ALL for _ in (0, 1)]
    same.append(twice[0] == twice[1] and twice[2] == twice[3])
    serial = sweep((12, 36), 6, SEED, workers=1).to_text("delimited")
    parallel = sweep((12, 36), 6, SEED, workers=3).to_text("delimited")
    same.append(serial == parallel)
    assert verdict(9, all(same), f"{sum(same)}/{len(same)} byte-identical comparisons "
                                 "(CLI runs under two hash seeds, in-process reruns, sweep workers 1 vs 3)")
