from itertools import combinations

import pytest

from duobft.harness.checkers import check_all
from duobft.harness.scenario import Protocol, Scenario, run
from duobft.simnet.faults import FaultScript, Partition
from duobft.simnet.latency import WAN_REGIONS, assign_regions, builtin, wan10_matrix
from duobft.simnet.trace import TraceError, load_trace, read_trace, to_jsonl, write_trace


def small(**kw):
    base = dict(protocol=Protocol.DUOBFT, f=1, clients=2, requests_per_client=3,
                response_mix=(("both", 1.0),))
    base.update(kw)
    return Scenario(**base)


def commits(records, model=None):
    return [r for r in records if r["kind"] == "commit" and (model is None or r["model"] == model)]


def test_same_seed_same_trace():
    sc = small(faults=FaultScript(drop_prob=0.2, dup_prob=0.2, jitter=4))
    assert to_jsonl(run(sc, 7).records) == to_jsonl(run(sc, 7).records)


def test_different_seed_changes_lossy_run():
    sc = small(faults=FaultScript(drop_prob=0.2, jitter=4))
    assert to_jsonl(run(sc, 1).records) != to_jsonl(run(sc, 2).records)


def test_wan10_is_symmetric_with_stated_bands():
    m = wan10_matrix()
    assert len(m.regions) == 10 and m.approximate
    na, eu = WAN_REGIONS[:6], WAN_REGIONS[6:9]
    for a, b in combinations(m.regions, 2):
        assert m.round_trip(a, b) == m.round_trip(b, a)
        assert m.round_trip(a, b) >= m.round_trip(a, a)
    assert all(m.round_trip(a, b) < 30 for a, b in combinations(na, 2))
    assert all(m.round_trip(a, b) < 150 for a in na for b in eu)
    assert 220 <= m.round_trip("canada-central", "southeast-asia") <= 260


def test_unknown_matrix_rejected():
    with pytest.raises(ValueError):
        builtin("mars")


def test_placement_is_round_robin():
    m = wan10_matrix()
    place = assign_regions(m, 12, 3)
    assert place[0] == place[10] == m.regions[0]
    assert place[12] == m.regions[0] and place[14] == m.regions[2]


def test_minority_side_commits_nothing_while_cut_off():
    # replica 3 alone; clients sit with the majority
    part = Partition(0, 400, (frozenset({3}), frozenset({0, 1, 2, 4, 5})))
    res = run(small(faults=FaultScript(partitions=(part,), gst=400)), 3)
    assert all(check_all(res.records))
    inside = [r for r in commits(res.records) if r["node"] == 3 and r["t"] < 400]
    assert inside == []
    assert any(r["node"] == 0 and r["t"] < 400 for r in commits(res.records, "HYBRID"))


def test_everything_dropped_stalls_with_diagnostics():
    res = run(small(max_time=2000, faults=FaultScript(drop_prob=1.0)), 1)
    assert res.stalled
    end = res.records[-1]
    assert end["stalled"] and set(end["diagnostics"]["clients_waiting"]) == {"4", "5"}
    assert [v.line() for v in check_all(res.records)][-1].startswith("FAIL liveness")


def test_duplication_does_not_change_what_commits():
    plain = run(small(), 5)
    dup = run(small(faults=FaultScript(dup_prob=0.5)), 5)
    key = lambda recs: sorted((r["node"], r["model"], r["height"], r["digest"]) for r in commits(recs))
    assert key(plain.records) == key(dup.records)
    assert dup.messages > plain.messages


def test_trace_round_trip(tmp_path):
    res = run(small(), 2)
    path = tmp_path / "t.jsonl"
    write_trace(res.records, path)
    assert read_trace(path) == res.records


def test_truncated_trace_raises(tmp_path):
    text = to_jsonl(run(small(), 2).records)
    with pytest.raises(TraceError):
        load_trace(text.rsplit("\n", 2)[0] + "\n")
    with pytest.raises(TraceError):
        load_trace(text[: len(text) // 2])
    with pytest.raises(TraceError):
        load_trace("")
