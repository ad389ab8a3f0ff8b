import copy

import pytest

from duobft.harness.checkers import check_all, check_liveness, check_safety, view_changes_after
from duobft.harness.metrics import compute_metrics, format_table, metrics_line
from duobft.harness.scenario import Protocol, Scenario, run
from duobft.simnet.faults import FaultScript, Partition
from duobft.simnet.trace import TraceError


def good_trace(**kw):
    base = dict(protocol=Protocol.DUOBFT, f=1, clients=1, requests_per_client=3,
                response_mix=(("both", 1.0),))
    base.update(kw)
    return run(Scenario(**base), 4).records


def test_clean_run_passes_everything():
    verdicts = check_all(good_trace())
    assert [v.line() for v in verdicts] == ["PASS safety[HYBRID]", "PASS safety[BFT]",
                                            "PASS liveness"]


def test_conflicting_commit_at_height_two_is_reported():
    records = good_trace()
    victim = next(r for r in records
                  if r["kind"] == "commit" and r["model"] == "HYBRID" and r["height"] == 2
                  and r["node"] == 2)
    victim["digest"] = "ff" * 32
    v = check_safety(records, "HYBRID")
    assert not v
    assert "height 2" in v.detail
    assert {r["node"] for r in v.witness} == {0, 2}
    assert {r["digest"] for r in v.witness} == {victim["digest"],
                                               next(r for r in records if r["kind"] == "commit"
                                                    and r["model"] == "HYBRID" and r["height"] == 2
                                                    and r["node"] == 0)["digest"]}


def test_skipped_height_is_reported():
    records = good_trace()
    first = next(i for i, r in enumerate(records)
                 if r["kind"] == "commit" and r["model"] == "HYBRID" and r["node"] == 1)
    del records[first]
    v = check_safety(records, "HYBRID")
    assert not v and "out of order" in v.detail


def test_bft_commit_outside_hybrid_sequence_is_reported():
    records = good_trace()
    for r in records:
        if r["kind"] == "commit" and r["model"] == "HYBRID" and r["node"] == 3 and r["height"] == 1:
            r["model"] = "OTHER"
    assert not check_safety(records, "BFT")


def test_byzantine_replica_commits_are_not_judged():
    records = good_trace()
    for r in records:
        if r["kind"] == "commit" and r["node"] == 3:
            r["digest"] = "00" * 32
    records[0]["honest"] = [0, 1, 2]
    assert all(check_all(records))


def test_truncated_trace_is_an_error_not_a_verdict():
    records = good_trace()[:-1]
    with pytest.raises(TraceError):
        check_safety(records, "HYBRID")
    with pytest.raises(TraceError):
        check_liveness(records)


def test_rechecking_is_pure():
    records = good_trace(faults=FaultScript(drop_prob=0.2))
    before = copy.deepcopy(records)
    first = [v.line() for v in check_all(records)]
    assert [v.line() for v in check_all(records)] == first
    assert records == before


def test_unaccepted_command_fails_liveness():
    records = [r for r in good_trace() if not (r["kind"] == "accept" and r["seq"] == 2)]
    v = check_liveness(records)
    assert not v and "command 2" in v.detail


def test_view_change_limit():
    records = good_trace()
    records.insert(-1, {"t": 99, "node": 1, "kind": "view", "view": 3})
    assert view_changes_after(records) == 3
    assert not check_liveness(records)
    assert check_liveness(records, max_view_changes=3)


def test_pre_gst_partition_passes():
    part = Partition(0, 300, (frozenset({0, 4}), frozenset({1, 2, 3})))
    records = good_trace(faults=FaultScript(partitions=(part,), gst=300), base_timeout=100,
                         client_timeout=150)
    assert all(check_all(records))


def test_zero_commands_metrics_are_safe():
    records = good_trace(requests_per_client=0)
    m = compute_metrics(records)
    assert m.completed == 0 and m.throughput == 0.0 and m.messages_per_command is None
    assert "completed 0" in format_table(m)
    assert "completed=0" in metrics_line(m)


def test_metrics_percentiles_on_known_latencies():
    records = [{"kind": "header", "clients": {"9": "HYBRID"}, "honest": [0]}]
    for seq, lat in enumerate([10, 20, 30, 40], 1):
        records.append({"t": 0, "node": 9, "kind": "submit", "client": 9, "seq": seq})
        records.append({"t": lat, "node": 9, "kind": "accept", "client": 9, "seq": seq,
                        "model": "HYBRID"})
    records.append({"kind": "end", "t": 40, "messages": 8})
    m = compute_metrics(records)
    s = m.latency["HYBRID"]
    assert (s.count, s.p50) == (4, 25.0)
    assert s.p99 == pytest.approx(39.7)
    assert m.throughput == pytest.approx(100.0)
    assert m.messages_per_command == 2.0
