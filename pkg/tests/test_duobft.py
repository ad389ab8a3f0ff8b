from dataclasses import replace

from conftest import Wire, build_replicas, request

from duobft.duobft import DuobftReplica
from duobft.harness.checkers import check_all
from duobft.harness.scenario import Protocol, Scenario, build, run
from duobft.messages import (
    Block,
    ClientReply,
    Model,
    Propose,
    ResponseModel,
    Vote,
    propose_statement,
)
from duobft.quorum import duobft_params
from duobft.replica import CommPattern, Pacing, ReplicaConfig
from duobft.simnet.faults import Behavior, FaultScript, NodeFault

CLIENT = 10


def started(config=ReplicaConfig(), f=1):
    reps = build_replicas(DuobftReplica, duobft_params(f), config)
    wire = Wire(reps)
    for r in reps:
        wire.push(r.id, r.start())
    return wire, reps


def test_one_command_commits_under_both_rules():
    wire, reps = started()
    wire.inject(CLIENT, 0, request(CLIENT, 1, ResponseModel.BOTH))
    wire.run()
    for r in reps:
        assert r.frontier(Model.HYBRID) == 2  # B1 with the command, then an empty B2
        assert r.frontier(Model.BFT) == 1  # B2 has a BFT certificate but no certified child
    replies = [m for _, dest, m in wire.client_mail if isinstance(m, ClientReply)]
    assert {(m.replica, m.model) for m in replies} == {(r, m) for r in range(4)
                                                       for m in (Model.HYBRID, Model.BFT)}


def test_hybrid_commit_needs_only_primary_plus_one():
    wire, reps = started()
    # replica 1's votes reach nobody; 2 and 3 are cut off from everyone
    wire.hold = lambda src, dest, msg: src in (2, 3) or dest in (2, 3) or (
        isinstance(msg, Vote) and src == 1 and dest != 1)
    wire.inject(CLIENT, 0, request(CLIENT, 1))
    wire.run()
    # replica 1 holds {Propose from 0, own vote} = f+1; the primary saw only its own
    assert reps[1].frontier(Model.HYBRID) == 1
    assert reps[1].frontier(Model.BFT) == 0
    assert reps[0].frontier(Model.HYBRID) == 0


def test_out_of_order_proposals_are_buffered():
    wire, reps = started()
    wire.hold = lambda src, dest, msg: dest == 3 and isinstance(msg, Propose)
    wire.inject(CLIENT, 0, request(CLIENT, 1))
    wire.run()
    held = [h for h in wire.held if isinstance(h[2], Propose)]
    assert [h[2].block.height for h in held] == [1, 2]
    wire.hold = lambda *a: False
    wire.held = []
    wire.queue.extend(reversed(held))
    wire.run()
    assert reps[3].lanes[0].voted == 2
    assert reps[3].frontier(Model.HYBRID) == 2


def test_parent_mismatch_is_evidence_not_a_vote():
    wire, reps = started()
    primary = reps[0]
    bad = Block(1, b"\x11" * 32, ())
    ui = primary.usig.create_ui(propose_statement(0, 0, bad))
    wire.inject(0, 1, Propose(0, 0, bad, None, ui))
    wire.run()
    assert reps[1].lanes[0].voted == 0
    assert any(d["reason"] == "proposal does not extend chain" for _, d in wire.kinds("evidence"))
    assert any(src == 1 for src, _ in wire.kinds("req_view_change"))


def test_proposal_from_non_primary_ignored():
    wire, reps = started()
    blk = Block(1, None, ())
    ui = reps[2].usig.create_ui(propose_statement(0, 2, blk))
    wire.inject(2, 1, Propose(0, 2, blk, None, ui))
    wire.run()
    assert reps[1].lanes[0].accepted == 0


def test_forged_proposer_ui_dropped():
    wire, reps = started()
    blk = Block(1, None, ())
    ui = reps[0].usig.create_ui(propose_statement(0, 0, blk))
    wire.inject(0, 1, Propose(0, 0, blk, None, replace(ui, counter=5)))
    wire.run()
    assert reps[1].lanes[0].accepted == 0


def test_linear_mode_ignores_raw_votes_at_backups():
    wire, reps = started(ReplicaConfig(comm=CommPattern.LINEAR))
    wire.inject(CLIENT, 0, request(CLIENT, 1))
    wire.run()
    assert all(r.frontier(Model.HYBRID) >= 1 for r in reps)
    # a backup handed a raw vote directly does not count it
    rep = reps[2]
    before = dict(rep.votes)
    v = Vote(0, 1, b"\x00" * 32, 9, 0, rep.lanes[0].proposer_ui[1],
             reps[1].usig.create_ui(b"x"))
    rep.handle(1, v)
    assert rep.votes == before


def test_hybrid_pacing_proposes_before_bft_certificate():
    wire, reps = started(ReplicaConfig(pacing=Pacing.HYBRID_QC))
    # only replica 1 talks to the primary: at most f+1 = 2 votes there
    wire.hold = lambda src, dest, msg: src in (2, 3) and dest == 0
    wire.inject(CLIENT, 0, request(CLIENT, 1))
    wire.inject(CLIENT, 0, request(CLIENT + 1, 1))
    wire.run()
    assert reps[0].lanes[0].proposed >= 2
    wire2, reps2 = started(ReplicaConfig(pacing=Pacing.BFT_QC))
    wire2.hold = lambda src, dest, msg: src in (2, 3) and dest == 0
    wire2.inject(CLIENT, 0, request(CLIENT, 1))
    wire2.inject(CLIENT, 0, request(CLIENT + 1, 1))
    wire2.run()
    assert reps2[0].lanes[0].proposed == 1


def test_duplicate_request_answered_from_cache():
    wire, reps = started()
    wire.inject(CLIENT, 0, request(CLIENT, 1))
    wire.run()
    height = reps[0].lanes[0].proposed
    wire.client_mail.clear()
    wire.inject(CLIENT, 0, request(CLIENT, 1))
    wire.run()
    assert reps[0].lanes[0].proposed == height
    assert any(isinstance(m, ClientReply) and m.replica == 0 for _, _, m in wire.client_mail)


def test_fewer_than_f_plus_one_requests_keep_the_view():
    wire, reps = started()
    wire.timeout(1)  # nothing pending: the timer does nothing
    reps[1].pending[(CLIENT, 1)] = request(CLIENT, 1).command
    wire.timeout(1)
    wire.run()
    assert all(r.view == 0 and not r.in_view_change for r in reps)


def test_certified_block_survives_primary_crash():
    # the primary dies just after its first proposal is out; replicas certify B1
    # in view 0 and must carry it into view 1
    sc = Scenario(Protocol.DUOBFT, 1, clients=1, requests_per_client=1,
                  response_mix=(("both", 1.0),), base_timeout=100, client_timeout=150,
                  faults=FaultScript(nodes={0: NodeFault(Behavior.CRASH, at=2)}))
    res = run(sc, 1)
    assert all(check_all(res.records))
    commits = [r for r in res.records if r["kind"] == "commit" and r["height"] == 1]
    hyb0 = {r["digest"] for r in commits if r["model"] == "HYBRID" and r["view"] == 0}
    bft1 = {r["digest"] for r in commits if r["model"] == "BFT" and r["view"] >= 1}
    assert len(hyb0) == 1 and hyb0 == bft1
    installs = [r for r in res.records if r["kind"] == "view" and r["view"] == 1]
    assert {r["node"] for r in installs} == {1, 2, 3}


class StrippingPrimary(DuobftReplica):
    """New primary that drops the last adopted entry from the NewView it sends."""

    def _compute_adopted(self, vcs):
        adopted = super()._compute_adopted(vcs)
        return adopted[:-1] if self.params.primary(vcs[0].new_view) == self.id else adopted


def test_stripped_new_view_is_rejected_and_escalated():
    sc = Scenario(Protocol.DUOBFT, 2, clients=1, requests_per_client=2,
                  response_mix=(("both", 1.0),), base_timeout=100, client_timeout=150,
                  faults=FaultScript(nodes={0: NodeFault(Behavior.CRASH, at=2),
                                            1: NodeFault(Behavior.EQUIVOCATE)}))
    sim = build(sc, 1)
    # swap in the stripping logic for replica 1, keeping its keys
    old = sim.replicas[1]
    sim.replicas[1] = StrippingPrimary(1, old.params, old.usig, old.keys, old.config)
    sim.nodes[1] = sim.replicas[1]
    sim.filters.pop(1, None)
    res = sim.run()
    rejected = [r for r in res.records if r["kind"] == "nv_rejected"]
    assert rejected and all(r["reason"] == "adopted sequence mismatch" for r in rejected)
    assert {r["node"] for r in rejected} >= {2, 3, 4, 5, 6}
    assert not res.stalled
    assert all(check_all(res.records))
