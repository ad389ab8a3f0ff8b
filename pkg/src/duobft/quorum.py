"""Flexible hybrid quorum calculus and quorum-certificate assembly.

Commit quorums only have to exceed ``f``; view-change quorums must intersect
every commit quorum (``commit + view_change > n``). Certificates are plain
sets of attested votes checked against those thresholds.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Optional

from duobft.messages import (
    CertVote,
    Model,
    QuorumCertificate,
    Stmt,
    Vote,
    block_statement,
)
from duobft.usig import verify_ui


class ParameterError(ValueError):
    pass


class ContractViolation(RuntimeError):
    """Raised when a caller hands in an inconsistent vote set."""


@dataclass(frozen=True)
class QuorumParams:
    n: int
    f: int
    commit_hybrid: int
    commit_bft: Optional[int]
    view_change: int
    req_view_change: int

    def __post_init__(self) -> None:
        if not self.commit_hybrid > self.f:
            raise ParameterError("commit quorum must exceed f")
        if not self.view_change + self.commit_hybrid > self.n:
            raise ParameterError("view-change and commit quorums must intersect")
        for q in (self.commit_hybrid, self.commit_bft, self.view_change, self.req_view_change):
            if q is not None and q > self.n - self.f:
                raise ParameterError(f"quorum {q} unattainable with {self.f} faults of {self.n}")

    def threshold(self, flavor: Model) -> int:
        if flavor is Model.HYBRID:
            return self.commit_hybrid
        if self.commit_bft is None:
            raise ParameterError("no BFT quorum in this configuration")
        return self.commit_bft

    def primary(self, view: int) -> int:
        return view % self.n


def duobft_params(f: int) -> QuorumParams:
    if f < 1:
        raise ParameterError("f must be at least 1")
    return QuorumParams(n=3 * f + 1, f=f, commit_hybrid=f + 1, commit_bft=2 * f + 1,
                        view_change=2 * f + 1, req_view_change=f + 1)


def flexminbft_params(n: int, f: int) -> QuorumParams:
    if f < 1 or n < 1:
        raise ParameterError("n and f must be positive")
    if f + 1 > n - f:
        raise ParameterError(f"commit quorum {f + 1} unattainable: n - f = {n - f}")
    return QuorumParams(n=n, f=f, commit_hybrid=f + 1, commit_bft=None,
                        view_change=n - f, req_view_change=f + 1)


def vote_statement_for(cert_view: int, replica: int, instance: int, height: int,
                       digest: bytes, primary: int) -> bytes:
    # the primary's Propose doubles as its vote
    kind = Stmt.PROPOSE if replica == primary else Stmt.VOTE
    return block_statement(kind, cert_view, replica, instance, height, digest)


def vote_is_valid(vote: CertVote, *, view: int, instance: int, height: int, digest: bytes,
                  params: QuorumParams, public_keys: Mapping[int, bytes]) -> bool:
    key = public_keys.get(vote.replica)
    if key is None or vote.ui.replica != vote.replica:
        return False
    stmt = vote_statement_for(view, vote.replica, instance, height, digest, params.primary(view))
    return verify_ui(key, stmt, vote.ui)


def try_assemble(votes: Iterable[CertVote], flavor: Model, params: QuorumParams,
                 public_keys: Mapping[int, bytes], *, block_digest: bytes, height: int,
                 view: int, instance: int = 0) -> Optional[QuorumCertificate]:
    """Build a certificate once enough distinct, verifying votes are present.

    Returns None while the distinct count is below the flavor threshold.
    ``votes`` may hold :class:`CertVote` pairs or full :class:`Vote` messages;
    a Vote for some other (view, height, digest) is a caller bug.
    """
    kept: dict[int, CertVote] = {}
    for vote in votes:
        if isinstance(vote, Vote):
            if (vote.view, vote.height, vote.block_digest, vote.instance) != (
                    view, height, block_digest, instance):
                raise ContractViolation("vote set mixes different blocks")
            vote = CertVote(vote.sender, vote.voter_ui)
        elif not isinstance(vote, CertVote):
            raise ContractViolation(f"not a vote: {vote!r}")
        if vote.replica in kept:
            continue
        if vote_is_valid(vote, view=view, instance=instance, height=height,
                         digest=block_digest, params=params, public_keys=public_keys):
            kept[vote.replica] = vote
    if len(kept) < params.threshold(flavor):
        return None
    ordered = tuple(kept[r] for r in sorted(kept))
    return QuorumCertificate(block_digest, height, view, instance, ordered, flavor)


def validate_certificate(cert: QuorumCertificate, params: QuorumParams,
                         public_keys: Mapping[int, bytes]) -> bool:
    if not isinstance(cert, QuorumCertificate):
        return False
    signers = [v.replica for v in cert.votes]
    if len(set(signers)) != len(signers):
        return False
    try:
        need = params.threshold(cert.flavor)
    except ParameterError:
        return False
    if len(signers) < need:
        return False
    return all(
        vote_is_valid(v, view=cert.view, instance=cert.instance, height=cert.height,
                      digest=cert.block_digest, params=params, public_keys=public_keys)
        for v in cert.votes
    )
