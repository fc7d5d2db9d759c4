"""Reaction engine: active/passive roles and two-phase-commit rewriting.

A process acting as coordinator picks a (rule, embedding) pair from its
available set, opens a transaction with every process owning a piece of the
occurrence (image, parameters, attachment points), and commits iff all of
them vote yes.  Participants vote no when the embedding is stale against
their chunk or a conflicting transaction holds a lock; consistency never
depends on embeddings being up to date.  The committed write swaps the
store snapshot and triggers each participant's engine update.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field

from .bigraph import FreshIds, InvalidEmbedding, apply_reaction
from .embedding import ALL_LABELS, Embedding, evaluate


class StaleEmbedding(Exception):
    pass


@dataclass
class Prepare:
    txid: tuple
    rule: str
    emb: Embedding
    epoch: int

    kind = "prepare"

    def counts(self):
        return 0, 0


@dataclass
class Vote:
    txid: tuple
    ok: bool
    voter: int

    kind = "vote"

    def counts(self):
        return 0, 0


@dataclass
class Decision:
    txid: tuple
    commit: bool
    epoch_before: int
    epoch_after: int
    touched: frozenset

    kind = "decision"

    def counts(self):
        return 0, 0


class ExecutionPolicy:
    """Seeded uniform-random selection over available (rule, embedding)
    pairs; the voting hook accepts everything fresh by default."""

    def __init__(self, seed=0):
        self.rng = random.Random(seed)

    def choose(self, options):
        if not options:
            return None
        return options[self.rng.randrange(len(options))]

    def vote(self, txid, rule_name, emb):
        return True


def lock_refs(rule, emb, host):
    """Components a transaction reads: the redex image, the parameter
    subtrees, and the context attachment points."""
    refs = set(emb.host_refs())
    for s in rule.redex.sites():
        for w in emb.value(("site", s)) or ():
            refs.update(host.descendants(w))
    for r in rule.redex.roots():
        refs.add(emb.value(("root", r)))
    return {r if r[0] != "port" else ("node", r[1][0]) for r in refs}


class TxRole:
    """Coordinator and participant behaviour for one process."""

    def __init__(self, pid, engine, store, rules, policy, tracer=None):
        self.pid = pid
        self.engine = engine
        self.store = store
        self.rules = dict(rules)
        self.policy = policy
        self.tracer = tracer
        self.ids = FreshIds(f"p{pid}")
        self.locks = {}          # host ref -> txid
        self.prepared = {}       # txid -> set of locked refs
        self.coordinating = {}   # txid -> state dict
        self.counter = 0

    # -- active role ------------------------------------------------------------

    def proposal_options(self):
        opts = []
        for rule_name in sorted(self.rules):
            for emb in sorted(self.engine.available.get(rule_name, ()),
                              key=lambda e: e.sort_key()):
                opts.append((rule_name, emb))
        return opts

    def propose(self, choice=None):
        """Open a transaction for a chosen (or policy-chosen) available
        embedding; returns outbound messages (none when nothing to do)."""
        pick = choice if choice is not None else \
            self.policy.choose(self.proposal_options())
        if pick is None:
            return []
        rule_name, emb = pick
        rule = self.rules[rule_name]
        self.counter += 1
        txid = (self.counter, self.pid)
        participants = self.store.participants_for(rule, emb)
        participants.add(self.pid)
        tx = {"rule": rule_name, "emb": emb, "participants": sorted(participants),
              "votes": {}, "decided": False}
        self.coordinating[txid] = tx
        if self.tracer:
            self.tracer.event(self.pid, "tx-propose", rule_name, 0, 0,
                              extra=f"txid={txid} participants={tx['participants']}")
        epoch = self.store.epoch
        out = []
        for p in tx["participants"]:
            if p == self.pid:
                out += self.on_prepare(Prepare(txid, rule_name, emb, epoch),
                                       self.pid)
            else:
                out.append((p, Prepare(txid, rule_name, emb, epoch)))
        return out

    def _decide(self, txid):
        tx = self.coordinating[txid]
        if tx["decided"] or len(tx["votes"]) < len(tx["participants"]):
            return []
        tx["decided"] = True
        rule = self.rules[tx["rule"]]
        commit = all(tx["votes"].values())
        epoch_before = self.store.epoch
        touched = frozenset()
        if commit:
            try:
                epoch_before, epoch_after, touched = self.store.apply_commit(
                    txid, tx["rule"], rule, tx["emb"], self.pid,
                    set(tx["participants"]), self.ids)
            except InvalidEmbedding:
                commit = False
                epoch_after = epoch_before
        else:
            epoch_after = epoch_before
        if self.tracer:
            self.tracer.event(self.pid, "tx-commit" if commit else "tx-abort",
                              tx["rule"], 0, 0,
                              extra=f"txid={txid} participants={tx['participants']}")
        decision = Decision(txid, commit, epoch_before, epoch_after, touched)
        out = []
        for p in tx["participants"]:
            if p == self.pid:
                out += self.on_decision(decision, self.pid)
            else:
                out.append((p, decision))
        return out

    # -- passive role -------------------------------------------------------------

    def _fresh(self, rule, emb):
        """Stale-embedding detection against this process's chunk: every
        locally held piece must still exist and no condition may be violated
        on the facts we are authoritative for."""
        host = self.store.host_at(None)
        part = self.store.partition_at(None)
        for ref in emb.host_refs():
            owner_ref = ref if ref[0] != "port" else ("node", ref[1][0])
            if part.owner(owner_ref) == self.pid and not host.exists(ref):
                return False
        violated, _unknown = evaluate(emb, self.engine.chunk, ALL_LABELS)
        return not violated

    def on_prepare(self, msg: Prepare, sender):
        rule = self.rules[msg.rule]
        needed = {r for r in lock_refs(rule, msg.emb, self.store.host_at(None))
                  if self.store.partition_at(None).owner(r) == self.pid}
        conflict = any(self.locks.get(r) not in (None, msg.txid) for r in needed)
        ok = (not conflict and self._fresh(rule, msg.emb)
              and self.policy.vote(msg.txid, msg.rule, msg.emb))
        if ok:
            for r in needed:
                self.locks[r] = msg.txid
            self.prepared[msg.txid] = needed
        if self.tracer:
            self.tracer.event(self.pid, "tx-vote", msg.rule, 0, 0,
                              extra=f"txid={msg.txid} ok={ok}")
        vote = Vote(msg.txid, ok, self.pid)
        if sender == self.pid:
            return self.on_vote(vote, self.pid)
        return [(sender, vote)]

    def on_vote(self, msg: Vote, sender):
        tx = self.coordinating.get(msg.txid)
        if tx is None or tx["decided"]:
            return []
        tx["votes"][msg.voter] = msg.ok
        return self._decide(msg.txid)

    def on_decision(self, msg: Decision, sender):
        locked = self.prepared.pop(msg.txid, set())
        for r in locked:
            if self.locks.get(r) == msg.txid:
                del self.locks[r]
        if not msg.commit:
            return []
        return self.engine.on_update(msg.touched, msg.epoch_before,
                                     msg.epoch_after, notice=msg.txid)
