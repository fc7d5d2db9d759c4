"""Deterministic discrete-event simulator for the distributed machine.

The simulator owns the process family, reliable point-to-point channels
with causal delivery (per-process sequence vectors stamped on messages),
the transactional snapshot store (host, partition, overlay per epoch), and
the traffic instrumentation.  Quiescence is decided globally by the
simulator; processes never branch on global knowledge.

Identical configurations produce byte-identical traces.
"""
from __future__ import annotations

import json
import random
from collections import Counter, deque
from dataclasses import dataclass, field, asdict

from .bigraph import Bigraph, ReactionRule, validate
from .embedding import Embedding, enumerate_embeddings
from .engine import EngineProcess, Retract, Suggest
from .partition import (Overlay, Partition, build_overlay, by_control,
                        by_root, explicit, finest)
from .pemb import QuotientedAtomGraph, quotient
from .reactions import Decision, ExecutionPolicy, Prepare, TxRole, Vote


class NonQuiescent(Exception):
    pass


@dataclass
class SimConfig:
    seed: int = 0
    schedule: str = "deterministic"      # deterministic | random
    max_ticks: int = 200000
    compression: bool = False
    partition: object = "finest"         # strategy selector, see build_partition
    adj_t: str = "clique"
    reactions: int = 0

    def to_json(self):
        return asdict(self)

    @classmethod
    def from_json(cls, data):
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in data.items() if k in known})


@dataclass
class Scenario:
    host: Bigraph
    guests: dict
    rules: dict
    config: SimConfig = field(default_factory=SimConfig)

    def all_guests(self):
        out = dict(self.guests)
        for name, rule in self.rules.items():
            out.setdefault(name, rule.redex)
        return out

    def to_json(self):
        return {
            "host": self.host.to_json(),
            "guests": {n: g.to_json() for n, g in sorted(self.guests.items())},
            "rules": {n: r.to_json() for n, r in sorted(self.rules.items())},
            "config": self.config.to_json(),
        }

    @classmethod
    def from_json(cls, data):
        host = Bigraph.from_json(data["host"])
        guests = {n: Bigraph.from_json(g)
                  for n, g in data.get("guests", {}).items()}
        rules = {n: ReactionRule.from_json(r, name=n)
                 for n, r in data.get("rules", {}).items()}
        return cls(host, guests, rules,
                   SimConfig.from_json(data.get("config", {})))

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_json(), f, sort_keys=True, indent=1)

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.from_json(json.load(f))


def build_partition(h: Bigraph, spec) -> Partition:
    """Resolve a partition selector: "finest", "by-root",
    {"by-control": [ctrl, ...]}, or an explicit component-tag map."""
    if spec == "finest":
        return finest(h)
    if spec == "by-root":
        return by_root(h)
    if isinstance(spec, dict) and "by-control" in spec:
        return by_control(h, spec["by-control"])
    if isinstance(spec, dict):
        return Partition.from_json(h, spec)
    raise ValueError(f"unknown partition selector {spec!r}")


class GlobalStore:
    """Transactional snapshots of (host, partition, overlay) per epoch.

    Processes read the snapshot named by a message's epoch, so in-flight
    traffic keeps routing against the structure it was generated for.
    """

    def __init__(self, host, partition, adj_t="clique", stats=None):
        overlay = build_overlay(host, partition, adj_t)
        self.snapshots = [(host, partition, overlay)]
        self.adj_t = adj_t
        self.epoch = 0
        self.commit_log = []      # (txid, rule_name, emb) in commit order
        self.stats = stats

    def host_at(self, epoch=None) -> Bigraph:
        return self.snapshots[self.epoch if epoch is None else epoch][0]

    def partition_at(self, epoch=None) -> Partition:
        return self.snapshots[self.epoch if epoch is None else epoch][1]

    def overlay_at(self, epoch=None) -> Overlay:
        return self.snapshots[self.epoch if epoch is None else epoch][2]

    def participants_for(self, rule, emb):
        """Owners of the occurrence: image, parameter subtrees, attachment
        points (a directory lookup standing in for ownership metadata)."""
        host = self.host_at()
        part = self.partition_at()
        refs = set(emb.host_refs())
        for s in rule.redex.sites():
            for w in emb.value(("site", s)) or ():
                refs.update(host.descendants(w))
        for r in rule.redex.roots():
            refs.add(emb.value(("root", r)))
        return {part.owner(ref) for ref in refs if ref[0] != "port"} | \
               {part.owner(("node", ref[1][0])) for ref in refs
                if ref[0] == "port"}

    def apply_commit(self, txid, rule_name, rule, emb, coordinator,
                     participants, ids):
        from .bigraph import apply_reaction
        host = self.host_at()
        new_host = apply_reaction(host, rule, emb, ids)
        new_part = extend_partition(self.partition_at(), new_host,
                                    coordinator, participants)
        new_overlay = build_overlay(new_host, new_part, self.adj_t)
        touched = host_diff(host, new_host)
        before = self.epoch
        self.snapshots.append((new_host, new_part, new_overlay))
        self.epoch += 1
        self.commit_log.append((txid, rule_name, emb))
        if self.stats is not None:
            self.stats.new_epoch()
        return before, self.epoch, touched


def extend_partition(old: Partition, new_host: Bigraph, coordinator,
                     participants) -> Partition:
    """Surviving components keep their owner; components created by the
    rewrite go to the coordinator (clamped to the fixed process family)."""
    assignment = {}
    for ref in new_host.components():
        if ref in old.assignment:
            assignment[ref] = old.assignment[ref]
        else:
            assignment[ref] = coordinator
    return Partition(assignment)


def host_diff(old: Bigraph, new: Bigraph):
    """Components whose existence or incident facts changed in a rewrite."""
    oldc, newc = set(old.components()), set(new.components())
    touched = set(oldc ^ newc)
    for ref in oldc & newc:
        if ref[0] in ("node", "site") and old.prnt[ref] != new.prnt[ref]:
            touched.add(ref)
            touched.add(old.prnt[ref])
            touched.add(new.prnt[ref])
        if ref[0] == "node":
            for i in range(old.ctrl[ref[1]].arity):
                p = ("port", (ref[1], i))
                if old.link.get(p) != new.link.get(p):
                    touched.add(ref)
                    if old.link.get(p):
                        touched.add(old.link[p])
                    if new.link.get(p):
                        touched.add(new.link[p])
    places = set(old.prnt.values()) | set(new.prnt.values()) \
        | {("root", r) for r in old.roots()} | {("root", r) for r in new.roots()}
    for parent in places:
        if set(old.children(parent)) != set(new.children(parent)):
            touched.add(parent)
    for handle in set(old.handles()) | set(new.handles()):
        if set(old.handle_points(handle)) != set(new.handle_points(handle)):
            touched.add(handle)
    return frozenset(t for t in touched if t[0] != "port")


class Tracer:
    """Machine-readable event log; one tab-separated line per event."""

    def __init__(self, store=None):
        self.lines = []
        self.tick = 0
        self.store = store
        self.ancestor_cases = []

    def event(self, pid, kind, guest, atoms, edges, extra=""):
        self.lines.append(
            f"{self.tick}\t{pid}\t{kind}\t{guest}\t{atoms}\t{edges}"
            f"\t{atoms + edges}\t{extra}")

    def ancestor_edge(self, pid, guest, alpha, beta, sender):
        case = "?"
        if self.store is not None:
            case = classify_ancestor_case(self.store, pid, alpha, beta, sender)
        self.ancestor_cases.append(case)
        self.event(pid, "ancestor-edge", guest, 0, 1, extra=f"case={case}")

    def text(self):
        return "\n".join(self.lines) + "\n"


def classify_ancestor_case(store, pid, alpha, beta, sender):
    """Which clause of the ancestor-check placement lemma covers this edge:
    (a) the process holds the least common ancestor of the two images,
    (b) it holds both roots above them, (c) it holds one root and received
    the other atom."""
    host = store.host_at()
    part = store.partition_at()

    def image_place(atom):
        [(ref, value)] = atom.items()
        if ref[0] == "root":
            return value
        got = next(iter(value), None)
        return got

    ua = image_place(alpha)
    ub = image_place(beta)
    if ua is None or ub is None:
        return "a"
    if not host.exists(ua) or not host.exists(ub):
        return "?"
    chain_a = host.parent_chain(ua)
    chain_b = host.parent_chain(ub)
    lca = next((c for c in chain_a if c in set(chain_b)), None)
    if lca is not None and part.owner(lca) == pid:
        return "a"
    va, vb = chain_a[-1], chain_b[-1]
    own_a, own_b = part.owner(va) == pid, part.owner(vb) == pid
    if own_a and own_b:
        return "b"
    if (own_a or own_b) and sender != pid:
        return "c"
    return "d"


class TrafficStats:
    """Per-epoch traffic: message/atom/edge counts per link and per guest,
    plus (edge, link) transmission pairs for the single-traversal check."""

    def __init__(self):
        self.epochs = []
        self.new_epoch()

    def new_epoch(self):
        self.epochs.append({
            "messages": Counter(),
            "atoms": Counter(),
            "edges": Counter(),
            "edge_link": Counter(),
        })

    @property
    def current(self):
        return self.epochs[-1]

    def record(self, link, msg):
        atoms, edges = msg.counts()
        cur = self.current
        cur["messages"][link] += 1
        guest = getattr(msg, "guest", "-")
        cur["atoms"][guest] += atoms
        cur["edges"][guest] += edges
        if msg.kind == "suggest":
            for e in msg.graph.edges:
                cur["edge_link"][(guest, _edge_key(e), link)] += 1
        elif msg.kind == "retract":
            for e in msg.edges:
                cur["edge_link"][(guest, _edge_key(e), link)] += 1

    def repeated_edge_transmissions(self):
        out = []
        for i, epoch in enumerate(self.epochs):
            for key, count in epoch["edge_link"].items():
                if count > 1:
                    out.append((i, key, count))
        return out

    def epoch_totals(self):
        out = []
        for epoch in self.epochs:
            per_guest = {}
            for guest in set(epoch["atoms"]) | set(epoch["edges"]):
                per_guest[guest] = (epoch["atoms"][guest]
                                    + epoch["edges"][guest])
            out.append({
                "messages": sum(epoch["messages"].values()),
                "per_guest": per_guest,
                "total": sum(per_guest.values()),
            })
        return out


def _edge_key(e):
    return tuple(sorted(a.sort_key() for a in e))


class Simulator:
    """Drives the process family to quiescence under a schedule policy."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        cfg = scenario.config
        self.config = cfg
        bad = validate(scenario.host)
        if bad:
            raise ValueError(f"invalid host: {bad}")
        if not scenario.host.is_agent():
            raise ValueError("the machine state must be an agent")
        self.partition = build_partition(scenario.host, cfg.partition)
        if not self.partition.is_total_on(scenario.host):
            raise ValueError("partition is not total on the host")
        self.stats = TrafficStats()
        self.store = GlobalStore(scenario.host, self.partition, cfg.adj_t,
                                 stats=self.stats)
        self.tracer = Tracer(self.store)
        self.rng = random.Random(cfg.seed)
        guests = scenario.all_guests()
        self.pids = self.partition.procs()
        self.procs = {}
        self.tx = {}
        for pid in self.pids:
            eng = EngineProcess(pid, guests, self.store, tracer=self.tracer)
            self.procs[pid] = eng
            self.tx[pid] = TxRole(pid, eng, self.store, scenario.rules,
                                  ExecutionPolicy(cfg.seed * 7919 + pid),
                                  tracer=self.tracer)
        self.queues = {}
        self.next_msg_id = 0
        self.msg_dest = {}
        self.seen = {pid: set() for pid in self.pids}       # sent or delivered
        self.delivered_ids = {pid: set() for pid in self.pids}
        self.tick = 0
        self.booted = False
        self.quiesced = False

    # -- channels -----------------------------------------------------------------
    #
    # Causal point-to-point delivery: each message carries the ids of every
    # message its sender had sent or delivered (its causal past); a message
    # is deliverable once all of that past destined to the same receiver has
    # been handled.  Channels are FIFO.

    def _send(self, src, dst, msg):
        if self.config.compression and msg.kind == "suggest":
            msg = self._maybe_compress(msg)
        mid = self.next_msg_id
        self.next_msg_id += 1
        self.msg_dest[mid] = dst
        deps = frozenset(self.seen[src])
        self.seen[src].add(mid)
        self.queues.setdefault((src, dst), deque()).append((mid, deps, msg))
        self.stats.record((src, dst), msg)
        atoms, edges = msg.counts()
        self.tracer.event(src, f"send-{msg.kind}", getattr(msg, "guest", "-"),
                          atoms, edges, extra=f"to={dst}")

    def _maybe_compress(self, msg: Suggest):
        q = quotient(msg.graph, self.procs[self.pids[0]].guests[msg.guest])
        if q.wire_size() < msg.graph.wire_size():
            return CompressedSuggest(msg.guest, q, msg.frag, msg.epoch,
                                     msg.graph)
        return msg

    def deliverable(self):
        """Channels whose head message respects causal order at the
        destination."""
        out = []
        for (src, dst), queue in sorted(self.queues.items()):
            if not queue:
                continue
            _mid, deps, _msg = queue[0]
            if all(d in self.delivered_ids[dst] for d in deps
                   if self.msg_dest[d] == dst):
                out.append((src, dst))
        return out

    def _deliver(self, src, dst):
        mid, deps, msg = self.queues[(src, dst)].popleft()
        assert all(d in self.delivered_ids[dst] for d in deps
                   if self.msg_dest[d] == dst), "causal delivery violated"
        self.delivered_ids[dst].add(mid)
        self.seen[dst].add(mid)
        self.seen[dst].update(deps)
        self.tick += 1
        self.tracer.tick = self.tick
        atoms, edges = msg.counts()
        self.tracer.event(dst, f"recv-{msg.kind}", getattr(msg, "guest", "-"),
                          atoms, edges, extra=f"from={src}")
        if isinstance(msg, CompressedSuggest):
            msg = msg.decompress()
        if isinstance(msg, Suggest):
            outbound = self.procs[dst].on_suggest(msg, src)
        elif isinstance(msg, Retract):
            outbound = self.procs[dst].on_retract(msg, src)
        elif isinstance(msg, Prepare):
            outbound = self.tx[dst].on_prepare(msg, src)
        elif isinstance(msg, Vote):
            outbound = self.tx[dst].on_vote(msg, src)
        elif isinstance(msg, Decision):
            outbound = self.tx[dst].on_decision(msg, src)
        else:
            raise TypeError(f"unknown message {msg!r}")
        for dest, out in outbound:
            self._send(dst, dest, out)

    # -- running --------------------------------------------------------------------

    def bootstrap(self):
        if self.booted:
            return
        self.booted = True
        for pid in self.pids:
            outbound = self.procs[pid].on_update(frozenset(), 0, 0)
            for dest, msg in outbound:
                self._send(pid, dest, msg)

    def _pick(self, options):
        if self.config.schedule == "random":
            return options[self.rng.randrange(len(options))]
        return options[0]

    def drain(self):
        while True:
            ready = self.deliverable()
            if not ready:
                if any(q for q in self.queues.values()):
                    raise AssertionError("messages stuck: causality deadlock")
                return
            if self.tick >= self.config.max_ticks:
                raise NonQuiescent(self.tick)
            src, dst = self._pick(ready)
            self._deliver(src, dst)

    def detect_quiescence(self):
        return (not any(q for q in self.queues.values())
                and not any(tx["decided"] is False
                            for role in self.tx.values()
                            for tx in role.coordinating.values()))

    def run(self, reactions=None, until_quiescent=True):
        """Bootstrap, drain, then run the requested number of scripted
        reactions (each drained to quiescence)."""
        self.bootstrap()
        self.drain()
        budget = self.config.reactions if reactions is None else reactions
        done = 0
        attempts = 0
        while done < budget and attempts < 4 * budget + 8:
            attempts += 1
            commits_before = len(self.store.commit_log)
            proposers = [pid for pid in self.pids
                         if self.tx[pid].proposal_options()]
            if not proposers:
                break
            pid = proposers[self.rng.randrange(len(proposers))]
            for dest, msg in self.tx[pid].propose():
                self._send(pid, dest, msg)
            self.drain()
            if len(self.store.commit_log) > commits_before:
                done += 1
        self.quiesced = self.detect_quiescence()
        return self.report(reactions_done=done)

    # -- results ----------------------------------------------------------------------

    def union_available(self, guest_name):
        out = set()
        for pid in self.pids:
            out |= self.procs[pid].available[guest_name]
        return out

    def oracle(self, guest_name):
        g = self.procs[self.pids[0]].guests[guest_name]
        return set(enumerate_embeddings(g, self.store.host_at()))

    def compare(self):
        """Distributed availables vs the centralized oracle, per guest."""
        report = {}
        for name in sorted(self.procs[self.pids[0]].guests):
            got = self.union_available(name)
            want = self.oracle(name)
            holders = {}
            for emb in sorted(got, key=lambda e: e.sort_key()):
                holders[emb] = [pid for pid in self.pids
                                if emb in self.procs[pid].available[name]]
            report[name] = {
                "match": got == want,
                "missing": sorted(want - got, key=lambda e: e.sort_key()),
                "extra": sorted(got - want, key=lambda e: e.sort_key()),
                "holders": holders,
            }
        return report

    def inject_corruption(self, guest_name):
        """Test hook: silently drop one available embedding somewhere."""
        for pid in self.pids:
            avail = self.procs[pid].available[guest_name]
            if avail:
                emb = sorted(avail, key=lambda e: e.sort_key())[0]
                keep_elsewhere = any(
                    emb in self.procs[q].available[guest_name]
                    for q in self.pids if q != pid)
                avail.discard(emb)
                if not keep_elsewhere:
                    return True
        return False

    def report(self, reactions_done=0):
        per_proc = {}
        for pid in self.pids:
            per_proc[pid] = {name: len(avail) for name, avail in
                             sorted(self.procs[pid].available.items())}
        return {
            "quiescent": self.quiesced,
            "ticks": self.tick,
            "reactions": reactions_done,
            "commits": [(list(txid), rule) for txid, rule, _ in
                        self.store.commit_log],
            "available_per_process": per_proc,
            "traffic": self.stats.epoch_totals(),
        }


@dataclass
class CompressedSuggest:
    guest: str
    q: QuotientedAtomGraph
    frag: object
    epoch: int
    original: object

    kind = "suggest"

    @property
    def graph(self):
        return self.original

    def counts(self):
        return (sum(self.q.multiplicities()),
                len(self.q.class_edges) + len(self.q.self_edges))

    def decompress(self):
        return Suggest(self.guest, self.q.expand(), self.frag, self.epoch)


# -- schedule exploration -------------------------------------------------------------


def run_schedule(scenario, proposals, decisions=None, rng=None,
                 max_events=4000):
    """Run to initial quiescence, then fire the given proposals and explore
    one interleaving of deliveries, chosen by the decision list or rng.

    proposals: list of (pid, rule_name, index) where index selects among the
    process's sorted proposal options at firing time.  Returns the finished
    simulator, the decision trace, and the branching degrees seen.
    """
    sim = Simulator(scenario)
    sim.bootstrap()
    sim.drain()
    pending = list(range(len(proposals)))
    decisions = list(decisions) if decisions is not None else None
    taken = []
    degrees = []
    events = 0
    while events < max_events:
        choices = [("deliver", src, dst) for src, dst in sim.deliverable()]
        for i in pending:
            choices.append(("propose", i))
        if not choices:
            break
        degrees.append(len(choices))
        if decisions is not None:
            idx = decisions.pop(0) if decisions else 0
        elif rng is not None:
            idx = rng.randrange(len(choices))
        else:
            idx = 0
        idx = min(idx, len(choices) - 1)
        taken.append(idx)
        kind = choices[idx]
        if kind[0] == "deliver":
            sim._deliver(kind[1], kind[2])
        else:
            i = kind[1]
            pending.remove(i)
            pid, rule_name, opt_idx = proposals[i]
            options = [o for o in sim.tx[pid].proposal_options()
                       if o[0] == rule_name]
            if options:
                pick = options[min(opt_idx, len(options) - 1)]
                for dest, msg in sim.tx[pid].propose(choice=pick):
                    sim._send(pid, dest, msg)
        events += 1
    sim.quiesced = sim.detect_quiescence()
    return sim, taken, degrees


def explore_schedules(scenario_factory, proposals, max_events=400,
                      max_schedules=20000):
    """Exhaustive DFS over delivery/proposal interleavings (replay-based).

    Returns one finished simulator per complete schedule.  The decision
    tree is rebuilt by deterministic replay of decision prefixes.
    """
    outcomes = []
    stack = [[]]
    while stack:
        if len(outcomes) > max_schedules:
            raise RuntimeError("schedule exploration exceeded its cap")
        prefix = stack.pop()
        sim, _taken, degrees = run_schedule(scenario_factory(), proposals,
                                            decisions=list(prefix),
                                            max_events=max_events)
        if len(degrees) <= len(prefix):
            outcomes.append(sim)
            continue
        degree = degrees[len(prefix)]
        for c in range(degree - 1, -1, -1):
            stack.append(prefix + [c])
    return outcomes
