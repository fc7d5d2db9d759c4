"""Per-process embedding engine: the atom-graph store and its handlers.

Each process keeps, per guest, an atom graph of the candidate fragments it
has seen, a set of available (finished) embeddings, and enough host view to
check edges and finish candidates.  Suggest messages push newly discovered
atoms and edges plus the host-view fragment needed to use them; retract
messages propagate invalidations.  Forwarding is novelty-driven: a process
sends only what it just added or removed, so each edge crosses an overlay
link at most once between reactions.

A committed write additionally floods a commit notice (an otherwise-empty
retract tagged with the transaction id) carrying the set of components the
write touched plus a fresh view fragment for them.  Receivers evict stale
facts, merge the fragment, and re-gate their finished embeddings: the
coverage conditions can change truth value without any atom being added or
removed, so available sets must be revalidated, not merely purged upward.

Messages are epoch-tagged: routing reads the partition/overlay snapshot of
the message's epoch, which keeps retractions on the routes their atoms took
while a commit swaps the current snapshot.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

from .embedding import Embedding
from .pemb import (AtomGraph, accept_candidate, atom_ok, atoms_of, candidates,
                   check_edge, empty_atoms, join_all, leq)
from .partition import owners, route
from .view import HostView, InsufficientView


class UnknownGuest(KeyError):
    pass


@dataclass
class Suggest:
    guest: str
    graph: AtomGraph
    frag: object          # HostView fragment or None
    epoch: int

    kind = "suggest"

    def counts(self):
        return len(self.graph.atoms), len(self.graph.edges)


@dataclass
class Retract:
    guest: str
    atoms: frozenset
    edges: frozenset      # frozenset of frozenset pairs
    touched: frozenset
    frag: object          # fresh facts about touched components, or None
    epoch: int
    notice: object = None  # (txid, origin) for commit-notice flooding

    kind = "retract"

    def counts(self):
        return len(self.atoms), len(self.edges)


def _pair_key(a, b):
    return tuple(sorted((a.sort_key(), b.sort_key())))


def _atom_owner_refs(atom):
    return {r if r[0] != "port" else ("node", r[1][0]) for r in atom.host_refs()}


def _graph_host_refs(graph):
    refs = set()
    for a in graph.atoms:
        refs |= a.host_refs()
    return sorted(refs, key=lambda r: (r[0], str(r[1])))


def _is_ancestor_pair(a, b):
    kinds = {next(iter(a.keys()))[0], next(iter(b.keys()))[0]}
    return kinds == {"root", "site"}


class EngineProcess:
    """One process's embedding engine."""

    def __init__(self, pid, guests, store, tracer=None):
        self.pid = pid
        self.guests = dict(guests)
        self.store = store
        self.tracer = tracer
        self.chunk = HostView()
        self.view = HostView()
        self.held = set()
        self.gammas = {name: AtomGraph() for name in guests}
        self.available = {name: set() for name in guests}
        self.pending = {name: set() for name in guests}      # (cand, atoms) pairs
        self.src = {name: {} for name in guests}
        self.pair_cache = {name: {} for name in guests}      # key -> bool
        self.pending_pairs = {name: set() for name in guests}
        self.local_atoms = {name: frozenset() for name in guests}
        self.seen_notices = set()

    def _guest(self, name):
        try:
            return self.guests[name]
        except KeyError:
            raise UnknownGuest(name) from None

    # -- local atom computation ------------------------------------------------

    def get_local_atoms(self, name, chunk=None, held=None, view=None):
        """All atoms whose host image this process holds (per-atom conditions
        enforced) with every edge checkable from the local view.  The
        defined-empty site/inner atoms are host-independent and local to
        every process."""
        g = self._guest(name)
        chunk = chunk if chunk is not None else self.chunk
        held = held if held is not None else self.held
        view = view if view is not None else self.view
        atoms = set(empty_atoms(g))
        pointed_outers = [y for y in sorted(g.outer_names)
                          if g.handle_points(("outer", y))]
        for ref in sorted(held, key=lambda r: (r[0], str(r[1]))):
            kind = ref[0]
            if kind == "node":
                ctrl = chunk.control_of(ref[1])
                for v in g.sorted_nodes():
                    if g.ctrl[v] == ctrl:
                        atoms.add(Embedding(g, {("node", v): ref}))
                for r in g.roots():
                    atoms.add(Embedding(g, {("root", r): ref}))
                for s in g.sites():
                    atoms.add(Embedding(g, {("site", s): frozenset([ref])}))
                for i in range(ctrl.arity if ctrl else 0):
                    port = ("port", (ref[1], i))
                    for x in sorted(g.inner_names):
                        atoms.add(Embedding(g, {("inner", x): frozenset([port])}))
            elif kind == "edge":
                for e in g.sorted_edges():
                    atoms.add(Embedding(g, {("edge", e): ref}))
                for y in pointed_outers:
                    atoms.add(Embedding(g, {("outer", y): ref}))
            elif kind == "root":
                for r in g.roots():
                    atoms.add(Embedding(g, {("root", r): ref}))
            elif kind == "site":
                for s in g.sites():
                    atoms.add(Embedding(g, {("site", s): frozenset([ref])}))
            elif kind == "inner":
                for x in sorted(g.inner_names):
                    atoms.add(Embedding(g, {("inner", x): frozenset([ref])}))
            elif kind == "outer":
                for y in pointed_outers:
                    atoms.add(Embedding(g, {("outer", y): ref}))
        kept = []
        for a in sorted(atoms, key=lambda a: a.sort_key()):
            try:
                if atom_ok(a, view):
                    kept.append(a)
            except InsufficientView:
                pass
        edges = set()
        for i, a in enumerate(kept):
            for b in kept[i + 1:]:
                try:
                    if check_edge(a, b, view):
                        edges.add(frozenset((a, b)))
                except InsufficientView:
                    pass
        return AtomGraph(kept, edges)

    # -- available embeddings ----------------------------------------------------

    def _gate(self, name, cands):
        for cand in cands:
            if cand in self.available[name]:
                continue
            try:
                if accept_candidate(cand, self.view):
                    self.available[name].add(cand)
                    if self.tracer:
                        self.tracer.event(self.pid, "add-embedding", name, 1, 0)
            except InsufficientView:
                used = tuple(sorted(atoms_of(cand), key=lambda a: a.sort_key()))
                self.pending[name].add((cand, used))

    def _retry_pending(self, name):
        gamma = self.gammas[name]
        retry = []
        for cand, used in sorted(self.pending[name],
                                 key=lambda cu: cu[0].sort_key()):
            if (all(a in gamma.atoms for a in used)
                    and all(gamma.has_edge(a, b)
                            for a, b in combinations(used, 2))):
                retry.append(cand)
        self.pending[name] = set()
        self._gate(name, retry)

    def _refresh_available(self, name, seeds):
        found = candidates(self.gammas[name], self._guest(name), seeds=seeds)
        self._gate(name, found)
        self._retry_pending(name)

    def _revalidate(self, name):
        """Re-gate every finished embedding and re-enumerate: a write can
        flip the coverage conditions without touching any atom."""
        for cand in sorted(self.available[name], key=lambda c: c.sort_key()):
            try:
                if not accept_candidate(cand, self.view):
                    self.available[name].discard(cand)
                    if self.tracer:
                        self.tracer.event(self.pid, "remove-embedding", name, 1, 0)
            except InsufficientView:
                self.available[name].discard(cand)
                used = tuple(sorted(atoms_of(cand), key=lambda a: a.sort_key()))
                self.pending[name].add((cand, used))
        self._refresh_available(name, seeds=None)

    def add_embedding(self, name, phi):
        self.available[name].add(phi)

    def remove_embeddings(self, name, psis):
        """Drop every available (or deferred) embedding above a given map."""
        removed = {phi for phi in self.available[name]
                   if any(leq(psi, phi) for psi in psis)}
        self.available[name] -= removed
        self.pending[name] = {(c, used) for c, used in self.pending[name]
                              if not any(leq(psi, c) for psi in psis)}
        if removed and self.tracer:
            self.tracer.event(self.pid, "remove-embedding", name, len(removed), 0)
        return removed

    # -- handlers -------------------------------------------------------------------

    def on_suggest(self, msg: Suggest, sender):
        self._guest(msg.guest)
        gamma = self.gammas[msg.guest]
        view_grew = False
        if msg.frag is not None:
            before = self._view_fingerprint()
            self.view.merge(msg.frag)
            view_grew = self._view_fingerprint() != before

        for a in msg.graph.atoms:
            self.src[msg.guest].setdefault(a, set()).add(sender)

        new_atoms = msg.graph.atoms - gamma.atoms
        # we are authoritative for atoms held entirely by us: a suggestion
        # racing a reaction may resurrect one we already invalidated
        part = self.store.partition_at(msg.epoch)
        zombie = {a for a in new_atoms
                  if owners(a, part) == {self.pid}
                  and a not in self.local_atoms[msg.guest]}
        atoms2 = (gamma.atoms | msg.graph.atoms) - zombie
        edges2 = set(gamma.edges) | set(msg.graph.edges)

        to_try = set()
        for a in new_atoms - zombie:
            for b in atoms2:
                if a != b:
                    to_try.add(frozenset((a, b)))
        if view_grew:
            to_try |= {p for p in self.pending_pairs[msg.guest]
                       if all(x in atoms2 for x in p)}
        self.pending_pairs[msg.guest] -= to_try
        cache = self.pair_cache[msg.guest]
        for pair in sorted(to_try,
                           key=lambda p: tuple(sorted(x.sort_key() for x in p))):
            if pair in edges2:
                continue
            a, b = sorted(pair, key=lambda x: x.sort_key())
            key = _pair_key(a, b)
            if key in cache:
                if cache[key]:
                    edges2.add(pair)
                continue
            try:
                ok = check_edge(a, b, self.view)
            except InsufficientView:
                self.pending_pairs[msg.guest].add(pair)
                continue
            cache[key] = ok
            if ok:
                edges2.add(pair)
                if self.tracer and _is_ancestor_pair(a, b):
                    self.tracer.ancestor_edge(self.pid, msg.guest, a, b, sender)

        new_graph = AtomGraph(atoms2, edges2)
        changed = new_graph != gamma
        outbound = []
        if changed:
            self.gammas[msg.guest] = new_graph
            delta_atoms = new_graph.atoms - gamma.atoms
            delta_edges = new_graph.edges - gamma.edges
            self._refresh_available(msg.guest, seeds=(delta_atoms, delta_edges))
            payload_atoms = set(delta_atoms)
            for e in delta_edges:
                payload_atoms |= set(e)
            payload = AtomGraph(payload_atoms, delta_edges)
            outbound += self._route_suggest(msg.guest, payload, msg.epoch)
        elif view_grew:
            self._retry_pending(msg.guest)
        if zombie:
            outbound += self._route_retract(
                msg.guest, frozenset(zombie), frozenset(), frozenset(),
                None, msg.epoch, None)
        return outbound

    def on_retract(self, msg: Retract, sender):
        self._guest(msg.guest)
        gamma = self.gammas[msg.guest]
        new_graph = AtomGraph(gamma.atoms - msg.atoms, gamma.edges - msg.edges)
        changed = new_graph != gamma
        new_notice = msg.notice is not None and msg.notice not in self.seen_notices
        if msg.notice is not None:
            self.seen_notices.add(msg.notice)

        outbound = []
        removed_atoms = frozenset()
        removed_edges = frozenset()
        if changed:
            removed_atoms = gamma.atoms & msg.atoms
            removed_edges = gamma.edges & msg.edges
            self.gammas[msg.guest] = new_graph
            purge = set(removed_atoms)
            for e in removed_edges:
                a, b = tuple(e)
                j = join_all([a, b], a.guest)
                if j is not None:
                    purge.add(j)
            self.remove_embeddings(msg.guest, purge)
            for a in removed_atoms:
                self.src[msg.guest].pop(a, None)
            removed_keys = {a.sort_key() for a in removed_atoms}
            cache = self.pair_cache[msg.guest]
            for k in [k for k in cache
                      if k[0] in removed_keys or k[1] in removed_keys]:
                del cache[k]
            self.pending_pairs[msg.guest] = {
                p for p in self.pending_pairs[msg.guest]
                if not (set(p) & removed_atoms)}

        if msg.touched and (changed or new_notice):
            self.view.evict(msg.touched)
            if msg.frag is not None:
                self.view.merge(msg.frag)
            self.view.merge(self.chunk)
            self._drop_cache_on_touched(msg.touched)
            for name in sorted(self.guests):
                self._revalidate(name)

        if changed or new_notice:
            outbound = self._route_retract(
                msg.guest, removed_atoms, removed_edges, msg.touched,
                self.view.fragment_for(sorted(msg.touched,
                                              key=lambda r: (r[0], str(r[1]))))
                if msg.touched else None,
                msg.epoch, msg.notice, flood=new_notice)
        return outbound

    def on_update(self, touched, epoch_before, epoch_after, notice=None):
        """React to a committed write on this process: retract stale local
        atoms and edges (routed against the pre-commit snapshot), adopt the
        new snapshot, then suggest the newly local atoms."""
        part_before = self.store.partition_at(epoch_before)
        host_after = self.store.host_at(epoch_after)
        part_after = self.store.partition_at(epoch_after)
        new_held = {ref for ref in host_after.components()
                    if part_after.owner(ref) == self.pid}
        new_chunk = HostView.of_chunk(host_after, part_after, self.pid)
        tmp_view = HostView()
        tmp_view.merge(self.view)
        tmp_view.evict(touched)
        tmp_view.merge(new_chunk)

        new_graphs = {name: self.get_local_atoms(name, chunk=new_chunk,
                                                 held=new_held, view=tmp_view)
                      for name in sorted(self.guests)}
        retracts = []
        for name in sorted(self.guests):
            gamma = self.gammas[name]
            local = new_graphs[name]
            ra = frozenset(a for a in gamma.atoms - local.atoms
                           if owners(a, part_before) == {self.pid})
            re = set()
            for e in gamma.edges:
                a, b = tuple(e)
                if a in ra or b in ra or e in local.edges:
                    continue
                try:
                    if not check_edge(a, b, tmp_view):
                        re.add(e)
                except InsufficientView:
                    pass
            retracts.append((name, ra, frozenset(re)))

        self.held = new_held
        self.chunk = new_chunk
        self.view.evict(touched)
        self.view.merge(new_chunk)
        if notice is not None:
            self.seen_notices.add(notice)
        outbound = []
        frag = new_chunk.fragment_for(
            sorted((r for r in touched if r in new_held),
                   key=lambda r: (r[0], str(r[1]))))
        for name, ra, re in retracts:
            msg = Retract(name, ra, re, frozenset(touched), frag,
                          epoch_before, notice)
            outbound += self._apply_own_retract(msg)

        # overlay update point: suggestions below route via the new snapshot
        for name in sorted(self.guests):
            self.local_atoms[name] = frozenset(new_graphs[name].atoms)
            gamma = self.gammas[name]
            add_atoms = new_graphs[name].atoms - gamma.atoms
            add_edges = new_graphs[name].edges - gamma.edges
            payload_atoms = set(add_atoms)
            for e in add_edges:
                payload_atoms |= set(e)
            payload = AtomGraph(payload_atoms, add_edges)
            frag = self.view.fragment_for(_graph_host_refs(payload))
            outbound += self.on_suggest(
                Suggest(name, payload, frag, epoch_after), self.pid)
        return outbound

    def _apply_own_retract(self, msg: Retract):
        """A self-delivered retract: apply it and route the flood outward."""
        gamma = self.gammas[msg.guest]
        new_graph = AtomGraph(gamma.atoms - msg.atoms, gamma.edges - msg.edges)
        removed_atoms = gamma.atoms & msg.atoms
        removed_edges = gamma.edges & msg.edges
        if new_graph != gamma:
            self.gammas[msg.guest] = new_graph
            purge = set(removed_atoms)
            for e in removed_edges:
                a, b = tuple(e)
                j = join_all([a, b], a.guest)
                if j is not None:
                    purge.add(j)
            self.remove_embeddings(msg.guest, purge)
            for a in removed_atoms:
                self.src[msg.guest].pop(a, None)
        if msg.touched:
            self.view.evict(msg.touched)
            self.view.merge(self.chunk)
            self._drop_cache_on_touched(msg.touched)
            for name in sorted(self.guests):
                self._revalidate(name)
        return self._route_retract(msg.guest, frozenset(removed_atoms),
                                   frozenset(removed_edges), msg.touched,
                                   msg.frag, msg.epoch, msg.notice,
                                   flood=msg.notice is not None)

    # -- helpers ------------------------------------------------------------------

    def _view_fingerprint(self):
        v = self.view
        return (len(v.known), len(v.prnt), len(v.link), len(v.ctrl),
                sum(len(s) for s in v.children.values()),
                sum(len(s) for s in v.points.values()),
                len(v.children_complete), len(v.points_complete))

    def _drop_cache_on_touched(self, touched):
        touched = set(touched)
        for name in self.guests:
            cache = self.pair_cache[name]
            by_key = {a.sort_key(): a for a in self.gammas[name].atoms}
            for k in list(cache):
                refs = set()
                for sk in k:
                    a = by_key.get(sk)
                    if a is not None:
                        refs |= _atom_owner_refs(a)
                if refs & touched:
                    del cache[k]
        # verdicts for atoms no longer present were dropped with the atoms

    def _route_suggest(self, name, payload, epoch):
        part = self.store.partition_at(epoch)
        overlay = self.store.overlay_at(epoch)
        out = []
        for dest, sub in sorted(route(payload, self.pid, overlay, part,
                                      self.view).items()):
            frag = self.view.fragment_for(_graph_host_refs(sub))
            out.append((dest, Suggest(name, sub, frag, epoch)))
        return out

    def _route_retract(self, name, atoms, edges, touched, frag, epoch,
                       notice, flood=False):
        part = self.store.partition_at(epoch)
        overlay = self.store.overlay_at(epoch)
        payload_atoms = set(atoms)
        for e in edges:
            payload_atoms |= set(e)
        payload = AtomGraph(payload_atoms, edges)
        routed = route(payload, self.pid, overlay, part, self.view)
        out = []
        for dest in overlay.out_neighbors(self.pid):
            sub = routed.get(dest)
            ra = frozenset(sub.atoms & atoms) if sub else frozenset()
            re = frozenset(e for e in edges if set(e) <= sub.atoms) if sub \
                else frozenset()
            if ra or re or (flood and touched):
                out.append((dest, Retract(name, ra, re, touched, frag,
                                          epoch, notice)))
        return out
