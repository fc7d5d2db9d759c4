"""Host partitions, the induced process overlay, and adjacency routing.

A partition assigns every host component to a process; ports follow their
node.  Adjacency between processes mirrors adjacency of the components they
hold: child-to-parent (ADJ-P), point-to-handle (ADJ-L), and the top-level
clique over processes holding roots or handles (ADJ-T, optionally
reorganized into a bounded-degree tree).  Messages travel only toward
processes that can use their content.
"""
from __future__ import annotations

import re
from collections import deque

from .bigraph import Bigraph, ref_key, ref_str
from .embedding import SET_KINDS, Embedding
from .pemb import AtomGraph
from .view import HostView


class NoSubjectAncestor(ValueError):
    pass


class Partition:
    """Total assignment of host components to process identifiers."""

    def __init__(self, assignment):
        self.assignment = dict(assignment)

    def owner(self, ref):
        if ref[0] == "port":
            return self.assignment[("node", ref[1][0])]
        return self.assignment[ref]

    def procs(self):
        return sorted(set(self.assignment.values()))

    def held_by(self, pid):
        return sorted((r for r, p in self.assignment.items() if p == pid),
                      key=ref_key)

    def is_total_on(self, h: Bigraph):
        return all(ref in self.assignment for ref in h.components())

    def __eq__(self, other):
        return isinstance(other, Partition) and self.assignment == other.assignment

    def to_json(self):
        return {ref_str(ref): pid for ref, pid in
                sorted(self.assignment.items(), key=lambda kv: ref_key(kv[0]))}

    @classmethod
    def from_json(cls, h: Bigraph, data):
        assignment = {}
        for tag, pid in data.items():
            assignment[_parse_component_tag(h, tag)] = int(pid)
        return cls(assignment)


def _parse_component_tag(h: Bigraph, tag):
    if tag in h.ctrl:
        return ("node", tag)
    if tag in h.edges:
        return ("edge", tag)
    m = re.match(r"^([sr])(\d+)$", tag)
    if m:
        kind = "site" if m.group(1) == "s" else "root"
        ref = (kind, int(m.group(2)))
        if h.exists(ref):
            return ref
    if tag in h.inner_names:
        return ("inner", tag)
    if tag in h.outer_names:
        return ("outer", tag)
    raise ValueError(f"unknown component tag {tag!r}")


# -- strategies ---------------------------------------------------------------


def finest(h: Bigraph) -> Partition:
    """Each component on its own process."""
    return Partition({ref: i for i, ref in enumerate(h.components())})


def _lowest_point_node(h, handle):
    """Deepest node among the handle's points; ties by node id."""
    best = None
    for p in h.handle_points(handle):
        if p[0] != "port":
            continue
        node = ("node", p[1][0])
        key = (-h.depth(node), p[1][0])
        if best is None or key < best[0]:
            best = (key, node)
    return best[1] if best else None


def by_root(h: Bigraph) -> Partition:
    """One process per root, owning that root's tree; handles go to the
    root-holder of their lowest point."""
    assignment = {}
    for r in h.roots():
        assignment[("root", r)] = r
    for ref in h.components():
        if ref[0] in ("node", "site"):
            assignment[ref] = h.parent_chain(ref)[-1][1]
    for ref in h.components():
        if ref[0] in ("edge", "outer"):
            low = _lowest_point_node(h, ref)
            if low is not None:
                assignment[ref] = assignment[low]
            else:
                assignment[ref] = min(assignment[("root", r)] for r in h.roots())
    for ref in h.components():
        if ref[0] == "inner":
            assignment[ref] = assignment[h.link[ref]]
    return Partition(assignment)


def by_control(h: Bigraph, subjects, fallback=True) -> Partition:
    """Each component goes to the process of its first ancestor-or-self with
    a subject control; process 0 is the designated root-holder fallback."""
    subjects = set(subjects)
    subject_nodes = [n for n in h.sorted_nodes() if h.ctrl[n].name in subjects]
    pid_of_subject = {("node", n): i + 1 for i, n in enumerate(subject_nodes)}

    def place_pid(ref):
        for c in h.parent_chain(ref):
            if c in pid_of_subject:
                return pid_of_subject[c]
        if not fallback:
            raise NoSubjectAncestor(ref)
        return 0

    assignment = {}
    for ref in h.components():
        if ref[0] in ("node", "site"):
            assignment[ref] = place_pid(ref)
        elif ref[0] == "root":
            if not fallback:
                raise NoSubjectAncestor(ref)
            assignment[ref] = 0
    for ref in h.components():
        if ref[0] in ("edge", "outer"):
            low = _lowest_point_node(h, ref)
            assignment[ref] = assignment[low] if low is not None else \
                (0 if fallback else _raise_nsa(ref))
    for ref in h.components():
        if ref[0] == "inner":
            assignment[ref] = assignment[h.link[ref]]
    return Partition(assignment)


def _raise_nsa(ref):
    raise NoSubjectAncestor(ref)


def explicit(mapping) -> Partition:
    return Partition(mapping)


def random_partition(h: Bigraph, nprocs, rng) -> Partition:
    return Partition({ref: rng.randrange(nprocs) for ref in h.components()})


# -- overlay -------------------------------------------------------------------

ADJ_P, ADJ_L, ADJ_T = "ADJ-P", "ADJ-L", "ADJ-T"


class Overlay:
    """Directed process adjacency induced by a partition."""

    def __init__(self, procs, links):
        self.procs = frozenset(procs)
        self.links = frozenset(links)          # (q, r, kind), q != r
        self._out = {}
        for q, r, kind in self.links:
            self._out.setdefault(q, {}).setdefault(r, set()).add(kind)

    def out_neighbors(self, q):
        return sorted(self._out.get(q, {}))

    def out_kinds(self, q, r):
        return self._out.get(q, {}).get(r, set())

    def __eq__(self, other):
        return (isinstance(other, Overlay) and self.procs == other.procs
                and self.links == other.links)

    def __repr__(self):
        return f"<Overlay {len(self.procs)}p {len(self.links)}l>"

    def distance(self, q, r):
        if q == r:
            return 0
        seen = {q}
        frontier = deque([(q, 0)])
        while frontier:
            cur, d = frontier.popleft()
            for nxt in self.out_neighbors(cur):
                if nxt == r:
                    return d + 1
                if nxt not in seen:
                    seen.add(nxt)
                    frontier.append((nxt, d + 1))
        return None

    def rendezvous_ok(self):
        """Any two processes can reach a common process."""
        procs = sorted(self.procs)
        reach = {}
        for q in procs:
            seen = {q}
            frontier = deque([q])
            while frontier:
                cur = frontier.popleft()
                for nxt in self.out_neighbors(cur):
                    if nxt not in seen:
                        seen.add(nxt)
                        frontier.append(nxt)
            reach[q] = seen
        return all(reach[q] & reach[r] for q in procs for r in procs)


def tops_of(h: Bigraph):
    """Roots and handles: the components forming the ADJ-T level."""
    return ([("root", r) for r in h.roots()]
            + [("edge", e) for e in h.sorted_edges()]
            + [("outer", y) for y in sorted(h.outer_names)])


def build_overlay(h: Bigraph, p: Partition, adj_t="clique") -> Overlay:
    links = set()
    for ref in h.components():
        if ref[0] in ("node", "site"):
            q, r = p.owner(ref), p.owner(h.prnt[ref])
            if q != r:
                links.add((q, r, ADJ_P))
    for point, handle in h.link.items():
        q, r = p.owner(point), p.owner(handle)
        if q != r:
            links.add((q, r, ADJ_L))
    top_procs = sorted({p.owner(t) for t in tops_of(h)})
    if adj_t == "clique":
        for q in top_procs:
            for r in top_procs:
                if q != r:
                    links.add((q, r, ADJ_T))
    elif adj_t == "tree":
        # bounded-degree binary tree over the sorted top holders
        for i, q in enumerate(top_procs):
            for j in (2 * i + 1, 2 * i + 2):
                if j < len(top_procs):
                    links.add((q, top_procs[j], ADJ_T))
                    links.add((top_procs[j], q, ADJ_T))
    else:
        raise ValueError(f"unknown ADJ-T mode {adj_t!r}")
    return Overlay(p.procs(), links)


def host_distance(h: Bigraph, c1, c2):
    """Shortest path between components, stepping child-to-parent,
    node/point-to-handle, and across the root/handle clique."""
    tops = set(tops_of(h))

    def steps(ref):
        out = []
        if ref[0] in ("node", "site"):
            out.append(h.prnt[ref])
        if ref[0] == "node":
            for port in h.ports_of(ref[1]):
                out.append(h.link[port])
        if ref[0] == "inner":
            out.append(h.link[ref])
        if ref in tops:
            out.extend(t for t in tops if t != ref)
        return out

    if c1 == c2:
        return 0
    seen = {c1}
    frontier = deque([(c1, 0)])
    while frontier:
        cur, d = frontier.popleft()
        for nxt in steps(cur):
            if nxt == c2:
                return d + 1
            if nxt not in seen:
                seen.add(nxt)
                frontier.append((nxt, d + 1))
    return None


# -- locality of embeddings ------------------------------------------------------


def owners(phi: Embedding, p: Partition):
    """img(P ∘ phi): the processes holding some piece of the image."""
    return {p.owner(ref) for ref in phi.host_refs()}


def restrict(phi: Embedding, procs, p: Partition) -> Embedding:
    """The part of phi whose image is held by the given processes.

    Defined-empty entries have no owner and survive every restriction.
    """
    procs = set(procs)
    entries = {}
    for ref, value in phi.items():
        if ref[0] in SET_KINDS:
            if not value:
                entries[ref] = value
                continue
            kept = frozenset(w for w in value if p.owner(w) in procs)
            if kept:
                entries[ref] = kept
        elif p.owner(value) in procs:
            entries[ref] = value
    return Embedding(phi.guest, entries)


# -- adjacency routing ------------------------------------------------------------


def _atom_guest_kind(atom):
    return next(iter(atom.keys()))[0]


def _is_empty_atom(atom):
    [(ref, value)] = atom.items()
    return ref[0] in SET_KINDS and not value


def atom_adjacent(atom, proc, partition: Partition, view: HostView,
                  kinds) -> bool:
    """May the atom travel the overlay link (of the given kind tags) toward
    proc?  Site and root atoms ride parent-induced links only; everything
    rides the top-level links once its image's parent chain is exhausted.
    Unknown structure errs toward sending (a false positive only costs an
    absorbed message)."""
    if _is_empty_atom(atom):
        return False
    guest_kind = _atom_guest_kind(atom)
    allowed = {ADJ_P, ADJ_T} if guest_kind in ("site", "root") \
        else {ADJ_P, ADJ_L, ADJ_T}
    eff = set(kinds) & allowed
    if not eff:
        return False
    link_ward = guest_kind not in ("site", "root")
    for ref in sorted(atom.host_refs(), key=ref_key):
        if ref[0] in ("root", "edge", "outer"):
            if ADJ_T in eff:
                return True
            continue
        base = ("node", ref[1][0]) if ref[0] == "port" else ref
        chain = view.chain(base)
        for c in chain[1:]:
            if partition.owner(c) == proc:
                return True
        if chain[-1][0] == "root":
            # done climbing: spread across the root/handle level
            if ADJ_T in eff:
                return True
        elif ADJ_P in eff:
            return True
        if not link_ward:
            continue
        handles = []
        if ref[0] == "port":
            handles.append(view.link_of(ref))
        elif ref[0] == "inner":
            handles.append(view.link_of(ref))
        elif ref[0] == "node":
            ctrl = view.control_of(ref[1])
            if ctrl is None:
                handles.append(None)
            else:
                handles.extend(view.link_of(("port", (ref[1], i)))
                               for i in range(ctrl.arity))
        for h in handles:
            if h is None:
                if ADJ_L in eff:
                    return True
            elif partition.owner(h) == proc:
                return True
    return False


def route(payload: AtomGraph, sender, overlay: Overlay, partition: Partition,
          view: HostView):
    """Split an outbound atom graph among the sender's overlay neighbors.

    Each neighbor receives the greatest subgraph adjacent to it: the union
    of the cliques containing an atom adjacent to the neighbor, with every
    site/root/inner-name atom in it individually adjacent.
    """
    out = {}
    for r in overlay.out_neighbors(sender):
        kinds = overlay.out_kinds(sender, r)
        adjacent = {a for a in payload.atoms
                    if atom_adjacent(a, r, partition, view, kinds)}
        if not adjacent:
            continue
        keep = set()
        for a in payload.atoms:
            if (_atom_guest_kind(a) in ("site", "root", "inner")
                    and not _is_empty_atom(a) and a not in adjacent):
                continue
            keep.add(a)
        adjacent &= keep
        adj = payload.adjacency()
        included = set(adjacent)
        for a in keep - adjacent:
            if adj[a] & adjacent:
                included.add(a)
        edges = set()
        for e in payload.edges:
            a, b = tuple(e)
            if a not in included or b not in included:
                continue
            if a in adjacent or b in adjacent:
                edges.add(e)
            elif any(g in adjacent and a in adj[g] and b in adj[g]
                     for g in included):
                edges.add(e)
        if included:
            out[r] = AtomGraph(included, edges)
    return out
