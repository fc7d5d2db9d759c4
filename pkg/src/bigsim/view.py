"""Partial knowledge of a host bigraph.

Every process sees only a fragment of the host: the components it holds plus
their immediate neighbourhood, extended by fragments that arrive piggybacked
on protocol messages.  Condition checks run against such a view and report
"unknown" where facts are missing; callers turn that into deferral rather
than failure.
"""
from __future__ import annotations

from .bigraph import Bigraph, ref_key


class InsufficientView(Exception):
    """The view lacks a fact needed to decide a check."""


class HostView:
    """Accumulated facts about host structure.

    children/points carry completeness flags: a set may be known only
    partially (membership facts) or exactly (held by the fact's owner).
    """

    __slots__ = ("ctrl", "prnt", "link", "children", "children_complete",
                 "points", "points_complete", "known")

    def __init__(self):
        self.ctrl = {}                  # node id -> Control
        self.prnt = {}                  # place ref -> parent ref
        self.link = {}                  # point ref -> handle ref
        self.children = {}              # place parent ref -> set of refs
        self.children_complete = set()
        self.points = {}                # handle ref -> set of point refs
        self.points_complete = set()
        self.known = set()              # refs known to exist

    # -- construction -------------------------------------------------------

    @classmethod
    def of_host(cls, h: Bigraph):
        """The complete view; what a centralized engine sees."""
        v = cls()
        for n in h.ctrl:
            v.ctrl[n] = h.ctrl[n]
            v.known.add(("node", n))
        v.prnt.update(h.prnt)
        v.link.update(h.link)
        for parent in list(h.prnt.values()) + [("root", r) for r in h.roots()] \
                + [("node", n) for n in h.ctrl]:
            v.children[parent] = set(h.children(parent))
            v.children_complete.add(parent)
        for handle in h.handles():
            v.points[handle] = set(h.handle_points(handle))
            v.points_complete.add(handle)
        v.known.update(h.components())
        for p in h.all_ports():
            v.known.add(p)
        return v

    @classmethod
    def of_chunk(cls, h: Bigraph, partition, pid):
        """What process pid holds: its components plus their one-step
        neighbourhood facts."""
        v = cls()
        for ref in h.components():
            if partition.owner(ref) != pid:
                continue
            v.known.add(ref)
            kind, payload = ref
            if kind == "node":
                v.ctrl[payload] = h.ctrl[payload]
                v.prnt[ref] = h.prnt[ref]
                v.known.add(h.prnt[ref])
                v.children[ref] = set(h.children(ref))
                v.children_complete.add(ref)
                v.known.update(h.children(ref))
                for p in h.ports_of(payload):
                    v.link[p] = h.link[p]
                    v.known.add(p)
                    v.known.add(h.link[p])
            elif kind == "site":
                v.prnt[ref] = h.prnt[ref]
                v.known.add(h.prnt[ref])
            elif kind == "root":
                v.children[ref] = set(h.children(ref))
                v.children_complete.add(ref)
                v.known.update(h.children(ref))
            elif kind in ("edge", "outer"):
                v.points[ref] = set(h.handle_points(ref))
                v.points_complete.add(ref)
                v.known.update(h.handle_points(ref))
            elif kind == "inner":
                v.link[ref] = h.link[ref]
                v.known.add(h.link[ref])
        return v

    # -- merging and eviction -----------------------------------------------

    def merge(self, other: "HostView"):
        self.ctrl.update(other.ctrl)
        self.prnt.update(other.prnt)
        self.link.update(other.link)
        for ref, kids in other.children.items():
            self.children.setdefault(ref, set()).update(kids)
        self.children_complete.update(other.children_complete)
        for ref, pts in other.points.items():
            self.points.setdefault(ref, set()).update(pts)
        self.points_complete.update(other.points_complete)
        self.known.update(other.known)

    def evict(self, touched):
        """Drop all facts about the given components (stale after a write)."""
        touched = set(touched)
        for ref in touched:
            self.known.discard(ref)
            self.prnt.pop(ref, None)
            self.children.pop(ref, None)
            self.children_complete.discard(ref)
            self.points.pop(ref, None)
            self.points_complete.discard(ref)
            if ref[0] == "node":
                self.ctrl.pop(ref[1], None)
                for p in [p for p in self.link if p[0] == "port" and p[1][0] == ref[1]]:
                    del self.link[p]
                self.known = {r for r in self.known
                              if not (r[0] == "port" and r[1][0] == ref[1])}
            elif ref[0] == "inner":
                self.link.pop(ref, None)
        # membership facts inside other components' sets
        for kids in self.children.values():
            kids -= touched
        for pts in self.points.values():
            pts -= {p for p in pts if p in touched
                    or (p[0] == "port" and ("node", p[1][0]) in touched)}

    def fragment_for(self, host_refs):
        """The sub-view a sender attaches to atoms whose images are host_refs:
        per-component facts plus the known parent chain above each."""
        frag = HostView()
        work = set()
        for ref in host_refs:
            if ref[0] == "port":
                work.add(("node", ref[1][0]))
            else:
                work.add(ref)
        for ref in sorted(work, key=ref_key):
            cur = ref
            seen = set()
            while cur is not None and cur not in seen:
                seen.add(cur)
                self._copy_facts(cur, frag)
                cur = self.prnt.get(cur)
        return frag

    def _copy_facts(self, ref, frag):
        if ref in self.known:
            frag.known.add(ref)
        kind = ref[0]
        if kind == "node" and ref[1] in self.ctrl:
            frag.ctrl[ref[1]] = self.ctrl[ref[1]]
            for i in range(self.ctrl[ref[1]].arity):
                p = ("port", (ref[1], i))
                if p in self.link:
                    frag.link[p] = self.link[p]
        if ref in self.prnt:
            frag.prnt[ref] = self.prnt[ref]
        if ref in self.children:
            frag.children[ref] = set(self.children[ref])
            if ref in self.children_complete:
                frag.children_complete.add(ref)
        if ref in self.points:
            frag.points[ref] = set(self.points[ref])
            if ref in self.points_complete:
                frag.points_complete.add(ref)
        if kind == "inner" and ref in self.link:
            frag.link[ref] = self.link[ref]

    def to_wire(self):
        def rs(ref):
            return list(ref) if ref[0] != "port" else ["port", list(ref[1])]

        return {
            "ctrl": sorted([n, c.name, c.arity] for n, c in self.ctrl.items()),
            "prnt": sorted([rs(a), rs(b)] for a, b in self.prnt.items()),
            "link": sorted([rs(a), rs(b)] for a, b in self.link.items()),
            "children": sorted([rs(a), sorted(map(rs, b)), a in self.children_complete]
                               for a, b in self.children.items()),
            "points": sorted([rs(a), sorted(map(rs, b)), a in self.points_complete]
                             for a, b in self.points.items()),
            "known": sorted(map(rs, self.known)),
        }

    @classmethod
    def from_wire(cls, data):
        from .bigraph import Control

        def rr(x):
            if x[0] == "port":
                return ("port", (x[1][0], int(x[1][1])))
            if x[0] in ("site", "root"):
                return (x[0], int(x[1]))
            return (x[0], x[1])

        v = cls()
        for n, name, arity in data["ctrl"]:
            v.ctrl[n] = Control(name, int(arity))
        v.prnt = {rr(a): rr(b) for a, b in data["prnt"]}
        v.link = {rr(a): rr(b) for a, b in data["link"]}
        for a, kids, complete in data["children"]:
            v.children[rr(a)] = {rr(k) for k in kids}
            if complete:
                v.children_complete.add(rr(a))
        for a, pts, complete in data["points"]:
            v.points[rr(a)] = {rr(p) for p in pts}
            if complete:
                v.points_complete.add(rr(a))
        v.known = {rr(x) for x in data["known"]}
        return v

    # -- queries (None = unknown) ---------------------------------------------

    def control_of(self, node_id):
        return self.ctrl.get(node_id)

    def parent_of(self, ref):
        return self.prnt.get(ref)

    def link_of(self, point):
        return self.link.get(point)

    def children_of(self, ref):
        """(set, complete) or (None, False) when nothing is known."""
        if ref in self.children:
            return self.children[ref], ref in self.children_complete
        return None, False

    def points_of(self, ref):
        if ref in self.points:
            return self.points[ref], ref in self.points_complete
        return None, False

    def chain(self, ref):
        """Known upward parent path from ref inclusive; stops at the first
        unknown parent or at a root."""
        out = [ref]
        while out[-1][0] != "root":
            nxt = self.prnt.get(out[-1])
            if nxt is None or nxt in out:
                break
            out.append(nxt)
        return out

    def is_ancestor(self, anc, ref):
        """Is anc on the reflexive parent chain of ref?  True/False/None.

        A negative answer is certain once ref's known chain reaches a root,
        or once the known chains of ref and anc merge at a component that is
        not anc itself (the chains diverge below the merge point).
        """
        chain = self.chain(ref)
        if anc in chain:
            return True
        if chain[-1][0] == "root":
            return False
        anc_chain = self.chain(anc)
        merge = next((c for c in chain if c in set(anc_chain)), None)
        if merge is not None and merge != anc:
            return False
        return None
