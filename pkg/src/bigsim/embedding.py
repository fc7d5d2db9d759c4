"""Guest-into-host occurrence maps and their validity conditions.

An Embedding is a partial map from guest components to host components; a
total embedding is the special case whose domain covers the guest.  The
validity conditions split into link-graph conditions LGE-1..7, place-graph
conditions PGE-1..8 and the consistency condition BGE-1.  The evaluator runs
against a HostView and reports per-condition status, with "unknown" wherever
the view lacks a needed fact.

Site and inner-name entries are set-valued and tri-state: an absent key is
undefined, an empty frozenset is defined-empty, and both differ from a
non-empty image.
"""
from __future__ import annotations

import json
from itertools import product

from .bigraph import Bigraph, ref_key, ref_str
from .view import HostView, InsufficientView


class DomainMismatch(ValueError):
    """The map is not total on the guest where totality is required."""


SET_KINDS = ("site", "inner")

LGE_LABELS = ("LGE-1", "LGE-2", "LGE-3", "LGE-4", "LGE-5a", "LGE-5b",
              "LGE-6", "LGE-7")
PGE_LABELS = ("PGE-1", "PGE-2", "PGE-3", "PGE-4", "PGE-5", "PGE-6a",
              "PGE-6b", "PGE-7", "PGE-8")
ALL_LABELS = frozenset(LGE_LABELS + PGE_LABELS + ("BGE-1",))

PER_ATOM_LABELS = frozenset({"LGE-3", "LGE-6", "PGE-3", "PGE-7"})
LOCAL_PAIR_LABELS = frozenset({"LGE-1", "LGE-2", "LGE-4", "LGE-5a", "LGE-7",
                               "PGE-1", "PGE-2", "PGE-4", "PGE-6a", "PGE-8"})
LOCAL_LABELS = PER_ATOM_LABELS | LOCAL_PAIR_LABELS
ANCESTOR_LABELS = frozenset({"PGE-5", "BGE-1"})
FINAL_LABELS = frozenset({"LGE-5b", "PGE-6b"})

_COARSE = {"LGE-5a": "LGE-5", "LGE-5b": "LGE-5",
           "PGE-6a": "PGE-6", "PGE-6b": "PGE-6"}


def coarse(labels):
    return frozenset(_COARSE.get(l, l) for l in labels)


class Embedding:
    """Partial structure-preserving map from a guest into a host.

    Equality and hashing are extensional over the entries; the guest
    reference is carried for convenience only.
    """

    __slots__ = ("guest", "_m", "_key", "_hash")

    def __init__(self, guest, entries):
        m = {}
        for ref, value in entries.items():
            kind = ref[0]
            if not guest.exists(ref):
                raise DomainMismatch(f"{ref} is not a component of the guest")
            if kind in SET_KINDS:
                value = frozenset(value)
            m[ref] = value
        self.guest = guest
        self._m = m
        self._key = tuple(sorted(((ref, _value_key(ref, v)) for ref, v in m.items()),
                                 key=lambda kv: ref_key(kv[0])))
        self._hash = hash(self._key)

    def __eq__(self, other):
        return isinstance(other, Embedding) and self._key == other._key

    def __hash__(self):
        return self._hash

    def __len__(self):
        return len(self._m)

    def __repr__(self):
        parts = ", ".join(f"{ref_str(k)}↦{_vrepr(v)}" for k, v in
                          sorted(self._m.items(), key=lambda kv: ref_key(kv[0])))
        return "{" + parts + "}"

    def sort_key(self):
        return self._key

    def keys(self):
        return self._m.keys()

    def items(self):
        return self._m.items()

    def defined(self, ref):
        return ref in self._m

    def value(self, ref):
        return self._m.get(ref)

    def entries(self):
        return dict(self._m)

    # -- derived sub-maps ---------------------------------------------------

    def port_image(self, port):
        nid, i = port[1]
        got = self._m.get(("node", nid))
        return ("port", (got[1], i)) if got is not None else None

    def point_images(self, point):
        """φ^p as a set-valued map over guest points; None when undefined."""
        if point[0] == "port":
            img = self.port_image(point)
            return None if img is None else frozenset([img])
        return self._m.get(point)

    def place_images(self, ref):
        """φ^c over guest nodes and sites; None when undefined."""
        if ref[0] == "node":
            got = self._m.get(ref)
            return None if got is None else frozenset([got])
        return self._m.get(ref)

    def parent_image(self, ref):
        """φ^f over guest nodes and roots."""
        return self._m.get(ref)

    def handle_image(self, ref):
        """φ^h over guest edges and outer names."""
        return self._m.get(ref)

    def mapped_guest_points(self):
        out = []
        for ref in self._m:
            if ref[0] == "node":
                out.extend(self.guest.ports_of(ref[1]))
            elif ref[0] == "inner":
                out.append(ref)
        return out

    def covered_host_points(self):
        out = set()
        for p in self.mapped_guest_points():
            out.update(self.point_images(p))
        return out

    def covered_host_places(self):
        out = set()
        for ref, value in self._m.items():
            if ref[0] == "node":
                out.add(value)
            elif ref[0] == "site":
                out.update(value)
        return out

    def site_image_union(self):
        out = set()
        for ref, value in self._m.items():
            if ref[0] == "site":
                out.update(value)
        return out

    def host_refs(self):
        """Every host component referenced by the map."""
        out = set()
        for ref, value in self._m.items():
            if ref[0] in SET_KINDS:
                out.update(value)
            else:
                out.add(value)
        return out

    def is_total(self):
        g = self.guest
        for n in g.nodes:
            if ("node", n) not in self._m:
                return False
        for e in g.edges:
            if ("edge", e) not in self._m:
                return False
        for s in g.sites():
            if ("site", s) not in self._m:
                return False
        for r in g.roots():
            if ("root", r) not in self._m:
                return False
        for x in g.inner_names:
            if ("inner", x) not in self._m:
                return False
        return True

    # -- serialization ------------------------------------------------------

    def to_json(self):
        maps = {"nodes": {}, "edges": {}, "sites": {}, "roots": {},
                "inners": {}, "outers": {}}
        plural = {"node": "nodes", "edge": "edges", "site": "sites",
                  "root": "roots", "inner": "inners", "outer": "outers"}
        for ref, value in sorted(self._m.items(), key=lambda kv: ref_key(kv[0])):
            key = str(ref[1])
            if ref[0] in SET_KINDS:
                maps[plural[ref[0]]][key] = sorted(ref_str(v) for v in value)
            else:
                maps[plural[ref[0]]][key] = ref_str(value)
        return maps

    @classmethod
    def from_json(cls, guest, host, data):
        entries = {}
        for n, v in data.get("nodes", {}).items():
            entries[("node", n)] = ("node", v)
        for e, v in data.get("edges", {}).items():
            entries[("edge", e)] = ("edge", v)
        for r, v in data.get("roots", {}).items():
            entries[("root", int(r))] = _parse_host_place(v, host)
        for y, v in data.get("outers", {}).items():
            entries[("outer", y)] = _parse_host_handle(v, host)
        for s, vs in data.get("sites", {}).items():
            entries[("site", int(s))] = frozenset(_parse_host_place(v, host)
                                                  for v in vs)
        for x, vs in data.get("inners", {}).items():
            entries[("inner", x)] = frozenset(_parse_host_point(v, host)
                                              for v in vs)
        return cls(guest, entries)


def _value_key(ref, value):
    if ref[0] in SET_KINDS:
        return tuple(sorted(value, key=ref_key))
    return value


def _vrepr(v):
    if isinstance(v, frozenset):
        return "{" + ",".join(ref_str(x) for x in sorted(v, key=ref_key)) + "}"
    return ref_str(v)


def _parse_host_place(s, host):
    import re
    m = re.match(r"^([sr])(\d+)$", s)
    if m and not host.exists(("node", s)):
        return ("site" if m.group(1) == "s" else "root", int(m.group(2)))
    return ("node", s)


def _parse_host_handle(s, host):
    return ("edge", s) if s in host.edges else ("outer", s)


def _parse_host_point(s, host):
    if ":" in s:
        nid, _, idx = s.rpartition(":")
        if idx.isdigit():
            return ("port", (nid, int(idx)))
    return ("inner", s)


def full_view(host: Bigraph) -> HostView:
    cached = getattr(host, "_full_view", None)
    if cached is None:
        cached = HostView.of_host(host)
        host._full_view = cached
    return cached


# -- condition evaluation -----------------------------------------------------


def evaluate(emb: Embedding, view: HostView, labels=ALL_LABELS, total=False):
    """Evaluate the requested conditions of emb against view.

    Returns (violated, unknown) label sets.  With total=True the map is
    treated as a full candidate: LGE-7 additionally demands that the handle
    image of every matched point is defined.
    """
    g = emb.guest
    violated, unknown = set(), set()

    def want(label):
        return label in labels

    node_entries = [(r, v) for r, v in emb.items() if r[0] == "node"]
    edge_entries = [(r, v) for r, v in emb.items() if r[0] == "edge"]
    site_entries = [(r, v) for r, v in emb.items() if r[0] == "site"]
    root_entries = [(r, v) for r, v in emb.items() if r[0] == "root"]
    inner_entries = [(r, v) for r, v in emb.items() if r[0] == "inner"]
    outer_entries = [(r, v) for r, v in emb.items() if r[0] == "outer"]

    node_images = [v for _, v in node_entries]
    if want("LGE-1") or want("PGE-1"):
        dup_nodes = len(set(node_images)) != len(node_images)
        dup_edges = len({v for _, v in edge_entries}) != len(edge_entries)
        if dup_nodes or dup_edges:
            if want("LGE-1"):
                violated.add("LGE-1")
            if dup_nodes and want("PGE-1"):
                violated.add("PGE-1")

    if want("LGE-2"):
        seen = set()
        for _, v in inner_entries:
            if v & seen:
                violated.add("LGE-2")
                break
            seen |= v
    if want("PGE-2"):
        seen = set()
        for _, v in site_entries:
            if v & seen:
                violated.add("PGE-2")
                break
            seen |= v

    if want("LGE-3"):
        if any(v[0] not in ("edge", "outer") for _, v in outer_entries):
            violated.add("LGE-3")
    if want("PGE-3"):
        if any(v[0] not in ("node", "root") for _, v in root_entries):
            violated.add("PGE-3")

    port_images = set()
    for r, v in node_entries:
        for i in range(g.ctrl[r[1]].arity):
            port_images.add(("port", (v[1], i)))
    if want("LGE-4"):
        edge_imgs = {v for _, v in edge_entries}
        outer_imgs = {v for _, v in outer_entries}
        inner_img_union = set().union(*[v for _, v in inner_entries]) \
            if inner_entries else set()
        if edge_imgs & outer_imgs or port_images & inner_img_union:
            violated.add("LGE-4")
    if want("PGE-4"):
        node_imgs = set(node_images)
        root_imgs = {v for _, v in root_entries}
        site_img_union = set().union(*[v for _, v in site_entries]) \
            if site_entries else set()
        if node_imgs & root_imgs or node_imgs & site_img_union:
            violated.add("PGE-4")

    mapped_points = emb.mapped_guest_points()

    if want("LGE-5a"):
        for (eref, d) in edge_entries:
            for x in mapped_points:
                on_guest_edge = g.link[x] == eref
                for w in emb.point_images(x):
                    got = view.link_of(w)
                    if got is None:
                        unknown.add("LGE-5a")
                    elif (got == d) != on_guest_edge:
                        violated.add("LGE-5a")

    if want("LGE-5b"):
        covered = emb.covered_host_points()
        for (_eref, d) in edge_entries:
            pts, complete = view.points_of(d)
            if pts is None:
                unknown.add("LGE-5b")
                continue
            if any(w not in covered for w in pts):
                violated.add("LGE-5b")
            elif not complete:
                unknown.add("LGE-5b")

    if want("LGE-6") or want("PGE-7"):
        for (r, v) in node_entries:
            got = view.control_of(v[1])
            if got is None:
                unknown.update({"LGE-6", "PGE-7"} & set(labels))
            elif got != g.ctrl[r[1]]:
                violated.update({"LGE-6", "PGE-7"} & set(labels))

    if want("LGE-7"):
        for x in mapped_points:
            himg = emb.handle_image(g.link[x])
            images = emb.point_images(x)
            if himg is None:
                if total and images:
                    violated.add("LGE-7")
                continue
            for w in images:
                got = view.link_of(w)
                if got is None:
                    unknown.add("LGE-7")
                elif got != himg:
                    violated.add("LGE-7")

    if want("PGE-5"):
        for (_rref, c) in root_entries:
            for (_sref, wset) in site_entries:
                for w in wset:
                    got = view.is_ancestor(w, c)
                    if got is None:
                        unknown.add("PGE-5")
                    elif got:
                        violated.add("PGE-5")

    mapped_places = [r for r in emb.keys() if r[0] in ("node", "site")]

    if want("PGE-6a"):
        for (vref, u) in node_entries:
            for c in mapped_places:
                is_guest_child = g.prnt[c] == vref
                for w in emb.place_images(c):
                    got = view.parent_of(w)
                    if got is None:
                        unknown.add("PGE-6a")
                    elif (got == u) != is_guest_child:
                        violated.add("PGE-6a")

    if want("PGE-6b"):
        covered = emb.covered_host_places()
        for (_vref, u) in node_entries:
            kids, complete = view.children_of(u)
            if kids is None:
                unknown.add("PGE-6b")
                continue
            if any(w not in covered for w in kids):
                violated.add("PGE-6b")
            elif not complete:
                unknown.add("PGE-6b")

    if want("PGE-8"):
        for c in mapped_places:
            pimg = emb.parent_image(g.prnt[c])
            if pimg is None:
                continue
            for w in emb.place_images(c):
                got = view.parent_of(w)
                if got is None:
                    unknown.add("PGE-8")
                elif got != pimg:
                    violated.add("PGE-8")

    if want("BGE-1"):
        site_elems = emb.site_image_union()
        for (_xref, wset) in inner_entries:
            for w in wset:
                if w[0] == "inner":
                    continue
                under = ("node", w[1][0])
                best = False
                undecided = False
                for z in site_elems:
                    got = view.is_ancestor(z, under)
                    if got:
                        best = True
                        break
                    if got is None:
                        undecided = True
                if best:
                    continue
                if undecided:
                    unknown.add("BGE-1")
                else:
                    violated.add("BGE-1")

    return frozenset(violated & set(labels)), frozenset(unknown - violated)


def check(guest: Bigraph, host: Bigraph, emb: Embedding):
    """All-conditions verdict for a total candidate; empty set means valid.

    Raises DomainMismatch unless the map covers every guest node, edge,
    site, root and inner name (the outer-name map may stay partial).
    """
    if not isinstance(emb, Embedding) or emb.guest is not guest:
        emb = Embedding(guest, emb.entries() if isinstance(emb, Embedding)
                        else emb)
    if not emb.is_total():
        raise DomainMismatch("candidate does not cover the guest")
    violated, unknown = evaluate(emb, full_view(host), ALL_LABELS, total=True)
    # against a complete view, an unknown fact means a dangling host reference
    return coarse(violated | unknown)


# -- enumeration ---------------------------------------------------------------


def _assign_partitions(elems, bins):
    """Yield every total assignment of elems to bins, as bin -> frozenset."""
    elems = sorted(elems, key=ref_key)
    if not bins:
        if not elems:
            yield {}
        return
    for choice in product(range(len(bins)), repeat=len(elems)):
        out = {b: [] for b in bins}
        for elem, b in zip(elems, choice):
            out[bins[b]].append(elem)
        yield {b: frozenset(v) for b, v in out.items()}


def _subsets(elems):
    elems = sorted(elems, key=ref_key)
    for mask in range(1 << len(elems)):
        yield frozenset(e for i, e in enumerate(elems) if mask >> i & 1)


def enumerate_embeddings(guest: Bigraph, host: Bigraph):
    """All valid total embeddings of guest into host, canonically ordered.

    Backtracks over guest nodes root-down with control/parent/link pruning;
    every prune is a necessary consequence of some validity condition, and
    each completed candidate is re-verified with check().
    """
    if guest.size() == 0:
        raise ValueError("the empty guest is excluded")
    results = []
    nodes_order = sorted(guest.nodes,
                         key=lambda n: (guest.depth(("node", n)), n))
    sv = {}           # guest node id -> host node id
    sr = {}           # root index -> host place ref (anchored or chosen)
    used_nodes = set()

    host_places = ([("node", n) for n in host.sorted_nodes()]
                   + [("root", r) for r in host.roots()])

    def node_pool(v):
        parent = guest.prnt[("node", v)]
        if parent[0] == "node":
            anchor = ("node", sv[parent[1]])
            pool = host.children(anchor)
        elif parent[1] in sr:
            pool = host.children(sr[parent[1]])
        else:
            pool = [("node", n) for n in host.sorted_nodes()]
        return [w[1] for w in pool
                if w[0] == "node" and w[1] not in used_nodes
                and host.ctrl[w[1]] == guest.ctrl[v]]

    def assign_nodes(i):
        if i == len(nodes_order):
            assign_edges()
            return
        v = nodes_order[i]
        parent = guest.prnt[("node", v)]
        for u in node_pool(v):
            anchored = None
            if parent[0] == "root" and parent[1] not in sr:
                sr[parent[1]] = host.prnt[("node", u)]
                anchored = parent[1]
            sv[v] = u
            used_nodes.add(u)
            assign_nodes(i + 1)
            del sv[v]
            used_nodes.discard(u)
            if anchored is not None:
                del sr[anchored]

    def assign_edges():
        emap = {}
        used = set()
        free = []
        for e in guest.sorted_edges():
            port_imgs = [("port", (sv[p[1][0]], p[1][1]))
                         for p in guest.handle_points(("edge", e))
                         if p[0] == "port"]
            if not port_imgs:
                free.append(e)
                continue
            handles = {host.link[q] for q in port_imgs}
            if len(handles) != 1:
                return
            hd = handles.pop()
            if hd[0] != "edge" or hd[1] in used:
                return
            emap[e] = hd[1]
            used.add(hd[1])

        def rec(j):
            if j == len(free):
                assign_roots(emap)
                return
            for d in host.sorted_edges():
                if d in used:
                    continue
                emap[free[j]] = d
                used.add(d)
                rec(j + 1)
                del emap[free[j]]
                used.discard(d)

        rec(0)

    def assign_roots(emap):
        unanchored = [r for r in guest.roots() if r not in sr]
        matched = {("node", u) for u in sv.values()}

        def rec(k):
            if k == len(unanchored):
                assign_sites(emap)
                return
            r = unanchored[k]
            for target in host_places:
                if target in matched:
                    continue
                sr[r] = target
                rec(k + 1)
                del sr[r]

        rec(0)

    def assign_sites(emap):
        matched = {("node", u) for u in sv.values()}
        root_imgs = set(sr.values())
        node_groups = []   # (guest node id, leftover host children, site list)
        for v in sorted(guest.nodes):
            site_kids = [s[1] for s in guest.children(("node", v))
                         if s[0] == "site"]
            node_kids = {("node", sv[c[1]]) for c in guest.children(("node", v))
                         if c[0] == "node"}
            leftover = [w for w in host.children(("node", sv[v]))
                        if w not in node_kids]
            if leftover and not site_kids:
                return                      # PGE-6b can never hold
            if site_kids:
                node_groups.append((leftover, site_kids))
        root_sites = [s for s in guest.sites()
                      if guest.prnt[("site", s)][0] == "root"]

        def rec_groups(gi, smap, claimed):
            if gi == len(node_groups):
                rec_root_sites(0, smap, claimed)
                return
            leftover, site_kids = node_groups[gi]
            for assignment in _assign_partitions(leftover, site_kids):
                nxt = dict(smap)
                for s, ws in assignment.items():
                    nxt[s] = ws
                rec_groups(gi + 1, nxt, claimed | set(leftover))
            return

        def rec_root_sites(si, smap, claimed):
            if si == len(root_sites):
                assign_link_interfaces(emap, smap)
                return
            s = root_sites[si]
            anchor = sr[guest.prnt[("site", s)][1]]
            pool = [w for w in host.children(anchor)
                    if w not in matched and w not in root_imgs
                    and w not in claimed]
            for ws in _subsets(pool):
                smap2 = dict(smap)
                smap2[s] = ws
                rec_root_sites(si + 1, smap2, claimed | ws)

        rec_groups(0, {}, set())

    def bge1_ok(w, smap):
        if w[0] == "inner":
            return True
        chain = host.parent_chain(("node", w[1][0]))
        elems = set().union(*smap.values()) if smap else set()
        return any(c in elems for c in chain)

    def assign_link_interfaces(emap, smap):
        covered_ports = {("port", (sv[p[1][0]], p[1][1]))
                         for v in sv
                         for p in guest.ports_of(v)}
        # group guest inner names by the guest handle they sit on
        by_edge = {}
        by_outer = {}
        for x in sorted(guest.inner_names):
            hdl = guest.link[("inner", x)]
            (by_edge if hdl[0] == "edge" else by_outer) \
                .setdefault(hdl[1], []).append(x)

        omap = {}
        for y in sorted(guest.outer_names):
            port_imgs = [("port", (sv[p[1][0]], p[1][1]))
                         for p in guest.handle_points(("outer", y))
                         if p[0] == "port"]
            if port_imgs:
                handles = {host.link[q] for q in port_imgs}
                if len(handles) != 1:
                    return
                omap[y] = handles.pop()

        matched_edges = set(emap.values())
        edge_groups = []
        for e in guest.sorted_edges():
            xs = by_edge.get(e, [])
            leftover = [w for w in host.handle_points(("edge", emap[e]))
                        if w not in covered_ports]
            if leftover and not xs:
                return                      # LGE-5b can never hold
            if xs:
                edge_groups.append((leftover, xs))

        def rec_edges(gi, imap):
            if gi == len(edge_groups):
                rec_outers(sorted(by_outer), dict(omap), imap)
                return
            leftover, xs = edge_groups[gi]
            if not all(bge1_ok(w, smap) for w in leftover):
                return
            sites_of = [("inner", x) for x in xs]
            for assignment in _assign_partitions(leftover, sites_of):
                nxt = dict(imap)
                for xref, ws in assignment.items():
                    nxt[xref[1]] = ws
                rec_edges(gi + 1, nxt)

        def rec_outers(ys, om, imap):
            if not ys:
                finish(emap, smap, om, imap)
                return
            y, rest = ys[0], ys[1:]
            xs = by_outer[y]
            if y in om:
                handle_options = [om[y]]
            else:
                handle_options = [h for h in host.handles()
                                  if not (h[0] == "edge" and h[1] in matched_edges)]
            # all names empty, handle underived: canonical undefined image
            imap0 = dict(imap)
            for x in xs:
                imap0[x] = frozenset()
            if y not in om:
                rec_outers(rest, om, imap0)
            for hd in handle_options:
                pool = [w for w in host.handle_points(hd)
                        if w not in covered_ports and bge1_ok(w, smap)]
                used = set()
                for assignment in _nonoverlapping_subsets(pool, xs):
                    if y not in om and not any(assignment.values()):
                        continue        # covered by the undefined branch
                    om2 = dict(om)
                    om2[y] = hd
                    imap2 = dict(imap)
                    imap2.update(assignment)
                    rec_outers(rest, om2, imap2)

        def _nonoverlapping_subsets(pool, xs):
            if not xs:
                yield {}
                return
            x, rest = xs[0], xs[1:]
            for ws in _subsets(pool):
                for tail in _nonoverlapping_subsets(
                        [w for w in pool if w not in ws], rest):
                    out = {x: ws}
                    out.update(tail)
                    yield out

        rec_edges(0, {})

    def finish(emap, smap, omap, imap):
        entries = {}
        for v, u in sv.items():
            entries[("node", v)] = ("node", u)
        for e, d in emap.items():
            entries[("edge", e)] = ("edge", d)
        for r, target in sr.items():
            entries[("root", r)] = target
        for s, ws in smap.items():
            entries[("site", s)] = ws
        for x, ws in imap.items():
            entries[("inner", x)] = ws
        for y, hd in omap.items():
            entries[("outer", y)] = hd
        emb = Embedding(guest, entries)
        if not check(guest, host, emb):
            results.append(emb)

    assign_nodes(0)
    uniq = {e.sort_key(): e for e in results}
    return [uniq[k] for k in sorted(uniq)]
