"""Concrete bigraphs: a place forest and a link hypergraph over one node set.

Values are immutable; rewriting builds new bigraphs.  Components are tagged
tuples throughout:

    ("node", id)   ("edge", id)   ("site", k)   ("root", k)
    ("inner", name)   ("outer", name)   ("port", (id, k))

Node and edge ids are opaque strings; fresh ids are drawn from per-machine
monotone counters namespaced by the creating process.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from itertools import permutations
from typing import Iterable, Mapping, Optional

_ROOT_RE = re.compile(r"^r(\d+)$")

PLACE_KINDS = ("node", "site")          # things with a parent
POINT_KINDS = ("port", "inner")         # things with a link
HANDLE_KINDS = ("edge", "outer")
COMPONENT_KINDS = ("node", "edge", "site", "root", "inner", "outer")


def ref_key(ref):
    """Canonical sort key for a component/port reference."""
    kind, payload = ref
    if kind == "port":
        return (kind, str(payload[0]), payload[1])
    return (kind, str(payload), 0)


def ref_str(ref):
    kind, payload = ref
    if kind == "port":
        return f"{payload[0]}:{payload[1]}"
    if kind in ("site", "root"):
        return f"{kind[0]}{payload}"
    return str(payload)


class BigraphError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class Control:
    name: str
    arity: int


class Signature:
    """A set of controls with lookup by name."""

    def __init__(self, controls: Iterable[Control]):
        self._by_name = {}
        for c in controls:
            if c.name in self._by_name and self._by_name[c.name] != c:
                raise BigraphError(f"duplicate control name {c.name!r}")
            self._by_name[c.name] = c

    def __getitem__(self, name: str) -> Control:
        return self._by_name[name]

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    def __iter__(self):
        return iter(sorted(self._by_name.values()))

    def __eq__(self, other):
        return isinstance(other, Signature) and self._by_name == other._by_name

    def merged(self, other: "Signature") -> "Signature":
        return Signature(list(self) + list(other))

    def to_json(self):
        return [{"name": c.name, "arity": c.arity} for c in self]

    @classmethod
    def from_json(cls, data):
        return cls(Control(d["name"], int(d["arity"])) for d in data)


@dataclass(frozen=True)
class Violation:
    kind: str
    subject: object

    def __str__(self):
        return f"{self.kind}({self.subject})"


def _parse_place_parent(value, node_ids):
    if isinstance(value, tuple):
        return value
    m = _ROOT_RE.match(value)
    if m and value not in node_ids:
        return ("root", int(m.group(1)))
    return ("node", value)


def _parse_point(value, inner_names):
    if isinstance(value, tuple):
        return value
    if ":" in value:
        nid, _, idx = value.rpartition(":")
        if nid and idx.isdigit():
            return ("port", (nid, int(idx)))
    if value in inner_names:
        return ("inner", value)
    raise BigraphError(f"cannot parse link point {value!r}")


def _parse_handle(value, edge_ids):
    if isinstance(value, tuple):
        return value
    if value in edge_ids:
        return ("edge", value)
    return ("outer", value)


class Bigraph:
    """A concrete bigraph over a signature.

    Construction takes string-friendly maps (see ``build``); internal maps are
    fully tagged.  The object precomputes child/point indexes and treats all
    fields as read-only afterwards.
    """

    def __init__(self, signature, nodes, prnt, link, edges,
                 inner_width, inner_names, outer_width, outer_names):
        self.signature = signature
        self.ctrl = dict(nodes)                 # node id -> Control
        self.prnt = dict(prnt)                  # place ref -> parent ref
        self.link = dict(link)                  # point ref -> handle ref
        self.edges = frozenset(edges)
        self.inner_width = int(inner_width)
        self.inner_names = frozenset(inner_names)
        self.outer_width = int(outer_width)
        self.outer_names = frozenset(outer_names)

        self._children = {}
        for child, parent in self.prnt.items():
            self._children.setdefault(parent, []).append(child)
        for parent in list(self._children):
            self._children[parent] = tuple(sorted(self._children[parent], key=ref_key))
        self._points = {}
        for point, handle in self.link.items():
            self._points.setdefault(handle, []).append(point)
        for handle in list(self._points):
            self._points[handle] = tuple(sorted(self._points[handle], key=ref_key))
        self._depth = {}

    # -- building ---------------------------------------------------------

    @classmethod
    def build(cls, signature, nodes=None, sites=None, edges=(), links=None,
              roots=1, inner_names=(), outer_names=()):
        """Assemble a bigraph from string-keyed maps.

        nodes: {node_id: (ctrl_name, parent)} with parent "r<k>" or a node id.
        sites: {site_index: parent}.  links: {point: handle} with point
        "node:port" or an inner name, handle an edge id or outer name.
        """
        nodes = nodes or {}
        sites = sites or {}
        links = links or {}
        node_ids = set(nodes)
        for nid in node_ids:
            if _ROOT_RE.match(nid):
                raise BigraphError(f"node id {nid!r} collides with root syntax")
        ctrl = {}
        for nid, (cname, _parent) in sorted(nodes.items()):
            if cname not in signature:
                raise BigraphError(f"unknown control {cname!r}")
            ctrl[nid] = signature[cname]
        prnt = {}
        for nid, (_cname, parent) in nodes.items():
            prnt[("node", nid)] = _parse_place_parent(parent, node_ids)
        for idx, parent in sites.items():
            prnt[("site", int(idx))] = _parse_place_parent(parent, node_ids)
        inner_names = frozenset(inner_names)
        edge_ids = frozenset(edges)
        link = {}
        for point, handle in links.items():
            link[_parse_point(point, inner_names)] = _parse_handle(handle, edge_ids)
        return cls(signature, ctrl, prnt, link, edge_ids,
                   len(sites), inner_names, roots, outer_names)

    # -- basic views ------------------------------------------------------

    @property
    def nodes(self):
        return self.ctrl.keys()

    def sorted_nodes(self):
        return sorted(self.ctrl)

    def sorted_edges(self):
        return sorted(self.edges)

    def sites(self):
        return range(self.inner_width)

    def roots(self):
        return range(self.outer_width)

    def components(self):
        """All six component kinds, canonically ordered (ports excluded)."""
        out = [("node", n) for n in self.sorted_nodes()]
        out += [("edge", e) for e in self.sorted_edges()]
        out += [("site", s) for s in self.sites()]
        out += [("root", r) for r in self.roots()]
        out += [("inner", x) for x in sorted(self.inner_names)]
        out += [("outer", y) for y in sorted(self.outer_names)]
        return out

    def size(self):
        return (len(self.ctrl) + len(self.edges) + self.inner_width
                + self.outer_width + len(self.inner_names) + len(self.outer_names))

    def ports_of(self, node_id):
        return tuple(("port", (node_id, i)) for i in range(self.ctrl[node_id].arity))

    def all_ports(self):
        for n in self.sorted_nodes():
            yield from self.ports_of(n)

    def points(self):
        return list(self.all_ports()) + [("inner", x) for x in sorted(self.inner_names)]

    def handles(self):
        return ([("edge", e) for e in self.sorted_edges()]
                + [("outer", y) for y in sorted(self.outer_names)])

    def children(self, parent_ref):
        return self._children.get(parent_ref, ())

    def handle_points(self, handle_ref):
        return self._points.get(handle_ref, ())

    def parent(self, place_ref):
        return self.prnt.get(place_ref)

    def parent_chain(self, ref):
        """Upward path from ref (inclusive) to its root."""
        chain = [ref]
        while chain[-1][0] != "root":
            nxt = self.prnt.get(chain[-1])
            if nxt is None or nxt in chain:
                break
            chain.append(nxt)
        return chain

    def depth(self, ref):
        if ref not in self._depth:
            self._depth[ref] = len(self.parent_chain(ref)) - 1
        return self._depth[ref]

    def descendants(self, ref):
        """Place closure below ref, ref included when it is a place."""
        out = []
        stack = [ref]
        while stack:
            cur = stack.pop()
            out.append(cur)
            stack.extend(self._children.get(cur, ()))
        return out

    def is_agent(self):
        return self.inner_width == 0 and not self.inner_names

    def exists(self, ref):
        kind, payload = ref
        if kind == "node":
            return payload in self.ctrl
        if kind == "edge":
            return payload in self.edges
        if kind == "site":
            return 0 <= payload < self.inner_width
        if kind == "root":
            return 0 <= payload < self.outer_width
        if kind == "inner":
            return payload in self.inner_names
        if kind == "outer":
            return payload in self.outer_names
        if kind == "port":
            nid, i = payload
            return nid in self.ctrl and 0 <= i < self.ctrl[nid].arity
        return False

    def __eq__(self, other):
        if not isinstance(other, Bigraph):
            return NotImplemented
        return (self.ctrl == other.ctrl and self.prnt == other.prnt
                and self.link == other.link and self.edges == other.edges
                and self.inner_width == other.inner_width
                and self.inner_names == other.inner_names
                and self.outer_width == other.outer_width
                and self.outer_names == other.outer_names)

    def __repr__(self):
        return (f"<Bigraph {len(self.ctrl)}n {len(self.edges)}e "
                f"{self.inner_width}s {self.outer_width}r>")

    # -- serialization ----------------------------------------------------

    def to_json(self):
        links = []
        for point in sorted(self.link, key=ref_key):
            handle = self.link[point]
            links.append({"point": ref_str(point), "handle": ref_str(handle)})
        return {
            "signature": self.signature.to_json(),
            "nodes": [{"id": n, "ctrl": self.ctrl[n].name,
                       "parent": ref_str(self.prnt[("node", n)])}
                      for n in self.sorted_nodes()],
            "sites": [{"index": s, "parent": ref_str(self.prnt[("site", s)])}
                      for s in self.sites()],
            "edges": self.sorted_edges(),
            "links": links,
            "inner": {"width": self.inner_width, "names": sorted(self.inner_names)},
            "outer": {"width": self.outer_width, "names": sorted(self.outer_names)},
        }

    @classmethod
    def from_json(cls, data):
        sig = Signature.from_json(data["signature"])
        nodes = {d["id"]: (d["ctrl"], d["parent"]) for d in data["nodes"]}
        sites = {int(d["index"]): d["parent"] for d in data.get("sites", [])}
        links = {d["point"]: d["handle"] for d in data.get("links", [])}
        inner = data.get("inner", {"width": len(sites), "names": []})
        outer = data.get("outer", {"width": 1, "names": []})
        if int(inner["width"]) != len(sites):
            raise BigraphError("inner width disagrees with site list")
        return cls.build(sig, nodes=nodes, sites=sites,
                         edges=data.get("edges", []), links=links,
                         roots=int(outer["width"]),
                         inner_names=inner.get("names", []),
                         outer_names=outer.get("names", []))

    def dumps(self):
        return json.dumps(self.to_json(), sort_keys=True)

    @classmethod
    def loads(cls, text):
        return cls.from_json(json.loads(text))


@dataclass
class ReactionRule:
    """Rewrite rule: redex, reactum, and a site instantiation map.

    ``eta`` maps every reactum site to the redex site whose parameter it
    receives; it may duplicate or discard redex sites.
    """
    redex: Bigraph
    reactum: Bigraph
    eta: dict = field(default_factory=dict)
    name: str = "rule"

    def __post_init__(self):
        self.eta = {int(k): int(v) for k, v in self.eta.items()}
        if set(self.eta) != set(self.reactum.sites()):
            raise BigraphError("eta must be total on reactum sites")
        for tgt in self.eta.values():
            if not 0 <= tgt < self.redex.inner_width:
                raise BigraphError(f"eta target {tgt} is not a redex site")
        if (self.redex.outer_width != self.reactum.outer_width
                or self.redex.outer_names != self.reactum.outer_names):
            raise BigraphError("redex and reactum must share the outer interface")
        if not self.reactum.inner_names <= self.redex.inner_names:
            raise BigraphError("reactum inner names must come from the redex")

    def to_json(self):
        return {"redex": self.redex.to_json(), "reactum": self.reactum.to_json(),
                "eta": [[k, self.eta[k]] for k in sorted(self.eta)]}

    @classmethod
    def from_json(cls, data, name="rule"):
        return cls(Bigraph.from_json(data["redex"]),
                   Bigraph.from_json(data["reactum"]),
                   {int(k): int(v) for k, v in data.get("eta", [])},
                   name=name)


class FreshIds:
    """Monotone id source namespaced by the creating machine/process."""

    def __init__(self, namespace="m0"):
        self.namespace = namespace
        self._n = 0

    def _next(self, tag):
        self._n += 1
        return f"{self.namespace}.{tag}{self._n}"

    def node(self):
        return self._next("n")

    def edge(self):
        return self._next("e")


# -- validation ------------------------------------------------------------


def validate(b: Bigraph):
    """Return every violated structural invariant (empty list = valid)."""
    out = []
    node_refs = {("node", n) for n in b.ctrl}
    if set(b.ctrl) & set(b.edges):
        out.append(Violation("SharedNodeEdgeId", sorted(set(b.ctrl) & set(b.edges))))
    for n, c in sorted(b.ctrl.items()):
        if c.name not in b.signature or b.signature[c.name] != c:
            out.append(Violation("UnknownControl", n))

    expected_places = node_refs | {("site", s) for s in b.sites()}
    for place in sorted(expected_places - set(b.prnt), key=ref_key):
        out.append(Violation("MissingParent", place))
    for place in sorted(set(b.prnt) - expected_places, key=ref_key):
        out.append(Violation("PhantomPlace", place))
    for place, parent in sorted(b.prnt.items(), key=lambda kv: ref_key(kv[0])):
        if parent[0] == "root":
            if not 0 <= parent[1] < b.outer_width:
                out.append(Violation("BadParent", place))
        elif parent[0] == "node":
            if parent not in node_refs:
                out.append(Violation("BadParent", place))
        else:
            out.append(Violation("BadParent", place))
    # acyclicity of prnt restricted to nodes
    seen_ok = set()
    for start in sorted(node_refs, key=ref_key):
        path = []
        cur = start
        while cur in node_refs and cur not in seen_ok:
            if cur in path:
                out.append(Violation("CyclicParent", cur))
                break
            path.append(cur)
            cur = b.prnt.get(cur)
            if cur is None:
                break
        else:
            seen_ok.update(path)
            continue
        seen_ok.update(path)

    expected_points = set(b.all_ports()) | {("inner", x) for x in b.inner_names}
    for point in sorted(expected_points - set(b.link), key=ref_key):
        out.append(Violation("UnlinkedPort" if point[0] == "port" else "UnlinkedInner",
                             point))
    for point in sorted(set(b.link) - expected_points, key=ref_key):
        out.append(Violation("PhantomPoint", point))
    for point, handle in sorted(b.link.items(), key=lambda kv: ref_key(kv[0])):
        if handle[0] == "edge":
            if handle[1] not in b.edges:
                out.append(Violation("BadHandle", point))
        elif handle[0] == "outer":
            if handle[1] not in b.outer_names:
                out.append(Violation("BadHandle", point))
        else:
            out.append(Violation("BadHandle", point))
    if b.inner_names & b.outer_names:
        # legal in theory, but ambiguous in our textual formats; reject early
        out.append(Violation("AmbiguousName", sorted(b.inner_names & b.outer_names)))
    return out


# -- isomorphism -----------------------------------------------------------


def _node_signature(b, n):
    c = b.ctrl[n]
    parent = b.prnt[("node", n)]
    return (c.name, c.arity, b.depth(("node", n)),
            len(b.children(("node", n))), parent[0])


def _iso_search(a: Bigraph, b: Bigraph):
    """Yield every support bijection pair (sigma_nodes, sigma_edges)."""
    if (a.inner_width != b.inner_width or a.outer_width != b.outer_width
            or a.inner_names != b.inner_names or a.outer_names != b.outer_names
            or len(a.ctrl) != len(b.ctrl) or len(a.edges) != len(b.edges)):
        return

    a_nodes = sorted(a.ctrl, key=lambda n: (_node_signature(a, n), n))
    by_sig = {}
    for n in b.ctrl:
        by_sig.setdefault(_node_signature(b, n), []).append(n)

    def consistent(n, m, sv):
        pa = a.prnt[("node", n)]
        pb = b.prnt[("node", m)]
        if pa[0] == "node":
            return pa[1] in sv and ("node", sv[pa[1]]) == pb
        return pa == pb

    def assign(i, sv, used):
        if i == len(a_nodes):
            result = _complete_iso(a, b, sv)
            if result is not None:
                yield result
            return
        n = a_nodes[i]
        for m in sorted(by_sig.get(_node_signature(a, n), [])):
            if m in used or not consistent(n, m, sv):
                continue
            sv[n] = m
            used.add(m)
            yield from assign(i + 1, sv, used)
            del sv[n]
            used.discard(m)

    yield from assign(0, {}, set())


def iso(a: Bigraph, b: Bigraph):
    """Support bijections (nodes, edges) making a and b equal, if any.

    Interfaces must match exactly; sites, roots and names map identically.
    Returns (sigma_nodes, sigma_edges) or None.
    """
    return next(_iso_search(a, b), None)


def all_isos(a: Bigraph, b: Bigraph):
    """Every support bijection pair from a onto b."""
    return list(_iso_search(a, b))


def _complete_iso(a, b, sv):
    """Extend a full node bijection with an edge bijection, or reject."""
    def pimg(ref):
        if ref[0] == "node":
            return ("node", sv[ref[1]])
        return ref

    for place, parent in a.prnt.items():
        if b.prnt.get(pimg(place)) != pimg(parent):
            return None

    se = {}
    used = set()
    free_a = []
    for e in a.sorted_edges():
        pts = a.handle_points(("edge", e))
        if not pts:
            free_a.append(e)
            continue
        images = set()
        for p in pts:
            if p[0] == "port":
                q = ("port", (sv[p[1][0]], p[1][1]))
            else:
                q = p
            h = b.link.get(q)
            if h is None or h[0] != "edge":
                return None
            images.add(h[1])
        if len(images) != 1:
            return None
        d = images.pop()
        if d in used:
            return None
        se[e] = d
        used.add(d)
    free_b = [e for e in b.sorted_edges() if e not in used]
    pointless_b = [e for e in free_b if not b.handle_points(("edge", e))]
    if len(free_a) != len(pointless_b) or len(free_b) != len(free_a):
        return None
    se.update(zip(free_a, pointless_b))

    def himg(h):
        return ("edge", se[h[1]]) if h[0] == "edge" else h

    for point, handle in a.link.items():
        if point[0] == "port":
            q = ("port", (sv[point[1][0]], point[1][1]))
        else:
            q = point
        if b.link.get(q) != himg(handle):
            return None
    return dict(sv), se


# -- reaction application ----------------------------------------------------


class InvalidEmbedding(ValueError):
    """The supplied occurrence is not a valid embedding of the redex."""


def apply_reaction(h: Bigraph, rule: ReactionRule, emb, ids: Optional[FreshIds] = None):
    """Rewrite h at the occurrence emb of rule.redex.

    The redex image is excised, the reactum instantiated in its place, and
    parameters are moved/copied/discarded per eta.  Fresh identifiers are
    drawn from ids for reactum components and duplicated parameters.
    """
    from . import embedding as _embedding

    if _embedding.check(rule.redex, h, emb):
        raise InvalidEmbedding(sorted(_embedding.check(rule.redex, h, emb)))
    ids = ids or FreshIds("w")

    redex, reactum = rule.redex, rule.reactum
    matched_nodes = {emb.value(("node", v))[1] for v in redex.nodes}
    matched_edges = {emb.value(("edge", e))[1] for e in redex.sorted_edges()}

    # parameter forests, keyed by redex site
    param_roots = {s: sorted(emb.value(("site", s)) or (), key=ref_key)
                   for s in redex.sites()}
    param_comps = {}
    for s, roots in param_roots.items():
        comps = []
        for w in roots:
            comps.extend(h.descendants(w))
        param_comps[s] = comps
    copies_of = {s: sorted(rs for rs, t in rule.eta.items() if t == s)
                 for s in redex.sites()}

    # reconnection map for parameter points sitting on matched host edges
    inner_cover = {}
    for x in sorted(redex.inner_names):
        for w in sorted(emb.value(("inner", x)) or (), key=ref_key):
            inner_cover[w] = x

    ctrl = dict(h.ctrl)
    prnt = dict(h.prnt)
    link = dict(h.link)
    edges = set(h.edges)

    def remove_node(u):
        ctrl.pop(u, None)
        prnt.pop(("node", u), None)
        for i in range(h.ctrl[u].arity):
            link.pop(("port", (u, i)), None)

    for u in sorted(matched_nodes):
        remove_node(u)
    for d in sorted(matched_edges):
        edges.discard(d)

    # discarded parameters vanish with their internal edges
    for s in redex.sites():
        if copies_of[s]:
            continue
        for comp in param_comps[s]:
            if comp[0] == "node":
                remove_node(comp[1])
            elif comp[0] == "site":
                raise BigraphError("cannot discard a parameter containing host sites")
    for d in sorted(edges):
        pts = h.handle_points(("edge", d))
        if pts and all(p not in link for p in pts):
            edges.discard(d)

    # instantiate the reactum
    node_map = {}
    for v in reactum.sorted_nodes():
        node_map[v] = ids.node()
        ctrl[node_map[v]] = reactum.ctrl[v]
    edge_map = {e: ids.edge() for e in reactum.sorted_edges()}
    edges.update(edge_map.values())

    def ctx_root(r):
        return emb.value(("root", r))

    def reactum_place(ref):
        if ref[0] == "node":
            return ("node", node_map[ref[1]])
        return ctx_root(ref[1])

    ctx_handles = {}

    def ctx_handle(y):
        # wiring for an outer name unused by the redex occurrence is unknown;
        # close it with a fresh edge
        if y not in ctx_handles:
            got = emb.value(("outer", y))
            if got is None:
                got = ("edge", ids.edge())
                edges.add(got[1])
            ctx_handles[y] = got
        return ctx_handles[y]

    def reactum_handle(ref):
        if ref[0] == "edge":
            return ("edge", edge_map[ref[1]])
        return ctx_handle(ref[1])

    for v in reactum.sorted_nodes():
        prnt[("node", node_map[v])] = reactum_place(reactum.prnt[("node", v)])
        for i in range(reactum.ctrl[v].arity):
            p = ("port", (v, i))
            if p not in reactum.link:
                continue
            link[("port", (node_map[v], i))] = reactum_handle(reactum.link[p])

    def attach_point(reactum_site):
        return reactum_place(reactum.prnt[("site", reactum_site)])

    def relink_for_matched(handle, x_for_point):
        # a parameter point lay on an excised redex edge: reconnect through
        # the inner name that covered it in the occurrence
        if handle[0] == "edge" and handle[1] in matched_edges:
            if x_for_point is None or ("inner", x_for_point) not in reactum.link:
                raise BigraphError("parameter point on a matched edge has no "
                                   "reactum wiring")
            return reactum_handle(reactum.link[("inner", x_for_point)])
        return handle

    for s in redex.sites():
        targets = copies_of[s]
        if not targets:
            continue
        primary, rest = targets[0], targets[1:]
        # move: reparent the original forest, fix links into excised edges
        for w in param_roots[s]:
            prnt[w] = attach_point(primary)
        for comp in param_comps[s]:
            if comp[0] != "node":
                continue
            u = comp[1]
            for i in range(h.ctrl[u].arity):
                p = ("port", (u, i))
                old = h.link[p]
                link[p] = relink_for_matched(old, inner_cover.get(p))
        if not rest:
            continue
        # duplicates get fresh node ids and fresh copies of internal edges
        comp_nodes = [c[1] for c in param_comps[s] if c[0] == "node"]
        if any(c[0] == "site" for c in param_comps[s]):
            raise BigraphError("cannot duplicate a parameter containing host sites")
        node_set = set(comp_nodes)
        internal = [d for d in h.sorted_edges()
                    if d not in matched_edges and h.handle_points(("edge", d))
                    and all(p[0] == "port" and p[1][0] in node_set
                            for p in h.handle_points(("edge", d)))]
        for rs in rest:
            nmap = {u: ids.node() for u in comp_nodes}
            emap = {d: ids.edge() for d in internal}
            edges.update(emap.values())
            for u in comp_nodes:
                ctrl[nmap[u]] = h.ctrl[u]
                old_parent = h.prnt[("node", u)]
                if old_parent[0] == "node" and old_parent[1] in nmap:
                    prnt[("node", nmap[u])] = ("node", nmap[old_parent[1]])
                else:
                    prnt[("node", nmap[u])] = attach_point(rs)
                for i in range(h.ctrl[u].arity):
                    old = h.link[("port", (u, i))]
                    if old[0] == "edge" and old[1] in emap:
                        new_handle = ("edge", emap[old[1]])
                    else:
                        new_handle = relink_for_matched(
                            old, inner_cover.get(("port", (u, i))))
                    link[("port", (nmap[u], i))] = new_handle

    result = Bigraph(h.signature, ctrl, prnt, link, edges,
                     h.inner_width, h.inner_names, h.outer_width, h.outer_names)
    bad = validate(result)
    if bad:
        raise BigraphError(f"rewrite produced an invalid bigraph: {bad}")
    return result
