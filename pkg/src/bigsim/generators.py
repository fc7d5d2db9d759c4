"""Seeded random bigraphs, guests, rules and scenarios for tests and
experiments.  Everything is deterministic under a fixed seed."""
from __future__ import annotations

import random

from .bigraph import Bigraph, Control, ReactionRule, Signature, validate
from .sim import Scenario, SimConfig

DEFAULT_SIGNATURE = Signature([
    Control("K", 0), Control("L", 1), Control("M", 2), Control("N", 0),
])


def random_agent(rng, n_nodes=5, n_edges=1, n_roots=1, n_outer=0,
                 signature=DEFAULT_SIGNATURE):
    """A random well-formed agent: forest, then wiring over free ports."""
    controls = sorted(signature, key=lambda c: c.name)
    nodes = {}
    placed = [("root", r) for r in range(n_roots)]
    for i in range(n_nodes):
        nid = f"v{i}"
        parent = placed[rng.randrange(len(placed))]
        ctrl = controls[rng.randrange(len(controls))]
        nodes[nid] = (ctrl.name, "r%d" % parent[1] if parent[0] == "root"
                      else parent[1])
        placed.append(("node", nid))
    ports = []
    for nid, (cname, _p) in sorted(nodes.items()):
        for i in range(signature[cname].arity):
            ports.append(f"{nid}:{i}")
    rng.shuffle(ports)
    outer_names = [f"y{i}" for i in range(n_outer)]
    edges = []
    links = {}
    handles = []
    for i in range(n_edges):
        edges.append(f"e{i}")
    handles = [("edge", e) for e in edges] + [("outer", y) for y in outer_names]
    for p in ports:
        if not handles:
            # close leftover ports on fresh edges
            e = f"e{len(edges)}"
            edges.append(e)
            handles.append(("edge", e))
        kind, name = handles[rng.randrange(len(handles))]
        links[p] = name
    # every edge needs at least one point unless we accept idle edges; keep
    # idle edges occasionally, they are legal
    b = Bigraph.build(signature, nodes=nodes, edges=edges, links=links,
                      roots=n_roots, outer_names=outer_names)
    assert not validate(b)
    return b


def random_guest(rng, host, n_nodes=2, n_sites=1, n_roots=1,
                 from_host=True):
    """A small guest over the host's signature; when from_host, its shape is
    sampled from the host so matches usually exist."""
    sig = host.signature
    if from_host and host.ctrl:
        # sample a connected piece: pick a node, take it and maybe a child
        host_nodes = host.sorted_nodes()
        seed_node = host_nodes[rng.randrange(len(host_nodes))]
        picked = [seed_node]
        kids = [c for c in host.children(("node", seed_node))
                if c[0] == "node"]
        while kids and len(picked) < n_nodes:
            c = kids[rng.randrange(len(kids))]
            picked.append(c[1])
            kids = [k for k in host.children(c) if k[0] == "node"]
        nodes = {}
        rename = {}
        for i, hn in enumerate(picked):
            rename[hn] = f"g{i}"
        for hn in picked:
            parent = host.prnt[("node", hn)]
            if parent[0] == "node" and parent[1] in rename:
                p = rename[parent[1]]
            else:
                p = "r0"
            nodes[rename[hn]] = (host.ctrl[hn].name, p)
        sites = {}
        # a site under the deepest picked node keeps parameters open
        if n_sites:
            sites[0] = rename[picked[-1]]
        outer = []
        links = {}
        for hn in picked:
            for i in range(host.ctrl[hn].arity):
                y = f"w{len(outer)}"
                outer.append(y)
                links[f"{rename[hn]}:{i}"] = y
        return Bigraph.build(sig, nodes=nodes, sites=sites, links=links,
                             roots=n_roots, outer_names=outer)
    controls = sorted(sig, key=lambda c: c.name)
    nodes = {}
    for i in range(n_nodes):
        ctrl = controls[rng.randrange(len(controls))]
        parent = "r0" if i == 0 else f"g{rng.randrange(i)}"
        nodes[f"g{i}"] = (ctrl.name, parent)
    outer = []
    links = {}
    for nid, (cname, _p) in sorted(nodes.items()):
        for i in range(sig[cname].arity):
            y = f"w{len(outer)}"
            outer.append(y)
            links[f"{nid}:{i}"] = y
    sites = {0: sorted(nodes)[-1]} if n_sites else {}
    return Bigraph.build(sig, nodes=nodes, sites=sites, links=links,
                         roots=n_roots, outer_names=outer)


def delete_rule(guest):
    """Redex = guest; reactum drops the guest's nodes, keeping parameters."""
    sig = guest.signature
    reactum = Bigraph.build(sig, nodes={}, sites={s: f"r0" for s in
                                                  guest.sites()},
                            roots=guest.outer_width,
                            outer_names=sorted(guest.outer_names))
    eta = {s: s for s in guest.sites()}
    return ReactionRule(guest, reactum, eta, name="delete")


def grow_rule(guest, ctrl_name="N"):
    """Redex = guest; reactum re-creates it with one extra child node."""
    sig = guest.signature
    nodes = {}
    for n in guest.sorted_nodes():
        parent = guest.prnt[("node", n)]
        nodes[n + "_"] = (guest.ctrl[n].name,
                          ("r%d" % parent[1]) if parent[0] == "root"
                          else parent[1] + "_")
    top = sorted(guest.nodes)[0] + "_"
    nodes["fresh"] = (ctrl_name, top)
    sites = {}
    for s in guest.sites():
        parent = guest.prnt[("site", s)]
        sites[s] = ("r%d" % parent[1]) if parent[0] == "root" \
            else parent[1] + "_"
    links = {}
    outer = sorted(guest.outer_names)
    for n in guest.sorted_nodes():
        for i in range(guest.ctrl[n].arity):
            handle = guest.link[("port", (n, i))]
            if handle[0] == "outer":
                links[f"{n}_:{i}"] = handle[1]
    for i in range(sig[ctrl_name].arity):
        y = f"z{i}"
        outer.append(y)
        links[f"fresh:{i}"] = y
    reactum = Bigraph.build(sig, nodes=nodes, sites=sites, links=links,
                            roots=guest.outer_width, outer_names=outer)
    redex = guest
    if set(outer) != guest.outer_names:
        # grow the redex's outer face to match (idle names are harmless)
        redex = Bigraph.build(
            sig,
            nodes={n: (guest.ctrl[n].name,
                       ("r%d" % guest.prnt[("node", n)][1])
                       if guest.prnt[("node", n)][0] == "root"
                       else guest.prnt[("node", n)][1])
                   for n in guest.sorted_nodes()},
            sites={s: ("r%d" % guest.prnt[("site", s)][1])
                   if guest.prnt[("site", s)][0] == "root"
                   else guest.prnt[("site", s)][1] for s in guest.sites()},
            edges=sorted(guest.edges),
            links={(f"{p[1][0]}:{p[1][1]}" if p[0] == "port" else p[1]):
                   guest.link[p][1] for p in guest.link},
            roots=guest.outer_width,
            outer_names=outer)
    eta = {s: s for s in redex.sites()}
    return ReactionRule(redex, reactum, eta, name="grow")


def chain_host(length, signature=DEFAULT_SIGNATURE, ctrl="L"):
    """A place chain v0 <- v1 <- ...; consecutive pairs share a link edge,
    leftover ports close on private edges (the finest overlay is a list)."""
    nodes = {}
    links = {}
    edges = set()
    for i in range(length):
        nodes[f"v{i}"] = (ctrl, "r0" if i == 0 else f"v{i-1}")
    for i in range(0, length - 1, 2):
        e = f"e{i}"
        edges.add(e)
        links[f"v{i}:0"] = e
        links[f"v{i+1}:0"] = e
    for i in range(length):
        if f"v{i}:0" not in links:
            e = f"es{i}"
            edges.add(e)
            links[f"v{i}:0"] = e
    return Bigraph.build(signature, nodes=nodes, edges=sorted(edges),
                         links=links, roots=1)


def chain_guest(signature=DEFAULT_SIGNATURE, ctrl="L"):
    """Two chained nodes with a parameter site, matching inside chain hosts."""
    nodes = {"g0": (ctrl, "r0"), "g1": (ctrl, "g0")}
    links = {"g0:0": "w0", "g1:0": "w1"}
    return Bigraph.build(signature, nodes=nodes, sites={0: "g1"},
                         links=links, roots=1, outer_names=["w0", "w1"])


def random_scenario(seed, n_components=(6, 20), partitions=("finest",
                    "by-root", "random"), reactions=0):
    """A host/guest/rule bundle sized for the acceptance suite."""
    rng = random.Random(seed)
    lo, hi = n_components
    n_nodes = rng.randrange(max(2, lo // 2), max(3, hi // 2))
    n_edges = rng.randrange(0, 3)
    n_roots = rng.choice([1, 1, 2])
    host = random_agent(rng, n_nodes=n_nodes, n_edges=n_edges,
                        n_roots=n_roots)
    guest = random_guest(rng, host, n_nodes=rng.choice([1, 2, 2, 3]))
    rules = {}
    if reactions:
        rules["r-del"] = delete_rule(guest)
    pchoice = partitions[rng.randrange(len(partitions))]
    if pchoice == "random":
        from .partition import random_partition
        nprocs = rng.randrange(2, max(3, host.size() // 2))
        part = random_partition(host, nprocs, rng)
        pspec = part.to_json()
    else:
        pspec = pchoice
    cfg = SimConfig(seed=seed, partition=pspec, reactions=reactions)
    return Scenario(host, {"g0": guest}, rules, cfg)
