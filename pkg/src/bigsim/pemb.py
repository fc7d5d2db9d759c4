"""The meet-semilattice of partial embeddings, atoms, and atom graphs.

Partial embeddings are ordered by pointwise extension; the set-valued
site/inner entries are ordered by inclusion so that a map decomposes into the
join of its atoms (single-component, single-image pieces, plus defined-empty
entries).  Atom graphs encode families of candidates: vertices are atoms,
edges are pairwise-validated joins.  The condition split drives the engine:
edges carry the locally/ancestor checkable conditions, the coverage
conditions LGE-5b and PGE-6b wait for a completed candidate.
"""
from __future__ import annotations

import json
from itertools import combinations

from .bigraph import Bigraph, all_isos, ref_key, ref_str
from .embedding import (ALL_LABELS, ANCESTOR_LABELS, FINAL_LABELS,
                        LOCAL_PAIR_LABELS, PER_ATOM_LABELS, SET_KINDS,
                        Embedding, evaluate)
from .view import HostView, InsufficientView

BOTTOM_ENTRIES = {}


def bottom(guest):
    return Embedding(guest, {})


# -- order, meet, join ---------------------------------------------------------


def leq(phi: Embedding, psi: Embedding) -> bool:
    """phi ⊑ psi: every fact of phi holds in psi (inclusion on set entries)."""
    for ref, value in phi.items():
        got = psi.value(ref)
        if got is None and not psi.defined(ref):
            return False
        if ref[0] in SET_KINDS:
            if not value <= got:
                return False
        elif got != value:
            return False
    return True


def meet(phi: Embedding, psi: Embedding) -> Embedding:
    """Greatest lower bound; always defined."""
    entries = {}
    for ref, value in phi.items():
        if not psi.defined(ref):
            continue
        got = psi.value(ref)
        if ref[0] in SET_KINDS:
            entries[ref] = value & got
        elif got == value:
            entries[ref] = value
    return Embedding(phi.guest, entries)


def join_entries(phi: Embedding, psi: Embedding):
    """Structural union of the two maps, or None on disagreement."""
    entries = dict(phi.items())
    for ref, value in psi.items():
        if ref in entries:
            if ref[0] in SET_KINDS:
                entries[ref] = entries[ref] | value
            elif entries[ref] != value:
                return None
        else:
            entries[ref] = value
    return entries


def join(phi: Embedding, psi: Embedding, view: HostView = None):
    """Least upper bound, absent when the maps disagree or the union map
    violates an embedding condition (checked against view when given)."""
    entries = join_entries(phi, psi)
    if entries is None:
        return None
    out = Embedding(phi.guest, entries)
    labels = LOCAL_PAIR_LABELS | {"PGE-5"}
    if view is not None:
        violated, _unknown = evaluate(out, view, labels)
    else:
        violated, _unknown = evaluate(out, _EMPTY_VIEW, labels)
    if violated:
        return None
    return out


def join_all(embs, guest):
    entries = {}
    for e in embs:
        for ref, value in e.items():
            if ref in entries:
                if ref[0] in SET_KINDS:
                    entries[ref] = entries[ref] | value
                elif entries[ref] != value:
                    return None
            else:
                entries[ref] = value
    return Embedding(guest, entries)


_EMPTY_VIEW = HostView()


# -- atoms ---------------------------------------------------------------------


def is_atom(phi: Embedding) -> bool:
    if len(phi) != 1:
        return False
    [(ref, value)] = phi.items()
    if ref[0] in SET_KINDS:
        return len(value) <= 1
    return True


def atoms_of(phi: Embedding):
    """The base of phi: minimal pieces whose join recovers it."""
    out = set()
    for ref, value in phi.items():
        if ref[0] in SET_KINDS:
            if not value:
                out.add(Embedding(phi.guest, {ref: frozenset()}))
            for w in value:
                out.add(Embedding(phi.guest, {ref: frozenset([w])}))
        else:
            out.add(Embedding(phi.guest, {ref: value}))
    return out


def empty_atoms(guest):
    """The host-independent defined-empty atoms, one per site/inner name."""
    out = []
    for s in guest.sites():
        out.append(Embedding(guest, {("site", s): frozenset()}))
    for x in sorted(guest.inner_names):
        out.append(Embedding(guest, {("inner", x): frozenset()}))
    return out


# -- pair checks ---------------------------------------------------------------


def atom_ok(alpha: Embedding, view: HostView) -> bool:
    """Per-atom conditions LGE-3, LGE-6, PGE-3, PGE-7."""
    violated, unknown = evaluate(alpha, view, PER_ATOM_LABELS)
    if violated:
        return False
    if unknown:
        raise InsufficientView(sorted(unknown))
    return True


def locally_check_edge(alpha: Embedding, beta: Embedding, view: HostView) -> bool:
    """Pairwise locally-checkable conditions on the candidate alpha ⊔ beta,
    plus the per-atom conditions of both atoms."""
    entries = join_entries(alpha, beta)
    if entries is None:
        return False
    cand = Embedding(alpha.guest, entries)
    violated, unknown = evaluate(cand, view, LOCAL_PAIR_LABELS)
    if violated:
        return False
    if not atom_ok(alpha, view) or not atom_ok(beta, view):
        return False
    if unknown:
        raise InsufficientView(sorted(unknown))
    return True


def ancestor_check_edge(alpha: Embedding, beta: Embedding, view: HostView) -> bool:
    """Pairwise ancestor-checkable conditions.

    PGE-5 is refutable from one root atom and one site atom given parent
    chains.  BGE-1 cannot be refuted by a pair (another site of a larger
    candidate may cover the inner point), so it is deferred to the finished
    candidate and a pair never fails it here.
    """
    entries = join_entries(alpha, beta)
    if entries is None:
        return False
    kinds = {next(iter(alpha.keys()))[0], next(iter(beta.keys()))[0]}
    if kinds != {"root", "site"}:
        return True
    cand = Embedding(alpha.guest, entries)
    violated, unknown = evaluate(cand, view, {"PGE-5"})
    if violated:
        return False
    if unknown:
        raise InsufficientView(sorted(unknown))
    return True


def check_edge(alpha, beta, view) -> bool:
    """Full pair gate used when growing an atom graph."""
    return locally_check_edge(alpha, beta, view) \
        and ancestor_check_edge(alpha, beta, view)


def final_check(rho: Embedding, view: HostView) -> bool:
    """The coverage conditions LGE-5b and PGE-6b on a finished candidate."""
    violated, unknown = evaluate(rho, view, FINAL_LABELS)
    if violated:
        return False
    if unknown:
        raise InsufficientView(sorted(unknown))
    return True


def ancestor_check_candidate(rho: Embedding, view: HostView) -> bool:
    """PGE-5 and BGE-1 over a finished candidate with full site images."""
    violated, unknown = evaluate(rho, view, ANCESTOR_LABELS)
    if violated:
        return False
    if unknown:
        raise InsufficientView(sorted(unknown))
    return True


def links_defined(rho: Embedding, view: HostView) -> bool:
    """Strict LGE-7 on a finished candidate: every matched point's handle
    image must be defined and agree with the host wiring."""
    violated, unknown = evaluate(rho, view, {"LGE-7"}, total=True)
    if violated:
        return False
    if unknown:
        raise InsufficientView(sorted(unknown))
    return True


def accept_candidate(rho: Embedding, view: HostView) -> bool:
    """The complete finishing gate on a covering candidate whose pairs all
    hold: coverage, ancestor conditions, and link completeness."""
    return (final_check(rho, view)
            and ancestor_check_candidate(rho, view)
            and links_defined(rho, view))


# -- atom graphs -----------------------------------------------------------------


def _pair(a, b):
    return frozenset((a, b))


class AtomGraph:
    """Irreflexive undirected graph over atoms; edges are checked joins."""

    __slots__ = ("atoms", "edges", "_adj")

    def __init__(self, atoms=(), edges=()):
        self.atoms = frozenset(atoms)
        kept = set()
        for e in edges:
            e = frozenset(e)
            if len(e) == 2 and e <= self.atoms:
                kept.add(e)
        self.edges = frozenset(kept)
        self._adj = None

    def __eq__(self, other):
        return (isinstance(other, AtomGraph) and self.atoms == other.atoms
                and self.edges == other.edges)

    def __repr__(self):
        return f"<AtomGraph {len(self.atoms)}a {len(self.edges)}e>"

    def adjacency(self):
        if self._adj is None:
            adj = {a: set() for a in self.atoms}
            for e in self.edges:
                a, b = tuple(e)
                adj[a].add(b)
                adj[b].add(a)
            self._adj = adj
        return self._adj

    def has_edge(self, a, b):
        return _pair(a, b) in self.edges

    def union(self, atoms=(), edges=()):
        return AtomGraph(self.atoms | set(atoms), set(self.edges) | set(edges))

    def minus(self, atoms=(), edges=()):
        drop_atoms = set(atoms)
        drop_edges = {frozenset(e) for e in edges}
        return AtomGraph(self.atoms - drop_atoms, self.edges - drop_edges)

    def induced(self, atoms):
        atoms = set(atoms) & self.atoms
        return AtomGraph(atoms, {e for e in self.edges if e <= atoms})

    def sorted_atoms(self):
        return sorted(self.atoms, key=lambda a: a.sort_key())

    def sorted_edges(self):
        return sorted((sorted(e, key=lambda a: a.sort_key()) for e in self.edges),
                      key=lambda pair: (pair[0].sort_key(), pair[1].sort_key()))

    # wire encoding: atom array as (guest tag, host tag) pairs, edges as
    # index pairs into it
    def to_wire(self):
        atoms = self.sorted_atoms()
        index = {a: i for i, a in enumerate(atoms)}
        return {
            "atoms": [_atom_wire(a) for a in atoms],
            "edges": sorted(sorted((index[a], index[b]))
                            for a, b in (tuple(e) for e in self.edges)),
        }

    @classmethod
    def from_wire(cls, guest, data):
        atoms = [_atom_unwire(guest, entry) for entry in data["atoms"]]
        edges = [frozenset((atoms[i], atoms[j])) for i, j in data["edges"]]
        return cls(atoms, edges)

    def wire_size(self):
        return len(json.dumps(self.to_wire(), sort_keys=True))


def _ref_wire(ref):
    if ref[0] == "port":
        return ["port", ref[1][0], ref[1][1]]
    return [ref[0], ref[1]]


def _ref_unwire(data):
    if data[0] == "port":
        return ("port", (data[1], int(data[2])))
    if data[0] in ("site", "root"):
        return (data[0], int(data[1]))
    return (data[0], data[1])


def _atom_wire(atom):
    [(ref, value)] = atom.items()
    if ref[0] in SET_KINDS:
        host = "∅" if not value else _ref_wire(next(iter(value)))
    else:
        host = _ref_wire(value)
    return [_ref_wire(ref), host]


def _atom_unwire(guest, data):
    ref = _ref_unwire(data[0])
    if ref[0] in SET_KINDS:
        value = frozenset() if data[1] == "∅" \
            else frozenset([_ref_unwire(data[1])])
    else:
        value = _ref_unwire(data[1])
    return Embedding(guest, {ref: value})


# -- candidates ------------------------------------------------------------------


def covering_keys(guest: Bigraph):
    """Guest components a candidate must cover (outer names are derived)."""
    return ([("node", n) for n in guest.sorted_nodes()]
            + [("edge", e) for e in guest.sorted_edges()]
            + [("site", s) for s in guest.sites()]
            + [("root", r) for r in guest.roots()]
            + [("inner", x) for x in sorted(guest.inner_names)])


def pointed_outer_names(guest: Bigraph):
    return [y for y in sorted(guest.outer_names)
            if guest.handle_points(("outer", y))]


def candidates(gamma: AtomGraph, guest: Bigraph, seeds=None):
    """Joins of the cliques of gamma whose atoms cover the guest.

    Set-valued components may contribute several atoms to one clique
    (image elements accumulate); outer-name atoms are optional extras.
    seeds, when given, is a pair (atoms, edges): only candidates using a
    seed atom or both ends of a seed edge are produced.
    """
    by_key = {}
    for a in gamma.atoms:
        [(ref, value)] = a.items()
        by_key.setdefault(ref, []).append(a)
    for opts in by_key.values():
        opts.sort(key=lambda a: a.sort_key())

    required = covering_keys(guest)
    if any(k not in by_key for k in required):
        return []
    optional = [("outer", y) for y in pointed_outer_names(guest)
                if ("outer", y) in by_key]
    order = sorted(required, key=lambda k: (len(by_key[k]), ref_key(k)))

    adj = gamma.adjacency()
    results = []
    seed_atoms = seed_pairs = None
    if seeds is not None:
        seed_atoms, seed_pairs = set(seeds[0]), {frozenset(e) for e in seeds[1]}

    def uses_seed(chosen):
        if seed_atoms is None:
            return True
        picked = set(chosen)
        if picked & seed_atoms:
            return True
        return any(e <= picked for e in seed_pairs)

    def compatible(atom, chosen):
        return all(atom in adj[c] for c in chosen)

    def rec(i, chosen):
        if i == len(order):
            rec_optional(0, chosen)
            return
        key = order[i]
        opts = by_key[key]
        if key[0] in SET_KINDS:
            empties = [a for a in opts if not a.value(key)]
            elems = [a for a in opts if a.value(key)]
            for a in empties:
                if compatible(a, chosen):
                    rec(i + 1, chosen + [a])
            # nonempty subsets of element atoms, pairwise compatible
            def subsets(j, picked):
                if j == len(elems):
                    if picked:
                        rec(i + 1, chosen + picked)
                    return
                subsets(j + 1, picked)
                a = elems[j]
                if compatible(a, chosen) and compatible(a, picked):
                    subsets(j + 1, picked + [a])
            subsets(0, [])
        else:
            for a in opts:
                if compatible(a, chosen):
                    rec(i + 1, chosen + [a])

    def rec_optional(i, chosen):
        if i == len(optional):
            if uses_seed(chosen):
                cand = join_all(chosen, guest)
                if cand is not None:
                    results.append(cand)
            return
        rec_optional(i + 1, chosen)
        for a in by_key[optional[i]]:
            if compatible(a, chosen):
                rec_optional(i + 1, chosen + [a])

    rec(0, [])
    uniq = {c.sort_key(): c for c in results}
    return [uniq[k] for k in sorted(uniq)]


# -- isomorphism quotient -----------------------------------------------------


def component_orbits(b: Bigraph):
    """Orbit representative per component under the automorphisms of b."""
    orbit = {ref: {ref} for ref in b.components()}
    for p in b.all_ports():
        orbit[p] = {p}
    for sv, se in all_isos(b, b):
        for n, m in sv.items():
            orbit[("node", n)].add(("node", m))
            for i in range(b.ctrl[n].arity):
                orbit[("port", (n, i))].add(("port", (m, i)))
        for e, d in se.items():
            orbit[("edge", e)].add(("edge", d))
    return {ref: min(group, key=ref_key) for ref, group in orbit.items()}


class QuotientedAtomGraph:
    """Atom graph compressed by the interchangeability relation.

    A class groups atoms on the same guest component whose host images are
    isomorphic (when orbits are known) and whose join-compatibility with
    every third atom of the batch is identical, so edges collapse to
    class-level all-or-nothing links.  Members are carried, which keeps the
    compression lossless; multiplicities are their counts.
    """

    def __init__(self, classes, class_edges, self_edges, guest):
        self.classes = classes            # list of sorted atom lists
        self.class_edges = frozenset(class_edges)   # (i, j) with i < j
        self.self_edges = frozenset(self_edges)     # {i}: in-class pairs joined
        self.guest = guest

    def multiplicities(self):
        return [len(c) for c in self.classes]

    def expand(self) -> AtomGraph:
        atoms = [a for cls in self.classes for a in cls]
        edges = set()
        for i, j in self.class_edges:
            for a in self.classes[i]:
                for b in self.classes[j]:
                    edges.add(_pair(a, b))
        for i in self.self_edges:
            for a, b in combinations(self.classes[i], 2):
                edges.add(_pair(a, b))
        return AtomGraph(atoms, edges)

    def to_wire(self):
        return {
            "classes": [[_atom_wire(a) for a in cls] for cls in self.classes],
            "mult": self.multiplicities(),
            "class_edges": sorted(list(e) for e in self.class_edges),
            "self_edges": sorted(self.self_edges),
        }

    @classmethod
    def from_wire(cls, guest, data):
        classes = [[_atom_unwire(guest, a) for a in c] for c in data["classes"]]
        return cls(classes, {tuple(e) for e in data["class_edges"]},
                   set(data["self_edges"]), guest)

    def wire_size(self):
        return len(json.dumps(self.to_wire(), sort_keys=True))


def quotient(gamma: AtomGraph, guest: Bigraph, host: Bigraph = None):
    """Compress gamma by merging interchangeable atoms.

    With host given, the image side of the relation uses exact automorphism
    orbits; without it (per-message use) only the batch-level compatibility
    profile and the guest component are compared.
    """
    host_orbit = component_orbits(host) if host is not None else None
    adj = gamma.adjacency()

    def group_key(atom):
        [(ref, value)] = atom.items()
        if ref[0] in SET_KINDS:
            img = next(iter(value), None)
        else:
            img = value
        if img is None:
            hkey = ("∅",)
        elif host_orbit is not None and img in host_orbit:
            hkey = ("orbit", host_orbit[img])
        elif host_orbit is not None:
            hkey = ("exact", img)
        else:
            hkey = ("kind", img[0])
        return (ref, hkey)

    prelim = {}
    for a in gamma.sorted_atoms():
        prelim.setdefault(group_key(a), []).append(a)

    classes = []
    for _key, group in sorted(prelim.items(),
                              key=lambda kv: kv[1][0].sort_key()):
        # refine: identical compatibility with every third atom
        rest = list(group)
        while rest:
            seed = rest.pop(0)
            cls = [seed]
            keep = []
            for b in rest:
                if (adj[seed] - {b}) == (adj[b] - {seed}):
                    cls.append(b)
                else:
                    keep.append(b)
            rest = keep
            classes.append(cls)

    index = {a: i for i, cls in enumerate(classes) for a in cls}
    class_edges = set()
    self_edges = set()
    for e in gamma.edges:
        a, b = tuple(e)
        i, j = index[a], index[b]
        if i == j:
            self_edges.add(i)
        else:
            class_edges.add((min(i, j), max(i, j)))
    q = QuotientedAtomGraph(classes, class_edges, self_edges, guest)
    # classes must reproduce the original graph exactly; fall back to
    # singletons when the grouping was too coarse
    if q.expand() != gamma:
        singleton = [[a] for a in gamma.sorted_atoms()]
        index = {a: i for i, cls in enumerate(singleton) for a in cls}
        class_edges = {(min(index[a], index[b]), max(index[a], index[b]))
                       for a, b in (tuple(e) for e in gamma.edges)}
        q = QuotientedAtomGraph(singleton, class_edges, set(), guest)
    return q
