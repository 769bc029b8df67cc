"""Tree data model for topical taxonomies.

A taxonomy is a forest of concept nodes.  Each node carries a topic
cluster: an ordered list of terms describing the concept, always containing
the node's own name.  A term may belong to at most one cluster anywhere in
the taxonomy.  Multiple roots are allowed internally (root discovery can
surface several common parents); on export they are collapsed under a
reserved virtual root named ``*``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterator, Protocol

import numpy as np

VIRTUAL_ROOT = "*"


class TaxonomyError(ValueError):
    """Raised on structural violations: cycles, duplicates, unknown nodes."""


class EmbeddingView(Protocol):
    """What export needs from an embedding space."""

    def concept_vector(self, name: str) -> np.ndarray | None: ...

    def word_vector(self, term: str) -> np.ndarray | None: ...

    def term_order(self, term: str) -> int: ...


@dataclass
class TaxonomyNode:
    name: str
    cluster: list[str] = field(default_factory=list)
    depth: int = 0

    def __post_init__(self) -> None:
        if not self.cluster:
            self.cluster = [self.name]


class Taxonomy:
    """Single-writer forest; readers may share it between mutations.

    ``strict_clusters`` enforces the construction invariant that a term
    belongs to at most one cluster.  Taxonomies produced elsewhere may
    violate it; load those relaxed for evaluation only.
    """

    def __init__(self, strict_clusters: bool = True) -> None:
        self.strict_clusters = strict_clusters
        self.nodes: dict[str, TaxonomyNode] = {}
        self.parent: dict[str, str | None] = {}
        self.children: dict[str, list[str]] = {}
        self.root_ids: list[str] = []
        self._term_owner: dict[str, str] = {}

    # -- construction ------------------------------------------------------

    def add_root(self, name: str, cluster: list[str] | None = None) -> str:
        self._claim_name(name)
        self._register(name, None, cluster)
        self.root_ids.append(name)
        return name

    def attach(self, parent: str, child_name: str, cluster: list[str] | None = None) -> str:
        """Add a new leaf under ``parent``; the name must be unused."""
        if parent not in self.nodes:
            raise TaxonomyError(f"unknown parent node: {parent!r}")
        self._claim_name(child_name)
        self._register(child_name, parent, cluster)
        self.children[parent].append(child_name)
        return child_name

    def _claim_name(self, name: str) -> None:
        if name in self.nodes:
            raise TaxonomyError(f"duplicate node name: {name!r}")
        owner = self._term_owner.get(name)
        if self.strict_clusters and owner is not None and owner != name:
            raise TaxonomyError(
                f"term {name!r} already belongs to the cluster of {owner!r}"
            )

    def _register(self, name: str, parent: str | None, cluster: list[str] | None) -> None:
        node = TaxonomyNode(name, list(cluster) if cluster else [name])
        if name not in node.cluster:
            node.cluster.insert(0, name)
        node.depth = 0 if parent is None else self.nodes[parent].depth + 1
        for term in node.cluster:
            self._claim_term(term, name)
        self.nodes[name] = node
        self.parent[name] = parent
        self.children[name] = []

    def _claim_term(self, term: str, owner: str) -> None:
        prev = self._term_owner.get(term)
        if prev is not None and prev != owner:
            if self.strict_clusters:
                raise TaxonomyError(
                    f"cluster term {term!r} of {owner!r} already belongs to {prev!r}"
                )
            return  # relaxed mode keeps the first owner
        self._term_owner[term] = owner

    # -- cluster maintenance -------------------------------------------------

    def add_cluster_term(self, name: str, term: str) -> None:
        node = self.node(name)
        if term in node.cluster:
            return
        self._claim_term(term, name)
        node.cluster.append(term)

    def remove_cluster_term(self, name: str, term: str) -> None:
        node = self.node(name)
        if term == name:
            raise TaxonomyError("a node's name cannot leave its own cluster")
        if term in node.cluster:
            node.cluster.remove(term)
            del self._term_owner[term]

    def term_owner(self, term: str) -> str | None:
        return self._term_owner.get(term)

    # -- queries -------------------------------------------------------------

    def node(self, name: str) -> TaxonomyNode:
        try:
            return self.nodes[name]
        except KeyError:
            raise TaxonomyError(f"unknown node: {name!r}") from None

    def siblings(self, name: str) -> list[str]:
        """Nodes sharing this node's parent, including the node itself.

        Roots count as siblings of each other (they share the virtual root).
        """
        parent = self.parent[self.node(name).name]
        return list(self.root_ids) if parent is None else list(self.children[parent])

    def ancestors(self, name: str) -> set[str]:
        self.node(name)
        out: set[str] = set()
        cur = self.parent[name]
        while cur is not None:
            out.add(cur)
            cur = self.parent[cur]
        return out

    def iter_nodes(self) -> Iterator[TaxonomyNode]:
        """Depth-first over roots in insertion order; deterministic."""
        stack = list(reversed(self.root_ids))
        while stack:
            name = stack.pop()
            yield self.nodes[name]
            stack.extend(reversed(self.children[name]))

    def node_names(self) -> list[str]:
        return [n.name for n in self.iter_nodes()]

    def edges(self) -> list[tuple[str, str]]:
        return [
            (parent, child)
            for parent in self.node_names()
            for child in self.children[parent]
        ]

    def depth1_nodes(self) -> list[str]:
        return [n.name for n in self.iter_nodes() if n.depth == 1]

    def ancestor_pairs(self, transitive: bool = True) -> set[tuple[str, str]]:
        """(ancestor, descendant) pairs; direct edges only when not transitive."""
        if not transitive:
            return set(self.edges())
        pairs: set[tuple[str, str]] = set()

        def walk(name: str, ancestors: tuple[str, ...]) -> None:
            for anc in ancestors:
                pairs.add((anc, name))
            for child in self.children[name]:
                walk(child, ancestors + (name,))

        for root in self.root_ids:
            walk(root, ())
        return pairs

    def validate(self) -> None:
        """Assert forest shape and cluster disjointness; raises on violation."""
        seen: set[str] = set()
        for root in self.root_ids:
            stack = [(root, ())]
            while stack:
                name, path = stack.pop()
                if name in path:
                    raise TaxonomyError(f"cycle through {name!r}")
                if name in seen:
                    raise TaxonomyError(f"node {name!r} reachable twice")
                seen.add(name)
                expected_depth = len(path)
                if self.nodes[name].depth != expected_depth:
                    raise TaxonomyError(f"depth mismatch at {name!r}")
                for child in self.children[name]:
                    if self.parent[child] != name:
                        raise TaxonomyError(f"parent mismatch at {child!r}")
                    stack.append((child, path + (name,)))
        if seen != set(self.nodes):
            orphans = set(self.nodes) - seen
            raise TaxonomyError(f"orphan nodes: {sorted(orphans)}")
        owners: dict[str, str] = {}
        for node in self.nodes.values():
            if node.name not in node.cluster:
                raise TaxonomyError(f"node {node.name!r} missing from its cluster")
            if len(set(node.cluster)) != len(node.cluster):
                raise TaxonomyError(f"duplicate cluster terms in {node.name!r}")
            for term in node.cluster:
                if term in owners:
                    raise TaxonomyError(
                        f"cluster term {term!r} shared by {owners[term]!r} and {node.name!r}"
                    )
                owners[term] = node.name


def from_edges(edges: list[tuple[str, str]]) -> Taxonomy:
    """Build a taxonomy from (parent, child) pairs.

    Rejects cycles, children with two parents, and self-loops.
    """
    parents: dict[str, str] = {}
    order: list[str] = []
    for p, c in edges:
        if p == c:
            raise TaxonomyError(f"self-loop at {p!r}")
        if c in parents:
            raise TaxonomyError(f"duplicate node name: {c!r} has two parents")
        parents[c] = p
        for name in (p, c):
            if name not in order:
                order.append(name)
    for name in order:
        seen = {name}
        cur = parents.get(name)
        while cur is not None:
            if cur in seen:
                raise TaxonomyError(f"cycle through {cur!r}")
            seen.add(cur)
            cur = parents.get(cur)
    tax = Taxonomy()
    added: set[str] = set()

    def add(name: str) -> None:
        if name in added:
            return
        parent = parents.get(name)
        if parent is None:
            tax.add_root(name)
        else:
            add(parent)
            tax.attach(parent, name)
        added.add(name)

    for name in order:
        add(name)
    return tax


# -- serialization -----------------------------------------------------------


def _parse_node(obj: dict, tax: Taxonomy, parent: str | None, path: tuple[str, ...]) -> None:
    if not isinstance(obj, dict) or "name" not in obj:
        raise TaxonomyError(f"malformed node under /{'/'.join(path)}")
    name = obj["name"]
    here = path + (name,)
    if name in path:
        raise TaxonomyError(f"cycle through {name!r} at /{'/'.join(here)}")
    cluster = obj.get("cluster") or None
    try:
        if parent is None:
            tax.add_root(name, cluster)
        else:
            tax.attach(parent, name, cluster)
    except TaxonomyError as exc:
        raise TaxonomyError(f"{exc} at /{'/'.join(here)}") from None
    for child in obj.get("children", []):
        _parse_node(child, tax, name, here)


def load_seed(serialized: bytes | str, strict_clusters: bool = True) -> Taxonomy:
    """Parse the JSON tree format: {"name", "cluster"?, "children"?}.

    Seed files may omit clusters (they default to the node name).  A top
    node named ``*`` is the virtual root of a multi-root forest.  Pass
    ``strict_clusters=False`` to admit externally produced taxonomies whose
    clusters overlap (evaluation only).
    """
    if isinstance(serialized, bytes):
        serialized = serialized.decode("utf-8")
    try:
        obj = json.loads(serialized)
    except json.JSONDecodeError as exc:
        raise TaxonomyError(f"taxonomy file is not valid JSON: {exc}") from None
    tax = Taxonomy(strict_clusters=strict_clusters)
    if isinstance(obj, dict) and obj.get("name") == VIRTUAL_ROOT:
        for child in obj.get("children", []):
            _parse_node(child, tax, None, ())
    else:
        _parse_node(obj, tax, None, ())
    if not tax.nodes:
        raise TaxonomyError("taxonomy file holds no nodes")
    return tax


def _ranked_cluster(node: TaxonomyNode, embeddings: EmbeddingView, k: int) -> list[str]:
    cvec = embeddings.concept_vector(node.name)
    if cvec is None:
        raise TaxonomyError(f"no concept embedding for node {node.name!r}")
    cnorm = float(np.linalg.norm(cvec))
    scored = []
    for term in node.cluster:
        wvec = embeddings.word_vector(term)
        if wvec is None:
            raise TaxonomyError(
                f"no word embedding for cluster term {term!r} of node {node.name!r}"
            )
        denom = cnorm * float(np.linalg.norm(wvec))
        cos = float(cvec @ wvec) / denom if denom > 0 else 0.0
        scored.append((-cos, embeddings.term_order(term), term))
    scored.sort()
    return [term for _, _, term in scored[: max(k, 0)]]


def export(tax: Taxonomy, embeddings: EmbeddingView, k: int) -> str:
    """Serialize the taxonomy with each node's top-k cluster terms.

    Terms are ranked by cosine to the node's concept vector (ties broken by
    term order).  The output round-trips through :func:`load_seed` and
    re-exports byte-identically.
    """

    def render(name: str) -> dict:
        node = tax.nodes[name]
        return {
            "name": name,
            "cluster": _ranked_cluster(node, embeddings, k),
            "children": [render(c) for c in tax.children[name]],
        }

    if len(tax.root_ids) == 1:
        tree = render(tax.root_ids[0])
    else:
        tree = {
            "name": VIRTUAL_ROOT,
            "cluster": [],
            "children": [render(r) for r in tax.root_ids],
        }
    return json.dumps(tree, ensure_ascii=False, indent=2) + "\n"


def export_structure(tax: Taxonomy) -> str:
    """Serialize with clusters as stored, no embedding-based ranking.

    Used for intermediate artifacts; loadable by :func:`load_seed`.
    """

    def render(name: str) -> dict:
        node = tax.nodes[name]
        return {
            "name": name,
            "cluster": list(node.cluster),
            "children": [render(c) for c in tax.children[name]],
        }

    if len(tax.root_ids) == 1:
        tree = render(tax.root_ids[0])
    else:
        tree = {
            "name": VIRTUAL_ROOT,
            "cluster": [],
            "children": [render(r) for r in tax.root_ids],
        }
    return json.dumps(tree, ensure_ascii=False, indent=2) + "\n"
