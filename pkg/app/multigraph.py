"""Half-edge multigraph templates and the matching/pairing calculus.

A template is a multigraph on nodes ``0..r-1`` in which node 0 (v1) and node 1
(v2) are distinguished and every other node is non-isolated. Edge ``e`` owns
the two half-edges ``2e`` (at ``edges[e][0]``) and ``2e + 1`` (at
``edges[e][1]``), so the edge partner of half-edge ``h`` is ``h ^ 1``.

Two replicas are compared through a node matching (always containing
``(v1, v1)`` and ``(v2, v2)``) and a half-edge pairing restricted to matched
nodes. ``prune`` merges the replicas and follows the paired half-edges to get
the pruned multigraph and its cycle/open-path bookkeeping.
"""

from __future__ import annotations

import itertools
import logging
import math
from collections import Counter
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator, Sequence

import networkx as nx
from scipy.cluster.hierarchy import DisjointSet

from app.errors import CapacityError, InvalidParamsError

logger = logging.getLogger(__name__)

V1, V2 = 0, 1

MAX_AUT_HALFEDGES = 24
MAX_TEMPLATE_EDGES = 4
MAX_RELABELINGS = 40_320
MAX_MATCHING_STATES = 10_000
MAX_MATCH_PAIR_STATES = 2_000_000

Edge = tuple[int, int]
Matching = tuple[tuple[int, int], ...]
Pairing = tuple[tuple[int, int], ...]


# ---------------------------------------------------------------------------
# Templates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Template:
    num_nodes: int
    edges: tuple[Edge, ...]

    def __post_init__(self) -> None:
        if self.num_nodes < 2:
            raise InvalidParamsError("a template needs the two nodes v1 and v2")
        for u, v in self.edges:
            if not (0 <= u < self.num_nodes and 0 <= v < self.num_nodes):
                raise InvalidParamsError(f"edge ({u}, {v}) outside 0..{self.num_nodes - 1}")
        degree = Counter()
        for u, v in self.edges:
            degree[u] += 1
            degree[v] += 1
        isolated = [v for v in range(2, self.num_nodes) if degree[v] == 0]
        if isolated:
            raise InvalidParamsError(f"interior nodes {isolated} are isolated")

    @classmethod
    def from_edges(cls, num_nodes: int, edges: Sequence[Edge]) -> "Template":
        normalized = tuple(sorted((min(u, v), max(u, v)) for u, v in edges))
        return cls(num_nodes=num_nodes, edges=normalized)

    # -- text format: "nodes r" then one 1-based "u v" line per edge ---------

    @classmethod
    def from_text(cls, text: str) -> "Template":
        num_nodes = None
        edges = []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if parts[0] == "nodes":
                if len(parts) != 2 or num_nodes is not None:
                    raise InvalidParamsError(f"line {lineno}: bad header {raw!r}")
                num_nodes = int(parts[1])
                continue
            if num_nodes is None:
                raise InvalidParamsError("template text must start with 'nodes r'")
            if len(parts) != 2:
                raise InvalidParamsError(f"line {lineno}: expected 'u v', got {raw!r}")
            u, v = (int(p) - 1 for p in parts)
            edges.append((u, v))
        if num_nodes is None:
            raise InvalidParamsError("empty template text")
        return cls.from_edges(num_nodes, edges)

    def to_text(self) -> str:
        lines = [f"nodes {self.num_nodes}"]
        lines += [f"{u + 1} {v + 1}" for u, v in self.edges]
        return "\n".join(lines) + "\n"

    # -- structure -----------------------------------------------------------

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def num_halfedges(self) -> int:
        return 2 * len(self.edges)

    @cached_property
    def half_node(self) -> tuple[int, ...]:
        return tuple(self.edges[h >> 1][h & 1] for h in range(self.num_halfedges))

    @cached_property
    def incident(self) -> tuple[tuple[int, ...], ...]:
        at = [[] for _ in range(self.num_nodes)]
        for h, node in enumerate(self.half_node):
            at[node].append(h)
        return tuple(tuple(hs) for hs in at)

    @cached_property
    def degrees(self) -> tuple[int, ...]:
        return tuple(len(hs) for hs in self.incident)

    @cached_property
    def multiplicities(self) -> Counter:
        return Counter(self.edges)

    def multiplicity(self, u: int, v: int) -> int:
        return self.multiplicities[(min(u, v), max(u, v))]

    def loops(self, v: int) -> int:
        return self.multiplicities[(v, v)]

    @property
    def interior_nodes(self) -> range:
        return range(2, self.num_nodes)

    @cached_property
    def interior_degree2_nodes(self) -> tuple[int, ...]:
        return tuple(v for v in self.interior_nodes if self.degrees[v] == 2)

    @property
    def has_odd_degree(self) -> bool:
        return any(deg % 2 for deg in self.degrees)

    @property
    def is_even(self) -> bool:
        return not self.has_odd_degree

    @cached_property
    def components(self) -> tuple[frozenset[int], ...]:
        """Connected components; an isolated v1 or v2 is its own component."""
        return _components(self.num_nodes, self.edges)

    @property
    def num_components(self) -> int:
        return len(self.components)

    @property
    def is_connected(self) -> bool:
        return self.num_components == 1

    def with_edge(self, u: int = V1, v: int = V2) -> "Template":
        return Template.from_edges(self.num_nodes, self.edges + ((u, v),))

    def relabel(self, mapping: Sequence[int]) -> "Template":
        return Template.from_edges(
            self.num_nodes, [(mapping[u], mapping[v]) for u, v in self.edges]
        )

    def to_networkx(self) -> nx.MultiGraph:
        g = nx.MultiGraph()
        for v in range(self.num_nodes):
            g.add_node(v, role=v if v < 2 else 2)
        g.add_edges_from(self.edges)
        return g

    # -- canonical form ------------------------------------------------------

    def _node_invariant(self, v: int) -> tuple:
        neighbour_degrees = sorted(
            self.degrees[self.half_node[h ^ 1]] for h in self.incident[v]
        )
        return (
            self.degrees[v],
            self.loops(v),
            self.multiplicity(v, V1),
            self.multiplicity(v, V2),
            tuple(neighbour_degrees),
        )

    @cached_property
    def _classes(self) -> tuple[tuple[int, ...], ...]:
        groups: dict[tuple, list[int]] = {}
        for v in self.interior_nodes:
            groups.setdefault(self._node_invariant(v), []).append(v)
        return tuple(tuple(groups[key]) for key in sorted(groups))

    def _relabelings(self) -> Iterator[list[int]]:
        count = math.prod(math.factorial(len(c)) for c in self._classes)
        if count > MAX_RELABELINGS:
            raise CapacityError("template relabelings", count, MAX_RELABELINGS)
        for perms in itertools.product(*(itertools.permutations(c) for c in self._classes)):
            mapping = [0] * self.num_nodes
            mapping[V1], mapping[V2] = V1, V2
            label = 2
            for perm in perms:
                for v in perm:
                    mapping[v] = label
                    label += 1
            yield mapping

    def _encode(self, mapping: Sequence[int]) -> tuple[Edge, ...]:
        return tuple(
            sorted((min(mapping[u], mapping[v]), max(mapping[u], mapping[v])) for u, v in self.edges)
        )

    @cached_property
    def canonical_key(self) -> tuple:
        best = min(self._encode(m) for m in self._relabelings())
        return (self.num_edges, self.num_nodes, best)

    def canonical(self) -> "Template":
        return Template(num_nodes=self.num_nodes, edges=self.canonical_key[2])

    def node_automorphism_count(self) -> int:
        encodings = Counter(self._encode(m) for m in self._relabelings())
        return encodings[self.canonical_key[2]]


def _components(num_nodes: int, edges: Sequence[Edge]) -> tuple[frozenset[int], ...]:
    ds = DisjointSet(range(num_nodes))
    for u, v in edges:
        ds.merge(u, v)
    return tuple(sorted((frozenset(s) for s in ds.subsets()), key=min))


def automorphism_count(t: Template) -> int:
    """Half-edge automorphisms fixing v1 and v2.

    A node automorphism fixes the incidence pattern; on top of it the ``m``
    parallel edges between two nodes can be permuted in ``m!`` ways and ``m``
    self-loops at a node in ``m! 2^m`` ways.
    """
    if t.num_halfedges > MAX_AUT_HALFEDGES:
        raise CapacityError("automorphism search", t.num_halfedges, MAX_AUT_HALFEDGES)
    count = t.node_automorphism_count()
    for (u, v), m in t.multiplicities.items():
        count *= math.factorial(m)
        if u == v:
            count *= 2**m
    return count


def build_gstar(L: int, M: int) -> Template:
    """Double chain with fastener.

    M chains of L doubled edges run between v1 and v2; consecutive chain
    starts and ends are tied to v1/v2 by single fastener edges.
    """
    if L < 1 or M < 1:
        raise InvalidParamsError(f"L and M must be >= 1, got L={L}, M={M}")
    if M % 2 == 0:
        raise InvalidParamsError(f"M must be odd, got {M}")

    def node(k: int) -> int:  # 1-based v_k
        return k - 1

    edges: list[Edge] = []
    edges += [(node(1), node(3))] * 2
    edges += [(node(2), node(L * M + 2))] * 2
    for m in range(M):
        for l in range(1, L):
            edges += [(node(l + m * L + 2), node(l + m * L + 3))] * 2
    for m in range(1, M):
        edges.append((node(m * L + 2), node(m * L + 3)))
        edges.append((node(1), node(m * L + 2)))
        edges.append((node(2), node(m * L + 3)))
    return Template.from_edges(L * M + 2, edges)


def enumerate_templates(max_edges: int, even_only: bool = False) -> list[Template]:
    """One canonical representative per equivalence class with <= max_edges edges."""
    if max_edges > MAX_TEMPLATE_EDGES:
        raise CapacityError("template enumeration edges", max_edges, MAX_TEMPLATE_EDGES)
    edgeless = Template(num_nodes=2, edges=())
    found = {edgeless.canonical_key: edgeless}
    frontier = [edgeless]
    for size in range(1, max_edges + 1):
        level: dict[tuple, Template] = {}
        for t in frontier:
            r = t.num_nodes
            for u, v in itertools.combinations_with_replacement(range(r + 2), 2):
                if v == r + 1 and u != r:
                    continue  # new nodes are introduced in order
                grown = Template.from_edges(max(r, v + 1), t.edges + ((u, v),))
                level.setdefault(grown.canonical_key, grown.canonical())
        logger.debug("templates with %d edges: %d classes", size, len(level))
        found.update(level)
        frontier = list(level.values())
    templates = sorted(found.values(), key=lambda t: t.canonical_key)
    if even_only:
        templates = [t for t in templates if t.is_even]
    return templates


# ---------------------------------------------------------------------------
# Matchings and pairings
# ---------------------------------------------------------------------------


def _partial_injection_count(p: int, q: int) -> int:
    return sum(math.comb(p, k) * math.comb(q, k) * math.factorial(k) for k in range(min(p, q) + 1))


def _partial_injections(left: Sequence[int], right: Sequence[int]) -> Iterator[tuple[tuple[int, int], ...]]:
    for k in range(min(len(left), len(right)) + 1):
        for chosen in itertools.combinations(left, k):
            for image in itertools.permutations(right, k):
                yield tuple(zip(chosen, image))


def enumerate_matchings(t1: Template, t2: Template, star_only: bool = False) -> list[Matching]:
    """Node matchings: v1 and v2 paired, injective, every interior degree-2 node used.

    With ``star_only`` each connected component of both replicas must also
    contain a matched node.
    """
    i1, i2 = list(t1.interior_nodes), list(t2.interior_nodes)
    states = _partial_injection_count(len(i1), len(i2))
    if states > MAX_MATCHING_STATES:
        raise CapacityError("node matchings", states, MAX_MATCHING_STATES)
    need1, need2 = set(t1.interior_degree2_nodes), set(t2.interior_degree2_nodes)
    matchings = []
    for inner in _partial_injections(i1, i2):
        used1 = {a for a, _ in inner}
        used2 = {b for _, b in inner}
        if not (need1 <= used1 and need2 <= used2):
            continue
        if star_only:
            hit1, hit2 = used1 | {V1, V2}, used2 | {V1, V2}
            if any(not (c & hit1) for c in t1.components):
                continue
            if any(not (c & hit2) for c in t2.components):
                continue
        matchings.append(((V1, V1), (V2, V2)) + tuple(sorted(inner)))
    return matchings


def _local_choice_counts(t1: Template, t2: Template, matching: Matching) -> list[int]:
    return [_partial_injection_count(t1.degrees[a], t2.degrees[b]) for a, b in matching]


def count_pairings(t1: Template, t2: Template, matching: Matching) -> int:
    return math.prod(_local_choice_counts(t1, t2, matching))


def iter_pairings(t1: Template, t2: Template, matching: Matching) -> Iterator[Pairing]:
    local = [list(_partial_injections(t1.incident[a], t2.incident[b])) for a, b in matching]
    for combo in itertools.product(*local):
        yield tuple(pair for block in combo for pair in block)


def enumerate_pairings(t1: Template, t2: Template, matching: Matching) -> list[Pairing]:
    """All partial injective pairings of half-edges at matched node pairs."""
    count = count_pairings(t1, t2, matching)
    if count > MAX_MATCH_PAIR_STATES:
        raise CapacityError("half-edge pairings", count, MAX_MATCH_PAIR_STATES)
    return list(iter_pairings(t1, t2, matching))


def count_match_pairs(t1: Template, t2: Template, star_only: bool = False) -> int:
    return sum(count_pairings(t1, t2, m) for m in enumerate_matchings(t1, t2, star_only))


def iter_match_pairs(
    t1: Template,
    t2: Template,
    star_only: bool = False,
    limit: int = MAX_MATCH_PAIR_STATES,
) -> Iterator[tuple[Matching, Pairing, "MatchPair"]]:
    """Yield every (matching, pairing) with its pruned summary, under a state guard."""
    matchings = enumerate_matchings(t1, t2, star_only)
    total = sum(count_pairings(t1, t2, m) for m in matchings)
    if total > limit:
        raise CapacityError("matching/pairing states", total, limit)
    logger.debug("enumerating %d matching/pairing states", total)
    for matching in matchings:
        for pairing in iter_pairings(t1, t2, matching):
            yield matching, pairing, prune(t1, t2, matching, pairing)


def is_full(t1: Template, t2: Template, pairing: Pairing) -> bool:
    return len(pairing) == t1.num_halfedges == t2.num_halfedges


# ---------------------------------------------------------------------------
# Pruned multigraph
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GDeltaSummary:
    V_delta_size: int
    E_delta_size: int
    n_cyc: int
    n_op_even: int
    n_op_odd: int
    n_cc: int
    n_m_full: int
    v1_isolated: bool
    v2_isolated: bool
    v1_sim_v2: bool
    even_degrees: bool


@dataclass(frozen=True)
class MatchPair:
    matching: Matching
    pairing: Pairing
    summary: GDeltaSummary
    edges_delta: tuple[Edge, ...]

    @property
    def matched(self) -> int:
        return len(self.matching)

    @property
    def paired(self) -> int:
        return len(self.pairing)


def merged_node_ids(t1: Template, t2: Template, matching: Matching) -> list[int]:
    """Merged id of each t2 node; t1 nodes keep their own ids."""
    image = {b: a for a, b in matching}
    ids = []
    fresh = t1.num_nodes
    for w in range(t2.num_nodes):
        if w in image:
            ids.append(image[w])
        else:
            ids.append(fresh)
            fresh += 1
    return ids


def prune(t1: Template, t2: Template, matching: Matching, pairing: Pairing) -> MatchPair:
    """Merge the replicas along ``matching`` and prune along ``pairing``.

    Open paths of paired half-edges collapse to one edge between their free
    ends, cycles of paired half-edges disappear, and edges with neither half
    paired are kept as they are.
    """
    offset = t1.num_halfedges
    ids2 = merged_node_ids(t1, t2, matching)
    node_of = list(t1.half_node) + [ids2[w] for w in t2.half_node]
    partner: dict[int, int] = {}
    for h1, h2 in pairing:
        partner[h1] = h2 + offset
        partner[h2 + offset] = h1

    num_half = offset + t2.num_halfedges
    visited = [False] * num_half
    edges_delta: list[Edge] = []
    op_even = op_odd = 0
    for start in range(num_half):
        if visited[start] or start in partner:
            continue
        visited[start] = True
        pairs = 0
        cur = start ^ 1
        while cur in partner:
            visited[cur] = True
            nxt = partner[cur]
            visited[nxt] = True
            pairs += 1
            cur = nxt ^ 1
        visited[cur] = True
        u, v = node_of[start], node_of[cur]
        edges_delta.append((min(u, v), max(u, v)))
        if pairs:
            if pairs % 2:
                op_odd += 1
            else:
                op_even += 1

    cycles = 0
    for start in range(num_half):
        if visited[start]:
            continue
        cycles += 1
        cur = start
        while not visited[cur]:
            visited[cur] = True
            visited[partner[cur]] = True
            cur = partner[cur] ^ 1

    num_nodes = t1.num_nodes + t2.num_nodes - len(matching)
    components = _components(num_nodes, edges_delta)
    degree = Counter()
    for u, v in edges_delta:
        degree[u] += 1
        degree[v] += 1
    paired1 = {h1 for h1, _ in pairing}
    paired2 = {h2 for _, h2 in pairing}
    m_full = sum(
        1
        for a, b in matching
        if all(h in paired1 for h in t1.incident[a]) and all(h in paired2 for h in t2.incident[b])
    )
    sim = any(V1 in c and V2 in c for c in components)
    summary = GDeltaSummary(
        V_delta_size=num_nodes,
        E_delta_size=len(edges_delta),
        n_cyc=cycles,
        n_op_even=op_even,
        n_op_odd=op_odd,
        n_cc=len(components),
        n_m_full=m_full,
        v1_isolated=degree[V1] == 0,
        v2_isolated=degree[V2] == 0,
        v1_sim_v2=sim,
        even_degrees=all(deg % 2 == 0 for deg in degree.values()),
    )
    return MatchPair(
        matching=tuple(matching),
        pairing=tuple(pairing),
        summary=summary,
        edges_delta=tuple(sorted(edges_delta)),
    )


# ---------------------------------------------------------------------------
# Shadows
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Shadow:
    unpaired1: frozenset[int]
    unpaired2: frozenset[int]
    matching: Matching
    pairing: Pairing
    m: int


def _perfect_edges(pairing: Pairing) -> set[tuple[int, int]]:
    """Edge pairs (e1, e2) whose two half-edges are paired with each other."""
    partner = dict(pairing)
    perfect = set()
    for h1, h2 in pairing:
        other = partner.get(h1 ^ 1)
        if other is not None and other == h2 ^ 1:
            perfect.add((h1 >> 1, h2 >> 1))
    return perfect


def shadow_of(t1: Template, t2: Template, matching: Matching, pairing: Pairing) -> Shadow:
    """Remove perfectly paired edges and perfectly matched nodes."""
    perfect = _perfect_edges(pairing)
    gone1 = {e1 for e1, _ in perfect}
    gone2 = {e2 for _, e2 in perfect}
    residual_pairing = tuple(
        (h1, h2) for h1, h2 in pairing if (h1 >> 1) not in gone1 or (h2 >> 1) not in gone2
    )
    residual_matching = tuple(
        (a, b)
        for a, b in matching
        if any((h >> 1) not in gone1 for h in t1.incident[a])
        or any((h >> 1) not in gone2 for h in t2.incident[b])
    )
    paired1 = {h1 for h1, _ in pairing}
    paired2 = {h2 for _, h2 in pairing}
    unpaired1 = frozenset(h for h in range(t1.num_halfedges) if h not in paired1)
    unpaired2 = frozenset(h for h in range(t2.num_halfedges) if h not in paired2)
    m = (t1.num_halfedges - 2 * len(gone1)) + (t2.num_halfedges - 2 * len(gone2))
    return Shadow(
        unpaired1=unpaired1,
        unpaired2=unpaired2,
        matching=residual_matching,
        pairing=residual_pairing,
        m=m,
    )


def minimal_shadow(t1: Template, t2: Template) -> int:
    """Smallest shadow size over all matchings and pairings."""
    best = t1.num_halfedges + t2.num_halfedges
    for matching in enumerate_matchings(t1, t2):
        if count_pairings(t1, t2, matching) > MAX_MATCH_PAIR_STATES:
            raise CapacityError("half-edge pairings", count_pairings(t1, t2, matching), MAX_MATCH_PAIR_STATES)
        for pairing in iter_pairings(t1, t2, matching):
            best = min(best, shadow_of(t1, t2, matching, pairing).m)
            if best == 0:
                return 0
    return best


def perfect_pairings(t: Template) -> list[tuple[Matching, Pairing]]:
    """Matchings/pairings of ``t`` with itself in which every edge is perfectly paired."""
    found = []
    for matching in enumerate_matchings(t, t):
        if len(matching) != t.num_nodes:
            continue
        if any(t.degrees[a] != t.degrees[b] for a, b in matching):
            continue
        for pairing in iter_pairings(t, t, matching):
            if len(pairing) == t.num_halfedges and len(_perfect_edges(pairing)) == t.num_edges:
                found.append((matching, pairing))
    return found


__all__ = [
    "V1",
    "V2",
    "Template",
    "MatchPair",
    "GDeltaSummary",
    "Shadow",
    "automorphism_count",
    "build_gstar",
    "enumerate_templates",
    "enumerate_matchings",
    "enumerate_pairings",
    "count_pairings",
    "count_match_pairs",
    "iter_pairings",
    "iter_match_pairs",
    "is_full",
    "merged_node_ids",
    "prune",
    "shadow_of",
    "minimal_shadow",
    "perfect_pairings",
]
