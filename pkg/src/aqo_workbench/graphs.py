"""Graphs, independent sets, the MIS cost function and the hard-instance generator.

Node sets are plain Python ints used as bitmasks: bit ``i`` set means node
``i`` is in the set (``x_i = 1``).  Helpers below convert to and from index
lists.
"""

from __future__ import annotations

import itertools
import json
import logging
import time
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

from .errors import GenerationError, InputError, SizeError
from .rng import make_rng

log = logging.getLogger(__name__)

INSTANCE_FORMAT_VERSION = 1
DEFAULT_ENUMERATION_CAP = 40
DEFAULT_C = 2.0

# (n, e_initial, m) presets for generate_hard_instance
FULL_SCALE_PRESET = (64, 220, 20)
DESK_PRESET = (16, 24, 5)


def mask_of(nodes: Iterable[int]) -> int:
    mask = 0
    for v in nodes:
        mask |= 1 << int(v)
    return mask


def nodes_of(mask: int) -> list[int]:
    out = []
    i = 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


def popcount(mask: int) -> int:
    return bin(mask).count("1")


@dataclass(frozen=True)
class Graph:
    """Simple undirected graph on nodes ``0..n-1``.

    ``edges`` is normalised to a sorted tuple of ``(i, j)`` with ``i < j``.
    """

    n: int
    edges: tuple[tuple[int, int], ...] = ()
    adjacency: tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 1:
            raise InputError(f"graph needs at least one node, got n={self.n}")
        norm = set()
        for a, b in self.edges:
            a, b = int(a), int(b)
            if a == b:
                raise InputError(f"self-loop on node {a}")
            if not (0 <= a < self.n and 0 <= b < self.n):
                raise InputError(f"edge ({a}, {b}) outside node range [0, {self.n})")
            e = (a, b) if a < b else (b, a)
            if e in norm:
                raise InputError(f"duplicate edge {e}")
            norm.add(e)
        edges = tuple(sorted(norm))
        adj = [0] * self.n
        for a, b in edges:
            adj[a] |= 1 << b
            adj[b] |= 1 << a
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "adjacency", tuple(adj))

    @classmethod
    def complete(cls, n: int) -> "Graph":
        return cls(n, tuple(itertools.combinations(range(n), 2)))

    @classmethod
    def path(cls, n: int) -> "Graph":
        return cls(n, tuple((i, i + 1) for i in range(n - 1)))

    def degree(self, i: int) -> int:
        return popcount(self.adjacency[i])

    @property
    def full_mask(self) -> int:
        return (1 << self.n) - 1


@dataclass(frozen=True)
class ProblemInstance:
    graph: Graph
    c: float = DEFAULT_C
    known_mis: int | None = None
    seed: int | None = None
    generator_params: tuple[int, int, int] | None = None

    def __post_init__(self):
        if not self.c > 1:
            raise InputError(f"penalty constant c must exceed 1, got {self.c}")
        if self.known_mis is not None:
            _check_range(self.graph, self.known_mis)
            if not is_independent(self.graph, self.known_mis):
                raise InputError("known_mis is not an independent set of the graph")

    @property
    def n(self) -> int:
        return self.graph.n

    def to_json(self) -> str:
        doc = {
            "version": INSTANCE_FORMAT_VERSION,
            "n": self.graph.n,
            "edges": [list(e) for e in self.graph.edges],
            "c": self.c,
            "known_mis": None if self.known_mis is None else nodes_of(self.known_mis),
            "seed": self.seed,
            "generator_params": None if self.generator_params is None else list(self.generator_params),
        }
        return json.dumps(doc, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ProblemInstance":
        try:
            doc = json.loads(text)
            version = doc.get("version", INSTANCE_FORMAT_VERSION)
            if version != INSTANCE_FORMAT_VERSION:
                raise InputError(f"unsupported instance format version {version}")
            graph = Graph(int(doc["n"]), tuple(tuple(e) for e in doc["edges"]))
            mis = doc.get("known_mis")
            params = doc.get("generator_params")
            return cls(
                graph=graph,
                c=float(doc.get("c", DEFAULT_C)),
                known_mis=None if mis is None else mask_of(mis),
                seed=doc.get("seed"),
                generator_params=None if params is None else tuple(int(p) for p in params),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InputError):
                raise
            raise InputError(f"malformed instance document: {exc}") from exc


def _check_range(g: Graph, s: int) -> None:
    if s < 0 or s >> g.n:
        raise InputError(f"node set {s:#x} has bits outside [0, {g.n})")


def is_independent(g: Graph, s: int) -> bool:
    _check_range(g, s)
    rest = s
    while rest:
        low = rest & -rest
        i = low.bit_length() - 1
        if g.adjacency[i] & s:
            return False
        rest ^= low
    return True


def is_maximal_independent(g: Graph, s: int) -> bool:
    if not is_independent(g, s):
        return False
    covered = s
    for i in nodes_of(s):
        covered |= g.adjacency[i]
    return covered == g.full_mask


def internal_edges(g: Graph, s: int) -> int:
    count = 0
    for i in nodes_of(s):
        count += popcount(g.adjacency[i] & s)
    return count // 2


def cost(inst: ProblemInstance, s: int) -> float:
    """MIS cost ``-|s| + c * (edges inside s)``; local minima are maximal independent sets."""
    _check_range(inst.graph, s)
    return -popcount(s) + inst.c * internal_edges(inst.graph, s)


def enumerate_maximal_sets(g: Graph, min_size: int = 0, cap: int = DEFAULT_ENUMERATION_CAP) -> list[int]:
    """All maximal independent sets with at least ``min_size`` nodes, sorted by bitmask.

    Bron-Kerbosch with pivoting on the complement graph, carried out on
    bitmasks.  Branches that cannot reach ``min_size`` are pruned.
    """
    if g.n > cap:
        raise SizeError(f"exhaustive enumeration refused for n={g.n} > cap {cap}", "enumeration_cap")
    full = g.full_mask
    # neighbours in the complement graph
    non_adj = [full & ~g.adjacency[i] & ~(1 << i) for i in range(g.n)]
    found: list[int] = []

    def expand(r: int, r_size: int, p: int, x: int) -> None:
        if p == 0 and x == 0:
            if r_size >= min_size:
                found.append(r)
            return
        if r_size + popcount(p) < min_size:
            return
        px = p | x
        pivot = max(nodes_of(px), key=lambda u: popcount(p & non_adj[u]))
        cand = p & ~non_adj[pivot]
        while cand:
            low = cand & -cand
            v = low.bit_length() - 1
            expand(r | low, r_size + 1, p & non_adj[v], x & non_adj[v])
            p &= ~low
            x |= low
            cand ^= low

    expand(0, 0, full, 0)
    found.sort()
    return found


class IndependentSetSearch:
    """Resumable depth-first search for independent sets of one exact size.

    Nodes are visited in ascending order and the include branch is explored
    before the exclude branch, so the sequence of sets is deterministic.  The
    adjacency list is read live: callers may add edges between calls to
    :meth:`next_set` and the search continues where it stopped, skipping any
    set that has become dependent.
    """

    def __init__(self, adjacency: list[int], n: int, target_size: int):
        self.adjacency = adjacency
        self.n = n
        self.target_size = target_size
        self.token: int | None = None
        self._it = self._walk(0, 0, 0)

    def _independent(self, s: int) -> bool:
        rest = s
        while rest:
            low = rest & -rest
            if self.adjacency[low.bit_length() - 1] & s:
                return False
            rest ^= low
        return True

    def _walk(self, v: int, mask: int, size: int) -> Iterator[int]:
        if size == self.target_size:
            if self._independent(mask):
                yield mask
            return
        if self.n - v < self.target_size - size:
            return
        if not (self.adjacency[v] & mask):
            yield from self._walk(v + 1, mask | (1 << v), size + 1)
        yield from self._walk(v + 1, mask, size)

    def __iter__(self):
        return self

    def __next__(self) -> int:
        s = next(self._it)
        self.token = s
        return s

    def next_set(self, exclude: Sequence[int] = ()) -> int | None:
        for s in self:
            if s not in exclude:
                return s
        return None


def find_independent_set_dfs(
    g: Graph, target_size: int, exclude: Sequence[int] = (), after: int | None = None
) -> int | None:
    """First independent set of exactly ``target_size`` nodes not in ``exclude``.

    ``after`` is a continuation token (a set returned by an earlier call); the
    search resumes strictly after it in depth-first order.
    """
    if target_size > g.n:
        raise InputError(f"target size {target_size} exceeds n={g.n}")
    search = IndependentSetSearch(list(g.adjacency), g.n, target_size)
    if after is not None:
        for s in search:
            if s == after:
                break
        else:
            return None
    return search.next_set(exclude)


def random_graph(n: int, e: int, rng) -> Graph:
    pairs = list(itertools.combinations(range(n), 2))
    if e > len(pairs):
        raise InputError(f"cannot place {e} edges on {n} nodes")
    picks = sorted(int(k) for k in rng.choice(len(pairs), size=e, replace=False))
    return Graph(n, tuple(pairs[k] for k in picks))


def generate_hard_instance(
    n: int,
    e_initial: int,
    m: int,
    seed: int,
    c: float = DEFAULT_C,
    time_budget: float | None = None,
) -> ProblemInstance:
    """Build a graph with a unique maximum independent set of size ``m``.

    1. place ``e_initial`` uniformly random edges;
    2. depth-first search for an independent set ``M`` of size ``m``;
    3. tie every node outside ``M`` with no neighbour in ``M`` to a random member of ``M``;
    4. continue the search to another size-``m`` set, drop one node outside ``M`` to get ``M'``;
    5. tie every node with no neighbour in ``M'`` to ``M'`` (to ``M' minus M`` for nodes of ``M``);
    6. repeat 4-5 until the search is exhausted.

    Raises :class:`GenerationError` when step 2 finds nothing or the wall-clock
    ``time_budget`` (seconds) runs out.
    """
    if m > n:
        raise InputError(f"MIS size m={m} exceeds n={n}")
    if e_initial > n * (n - 1) // 2:
        raise InputError(f"e_initial={e_initial} exceeds n(n-1)/2")
    start = time.monotonic()
    rng = make_rng(seed)
    base = random_graph(n, e_initial, rng)
    adj = list(base.adjacency)
    edges = set(base.edges)

    def add_edge(a: int, b: int) -> None:
        adj[a] |= 1 << b
        adj[b] |= 1 << a
        edges.add((min(a, b), max(a, b)))

    def pick(mask: int) -> int:
        members = nodes_of(mask)
        return members[int(rng.integers(len(members)))]

    search = IndependentSetSearch(adj, n, m)
    mis = search.next_set()
    if mis is None:
        raise GenerationError(f"no independent set of size {m} in the initial graph (seed={seed})")

    for i in range(n):
        if not (mis >> i) & 1 and not (adj[i] & mis):
            add_edge(i, pick(mis))

    while True:
        if time_budget is not None and time.monotonic() - start > time_budget:
            raise GenerationError(f"generation exceeded time budget of {time_budget}s (seed={seed})")
        other = search.next_set(exclude=(mis,))
        if other is None:
            break
        drop = pick(other & ~mis)
        reduced = other & ~(1 << drop)
        outside_mis = reduced & ~mis
        for i in range(n):
            if (reduced >> i) & 1 or adj[i] & reduced:
                continue
            if not (mis >> i) & 1:
                add_edge(i, pick(reduced))
            elif outside_mis:
                add_edge(i, pick(outside_mis))
            # else reduced is a strict subset of mis: i would only restore mis itself

    graph = Graph(n, tuple(sorted(edges)))
    return ProblemInstance(graph=graph, c=c, known_mis=mis, seed=seed, generator_params=(n, e_initial, m))


@dataclass
class MinimaCensus:
    by_size: dict[int, int]
    clusters: dict[int, list[list[int]]]
    mis_unique: bool
    mis_size: int

    def multi_member_clusters(self, size: int) -> list[list[int]]:
        return [cl for cl in self.clusters.get(size, []) if len(cl) >= 2]

    def to_dict(self) -> dict:
        return {
            "by_size": {str(k): v for k, v in sorted(self.by_size.items())},
            "cluster_sizes": {str(k): sorted((len(cl) for cl in v), reverse=True) for k, v in sorted(self.clusters.items())},
            "mis_unique": self.mis_unique,
            "mis_size": self.mis_size,
        }


def census(inst: ProblemInstance, sizes: Sequence[int] | None = None, cap: int = DEFAULT_ENUMERATION_CAP) -> MinimaCensus:
    """Count maximal independent sets by size and group each size into 2-flip clusters."""
    from .perturbation import two_flip_components

    all_sets = enumerate_maximal_sets(inst.graph, 0, cap=cap)
    by_size_all: dict[int, list[int]] = {}
    for s in all_sets:
        by_size_all.setdefault(popcount(s), []).append(s)
    top = max(by_size_all)
    if sizes is None:
        sizes = sorted(by_size_all)
    by_size = {k: len(by_size_all.get(k, [])) for k in sizes}
    clusters = {k: two_flip_components(by_size_all.get(k, [])) for k in sizes}
    return MinimaCensus(by_size=by_size, clusters=clusters, mis_unique=len(by_size_all[top]) == 1, mis_size=top)
