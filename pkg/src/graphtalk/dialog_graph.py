"""Token-level dialogue graphs: sequential + dependency edges, directional views.

A dialogue history is a token sequence augmented with two edge families:
adjacency edges (``next`` left-to-right, ``pre`` right-to-left) between
every consecutive pair, and mirrored dependency edges supplied by the
corpus (``dep:<label>`` head->dependent, ``dep_inv:<label>`` the
reverse). The graph is then split into a forward view (edges pointing
right) and a backward view (edges pointing left), each exposing per
position the ordered list of predecessor positions the recurrent cell
consumes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import DataError

VIRTUAL = -1  # predecessor slot backed by the all-zero hidden state

__all__ = [
    "VIRTUAL",
    "TokenSeq",
    "DepEdge",
    "DialogueGraph",
    "DirectionalView",
    "PaddedPredecessors",
    "build_graph",
    "split_directional",
    "pad_predecessors",
    "edge_distance_distribution",
]


@dataclass(frozen=True)
class DepEdge:
    """One dependency relation between token positions (head -> dependent)."""

    head: int
    dependent: int
    label: str


@dataclass
class TokenSeq:
    """Tokens of a dialogue history with per-token speaker/turn annotation."""

    tokens: list[str]
    speakers: list[str] = field(default_factory=list)
    turns: list[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.tokens:
            raise DataError("token sequence must be non-empty")
        if not self.speakers:
            self.speakers = ["user"] * len(self.tokens)
        if not self.turns:
            self.turns = [0] * len(self.tokens)
        if len(self.speakers) != len(self.tokens) or len(self.turns) != len(self.tokens):
            raise DataError("speaker/turn annotations must cover every token")

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass
class DialogueGraph:
    """Token sequence plus typed directed edges, one edge per (src, dst) pair.

    ``edges`` maps (src, dst) to the set of type tags that motivated the
    edge; coinciding sequential and dependency edges collapse onto the
    same pair with merged tags.
    """

    tokens: TokenSeq
    edges: dict[tuple[int, int], set[str]]

    def edge_pairs(self) -> list[tuple[int, int]]:
        return sorted(self.edges.keys())


@dataclass
class DirectionalView:
    """Per-position predecessor lists for one traversal direction.

    ``forward`` predecessors satisfy p < t, ``backward`` p > t; lists are
    sorted ascending by source position so downstream computation is
    independent of input edge order.
    """

    direction: str  # "forward" | "backward"
    predecessors: list[list[int]]

    def __len__(self) -> int:
        return len(self.predecessors)


@dataclass
class PaddedPredecessors:
    """Fixed-width predecessor table: slot indices, real/pad mask, real counts.

    Slot value VIRTUAL (-1) denotes the zero-state predecessor granted to
    positions whose predecessor set is empty (sequence boundaries).
    """

    direction: str
    slots: list[list[int]]
    mask: list[list[bool]]
    counts: list[int]
    k_max: int


def build_graph(tokens: TokenSeq, deps: list[DepEdge] | None = None,
                sequential_only: bool = False) -> DialogueGraph:
    """Merge sequential adjacency edges with mirrored dependency edges.

    With ``sequential_only`` the dependency edges are ignored and the
    graph degrades to a plain bidirectional chain.
    """
    n = len(tokens)
    edges: dict[tuple[int, int], set[str]] = {}

    def put(src: int, dst: int, tag: str) -> None:
        edges.setdefault((src, dst), set()).add(tag)

    for i in range(n - 1):
        put(i, i + 1, "next")
        put(i + 1, i, "pre")

    if deps and not sequential_only:
        for k, e in enumerate(deps):
            if e.head == e.dependent:
                raise DataError(f"dependency edge {k} is a self-loop (position {e.head})")
            if not (0 <= e.head < n) or not (0 <= e.dependent < n):
                raise DataError(
                    f"dependency edge {k} out of range: ({e.head}, {e.dependent}) for {n} tokens"
                )
            put(e.head, e.dependent, f"dep:{e.label}")
            put(e.dependent, e.head, f"dep_inv:{e.label}")

    return DialogueGraph(tokens=tokens, edges=edges)


def split_directional(g: DialogueGraph) -> tuple[DirectionalView, DirectionalView]:
    """Split into forward (src < dst) and backward (src > dst) views."""
    n = len(g.tokens)
    fwd: list[list[int]] = [[] for _ in range(n)]
    bwd: list[list[int]] = [[] for _ in range(n)]
    for (src, dst) in g.edges:
        if src < dst:
            fwd[dst].append(src)
        elif src > dst:
            bwd[dst].append(src)
    for lst in fwd:
        lst.sort()
    for lst in bwd:
        lst.sort()
    return (DirectionalView("forward", fwd), DirectionalView("backward", bwd))


def pad_predecessors(view: DirectionalView, k_max: int) -> PaddedPredecessors:
    """Fixed-width predecessor table with a real/pad mask.

    Overfull positions keep the ``k_max`` predecessors nearest in
    position (local context dominates); boundary positions with no
    predecessor get a single zero-state VIRTUAL slot marked real. Kept
    slots are re-sorted by position, so any permutation of the incoming
    lists yields an identical table.
    """
    if k_max < 1:
        raise DataError("k_max must be >= 1")
    slots: list[list[int]] = []
    mask: list[list[bool]] = []
    counts: list[int] = []
    for t, preds in enumerate(view.predecessors):
        kept = sorted(preds)
        if len(kept) > k_max:
            kept = sorted(sorted(kept, key=lambda p: (abs(t - p), p))[:k_max])
        if not kept:
            kept = [VIRTUAL]
        k = len(kept)
        row = kept + [VIRTUAL] * (k_max - k)
        row_mask = [True] * k + [False] * (k_max - k)
        slots.append(row)
        mask.append(row_mask)
        counts.append(k)
    return PaddedPredecessors(direction=view.direction, slots=slots, mask=mask,
                              counts=counts, k_max=k_max)


def edge_distance_distribution(graphs: list[DialogueGraph]) -> dict[str, float]:
    """Percentage of edges per path-distance bucket over a corpus.

    The distance of an edge between positions i and j is ``|i - j|``;
    mirrored edge pairs are counted once (per undirected position pair).
    Buckets are disjoint and cover all distances, so the percentages sum
    to 100.
    """
    if not graphs:
        raise DataError("edge distance distribution needs a non-empty corpus")
    buckets = {"1": 0, "2-9": 0, "10-14": 0, "15+": 0}
    total = 0
    for g in graphs:
        pairs = {(min(s, d), max(s, d)) for (s, d) in g.edges}
        for (i, j) in pairs:
            dist = j - i
            if dist == 1:
                buckets["1"] += 1
            elif dist <= 9:
                buckets["2-9"] += 1
            elif dist <= 14:
                buckets["10-14"] += 1
            else:
                buckets["15+"] += 1
            total += 1
    if total == 0:
        raise DataError("corpus contains no edges")
    return {k: 100.0 * v / total for k, v in buckets.items()}
