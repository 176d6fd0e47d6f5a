"""Community detection and extractive community summaries.

Detection is synchronous label propagation over the undirected projection
of the knowledge graph, with edge weight equal to the number of supporting
units. Ties break toward the smallest label and community ids are
renumbered densely by smallest member, so the partition is a pure function
of the graph. The algorithm can be swapped for Leiden/Louvain behind the
same signature if scale ever demands it.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

from .errors import EmptyGraph, UnknownCommunity
from .graph import KnowledgeGraph

MAX_ROUNDS = 100

SummarizerFn = Callable[[KnowledgeGraph, Sequence[str], Sequence[str]], str]


@dataclass(frozen=True)
class CommunityAssignment:
    community_of: dict[str, int]
    communities: dict[int, frozenset[str]]

    def __len__(self) -> int:
        return len(self.communities)

    def members(self, community_id: int) -> frozenset[str]:
        try:
            return self.communities[community_id]
        except KeyError:
            raise UnknownCommunity(f"unknown community {community_id}") from None


@dataclass(frozen=True)
class CommunitySummary:
    community_id: int
    summary_text: str
    member_entities: tuple[str, ...]
    top_units: tuple[str, ...]


def detect_communities(graph: KnowledgeGraph, seed: int = 0) -> CommunityAssignment:
    """Partition graph entities by synchronous label propagation.

    Node labels start at the node's index (entities sorted by id). Every
    round each node adopts the incident-weight-heaviest neighbor label,
    ties toward the smallest label; isolated nodes keep their own label.
    Runs to fixpoint or MAX_ROUNDS. ``seed`` is accepted for interface
    stability and recorded in build manifests; the procedure itself has
    no random choices.
    """
    del seed  # deterministic by construction
    if not graph.nodes:
        raise EmptyGraph("cannot detect communities on an empty graph")
    node_ids = sorted(graph.nodes)
    index = {node_id: i for i, node_id in enumerate(node_ids)}
    neighbors: list[dict[int, float]] = [{} for _ in node_ids]
    for (a, b), weight in graph.undirected_weights().items():
        i, j = index[a], index[b]
        neighbors[i][j] = neighbors[i].get(j, 0.0) + weight
        neighbors[j][i] = neighbors[j].get(i, 0.0) + weight

    labels = list(range(len(node_ids)))
    for _round in range(MAX_ROUNDS):
        updated = []
        for i in range(len(node_ids)):
            if not neighbors[i]:
                updated.append(labels[i])
                continue
            tally: dict[int, float] = {}
            for j, weight in neighbors[i].items():
                tally[labels[j]] = tally.get(labels[j], 0.0) + weight
            top = max(tally.values())
            updated.append(min(l for l, w in tally.items() if w == top))
        if updated == labels:
            break
        labels = updated

    groups: dict[int, list[str]] = {}
    for i, node_id in enumerate(node_ids):
        groups.setdefault(labels[i], []).append(node_id)
    ordered = sorted(groups.values(), key=lambda members: min(
        index[m] for m in members
    ))
    community_of: dict[str, int] = {}
    communities: dict[int, frozenset[str]] = {}
    for community_id, members in enumerate(ordered):
        communities[community_id] = frozenset(members)
        for member in members:
            community_of[member] = community_id
    return CommunityAssignment(community_of=community_of, communities=communities)


def _weighted_degree_within(
    graph: KnowledgeGraph, members: frozenset[str]
) -> dict[str, float]:
    degree = {m: 0.0 for m in members}
    for (a, b), weight in graph.undirected_weights().items():
        if a in members and b in members:
            degree[a] += weight
            degree[b] += weight
    return degree


def summarize_community(
    graph: KnowledgeGraph,
    assignment: CommunityAssignment,
    community_id: int,
    summarizer: SummarizerFn | None = None,
    char_budget: int = 1500,
) -> CommunitySummary:
    """Produce the extractive summary for one community.

    Member entities rank by weighted degree within the community; the
    supporting units of the top five entities rank by how many member
    entities they support, and the top three unit texts concatenate into
    the summary (truncated to ``char_budget``). A pluggable abstractive
    summarizer may replace the text but the ranked top_units stay.
    """
    members = assignment.members(community_id)
    degree = _weighted_degree_within(graph, members)
    ranked_members = sorted(members, key=lambda m: (-degree[m], m))
    top_entities = ranked_members[:5]

    candidate_units: set[str] = set()
    for entity_id in top_entities:
        candidate_units.update(graph.nodes[entity_id].supporting_units)
    support_count = {
        unit_id: sum(
            1 for m in members if unit_id in graph.nodes[m].supporting_units
        )
        for unit_id in candidate_units
    }
    top_units = tuple(sorted(
        candidate_units, key=lambda u: (-support_count[u], u)
    ))

    if summarizer is not None:
        summary_text = summarizer(graph, ranked_members, top_units)
    else:
        texts = [graph.unit_index[u].text for u in top_units[:3]]
        summary_text = "\n".join(texts)[:char_budget]
    return CommunitySummary(
        community_id=community_id,
        summary_text=summary_text,
        member_entities=tuple(ranked_members),
        top_units=top_units,
    )


def summarize_all(
    graph: KnowledgeGraph,
    assignment: CommunityAssignment,
    summarizer: SummarizerFn | None = None,
    char_budget: int = 1500,
) -> dict[int, CommunitySummary]:
    return {
        community_id: summarize_community(
            graph, assignment, community_id, summarizer, char_budget
        )
        for community_id in sorted(assignment.communities)
    }
