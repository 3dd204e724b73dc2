"""Heterogeneous sentence/mention interaction graph and its relational GCN.

Node order is fixed: sentence nodes first (document order), then mention
nodes sorted by (sentence, start). Node states are stored row-wise, i.e. an
(n_nodes, d) matrix, the transpose of the column convention d x n.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import torch
import torch.nn as nn

from .corpus.types import EntityMention

logger = logging.getLogger(__name__)

EDGE_TYPES = ("ss", "sm", "mm_intra", "mm_inter")


def coref_by_string(mentions: Sequence[EntityMention]) -> List[List[int]]:
    """Group mention indices by exact surface, clusters ordered by first occurrence."""
    clusters: Dict[str, List[int]] = {}
    for i, m in enumerate(mentions):
        clusters.setdefault(m.surface, []).append(i)
    return list(clusters.values())


@dataclass
class HetGraph:
    n_sentences: int
    mentions: List[EntityMention]
    clusters: List[List[int]]
    edges: Dict[str, List[Tuple[int, int]]] = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return self.n_sentences + len(self.mentions)

    def mention_node(self, i: int) -> int:
        return self.n_sentences + i

    def edge_counts(self) -> Dict[str, int]:
        return {k: len(self.edges[k]) for k in EDGE_TYPES}

    def without(self, *edge_types: str) -> "HetGraph":
        edges = {k: ([] if k in edge_types else list(v)) for k, v in self.edges.items()}
        return HetGraph(self.n_sentences, self.mentions, self.clusters, edges)

    def to_json(self) -> dict:
        nodes = [{"kind": "sentence", "index": i} for i in range(self.n_sentences)]
        nodes += [{"kind": "mention", "sent": m.sentence_index, "start": m.start, "end": m.end,
                   "surface": m.surface} for m in self.mentions]
        return {"nodes": nodes, "edges": {k: [list(e) for e in self.edges[k]] for k in EDGE_TYPES}}

    def adjacency(self, dtype=torch.float32) -> torch.Tensor:
        """Row-normalized (|K|, n, n) operators: (A_k + I) / (deg_k + 1)."""
        n = self.n_nodes
        adj = torch.zeros(len(EDGE_TYPES), n, n, dtype=dtype)
        for k, name in enumerate(EDGE_TYPES):
            for u, v in self.edges[name]:
                adj[k, u, v] = 1.0
                adj[k, v, u] = 1.0
        adj = adj + torch.eye(n, dtype=dtype)[None]
        return adj / adj.sum(-1, keepdim=True)


def build_graph(n_sentences: int, mentions: Sequence[EntityMention],
                clusters: Optional[List[List[int]]] = None) -> HetGraph:
    """Edges of the four relations; a node pair may appear under several relations."""
    mentions = list(mentions)
    if clusters is None:
        clusters = coref_by_string(mentions)
    node = lambda i: n_sentences + i  # noqa: E731
    edges = {k: [] for k in EDGE_TYPES}
    edges["ss"] = list(itertools.combinations(range(n_sentences), 2))
    edges["sm"] = [(m.sentence_index, node(i)) for i, m in enumerate(mentions)]
    by_sent: Dict[int, List[int]] = {}
    for i, m in enumerate(mentions):
        by_sent.setdefault(m.sentence_index, []).append(i)
    for s in sorted(by_sent):
        edges["mm_intra"] += [(node(a), node(b)) for a, b in itertools.combinations(by_sent[s], 2)]
    for c in clusters:
        edges["mm_inter"] += [(node(a), node(b)) for a, b in itertools.combinations(c, 2)]
    return HetGraph(n_sentences, mentions, clusters, edges)


def init_node_states(token_reps: Sequence[torch.Tensor], graph: HetGraph,
                     sent_pos: nn.Embedding) -> torch.Tensor:
    """Layer-0 states: max-pooled sentence + position embedding, mean-pooled mentions.

    ``token_reps`` holds one (len, d) tensor per sentence with pads already
    stripped. Sentence indices past the embedding table clamp to its last row.
    """
    n_pos = sent_pos.num_embeddings
    if graph.n_sentences > n_pos:
        logger.warning("%d sentences exceed %d sentence positions; clamping", graph.n_sentences, n_pos)
    idx = torch.clamp(torch.arange(graph.n_sentences), max=n_pos - 1)
    sents = torch.stack([r.max(dim=0).values for r in token_reps]) + sent_pos(idx)
    if not graph.mentions:
        return sents
    ments = torch.stack([token_reps[m.sentence_index][m.start:m.end].mean(dim=0) for m in graph.mentions])
    return torch.cat([sents, ments], dim=0)


class RGCN(nn.Module):
    """Relational GCN with one weight matrix per (layer, edge type).

    h^(l+1)_u = ReLU(sum_k sum_{v in N_k(u) + u} W_k^(l) h^(l)_v / (|N_k(u)| + 1));
    the final state projects the concatenation of all layers' states.
    """

    def __init__(self, dim: int, layers: int = 3, dropout: float = 0.0, max_sentences: int = 64,
                 edge_types: Sequence[str] = EDGE_TYPES):
        super().__init__()
        if layers < 0:
            raise ValueError("layers must be >= 0")
        self.dim, self.n_layers = dim, layers
        self.edge_types = tuple(edge_types)
        unknown = set(self.edge_types) - set(EDGE_TYPES)
        if unknown:
            raise ValueError(f"unknown edge types {sorted(unknown)}")
        self.weights = nn.ModuleList(
            nn.ModuleList(nn.Linear(dim, dim, bias=False) for _ in EDGE_TYPES) for _ in range(layers)
        )
        self.out = nn.Linear((layers + 1) * dim, dim, bias=False)
        self.sent_pos = nn.Embedding(max_sentences, dim)
        self.dropout = nn.Dropout(dropout)

    def forward(self, graph: HetGraph, states0: torch.Tensor):
        """Returns (final node states, S rows, final mention rows)."""
        adj = graph.adjacency(states0.dtype)
        active = [k for k, name in enumerate(EDGE_TYPES) if name in self.edge_types]
        h, layers = states0, [states0]
        for l in range(self.n_layers):
            total = None
            for k in active:
                msg = adj[k] @ self.weights[l][k](h)
                total = msg if total is None else total + msg
            h = self.dropout(torch.relu(total)) if total is not None else torch.zeros_like(h)
            layers.append(h)
        final = self.out(torch.cat(layers, dim=-1))
        return final, final[:graph.n_sentences], final[graph.n_sentences:]


def pool_entities(mention_states: torch.Tensor, clusters: Sequence[Sequence[int]]) -> torch.Tensor:
    """Entity rows: mean over each cluster's mention states -> (|E|, d)."""
    if not clusters:
        return mention_states.new_zeros(0, mention_states.shape[-1])
    return torch.stack([mention_states[list(c)].mean(dim=0) for c in clusters])
