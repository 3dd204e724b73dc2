"""Event record decoding by ordered tree expansion with a global record memory.

For each detected event type, roles are filled one at a time in schema order.
Each tree node asks a transformer over ``[E + Role_J; S; path; memory]``
(with a segment embedding per block) which entities fill the next role; every
entity above the role threshold opens a branch, and a node with no hit opens
a single NA branch. Each root-to-leaf path is one record. Completed records
are encoded by an LSTM (plus a type embedding) and appended to the memory,
which later expansions attend to.
"""
from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from .corpus.types import EventSchema
from .encoder import Transformer

logger = logging.getLogger(__name__)

MODES = ("full", "greedy", "git-ot", "git-op", "git-nt")
SEG_ENTITY, SEG_SENTENCE, SEG_PATH, SEG_MEMORY = range(4)

# an entity path is a tuple of entity indices, None standing for NA
Path = Tuple[Optional[int], ...]


@dataclass
class Node:
    """One expansion query: which entities fill role ``role`` after ``path``."""

    type_idx: int
    role: int
    path: Path
    memory: torch.Tensor  # (m, d)
    labels: Optional[List[int]] = None


@dataclass
class TrackerMemory:
    """Append-only store of completed record vectors for one document."""

    vectors: List[torch.Tensor] = field(default_factory=list)
    types: List[int] = field(default_factory=list)

    def append(self, vec: torch.Tensor, type_idx: int) -> None:
        self.vectors.append(vec)
        self.types.append(type_idx)

    def __len__(self):
        return len(self.vectors)

    def block(self, dim: int, type_idx: Optional[int] = None, dtype=torch.float32) -> torch.Tensor:
        vecs = [v for v, t in zip(self.vectors, self.types) if type_idx is None or t == type_idx]
        return torch.stack(vecs) if vecs else torch.zeros(0, dim, dtype=dtype)


def _path_key(path: Path):
    return tuple(-1 if x is None else x for x in path)


def gold_tree(paths: Sequence[Path], n_roles: int) -> Dict[Path, List[Optional[int]]]:
    """Map every internal node (a path prefix) to its sorted child values.

    The result does not depend on the order of ``paths``.
    """
    tree: Dict[Path, set] = {}
    for p in set(paths):
        if len(p) != n_roles:
            raise ValueError(f"path {p} does not cover {n_roles} roles")
        for j in range(n_roles):
            tree.setdefault(p[:j], set()).add(p[j])
    return {k: sorted(v, key=lambda x: -1 if x is None else x)
            for k, v in sorted(tree.items(), key=lambda kv: (len(kv[0]), _path_key(kv[0])))}


class RecordDecoder(nn.Module):
    def __init__(self, schema: EventSchema, dim: int, ff_dim: int, heads: int, layers: int,
                 dropout: float = 0.0, role_threshold: float = 0.5, max_children: int = 6,
                 mode: str = "full"):
        super().__init__()
        if mode not in MODES:
            raise ValueError(f"unknown decoder mode {mode!r}")
        if not 0.0 < role_threshold < 1.0:
            raise ValueError("role threshold must lie in (0, 1)")
        self.schema, self.dim, self.mode = schema, dim, mode
        self.role_threshold, self.max_children = role_threshold, max_children
        self.role_emb = nn.Embedding(schema.total_roles, dim)
        self.type_emb = nn.Embedding(schema.num_types, dim)
        self.segment_emb = nn.Embedding(4, dim)
        self.na = nn.Parameter(torch.randn(dim) * 0.1)
        self.lstm = nn.LSTM(dim, dim, batch_first=True)
        self.transformer = Transformer(dim, ff_dim, heads, layers, dropout)
        self.classifier = nn.Linear(dim, 1)
        self.stats: Counter = Counter()

    # -- record encoding -------------------------------------------------

    def path_states(self, entities: torch.Tensor, path: Path) -> torch.Tensor:
        if not path:
            return entities.new_zeros(0, self.dim)
        return torch.stack([self.na if i is None else entities[i] for i in path])

    def encode_record(self, path_states: torch.Tensor, type_idx: int) -> torch.Tensor:
        """Last LSTM hidden state over the path plus the type embedding."""
        _, (h, _) = self.lstm(path_states[None])
        return h[0, 0] + self.type_emb.weight[type_idx]

    def encode_prefixes(self, path_states: torch.Tensor, type_idx: int) -> torch.Tensor:
        """Encodings of every prefix of a path, row j covering the first j+1 entries."""
        out, _ = self.lstm(path_states[None])
        return out[0] + self.type_emb.weight[type_idx]

    # -- expansion -------------------------------------------------------

    def node_logits(self, entities: torch.Tensor, sentences: torch.Tensor, nodes: Sequence[Node]) -> torch.Tensor:
        """Classifier logits for a batch of nodes -> (n_nodes, n_entities)."""
        seg = self.segment_emb.weight
        n_e = entities.shape[0]
        rows = []
        for node in nodes:
            role = self.role_emb.weight[self.schema.role_index(self.schema.types[node.type_idx], node.role)]
            rows.append(torch.cat([
                entities + role + seg[SEG_ENTITY],
                sentences + seg[SEG_SENTENCE],
                self.path_states(entities, node.path) + seg[SEG_PATH],
                node.memory + seg[SEG_MEMORY],
            ]))
        width = max(r.shape[0] for r in rows)
        x = entities.new_zeros(len(rows), width, self.dim)
        pad = torch.ones(len(rows), width, dtype=torch.bool)
        for i, r in enumerate(rows):
            x[i, :r.shape[0]] = r
            pad[i, :r.shape[0]] = False
        out = self.transformer(x, pad if width > min(r.shape[0] for r in rows) else None)
        return self.classifier(out[:, :n_e]).squeeze(-1)

    def expand_node(self, entities: torch.Tensor, sentences: torch.Tensor, path: Path, memory: torch.Tensor,
                    type_idx: int, role: int) -> torch.Tensor:
        """Per-entity probabilities that each entity fills ``role`` after ``path``."""
        node = Node(type_idx, role, path, memory)
        return torch.sigmoid(self.node_logits(entities, sentences, [node])[0])

    def memory_block(self, memory: TrackerMemory, entities: torch.Tensor, type_idx: int, path: Path) -> torch.Tensor:
        dtype = entities.dtype
        if self.mode in ("full", "greedy"):
            return memory.block(self.dim, dtype=dtype)
        if self.mode == "git-ot":
            return memory.block(self.dim, type_idx, dtype=dtype)
        if self.mode == "git-op" and path:
            return self.encode_record(self.path_states(entities, path), type_idx)[None]
        return entities.new_zeros(0, self.dim)

    # -- inference -------------------------------------------------------

    @torch.no_grad()
    def decode(self, entities: torch.Tensor, sentences: torch.Tensor, type_ids: Sequence[int]) -> List[Tuple[int, Path]]:
        """Records as (type index, entity path) pairs, deduplicated, in completion order."""
        if entities.shape[0] == 0 or not type_ids:
            return []
        memory = TrackerMemory()
        out: List[Tuple[int, Path]] = []
        for t in sorted(set(type_ids)):
            if self.mode == "git-ot":
                memory = TrackerMemory()
            self._expand(entities, sentences, t, (), memory, out)
        seen, unique = set(), []
        for rec in out:
            if rec not in seen:
                seen.add(rec)
                unique.append(rec)
        return unique

    def _expand(self, entities, sentences, t: int, path: Path, memory: TrackerMemory, out: list) -> None:
        n_roles = len(self.schema.roles[self.schema.types[t]])
        if len(path) == n_roles:
            if self.mode != "git-nt":
                memory.append(self.encode_record(self.path_states(entities, path), t), t)
            out.append((t, path))
            return
        node = Node(t, len(path), path, self.memory_block(memory, entities, t, path))
        probs = torch.sigmoid(self.node_logits(entities, sentences, [node])[0]).tolist()
        hits = sorted((i for i, p in enumerate(probs) if p > self.role_threshold), key=lambda i: (-probs[i], i))
        if self.mode == "greedy":
            hits = hits[:1]
        elif len(hits) > self.max_children:
            logger.info("type %d role %d: %d children capped to %d", t, len(path), len(hits), self.max_children)
            self.stats["capped_nodes"] += 1
            hits = hits[:self.max_children]
        for child in hits or [None]:
            self._expand(entities, sentences, t, path + (child,), memory, out)

    # -- training --------------------------------------------------------

    def teacher_nodes(self, entities: torch.Tensor, gold: Dict[int, Sequence[Path]]) -> List[Node]:
        """Nodes of the gold trees with the memory each would see during decoding.

        Types are visited in schema order and siblings by entity index (NA
        first); a record is in memory once its leaf precedes the node.
        """
        done: List[Tuple[int, Path, torch.Tensor]] = []
        nodes: List[Node] = []
        for t in sorted(gold):
            n_roles = len(self.schema.roles[self.schema.types[t]])
            paths = sorted(set(gold[t]), key=_path_key)
            if not paths:
                continue
            tree = gold_tree(paths, n_roles)
            prefix_enc = {}
            if self.mode != "git-nt":
                for p in paths:
                    enc = self.encode_prefixes(self.path_states(entities, p), t)
                    for j in range(1, n_roles + 1):
                        prefix_enc[p[:j]] = enc[j - 1]
            earlier = list(done)
            for prefix, children in tree.items():
                if self.mode in ("full", "greedy", "git-ot"):
                    mem = [g for (tt, p, g) in earlier if self.mode != "git-ot" or tt == t]
                    mem += [prefix_enc[p] for p in paths
                            if _path_key(p[:len(prefix)]) < _path_key(prefix)]
                elif self.mode == "git-op" and prefix:
                    mem = [prefix_enc[prefix]]
                else:
                    mem = []
                memory = torch.stack(mem) if mem else entities.new_zeros(0, self.dim)
                labels = [c for c in children if c is not None]
                nodes.append(Node(t, len(prefix), prefix, memory, labels))
            if self.mode != "git-nt":
                done += [(t, p, prefix_enc[p]) for p in paths]
        return nodes

    def record_loss(self, entities: torch.Tensor, sentences: torch.Tensor, gold: Dict[int, Sequence[Path]]) -> torch.Tensor:
        """Summed two-sided binary log-loss over all gold-tree nodes and entities."""
        nodes = self.teacher_nodes(entities, gold)
        if not nodes or entities.shape[0] == 0:
            return entities.new_zeros(())
        logits = self.node_logits(entities, sentences, nodes)
        target = torch.zeros_like(logits)
        for i, node in enumerate(nodes):
            target[i, node.labels] = 1.0
        return F.binary_cross_entropy_with_logits(logits, target, reduction="sum")
