"""Sentence encoder: token + learned position embeddings into a transformer."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import Dict, Iterable, List, Optional, Sequence

import torch
import torch.nn as nn

logger = logging.getLogger(__name__)

PAD, UNK = 0, 1


@dataclass
class EncoderConfig:
    vocab_size: int = 2
    hidden_dim: int = 32
    ff_dim: int = 64
    heads: int = 2
    layers: int = 2
    max_sentence_len: int = 128
    dropout: float = 0.1

    def __post_init__(self):
        if self.hidden_dim % self.heads:
            raise ValueError(f"hidden_dim {self.hidden_dim} is not divisible by heads {self.heads}")
        if self.layers < 1:
            raise ValueError("encoder needs at least one layer")

    def to_dict(self) -> Dict:
        return asdict(self)


class Vocab:
    def __init__(self, tokens: Iterable[str] = ()):
        self.itos: List[str] = ["<pad>", "<unk>"]
        self.stoi: Dict[str, int] = {t: i for i, t in enumerate(self.itos)}
        for t in tokens:
            self.add(t)

    def add(self, token: str) -> int:
        if token not in self.stoi:
            self.stoi[token] = len(self.itos)
            self.itos.append(token)
        return self.stoi[token]

    def __len__(self):
        return len(self.itos)

    def encode(self, tokens: Sequence[str]) -> List[int]:
        return [self.stoi.get(t, UNK) for t in tokens]

    @classmethod
    def from_documents(cls, docs) -> "Vocab":
        # sorted so the id assignment does not depend on corpus order
        return cls(sorted({t for d in docs for s in d.sentences for t in s}))


class MultiHeadAttention(nn.Module):
    def __init__(self, dim: int, heads: int, dropout: float = 0.0):
        super().__init__()
        if dim % heads:
            raise ValueError("dim must be divisible by heads")
        self.dim, self.heads, self.head_dim = dim, heads, dim // heads
        self.q_proj = nn.Linear(dim, dim)
        self.k_proj = nn.Linear(dim, dim)
        self.v_proj = nn.Linear(dim, dim)
        self.out_proj = nn.Linear(dim, dim)
        self.dropout = nn.Dropout(dropout)

    def forward(self, query, key, value, key_padding_mask: Optional[torch.Tensor] = None,
                return_weights: bool = False):
        """query (B, Lq, d), key/value (B, Lk, d); ``key_padding_mask`` is True at pads."""
        b, lq, _ = query.shape
        lk = key.shape[1]

        def split(x, n):
            return x.view(b, n, self.heads, self.head_dim).transpose(1, 2)

        q = split(self.q_proj(query), lq)
        k = split(self.k_proj(key), lk)
        v = split(self.v_proj(value), lk)
        scores = q @ k.transpose(-1, -2) / math.sqrt(self.head_dim)
        if key_padding_mask is not None:
            scores = scores.masked_fill(key_padding_mask[:, None, None, :], float("-inf"))
        weights = torch.softmax(scores, dim=-1)
        out = (self.dropout(weights) @ v).transpose(1, 2).reshape(b, lq, self.dim)
        out = self.out_proj(out)
        return (out, weights) if return_weights else out


class TransformerLayer(nn.Module):
    def __init__(self, dim: int, ff_dim: int, heads: int, dropout: float):
        super().__init__()
        self.attn = MultiHeadAttention(dim, heads, dropout)
        self.ff = nn.Sequential(nn.Linear(dim, ff_dim), nn.ReLU(), nn.Dropout(dropout), nn.Linear(ff_dim, dim))
        self.norm1 = nn.LayerNorm(dim)
        self.norm2 = nn.LayerNorm(dim)
        self.drop = nn.Dropout(dropout)

    def forward(self, x, pad_mask=None):
        x = self.norm1(x + self.drop(self.attn(x, x, x, pad_mask)))
        return self.norm2(x + self.drop(self.ff(x)))


class Transformer(nn.Module):
    def __init__(self, dim: int, ff_dim: int, heads: int, layers: int, dropout: float):
        super().__init__()
        self.layers = nn.ModuleList(TransformerLayer(dim, ff_dim, heads, dropout) for _ in range(layers))

    def forward(self, x, pad_mask=None):
        for layer in self.layers:
            x = layer(x, pad_mask)
        return x


class SentenceEncoder(nn.Module):
    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        self.token_emb = nn.Embedding(cfg.vocab_size, cfg.hidden_dim, padding_idx=PAD)
        self.pos_emb = nn.Embedding(cfg.max_sentence_len, cfg.hidden_dim)
        self.dropout = nn.Dropout(cfg.dropout)
        self.transformer = Transformer(cfg.hidden_dim, cfg.ff_dim, cfg.heads, cfg.layers, cfg.dropout)

    def forward(self, token_ids: torch.Tensor, pad_mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        """token_ids (B, L) -> token representations (B, L, d)."""
        pos = torch.arange(token_ids.shape[1], device=token_ids.device)
        x = self.dropout(self.token_emb(token_ids) + self.pos_emb(pos)[None])
        return self.transformer(x, pad_mask)

    def batch(self, sentences: Sequence[Sequence[int]]):
        """Pad id sequences into (ids, pad_mask, lengths), truncating long ones."""
        limit = self.cfg.max_sentence_len
        lengths = []
        for i, s in enumerate(sentences):
            if len(s) > limit:
                logger.info("sentence %d truncated from %d to %d tokens", i, len(s), limit)
            lengths.append(min(len(s), limit))
        width = max(lengths)
        ids = torch.full((len(sentences), width), PAD, dtype=torch.long)
        for i, s in enumerate(sentences):
            ids[i, :lengths[i]] = torch.tensor(list(s[:lengths[i]]), dtype=torch.long)
        pad_mask = torch.arange(width)[None, :] >= torch.tensor(lengths)[:, None]
        return ids, pad_mask, lengths

    def encode_sentences(self, sentences: Sequence[Sequence[int]]) -> List[torch.Tensor]:
        ids, pad_mask, lengths = self.batch(sentences)
        reps = self(ids, pad_mask)
        return [reps[i, :n] for i, n in enumerate(lengths)]

    def encode_sentence(self, tokens: Sequence[int]) -> torch.Tensor:
        """One sentence of ids -> (len, d); overlong input is truncated."""
        return self.encode_sentences([tokens])[0]
