"""Multi-label event type detection from the sentence matrix."""
from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .encoder import MultiHeadAttention

EPS = 1e-12


class TypeDetector(nn.Module):
    """A = MultiHead(Q, S, S) with one learned query per type; R = sigmoid(A W_t).

    There is no residual connection or feed-forward block around the attention.
    """

    def __init__(self, dim: int, n_types: int, heads: int, threshold: float = 0.5):
        super().__init__()
        if not 0.0 < threshold < 1.0:
            raise ValueError("type threshold must lie in (0, 1)")
        self.query = nn.Parameter(torch.randn(n_types, dim) / dim ** 0.5)
        self.attn = MultiHeadAttention(dim, heads)
        self.w_t = nn.Parameter(torch.randn(dim) / dim ** 0.5)
        self.threshold = threshold

    def forward(self, sent_states: torch.Tensor) -> torch.Tensor:
        """sent_states (n_sentences, d) -> per-type probabilities (T,)."""
        return torch.sigmoid(self.logits(sent_states))

    def logits(self, sent_states: torch.Tensor) -> torch.Tensor:
        s = sent_states[None]
        a = self.attn(self.query[None], s, s)[0]
        return a @ self.w_t

    def predict(self, probs: torch.Tensor):
        return [i for i, p in enumerate(probs.tolist()) if p > self.threshold]


def detect_types(sent_states: torch.Tensor, detector: TypeDetector) -> torch.Tensor:
    return detector(sent_states)


def detect_loss(probs: torch.Tensor, gold: torch.Tensor) -> torch.Tensor:
    """Binary cross-entropy summed over types.

    Both the positive and the negative class term enter with a minus sign;
    probabilities are clamped to [EPS, 1 - EPS].
    """
    # EPS is below float32 resolution near 1, so clamp in double precision
    p = probs.double().clamp(EPS, 1 - EPS)
    gold = gold.double()
    loss = -(gold * torch.log(p) + (1 - gold) * torch.log(1 - p)).sum()
    return loss.to(probs.dtype)


def detect_loss_from_logits(logits: torch.Tensor, gold: torch.Tensor) -> torch.Tensor:
    """Same loss computed from pre-sigmoid scores, stable when the detector saturates."""
    return F.binary_cross_entropy_with_logits(logits, gold.to(logits.dtype), reduction="sum")
