"""Linear-chain CRF tagging of entity mentions with BIO labels."""
from __future__ import annotations

from typing import List, Optional, Sequence

import numpy as np
import torch
import torch.nn as nn

from .corpus.bio import LABELS, extract_mentions

__all__ = ["CRF", "crf_nll", "sequence_score", "viterbi_decode", "extract_mentions", "LABELS"]


def sequence_score(emissions, tags, transitions, start, end):
    """Unnormalized score of one tag path; emissions (L, K), tags (L,)."""
    tags = torch.as_tensor(tags, dtype=torch.long)
    score = start[tags[0]] + end[tags[-1]] + emissions[torch.arange(len(tags)), tags].sum()
    if len(tags) > 1:
        score = score + transitions[tags[:-1], tags[1:]].sum()
    return score


def crf_nll(emissions, tags, transitions, start, end, mask: Optional[torch.Tensor] = None):
    """Negative log-likelihood of the gold tags: log-partition minus gold path score.

    ``emissions`` is (L, K) for one sentence (returns a scalar) or (B, L, K)
    with a (B, L) validity ``mask`` (returns per-sentence losses, shape (B,)).
    ``transitions[i, j]`` scores moving from label i to label j.
    """
    single = emissions.dim() == 2
    tags = torch.as_tensor(tags, dtype=torch.long)
    if single:
        if tags.shape != emissions.shape[:1]:
            raise ValueError(f"{emissions.shape[0]} emission rows for {tags.shape[0]} gold labels")
        emissions, tags = emissions[None], tags[None]
    if tags.shape != emissions.shape[:2]:
        raise ValueError("emissions and gold labels disagree in shape")
    b, length, _ = emissions.shape
    if length < 1:
        raise ValueError("empty sequence")
    if mask is None:
        mask = torch.ones(b, length, dtype=torch.bool)
    lengths = mask.sum(1)
    rows = torch.arange(b)

    # gold path
    gold = start[tags[:, 0]] + emissions[rows, 0, tags[:, 0]]
    for i in range(1, length):
        step = transitions[tags[:, i - 1], tags[:, i]] + emissions[rows, i, tags[:, i]]
        gold = gold + step * mask[:, i]
    last = tags[rows, lengths - 1]
    gold = gold + end[last]

    # forward algorithm
    alpha = start[None, :] + emissions[:, 0]
    for i in range(1, length):
        nxt = torch.logsumexp(alpha[:, :, None] + transitions[None], dim=1) + emissions[:, i]
        alpha = torch.where(mask[:, i, None], nxt, alpha)
    log_z = torch.logsumexp(alpha + end[None, :], dim=1)
    loss = log_z - gold
    return loss[0] if single else loss


def viterbi_decode(emissions, transitions, start, end) -> List[int]:
    """Highest-scoring label path for one sentence.

    Among equally scoring paths the lexicographically smallest label-index
    sequence is returned: best suffix scores are computed right to left, then
    labels are picked left to right taking the smallest index that still
    reaches the optimum.
    """
    em = _np(emissions)
    tr, st, en = _np(transitions), _np(start), _np(end)
    length, k = em.shape
    if length < 1:
        raise ValueError("empty sequence")
    # suffix[i, y]: best score of positions i.. given label y at i (emission included)
    suffix = np.empty((length, k))
    suffix[-1] = em[-1] + en
    for i in range(length - 2, -1, -1):
        suffix[i] = em[i] + (tr + suffix[i + 1][None, :]).max(axis=1)
    cand = st + suffix[0]
    path = [int(np.flatnonzero(cand == cand.max())[0])]
    for i in range(1, length):
        cand = tr[path[-1]] + suffix[i]
        path.append(int(np.flatnonzero(cand == cand.max())[0]))
    return path


def _np(x) -> np.ndarray:
    if isinstance(x, torch.Tensor):
        return x.detach().cpu().double().numpy()
    return np.asarray(x, dtype=np.float64)


class CRF(nn.Module):
    """Emission projection plus transition, start and stop scores."""

    def __init__(self, dim: int, num_labels: int = len(LABELS)):
        super().__init__()
        self.num_labels = num_labels
        self.emission = nn.Linear(dim, num_labels)
        self.transitions = nn.Parameter(torch.zeros(num_labels, num_labels))
        self.start = nn.Parameter(torch.zeros(num_labels))
        self.end = nn.Parameter(torch.zeros(num_labels))

    def nll(self, emissions, tags, mask=None):
        return crf_nll(emissions, tags, self.transitions, self.start, self.end, mask)

    def decode(self, emissions, lengths: Sequence[int]) -> List[List[int]]:
        """Viterbi paths for a padded (B, L, K) emission batch."""
        return [viterbi_decode(emissions[i, :n], self.transitions, self.start, self.end)
                for i, n in enumerate(lengths)]
