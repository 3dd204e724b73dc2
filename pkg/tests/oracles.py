"""Independent reference computations used by the tests.

Everything here is written with plain loops over Python floats or numpy so it
shares no code path with the package.
"""
import itertools
import math

import numpy as np
import torch


def path_score(em, tr, st, en, path):
    s = st[path[0]] + en[path[-1]]
    for i, y in enumerate(path):
        s += em[i][y]
        if i:
            s += tr[path[i - 1]][y]
    return s


def crf_enumerate(em, tr, st, en):
    """All (path, score) pairs over every label sequence."""
    length, k = len(em), len(em[0])
    return [(p, path_score(em, tr, st, en, p)) for p in itertools.product(range(k), repeat=length)]


def log_partition(scores):
    m = max(scores)
    return m + math.log(sum(math.exp(s - m) for s in scores))


def random_crf(rng, length, k=3, scale=2.0):
    return (rng.normal(0, scale, (length, k)), rng.normal(0, scale, (k, k)),
            rng.normal(0, scale, k), rng.normal(0, scale, k))


def central_diff_check(fn, inputs, eps=1e-6):
    """Worst normwise relative error between autograd and central differences.

    ``fn`` maps the list of double tensors ``inputs`` to a scalar. For each
    input the error is ||g - fd|| / max(||fd||, 1e-12); the maximum over
    inputs is returned.
    """
    inputs = [x.detach().clone().double().requires_grad_(True) for x in inputs]
    grads = torch.autograd.grad(fn(*inputs), inputs, allow_unused=True)
    worst = 0.0
    for x, g in zip(inputs, grads):
        g = torch.zeros_like(x) if g is None else g
        flat = x.detach().view(-1)
        fd = torch.zeros(flat.numel(), dtype=torch.float64)
        for i in range(flat.numel()):
            orig = flat[i].item()
            with torch.no_grad():
                flat[i] = orig + eps
                up = fn(*inputs).item()
                flat[i] = orig - eps
                down = fn(*inputs).item()
                flat[i] = orig
            fd[i] = (up - down) / (2 * eps)
        worst = max(worst, ((g.reshape(-1) - fd).norm() / max(fd.norm().item(), 1e-12)).item())
    return worst


def edge_counts(n_sentences, mentions):
    """Count edges pair by pair from the relation definitions."""
    n = len(mentions)
    ss = n_sentences * (n_sentences - 1) // 2
    sm = n
    intra = inter = 0
    for a in range(n):
        for b in range(a + 1, n):
            if mentions[a].sentence_index == mentions[b].sentence_index:
                intra += 1
            if mentions[a].surface == mentions[b].surface:
                inter += 1
    return {"ss": ss, "sm": sm, "mm_intra": intra, "mm_inter": inter}


def lstm_step(x, h, c, w_ih, w_hh, b_ih, b_hh):
    """One LSTM step with gate order (input, forget, cell, output), scalar loops."""
    hid = len(h)
    gates = []
    for r in range(4 * hid):
        z = b_ih[r] + b_hh[r]
        z += sum(w_ih[r][j] * x[j] for j in range(len(x)))
        z += sum(w_hh[r][j] * h[j] for j in range(hid))
        gates.append(z)
    sig = lambda v: 1.0 / (1.0 + math.exp(-v))  # noqa: E731
    i = [sig(v) for v in gates[0:hid]]
    f = [sig(v) for v in gates[hid:2 * hid]]
    g = [math.tanh(v) for v in gates[2 * hid:3 * hid]]
    o = [sig(v) for v in gates[3 * hid:]]
    c2 = [f[j] * c[j] + i[j] * g[j] for j in range(hid)]
    h2 = [o[j] * math.tanh(c2[j]) for j in range(hid)]
    return h2, c2


def np_layer_norm(x, w, b, eps=1e-5):
    mu = x.mean(-1, keepdims=True)
    var = ((x - mu) ** 2).mean(-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * w + b


def np_attention(layer, q_in, kv_in, heads):
    """Multi-head attention of one (L, d) sequence with numpy, weights from a module."""
    P = {k: v.detach().double().numpy() for k, v in layer.state_dict().items()}
    q = q_in @ P["q_proj.weight"].T + P["q_proj.bias"]
    k = kv_in @ P["k_proj.weight"].T + P["k_proj.bias"]
    v = kv_in @ P["v_proj.weight"].T + P["v_proj.bias"]
    d = q.shape[1]
    hd = d // heads
    outs = []
    for h in range(heads):
        sl = slice(h * hd, (h + 1) * hd)
        s = q[:, sl] @ k[:, sl].T / math.sqrt(hd)
        s = np.exp(s - s.max(1, keepdims=True))
        s /= s.sum(1, keepdims=True)
        outs.append(s @ v[:, sl])
    return np.concatenate(outs, 1) @ P["out_proj.weight"].T + P["out_proj.bias"]


def np_transformer_layer(layer, x, heads):
    P = {k: v.detach().double().numpy() for k, v in layer.state_dict().items()}
    x = np_layer_norm(x + np_attention(layer.attn, x, x, heads), P["norm1.weight"], P["norm1.bias"])
    hidden = np.maximum(0, x @ P["ff.0.weight"].T + P["ff.0.bias"])
    ff = hidden @ P["ff.3.weight"].T + P["ff.3.bias"]
    return np_layer_norm(x + ff, P["norm2.weight"], P["norm2.bias"])
