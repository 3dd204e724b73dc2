import numpy as np
import pytest
import torch

from docee.encoder import PAD, UNK, EncoderConfig, MultiHeadAttention, SentenceEncoder, TransformerLayer, Vocab

from oracles import np_attention, np_transformer_layer


def _encoder(**kw):
    torch.manual_seed(0)
    cfg = EncoderConfig(**{"vocab_size": 20, "hidden_dim": 8, "ff_dim": 16, "heads": 2, "layers": 2,
                           "max_sentence_len": 6, "dropout": 0.0, **kw})
    return SentenceEncoder(cfg).double().eval()


def test_single_token_shape():
    assert _encoder().encode_sentence([5]).shape == (1, 8)


def test_position_embeddings_break_permutation_symmetry():
    enc = _encoder()
    a = enc.encode_sentence([4, 9])
    b = enc.encode_sentence([9, 4])
    assert not torch.allclose(a, b[[1, 0]])


def test_long_sentence_is_truncated():
    enc = _encoder()
    out = enc.encode_sentence(list(range(2, 12)))
    assert out.shape == (6, 8)
    assert torch.allclose(out, enc.encode_sentence(list(range(2, 8))))


def test_padding_does_not_leak():
    enc = _encoder()
    alone = enc.encode_sentence([3, 4])
    padded = enc.encode_sentences([[3, 4], [5, 6, 7, 8]])[0]
    assert torch.allclose(alone, padded, atol=1e-12)


def test_heads_must_divide_dim():
    with pytest.raises(ValueError):
        EncoderConfig(hidden_dim=10, heads=3)


def test_vocab_is_order_independent():
    class D:
        def __init__(self, sents):
            self.sentences = sents

    a = Vocab.from_documents([D([["b", "a"]]), D([["c"]])])
    b = Vocab.from_documents([D([["c"]]), D([["a", "b"]])])
    assert a.itos == b.itos
    assert a.encode(["a", "zzz"])[1] == UNK and a.stoi["<pad>"] == PAD


def test_attention_matches_numpy_oracle():
    torch.manual_seed(1)
    attn = MultiHeadAttention(8, 2).double().eval()
    q = np.random.default_rng(0).normal(size=(3, 8))
    kv = np.random.default_rng(1).normal(size=(5, 8))
    got = attn(torch.tensor(q)[None], torch.tensor(kv)[None], torch.tensor(kv)[None])[0].detach().numpy()
    np.testing.assert_allclose(got, np_attention(attn, q, kv, 2), atol=1e-12)


def test_transformer_layer_matches_numpy_oracle():
    torch.manual_seed(2)
    layer = TransformerLayer(8, 16, 4, 0.0).double().eval()
    x = np.random.default_rng(2).normal(size=(4, 8))
    got = layer(torch.tensor(x)[None])[0].detach().numpy()
    np.testing.assert_allclose(got, np_transformer_layer(layer, x, 4), atol=1e-10)
