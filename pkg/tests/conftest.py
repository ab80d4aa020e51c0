import numpy as np
import pytest

from xld.checkpoint import new_checkpoint
from xld.corpus import default_language_specs, generate_corpus
from xld.model import Component, ModelConfig, gid
from xld.tokenizer import train_tokenizer
from xld.wlt import synthesize_wlt

TINY = ModelConfig(n_layers=2, hidden_size=16, n_heads=2, n_kv_heads=1,
                   intermediate_size=24, max_seq_len=64, vocab_size=64)
SMALL = ModelConfig(n_layers=4, hidden_size=32, n_heads=2, n_kv_heads=1,
                    intermediate_size=48, max_seq_len=224, vocab_size=512)


@pytest.fixture(scope="session")
def specs():
    return default_language_specs()


@pytest.fixture(scope="session")
def dataset(specs):
    return synthesize_wlt(specs, seed=0)


@pytest.fixture(scope="session")
def corpora(specs, dataset):
    return generate_corpus(specs, dataset.concepts, 300, seed=0)


@pytest.fixture(scope="session")
def tokenizer(corpora):
    return train_tokenizer(corpora, 510)


@pytest.fixture(scope="session")
def small_ckpt():
    return new_checkpoint(SMALL, seed=3)


@pytest.fixture(scope="session")
def tiny_ckpt64():
    return new_checkpoint(TINY, seed=1, dtype=np.float64)


def constant_emitter(config: ModelConfig, token_id: int, dtype=np.float32):
    """Checkpoint whose argmax output is always ``token_id``.

    All projections are zero, so the residual stream stays at the
    embedding value (a constant ones vector) and the unembedding gives
    that token the only positive logit.
    """
    ck = new_checkpoint(config, seed=0, dtype=dtype)
    params = {g: np.zeros_like(p) for g, p in ck.params.items()}
    for g in params:
        if g.component in (Component.input_norm, Component.post_attn_norm,
                           Component.final_norm):
            params[g] = np.ones_like(ck.params[g])
    params[gid(Component.token_embedding)] = np.ones_like(
        ck.params[gid(Component.token_embedding)])
    unembed = np.zeros_like(ck.params[gid(Component.unembedding)])
    unembed[:, token_id] = 1.0
    params[gid(Component.unembedding)] = unembed
    return ck.replace(params=params)
