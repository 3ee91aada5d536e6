"""Three-input gated recurrent cell and sequence decoding.

The cell's gates read only the previous-token embedding, the region
attention vector and the crossover vector; the recurrent pair (h, c) feeds
the next step solely through the attention modules that produce those
inputs. Decoding offers teacher-forced likelihoods, greedy argmax and a
length-synchronized beam; ties always break toward the lowest token id.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .attention import GATES
from .data import BOS, EOS, PAD
from .errors import ContractError


@dataclass
class DecoderState:
    """Per-step decoding state; ctx_sum accumulates previous embeddings."""

    h: ad.Tensor
    c: ad.Tensor
    ctx_sum: ad.Tensor
    t: int = 0

    def advanced(self, h, c):
        return replace(self, h=h, c=c, t=self.t + 1)

    def with_context(self, ctx_sum):
        return replace(self, ctx_sum=ctx_sum)


@dataclass
class DecoderParams:
    """Twelve gate matrices, four biases, output projection, embedding."""

    prev_proj: dict    # gate -> (p_dim, d)
    att_proj: dict     # gate -> (q_dim, d)
    cross_proj: dict   # gate -> (T_dim, d)
    bias: dict         # gate -> (1, d)
    out_proj: ad.Tensor  # (d, V)
    embed: ad.Tensor     # (V, e)

    def __post_init__(self):
        for table in (self.prev_proj, self.att_proj, self.cross_proj, self.bias):
            if sorted(table) != sorted(GATES):
                raise ContractError(f"decoder needs one tensor per gate {GATES}")

    @property
    def vocab_size(self):
        return self.out_proj.shape[1]


def _gate_input(x, gate):
    """Inputs may be shared tensors or per-gate dicts (full factorization)."""
    return x[gate] if isinstance(x, dict) else x


def decoder_step(state, p_t, q_t, T_t, params):
    """One gated update; returns (new state, logits over the vocabulary).

    i/f/o = sigmoid(...), g = tanh(...), c' = f*c + i*g, h' = o*tanh(c').
    The gates never read h or c directly.
    """
    pre = {}
    for gate in GATES:
        pre[gate] = ad.add(
            ad.add(ad.matmul(_gate_input(p_t, gate), params.prev_proj[gate]),
                   ad.matmul(_gate_input(q_t, gate), params.att_proj[gate])),
            ad.add(ad.matmul(T_t, params.cross_proj[gate]), params.bias[gate]))
    i_t = ad.sigmoid(pre["i"])
    f_t = ad.sigmoid(pre["f"])
    o_t = ad.sigmoid(pre["o"])
    g_t = ad.tanh(pre["g"])
    c_new = ad.add(ad.mul(f_t, state.c), ad.mul(i_t, g_t))
    h_new = ad.mul(o_t, ad.tanh(c_new))
    logits = ad.matmul(h_new, params.out_proj)
    return state.advanced(h_new, c_new), logits


def trim_padding(caption):
    """Caption without its PAD tail; PAD may only pad."""
    out = list(caption)
    while out and out[-1] == PAD:
        out.pop()
    if PAD in out:
        raise ContractError("PAD tokens may only appear as trailing padding")
    return out


def teacher_forced_nll(step_fn, state, caption):
    """Mean negative log-likelihood of the gold tokens under teacher forcing.

    step_fn(state, prev_token_id) -> (state, logits). The caption must run
    BOS ... EOS; trailing PAD is ignored, so padded and unpadded captions
    score identically.
    """
    caption = trim_padding(caption)
    if len(caption) < 2:
        raise ContractError("teacher_forced_nll: caption needs BOS plus a token")
    total = None
    steps = len(caption) - 1
    for idx in range(steps):
        state, logits = step_fn(state, caption[idx])
        pick = ad.one_hot(caption[idx + 1], logits.shape[1])
        term = ad.tsum(ad.mul(ad.log_softmax(logits, axis=1), pick))
        total = term if total is None else ad.add(total, term)
    return ad.scale(total, -1.0 / steps)


def greedy_decode(step_fn, state, max_len=20):
    """Feed back the argmax token until EOS or max_len; returns token ids."""
    if max_len < 1:
        raise ContractError("greedy_decode: max_len must be >= 1")
    tokens = []
    prev = BOS
    with ad.no_grad():
        for _ in range(max_len):
            state, logits = step_fn(state, prev)
            token = int(np.argmax(logits.data[0]))  # first max = lowest id
            if token == EOS:
                break
            tokens.append(token)
            prev = token
    return tokens


@dataclass
class Hypothesis:
    tokens: tuple
    score: float
    finished: bool
    emitted: int

    def normalized(self, length_norm):
        if not length_norm:
            return self.score
        return self.score / max(1, self.emitted)


def beam_decode(step_fn, state, beam_width, max_len=20, length_norm=False):
    """Length-synchronized beam over summed token log-probabilities.

    EOS candidates consume beam slots and retire to a pool; hypotheses
    still alive at max_len retire as they stand. Returns (best token list,
    all retired hypotheses sorted best-first). beam_width=1 reproduces
    greedy_decode token-for-token.
    """
    if beam_width < 1:
        raise ContractError("beam_decode: beam_width must be >= 1")
    if max_len < 1:
        raise ContractError("beam_decode: max_len must be >= 1")
    active = [((), 0.0, state, BOS)]
    pool = []
    with ad.no_grad():
        for _ in range(max_len):
            candidates = []
            for parent_idx, (tokens, score, st, prev) in enumerate(active):
                st_new, logits = step_fn(st, prev)
                logp = ad.log_softmax(logits, axis=1).data[0]
                top = np.argsort(-logp, kind="stable")[:beam_width]
                for token in top:
                    candidates.append((score + float(logp[token]), int(token),
                                       parent_idx, tokens, st_new))
            candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
            next_active = []
            for score, token, _, tokens, st_new in candidates[:beam_width]:
                if token == EOS:
                    pool.append(Hypothesis(tokens=tokens, score=score,
                                           finished=True,
                                           emitted=len(tokens) + 1))
                else:
                    next_active.append((tokens + (token,), score, st_new, token))
            active = next_active
            if not active:
                break
        for tokens, score, _, _ in active:
            pool.append(Hypothesis(tokens=tokens, score=score, finished=False,
                                   emitted=len(tokens)))
    pool.sort(key=lambda h: (-h.normalized(length_norm), h.tokens))
    return list(pool[0].tokens), pool
