"""Region-attention composition, crossover attention, and gate factorization.

Three mechanisms live here:

* weighted region composition: scores each region feature from the current
  recurrent vector through an intermediate transfer layer, softmaxes over
  live regions, and returns the convex combination of region features;
* crossover attention: the elementwise product of two gated,
  context-conditioned branches, one squashing a sigmoid path and one a
  tanh path that carries a multiplicative "prospect" vector;
* gate-input factorization: replaces a plain linear map on a gate input by
  the elementwise product of two learned projections, gated either by the
  tag vector (static), by the recurrent vector (dynamic), or per gate.

Everything is a single batch row (1 x dim tensors); batching loops rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ContractError, DimensionError

MASK_SCORE = -1e30  # pre-softmax score for dead regions; exp underflows to 0.0

GATES = ("i", "f", "o", "g")


@dataclass
class FdcParams:
    """Transfer-layer and state-init weights for region composition."""

    hidden_proj: ad.Tensor  # (d, m_intermediate)
    score_proj: ad.Tensor   # (m_intermediate, k_max)
    init_h: ad.Tensor       # (region_dim, d)
    init_c: ad.Tensor       # (region_dim, d)


@dataclass
class MrrcParams:
    """Crossover weights; both branch outputs must share one width."""

    left_in: ad.Tensor      # (prospect_a_dim, left_gate_dim)
    left_ctx: ad.Tensor     # (embed_dim, left_gate_dim)
    left_bias: ad.Tensor    # (1, left_gate_dim)
    left_out: ad.Tensor     # (left_gate_dim, out_dim)
    right_in: ad.Tensor     # (prospect_a_dim, prospect_b_dim)
    right_ctx: ad.Tensor    # (embed_dim, prospect_b_dim)
    right_bias: ad.Tensor   # (1, prospect_b_dim)
    right_out: ad.Tensor    # (prospect_b_dim, out_dim)
    out_bias: ad.Tensor     # (1, out_dim)
    prospect_source: str = "fdc_q"

    def __post_init__(self):
        if self.prospect_source not in ("fdc_q", "hidden_h", "semantic_S"):
            raise ContractError(
                f"unknown prospect source '{self.prospect_source}'")
        if self.left_out.shape[1] != self.right_out.shape[1]:
            raise ContractError(
                "crossover branch widths differ: "
                f"{self.left_out.shape} vs {self.right_out.shape}")


FACTORIZATION_MODES = ("none", "static", "dynamic", "per_gate_full")


@dataclass
class FactorizationParams:
    """Exactly the tensors demanded by the mode, nothing else.

    static/dynamic: one shared (gate_proj, in_proj) pair for the attention
    input. per_gate_full: one pair per gate for the attention input and one
    per gate for the previous-token embedding.
    """

    mode: str
    q_gate_proj: ad.Tensor | None = None
    q_in_proj: ad.Tensor | None = None
    q_pairs: dict | None = None
    p_pairs: dict | None = None

    def __post_init__(self):
        if self.mode not in FACTORIZATION_MODES:
            raise ContractError(f"unknown factorization mode '{self.mode}'")
        shared = self.q_gate_proj is not None and self.q_in_proj is not None
        per_gate = self.q_pairs is not None and self.p_pairs is not None
        if self.mode == "none" and (shared or per_gate):
            raise ContractError("factorization 'none' carries no tensors")
        if self.mode in ("static", "dynamic") and not (shared and not per_gate):
            raise ContractError(f"factorization '{self.mode}' needs exactly "
                                "the shared (gate_proj, in_proj) pair")
        if self.mode == "per_gate_full":
            if shared or not per_gate:
                raise ContractError("per_gate_full needs per-gate pairs only")
            for pairs in (self.q_pairs, self.p_pairs):
                if sorted(pairs) != sorted(GATES):
                    raise ContractError(
                        f"per-gate factorization needs keys {GATES}")


def region_mean(regions, mask):
    """Mean feature over live regions; (k_max, rd) padded array + bool mask."""
    regions = np.asarray(regions, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    if regions.shape[0] != mask.shape[0]:
        raise DimensionError(
            f"region_mean: {regions.shape[0]} regions vs mask {mask.shape}")
    live = int(mask.sum())
    if live == 0:
        raise ContractError("region_mean: every region is masked out")
    return regions[mask].mean(axis=0, keepdims=True)


def fdc_init_state(vbar, params):
    """Initial recurrent pair (h0, c0), both linear in the mean feature."""
    return ad.matmul(vbar, params.init_h), ad.matmul(vbar, params.init_c)


def fdc_attend(h_prev, regions, mask, params):
    """Masked softmax over region scores, then the convex region mix.

    h_prev: (1, d) tensor; regions: (k_max, rd) constant tensor with zero
    rows where mask is False. Returns (v_hat (1, rd), alpha (1, k_max));
    dead regions get alpha exactly 0.0 because their scores sit at
    MASK_SCORE before the shifted exponential underflows.
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ContractError("fdc_attend: every region is masked out")
    if regions.shape[0] != mask.shape[0]:
        raise DimensionError(
            f"fdc_attend: regions {regions.shape} vs mask {mask.shape}")
    if params.score_proj.shape[1] != mask.shape[0]:
        raise DimensionError(
            f"fdc_attend: score layer emits {params.score_proj.shape[1]} "
            f"scores but scene has {mask.shape[0]} region slots")
    scores = ad.matmul(ad.tanh(ad.matmul(h_prev, params.hidden_proj)),
                       params.score_proj)
    offset = np.where(mask, 0.0, MASK_SCORE)[None, :]
    alpha = ad.softmax(ad.add(scores, ad.constant(offset)), axis=1)
    v_hat = ad.matmul(alpha, regions)
    return v_hat, alpha


def context_zero(embed_dim):
    """Fresh accumulator for the running sum of previous-token embeddings."""
    return ad.constant(np.zeros((1, embed_dim)))


def context_sum_update(acc, embedded_token):
    """acc + W_e x; call after a step so step t sees only tokens before t."""
    return ad.add(acc, embedded_token)


def context_read(acc, t, mean_pool=False):
    """Accumulator as consumed by the crossover; optional mean over steps."""
    if mean_pool and t > 0:
        return ad.scale(acc, 1.0 / t)
    return acc


def mrrc_attend(prospect_a, prospect_b, ctx_sum, params):
    """Crossover of two gated, context-conditioned transformations.

    left  = sigma(a W_li + ctx W_lc + b1) W_lo
    right = tanh((b (*) sigma(a W_ri + ctx W_rc + b2)) W_ro + b3)
    returns left (*) right, where (*) is elementwise multiplication.

    prospect_b must already live in the right branch's gate width; the
    builder arranges that by sizing the right branch to the prospect.
    """
    gate_b = ad.sigmoid(ad.add(ad.add(ad.matmul(prospect_a, params.right_in),
                                      ad.matmul(ctx_sum, params.right_ctx)),
                               params.right_bias))
    if prospect_b.shape != gate_b.shape:
        raise ContractError(
            f"mrrc_attend: prospect {prospect_b.shape} does not match "
            f"right gate {gate_b.shape}")
    right = ad.tanh(ad.add(ad.matmul(ad.mul(prospect_b, gate_b),
                                     params.right_out),
                           params.out_bias))
    left = ad.matmul(ad.sigmoid(ad.add(ad.add(ad.matmul(prospect_a, params.left_in),
                                              ad.matmul(ctx_sum, params.left_ctx)),
                                       params.left_bias)),
                     params.left_out)
    return ad.mul(left, right)


def factorize_pair(x, gate_source, gate_proj, in_proj):
    """(gate_source @ gate_proj) (*) (x @ in_proj): one factorized input."""
    return ad.mul(ad.matmul(gate_source, gate_proj), ad.matmul(x, in_proj))


def factorize_gate_input(x, gate_source, params, which="q"):
    """Apply the configured factorization to one gate input.

    static/dynamic return a single tensor shared by all four gates;
    per_gate_full returns a dict keyed by gate name. mode "none" passes x
    through so callers can treat every variant uniformly.
    """
    if params.mode == "none":
        return x
    if params.mode in ("static", "dynamic"):
        if which != "q":
            raise ContractError(
                f"factorization '{params.mode}' applies to the attention "
                f"input only, not '{which}'")
        return factorize_pair(x, gate_source, params.q_gate_proj, params.q_in_proj)
    pairs = params.q_pairs if which == "q" else params.p_pairs
    return {gate: factorize_pair(x, gate_source, gp, ip)
            for gate, (gp, ip) in pairs.items()}
