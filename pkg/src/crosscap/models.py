"""The five architecture assemblies behind one forward interface.

Each variant wires the same building blocks differently: which vector the
crossover treats as its prospect, and whether (and how) the attention and
previous-token inputs to the decoder gates are factorized. The table below
is the single source of truth; a config may restate the pairing but never
contradict it.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .attention import (
    GATES,
    FactorizationParams,
    FdcParams,
    MrrcParams,
    context_read,
    context_sum_update,
    context_zero,
    factorize_gate_input,
    fdc_attend,
    fdc_init_state,
    region_mean,
)
from .decoder import DecoderParams, DecoderState, decoder_step, teacher_forced_nll
from .errors import ConfigError, ContractError, DimensionError

VARIANTS = (
    "FDC_MRRC",
    "SEMI_FACT_FDC_MRRC",
    "FULL_FACT_FDC_MRRC",
    "SEMI_FDC_FACT_SEM_MRRC",
    "SEMI_FDC_FACT_FDC_MRRC",
)

# variant -> (crossover prospect source, factorization mode)
WIRING = {
    "FDC_MRRC": ("fdc_q", "none"),
    "SEMI_FACT_FDC_MRRC": ("fdc_q", "static"),
    "FULL_FACT_FDC_MRRC": ("fdc_q", "per_gate_full"),
    "SEMI_FDC_FACT_SEM_MRRC": ("semantic_S", "dynamic"),
    "SEMI_FDC_FACT_FDC_MRRC": ("fdc_q", "dynamic"),
}


@dataclass(frozen=True)
class ModelConfig:
    variant: str
    vocab_size: int
    hidden_dim: int = 32
    embed_dim: int = 16
    region_dim: int = 32
    tag_dim: int = 16
    k_max: int = 6
    m_intermediate: int = 32
    initializer: str = "xavier-uniform"
    seed: int = 0
    ctx_mean_pool: bool = False
    # derived from the variant; restating them is allowed, contradicting is not
    mrrc_prospect: str | None = None
    factorization: str | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant '{self.variant}', "
                              f"expected one of {VARIANTS}")
        prospect, fact = WIRING[self.variant]
        if self.mrrc_prospect is not None and self.mrrc_prospect != prospect:
            raise ConfigError(
                f"variant {self.variant} pairs with mrrc_prospect="
                f"'{prospect}', not '{self.mrrc_prospect}'")
        if self.factorization is not None and self.factorization != fact:
            raise ConfigError(
                f"variant {self.variant} pairs with factorization="
                f"'{fact}', not '{self.factorization}'")
        object.__setattr__(self, "mrrc_prospect", prospect)
        object.__setattr__(self, "factorization", fact)
        for name in ("vocab_size", "hidden_dim", "embed_dim", "region_dim",
                     "tag_dim", "k_max", "m_intermediate"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.initializer not in ad.INITIALIZERS:
            raise ConfigError(f"unknown initializer '{self.initializer}'")

    def prospect_dims(self):
        """(prospect_a dim, prospect_b dim) fed to the crossover."""
        if self.mrrc_prospect == "fdc_q":
            return self.hidden_dim, self.region_dim
        if self.mrrc_prospect == "semantic_S":
            return self.tag_dim, self.tag_dim
        return self.hidden_dim, self.hidden_dim

    def gate_input_dims(self):
        """(p input dim, q input dim) seen by the decoder gate matrices."""
        d, e = self.hidden_dim, self.embed_dim
        if self.factorization == "none":
            return e, self.region_dim
        if self.factorization == "per_gate_full":
            return d, d
        return e, d


def expected_census(config):
    """Closed-form name -> shape census for a config; build_model must match."""
    d = config.hidden_dim
    e = config.embed_dim
    rd = config.region_dim
    tag = config.tag_dim
    a_dim, b_dim = config.prospect_dims()
    census = {
        "init_h": (rd, d),
        "init_c": (rd, d),
        "att_hidden": (d, config.m_intermediate),
        "att_score": (config.m_intermediate, config.k_max),
        "embed": (config.vocab_size, e),
        "mrrc_left_in": (a_dim, d),
        "mrrc_left_ctx": (e, d),
        "mrrc_left_bias": (1, d),
        "mrrc_left_out": (d, d),
        "mrrc_right_in": (a_dim, b_dim),
        "mrrc_right_ctx": (e, b_dim),
        "mrrc_right_bias": (1, b_dim),
        "mrrc_right_out": (b_dim, d),
        "mrrc_out_bias": (1, d),
    }
    if config.factorization == "static":
        census["fact_q_gate"] = (tag, d)
        census["fact_q_in"] = (rd, d)
    elif config.factorization == "dynamic":
        census["fact_q_gate"] = (d, d)
        census["fact_q_in"] = (rd, d)
    elif config.factorization == "per_gate_full":
        for gate in GATES:
            census[f"fact_q_{gate}_gate"] = (tag, d)
            census[f"fact_q_{gate}_in"] = (rd, d)
            census[f"fact_p_{gate}_gate"] = (tag, d)
            census[f"fact_p_{gate}_in"] = (e, d)
    p_dim, q_dim = config.gate_input_dims()
    for gate in GATES:
        census[f"gate_{gate}_prev"] = (p_dim, d)
        census[f"gate_{gate}_att"] = (q_dim, d)
        census[f"gate_{gate}_cross"] = (d, d)
        census[f"gate_{gate}_bias"] = (1, d)
    census["out_proj"] = (d, config.vocab_size)
    return census


class SceneInputs:
    """Constant tensors for one scene, shared by every step of a graph."""

    def __init__(self, scene, config):
        if scene.region_dim != config.region_dim:
            raise DimensionError(
                f"scene region_dim {scene.region_dim} vs model {config.region_dim}")
        if scene.k_max != config.k_max:
            raise DimensionError(
                f"scene k_max {scene.k_max} vs model {config.k_max}")
        if scene.tags.shape[0] != config.tag_dim:
            raise DimensionError(
                f"scene tag_dim {scene.tags.shape[0]} vs model {config.tag_dim}")
        self.mask = np.asarray(scene.region_mask, dtype=bool)
        self.regions = ad.constant(scene.padded_regions())
        self.tags = ad.constant(scene.tags[None, :])
        self.vbar = ad.constant(region_mean(scene.padded_regions(), self.mask))


class Model:
    """Parameter registry plus the variant's forward pipeline."""

    def __init__(self, config):
        self.config = config
        self.params = ad.ParameterRegistry()
        for name, shape in expected_census(config).items():
            self.params.create(name, shape, config.initializer, config.seed)
        p = self.params
        self.fdc = FdcParams(hidden_proj=p["att_hidden"], score_proj=p["att_score"],
                             init_h=p["init_h"], init_c=p["init_c"])
        self.mrrc = MrrcParams(
            left_in=p["mrrc_left_in"], left_ctx=p["mrrc_left_ctx"],
            left_bias=p["mrrc_left_bias"], left_out=p["mrrc_left_out"],
            right_in=p["mrrc_right_in"], right_ctx=p["mrrc_right_ctx"],
            right_bias=p["mrrc_right_bias"], right_out=p["mrrc_right_out"],
            out_bias=p["mrrc_out_bias"], prospect_source=config.mrrc_prospect)
        mode = config.factorization
        if mode == "none":
            self.factorization = FactorizationParams(mode="none")
        elif mode in ("static", "dynamic"):
            self.factorization = FactorizationParams(
                mode=mode, q_gate_proj=p["fact_q_gate"], q_in_proj=p["fact_q_in"])
        else:
            self.factorization = FactorizationParams(
                mode=mode,
                q_pairs={g: (p[f"fact_q_{g}_gate"], p[f"fact_q_{g}_in"])
                         for g in GATES},
                p_pairs={g: (p[f"fact_p_{g}_gate"], p[f"fact_p_{g}_in"])
                         for g in GATES})
        self.decoder = DecoderParams(
            prev_proj={g: p[f"gate_{g}_prev"] for g in GATES},
            att_proj={g: p[f"gate_{g}_att"] for g in GATES},
            cross_proj={g: p[f"gate_{g}_cross"] for g in GATES},
            bias={g: p[f"gate_{g}_bias"] for g in GATES},
            out_proj=p["out_proj"], embed=p["embed"])

    def scene_inputs(self, scene):
        return SceneInputs(scene, self.config)

    def init_state(self, scene_inputs):
        h0, c0 = fdc_init_state(scene_inputs.vbar, self.fdc)
        return DecoderState(h=h0, c=c0,
                            ctx_sum=context_zero(self.config.embed_dim), t=0)

    def forward_step(self, scene_inputs, state, prev_token):
        """One decode step: attend, embed, factorize, crossover, gate."""
        cfg = self.config
        q_raw, alpha = fdc_attend(state.h, scene_inputs.regions,
                                  scene_inputs.mask, self.fdc)
        p_raw = ad.matmul(ad.one_hot(prev_token, cfg.vocab_size),
                          self.decoder.embed)
        ctx = context_read(state.ctx_sum, state.t, cfg.ctx_mean_pool)

        mode = cfg.factorization
        if mode == "static":
            q_in = factorize_gate_input(q_raw, scene_inputs.tags, self.factorization)
            p_in = p_raw
        elif mode == "dynamic":
            q_in = factorize_gate_input(q_raw, state.h, self.factorization)
            p_in = p_raw
        elif mode == "per_gate_full":
            q_in = factorize_gate_input(q_raw, scene_inputs.tags,
                                        self.factorization, which="q")
            p_in = factorize_gate_input(p_raw, scene_inputs.tags,
                                        self.factorization, which="p")
        else:
            q_in, p_in = q_raw, p_raw

        if cfg.mrrc_prospect == "fdc_q":
            prospect_a, prospect_b = state.h, q_raw
        elif cfg.mrrc_prospect == "semantic_S":
            prospect_a, prospect_b = scene_inputs.tags, scene_inputs.tags
        else:
            prospect_a, prospect_b = state.h, state.h
        from .attention import mrrc_attend

        t_cross = mrrc_attend(prospect_a, prospect_b, ctx, self.mrrc)
        new_state, logits = decoder_step(state, p_in, q_in, t_cross, self.decoder)
        new_state = new_state.with_context(
            context_sum_update(state.ctx_sum, p_raw))
        return new_state, logits

    def step_fn(self, scene_inputs):
        """Closure matching the decoder module's step interface."""
        return lambda state, prev: self.forward_step(scene_inputs, state, prev)

    def forward_sequence(self, scene, caption):
        """Teacher-forced pass; returns (per-step logits, mean-NLL tensor)."""
        from .decoder import trim_padding

        inputs = self.scene_inputs(scene)
        caption = trim_padding(caption)
        if len(caption) < 2:
            raise ContractError("forward_sequence: caption needs BOS plus a token")
        state = self.init_state(inputs)
        logits_rows = []
        total = None
        steps = len(caption) - 1
        for idx in range(steps):
            state, logits = self.forward_step(inputs, state, caption[idx])
            logits_rows.append(logits)
            pick = ad.one_hot(caption[idx + 1], self.config.vocab_size)
            term = ad.tsum(ad.mul(ad.log_softmax(logits, axis=1), pick))
            total = term if total is None else ad.add(total, term)
        return logits_rows, ad.scale(total, -1.0 / steps)

    def sequence_nll(self, scene, caption):
        """Same quantity via the decoder module's standalone loop."""
        inputs = self.scene_inputs(scene)
        return teacher_forced_nll(self.step_fn(inputs), self.init_state(inputs),
                                  caption)

    def describe(self):
        lines = [f"{self.config.variant}: {self.params.total_count()} parameters"]
        for name, shape in self.params.census().items():
            lines.append(f"  {name} {shape}")
        return "\n".join(lines)


def build_model(config):
    """All parameters created from (initializer, seed); deterministic."""
    return Model(config)


MAGIC = "crosscap-checkpoint-v1"


def save_checkpoint(model, path):
    """Header line of JSON (magic, config, tensor directory) + raw doubles."""
    import os

    names = model.params.names()
    header = {
        "magic": MAGIC,
        "config": asdict(model.config),
        "tensors": [[n, list(model.params[n].shape)] for n in names],
    }
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8"))
        fh.write(b"\n")
        for n in names:
            fh.write(np.ascontiguousarray(model.params[n].data,
                                          dtype="<f8").tobytes())
    os.replace(tmp, path)


def load_checkpoint(path):
    """Rebuild the model and overwrite its tensors; census must match."""
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        if header.get("magic") != MAGIC:
            raise ContractError(f"{path} is not a model checkpoint")
        config = ModelConfig(**header["config"])
        model = Model(config)
        expected = model.params.census()
        stored = {name: tuple(shape) for name, shape in header["tensors"]}
        if stored != expected:
            missing = sorted(set(expected) - set(stored))
            extra = sorted(set(stored) - set(expected))
            mismatched = sorted(n for n in set(stored) & set(expected)
                                if stored[n] != expected[n])
            raise ContractError(
                f"checkpoint census mismatch: missing={missing} "
                f"extra={extra} shape-mismatch={mismatched}")
        for name, shape in header["tensors"]:
            count = int(np.prod(shape))
            raw = fh.read(count * 8)
            if len(raw) != count * 8:
                raise ContractError(f"checkpoint truncated at tensor '{name}'")
            model.params[name].data = np.frombuffer(raw, dtype="<f8").reshape(
                shape).copy()
        if fh.read(1):
            raise ContractError("checkpoint has trailing bytes")
    return model
