"""Synthetic scene->caption task, dataset files, vocabulary and batching.

Scenes stand in for detector output: each carries a handful of region
feature vectors (noisy copies of per-object prototypes), a tag probability
vector, and at least one token-id caption. The grammar is built so a
nearest-prototype decoder recovers the objects essentially always, which
makes memorization failures attributable to the model rather than the data.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DatasetParseError, DatasetSchemaError

PAD, BOS, EOS, UNK = 0, 1, 2, 3
RESERVED = ("<pad>", "<bos>", "<eos>", "<unk>")

DEFAULT_NOUNS = ("cube", "ball", "cone", "disk", "ring", "slab", "tube", "wedge")
DEFAULT_ADJECTIVES = ("red", "blue", "green", "tan")
DEFAULT_VERBS = ("touches", "holds", "faces")


class Vocabulary:
    """Token <-> id bijection with fixed reserved ids 0..3."""

    def __init__(self, words):
        self.tokens = list(RESERVED) + [w for w in words if w not in RESERVED]
        self.index = {w: i for i, w in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ContractError("vocabulary words must be unique")

    def __len__(self):
        return len(self.tokens)

    def id_of(self, word):
        return self.index.get(word, UNK)

    def word_of(self, token_id):
        return self.tokens[token_id]

    def encode(self, words):
        return [BOS] + [self.id_of(w) for w in words] + [EOS]

    def decode(self, token_ids):
        return [self.tokens[t] for t in token_ids
                if t not in (PAD, BOS, EOS)]

    def save(self, path):
        _atomic_write(path, "\n".join(self.tokens) + "\n")

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            tokens = [line.rstrip("\n") for line in fh if line.rstrip("\n")]
        if tokens[:4] != list(RESERVED):
            raise DatasetParseError(
                f"vocabulary file {path} must start with {RESERVED}")
        vocab = cls.__new__(cls)
        vocab.tokens = tokens
        vocab.index = {w: i for i, w in enumerate(tokens)}
        return vocab


@dataclass
class SceneExample:
    """One training instance: regions, live-region mask, tags, captions."""

    id: str
    regions: np.ndarray        # (k, region_dim), live regions only
    region_mask: np.ndarray    # (k_max,) bool, first k entries True
    tags: np.ndarray           # (tag_dim,), values in [0, 1]
    captions: list             # list of token-id lists, BOS ... EOS

    def __post_init__(self):
        self.regions = np.asarray(self.regions, dtype=float)
        self.region_mask = np.asarray(self.region_mask, dtype=bool)
        self.tags = np.asarray(self.tags, dtype=float)
        if self.regions.shape[0] != int(self.region_mask.sum()):
            raise DatasetSchemaError(
                f"scene {self.id}: {self.regions.shape[0]} regions but mask "
                f"has {int(self.region_mask.sum())} live slots")
        if self.tags.min() < 0.0 or self.tags.max() > 1.0:
            raise DatasetSchemaError(
                f"scene {self.id}: tag values must lie in [0, 1]")
        if not self.captions:
            raise DatasetSchemaError(f"scene {self.id}: needs at least one caption")
        for cap in self.captions:
            if len(cap) < 2 or cap[0] != BOS or cap[-1] != EOS:
                raise DatasetSchemaError(
                    f"scene {self.id}: captions must run BOS ... EOS")

    @property
    def k_max(self):
        return self.region_mask.shape[0]

    @property
    def region_dim(self):
        return self.regions.shape[1]

    def padded_regions(self):
        """(k_max, region_dim) with zero rows where the mask is False."""
        out = np.zeros((self.k_max, self.region_dim))
        out[: self.regions.shape[0]] = self.regions
        return out

    def __eq__(self, other):
        return (isinstance(other, SceneExample)
                and self.id == other.id
                and np.array_equal(self.regions, other.regions)
                and np.array_equal(self.region_mask, other.region_mask)
                and np.array_equal(self.tags, other.tags)
                and self.captions == other.captions)


class SyntheticGrammar:
    """Deterministic object/attribute/verb world behind the synthetic scenes.

    Every (noun, adjective) pair owns a distinct unit-length region
    prototype; emitted regions are prototype + Gaussian noise. The verb of
    a scene is a fixed function of the two described nouns so captions are
    a deterministic function of recoverable scene content. Tag entries mark
    which nouns/adjectives/verbs are present.
    """

    def __init__(self, nouns=DEFAULT_NOUNS, adjectives=DEFAULT_ADJECTIVES,
                 verbs=DEFAULT_VERBS, region_dim=32, tag_dim=16, k_max=6,
                 noise_sigma=0.05, seed=0):
        self.nouns = tuple(nouns)
        self.adjectives = tuple(adjectives)
        self.verbs = tuple(verbs)
        self.region_dim = int(region_dim)
        self.tag_dim = int(tag_dim)
        self.k_max = int(k_max)
        self.noise_sigma = float(noise_sigma)
        self.seed = int(seed)
        n_slots = len(self.nouns) + len(self.adjectives) + len(self.verbs)
        if self.tag_dim < n_slots:
            raise ContractError(
                f"tag_dim {self.tag_dim} too small for {n_slots} grammar symbols")
        self.prototypes = self._build_prototypes()

    @property
    def pair_count(self):
        return len(self.nouns) * len(self.adjectives)

    def _build_prototypes(self):
        rng = np.random.default_rng(self.seed)
        min_dist = 4.0 * self.noise_sigma
        for _ in range(50):
            raw = rng.normal(size=(self.pair_count, self.region_dim))
            protos = raw / np.linalg.norm(raw, axis=1, keepdims=True)
            dists = np.linalg.norm(protos[:, None, :] - protos[None, :, :], axis=2)
            np.fill_diagonal(dists, np.inf)
            if dists.min() >= min_dist:
                return protos
        raise ContractError(
            f"could not place {self.pair_count} prototypes at pairwise "
            f"distance >= {min_dist} in {self.region_dim} dimensions")

    def pair_index(self, noun_idx, adj_idx):
        return noun_idx * len(self.adjectives) + adj_idx

    def verb_index(self, noun_a, noun_b):
        return (noun_a + noun_b) % len(self.verbs)

    def vocabulary(self):
        words = ["a"] + list(self.nouns) + list(self.adjectives) + list(self.verbs)
        return Vocabulary(words)

    def caption_words(self, objects):
        """Template caption over the first two objects (repeated if only one)."""
        first = objects[0]
        second = objects[1] if len(objects) > 1 else objects[0]
        verb = self.verbs[self.verb_index(first[0], second[0])]
        return ["a", self.adjectives[first[1]], self.nouns[first[0]], verb,
                "a", self.adjectives[second[1]], self.nouns[second[0]]]

    def tag_vector(self, objects, rng):
        present = np.zeros(self.tag_dim, dtype=bool)
        n, na = len(self.nouns), len(self.adjectives)
        for noun_idx, adj_idx in objects:
            present[noun_idx] = True
            present[n + adj_idx] = True
        first = objects[0]
        second = objects[1] if len(objects) > 1 else objects[0]
        present[n + na + self.verb_index(first[0], second[0])] = True
        tags = rng.uniform(0.0, 0.1, size=self.tag_dim)
        tags[present] = rng.uniform(0.7, 1.0, size=int(present.sum()))
        return tags


def generate_dataset(grammar, n, seed):
    """n deterministic scenes; each samples 1..k_max distinct object pairs."""
    if n < 1:
        raise ContractError(f"generate_dataset needs n >= 1, got {n}")
    rng = np.random.default_rng(seed)
    vocab = grammar.vocabulary()
    examples = []
    for i in range(n):
        k = int(rng.integers(1, grammar.k_max + 1))
        k = min(k, grammar.pair_count)
        pair_ids = rng.choice(grammar.pair_count, size=k, replace=False)
        objects = [(int(p) // len(grammar.adjectives), int(p) % len(grammar.adjectives))
                   for p in pair_ids]
        regions = np.stack([
            grammar.prototypes[grammar.pair_index(noun, adj)]
            + grammar.noise_sigma * rng.normal(size=grammar.region_dim)
            for noun, adj in objects])
        mask = np.zeros(grammar.k_max, dtype=bool)
        mask[:k] = True
        caption = vocab.encode(grammar.caption_words(objects))
        examples.append(SceneExample(
            id=f"s{i:04d}",
            regions=regions,
            region_mask=mask,
            tags=grammar.tag_vector(objects, rng),
            captions=[caption],
        ))
    return examples


def nearest_prototype_accuracy(grammar, examples):
    """Fraction of live regions whose nearest prototype is the true object.

    Independent check that captions are recoverable from features; used as
    the oracle guaranteeing the captioning task is solvable.
    """
    vocab = grammar.vocabulary()
    total, hits = 0, 0
    for ex in examples:
        words = vocab.decode(ex.captions[0])
        described = [(words[2], words[1]), (words[6], words[5])]
        for region, (noun, adj) in zip(ex.regions[:2], described[: ex.regions.shape[0]]):
            true_pair = grammar.pair_index(grammar.nouns.index(noun),
                                           grammar.adjectives.index(adj))
            dists = np.linalg.norm(grammar.prototypes - region, axis=1)
            hits += int(np.argmin(dists) == true_pair)
            total += 1
    return hits / total


def _fmt_floats(arr):
    return ",".join(repr(float(x)) for x in np.asarray(arr).reshape(-1))


def _atomic_write(path, text):
    import os
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


FIELD_ORDER = ("id", "k", "region_dim", "regions", "tag_dim", "tags", "captions")


def save_dataset(examples, path):
    """One scene per line; field order id k region_dim regions tag_dim tags
    captions caption... (see README for the exact grammar)."""
    lines = []
    for ex in examples:
        parts = [
            f"id={ex.id}",
            f"k={ex.regions.shape[0]}",
            f"kmax={ex.k_max}",
            f"region_dim={ex.region_dim}",
            f"regions={_fmt_floats(ex.regions)}",
            f"tag_dim={ex.tags.shape[0]}",
            f"tags={_fmt_floats(ex.tags)}",
            f"captions={len(ex.captions)}",
        ]
        parts += [f"caption={','.join(str(t) for t in cap)}" for cap in ex.captions]
        lines.append(" ".join(parts))
    _atomic_write(path, "\n".join(lines) + ("\n" if lines else ""))


_EXPECTED = ("id", "k", "kmax", "region_dim", "regions", "tag_dim", "tags", "captions")


def _parse_record(line, lineno):
    fields = []
    for chunk in line.split():
        if "=" not in chunk:
            raise DatasetParseError(f"line {lineno}: field '{chunk}' lacks '='")
        key, value = chunk.split("=", 1)
        fields.append((key, value))
    keys = [k for k, _ in fields]
    if keys[: len(_EXPECTED)] != list(_EXPECTED):
        raise DatasetSchemaError(
            f"line {lineno}: fields must start with {' '.join(_EXPECTED)}, "
            f"got {' '.join(keys[:len(_EXPECTED)])}")
    head = dict(fields[: len(_EXPECTED)])
    tail = fields[len(_EXPECTED):]
    try:
        k = int(head["k"])
        k_max = int(head["kmax"])
        region_dim = int(head["region_dim"])
        tag_dim = int(head["tag_dim"])
        n_caps = int(head["captions"])
        regions = np.array([float(x) for x in head["regions"].split(",")])
        tags = np.array([float(x) for x in head["tags"].split(",")])
    except ValueError as exc:
        raise DatasetParseError(f"line {lineno}: {exc}") from exc
    if regions.size != k * region_dim:
        raise DatasetSchemaError(
            f"line {lineno}: regions has {regions.size} values, "
            f"expected k*region_dim = {k * region_dim}")
    if tags.size != tag_dim:
        raise DatasetSchemaError(
            f"line {lineno}: tags has {tags.size} values, expected {tag_dim}")
    if len(tail) != n_caps:
        raise DatasetSchemaError(
            f"line {lineno}: declared {n_caps} captions, found {len(tail)}")
    captions = []
    for key, value in tail:
        if key != "caption":
            raise DatasetSchemaError(
                f"line {lineno}: unknown trailing field '{key}'")
        try:
            captions.append([int(x) for x in value.split(",")])
        except ValueError as exc:
            raise DatasetParseError(f"line {lineno}: {exc}") from exc
    mask = np.zeros(k_max, dtype=bool)
    if k > k_max:
        raise DatasetSchemaError(f"line {lineno}: k {k} exceeds kmax {k_max}")
    mask[:k] = True
    try:
        return SceneExample(
            id=head["id"],
            regions=regions.reshape(k, region_dim),
            region_mask=mask,
            tags=tags,
            captions=captions,
        )
    except DatasetSchemaError as exc:
        raise DatasetSchemaError(f"line {lineno}: {exc}") from exc


def load_dataset(path):
    examples = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            examples.append(_parse_record(line, lineno))
    return examples


@dataclass
class Batch:
    """Padded view over a slice of examples (one caption per example)."""

    examples: list
    regions: np.ndarray       # (b, k_max, region_dim)
    region_mask: np.ndarray   # (b, k_max) bool
    tags: np.ndarray          # (b, tag_dim)
    captions: np.ndarray      # (b, L) int, PAD-padded
    caption_mask: np.ndarray  # (b, L) bool, True on real tokens

    def __len__(self):
        return len(self.examples)


def make_batches(examples, batch_size, seed=0, shuffle=False):
    """Padded mini-batches; order preserved unless shuffle; last batch kept."""
    if not examples:
        raise ContractError("make_batches: empty dataset")
    if batch_size < 1:
        raise ContractError(f"make_batches: batch_size must be >= 1, got {batch_size}")
    order = np.arange(len(examples))
    if shuffle:
        order = np.random.default_rng(seed).permutation(order)
    for start in range(0, len(examples), batch_size):
        chunk = [examples[i] for i in order[start:start + batch_size]]
        k_max = max(ex.k_max for ex in chunk)
        rd = chunk[0].region_dim
        regions = np.zeros((len(chunk), k_max, rd))
        mask = np.zeros((len(chunk), k_max), dtype=bool)
        tags = np.stack([ex.tags for ex in chunk])
        caps = [ex.captions[0] for ex in chunk]
        longest = max(len(c) for c in caps)
        cap_arr = np.full((len(chunk), longest), PAD, dtype=int)
        cap_mask = np.zeros((len(chunk), longest), dtype=bool)
        for row, ex in enumerate(chunk):
            regions[row, : ex.regions.shape[0]] = ex.regions
            mask[row, : ex.k_max] = ex.region_mask
            cap_arr[row, : len(caps[row])] = caps[row]
            cap_mask[row, : len(caps[row])] = True
        yield Batch(examples=chunk, regions=regions, region_mask=mask,
                    tags=tags, captions=cap_arr, caption_mask=cap_mask)
