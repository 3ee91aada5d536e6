import numpy as np
import pytest

from crosscap.data import (
    BOS,
    EOS,
    PAD,
    SceneExample,
    SyntheticGrammar,
    Vocabulary,
    generate_dataset,
    load_dataset,
    make_batches,
    nearest_prototype_accuracy,
    save_dataset,
)
from crosscap.errors import ContractError, DatasetParseError, DatasetSchemaError


@pytest.fixture(scope="module")
def grammar():
    return SyntheticGrammar(seed=0)


def test_vocabulary_reserved_ids():
    vocab = Vocabulary(["a", "cube"])
    assert vocab.id_of("<pad>") == PAD == 0
    assert vocab.id_of("<bos>") == BOS == 1
    assert vocab.id_of("<eos>") == EOS == 2
    assert vocab.id_of("never-seen") == 3
    assert vocab.word_of(vocab.id_of("cube")) == "cube"


def test_vocabulary_round_trip(tmp_path, grammar):
    vocab = grammar.vocabulary()
    path = tmp_path / "vocab.txt"
    vocab.save(path)
    loaded = Vocabulary.load(path)
    assert loaded.tokens == vocab.tokens


def test_generate_deterministic(grammar):
    a = generate_dataset(grammar, 10, seed=7)
    b = generate_dataset(grammar, 10, seed=7)
    assert a == b
    c = generate_dataset(grammar, 10, seed=8)
    assert a != c


def test_generate_rejects_zero():
    with pytest.raises(ContractError):
        generate_dataset(SyntheticGrammar(seed=0), 0, seed=0)


def test_degenerate_grammar_noiseless():
    g = SyntheticGrammar(nouns=("cube",), adjectives=("red",), verbs=("touches",),
                         noise_sigma=0.0, tag_dim=4, seed=1)
    examples = generate_dataset(g, 6, seed=2)
    captions = {tuple(ex.captions[0]) for ex in examples}
    assert len(captions) == 1
    for ex in examples:
        for region in ex.regions:
            assert np.array_equal(region, g.prototypes[0])


def test_nearest_prototype_recovery(grammar):
    examples = generate_dataset(grammar, 200, seed=3)
    assert nearest_prototype_accuracy(grammar, examples) >= 0.99


def test_prototype_separation(grammar):
    d = np.linalg.norm(grammar.prototypes[:, None] - grammar.prototypes[None, :], axis=2)
    np.fill_diagonal(d, np.inf)
    assert d.min() >= 4.0 * grammar.noise_sigma


def test_captions_well_formed(grammar):
    vocab = grammar.vocabulary()
    for ex in generate_dataset(grammar, 20, seed=4):
        cap = ex.captions[0]
        assert cap[0] == BOS and cap[-1] == EOS
        assert all(t < len(vocab) for t in cap)
        words = vocab.decode(cap)
        assert len(words) == 7 and words[0] == "a" and words[4] == "a"


def test_round_trip_identity(tmp_path, grammar):
    examples = generate_dataset(grammar, 3, seed=5)
    path = tmp_path / "scenes.txt"
    save_dataset(examples, path)
    assert load_dataset(path) == examples


def test_tag_out_of_range_is_schema_error(tmp_path, grammar):
    examples = generate_dataset(grammar, 1, seed=6)
    path = tmp_path / "scenes.txt"
    save_dataset(examples, path)
    text = path.read_text()
    first_tag = text.split("tags=")[1].split(",")[0]
    path.write_text(text.replace(f"tags={first_tag},", "tags=1.5,"))
    with pytest.raises(DatasetSchemaError, match=r"\[0, 1\]"):
        load_dataset(path)


def test_truncated_record_names_line(tmp_path, grammar):
    examples = generate_dataset(grammar, 2, seed=7)
    path = tmp_path / "scenes.txt"
    save_dataset(examples, path)
    lines = path.read_text().splitlines()
    lines[1] = lines[1][: len(lines[1]) // 2]
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises((DatasetParseError, DatasetSchemaError), match="line 2"):
        load_dataset(path)


def test_unknown_trailing_field_rejected(tmp_path, grammar):
    examples = generate_dataset(grammar, 1, seed=8)
    path = tmp_path / "scenes.txt"
    save_dataset(examples, path)
    path.write_text(path.read_text().rstrip("\n") + " extra=1\n")
    with pytest.raises(DatasetSchemaError):
        load_dataset(path)


def test_batch_sizes(grammar):
    examples = generate_dataset(grammar, 5, seed=9)
    sizes = [len(b) for b in make_batches(examples, 2)]
    assert sizes == [2, 2, 1]


def test_batch_order_preserved_without_shuffle(grammar):
    examples = generate_dataset(grammar, 5, seed=10)
    ids = [ex.id for b in make_batches(examples, 2, shuffle=False) for ex in b.examples]
    assert ids == [ex.id for ex in examples]


def test_batch_shuffle_deterministic(grammar):
    examples = generate_dataset(grammar, 8, seed=11)

    def order(seed):
        return [ex.id for b in make_batches(examples, 3, seed=seed, shuffle=True)
                for ex in b.examples]

    assert order(1) == order(1)
    assert order(1) != order(2)


def test_masked_positions_are_zero_vectors(grammar):
    examples = generate_dataset(grammar, 10, seed=12)
    for batch in make_batches(examples, 4):
        masked = batch.regions[~batch.region_mask]
        assert masked.size == 0 or np.abs(masked).max() == 0.0


def test_empty_dataset_rejected():
    with pytest.raises(ContractError):
        next(make_batches([], 2))


def test_scene_invariants_enforced():
    with pytest.raises(DatasetSchemaError):
        SceneExample(id="bad", regions=np.zeros((1, 4)),
                     region_mask=np.array([True]), tags=np.array([1.5]),
                     captions=[[BOS, EOS]])
    with pytest.raises(DatasetSchemaError):
        SceneExample(id="bad", regions=np.zeros((1, 4)),
                     region_mask=np.array([True]), tags=np.array([0.5]),
                     captions=[[5, 6]])
