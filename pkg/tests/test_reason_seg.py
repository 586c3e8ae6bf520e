import numpy as np
import pytest
import torch

from exceptions import ModelNotReadyError, ValidationError
from scenes import shape_mask
from segmentation import (
    FAMILIES,
    LossWeights,
    ReasonSegConfig,
    ReasonSegModel,
    Vocabulary,
    build_query,
    ciou,
    compose_scene,
    default_vocabulary,
    extract_seg_embedding,
    family_for,
    generate_synthetic_corpus,
    giou,
    load_corpus,
    load_reason_seg,
    predict_mask,
    save_corpus,
    train_reason_seg,
)
from segmentation.tokenizer import SEG, query_object
from tools import pil_to_mask


def small_config(**overrides) -> ReasonSegConfig:
    values = dict(image_size=32, d_model=32, fusion_dim=32, num_layers=1, num_heads=4, decoder_layers=1,
                  batch_size=4, steps=3, corpus_size=12, held_out=4)
    values.update(overrides)
    return ReasonSegConfig(**values)


def test_vocabulary_starts_with_specials():
    vocab = default_vocabulary()
    assert vocab.tokens[:5] == ["<pad>", "<bos>", "<eos>", "<seg>", "<unk>"]
    assert vocab.seg_id == 3
    with pytest.raises(ValidationError):
        Vocabulary(["red", "<pad>"])
    with pytest.raises(ValidationError):
        Vocabulary(["<pad>", "<bos>", "<eos>", "<seg>", "<unk>", "red", "red"])


def test_unknown_words_map_to_unk():
    vocab = default_vocabulary()
    assert vocab.encode("red zebra") == [vocab.index["red"], vocab.unk_id]


def test_build_query_templates_the_object():
    assert build_query("food that contains the most vitamin").raw_text == \
        "Please segment the food that contains the most vitamin in the image"
    assert build_query("an apple").raw_text == "Please segment the apple in the image"
    assert build_query("largest red circle").raw_text == "Please segment the largest red circle in the image"
    with pytest.raises(ValidationError):
        build_query("the")


def test_query_seg_position_points_at_seg_token():
    vocab = default_vocabulary()
    query = build_query("red circle", vocab)
    ids = query.input_ids()
    assert ids[0] == vocab.bos_id and ids[-1] == vocab.eos_id
    assert len(query.seg_positions) == 1
    assert ids[query.seg_positions[0]] == vocab.seg_id
    assert vocab.decode(query.response_ids) == f"Sure , it is {SEG} ."
    assert query_object(query.raw_text) == "red circle"


def test_extract_seg_embedding_is_ordered_and_pure():
    torch.manual_seed(0)
    projection = torch.nn.Linear(4, 3)
    hidden = torch.randn(8, 4)
    hidden[6] = hidden[2]
    single = extract_seg_embedding(hidden, [5], projection)
    assert single.shape == (1, 3)
    pair = extract_seg_embedding(hidden, [2, 6], projection)
    assert torch.equal(pair[0], pair[1])
    reversed_pair = extract_seg_embedding(hidden, [5, 2], projection)
    assert torch.equal(reversed_pair[0], single[0])
    with pytest.raises(ValidationError):
        extract_seg_embedding(hidden, [8], projection)
    with pytest.raises(ValidationError):
        extract_seg_embedding(hidden, [], projection)


def test_corpus_is_deterministic():
    first = generate_synthetic_corpus(0, 4, image_size=32)
    second = generate_synthetic_corpus(0, 4, image_size=32)
    for a, b in zip(first, second):
        assert torch.equal(a.image, b.image)
        assert torch.equal(a.gt_mask, b.gt_mask)
        assert a.query == b.query
        assert a.family == b.family


def test_corpus_rejects_empty_size():
    with pytest.raises(ValidationError):
        generate_synthetic_corpus(0, 0)


def test_gt_mask_covers_referenced_shape():
    for idx in range(8):
        layout = compose_scene(3, idx, image_size=32)
        sample = generate_synthetic_corpus(3, idx + 1, image_size=32)[idx]
        assert sample.family == layout.family
        if not layout.targets:
            continue
        expected = pil_to_mask(shape_mask(layout.shapes[layout.targets[0]], 32))
        assert torch.equal(sample.gt_mask, expected)


def test_background_family_masks_everything_but_shapes():
    ratios = {"background": 1.0}
    assert family_for(0, 0, ratios) == "background"
    sample = generate_synthetic_corpus(0, 1, image_size=32, ratios=ratios)[0]
    layout = compose_scene(0, 0, image_size=32, ratios=ratios)
    assert sample.object_text == "background"
    for shape in layout.shapes:
        inside = pil_to_mask(shape_mask(shape, 32)).bool()
        assert (sample.gt_mask[inside] == 0).all()
    assert sample.gt_mask.sum() > 0


def test_family_distribution_follows_ratios():
    n = 10000
    counts = {family: 0 for family in FAMILIES}
    for idx in range(n):
        counts[family_for(0, idx)] += 1
    for family in FAMILIES:
        assert abs(counts[family] / n - 0.2) <= 0.02


def test_family_distribution_follows_configured_ratios():
    n = 10000
    ratios = {"attribute": 0.5, "spatial": 0.3, "background": 0.2}
    counts = {family: 0 for family in FAMILIES}
    for idx in range(n):
        counts[family_for(1, idx, ratios)] += 1
    for family in FAMILIES:
        assert abs(counts[family] / n - ratios.get(family, 0.0)) <= 0.02


def test_unknown_family_ratio_is_rejected():
    with pytest.raises(ValidationError):
        family_for(0, 0, {"colour": 1.0})


def test_corpus_strings_round_trip_through_tokenizer():
    vocab = default_vocabulary()
    for sample in generate_synthetic_corpus(1, 20, image_size=32):
        assert vocab.decode(vocab.encode(sample.query.raw_text)) == sample.query.raw_text
        assert vocab.unk_id not in sample.query.token_ids


def test_save_and_load_corpus(tmp_path):
    samples = generate_synthetic_corpus(2, 3, image_size=32)
    save_corpus(samples, tmp_path / "corpus")
    loaded = load_corpus(tmp_path / "corpus")
    assert len(loaded) == 3
    for original, restored in zip(samples, loaded):
        assert torch.equal(original.image, restored.image)
        assert torch.equal(original.gt_mask, restored.gt_mask)
        assert original.query == restored.query
        assert original.family == restored.family


def test_load_corpus_from_empty_directory(tmp_path):
    with pytest.raises(ValidationError):
        load_corpus(tmp_path)


def test_untrained_prediction_shape():
    model = ReasonSegModel(config=small_config())
    prediction = predict_mask(model, torch.rand(1, 3, 32, 32), build_query("red circle"))
    assert prediction.probabilities.shape == (1, 32, 32)
    assert prediction.probabilities.min() >= 0 and prediction.probabilities.max() <= 1
    assert set(prediction.binary().unique().tolist()) <= {0.0, 1.0}


def test_prediction_ignores_padding_and_is_deterministic():
    torch.manual_seed(0)
    model = ReasonSegModel(config=small_config())
    image = torch.rand(1, 3, 32, 32)
    query = build_query("largest square")
    plain = predict_mask(model, image, query).probabilities
    padded = predict_mask(model, image, query, pad_to=30).probabilities
    assert torch.allclose(plain, padded, atol=1e-5)
    assert torch.equal(plain, predict_mask(model, image, query).probabilities)


def test_prediction_validates_inputs():
    model = ReasonSegModel(config=small_config())
    query = build_query("red circle")
    with pytest.raises(ValidationError):
        predict_mask(model, torch.rand(2, 3, 32, 32), query)
    broken = query.__class__(query.raw_text, query.token_ids, query.response_ids, (1,))
    with pytest.raises(ValidationError):
        predict_mask(model, torch.rand(1, 3, 32, 32), broken)


def test_iou_self_checks():
    mask = torch.zeros(8, 8)
    mask[2:5, 2:5] = 1.0
    assert giou([mask], [mask]) == 1.0
    assert giou([mask], [1.0 - mask]) == 0.0
    assert giou([torch.zeros(4, 4)], [torch.zeros(4, 4)]) == 1.0
    half = torch.zeros(8, 8)
    half[2:5, 2:3] = 1.0
    assert ciou([mask, half], [mask, mask]) == pytest.approx((9 + 3) / (9 + 9))
    with pytest.raises(ValidationError):
        giou([mask], [])


def test_tiny_training_run(tmp_path):
    config = small_config()
    corpus = generate_synthetic_corpus(config.seed, config.corpus_size, config.image_size)
    model, report = train_reason_seg(corpus, LossWeights(), config, checkpoint_dir=tmp_path,
                                     log_path=tmp_path / "loss.csv")
    assert len(report.history) == config.steps
    assert 0.0 <= report.giou <= 1.0
    assert set(report.per_family) <= set(FAMILIES)
    assert (tmp_path / "loss.csv").read_text().splitlines()[0] == "step,text_loss,mask_loss,total"

    restored = load_reason_seg(tmp_path / "reason_seg.pt")
    query, image = corpus[0].query, corpus[0].image
    assert torch.allclose(predict_mask(model, image, query).probabilities,
                          predict_mask(restored, image, query).probabilities)


def test_training_is_deterministic():
    config = small_config()
    corpus = generate_synthetic_corpus(config.seed, config.corpus_size, config.image_size)
    _, first = train_reason_seg(corpus, config=config)
    _, second = train_reason_seg(corpus, config=config)
    assert first.history == second.history


def test_training_needs_a_held_out_split():
    config = small_config(held_out=12)
    corpus = generate_synthetic_corpus(0, 12, 32)
    with pytest.raises(ValidationError):
        train_reason_seg(corpus, config=config)


def test_load_missing_checkpoint(tmp_path):
    with pytest.raises(ModelNotReadyError):
        load_reason_seg(tmp_path / "missing.pt")


@pytest.mark.slow
def test_superlative_queries_are_learned():
    config = ReasonSegConfig(steps=5000, corpus_size=3000, held_out=200, family_ratios={"superlative": 1.0})
    corpus = generate_synthetic_corpus(config.seed, config.corpus_size, config.image_size, config.family_ratios)
    model, report = train_reason_seg(corpus, config=config)
    assert report.giou >= 0.8

    sample = next(s for s in corpus[-config.held_out:] if len(s.object_text.split()) == 2)
    kind = sample.object_text.split()[1]
    largest = predict_mask(model, sample.image, build_query(f"largest {kind}")).binary()[0]
    smallest = predict_mask(model, sample.image, build_query(f"smallest {kind}")).binary()[0]
    assert giou([largest], [smallest]) < 0.2


@pytest.mark.slow
def test_zero_mask_weight_leaves_mask_head_untrained():
    config = ReasonSegConfig(steps=500, corpus_size=600, held_out=100, family_ratios={"superlative": 1.0})
    corpus = generate_synthetic_corpus(config.seed, config.corpus_size, config.image_size, config.family_ratios)
    _, baseline = train_reason_seg(corpus, config=config.copy(update={"steps": 0}))
    _, report = train_reason_seg(corpus, LossWeights(lambda_mask=0.0), config)
    assert abs(report.giou - baseline.giou) <= 0.05
    texts = np.array([r["text_loss"] for r in report.history])
    assert texts[-20:].mean() < texts[:20].mean()
