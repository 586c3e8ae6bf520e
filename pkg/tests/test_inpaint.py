import pytest
import torch

from exceptions import ModelNotReadyError, ValidationError
from inpaint import (
    InpaintConfig,
    InpaintModel,
    LatentDistribution,
    SyntheticInpaintDataset,
    count_parameters,
    evaluate_inpainter,
    inpaint,
    load_checkpoint,
    masked_region_mse,
    mean_color_fill,
    save_checkpoint,
    split_dataset,
    train_inpainter,
    vae_inpaint_loss,
)


def small_config(**overrides) -> InpaintConfig:
    values = dict(image_size=16, channel_widths=[8, 16], latent_dim=8, head_channels=4,
                  batch_size=4, steps=3, num_images=8, held_out=4, checkpoint_every=0)
    values.update(overrides)
    return InpaintConfig(**values)


def _standard_normal(batch=1, dim=8):
    return LatentDistribution(torch.zeros(batch, dim), torch.zeros(batch, dim))


def test_loss_weights_masked_pixels():
    reconstruction = torch.zeros(1, 1, 2, 2)
    target = torch.zeros(1, 1, 2, 2)
    target[0, 0, 0, 0] = 0.5
    mask = torch.zeros(1, 1, 2, 2)
    mask[0, 0, 0, 0] = 1.0
    loss = vae_inpaint_loss(reconstruction, target, mask, _standard_normal(), inside_weight=4.0)
    assert loss.reconstruction.item() == pytest.approx(0.25)
    assert loss.kl.item() == pytest.approx(0.0)
    assert loss.total.item() == pytest.approx(0.25)


def test_loss_is_zero_for_perfect_reconstruction():
    target = torch.rand(2, 3, 4, 4)
    mask = torch.ones(2, 1, 4, 4)
    loss = vae_inpaint_loss(target.clone(), target, mask, _standard_normal(2))
    assert loss.total.item() == 0.0


def test_loss_kl_grows_away_from_prior():
    target = torch.rand(1, 3, 4, 4)
    shifted = LatentDistribution(torch.ones(1, 8), torch.zeros(1, 8))
    loss = vae_inpaint_loss(target, target, torch.zeros(1, 1, 4, 4), shifted, beta=1.0)
    assert loss.kl.item() == pytest.approx(0.5)


def test_loss_rejects_bad_arguments():
    target = torch.rand(1, 3, 4, 4)
    mask = torch.zeros(1, 1, 4, 4)
    with pytest.raises(ValidationError):
        vae_inpaint_loss(torch.rand(1, 3, 2, 2), target, mask, _standard_normal())
    with pytest.raises(ValidationError):
        vae_inpaint_loss(target, target, mask, _standard_normal(), beta=-1.0)
    with pytest.raises(ValidationError):
        vae_inpaint_loss(target, target, mask, _standard_normal(), inside_weight=0.5)


def test_config_validation():
    with pytest.raises(ValueError):
        InpaintConfig(image_size=48)
    with pytest.raises(ValueError):
        InpaintConfig(channel_widths=[])
    with pytest.raises(ValueError):
        InpaintConfig(tau=0.0)
    assert InpaintConfig().grid_size == 16


@pytest.mark.parametrize("fill", [0.0, 1.0])
def test_encode_shapes_are_finite(fill):
    model = InpaintModel(small_config())
    image = torch.zeros(2, 3, 16, 16)
    mask = torch.full((2, 1, 16, 16), fill)
    dist = model.encode(image, mask)
    assert dist.mean.shape == (2, 8)
    assert dist.log_variance.shape == (2, 8)
    assert torch.isfinite(dist.mean).all()
    assert torch.isfinite(dist.log_variance).all()


def test_encode_rejects_wrong_size():
    model = InpaintModel(small_config())
    with pytest.raises(ValidationError):
        model.encode(torch.zeros(1, 3, 32, 32), torch.zeros(1, 1, 32, 32))


def test_decode_is_deterministic_and_bounded():
    model = InpaintModel(small_config()).eval()
    z = torch.randn(3, 8)
    with torch.no_grad():
        first, second = model.decode(z), model.decode(z)
    assert first.shape == (3, 3, 16, 16)
    assert torch.equal(first, second)
    assert first.min() >= 0 and first.max() <= 1


def test_decode_rejects_non_finite_latent():
    model = InpaintModel(small_config())
    z = torch.zeros(1, 8)
    z[0, 0] = float("nan")
    with pytest.raises(ValidationError):
        model.decode(z)


def test_inpaint_requires_trained_model():
    image, mask = torch.rand(1, 3, 16, 16), torch.zeros(1, 1, 16, 16)
    with pytest.raises(ModelNotReadyError):
        inpaint(None, image, mask)
    with pytest.raises(ModelNotReadyError):
        inpaint(InpaintModel(small_config()), image, mask)


def test_inpaint_with_empty_mask_returns_original():
    model = InpaintModel(small_config())
    model.trained = True
    image = torch.rand(1, 3, 16, 16)
    assert torch.equal(inpaint(model, image, torch.zeros(1, 1, 16, 16)), image)


def test_inpaint_only_changes_masked_neighbourhood():
    model = InpaintModel(small_config())
    model.trained = True
    image = torch.rand(1, 3, 16, 16)
    mask = torch.zeros(1, 1, 16, 16)
    mask[..., 6:10, 6:10] = 1.0
    out = inpaint(model, image, mask, blend_radius=1)
    assert torch.equal(out[..., :4, :], image[..., :4, :])
    assert not torch.equal(out[..., 6:10, 6:10], image[..., 6:10, 6:10])


def test_disabling_hypergraph_removes_its_parameters():
    with_graph = InpaintModel(small_config())
    without = InpaintModel(small_config(use_hypergraph=False))
    graph_params = sum(count_parameters(m) for m in with_graph.hypergraph_modules())
    assert len(with_graph.hypergraph_modules()) == 2
    assert without.hypergraph_modules() == []
    assert graph_params > 0
    assert count_parameters(with_graph) - count_parameters(without) == graph_params


def test_identity_hypergraph_matches_plain_model():
    torch.manual_seed(3)
    with_graph = InpaintModel(small_config()).eval()
    for module in with_graph.hypergraph_modules():
        module.reset_to_identity()
    without = InpaintModel(small_config(use_hypergraph=False)).eval()
    without.load_state_dict(with_graph.state_dict(), strict=False)
    image = torch.rand(2, 3, 16, 16)
    mask = torch.zeros(2, 1, 16, 16)
    mask[..., 4:12, 4:12] = 1.0
    assert torch.equal(with_graph.generate(image, mask), without.generate(image, mask))


def test_mean_color_fill_uses_unmasked_mean():
    image = torch.zeros(1, 3, 2, 2)
    image[..., 0, :] = 1.0
    mask = torch.zeros(1, 1, 2, 2)
    mask[..., 1, 1] = 1.0
    filled = mean_color_fill(image, mask)
    assert filled[0, :, 1, 1].tolist() == pytest.approx([2 / 3] * 3)
    assert torch.equal(filled[..., 0, :], image[..., 0, :])


def test_masked_region_mse_needs_pixels():
    with pytest.raises(ValidationError):
        masked_region_mse(torch.zeros(1, 3, 2, 2), torch.zeros(1, 3, 2, 2), torch.zeros(1, 1, 2, 2))


def test_dataset_is_deterministic():
    first = SyntheticInpaintDataset(4, 16, seed=7)
    second = SyntheticInpaintDataset(4, 16, seed=7)
    other = SyntheticInpaintDataset(4, 16, seed=8)
    image, mask = first[2]
    assert image.shape == (3, 16, 16)
    assert mask.shape == (1, 16, 16)
    assert torch.equal(image, second[2][0])
    assert torch.equal(mask, second[2][1])
    assert not torch.equal(first.tensors()[0], other.tensors()[0])
    with pytest.raises(IndexError):
        first[4]


def test_dataset_masks_are_binary_and_nonempty():
    _, masks = SyntheticInpaintDataset(12, 32, seed=1).tensors()
    assert ((masks == 0) | (masks == 1)).all()
    assert (masks.sum(dim=(1, 2, 3)) > 0).all()


def test_write_cache(tmp_path):
    SyntheticInpaintDataset(3, 16, seed=0).write_cache(tmp_path)
    assert sorted(p.name for p in (tmp_path / "images").iterdir()) == ["00000.png", "00001.png", "00002.png"]
    assert len(list((tmp_path / "masks").iterdir())) == 3


def test_split_dataset_is_disjoint():
    train, held_out = split_dataset(small_config())
    assert len(train) == 8 and len(held_out) == 4
    assert train.seed != held_out.seed


def test_training_is_deterministic(tmp_path):
    config = small_config()
    dataset = SyntheticInpaintDataset(config.num_images, config.image_size, seed=0)
    _, first = train_inpainter(dataset, config)
    model, second = train_inpainter(dataset, config, checkpoint_dir=tmp_path, log_path=tmp_path / "loss.csv")
    assert len(first) == config.steps
    assert first == second
    assert model.trained
    assert (tmp_path / "inpaint.pt").exists()
    assert (tmp_path / "loss.csv").read_text().splitlines()[0] == "step,recon_loss,kl_loss,total"


def test_training_rejects_mismatched_dataset():
    with pytest.raises(ValidationError):
        train_inpainter(SyntheticInpaintDataset(4, 32), small_config())


def test_checkpoint_round_trip(tmp_path):
    model = InpaintModel(small_config(use_hypergraph=False))
    path = save_checkpoint(model, tmp_path / "ckpt" / "inpaint.pt", step=3)
    loaded = load_checkpoint(path)
    assert loaded.trained
    assert loaded.config == model.config
    for key, value in model.state_dict().items():
        assert torch.equal(value, loaded.state_dict()[key])


def test_load_missing_checkpoint():
    with pytest.raises(ModelNotReadyError):
        load_checkpoint("/nonexistent/inpaint.pt")


@pytest.mark.slow
def test_training_reduces_loss():
    config = small_config(image_size=32, channel_widths=[16, 32], latent_dim=32, steps=200,
                          num_images=64, batch_size=16)
    train, _ = split_dataset(config)
    _, history = train_inpainter(train, config)
    first = sum(r["total"] for r in history[:10]) / 10
    last = sum(r["total"] for r in history[-10:]) / 10
    assert last < first


@pytest.mark.slow
def test_trained_model_beats_mean_fill():
    config = InpaintConfig(image_size=32, channel_widths=[32, 64], latent_dim=64, steps=2000,
                           num_images=300, held_out=30, checkpoint_every=0)
    train, held_out = split_dataset(config)
    model, _ = train_inpainter(train, config)
    scores = evaluate_inpainter(model, held_out)
    assert scores["model_mse"] < scores["mean_fill_mse"]
