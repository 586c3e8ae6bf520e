import json
import math
from pathlib import Path

import pytest
import torch

from exceptions import BenchmarkValidationError, ValidationError
from evaluation import (
    PSNR_CAP_DB,
    BenchmarkRecord,
    RandomConvPyramid,
    clip_sim,
    evaluate_run,
    load_benchmark,
    lpips_proxy,
    mse,
    psnr,
    render_table,
    score_image,
    ssim,
    write_manifest,
)
from tools import save_image, save_mask

GOLDEN_TABLE = Path(__file__).parent / "data" / "table_golden.txt"


def _gradient(size=16):
    ramp = torch.linspace(0, 1, size)
    image = torch.stack([ramp[None, :].expand(size, size), ramp[:, None].expand(size, size),
                         (ramp[None, :] * ramp[:, None])])
    return image[None]


def _square_mask(size=16, lo=4, hi=12):
    mask = torch.zeros(1, 1, size, size)
    mask[..., lo:hi, lo:hi] = 1.0
    return mask


class FixedEmbedder:
    def __init__(self, image_vector, text_vector):
        self.image_vector = torch.tensor(image_vector)
        self.text_vector = torch.tensor(text_vector)

    def embed_image(self, image):
        return self.image_vector

    def embed_text(self, text):
        return self.text_vector


def test_mse_examples():
    a = torch.full((1, 3, 8, 8), 0.2)
    assert mse(a, a) == 0.0
    assert mse(a, a + 0.1) == pytest.approx(0.01)
    b = a.clone()
    b[..., 2:4, 2:4] = 0.9
    mask = torch.zeros(1, 1, 8, 8)
    mask[..., 2:4, 2:4] = 1.0
    assert mse(a, b, 1.0 - mask) == 0.0
    with pytest.raises(ValidationError):
        mse(a, b, torch.zeros(1, 1, 8, 8))


def test_psnr_examples():
    a = torch.full((1, 3, 8, 8), 0.2)
    assert psnr(a, a + 0.1) == pytest.approx(20.0)
    assert psnr(a, a + 0.5) == pytest.approx(10 * math.log10(4))
    assert psnr(a, a) == PSNR_CAP_DB


def test_metrics_are_symmetric():
    gen = torch.Generator().manual_seed(0)
    a, b = torch.rand(1, 3, 16, 16, generator=gen), torch.rand(1, 3, 16, 16, generator=gen)
    assert mse(a, b) == mse(b, a)
    assert psnr(a, b) == psnr(b, a)
    assert ssim(a, b) == pytest.approx(ssim(b, a))
    assert lpips_proxy(a, b) == pytest.approx(lpips_proxy(b, a))


def test_shape_mismatch_is_rejected():
    with pytest.raises(ValidationError):
        mse(torch.zeros(1, 3, 8, 8), torch.zeros(1, 3, 4, 4))


def test_ssim_identity_and_ordering():
    image = _gradient()
    assert ssim(image, image) == pytest.approx(1.0)
    noisy = (image + 0.01 * torch.randn(image.shape, generator=torch.Generator().manual_seed(1))).clamp(0, 1)
    assert ssim(image, 1.0 - image) < ssim(image, noisy) < 1.0


def test_ssim_of_constant_images():
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    a, b = torch.full((1, 3, 8, 8), 0.3), torch.full((1, 3, 8, 8), 0.7)
    luminance = (2 * 0.3 * 0.7 + c1) / (0.3 ** 2 + 0.7 ** 2 + c1)
    assert ssim(a, b) == pytest.approx(luminance * (c2 / c2), rel=1e-5)


def test_ssim_needs_a_full_window():
    with pytest.raises(ValidationError):
        ssim(torch.zeros(1, 3, 6, 6), torch.zeros(1, 3, 6, 6))


def test_lpips_proxy_identity_and_determinism():
    image = _gradient()
    assert lpips_proxy(image, image) == 0.0
    other = image.flip(-1)
    assert lpips_proxy(image, other, RandomConvPyramid(seed=3)) == lpips_proxy(image, other, RandomConvPyramid(seed=3))
    assert lpips_proxy(image, other) > 0.0


def test_clip_sim_with_fixed_embeddings():
    image = torch.zeros(1, 3, 8, 8)
    assert clip_sim(image, "a cat") is None
    assert clip_sim(image, "a cat", FixedEmbedder([1.0, 2.0], [2.0, 4.0])) == pytest.approx(1.0)
    assert clip_sim(image, "a cat", FixedEmbedder([1.0, 0.0], [0.0, 3.0])) == pytest.approx(0.0)


def test_background_metrics_ignore_changes_inside_the_mask():
    source = _gradient()
    mask = _square_mask()
    edited = source.clone()
    edited[..., 4:12, 4:12] = 0.0
    other = source.clone()
    other[..., 4:12, 4:12] = torch.rand(1, 3, 8, 8, generator=torch.Generator().manual_seed(2))
    first, second = score_image(source, edited, mask), score_image(source, other, mask)
    assert first.region == "background"
    assert first.psnr_db == second.psnr_db == PSNR_CAP_DB
    assert first.mse == second.mse == 0.0
    assert first.ssim == pytest.approx(1.0)
    assert first.lpips_proxy == pytest.approx(second.lpips_proxy)


def test_large_masks_do_not_inflate_background_scores():
    gen = torch.Generator().manual_seed(5)
    source = torch.rand(1, 3, 32, 32, generator=gen)
    edited = (source + 0.2 * torch.randn(1, 3, 32, 32, generator=gen)).clamp(0, 1)
    mask = torch.zeros(1, 1, 32, 32)
    mask[..., 2:30, 2:30] = 1.0
    report = score_image(source, edited, mask)
    a, b = source * (1.0 - mask), edited * (1.0 - mask)
    assert report.ssim == pytest.approx(ssim(a, b, region_mask=1.0 - mask))
    assert report.ssim < ssim(a, b)
    assert report.lpips_proxy > lpips_proxy(a, b)
    with pytest.raises(ValidationError):
        ssim(a, b, region_mask=torch.zeros(1, 1, 32, 32))


def test_full_image_scoring_sees_the_edit():
    source = _gradient()
    edited = source.clone()
    edited[..., 4:12, 4:12] = 0.0
    report = score_image(source, edited, _square_mask(), background=False)
    assert report.region == "full"
    assert report.mse > 0
    assert report.psnr_db < PSNR_CAP_DB


def _write_benchmark(root: Path, tags, mask_size=16):
    records = []
    for index, tag in enumerate(tags):
        source = save_image(_gradient().roll(index, dims=-1), root / "images" / f"{index}.png")
        mask = save_mask(_square_mask(mask_size, 2, 6), root / "masks" / f"{index}.png")
        records.append(BenchmarkRecord(source_image=source, instruction=f"Remove the shape {index}",
                                       editing_mask=mask, scenario_tag=tag))
    return write_manifest(records, root / "manifest.jsonl")


def test_load_well_formed_manifest(tmp_path):
    manifest = _write_benchmark(tmp_path, ["color", "left-right", "reasoning"])
    records = load_benchmark(manifest)
    assert len(records) == 3
    assert [r.group for r in records] == ["understanding", "understanding", "reasoning"]
    assert json.loads(manifest.read_text().splitlines()[0])["source_image"] == "images/0.png"


def test_manifest_rejects_unknown_tag(tmp_path):
    manifest = _write_benchmark(tmp_path, ["color", "color"])
    lines = manifest.read_text().splitlines()
    broken = json.loads(lines[1])
    broken["scenario_tag"] = "rotation"
    manifest.write_text(lines[0] + "\n" + json.dumps(broken) + "\n")
    with pytest.raises(BenchmarkValidationError) as info:
        load_benchmark(manifest)
    assert len(info.value.errors) == 1
    assert info.value.errors[0].startswith("line 2:")


def test_manifest_rejects_mismatched_mask(tmp_path):
    manifest = _write_benchmark(tmp_path, ["mirror"], mask_size=8)
    with pytest.raises(BenchmarkValidationError) as info:
        load_benchmark(manifest)
    assert "does not match" in info.value.errors[0]


def test_manifest_itemizes_every_problem(tmp_path):
    manifest = tmp_path / "manifest.jsonl"
    manifest.write_text(
        "not json\n"
        + json.dumps({"source_image": "missing.png", "instruction": "x", "editing_mask": "m.png",
                      "scenario_tag": "color"}) + "\n"
        + json.dumps({"instruction": "x"}) + "\n"
    )
    with pytest.raises(BenchmarkValidationError) as info:
        load_benchmark(manifest)
    errors = info.value.errors
    assert errors[0].startswith("line 1: invalid JSON")
    assert errors[1].startswith("line 2: missing file")
    assert all(e.startswith("line 3:") for e in errors[2:])
    assert len(errors) == 5
    with pytest.raises(BenchmarkValidationError):
        load_benchmark(tmp_path / "absent.jsonl")


def test_identity_run_scores_perfectly(tmp_path):
    records = load_benchmark(_write_benchmark(tmp_path, ["color", "addition", "reasoning"]))
    report = evaluate_run(records, [r.source_image for r in records], reports_out=tmp_path / "out")
    for entry in report["per_record"]:
        assert entry["psnr_db"] == PSNR_CAP_DB
        assert entry["ssim"] == pytest.approx(1.0)
        assert entry["mse"] == 0.0
        assert entry["clip_sim"] is None
    assert report["groups"]["understanding"]["count"] == 2
    assert report["groups"]["reasoning"]["count"] == 1
    assert report["overall"]["clip_sim_x100"] is None
    assert (tmp_path / "out" / "report.json").exists()
    assert (tmp_path / "out" / "table.txt").read_text().startswith("| Method |")


def test_aggregate_is_mean_of_records(tmp_path):
    records = load_benchmark(_write_benchmark(tmp_path, ["color", "color"]))
    edited = [_gradient(), _gradient().flip(-1)]
    report = evaluate_run(records, edited, ins_align=[0.5, 1.0])
    values = [entry["psnr_db"] for entry in report["per_record"]]
    assert report["per_scenario"]["color"]["psnr_db"] == pytest.approx(sum(values) / 2)
    assert report["overall"]["ins_align"] == pytest.approx(0.75)


def test_evaluate_run_is_deterministic(tmp_path):
    records = load_benchmark(_write_benchmark(tmp_path, ["color", "reasoning"]))
    edited = [_gradient().flip(-1), _gradient().flip(-2)]
    assert evaluate_run(records, edited) == evaluate_run(records, edited)


def test_evaluate_run_checks_counts(tmp_path):
    records = load_benchmark(_write_benchmark(tmp_path, ["color"]))
    with pytest.raises(ValidationError):
        evaluate_run(records, [])


def test_table_matches_golden_layout():
    rows = [
        ("Ours", {
            "understanding": {"psnr_db": 28.99, "lpips_x1e3": 51.49, "ssim": 0.92,
                              "clip_sim_x100": 24.43, "ins_align": 0.86},
            "reasoning": {"psnr_db": 31.27, "lpips_x1e3": None, "ssim": None,
                          "clip_sim_x100": None, "ins_align": None},
        }),
        ("Baseline", {
            "understanding": {"psnr_db": 20.5, "lpips_x1e3": 120.0, "ssim": 0.72},
            "reasoning": None,
        }),
    ]
    assert render_table(rows) == GOLDEN_TABLE.read_text()
