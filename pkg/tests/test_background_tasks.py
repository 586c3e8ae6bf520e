import pytest
import redis
import torch

from config import load_config
from exceptions import StageError
from inpaint import InpaintConfig, InpaintModel, save_checkpoint
from redis_queue import get_queue, is_redis_available, run_edit_job
from redis_queue import queue_config
from redis_queue.queue_config import get_redis_connection, reset_connections
from tools import save_image


@pytest.fixture
def image_path(tmp_path):
    return save_image(torch.full((1, 3, 24, 24), 0.5), tmp_path / "grey.png")


def test_job_runs_from_a_config_snapshot(tmp_path, image_path):
    torch.manual_seed(0)
    model = InpaintModel(InpaintConfig(image_size=16, channel_widths=[8, 16], latent_dim=8, head_channels=4))
    checkpoint = save_checkpoint(model, tmp_path / "inpaint.pt")
    snapshot = load_config(inpaint_checkpoint=str(checkpoint), output_dir=str(tmp_path / "runs")).snapshot()
    record = run_edit_job(str(image_path), "Add a star on the left", snapshot, run_name="job")
    assert record["status"] == "completed"
    assert record["category"] == "Addition"
    assert "final.png" in record["files"]


def test_failing_job_raises(tmp_path, image_path):
    snapshot = load_config(output_dir=str(tmp_path / "runs")).snapshot()
    with pytest.raises(StageError):
        run_edit_job(str(image_path), "make it winter", snapshot)


def test_unreachable_redis_gives_no_queue():
    reset_connections()
    assert get_queue("redis://127.0.0.1:1") is None
    assert not is_redis_available("redis://127.0.0.1:1")


class _Server:
    def __init__(self, up):
        self.up = up

    def ping(self):
        if not self.up:
            raise redis.ConnectionError("connection refused")
        return True


def test_redis_that_comes_up_later_is_picked_up(monkeypatch):
    reset_connections()
    servers = [_Server(up=False), _Server(up=True)]
    calls = []

    def from_url(url, **kwargs):
        calls.append(url)
        return servers[len(calls) - 1]

    monkeypatch.setattr(queue_config.redis, "from_url", from_url)
    url = "redis://late-start:6379"
    assert get_redis_connection(url) is None
    assert url not in queue_config._connections
    assert get_redis_connection(url) is servers[1]
    assert get_redis_connection(url) is servers[1]
    assert calls == [url, url]
    reset_connections()
