"""
Redis Queue package for background edit jobs
"""

from .background_tasks import run_edit_job
from .queue_config import get_queue, get_redis_connection, is_redis_available
from .worker import start_worker

__all__ = [
    "get_queue",
    "get_redis_connection",
    "is_redis_available",
    "run_edit_job",
    "start_worker",
]
