"""
Redis Queue worker for background edit jobs
"""

import logging
from typing import Optional

from rq import Worker

from .queue_config import QUEUE_NAME, get_queue

logger = logging.getLogger(__name__)


def start_worker(redis_url: Optional[str] = None) -> bool:
    """Start the Redis queue worker; False when Redis is unreachable"""
    queue = get_queue(redis_url)
    if queue is None:
        logger.error("❌ Redis is not available. Cannot start worker.")
        return False

    logger.info("🚀 Starting Redis queue worker on queue '%s'", QUEUE_NAME)
    Worker([queue], connection=queue.connection).work()
    return True


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO)
    start_worker()
