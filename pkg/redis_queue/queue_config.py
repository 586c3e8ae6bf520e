"""
Redis Queue configuration for background edit jobs
"""

import logging
import os
from typing import Dict, Optional

import redis
from rq import Queue

logger = logging.getLogger(__name__)

# Redis connection configuration
REDIS_URL = os.getenv("REDIS_URL", "redis://localhost:6379")
QUEUE_NAME = "edits"

# Only live connections are cached; a failed URL is retried on the next call.
_connections: Dict[str, redis.Redis] = {}


def get_redis_connection(redis_url: Optional[str] = None) -> Optional[redis.Redis]:
    """Connection for ``redis_url``, or None when the server does not answer PING"""
    url = redis_url or REDIS_URL
    if url in _connections:
        return _connections[url]
    try:
        connection = redis.from_url(url, socket_connect_timeout=1)
        connection.ping()
    except (redis.RedisError, OSError) as error:
        logger.warning("⚠️ Redis connection failed: %s", error)
        return None
    logger.info("✅ Redis connection successful (%s)", url)
    _connections[url] = connection
    return connection


def get_queue(redis_url: Optional[str] = None) -> Optional[Queue]:
    """Get the edit queue"""
    connection = get_redis_connection(redis_url)
    if connection is None:
        return None
    return Queue(QUEUE_NAME, connection=connection)


def is_redis_available(redis_url: Optional[str] = None) -> bool:
    """Check if Redis is available"""
    return get_redis_connection(redis_url) is not None


def reset_connections() -> None:
    _connections.clear()
