"""
Client for an external multimodal analysis endpoint, with rule-based fallback
"""

import base64
import logging
import time
from typing import Optional

import requests
from pydantic import BaseModel, ValidationError as PydanticValidationError, validator
from tenacity import Retrying, retry_if_exception_type, stop_after_attempt, stop_after_delay, wait_fixed

from .parser import parse_instruction
from .plan import EditPlan

logger = logging.getLogger(__name__)


class MLLMClientConfig(BaseModel):
    endpoint: Optional[str] = None
    timeout_seconds: float = 10.0
    retries: int = 1

    @validator("timeout_seconds")
    def positive_timeout(cls, value):
        if value <= 0:
            raise ValueError("timeout_seconds must be positive")
        return value

    @validator("retries")
    def nonnegative_retries(cls, value):
        if value < 0:
            raise ValueError("retries must be >= 0")
        return value


def _request_plan(config: MLLMClientConfig, image_bytes: bytes, instruction: str) -> dict:
    payload = {
        "instruction": instruction,
        "image": base64.b64encode(image_bytes or b"").decode("ascii"),
    }
    deadline = time.monotonic() + config.timeout_seconds
    retrying = Retrying(
        stop=stop_after_attempt(config.retries + 1) | stop_after_delay(config.timeout_seconds),
        wait=wait_fixed(0.1),
        retry=retry_if_exception_type(requests.RequestException),
        reraise=True,
    )
    for attempt in retrying:
        with attempt:
            remaining = max(deadline - time.monotonic(), 0.05)
            response = requests.post(config.endpoint, json=payload, timeout=remaining)
            response.raise_for_status()
            return response.json()
    raise requests.RequestException("No attempt was made")


def mllm_analyze(config: MLLMClientConfig, image_bytes: bytes, instruction: str) -> EditPlan:
    """
    Ask the configured endpoint for an EditPlan.

    Network failures, timeouts and payloads that break EditPlan's invariants fall
    back to ``parse_instruction``; the returned plan is always valid.
    """
    if not config.endpoint:
        return parse_instruction(instruction)
    try:
        data = _request_plan(config, image_bytes, instruction)
        if not isinstance(data, dict):
            raise ValueError(f"Expected a JSON object, got {type(data).__name__}")
        plan = EditPlan.parse_obj({**data, "instruction": instruction})
        logger.info("Endpoint %s returned a %s plan", config.endpoint, plan.category.value)
        return plan
    except (requests.RequestException, PydanticValidationError, ValueError) as error:
        logger.warning("Falling back to rule-based parsing for '%s': %s", instruction, error)
        return parse_instruction(instruction)
