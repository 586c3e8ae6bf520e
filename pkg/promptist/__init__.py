"""
Promptist: instruction decomposition into edit plans
"""

from .client import MLLMClientConfig, mllm_analyze
from .parser import addition_region, compute_addition_region, parse_instruction
from .plan import EditCategory, EditPlan
from .prompts import OBJECT_PROMPT_SUFFIXES, refine_prompt, remove_object_from_caption

__all__ = [
    "EditCategory",
    "EditPlan",
    "MLLMClientConfig",
    "OBJECT_PROMPT_SUFFIXES",
    "addition_region",
    "compute_addition_region",
    "mllm_analyze",
    "parse_instruction",
    "refine_prompt",
    "remove_object_from_caption",
]
