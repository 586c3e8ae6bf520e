"""
Rule-based instruction decomposition

Categories are tried in a fixed order (Remove, Addition, Replace, Background,
Global) and the first rule that yields an object wins.
"""

import logging
import re
from typing import List, Optional, Tuple

from exceptions import InstructionError, ValidationError
from .plan import EditCategory, EditPlan
from .prompts import refine_prompt

logger = logging.getLogger(__name__)

DEFAULT_IMAGE_SIZE = 512
ARTICLES = ("a", "an", "the", "some")
LOCATION_PREPOSITIONS = (
    "in", "on", "at", "to", "into", "onto", "near", "next", "beside", "behind",
    "under", "above", "below", "inside", "over", "by",
)
IMAGE_REFERENCES = re.compile(r"\s+(?:in|from|of)\s+(?:the|this)\s+(?:image|picture|photo|scene)\b.*$")

REMOVE_PATTERN = re.compile(r"\b(?:remove|delete|erase)\s+(?P<object>.+)", re.IGNORECASE)
ADD_PATTERN = re.compile(r"\b(?:add|insert|put)\s+(?P<object>.+)", re.IGNORECASE)
REPLACE_PATTERNS = (
    re.compile(r"\breplace\s+(?P<object>.+?)\s+with\s+(?P<target>.+)", re.IGNORECASE),
    re.compile(r"\b(?:change|make|turn|transform|convert)\s+(?P<object>.+?)\s+(?:into|to)\s+(?P<target>.+)",
               re.IGNORECASE),
)
BACKGROUND_TARGET = re.compile(r"\b(?:with|to|into|by|as)\s+(?P<target>.+)$", re.IGNORECASE)
GLOBAL_STYLE_PATTERNS = (
    re.compile(r"\b(?:make|turn)\s+(?:it|the\s+(?:image|picture|photo|scene)|everything)\s+"
               r"(?:into\s+|look\s+like\s+|look\s+|feel\s+like\s+)?(?P<style>.+)", re.IGNORECASE),
    re.compile(r"\bin\s+the\s+style\s+of\s+(?P<style>.+)", re.IGNORECASE),
    re.compile(r"\b(?:convert|change|turn)\s+(?:it\s+)?(?:into|to)\s+(?:an?\s+)?(?P<style>.+?)(?:\s+style)?$",
               re.IGNORECASE),
)

GRID_COLUMNS = {"left": 0, "right": 2}
GRID_ROWS = {"top": 0, "upper": 0, "bottom": 2, "lower": 2}
SIZE_SCALES = {"tiny": 0.5, "small": 0.5, "little": 0.5, "large": 1.5, "big": 1.5, "huge": 1.5}


def _clean(phrase: str) -> str:
    phrase = IMAGE_REFERENCES.sub("", phrase.strip())
    return phrase.strip(" .,!?;:\"'")


def _strip_article(phrase: str) -> str:
    words = phrase.split()
    while words and words[0].lower() in ARTICLES:
        words = words[1:]
    return " ".join(words)


def _split_at_location(phrase: str) -> Tuple[str, str]:
    """Noun phrase before the first location preposition, and the rest"""
    words = phrase.split()
    for i, word in enumerate(words):
        if i > 0 and word.lower() in LOCATION_PREPOSITIONS:
            return " ".join(words[:i]), " ".join(words[i:])
    return phrase, ""


def _object_phrase(phrase: str) -> str:
    return _strip_article(_clean(phrase)).lower()


def _parse_remove(text: str) -> Optional[EditPlan]:
    match = REMOVE_PATTERN.search(text)
    if not match:
        return None
    obj = _object_phrase(match.group("object"))
    if not obj:
        return None
    plan = EditPlan(category=EditCategory.REMOVE, editing_object=obj, instruction=text)
    return plan.copy(update={"target_prompt": refine_prompt(plan)})


def _parse_addition(text: str, image_size: Tuple[int, int]) -> Optional[EditPlan]:
    match = ADD_PATTERN.search(text)
    if not match:
        return None
    noun_phrase, _ = _split_at_location(_clean(match.group("object")))
    obj = _strip_article(noun_phrase).lower()
    if not obj:
        return None
    region = addition_region(text, *image_size)
    return EditPlan(category=EditCategory.ADDITION, editing_object=obj, target_prompt=noun_phrase.lower(),
                    region_hint=region, instruction=text)


def _parse_replace(text: str) -> Optional[EditPlan]:
    for pattern in REPLACE_PATTERNS:
        match = pattern.search(text)
        if not match:
            continue
        obj = _object_phrase(match.group("object"))
        target = _clean(match.group("target")).lower()
        if not obj or not target or obj in ("it", "everything", "image", "picture", "photo", "scene"):
            continue
        if obj == "background" or obj.endswith(" background"):
            return None
        return EditPlan(category=EditCategory.REPLACE, editing_object=obj, target_prompt=target, instruction=text)
    return None


def _parse_background(text: str) -> Optional[EditPlan]:
    if not re.search(r"\bbackground\b", text, re.IGNORECASE):
        return None
    after = re.split(r"\bbackground\b", text, maxsplit=1, flags=re.IGNORECASE)[1]
    match = BACKGROUND_TARGET.search(after)
    target = _clean(match.group("target")).lower() if match else ""
    return EditPlan(category=EditCategory.BACKGROUND, editing_object="background",
                    target_prompt=target or _clean(text).lower(), instruction=text, low_confidence=not target)


def _parse_global(text: str) -> EditPlan:
    for pattern in GLOBAL_STYLE_PATTERNS:
        match = pattern.search(text)
        if match:
            style = _clean(match.group("style")).lower()
            if style:
                return EditPlan(category=EditCategory.GLOBAL, target_prompt=style, instruction=text)
    logger.info("No editing rule matched '%s'; using a low-confidence global edit", text)
    return EditPlan(category=EditCategory.GLOBAL, target_prompt=text, instruction=text, low_confidence=True)


def parse_instruction(instruction: str, image_size: Tuple[int, int] = (DEFAULT_IMAGE_SIZE, DEFAULT_IMAGE_SIZE)) -> EditPlan:
    """Decompose an instruction into category, editing object and target prompt"""
    if instruction is None or not instruction.strip():
        raise InstructionError("Instruction must not be empty")
    text = " ".join(instruction.split())
    plan = (
        _parse_remove(text)
        or _parse_addition(text, image_size)
        or _parse_replace(text)
        or _parse_background(text)
        or _parse_global(text)
    )
    logger.debug("Parsed '%s' as %s(%s)", text, plan.category.value, plan.editing_object)
    return plan


def _keywords(text: str) -> List[str]:
    return re.findall(r"[a-z]+", text.lower())


def addition_region(instruction: str, image_w: int, image_h: int) -> List[float]:
    """Normalized bbox from the spatial and size words of an instruction"""
    if image_w < 1 or image_h < 1:
        raise ValidationError("Image size must be positive")
    words = _keywords(instruction)
    column = next((GRID_COLUMNS[w] for w in words if w in GRID_COLUMNS), None)
    row = next((GRID_ROWS[w] for w in words if w in GRID_ROWS), None)
    if column is None and row is None and "corner" in words:
        column, row = 0, 0
    column = 1 if column is None else column
    row = 1 if row is None else row
    scale = next((SIZE_SCALES[w] for w in words if w in SIZE_SCALES), 1.0)

    side = min(image_w, image_h) / 3.0 * scale
    cx = (column + 0.5) * image_w / 3.0
    cy = (row + 0.5) * image_h / 3.0
    x0 = min(max((cx - side / 2) / image_w, 0.0), 1.0)
    y0 = min(max((cy - side / 2) / image_h, 0.0), 1.0)
    x1 = min(max((cx + side / 2) / image_w, 0.0), 1.0)
    y1 = min(max((cy + side / 2) / image_h, 0.0), 1.0)
    return [x0, y0, x1, y1]


def compute_addition_region(plan: EditPlan, image_w: int, image_h: int) -> List[float]:
    if plan.category != EditCategory.ADDITION:
        raise ValidationError(f"Region hints are computed for Addition plans, not {plan.category.value}")
    return addition_region(plan.instruction or plan.editing_object, image_w, image_h)
