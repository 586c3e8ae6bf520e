"""
Target prompt refinement per edit category
"""

import re
from typing import List, Optional

from .plan import EditCategory, EditPlan

OBJECT_PROMPT_SUFFIXES = ("detailed", "naturally lit")
CAPTION_ARTICLES = ("a", "an", "the", "some", "two", "three")
PREPOSITIONS = ("on", "in", "at", "with", "near", "under", "above", "behind", "beside", "of", "by", "next")


def _head_and_modifiers(editing_object: str):
    """Head noun is the last word before the first preposition"""
    words = editing_object.lower().split()
    for i, word in enumerate(words):
        if i > 0 and word in PREPOSITIONS:
            words = words[:i]
            break
    return words[-1], set(words[:-1])


def _tidy(words: List[str]) -> str:
    text = " ".join(words)
    text = re.sub(r"\s+,", ",", text)
    text = re.sub(r"\b(with|and|or)\s+(and|or)\b", r"\1", text)
    text = re.sub(r",\s*(and|or)\b", r" \1", text)
    text = re.sub(r"^(?:and|or|with|,)\s+", "", text)
    text = re.sub(r"\s+(?:and|or|with|,)$", "", text)
    return re.sub(r"\s{2,}", " ", text).strip(" ,")


def remove_object_from_caption(caption: str, editing_object: str) -> Optional[str]:
    """Delete the object's noun phrase (article, modifiers, head noun) from a caption"""
    head, modifiers = _head_and_modifiers(editing_object)
    words = caption.split()
    lowered = [w.lower().strip(",.") for w in words]
    for i, word in enumerate(lowered):
        if word not in (head, head + "s"):
            continue
        start = i
        while start > 0 and lowered[start - 1] in modifiers:
            start -= 1
        if start > 0 and lowered[start - 1] in CAPTION_ARTICLES:
            start -= 1
        trailing = "," if words[i].endswith(",") else ""
        return _tidy(words[:start] + ([trailing] if trailing else []) + words[i + 1:])
    return None


def refine_prompt(plan: EditPlan, scene_caption: Optional[str] = None) -> str:
    caption = (scene_caption or "").strip()
    category = plan.category
    if category in (EditCategory.REPLACE, EditCategory.ADDITION):
        target = plan.target_prompt or plan.editing_object
        return ", ".join([target, *OBJECT_PROMPT_SUFFIXES])
    if category == EditCategory.REMOVE:
        if caption:
            stripped = remove_object_from_caption(caption, plan.editing_object)
            if stripped is not None:
                return stripped
            return f"{caption}, without the {plan.editing_object}"
        return f"the scene without the {plan.editing_object}"
    if category == EditCategory.BACKGROUND:
        return f"{caption or 'the scene'}, background replaced by {plan.target_prompt}"
    if plan.low_confidence:
        return f"{caption}, {plan.target_prompt}" if caption else plan.target_prompt
    return f"{caption or 'the scene'}, in {plan.target_prompt}"
