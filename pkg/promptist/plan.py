"""
Edit plan produced by instruction decomposition
"""

from enum import Enum
from typing import List, Optional

from pydantic import BaseModel, root_validator, validator


class EditCategory(str, Enum):
    REMOVE = "Remove"
    ADDITION = "Addition"
    REPLACE = "Replace"
    BACKGROUND = "Background"
    GLOBAL = "Global"


class EditPlan(BaseModel):
    category: EditCategory
    editing_object: str = ""
    target_prompt: str = ""
    region_hint: Optional[List[float]] = None
    instruction: str = ""
    low_confidence: bool = False

    class Config:
        use_enum_values = False

    @validator("editing_object", "target_prompt", "instruction", pre=True, always=True)
    def strip_text(cls, value):
        return (value or "").strip()

    @validator("region_hint")
    def normalized_bbox(cls, value):
        if value is None:
            return value
        if len(value) != 4:
            raise ValueError("region_hint must be [x0, y0, x1, y1]")
        x0, y0, x1, y1 = value
        if not (0.0 <= x0 < x1 <= 1.0 and 0.0 <= y0 < y1 <= 1.0):
            raise ValueError("region_hint must satisfy 0 <= x0 < x1 <= 1 and 0 <= y0 < y1 <= 1")
        return value

    @root_validator(skip_on_failure=True)
    def category_requirements(cls, values):
        category = values["category"]
        if category == EditCategory.ADDITION and values.get("region_hint") is None:
            raise ValueError("Addition plans need a region_hint")
        if category == EditCategory.REPLACE and not (values["editing_object"] and values["target_prompt"]):
            raise ValueError("Replace plans need an editing_object and a target_prompt")
        if category == EditCategory.REMOVE and not values["editing_object"]:
            raise ValueError("Remove plans need an editing_object")
        return values

    def to_wire(self) -> dict:
        """Response body of the external analysis contract"""
        return {
            "category": self.category.value,
            "editing_object": self.editing_object,
            "target_prompt": self.target_prompt,
            "region_hint": self.region_hint,
        }
