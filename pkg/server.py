"""
HTTP endpoint implementing the external instruction-analysis contract
"""

import base64
import binascii
import io
import logging
from typing import Callable, Optional, Tuple, Union

from fastapi import FastAPI, HTTPException
from PIL import Image, UnidentifiedImageError
from pydantic import BaseModel
from pydantic import ValidationError as PydanticValidationError

from exceptions import EditorError
from promptist import EditPlan, parse_instruction
from promptist.parser import DEFAULT_IMAGE_SIZE

logger = logging.getLogger(__name__)

# Analyzers may return a raw payload; it must still parse as an EditPlan.
Analyzer = Callable[[str, bytes], Union[EditPlan, dict]]


class AnalyzeRequest(BaseModel):
    instruction: str
    image: str = ""


def _image_size(image_bytes: bytes) -> Tuple[int, int]:
    if not image_bytes:
        return DEFAULT_IMAGE_SIZE, DEFAULT_IMAGE_SIZE
    try:
        with Image.open(io.BytesIO(image_bytes)) as image:
            return image.size
    except UnidentifiedImageError:
        return DEFAULT_IMAGE_SIZE, DEFAULT_IMAGE_SIZE


def rule_analyzer(instruction: str, image_bytes: bytes) -> EditPlan:
    return parse_instruction(instruction, _image_size(image_bytes))


def create_app(analyzer: Optional[Analyzer] = None) -> FastAPI:
    """Application backed by ``analyzer``; the rule parser by default"""
    analyzer = analyzer or rule_analyzer
    app = FastAPI(title="Promptist", description="Instruction decomposition into edit plans")

    @app.get("/")
    async def root():
        """Health check endpoint"""
        return {
            "message": "Promptist API is running",
            "status": "healthy",
            "endpoints": {
                "analyze": "/analyze - POST - Decompose an editing instruction",
                "health": "/health - GET - Health check",
            },
        }

    @app.get("/health")
    async def health_check():
        return {
            "status": "healthy",
            "service": "Promptist",
            "version": "1.0.0",
            "categories": ["Remove", "Addition", "Replace", "Background", "Global"],
        }

    @app.post("/analyze")
    async def analyze(request: AnalyzeRequest):
        try:
            image_bytes = base64.b64decode(request.image, validate=True) if request.image else b""
        except (binascii.Error, ValueError):
            raise HTTPException(status_code=400, detail="image must be base64-encoded")
        try:
            plan = analyzer(request.instruction, image_bytes)
        except EditorError as error:
            raise HTTPException(status_code=400, detail=str(error))
        if not isinstance(plan, EditPlan):
            try:
                plan = EditPlan.parse_obj({**plan, "instruction": request.instruction})
            except (PydanticValidationError, TypeError) as error:
                logger.error("Analyzer returned an invalid plan for '%s': %s", request.instruction, error)
                raise HTTPException(status_code=502, detail=f"analyzer returned an invalid plan: {error}")
        logger.info("Analyzed '%s' -> %s", request.instruction, plan.category.value)
        return plan.to_wire()

    return app


app = create_app()
