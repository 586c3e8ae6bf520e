"""
Whitespace tokenizer, vocabulary with the <seg> token, and query templating
"""

import re
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from exceptions import ValidationError
from scenes import COLORS, KINDS

PAD, BOS, EOS, SEG, UNK = "<pad>", "<bos>", "<eos>", "<seg>", "<unk>"
SPECIALS = (PAD, BOS, EOS, SEG, UNK)

QUERY_PREFIX = "Please segment the"
QUERY_SUFFIX = "in the image"
RESPONSE_TEMPLATE = f"Sure , it is {SEG} ."

ARTICLES = ("a", "an", "the")

GRAMMAR_WORDS = (
    "Please", "segment", "the", "in", "image", "Sure", ",", "it", "is", ".",
    "shape", "on", "left", "right", "top", "bottom", "largest", "smallest",
    "middle", "background",
)


def tokenize(text: str) -> List[str]:
    return text.split()


class Vocabulary:
    """Ordered token list; indices are fixed by list position"""

    def __init__(self, tokens: Sequence[str]):
        tokens = list(tokens)
        if tokens[: len(SPECIALS)] != list(SPECIALS):
            raise ValidationError(f"Vocabulary must start with {SPECIALS}")
        if len(set(tokens)) != len(tokens):
            raise ValidationError("Vocabulary tokens must be unique")
        self.tokens = tokens
        self.index: Dict[str, int] = {token: i for i, token in enumerate(tokens)}

    @classmethod
    def build(cls, words: Iterable[str]) -> "Vocabulary":
        tokens = list(SPECIALS)
        for word in words:
            if word not in tokens:
                tokens.append(word)
        return cls(tokens)

    def __len__(self):
        return len(self.tokens)

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    @property
    def pad_id(self) -> int:
        return self.index[PAD]

    @property
    def bos_id(self) -> int:
        return self.index[BOS]

    @property
    def eos_id(self) -> int:
        return self.index[EOS]

    @property
    def seg_id(self) -> int:
        return self.index[SEG]

    @property
    def unk_id(self) -> int:
        return self.index[UNK]

    def encode(self, text: str) -> List[int]:
        return [self.index.get(token, self.unk_id) for token in tokenize(text)]

    def decode(self, ids: Iterable[int]) -> str:
        return " ".join(self.tokens[i] for i in ids)

    def to_list(self) -> List[str]:
        return list(self.tokens)


def default_vocabulary() -> Vocabulary:
    return Vocabulary.build(list(GRAMMAR_WORDS) + list(COLORS) + list(KINDS))


def normalize_object(editing_object: str) -> str:
    words = tokenize(editing_object.lower())
    while words and words[0] in ARTICLES:
        words = words[1:]
    return " ".join(words)


@dataclass(frozen=True)
class SegQuery:
    raw_text: str
    token_ids: Tuple[int, ...]
    response_ids: Tuple[int, ...]
    seg_positions: Tuple[int, ...] = field(default=())  # into input_ids()
    bos_id: int = 1
    eos_id: int = 2

    def input_ids(self) -> List[int]:
        return [self.bos_id, *self.token_ids, *self.response_ids, self.eos_id]

    @property
    def response_start(self) -> int:
        return 1 + len(self.token_ids)


def build_query(editing_object: str, vocab: Optional[Vocabulary] = None) -> SegQuery:
    """Wrap an object description in the segmentation request template"""
    vocab = vocab or default_vocabulary()
    obj = normalize_object(editing_object or "")
    if not obj:
        raise ValidationError("Segmentation target must not be empty")
    raw_text = f"{QUERY_PREFIX} {obj} {QUERY_SUFFIX}"
    token_ids = tuple(vocab.encode(raw_text))
    response_ids = tuple(vocab.encode(RESPONSE_TEMPLATE))
    start = 1 + len(token_ids)
    seg_positions = tuple(start + i for i, t in enumerate(response_ids) if t == vocab.seg_id)
    return SegQuery(raw_text, token_ids, response_ids, seg_positions, vocab.bos_id, vocab.eos_id)


def query_object(raw_text: str) -> str:
    match = re.fullmatch(rf"{QUERY_PREFIX} (.+) {QUERY_SUFFIX}", raw_text)
    if match is None:
        raise ValidationError(f"Not a segmentation query: '{raw_text}'")
    return match.group(1)
