"""Token normalization used by the deterministic answer judge."""

from __future__ import annotations

import re

_WORD = re.compile(r"[a-z0-9]+")


def content_tokens(text: str) -> list:
    """Case-folded alphanumeric runs; punctuation splits tokens."""
    return _WORD.findall(text.casefold())


def contains_gold_tokens(answer: str, gold: str) -> bool:
    """True when every content token of ``gold`` occurs in ``answer``.

    Order-free containment: "It was deprecated (stability 0)." covers the
    gold string "Stability: 0 - Deprecated".
    """
    answer_tokens = set(content_tokens(answer))
    gold_tokens = content_tokens(gold)
    if not gold_tokens:
        return bool(answer.strip() == gold.strip() or not gold.strip())
    return all(tok in answer_tokens for tok in gold_tokens)
