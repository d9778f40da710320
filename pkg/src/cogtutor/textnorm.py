"""Text normalization used for skill names and token matching.

One function, used everywhere a name or reply is compared: lowercase,
strip backticks and quote characters, turn remaining punctuation into
spaces (underscores survive, so tool names like fct_reorder stay intact),
collapse whitespace.

The grading helpers on top are deliberately crude but deterministic:
stopwords out, light suffix stripping so "levels" meets "level" and
"ordered" meets "order", no dictionaries.
"""

import re

_QUOTES = re.compile(r"[`'\"‘’“”]")
_NON_WORD = re.compile(r"[^\w\s]", re.UNICODE)
_WS = re.compile(r"\s+")

STOPWORDS = frozenset(
    "a an the to of on in for and or is are be it this that with by one must because".split()
)


def normalize(text: str) -> str:
    text = _QUOTES.sub("", text.lower())
    text = _NON_WORD.sub(" ", text)
    return _WS.sub(" ", text).strip()


def tokens(text: str) -> list[str]:
    """Normalized word tokens; used by the fallback grader and the probe."""
    norm = normalize(text)
    return norm.split() if norm else []


def stem(token: str) -> str:
    """Light suffix stripping; enough to align simple inflections."""
    if len(token) > 5 and token.endswith("ing"):
        return token[:-3]
    if len(token) > 4 and token.endswith("ed"):
        return token[:-2]
    if len(token) > 3 and token.endswith("es"):
        return token[:-2]
    if len(token) > 3 and token.endswith("s"):
        return token[:-1]
    return token


def content_stems(text: str) -> set[str]:
    """Stemmed tokens with stopwords removed."""
    return {stem(tok) for tok in tokens(text) if tok not in STOPWORDS}


def contains_all_stems(haystack: str, needle: str) -> bool:
    """True when every content stem of `needle` occurs in `haystack`."""
    need = content_stems(needle)
    if not need:
        return False
    return need <= content_stems(haystack)


def shares_most_stems(haystack: str, needle: str) -> bool:
    """True when at least half of `needle`'s content stems occur in
    `haystack` (and at least one)."""
    need = content_stems(needle)
    if not need:
        return False
    shared = len(need & content_stems(haystack))
    return shared >= max(1, (len(need) + 1) // 2)


def contains_tokens(haystack: str, needle: str) -> bool:
    """True when every normalized token of `needle` occurs in `haystack`."""
    need = tokens(needle)
    if not need:
        return False
    have = set(tokens(haystack))
    return all(tok in have for tok in need)
