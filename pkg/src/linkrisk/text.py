"""Small text helpers shared by splitting and extraction: title normalization and fuzzy matching."""
from __future__ import annotations

import re

TITLE_THRESHOLD = 0.85

_PUNCT = re.compile(r"[^\w\s]|_")
_SPACE = re.compile(r"\s+")
_TOKEN = re.compile(r"[a-z0-9]+")

_NUMBER_WORDS = {
    "one": "1", "two": "2", "three": "3", "four": "4", "five": "5", "six": "6",
    "seven": "7", "eight": "8", "nine": "9", "ten": "10", "eleven": "11", "twelve": "12",
}
_ROMAN = {
    "ii": "2", "iii": "3", "iv": "4", "v": "5", "vi": "6", "vii": "7", "viii": "8",
    "ix": "9", "x": "10", "xi": "11", "xii": "12",
}
# lone "i" is left alone: it is usually the pronoun, not a sequel number


def tokens(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


def normalize_title(title: str) -> str:
    s = _PUNCT.sub(" ", title.lower())
    words = [_ROMAN.get(w, _NUMBER_WORDS.get(w, w)) for w in _SPACE.split(s.strip()) if w]
    return " ".join(words)


def levenshtein(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def edit_similarity(a: str, b: str) -> float:
    """1 - edit distance / max length; two empty strings are identical."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(a, b) / longest


def title_similarity(a: str, b: str) -> float:
    return edit_similarity(normalize_title(a), normalize_title(b))


def title_overlap(a: list[str], b: list[str], threshold: float = TITLE_THRESHOLD) -> int:
    """Number of titles in ``a`` greedily matched one-to-one to titles in ``b``."""
    na = [normalize_title(t) for t in a]
    nb = [normalize_title(t) for t in b]
    edges = []
    for i, x in enumerate(na):
        for j, y in enumerate(nb):
            s = edit_similarity(x, y)
            if s >= threshold:
                edges.append((-s, i, j))
    edges.sort()
    used_a, used_b = set(), set()
    for _, i, j in edges:
        if i not in used_a and j not in used_b:
            used_a.add(i)
            used_b.add(j)
    return len(used_a)


def levenshtein_within(a: str, b: str, limit: int) -> bool:
    """True if levenshtein(a, b) <= limit, stopping once every row exceeds it."""
    if abs(len(a) - len(b)) > limit:
        return False
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        if min(cur) > limit:
            return False
        prev = cur
    return prev[-1] <= limit


class TitleMatcher:
    """Fuzzy title lookup against texts normalized once up front."""

    def __init__(self, title: str, threshold: float = TITLE_THRESHOLD):
        self.target = normalize_title(title)
        self.width = len(self.target.split())
        self.threshold = threshold

    def _close(self, window: str) -> bool:
        longest = max(len(window), len(self.target))
        # similarity >= threshold  <=>  distance <= (1 - threshold) * longest
        limit = int((1.0 - self.threshold) * longest + 1e-9)
        return levenshtein_within(window, self.target, limit)

    def in_words(self, words: list[str]) -> bool:
        if not self.target:
            return False
        for i in range(len(words) - self.width + 1):
            window = " ".join(words[i:i + self.width])
            if window == self.target or self._close(window):
                return True
        return False


def mentions_title(text: str, title: str, threshold: float = TITLE_THRESHOLD) -> bool:
    """True if some run of words in ``text`` fuzzily equals ``title``."""
    return TitleMatcher(title, threshold).in_words(normalize_title(text).split())
