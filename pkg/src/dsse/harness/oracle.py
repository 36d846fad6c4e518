"""Ground-truth plaintext inverted index, maintained in lockstep with every
upload; search results are checked against it exactly.
"""

from __future__ import annotations


class PlaintextOracle:
    def __init__(self) -> None:
        self._index: dict[str, list[bytes]] = {}

    def add(self, file_id: bytes, keywords: list[str] | set[str]) -> None:
        for w in keywords:
            self._index.setdefault(w, []).append(file_id)

    def ids_newest_first(self, keyword: str) -> list[bytes]:
        return list(reversed(self._index.get(keyword, [])))

    def count(self, keyword: str) -> int:
        return len(self._index.get(keyword, []))

    def keywords(self) -> list[str]:
        return sorted(self._index)

    def keywords_by_count(self) -> dict[int, list[str]]:
        by_count: dict[int, list[str]] = {}
        for w in sorted(self._index):
            by_count.setdefault(len(self._index[w]), []).append(w)
        return by_count
