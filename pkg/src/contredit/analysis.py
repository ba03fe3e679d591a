"""Artifact mining: tokens removed or inserted more often than frequency predicts."""

from __future__ import annotations

from collections import Counter, defaultdict
from collections.abc import Sequence
from dataclasses import dataclass

from contredit.core import TokenSeq, tokenize
from contredit.metrics import align_ops
from contredit.search import EditOutcome


@dataclass
class DiffTokens:
    """Multisets of original tokens removed and new tokens inserted by one edit."""

    removed: Counter
    inserted: Counter


def extract_diff(original: TokenSeq, edited: TokenSeq) -> DiffTokens:
    """Removals and insertions under the canonical alignment.

    A substitution contributes one removal and one insertion, so paired swaps
    show up in both columns of the final ranking.
    """
    removed: Counter = Counter()
    inserted: Counter = Counter()
    i = j = 0
    for op in align_ops(original, edited):
        if op == "=":
            i += 1
            j += 1
        elif op == "s":
            removed[original[i]] += 1
            inserted[edited[j]] += 1
            i += 1
            j += 1
        elif op == "d":
            removed[original[i]] += 1
            i += 1
        else:
            inserted[edited[j]] += 1
            j += 1
    return DiffTokens(removed, inserted)


@dataclass
class RankedToken:
    token: str
    ratio: float
    event_rate: float
    occurrence_rate: float
    event_count: int
    occurrence_count: int


@dataclass
class LabelArtifacts:
    contrast_label: str
    removed_counts: Counter
    inserted_counts: Counter
    total_removals: int
    total_insertions: int
    removed_top: list[RankedToken]
    inserted_top: list[RankedToken]


@dataclass
class ArtifactStats:
    per_label: dict[str, LabelArtifacts]
    occurrences: Counter
    n_corpus_tokens: int
    n_analyzed: int
    n_excluded: int
    min_count: int
    max_minimality: float
    top_n: int

    def to_dict(self) -> dict:
        def ranked(rows: list[RankedToken]) -> list[dict]:
            return [r.__dict__ for r in rows]

        return {
            "n_analyzed": self.n_analyzed,
            "n_excluded": self.n_excluded,
            "n_corpus_tokens": self.n_corpus_tokens,
            "min_count": self.min_count,
            "max_minimality": self.max_minimality,
            "top_n": self.top_n,
            "per_label": {
                label: {
                    "total_removals": la.total_removals,
                    "total_insertions": la.total_insertions,
                    "removed_top": ranked(la.removed_top),
                    "inserted_top": ranked(la.inserted_top),
                }
                for label, la in sorted(self.per_label.items())
            },
        }

    def to_markdown(self) -> str:
        lines = []
        for label, la in sorted(self.per_label.items()):
            lines.append(f"### contrast = {label}")
            lines.append("")
            lines.append("| Removed | ratio | Inserted | ratio |")
            lines.append("|---|---|---|---|")
            for k in range(self.top_n):
                rem = la.removed_top[k] if k < len(la.removed_top) else None
                ins = la.inserted_top[k] if k < len(la.inserted_top) else None
                cells = [
                    rem.token if rem else "",
                    f"{rem.ratio:.1f}" if rem else "",
                    ins.token if ins else "",
                    f"{ins.ratio:.1f}" if ins else "",
                ]
                lines.append("| " + " | ".join(cells) + " |")
            lines.append("")
        return "\n".join(lines)


def _rank(events: Counter, total_events: int, occurrences: Counter, n_tokens: int,
          min_count: int, top_n: int) -> list[RankedToken]:
    rows: list[RankedToken] = []
    for token, count in events.items():
        occ = occurrences.get(token, 0)
        if occ < min_count or total_events == 0:
            continue
        event_rate = count / total_events
        occurrence_rate = occ / n_tokens
        rows.append(RankedToken(token, event_rate / occurrence_rate, event_rate,
                                occurrence_rate, count, occ))
    rows.sort(key=lambda r: (-r.ratio, r.token))
    return rows[:top_n]


def artifact_stats(outcomes: Sequence[EditOutcome], min_count: int = 10,
                   max_minimality: float = 0.05, top_n: int = 5) -> ArtifactStats:
    """Rank tokens by removal and insertion over-representation per contrast label.

    Only outcomes whose best edit has minimality <= max_minimality are
    analyzed; tokens seen fewer than min_count times across their original
    texts are excluded from the ranking (the raw counts keep everything).
    """
    analyzed = [o for o in outcomes
                if o.best is not None and o.best.minimality <= max_minimality]
    n_excluded = len(outcomes) - len(analyzed)

    occurrences: Counter = Counter()
    removed: dict[str, Counter] = defaultdict(Counter)
    inserted: dict[str, Counter] = defaultdict(Counter)
    for outcome in analyzed:
        original = tokenize(outcome.original_text)
        occurrences.update(original)
        diff = extract_diff(original, outcome.best.tokens)
        removed[outcome.contrast_label].update(diff.removed)
        inserted[outcome.contrast_label].update(diff.inserted)

    n_tokens = sum(occurrences.values())
    per_label: dict[str, LabelArtifacts] = {}
    for label in sorted(set(removed) | set(inserted)):
        total_r = sum(removed[label].values())
        total_i = sum(inserted[label].values())
        per_label[label] = LabelArtifacts(
            contrast_label=label,
            removed_counts=removed[label],
            inserted_counts=inserted[label],
            total_removals=total_r,
            total_insertions=total_i,
            removed_top=_rank(removed[label], total_r, occurrences, n_tokens,
                              min_count, top_n),
            inserted_top=_rank(inserted[label], total_i, occurrences, n_tokens,
                               min_count, top_n),
        )
    return ArtifactStats(per_label, occurrences, n_tokens, len(analyzed), n_excluded,
                         min_count, max_minimality, top_n)
