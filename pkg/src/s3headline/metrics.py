"""ROUGE-1/2/L, BLEU-1..4 and an exact-match METEOR variant over token lists.

Tokens are case-folded before comparison; there is no stemming or other
normalisation.  ROUGE figures are reported as F1.  The METEOR number uses
exact unigram matches only (no stemming, no synonyms), so it is not
comparable with WordNet-based METEOR scores.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

COLUMNS = ("BLEU-1", "BLEU-2", "BLEU-3", "BLEU-4", "ROUGE-1", "ROUGE-2", "ROUGE-L", "METEOR-exact")


def _fold(tokens):
    return [t.casefold() for t in tokens]


def _ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _prf(overlap, n_cand, n_ref):
    p = overlap / n_cand if n_cand else 0.0
    r = overlap / n_ref if n_ref else 0.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f


def rouge_n(cand, ref, n: int = 1):
    if n < 1:
        raise ValueError("n must be >= 1")
    c, r = _ngrams(_fold(cand), n), _ngrams(_fold(ref), n)
    overlap = sum((c & r).values())
    return _prf(overlap, sum(c.values()), sum(r.values()))


def lcs_length(a, b) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(cand, ref):
    c, r = _fold(cand), _fold(ref)
    return _prf(lcs_length(c, r), len(c), len(r))


def modified_precision(cand, refs, n: int):
    """Clipped n-gram precision as (clipped matches, candidate n-gram count)."""
    counts = _ngrams(cand, n)
    max_ref = Counter()
    for ref in refs:
        for g, k in _ngrams(ref, n).items():
            max_ref[g] = max(max_ref[g], k)
    clipped = sum(min(k, max_ref[g]) for g, k in counts.items())
    return clipped, sum(counts.values())


def bleu(cand, refs, max_n: int = 4) -> dict[int, float]:
    if max_n < 1:
        raise ValueError("max_n must be >= 1")
    cand = _fold(cand)
    refs = [_fold(r) for r in refs]
    c = len(cand)
    if c == 0 or not refs:
        return {n: 0.0 for n in range(1, max_n + 1)}
    # closest reference length, shorter one on ties
    r = min((abs(len(ref) - c), len(ref)) for ref in refs)[1]
    bp = 1.0 if c > r else math.exp(1.0 - r / c)
    logs = []
    out = {}
    for n in range(1, max_n + 1):
        num, den = modified_precision(cand, refs, n)
        if den == 0 and r < n:
            # neither side is long enough for this order: vacuous, not a miss
            logs.append(0.0)
        else:
            logs.append(math.log(num / den) if num > 0 and den > 0 else -math.inf)
        if any(math.isinf(x) for x in logs):
            out[n] = 0.0
        else:
            out[n] = bp * math.exp(sum(logs) / n)
    return out


def meteor_exact(cand, ref, alpha: float = 0.9, beta: float = 3.0, gamma: float = 0.5,
                 fragmentation: bool = False) -> float:
    """Exact-match recall-weighted harmonic mean; the chunk penalty is optional."""
    cand, ref = _fold(cand), _fold(ref)
    used = [False] * len(ref)
    alignment = []
    for i, tok in enumerate(cand):
        for j, rt in enumerate(ref):
            if not used[j] and rt == tok:
                used[j] = True
                alignment.append((i, j))
                break
    m = len(alignment)
    if m == 0:
        return 0.0
    p, r = m / len(cand), m / len(ref)
    fmean = p * r / (alpha * p + (1 - alpha) * r)
    if not fragmentation:
        return fmean
    chunks = 1
    for (i0, j0), (i1, j1) in zip(alignment, alignment[1:]):
        if not (i1 == i0 + 1 and j1 == j0 + 1):
            chunks += 1
    penalty = gamma * (chunks / m) ** beta
    return fmean * (1 - penalty)


@dataclass
class MetricReport:
    rouge1: tuple = (0.0, 0.0, 0.0)
    rouge2: tuple = (0.0, 0.0, 0.0)
    rougeL: tuple = (0.0, 0.0, 0.0)
    bleu: dict = field(default_factory=lambda: {n: 0.0 for n in range(1, 5)})
    meteor: float = 0.0
    count: int = 1

    def columns(self, include_meteor: bool = True) -> dict[str, float]:
        cols = {f"BLEU-{n}": self.bleu[n] for n in range(1, 5)}
        cols["ROUGE-1"] = self.rouge1[2]
        cols["ROUGE-2"] = self.rouge2[2]
        cols["ROUGE-L"] = self.rougeL[2]
        if include_meteor:
            cols["METEOR-exact"] = self.meteor
        cols["Avg"] = sum(cols.values()) / len(cols)
        return cols


def score_pair(cand, ref) -> MetricReport:
    return MetricReport(rouge_n(cand, ref, 1), rouge_n(cand, ref, 2), rouge_l(cand, ref),
                        bleu(cand, [ref]), meteor_exact(cand, ref))


def average_reports(reports) -> MetricReport:
    reports = list(reports)
    if not reports:
        return MetricReport(count=0)
    k = len(reports)

    def mean3(attr):
        return tuple(sum(getattr(r, attr)[i] for r in reports) / k for i in range(3))

    return MetricReport(
        mean3("rouge1"), mean3("rouge2"), mean3("rougeL"),
        {n: sum(r.bleu[n] for r in reports) / k for n in range(1, 5)},
        sum(r.meteor for r in reports) / k,
        count=sum(r.count for r in reports),
    )


def corpus_report(cands, refs) -> MetricReport:
    if len(cands) != len(refs):
        raise ValueError(f"{len(cands)} candidates vs {len(refs)} references")
    return average_reports(score_pair(c, r) for c, r in zip(cands, refs))


def format_table(report: MetricReport, include_meteor: bool = True, scale: float = 100.0) -> str:
    cols = report.columns(include_meteor)
    width = max(len(k) for k in cols) + 2
    header = "".join(k.rjust(width) for k in cols)
    row = "".join(f"{v * scale:.2f}".rjust(width) for v in cols.values())
    return header + "\n" + row
