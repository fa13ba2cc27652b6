"""Recognition metrics and the per-pass timing harness."""

from __future__ import annotations

import platform
import time
from dataclasses import dataclass, field


class LengthMismatch(Exception):
    pass


def levenshtein(a, b) -> int:
    """Unit-cost edit distance (substitutions + insertions + deletions)."""
    a, b = list(a), list(b)
    if not a:
        return len(b)
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def evaluate(results, references, ns=(1, 5, 10), lexicon=None) -> dict:
    """Top-N sample accuracy plus corpus word accuracy.

    ``results`` are RecognitionResults (or bare hypothesis lists) aligned
    with ``references`` (word sequences). Word accuracy is
    (N_ref - edits) / N_ref over the corpus; the OOV rate is measured
    against ``lexicon`` when given.
    """
    if len(results) != len(references):
        raise LengthMismatch(f"{len(results)} results vs {len(references)} references")
    ns = sorted(ns)
    top_hits = {n: 0 for n in ns}
    edits = 0
    n_ref_words = 0
    oov = 0
    for res, ref in zip(results, references):
        ref = tuple(ref)
        hyps = res.hypotheses if hasattr(res, "hypotheses") else res
        word_seqs = [tuple(h[0]) for h in hyps]
        for n in ns:
            if ref in word_seqs[:n]:
                top_hits[n] += 1
        best = word_seqs[0] if word_seqs else ()
        edits += levenshtein(best, ref)
        n_ref_words += len(ref)
        if lexicon is not None:
            oov += sum(1 for w in ref if w not in lexicon)
    n = len(references)
    report = {
        "nSamples": n,
        "topN": {str(k): top_hits[k] / n for k in ns},
        "wordAccuracy": (n_ref_words - edits) / n_ref_words if n_ref_words else 0.0,
        "refWords": n_ref_words,
        "edits": edits,
    }
    if lexicon is not None:
        report["oovRate"] = oov / n_ref_words if n_ref_words else 0.0
    return report


@dataclass
class TimingLog:
    """Wall-clock per sample per pass; lives outside deterministic reports."""

    samples: dict = field(default_factory=dict)  # pass name -> list of seconds

    def add(self, name, seconds):
        self.samples.setdefault(name, []).append(float(seconds))

    def time(self, name):
        log = self

        class _Ctx:
            def __enter__(self):
                self.t0 = time.perf_counter()
                return self

            def __exit__(self, *exc):
                log.add(name, time.perf_counter() - self.t0)
                return False

        return _Ctx()


def timing_report(log: TimingLog) -> dict:
    """Per-pass mean seconds with a machine description."""
    passes = {}
    for name in sorted(log.samples):
        vals = log.samples[name]
        passes[name] = {
            "meanSeconds": sum(vals) / len(vals),
            "nSamples": len(vals),
            "totalSeconds": sum(vals),
        }
    return {
        "passes": passes,
        "machine": f"{platform.platform()} / {platform.processor() or platform.machine()}",
    }
