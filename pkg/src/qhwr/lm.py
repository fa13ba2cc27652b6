"""Backoff n-gram language model with Witten-Bell smoothing and ARPA io.

Witten-Bell needs no discounting hyperparameters, so training is fully
deterministic. Probabilities are interpolated and re-expressed as a standard
backoff model: for a context h with total count c(h) and T(h) distinct
continuations, the backoff weight is T(h) / (c(h) + T(h)) and seen n-grams
carry their interpolated probability. Natural log internally; ARPA files use
log10 as the format requires.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SOS = "<s>"
EOS = "</s>"
UNK = "<unk>"


class LmError(Exception):
    pass


class EmptyCorpus(LmError):
    pass


class ArpaParseError(LmError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"{message} (line {line})")
        self.line = line


@dataclass
class NGramModel:
    """tables[k] maps (k+1)-tuples of tokens to [logprob, backoff] (natural
    log; backoff None at the highest order)."""

    order: int
    tables: list
    vocab: tuple

    def logp(self, token, context=()) -> float:
        """Backoff-smoothed log P(token | context)."""
        if (token,) not in self.tables[0]:
            token = UNK
        context = tuple(context)[-(self.order - 1) :] if self.order > 1 else ()
        context = tuple(c if (c,) in self.tables[0] else UNK for c in context)
        return self._logp(token, context)

    def _logp(self, token, context):
        gram = context + (token,)
        k = len(gram) - 1
        entry = self.tables[k].get(gram)
        # -inf entries are context placeholders carrying only a backoff
        # weight; a real query falls through to the lower order
        if entry is not None and entry[0] != float("-inf"):
            return entry[0]
        if not context:
            raise LmError(f"unigram missing for {token!r}")  # defect: UNK must exist
        bow = self.tables[len(context) - 1].get(context)
        penalty = bow[1] if bow is not None and bow[1] is not None else 0.0
        return penalty + self._logp(token, context[1:])

    def score(self, tokens) -> float:
        """Sum of log P(t_i | history), history starting at the <s> marker."""
        tokens = list(tokens)
        if not tokens:
            raise LmError("cannot score an empty token sequence")
        history = [SOS]
        total = 0.0
        for tok in tokens:
            total += self.logp(tok, history)
            history.append(tok)
        return total

    def score_sentence(self, tokens) -> float:
        """score() plus the end-of-sentence event."""
        tokens = list(tokens)
        return self.score(tokens + [EOS])


def train_lm(corpus_lines, order=2) -> NGramModel:
    """Witten-Bell backoff model from tokenized lines."""
    if order < 1:
        raise ValueError("order must be >= 1")
    lines = [list(line) for line in corpus_lines if list(line)]
    if not lines:
        raise EmptyCorpus("no corpus lines")

    vocab = {SOS, EOS, UNK}
    for line in lines:
        vocab.update(line)
    vocab = tuple(sorted(vocab))

    # counts[k]: (k+1)-gram counts; contexts[k]: per-context totals and type counts
    counts = [dict() for _ in range(order)]
    for line in lines:
        padded = [SOS] * (order - 1 if order > 1 else 0) + line + [EOS]
        start = order - 1 if order > 1 else 0
        for i in range(start, len(padded)):
            for k in range(order):
                if i - k < 0:
                    continue
                gram = tuple(padded[i - k : i + 1])
                counts[k][gram] = counts[k].get(gram, 0) + 1

    tables = [dict() for _ in range(order)]
    base = 1.0 / len(vocab)

    # unigrams: interpolate with the uniform distribution
    uni = counts[0]
    c_total = sum(uni.values())
    t_types = len(uni)
    denom = c_total + t_types
    for w in vocab:
        c = uni.get((w,), 0)
        p = (c + t_types * base) / denom
        tables[0][(w,)] = [math.log(p), None if order == 1 else 0.0]
    if order == 1:
        return NGramModel(order=1, tables=tables, vocab=vocab)

    # higher orders
    for k in range(1, order):
        ctx_total = {}
        ctx_types = {}
        for gram, c in counts[k].items():
            ctx = gram[:-1]
            ctx_total[ctx] = ctx_total.get(ctx, 0) + c
            ctx_types[ctx] = ctx_types.get(ctx, 0) + 1
        for gram, c in counts[k].items():
            ctx = gram[:-1]
            t = ctx_types[ctx]
            denom = ctx_total[ctx] + t
            lower = _lookup_chain(tables, gram[1:])
            p = (c + t * math.exp(lower)) / denom
            tables[k][gram] = [math.log(p), None if k == order - 1 else 0.0]
        # backoff weights live on context entries one order down
        for ctx, total in ctx_total.items():
            t = ctx_types[ctx]
            bow = t / (total + t)
            entry = tables[k - 1].get(ctx)
            if entry is None:
                # context never counted as an n-gram itself (e.g. (<s>, <s>))
                tables[k - 1][ctx] = [float("-inf"), math.log(bow)]
            else:
                entry[1] = math.log(bow)
    # contexts that were seen as grams but never as contexts keep bow log(1)=0
    return NGramModel(order=order, tables=tables, vocab=vocab)


def _lookup_chain(tables, gram):
    """Backoff probability using only already-built lower orders."""
    k = len(gram) - 1
    entry = tables[k].get(gram)
    if entry is not None and entry[0] != float("-inf"):
        return entry[0]
    ctx = gram[:-1]
    if not ctx:
        raise LmError("missing unigram during training")
    bow = tables[k - 1].get(ctx) if k >= 1 else None
    penalty = bow[1] if bow is not None and bow[1] is not None else 0.0
    return penalty + _lookup_chain(tables, gram[1:])


# --- ARPA ------------------------------------------------------------------------

_LN10 = math.log(10.0)


def write_arpa(lm: NGramModel) -> bytes:
    lines = ["", "\\data\\"]
    for k in range(lm.order):
        lines.append(f"ngram {k + 1}={len(lm.tables[k])}")
    for k in range(lm.order):
        lines.append("")
        lines.append(f"\\{k + 1}-grams:")
        for gram in sorted(lm.tables[k]):
            lp, bow = lm.tables[k][gram]
            # 12 decimals in log10 keeps natural-log scores stable to ~1e-12
            lp10 = -99.0 if lp == float("-inf") else lp / _LN10
            row = f"{lp10:.12f}\t{' '.join(gram)}"
            if bow is not None and k < lm.order - 1:
                row += f"\t{bow / _LN10:.12f}"
            lines.append(row)
    lines.append("")
    lines.append("\\end\\")
    return ("\n".join(lines) + "\n").encode("utf-8")


def read_arpa(data: bytes) -> NGramModel:
    text = data.decode("utf-8")
    lines = text.split("\n")
    i = 0
    while i < len(lines) and lines[i].strip() != "\\data\\":
        if lines[i].strip() and not lines[i].startswith("#"):
            raise ArpaParseError("expected \\data\\ header", line=i + 1)
        i += 1
    if i == len(lines):
        raise ArpaParseError("missing \\data\\ header")
    i += 1
    sizes = []
    while i < len(lines) and lines[i].strip().startswith("ngram"):
        try:
            sizes.append(int(lines[i].split("=")[1]))
        except (IndexError, ValueError):
            raise ArpaParseError("bad ngram count", line=i + 1)
        i += 1
    if not sizes:
        raise ArpaParseError("no ngram counts in header", line=i + 1)
    order = len(sizes)
    tables = [dict() for _ in range(order)]
    vocab = set()
    k = None
    for j in range(i, len(lines)):
        s = lines[j].strip()
        if not s:
            continue
        if s == "\\end\\":
            break
        if s.endswith("-grams:") and s.startswith("\\"):
            k = int(s[1:].split("-")[0]) - 1
            continue
        if k is None:
            raise ArpaParseError("n-gram entry before any section", line=j + 1)
        parts = s.split("\t") if "\t" in s else s.split()
        try:
            lp = float(parts[0])
        except ValueError:
            raise ArpaParseError("bad log-probability", line=j + 1)
        if "\t" in s:
            toks = parts[1].split()
            bow = float(parts[2]) if len(parts) > 2 else None
        else:
            has_bow = len(parts) == k + 3
            toks = parts[1 : k + 2]
            bow = float(parts[-1]) if has_bow else None
        if len(toks) != k + 1:
            raise ArpaParseError(f"expected {k + 1} tokens", line=j + 1)
        lp_nat = float("-inf") if lp <= -99 else lp * _LN10
        bow_nat = None if k == order - 1 else (bow * _LN10 if bow is not None else 0.0)
        tables[k][tuple(toks)] = [lp_nat, bow_nat]
        vocab.update(toks)
    else:
        raise ArpaParseError("missing \\end\\ marker")
    for k in range(order):
        if len(tables[k]) != sizes[k]:
            raise ArpaParseError(f"{k + 1}-gram count mismatch: header {sizes[k]}, body {len(tables[k])}")
    return NGramModel(order=order, tables=tables, vocab=tuple(sorted(vocab)))


def context_normalization(lm: NGramModel, context) -> float:
    """Sum of P(w | context) over the whole vocabulary (backoff expanded)."""
    return float(sum(math.exp(lm.logp(w, context)) for w in lm.vocab))
