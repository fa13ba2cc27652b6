"""Glue: ink conditioning -> rearrangement -> features, as one call.

This is the in-memory path the recipe, service and tests share; the CLI
exposes the same stages as separate subcommands.
"""

from __future__ import annotations

from dataclasses import dataclass

from .features import FeatureConfig, FeatureSequence, featurize
from .ink import InkSample
from .preprocess import PreprocessConfig, apply_pipeline
from .reorder import ReorderConfig, rearrange


@dataclass(frozen=True)
class PipelineConfig:
    preprocess: str = "p4"
    reorder: bool = True
    pre: PreprocessConfig = PreprocessConfig()
    re: ReorderConfig = ReorderConfig()
    feat: FeatureConfig = FeatureConfig()


def ink_to_features(sample: InkSample, cfg: PipelineConfig | None = None) -> FeatureSequence:
    cfg = cfg or PipelineConfig()
    out = apply_pipeline(sample, cfg.preprocess, cfg.pre)
    if cfg.reorder and cfg.preprocess != "p0":
        out, _ = rearrange(out, cfg.re)
    return featurize(out, cfg.feat)


def featurize_corpus(samples, cfg: PipelineConfig | None = None):
    """[(transcript, FeatureSequence)] for samples that carry transcripts."""
    out = []
    for s in samples:
        if s.transcript is None:
            raise ValueError("sample without transcript in training corpus")
        out.append((tuple(s.transcript), ink_to_features(s, cfg)))
    return out
