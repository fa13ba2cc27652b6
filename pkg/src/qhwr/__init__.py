"""Online handwriting recognition engine.

Pipeline: ink conditioning -> delayed-stroke rearrangement -> point-wise
features -> grapheme GMM-HMMs (ML / writer-adaptive / discriminative
training) -> two-pass lexicon decoding with n-gram lattice rescoring.
"""

__version__ = "0.1.0"
