"""Collaborative summarization engine.

A desk-scale sequence-to-sequence summarizer whose copy mechanism is gated
by per-word copyability tags that a human can override, plus a separate
attribution model that maps any summary back onto the source words it used.
Ships with its own float64 autodiff core, a synthetic training corpus with
known ground truth, an HTTP service, and a CLI.
"""

__version__ = "0.1.0"
