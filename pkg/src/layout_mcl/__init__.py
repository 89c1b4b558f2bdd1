"""Diverse layout generation with multi-hypothesis prediction.

Autoregressive encoder/decoder over layout object sequences, a bank of
per-category bounding-box predictors trained with a mixture-coefficient
weighted winner-takes-all loss, evaluation metrics, a 2-D toy lab, and a
generation service.
"""

__version__ = "0.1.0"
