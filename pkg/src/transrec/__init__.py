"""Transitive ranking losses for sequential recommendation.

Modules: ``corpus`` (data prep), ``sampling`` (negatives), ``tensor``
(autodiff), ``encoder`` (self-attention model), ``losses``, ``trainer``,
``evaluation`` and the ``cli`` entry point.
"""

__version__ = "0.1.0"
