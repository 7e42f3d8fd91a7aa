"""Adaptive image restoration via planned tool paths and per-pixel strength maps.

A perception stage (feature extractor + path scheduler + strength modulator)
predicts a restoration program for a degraded image; an execution stage applies
the scheduled tools sequentially with residual scaling. An exhaustive search
oracle produces ground-truth path labels and a two-stage trainer fits the
planner.
"""

__version__ = "0.1.0"
