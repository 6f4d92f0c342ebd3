"""Object-level video anomaly detection engine.

Scores video frames by modeling per-object velocity, pose, and deep
(embedding) attributes with density estimators fitted on normal training
clips, then fusing calibrated per-feature scores per frame.
"""

__version__ = "0.1.0"

GENERATOR_STAMP = f"ovad {__version__}"
