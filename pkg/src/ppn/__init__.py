"""Progressive prototypical network for risk prediction on sparse clinical
time series: per-indicator recurrent encoding, a memory of typical patients
maintained by progressive clustering and optimal matching, similarity-weighted
feature integration, and cohort-level interpretation."""

__version__ = "0.1.0"
