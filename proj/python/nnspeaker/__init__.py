"""Text-independent speaker classification and verification toolkit.

The heavy lifting lives in the native extension; this package re-exports the
operations most useful from python.
"""

from nnspeaker._core import (
    add_deltas,
    concatenate_frames,
    detect_voice,
    duration_from_frames,
    extract_voiced,
    gaussian_intersection,
    generate_synthetic_corpus,
    gradient_check,
    histogram_threshold,
    median_smooth,
    mfcc,
    normalize_amplitude,
    normalize_scores,
    read_wav,
    roc,
    run_pipeline,
    short_term_energy,
    spectral_centroid,
    write_wav,
)

__all__ = [
    "add_deltas",
    "concatenate_frames",
    "detect_voice",
    "duration_from_frames",
    "extract_voiced",
    "gaussian_intersection",
    "generate_synthetic_corpus",
    "gradient_check",
    "histogram_threshold",
    "median_smooth",
    "mfcc",
    "normalize_amplitude",
    "normalize_scores",
    "read_wav",
    "roc",
    "run_pipeline",
    "short_term_energy",
    "spectral_centroid",
    "write_wav",
]

__version__ = "0.1.0"
