"""Concept-conditioned two-speaker separation (C++ core)."""

from ._core import (
    VOCABULARY,
    ConfigError,
    DataError,
    Experiment,
    HetsepError,
    IoError,
    NumericError,
    Separator,
    aggregate_median,
    conditional_loss,
    count_parameters,
    encode_concept,
    film_parameter_count,
    frame_count,
    image_source_rir,
    pit_loss,
    render_toy_voice,
    si_sdr,
    synth_toy_corpus,
)

__all__ = [
    "VOCABULARY",
    "ConfigError",
    "DataError",
    "Experiment",
    "HetsepError",
    "IoError",
    "NumericError",
    "Separator",
    "aggregate_median",
    "conditional_loss",
    "count_parameters",
    "encode_concept",
    "film_parameter_count",
    "frame_count",
    "image_source_rir",
    "pit_loss",
    "render_toy_voice",
    "si_sdr",
    "synth_toy_corpus",
]
