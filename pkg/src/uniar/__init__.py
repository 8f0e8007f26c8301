"""Desk-scale unified model of human visual attention and responses.

One multimodal model, conditioned on a text prompt, predicts three
kinds of human behavior on an image: attention heatmaps, fixation
scanpaths (as token strings), and subjective ratings. The package
also ships the full evaluation-metric suite, the scanpath token
codec, synthetic data generators with an equal-rate dataset mixture,
a small float64 reverse-mode autodiff engine the model runs on, and
a command-line interface.
"""

from .data import (
    MixtureConfig,
    blob_scene,
    contrast_score,
    gen_rating_task,
    gen_saliency_task,
    gen_scanpath_task,
    load_handle,
    mixture_next,
    mixture_start,
    noise_scene,
    read_grid,
    read_pgm,
    read_ppm,
    read_ratings,
    read_scanpaths,
    sample_rng,
    save_handle,
    write_grid,
    write_pgm,
    write_ppm,
    write_ratings,
    write_scanpaths,
)
from .errors import NumericError, ParseError, UniarError, ValidationError
from .types import (
    INPUT_TYPES,
    OUTPUT_TYPES,
    BinnedScanpath,
    DatasetHandle,
    FixationSet,
    GrayMap,
    ImageGrid,
    PromptSpec,
    RatingSample,
    Sample,
    Scanpath,
    SegmentationMap,
    TokenString,
    parse_prompt,
    render_prompt,
    target_kind,
)

__version__ = "0.1.0"
