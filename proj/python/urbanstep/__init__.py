"""Stepwise generative urban design: prompts, metrics, generation and sessions."""

from ._urbanstep import (
    PromptParseError,
    UrbanstepError,
    Workflow,
    build_prompt,
    classify,
    decode_png,
    diversity,
    encode_png,
    features,
    frechet_distance,
    generate,
    jenks_breaks,
    measure,
    palette,
    parse_prompt,
    score_compliance,
    tile,
    validate_targets,
)

__all__ = [
    "PromptParseError",
    "UrbanstepError",
    "Workflow",
    "build_prompt",
    "classify",
    "decode_png",
    "diversity",
    "encode_png",
    "features",
    "frechet_distance",
    "generate",
    "jenks_breaks",
    "measure",
    "palette",
    "parse_prompt",
    "score_compliance",
    "tile",
    "validate_targets",
]
