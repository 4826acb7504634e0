"""Synthesis services package."""

from .promptdfd_service import PromptDFDService, PromptSampler, prompter_sampler, synthesize_transfer_set

__all__ = [
    "PromptDFDService",
    "PromptSampler",
    "prompter_sampler",
    "synthesize_transfer_set",
]
