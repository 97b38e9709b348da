"""Behavior-tree task generation with Phase-Step prompts and large language models."""

__version__ = "0.1.0"
