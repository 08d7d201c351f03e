"""Dump per-token transformer hidden states to OCHS files."""

from .export import ExportJob, export, read_prompts, write_ochs
from .models import HfLM, TinyByteLM, load_model

__version__ = "0.1.0"
