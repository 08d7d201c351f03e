"""Export per-token hidden states to OCHS files, one file per prompt.

OCHS format (little-endian):

    magic "OCHS" | version u32 | n_tokens u32 | n_layers u32 | hidden_dim u32
    | f32 tensor [n_tokens, n_layers, hidden_dim]
    | metadata length u32 | UTF-8 JSON metadata

The metadata records the tokenizer name and a hash of the prompt.  Files are
written to a temporary name and renamed into place, so a crashed run never
leaves a partial file behind.
"""

import hashlib
import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .models import load_model

OCHS_MAGIC = b"OCHS"
OCHS_VERSION = 1


@dataclass(frozen=True)
class ExportJob:
    model_id: str
    prompts_path: Path
    out_dir: Path


def write_ochs(path: Path, states: np.ndarray, meta: dict):
    states = np.ascontiguousarray(states, dtype="<f4")
    if states.ndim != 3:
        raise ValueError("hidden states must have shape [tokens, layers, dim]")
    meta_blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(OCHS_MAGIC)
        fh.write(struct.pack("<IIII", OCHS_VERSION, *states.shape))
        fh.write(states.tobytes())
        fh.write(struct.pack("<I", len(meta_blob)))
        fh.write(meta_blob)
    os.replace(tmp, path)


def read_prompts(path: Path) -> list[str]:
    lines = path.read_text().splitlines()
    return [line for line in lines if line.strip()]


def export(job: ExportJob) -> list[Path]:
    """Run the model over every prompt and write one OCHS file each.
    Returns the written paths in prompt order."""
    model = load_model(job.model_id)
    prompts = read_prompts(job.prompts_path)
    job.out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for i, prompt in enumerate(prompts):
        states = model.hidden_states(prompt)
        n_tokens = len(model.tokenize(prompt))
        if states.shape[0] != n_tokens:
            raise RuntimeError(
                f"prompt {i}: state tensor has {states.shape[0]} tokens, "
                f"tokenizer produced {n_tokens}"
            )
        meta = {
            "tokenizer": model.tokenizer_name,
            "prompt_hash": hashlib.sha256(prompt.encode("utf-8")).hexdigest(),
            "model": job.model_id,
            "prompt_index": i,
        }
        path = job.out_dir / f"prompt_{i:04d}.ochs"
        write_ochs(path, states, meta)
        written.append(path)
    return written
