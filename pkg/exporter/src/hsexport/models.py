"""Model backends that produce per-token, per-layer hidden states.

Two sources:

- ``tiny[:seed]``: a built-in byte-level causal transformer with seed-pinned
  random weights.  No downloads, fully deterministic; meant for format
  validation and pipeline tests.
- ``hf:<name-or-path>``: any locally available causal transformer through the
  ``transformers`` library, with hidden states from every layer.
"""

import numpy as np
import torch
from torch import nn


class TinyByteLM(nn.Module):
    """Small causal transformer over raw UTF-8 bytes.

    The hidden-state stack per token is [embedding, block 1, ..., block N],
    mirroring how full-size models expose one tensor per layer plus the
    embedding output.
    """

    tokenizer_name = "byte-utf8"

    def __init__(self, dim: int = 32, n_layers: int = 3, n_heads: int = 4,
                 max_len: int = 2048, seed: int = 0):
        super().__init__()
        torch.manual_seed(seed)
        self.dim = dim
        self.max_len = max_len
        self.embed = nn.Embedding(256, dim)
        self.pos = nn.Embedding(max_len, dim)
        self.blocks = nn.ModuleList([
            nn.TransformerEncoderLayer(
                d_model=dim, nhead=n_heads, dim_feedforward=4 * dim,
                dropout=0.0, batch_first=True, norm_first=True,
            )
            for _ in range(n_layers)
        ])
        self.eval()

    def tokenize(self, text: str) -> list[int]:
        return list(text.encode("utf-8"))

    @torch.no_grad()
    def hidden_states(self, text: str) -> np.ndarray:
        ids = self.tokenize(text)
        if not ids:
            raise ValueError("cannot encode an empty prompt")
        if len(ids) > self.max_len:
            raise ValueError(f"prompt of {len(ids)} tokens exceeds max length {self.max_len}")
        x = torch.tensor(ids).unsqueeze(0)
        h = self.embed(x) + self.pos(torch.arange(len(ids)).unsqueeze(0))
        mask = nn.Transformer.generate_square_subsequent_mask(len(ids))
        layers = [h]
        for block in self.blocks:
            h = block(h, src_mask=mask)
            layers.append(h)
        stacked = torch.stack(layers, dim=2)[0]  # [tokens, layers, dim]
        return stacked.to(torch.float32).numpy()


class HfLM:
    """Hidden states from a transformers model available on local disk."""

    def __init__(self, name_or_path: str):
        try:
            from transformers import AutoModel, AutoTokenizer
        except ImportError as e:  # pragma: no cover - environment dependent
            raise RuntimeError(
                "the 'transformers' package is required for hf: models"
            ) from e
        try:
            self.tokenizer = AutoTokenizer.from_pretrained(name_or_path)
            self.model = AutoModel.from_pretrained(name_or_path,
                                                   output_hidden_states=True)
        except Exception as e:
            raise RuntimeError(f"failed to load model {name_or_path!r}: {e}") from e
        self.model.eval()
        self.tokenizer_name = getattr(self.tokenizer, "name_or_path", name_or_path)

    def tokenize(self, text: str) -> list[int]:
        return self.tokenizer(text, add_special_tokens=True)["input_ids"]

    @torch.no_grad()
    def hidden_states(self, text: str) -> np.ndarray:
        ids = self.tokenize(text)
        if not ids:
            raise ValueError("cannot encode an empty prompt")
        out = self.model(torch.tensor(ids).unsqueeze(0))
        stacked = torch.stack(out.hidden_states, dim=2)[0]
        return stacked.to(torch.float32).numpy()


def load_model(model_id: str):
    """Resolve a model identifier: 'tiny', 'tiny:SEED', or 'hf:NAME'."""
    if model_id == "tiny" or model_id.startswith("tiny:"):
        seed = int(model_id.split(":", 1)[1]) if ":" in model_id else 0
        return TinyByteLM(seed=seed)
    if model_id.startswith("hf:"):
        return HfLM(model_id[3:])
    raise ValueError(
        f"unknown model {model_id!r}; expected 'tiny[:seed]' or 'hf:<name-or-path>'"
    )
