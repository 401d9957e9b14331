"""The world model network.

Token embeddings (learnable token + sinusoidal value terms + learnable
positional), a patch-linear raster autoencoder for static context, a causal
transformer with gated cross-attention every `cross_period` layers, linear
trajectory heads on intermediate layers, and the recurrent chunk decoder.
"""
from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn

from .config import ModelConfig
from .decoder import ChunkDecoder, build_plans, slot_kind_names
from .tensorize import SeqTensors

SINUSOIDAL_BASE = 10000.0


def sinusoidal_embedding(u: torch.Tensor, d: int) -> torch.Tensor:
    """Alternating sin/cos of a [0,1] value over ascending frequencies.

    out[..., 2i] = sin(u * base^(i/(d/2))), out[..., 2i+1] = cos(same).
    """
    half = d // 2
    i = torch.arange(half, dtype=u.dtype, device=u.device)
    freqs = SINUSOIDAL_BASE ** (i / max(half, 1))
    ang = u[..., None] * freqs
    out = torch.zeros(*u.shape, d, dtype=u.dtype, device=u.device)
    out[..., 0::2] = torch.sin(ang)
    out[..., 1::2] = torch.cos(ang)
    return out


class CausalSelfAttention(nn.Module):
    def __init__(self, d: int, heads: int):
        super().__init__()
        self.heads = heads
        self.qkv = nn.Linear(d, 3 * d)
        self.proj = nn.Linear(d, d)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        B, L, d = x.shape
        q, k, v = self.qkv(x).chunk(3, dim=-1)
        shape = (B, L, self.heads, d // self.heads)
        q, k, v = (t.view(shape).transpose(1, 2) for t in (q, k, v))
        y = F.scaled_dot_product_attention(q, k, v, is_causal=True)
        return self.proj(y.transpose(1, 2).reshape(B, L, d))


class CrossAttention(nn.Module):
    def __init__(self, d: int, heads: int):
        super().__init__()
        self.heads = heads
        self.q = nn.Linear(d, d)
        self.kv = nn.Linear(d, 2 * d)
        self.proj = nn.Linear(d, d)

    def forward(self, x: torch.Tensor, ctx: torch.Tensor) -> torch.Tensor:
        B, L, d = x.shape
        N = ctx.shape[1]
        q = self.q(x).view(B, L, self.heads, d // self.heads).transpose(1, 2)
        k, v = self.kv(ctx).chunk(2, dim=-1)
        k = k.view(B, N, self.heads, d // self.heads).transpose(1, 2)
        v = v.view(B, N, self.heads, d // self.heads).transpose(1, 2)
        y = F.scaled_dot_product_attention(q, k, v)
        return self.proj(y.transpose(1, 2).reshape(B, L, d))


class Block(nn.Module):
    def __init__(self, d: int, heads: int):
        super().__init__()
        self.ln1 = nn.LayerNorm(d)
        self.attn = CausalSelfAttention(d, heads)
        self.ln2 = nn.LayerNorm(d)
        self.mlp = nn.Sequential(nn.Linear(d, 4 * d), nn.GELU(), nn.Linear(4 * d, d))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.ln1(x))
        return x + self.mlp(self.ln2(x))


class GatedCrossBlock(nn.Module):
    """Cross-attention scaled by tanh(alpha); identity at initialization."""

    def __init__(self, d: int, heads: int):
        super().__init__()
        self.ln = nn.LayerNorm(d)
        self.attn = CrossAttention(d, heads)
        self.alpha = nn.Parameter(torch.zeros(()))

    def forward(self, x: torch.Tensor, ctx: torch.Tensor) -> torch.Tensor:
        return x + torch.tanh(self.alpha) * self.attn(self.ln(x), ctx)


class WorldModel(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.vocab = cfg.vocabulary()
        d = cfg.d_model
        self.token_emb = nn.Embedding(self.vocab.size, d)
        self.pos_emb = nn.Embedding(cfg.block_size, d)
        patch_dim = cfg.raster_channels * cfg.raster_patch ** 2
        self.raster_enc = nn.Linear(patch_dim, d)
        self.raster_dec = nn.Linear(d, patch_dim)
        self.blocks = nn.ModuleList(Block(d, cfg.n_heads) for _ in range(cfg.n_layers))
        self.cross_blocks = nn.ModuleDict({
            str(i): GatedCrossBlock(d, cfg.n_heads)
            for i in range(cfg.n_layers) if (i + 1) % cfg.cross_period == 0
        })
        self.ln_f = nn.LayerNorm(d)
        H = cfg.chunk_horizon
        self.plans = build_plans(H)
        self.decoder = ChunkDecoder(d, cfg.gru_hidden, cfg.gru_layers,
                                    self.vocab.size, len(slot_kind_names(H)))
        head_out = cfg.n_traj_modes * (1 + 3 * H)
        self.traj_heads = nn.ModuleList(
            nn.Linear(d, head_out)
            for i in range(cfg.n_layers) if (i + 1) % cfg.traj_head_period == 0
        )
        self.apply(self._init)
        with torch.no_grad():
            for blk in self.cross_blocks.values():
                blk.alpha.zero_()

    @staticmethod
    def _init(m: nn.Module):
        if isinstance(m, (nn.Linear, nn.Embedding)):
            nn.init.normal_(m.weight, std=0.02)
            if isinstance(m, nn.Linear) and m.bias is not None:
                nn.init.zeros_(m.bias)

    # --- embeddings -----------------------------------------------------
    def embed_events(self, seq: SeqTensors) -> torch.Tensor:
        if seq.length > self.cfg.block_size:
            raise ValueError(f"sequence length {seq.length} exceeds block size")
        dtype = self.token_emb.weight.dtype
        e = self.pos_emb(seq.positions)
        plain = self.token_emb(seq.plain_tokens) * seq.plain_mask[..., None].to(dtype)
        e = e + plain.sum(dim=2)
        attr = self.token_emb(seq.attr_tokens) + sinusoidal_embedding(
            seq.attr_norms.to(dtype), self.cfg.d_model)
        e = e + (attr * seq.attr_mask[..., None].to(dtype)).sum(dim=2)
        return e

    def embed_key(self, id_token: int, class_token: int, position: int) -> torch.Tensor:
        """PE(i) + Embed(id) + Embed(class)."""
        if position >= self.cfg.block_size:
            raise ValueError("position exceeds block size")
        dev = self.token_emb.weight.device
        return (self.pos_emb(torch.tensor(position, device=dev))
                + self.token_emb(torch.tensor(id_token, device=dev))
                + self.token_emb(torch.tensor(class_token, device=dev)))

    def embed_value(self, attr_tokens, raw_norms, position: int,
                    state_token: int | None = None) -> torch.Tensor:
        """PE(i) + sum(Embed(attr) + sinusoidal(norm)) (+ Embed(state) for lights)."""
        if len(attr_tokens) != len(raw_norms):
            raise ValueError("attribute tuple arity mismatch")
        dev = self.token_emb.weight.device
        dtype = self.token_emb.weight.dtype
        e = self.pos_emb(torch.tensor(position, device=dev)).clone()
        for tok, u in zip(attr_tokens, raw_norms):
            e = e + self.token_emb(torch.tensor(int(tok), device=dev))
            e = e + sinusoidal_embedding(torch.tensor(float(u), device=dev, dtype=dtype),
                                         self.cfg.d_model)
        if state_token is not None:
            e = e + self.token_emb(torch.tensor(int(state_token), device=dev))
        return e

    # --- raster autoencoder ----------------------------------------------
    def raster_encode(self, grid: torch.Tensor) -> torch.Tensor:
        """(B, C, G, G) -> (B, N, d) patch latents."""
        cfg = self.cfg
        B, C, G, _ = grid.shape
        if C != cfg.raster_channels or G != cfg.raster_grid:
            raise ValueError("raster shape mismatch")
        p = cfg.raster_patch
        n = G // p
        x = grid.view(B, C, n, p, n, p).permute(0, 2, 4, 1, 3, 5).reshape(B, n * n, C * p * p)
        return self.raster_enc(x)

    def raster_reconstruct(self, latents: torch.Tensor) -> torch.Tensor:
        cfg = self.cfg
        B, N, _ = latents.shape
        if N != cfg.n_raster_latents:
            raise ValueError("latent count mismatch")
        p = cfg.raster_patch
        n = cfg.raster_grid // p
        x = self.raster_dec(latents)
        return x.view(B, n, n, cfg.raster_channels, p, p).permute(0, 3, 1, 4, 2, 5) \
                .reshape(B, cfg.raster_channels, cfg.raster_grid, cfg.raster_grid)

    # --- transformer -------------------------------------------------------
    def mct_forward(self, emb: torch.Tensor, ctx: torch.Tensor
                    ) -> tuple[torch.Tensor, list[torch.Tensor]]:
        """(B, L, d) embeddings + (B, N, d) context -> final and per-layer hiddens."""
        x = emb
        layer_out = []
        for i, blk in enumerate(self.blocks):
            x = blk(x)
            key = str(i)
            if key in self.cross_blocks:
                x = self.cross_blocks[key](x, ctx)
            layer_out.append(x)
        return self.ln_f(x), layer_out

    def forward(self, seq: SeqTensors, raster: torch.Tensor
                ) -> tuple[torch.Tensor, list[torch.Tensor], torch.Tensor]:
        """Returns (final hiddens (B,L,d), per-layer hiddens, raster latents)."""
        ctx = self.raster_encode(raster)
        hidden, layers = self.mct_forward(self.embed_events(seq), ctx)
        return hidden, layers, ctx

    # --- heads ------------------------------------------------------------
    def traj_predict(self, head_index: int, h: torch.Tensor
                     ) -> tuple[torch.Tensor, torch.Tensor]:
        """(B, d) -> mode logits (B, M) and poses (B, M, H, 3)."""
        cfg = self.cfg
        out = self.traj_heads[head_index](h)
        M, H = cfg.n_traj_modes, cfg.chunk_horizon
        logits = out[..., :M]
        poses = out[..., M:].reshape(*h.shape[:-1], M, H, 3)
        return logits, poses

    def n_parameters(self) -> int:
        return sum(p.numel() for p in self.parameters())
