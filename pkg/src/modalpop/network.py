"""Decomposition model: GraphSAGE encoder, set-attention graph head for
modal responses, and a shared per-node MLP head for mode shapes.

The model maps normalized accelerations (N x T) on a truss graph to P
modal responses (P x T) and mode shapes (N x P). All blocks accept a
variable node count N; one parameter set serves the whole population.
"""

from dataclasses import dataclass, asdict

import numpy as np
import torch
import torch.nn as nn

VARIANTS = ("full", "no_gnn", "set_lstm")


@dataclass
class ModelConfig:
    P: int = 7
    signal_length: int = 2000
    hidden_dim: int = 128
    n_gnn_layers: int = 3
    n_mlp_layers: int = 3
    n_attention_heads: int = 4
    n_inducing_points: int = 16
    n_attention_blocks: int = 2
    activation: str = "relu"
    variant: str = "full"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.P < 1 or self.hidden_dim < 1:
            raise ValueError("P and hidden_dim must be positive")


@dataclass
class DecompositionResult:
    modal_responses: np.ndarray  # (P, T)
    mode_shapes: np.ndarray  # (N, P)


def _activation(name: str) -> nn.Module:
    return {"relu": nn.ReLU(), "tanh": nn.Tanh(), "gelu": nn.GELU()}[name]


def adjacency_mask(truss, device=None) -> torch.Tensor:
    """Boolean neighbor mask with self-loops for max aggregation."""
    n = truss.n_nodes
    mask = torch.zeros(n, n, dtype=torch.bool, device=device)
    e = torch.as_tensor(np.asarray(truss.edges), dtype=torch.long, device=device)
    mask[e[:, 0], e[:, 1]] = True
    mask[e[:, 1], e[:, 0]] = True
    mask |= torch.eye(n, dtype=torch.bool, device=device)
    return mask


class GraphSageLayer(nn.Module):
    """Max-pool neighborhood aggregation with pre- and post-pool transforms.

    Self-loops are included so a node's own feature joins the pool; the
    output bias is applied outside the nonlinearity.
    """

    def __init__(self, d_in: int, d_out: int, activation: str = "relu"):
        super().__init__()
        self.pre_pool = nn.Linear(d_in, d_out)
        self.post_pool = nn.Linear(d_out, d_out, bias=False)
        self.bias = nn.Parameter(torch.zeros(d_out))
        self.act = _activation(activation)

    def forward(self, h: torch.Tensor, adj: torch.Tensor) -> torch.Tensor:
        pooled = self.act(self.pre_pool(h))  # (N, d_out)
        expanded = pooled.unsqueeze(0).expand(h.shape[0], -1, -1)
        neg = torch.finfo(pooled.dtype).min
        masked = expanded.masked_fill(~adj.unsqueeze(-1), neg)
        agg = masked.max(dim=1).values
        return self.act(self.post_pool(agg)) + self.bias


class NodeMLP(nn.Module):
    """Per-node MLP applied row-wise; final layer is affine."""

    def __init__(self, d_in, d_hidden, d_out, n_layers=3, activation="relu"):
        super().__init__()
        layers = []
        dims = [d_in] + [d_hidden] * (n_layers - 1) + [d_out]
        for k in range(n_layers):
            layers.append(nn.Linear(dims[k], dims[k + 1]))
            if k < n_layers - 1:
                layers.append(_activation(activation))
        self.net = nn.Sequential(*layers)

    def forward(self, h):
        return self.net(h)


class MultiheadAttentionBlock(nn.Module):
    """Attention block with residual feed-forward (MAB of the set-attention
    family)."""

    def __init__(self, dim, n_heads):
        super().__init__()
        self.attn = nn.MultiheadAttention(dim, n_heads, batch_first=True)
        self.ln0 = nn.LayerNorm(dim)
        self.ln1 = nn.LayerNorm(dim)
        self.ff = nn.Sequential(nn.Linear(dim, dim), nn.ReLU())

    def forward(self, q, kv):
        h = self.ln0(q + self.attn(q, kv, kv, need_weights=False)[0])
        return self.ln1(h + self.ff(h))


class InducedAttentionBlock(nn.Module):
    """Attention through a small set of learned inducing points."""

    def __init__(self, dim, n_heads, n_inducing):
        super().__init__()
        self.inducing = nn.Parameter(torch.empty(1, n_inducing, dim))
        nn.init.xavier_uniform_(self.inducing)
        self.mab0 = MultiheadAttentionBlock(dim, n_heads)
        self.mab1 = MultiheadAttentionBlock(dim, n_heads)

    def forward(self, x):
        h = self.mab0(self.inducing.expand(x.shape[0], -1, -1), x)
        return self.mab1(x, h)


class SeedPooling(nn.Module):
    """Pool a variable-size set onto P learned seed vectors."""

    def __init__(self, dim, n_heads, n_seeds):
        super().__init__()
        self.seeds = nn.Parameter(torch.empty(1, n_seeds, dim))
        nn.init.xavier_uniform_(self.seeds)
        self.ff = nn.Sequential(nn.Linear(dim, dim), nn.ReLU())
        self.mab = MultiheadAttentionBlock(dim, n_heads)

    def forward(self, x):
        return self.mab(self.seeds.expand(x.shape[0], -1, -1), self.ff(x))


class SetAttentionHead(nn.Module):
    """Induced attention encoder + seed pooling -> (P, dim)."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.blocks = nn.ModuleList(
            InducedAttentionBlock(
                cfg.hidden_dim, cfg.n_attention_heads, cfg.n_inducing_points
            )
            for _ in range(cfg.n_attention_blocks)
        )
        self.pool = SeedPooling(cfg.hidden_dim, cfg.n_attention_heads, cfg.P)

    def forward(self, h):  # h: (N, dim)
        x = h.unsqueeze(0)
        for block in self.blocks:
            x = block(x)
        return self.pool(x).squeeze(0)  # (P, dim)


class SetLstmHead(nn.Module):
    """Order-invariant LSTM process block with attention readout."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cell = nn.LSTMCell(cfg.hidden_dim, cfg.hidden_dim)
        self.P = cfg.P
        self.dim = cfg.hidden_dim

    def forward(self, h):  # h: (N, dim)
        state = h.new_zeros(1, self.dim)
        cell_state = h.new_zeros(1, self.dim)
        outputs = []
        for _ in range(self.P):
            scores = h @ state.squeeze(0) / np.sqrt(self.dim)
            read = torch.softmax(scores, dim=0) @ h
            state, cell_state = self.cell(read.unsqueeze(0), (state, cell_state))
            outputs.append(state.squeeze(0))
        return torch.stack(outputs)  # (P, dim)


class PerSeedDecoder(nn.Module):
    """Independent affine map dim -> T for each of the P pooled vectors."""

    def __init__(self, P, dim, T):
        super().__init__()
        self.weight = nn.Parameter(torch.empty(P, dim, T))
        self.bias = nn.Parameter(torch.zeros(P, T))
        bound = 1.0 / np.sqrt(dim)
        nn.init.uniform_(self.weight, -bound, bound)

    def forward(self, z):  # z: (P, dim)
        return torch.einsum("pd,pdt->pt", z, self.weight) + self.bias


class DecompositionModel(nn.Module):
    """Full model: encoder + graph-level and node-level heads."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        dims = [cfg.signal_length] + [cfg.hidden_dim] * cfg.n_gnn_layers
        if cfg.variant == "no_gnn":
            self.encoder = NodeMLP(
                cfg.signal_length,
                cfg.hidden_dim,
                cfg.hidden_dim,
                cfg.n_gnn_layers,
                cfg.activation,
            )
        else:
            self.encoder = nn.ModuleList(
                GraphSageLayer(dims[k], dims[k + 1], cfg.activation)
                for k in range(cfg.n_gnn_layers)
            )
        if cfg.variant == "set_lstm":
            self.graph_head = SetLstmHead(cfg)
        else:
            self.graph_head = SetAttentionHead(cfg)
        self.decoder = PerSeedDecoder(cfg.P, cfg.hidden_dim, cfg.signal_length)
        self.node_head = NodeMLP(
            cfg.hidden_dim, cfg.hidden_dim, cfg.P, cfg.n_mlp_layers, cfg.activation
        )

    def encode(self, signals: torch.Tensor, adj: torch.Tensor) -> torch.Tensor:
        if self.cfg.variant == "no_gnn":
            return self.encoder(signals)
        h = signals
        for layer in self.encoder:
            h = layer(h, adj)
        return h

    def forward(self, signals: torch.Tensor, adj: torch.Tensor):
        """Returns (modal_responses (P, T), mode_shapes (N, P))."""
        h = self.encode(signals, adj)
        q = self.decoder(self.graph_head(h))
        phi = self.node_head(h)
        return q, phi


def normalize_decomposition(q: np.ndarray, phi: np.ndarray) -> DecompositionResult:
    """Resolve the scale/sign ambiguity of the factorization phi @ q.

    Each shape column is rescaled to unit max-abs with its dominant entry
    positive; the inverse scale is pushed into the matching response row so
    the product is unchanged.
    """
    q = q.copy()
    phi = phi.copy()
    for p in range(phi.shape[1]):
        peak = np.argmax(np.abs(phi[:, p]))
        scale = phi[peak, p]
        if scale != 0:
            phi[:, p] /= scale
            q[p, :] *= scale
    return DecompositionResult(modal_responses=q, mode_shapes=phi)


def save_checkpoint(path, model: DecompositionModel, seed: int, extra=None):
    payload = {
        "config": asdict(model.cfg),
        "state_dict": model.state_dict(),
        "seed": seed,
    }
    if extra:
        payload.update(extra)
    torch.save(payload, path)


def load_checkpoint(path) -> tuple[DecompositionModel, dict]:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    cfg = ModelConfig(**payload["config"])
    model = DecompositionModel(cfg)
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, payload
