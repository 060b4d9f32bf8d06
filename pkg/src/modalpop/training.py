"""Physics-informed unsupervised training.

The loss combines a modal-superposition reconstruction term with time- and
frequency-domain mode-independence terms built from Pearson correlation
matrices of the decomposed responses.
"""

import copy
import csv
import os
import time
from dataclasses import dataclass, field
from types import SimpleNamespace

import numpy as np
import torch

from .network import DecompositionModel, ModelConfig, adjacency_mask

CORR_EPS = 1e-8


@dataclass
class LossWeights:
    lambda1: float = 10.0
    lambda2: float = 1.0
    lambda3: float = 1.0

    def __post_init__(self):
        if min(self.lambda1, self.lambda2, self.lambda3) < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass
class TrainConfig:
    learning_rate: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    batch_size: int = 64
    epochs: int = 5000
    seed: int = 0
    loss_weights: LossWeights = field(default_factory=LossWeights)
    independence_enabled: bool = True

    def __post_init__(self):
        if self.learning_rate < 0 or self.batch_size < 1 or self.epochs < 1:
            raise ValueError("invalid training configuration")


@dataclass
class TrainLog:
    epochs: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    term1: list = field(default_factory=list)
    term2: list = field(default_factory=list)
    term3: list = field(default_factory=list)
    wall_time_s: list = field(default_factory=list)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["epoch", "train_loss", "val_loss", "term1", "term2", "term3", "wall_time_s"]
            )
            for row in zip(
                self.epochs, self.train_loss, self.val_loss,
                self.term1, self.term2, self.term3, self.wall_time_s,
            ):
                writer.writerow(row)


def device_from_env() -> torch.device:
    return torch.device(os.environ.get("MODALPOP_DEVICE", "cpu"))


def correlation_matrix(q: torch.Tensor) -> torch.Tensor:
    """Row-wise Pearson correlation with a degenerate-row guard."""
    centered = q - q.mean(dim=1, keepdim=True)
    cov = centered @ centered.T
    norms = torch.sqrt(centered.pow(2).sum(dim=1) + CORR_EPS)
    return cov / (norms[:, None] * norms[None, :])


def spectrum_correlation(q: torch.Tensor) -> torch.Tensor:
    """Pearson correlation of the one-sided FFT amplitude spectra."""
    amp = torch.abs(torch.fft.rfft(q, dim=1))
    return correlation_matrix(amp)


def loss(
    q: torch.Tensor,
    phi: torch.Tensor,
    x: torch.Tensor,
    weights: LossWeights | None = None,
    independence_enabled: bool = True,
):
    """Physics-informed loss for one graph; returns (total, per-term dict)."""
    weights = weights or LossWeights()
    term1 = torch.mean((phi @ q - x) ** 2)
    if independence_enabled:
        eye = torch.eye(q.shape[0], dtype=q.dtype, device=q.device)
        term2 = torch.mean((correlation_matrix(q) - eye) ** 2)
        term3 = torch.mean((spectrum_correlation(q) - eye) ** 2)
    else:
        term2 = torch.zeros((), dtype=q.dtype, device=q.device)
        term3 = torch.zeros((), dtype=q.dtype, device=q.device)
    total = weights.lambda1 * term1 + weights.lambda2 * term2 + weights.lambda3 * term3
    if torch.isnan(total):
        raise FloatingPointError("NaN in physics-informed loss")
    return total, {
        "term1": float(term1.detach()),
        "term2": float(term2.detach()),
        "term3": float(term3.detach()),
    }


def _graph_tensors(graphs, device, dtype=torch.float32):
    out = []
    for g in graphs:
        x = torch.as_tensor(g.signals.signals, dtype=dtype, device=device)
        adj = adjacency_mask(g.truss, device=device)
        out.append((x, adj))
    return out


def _epoch_loss(model, tensors, weights, independence_enabled):
    total = 0.0
    terms = np.zeros(3)
    with torch.no_grad():
        for x, adj in tensors:
            q, phi = model(x, adj)
            value, breakdown = loss(q, phi, x, weights, independence_enabled)
            total += float(value)
            terms += [breakdown["term1"], breakdown["term2"], breakdown["term3"]]
    n = max(len(tensors), 1)
    return total / n, terms / n


def train(
    graphs: list,
    model_config: ModelConfig,
    train_config: TrainConfig,
    device: torch.device | None = None,
    progress=None,
):
    """Train on the train split, track validation loss, keep best weights.

    Returns (model, TrainLog, best_state_dict). Only ``signals`` and the
    truss topology are read from the graphs; modal references are never
    touched.
    """
    device = device or device_from_env()
    torch.manual_seed(train_config.seed)
    rng = np.random.default_rng(train_config.seed)

    train_graphs = [g for g in graphs if g.split_tag == "train"]
    val_graphs = [g for g in graphs if g.split_tag == "validation"]
    if not train_graphs or not val_graphs:
        raise ValueError("dataset must contain nonempty train and validation splits")

    model = DecompositionModel(model_config).to(device)
    optimizer = torch.optim.Adam(
        model.parameters(),
        lr=train_config.learning_rate,
        betas=(train_config.beta1, train_config.beta2),
    )
    train_tensors = _graph_tensors(train_graphs, device)
    val_tensors = _graph_tensors(val_graphs, device)
    weights = train_config.loss_weights
    independence = train_config.independence_enabled

    log = TrainLog()
    best_val = np.inf
    best_state = None
    first_epoch_loss = None
    start = time.perf_counter()

    for epoch in range(train_config.epochs):
        model.train()
        order = rng.permutation(len(train_tensors))
        for lo in range(0, len(order), train_config.batch_size):
            batch = order[lo : lo + train_config.batch_size]
            optimizer.zero_grad()
            batch_loss = 0.0
            for idx in batch:
                x, adj = train_tensors[idx]
                q, phi = model(x, adj)
                value, _ = loss(q, phi, x, weights, independence)
                batch_loss = batch_loss + value
            batch_loss = batch_loss / len(batch)
            batch_loss.backward()
            optimizer.step()

        model.eval()
        train_loss, terms = _epoch_loss(model, train_tensors, weights, independence)
        val_loss, _ = _epoch_loss(model, val_tensors, weights, independence)
        log.epochs.append(epoch)
        log.train_loss.append(train_loss)
        log.val_loss.append(val_loss)
        log.term1.append(terms[0])
        log.term2.append(terms[1])
        log.term3.append(terms[2])
        log.wall_time_s.append(time.perf_counter() - start)
        if first_epoch_loss is None:
            first_epoch_loss = train_loss
        elif train_loss > 10.0 * first_epoch_loss:
            raise FloatingPointError(
                f"training diverged at epoch {epoch}: "
                f"{train_loss:.4g} > 10x epoch-1 loss {first_epoch_loss:.4g}"
            )
        if val_loss < best_val:
            best_val = val_loss
            best_state = copy.deepcopy(model.state_dict())
        if progress is not None:
            progress(epoch, train_loss, val_loss)

    return model, log, best_state


def gradient_check(
    model_config: ModelConfig | None = None,
    tolerance: float = 1e-4,
    n_coords: int = 25,
    seed: int = 0,
    independence_enabled: bool = True,
    weights: LossWeights | None = None,
):
    """Central finite differences vs autograd on a tiny random graph.

    Returns a report dict with the worst relative error and any failing
    parameter coordinates.
    """
    cfg = model_config or ModelConfig(P=3, signal_length=32, hidden_dim=16,
                                      n_inducing_points=4, n_attention_heads=2)
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)

    n_nodes = 4
    truss = SimpleNamespace(
        n_nodes=n_nodes, edges=np.array([[0, 1], [1, 2], [2, 3], [0, 2]])
    )
    model = DecompositionModel(cfg).double()
    x = torch.as_tensor(rng.normal(size=(n_nodes, cfg.signal_length)))
    adj = adjacency_mask(truss)

    def evaluate():
        q, phi = model(x, adj)
        value, _ = loss(q, phi, x, weights, independence_enabled)
        return value

    value = evaluate()
    value.backward()

    params = [(name, p) for name, p in model.named_parameters() if p.grad is not None]
    failures = []
    worst = 0.0
    for _ in range(n_coords):
        name, p = params[rng.integers(len(params))]
        flat = p.detach().reshape(-1)
        k = int(rng.integers(flat.numel()))
        analytic = float(p.grad.reshape(-1)[k])
        orig = float(flat[k])
        h = 1e-4 * max(1.0, abs(orig))
        with torch.no_grad():
            flat[k] = orig + h
            up = float(evaluate())
            flat[k] = orig - h
            down = float(evaluate())
            flat[k] = orig
        numeric = (up - down) / (2 * h)
        # absolute floor keeps FD cancellation noise on near-zero
        # gradients from dominating the relative error
        denom = max(abs(analytic), abs(numeric), 1e-6)
        rel = abs(analytic - numeric) / denom
        worst = max(worst, rel)
        if rel > tolerance:
            failures.append({"param": name, "index": k, "rel_error": rel})
    return {"passed": not failures, "worst_rel_error": worst, "failures": failures}
