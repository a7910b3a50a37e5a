"""
Isometric-regularized autoencoder over design feature vectors.

Encoder in -> 64 -> 32 -> z and decoder z -> 32 -> 64 -> in, tanh on the
hidden layers and a linear output. Everything runs in float64 on the CPU.
The decoder Jacobian is exact: one tangent (directional) forward pass per
latent dimension, kept differentiable so the isometry term can be trained.
"""

from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import torch
from torch import nn

from config import DhConfig, ScrewConfig, TrainConfig
from dh_model import dh_to_structure
from errors import DimensionMismatch, ExportError, NonFiniteLoss, ZeroJacobian
from screw_model import FEATURE_DIM, FullBodyStructure, activate_decoded

DTYPE = torch.float64
TRACE_EPS = 1e-12
INPUT_KINDS = ("screw", "dh")


def _mlp(sizes: Sequence[int]) -> nn.Sequential:
    layers: List[nn.Module] = []
    for i in range(len(sizes) - 1):
        layers.append(nn.Linear(sizes[i], sizes[i + 1]))
        if i < len(sizes) - 2:
            layers.append(nn.Tanh())
    return nn.Sequential(*layers)


class AeModel(nn.Module):
    def __init__(self, input_dim: int = FEATURE_DIM, latent_dim: int = 2,
                 hidden: Sequence[int] = (64, 32), seed: int = 0):
        super().__init__()
        self.input_dim = input_dim
        self.latent_dim = latent_dim
        self.hidden = tuple(hidden)
        # default fan-in uniform init, drawn from a private seeded stream
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            self.encoder = _mlp([input_dim, *self.hidden, latent_dim]).to(DTYPE)
            self.decoder = _mlp([latent_dim, *reversed(self.hidden), input_dim]).to(DTYPE)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.decoder(self.encoder(x))

    def layer_shapes(self) -> Dict[str, List[int]]:
        return {name: list(p.shape) for name, p in self.named_parameters()}


def _as_tensor(values, width: int) -> Tuple[torch.Tensor, bool]:
    """(batch tensor, whether the input was a single vector)"""
    t = torch.as_tensor(np.asarray(values, dtype=float) if not torch.is_tensor(values) else values, dtype=DTYPE)
    single = t.dim() == 1
    t = t.reshape(1, -1) if single else t
    if t.shape[-1] != width:
        raise DimensionMismatch(width, int(t.shape[-1]))
    return t, single


def decode(model: AeModel, z) -> np.ndarray:
    zt, single = _as_tensor(z, model.latent_dim)
    with torch.no_grad():
        out = model.decoder(zt).numpy()
    return out[0] if single else out


def encode(model: AeModel, x) -> np.ndarray:
    xt, single = _as_tensor(x, model.input_dim)
    with torch.no_grad():
        out = model.encoder(xt).numpy()
    return out[0] if single else out


def _tangent_pass(decoder: nn.Sequential, z: torch.Tensor, direction: torch.Tensor) -> torch.Tensor:
    """Directional derivative of the decoder at z along `direction`"""
    h, t = z, direction
    for layer in decoder:
        if isinstance(layer, nn.Linear):
            h = layer(h)
            t = t @ layer.weight.T
        elif isinstance(layer, nn.Tanh):
            h = torch.tanh(h)
            t = t * (1.0 - h * h)
        else:
            raise TypeError(f"No tangent rule for {type(layer).__name__}")
    return t


def decoder_jacobian(model: AeModel, z) -> torch.Tensor:
    """(B, input_dim, latent_dim) exact Jacobian; differentiable w.r.t. weights and z"""
    if torch.is_tensor(z):
        zt = z.to(DTYPE)
        zt = zt.reshape(1, -1) if zt.dim() == 1 else zt
        if zt.shape[-1] != model.latent_dim:
            raise DimensionMismatch(model.latent_dim, int(zt.shape[-1]))
    else:
        zt, _ = _as_tensor(z, model.latent_dim)
    columns = []
    for k in range(model.latent_dim):
        e = torch.zeros_like(zt)
        e[:, k] = 1.0
        columns.append(_tangent_pass(model.decoder, zt, e))
    return torch.stack(columns, dim=-1)


def iso_from_jacobian(J: torch.Tensor) -> torch.Tensor:
    """mean Tr(G^2) / (mean Tr G)^2 with G = J^T J per sample"""
    J = J.reshape(-1, *J.shape[-2:]) if J.dim() == 2 else J
    G = J.transpose(-1, -2) @ J
    trace = torch.diagonal(G, dim1=-2, dim2=-1).sum(-1)
    trace_sq = (G * G).sum(dim=(-2, -1))
    mean_trace = trace.mean()
    value = mean_trace.detach().item()
    if value < TRACE_EPS:
        raise ZeroJacobian(f"Mean Jacobian trace {value:.3e} is degenerate")
    return trace_sq.mean() / mean_trace ** 2


def iso_loss(model: AeModel, z_batch) -> torch.Tensor:
    return iso_from_jacobian(decoder_jacobian(model, z_batch))


def mix_pairs(z: torch.Tensor, i: torch.Tensor, j: torch.Tensor, alpha: torch.Tensor) -> torch.Tensor:
    alpha = alpha.reshape(-1, 1)
    return (1.0 - alpha) * z[i] + alpha * z[j]


def augment_latents(z: torch.Tensor, mix_range: Tuple[float, float] = (-0.2, 1.2),
                    generator: Optional[torch.Generator] = None) -> torch.Tensor:
    """Interpolate and slightly extrapolate between random pairs, alpha ~ U[lo, hi)"""
    n = z.shape[0]
    if n < 2:
        raise ValueError("Latent augmentation needs at least two points")
    lo, hi = mix_range
    i = torch.randint(0, n, (n,), generator=generator)
    j = (i + torch.randint(1, n, (n,), generator=generator)) % n
    alpha = torch.rand(n, generator=generator, dtype=DTYPE) * (hi - lo) + lo
    return mix_pairs(z, i, j, alpha)


@dataclass
class TrainResult:
    model: AeModel
    history: List[Dict[str, float]] = field(default_factory=list)
    config: TrainConfig = field(default_factory=TrainConfig)
    input_kind: str = "screw"

    @property
    def final_mse(self) -> float:
        return self.history[-1]["mse"] if self.history else float("nan")


def reconstruction_mse(model: AeModel, data) -> float:
    x, _ = _as_tensor(data, model.input_dim)
    with torch.no_grad():
        return float(torch.mean((model(x) - x) ** 2))


def train(dataset, cfg: TrainConfig = TrainConfig(), input_kind: str = "screw",
          verbose: bool = False) -> TrainResult:
    """
    Adam on MSE + iso_weight * L_iso, the isometry term evaluated on
    augmented latents of each minibatch. Deterministic for a fixed seed.
    """
    if input_kind not in INPUT_KINDS:
        raise ValueError(f"input_kind must be one of {INPUT_KINDS}")
    X = torch.as_tensor(np.asarray(dataset, dtype=float), dtype=DTYPE)
    if X.dim() != 2 or X.shape[0] == 0:
        raise ValueError("Training needs a non-empty (N, D) matrix")
    model = AeModel(X.shape[1], cfg.latent_dim, cfg.hidden, cfg.seed)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr,
                                 betas=(cfg.beta1, cfg.beta2), eps=cfg.adam_eps)
    generator = torch.Generator().manual_seed(cfg.seed)
    n = X.shape[0]
    history: List[Dict[str, float]] = []

    for epoch in range(cfg.epochs):
        order = torch.randperm(n, generator=generator)
        mse_sum, iso_sum, total_sum, batches = 0.0, 0.0, 0.0, 0
        for start in range(0, n, cfg.batch):
            x = X[order[start:start + cfg.batch]]
            z = model.encoder(x)
            mse = torch.mean((model.decoder(z) - x) ** 2)
            z_iso = augment_latents(z, cfg.mix_range, generator) if len(z) >= 2 else z
            iso = iso_loss(model, z_iso)
            loss = mse + cfg.iso_weight * iso if cfg.iso_weight > 0 else mse
            if not torch.isfinite(loss):
                raise NonFiniteLoss(epoch, loss.detach().item())
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            mse_sum += mse.detach().item()
            iso_sum += iso.detach().item()
            total_sum += loss.detach().item()
            batches += 1
        history.append({"epoch": epoch, "mse": mse_sum / batches,
                        "iso": iso_sum / batches, "total": total_sum / batches})
        if verbose and (epoch % 100 == 0 or epoch == cfg.epochs - 1):
            print(f"🔄 epoch {epoch:4d}  mse={history[-1]['mse']:.5f}  iso={history[-1]['iso']:.4f}")

    model.eval()
    return TrainResult(model, history, cfg, input_kind)


def latent_grid(model: AeModel, data, steps: int = 10, margin: float = 0.1) -> torch.Tensor:
    """Regular grid over the (padded) bounding box of the encoded data"""
    z = encode(model, data).reshape(-1, model.latent_dim)
    lo, hi = z.min(axis=0), z.max(axis=0)
    pad = margin * np.maximum(hi - lo, 1e-6)
    axes = [np.linspace(l - p, h + p, steps) for l, h, p in zip(lo, hi, pad)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, model.latent_dim)
    return torch.as_tensor(mesh, dtype=DTYPE)


def grid_iso(model: AeModel, data, steps: int = 10) -> float:
    """L_iso on a held-out latent grid; 1/z is the isometric optimum"""
    with torch.no_grad():
        return float(iso_loss(model, latent_grid(model, data, steps)))


def history_frame(history: Sequence[Dict[str, float]]) -> pd.DataFrame:
    return pd.DataFrame(list(history), columns=["epoch", "mse", "iso", "total"])


def save_checkpoint(result: TrainResult, file_path: str):
    model = result.model
    payload = {
        "input_dim": model.input_dim,
        "latent_dim": model.latent_dim,
        "hidden": list(model.hidden),
        "layer_shapes": model.layer_shapes(),
        "state_dict": model.state_dict(),
        "train_config": asdict(result.config),
        "seed": result.config.seed,
        "adam": {"lr": result.config.lr, "betas": [result.config.beta1, result.config.beta2],
                 "eps": result.config.adam_eps},
        "input_kind": result.input_kind,
        "history": list(result.history),
    }
    try:
        torch.save(payload, file_path)
    except OSError as e:
        raise ExportError(f"Cannot write checkpoint {file_path}: {e}")


def load_checkpoint(file_path: str) -> TrainResult:
    payload = torch.load(file_path, map_location="cpu", weights_only=False)
    model = AeModel(payload["input_dim"], payload["latent_dim"], payload["hidden"], payload["seed"])
    model.load_state_dict(payload["state_dict"])
    model.eval()
    raw_cfg = dict(payload["train_config"])
    raw_cfg["hidden"] = tuple(raw_cfg.get("hidden", model.hidden))
    return TrainResult(model, payload.get("history", []), TrainConfig(**raw_cfg),
                       payload.get("input_kind", "screw"))


class LatentDecoder:
    """z -> FullBodyStructure through the trained decoder and the activation rule"""

    def __init__(self, model: AeModel, input_kind: str = "screw",
                 screw: ScrewConfig = ScrewConfig(), dh: DhConfig = DhConfig(),
                 tcp_right: Optional[np.ndarray] = None):
        self.model = model
        self.input_kind = input_kind
        self.screw = screw
        self.dh = dh
        self.tcp_right = tcp_right

    def vector(self, z) -> np.ndarray:
        return decode(self.model, z)

    def __call__(self, z) -> FullBodyStructure:
        return vector_to_structure(self.vector(z), self.input_kind, self.screw, self.dh, self.tcp_right)


def vector_to_structure(vector, input_kind: str = "screw", screw: ScrewConfig = ScrewConfig(),
                        dh: DhConfig = DhConfig(), tcp_right: Optional[np.ndarray] = None) -> FullBodyStructure:
    if input_kind == "dh":
        return dh_to_structure(vector, dh.clamp_threshold, dh.activity_tolerance)
    return activate_decoded(vector, screw.epsilon, tcp_right)
