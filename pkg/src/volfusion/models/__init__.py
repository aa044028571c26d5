"""Model construction, configuration and checkpoint I/O.

Both architectures (PCT-Net and the 3D U-Net baseline) share one interface:
``model(x)`` maps a (B, in_channels, D, H, W) tensor to four probability maps
at scales 1, 1/2, 1/4 and 1/8 of the input. Checkpoints are single torch
archives holding the config as JSON text, the flat named-parameter table and
the training-step counter (plus optimizer / RNG state for exact resume).
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import asdict, dataclass

import torch
import torch.nn as nn

from ..errors import ArchitectureMismatch, InvalidConfig
from .pctnet import PCTNet
from .unet3d import UNet3D

HEAD_PREFIXES = ("head1.", "head2.", "head3.", "head4.")


@dataclass
class ModelConfig:
    in_channels: int = 1
    num_classes: int = 5
    level_channels: tuple[int, int, int, int, int] = (24, 48, 128, 256, 512)
    window_size: tuple[int, int, int] = (4, 4, 4)
    num_heads: tuple[int, int, int] = (4, 8, 16)
    mlp_ratio: float = 4.0
    dropout_rate: float = 0.1
    arch: str = "pctnet"

    @property
    def shift_size(self) -> tuple[int, int, int]:
        return tuple(w // 2 for w in self.window_size)

    def validate(self) -> None:
        if self.arch not in ("pctnet", "unet3d"):
            raise InvalidConfig(f"unknown arch {self.arch!r}")
        if len(self.level_channels) != 5 or any(
            a >= b for a, b in zip(self.level_channels, self.level_channels[1:])
        ):
            raise InvalidConfig(
                f"level_channels must be 5 strictly increasing ints, got {self.level_channels}"
            )
        if self.num_classes < 2:
            raise InvalidConfig(f"num_classes must be >= 2, got {self.num_classes}")
        if not (0 <= self.dropout_rate < 1):
            raise InvalidConfig(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if any(w < 1 for w in self.window_size) or len(self.window_size) != 3:
            raise InvalidConfig(f"bad window_size {self.window_size}")
        if self.arch == "pctnet":
            for ch, heads in zip(self.level_channels[2:], self.num_heads):
                if ch % heads:
                    raise InvalidConfig(f"channels {ch} not divisible by heads {heads}")

    def to_json(self) -> str:
        return json.dumps(asdict(self))

    @classmethod
    def from_json(cls, text: str) -> "ModelConfig":
        d = json.loads(text)
        for key in ("level_channels", "window_size", "num_heads"):
            d[key] = tuple(d[key])
        return cls(**d)


def _init_parameters(model: nn.Module) -> None:
    # He fan-in for convolutions, truncated normal for attention/MLP linears,
    # identity-like norms
    for m in model.modules():
        if isinstance(m, (nn.Conv3d, nn.ConvTranspose3d)):
            nn.init.kaiming_normal_(m.weight, mode="fan_in", nonlinearity="relu")
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.Linear):
            nn.init.trunc_normal_(m.weight, std=0.02)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, (nn.LayerNorm, nn.BatchNorm3d)):
            nn.init.ones_(m.weight)
            nn.init.zeros_(m.bias)


def build_model(cfg: ModelConfig, seed: int = 0) -> nn.Module:
    """Deterministically construct and initialize a segmentation model."""
    cfg.validate()
    torch.manual_seed(seed)
    model = PCTNet(cfg) if cfg.arch == "pctnet" else UNet3D(cfg)
    _init_parameters(model)
    return model


def reinit_heads(model: nn.Module, seed: int = 0) -> list[str]:
    """Re-initialize the four pointwise prediction heads; returns their parameter names."""
    torch.manual_seed(seed)
    for name, module in model.named_modules():
        if name in ("head1", "head2", "head3", "head4"):
            _init_parameters(module)
    return [n for n, _ in model.named_parameters() if n.startswith(HEAD_PREFIXES)]


def forward(model: nn.Module, x, mode: str = "eval") -> list[torch.Tensor]:
    """Run the model in train or eval mode; eval is deterministic and gradient-free."""
    if not isinstance(x, torch.Tensor):
        x = torch.as_tensor(x, dtype=torch.float32)
    if mode == "train":
        model.train()
        return model(x)
    model.eval()
    with torch.no_grad():
        return model(x)


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def save_checkpoint(
    path: str,
    model: nn.Module,
    step: int = 0,
    optimizer: torch.optim.Optimizer | None = None,
    extra: dict | None = None,
) -> None:
    """Atomic checkpoint write (temp file + rename)."""
    payload = {
        "model_config": model.cfg.to_json(),
        "state_dict": model.state_dict(),
        "step": int(step),
        "optimizer_state": optimizer.state_dict() if optimizer is not None else None,
        "torch_rng_state": torch.get_rng_state(),
        "extra": extra or {},
    }
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            torch.save(payload, f)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path: str) -> dict:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    payload["config"] = ModelConfig.from_json(payload["model_config"])
    return payload


def model_from_checkpoint(path: str) -> tuple[nn.Module, dict]:
    payload = load_checkpoint(path)
    cfg = payload["config"]
    model = build_model(cfg)
    missing, unexpected = model.load_state_dict(payload["state_dict"], strict=False)
    if missing or unexpected:
        raise ArchitectureMismatch(
            f"checkpoint does not match architecture; missing={missing} unexpected={unexpected}"
        )
    return model, payload
