"""Run configuration: one flat record, a ``key = value`` text format, and CLI overrides."""

from __future__ import annotations

import argparse
import hashlib
import os
from dataclasses import asdict, dataclass, fields, replace

from .data.synth import SynthConfig
from .head import DistanceWeights, LossWeights
from .model import PROTO_KINDS, ModelConfig
from .trm import BRANCH_MODES

VARIANT_NAMES = {"rwkv4": "rwkv4", "rwkv56": "rwkv56", "RWKV4": "rwkv4", "RWKV56": "rwkv56"}
LR_SCHEDULES = ("constant", "step")

# Desk-scale benchmark: 32x32 frames with 8-pixel patches keep the 4x4 patch
# grid at a quarter of the pixels, so the ablation grid fits on one core. At
# 2,000 episodes lr 1e-3 leaves the CSM variants undertrained, hence the
# larger step and the sharper softmax.
PROFILES = {
    "default": {},
    "benchmark": dict(height=32, width=32, patch=8, lr=0.01, temperature=10.0),
}


@dataclass(frozen=True)
class RunConfig:
    # episodes
    way: int = 5
    shot: int = 1
    queries: int = 1  # per class, training and evaluation
    any_shot: bool = False
    train_episodes: int = 2000
    eval_tasks: int = 2000
    eval_pool: int = 40  # clips per class in the held-out pool
    # optimisation (plain SGD; schedule off by default)
    lr: float = 1e-3
    lr_schedule: str = "constant"
    lr_step: int = 1000
    lr_gamma: float = 0.5
    grad_clip: float = 0.0  # global-norm clip, 0 = off
    # objective
    lambda_ce: float = 0.8
    lambda_sep_temporal: float = 0.1
    lambda_sep_regular: float = 0.1
    omega_temporal: float = 0.5
    omega_regular: float = 0.5
    temperature: float = 1.0
    distance: str = "frobenius"
    # geometry
    frames: int = 8
    height: int = 64
    width: int = 64
    patch: int = 16
    embed_patch: int = 4
    widths: str = "16,32,64"
    dim: int = 64
    fov_level: int = 2
    subject_fraction: float = 0.3
    # ablation flags
    csm_on: bool = True
    trm_on: bool = True
    branch: str = "both"
    variant: str = "rwkv56"
    proto_kind: str = "avg"
    # seeds
    seed: int = 0  # parameter initialisation
    data_seed: int = 1  # training episode stream
    eval_seed: int = 2  # held-out pool and task stream
    # optional on-disk data in place of the generator
    train_manifest: str = ""
    eval_manifest: str = ""

    def __post_init__(self):
        if self.way < 2 or self.shot < 1 or self.queries < 1:
            raise ValueError("need way >= 2, shot >= 1, queries >= 1")
        if self.train_episodes < 0:
            raise ValueError("train_episodes must be nonnegative")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.lr_schedule not in LR_SCHEDULES:
            raise ValueError(f"lr_schedule must be one of {LR_SCHEDULES}")
        if self.branch not in BRANCH_MODES:
            raise ValueError(f"branch must be one of {BRANCH_MODES}")
        if self.variant not in VARIANT_NAMES:
            raise ValueError(f"variant must be RWKV4 or RWKV56, got {self.variant!r}")
        if self.proto_kind not in PROTO_KINDS:
            raise ValueError(f"proto_kind must be one of {PROTO_KINDS}")
        for path in (self.train_manifest, self.eval_manifest):
            if path and not os.path.exists(path):
                raise FileNotFoundError(f"manifest {path} does not exist")
        self.model_config()
        self.synth_config()

    @property
    def loss_weights(self) -> LossWeights:
        return LossWeights.normalized(self.lambda_ce, self.lambda_sep_temporal, self.lambda_sep_regular)

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            frames=self.frames,
            height=self.height,
            width=self.width,
            patch=self.patch,
            embed_patch=self.embed_patch,
            widths=tuple(int(x) for x in self.widths.split(",")),
            dim=self.dim,
            variant=VARIANT_NAMES[self.variant],
            csm_on=self.csm_on,
            trm_on=self.trm_on,
            branch=self.branch,
            proto_kind=self.proto_kind,
            distance=self.distance,
            temperature=self.temperature,
            omega=DistanceWeights(self.omega_temporal, self.omega_regular),
            weights=self.loss_weights,
        )

    def synth_config(self) -> SynthConfig:
        return SynthConfig(
            frames=self.frames,
            height=self.height,
            width=self.width,
            fov_level=self.fov_level,
            subject_fraction=self.subject_fraction,
        )

    def to_text(self) -> str:
        return "".join(f"{k} = {_fmt(v)}\n" for k, v in asdict(self).items())

    def digest(self) -> bytes:
        """SHA-256 of the architecture-relevant fields."""
        arch = ("frames", "height", "width", "patch", "embed_patch", "widths", "dim", "csm_on", "trm_on", "branch", "variant")
        text = ";".join(f"{k}={_fmt(getattr(self, k))}" for k in arch)
        return hashlib.sha256(text.encode()).digest()


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def _parse_value(kind, text: str):
    text = text.strip()
    if kind is bool or kind == "bool":
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if kind is int or kind == "int":
        return int(text)
    if kind is float or kind == "float":
        return float(text)
    return text


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def parse_config_text(text: str, origin: str = "<config>") -> dict:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{origin}:{lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ValueError(f"{origin}:{lineno}: unknown key {key!r}")
        values[key] = _parse_value(_FIELD_TYPES[key], val)
    return values


def load_config(path: str | None = None, profile: str = "default", **overrides) -> RunConfig:
    if profile not in PROFILES:
        raise ValueError(f"unknown profile {profile!r}, expected one of {sorted(PROFILES)}")
    values = dict(PROFILES[profile])
    if path:
        with open(path) as fh:
            values.update(parse_config_text(fh.read(), path))
    values.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**values)


def add_config_arguments(parser: argparse.ArgumentParser, profile: str = "default") -> None:
    """One ``--field`` flag per RunConfig field, plus ``--config`` and ``--profile``."""
    parser.add_argument("--config", help="key = value run configuration file")
    parser.add_argument("--profile", choices=sorted(PROFILES), default=profile, help=f"base values under the file and flags (default {profile})")
    group = parser.add_argument_group("run configuration overrides")
    for f in fields(RunConfig):
        kind = _FIELD_TYPES[f.name]
        flag = "--" + f.name.replace("_", "-")
        conv = (lambda s, k=kind: _parse_value(k, s)) if kind in (bool, "bool", int, "int", float, "float") else str
        group.add_argument(flag, dest=f.name, type=conv, default=None, metavar=kind if isinstance(kind, str) else kind.__name__)


def config_from_args(args: argparse.Namespace) -> RunConfig:
    overrides = {f.name: getattr(args, f.name, None) for f in fields(RunConfig)}
    return load_config(getattr(args, "config", None), getattr(args, "profile", "default"), **overrides)


def with_flags(cfg: RunConfig, **changes) -> RunConfig:
    return replace(cfg, **changes)
