"""TAPNet assembly: embedding GCN, three GCN+pool blocks, multi-stage
readout, MLP head; ablation variants; parameter accounting; checkpoints."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from . import layers
from .autodiff import Parameter, Tape, Tensor
from .data import Graph

POOLING_KINDS = ("tap", "tap_no_lv", "tap_no_gv", "tap_no_gct", "topk", "none")

CHECKPOINT_VERSION = 1


@dataclass
class TapNetConfig:
    hidden_dim: int = 48
    rates: tuple[float, float, float] = (0.8, 0.6, 0.4)
    lam: float = 0.1
    gcn_dropout_keep: float = 0.7
    mlp_dropout_keep: float = 0.8
    mlp_hidden: int = 128
    head_activation: str = "relu"
    pooling_kind: str = "tap"
    gating: bool = True
    aux_weight: float = 0.0

    def validate(self):
        if self.hidden_dim < 1:
            raise ValueError(f"hidden_dim must be positive, got {self.hidden_dim}")
        if self.mlp_hidden < 1:
            raise ValueError(f"mlp_hidden must be positive, got {self.mlp_hidden}")
        for r in self.rates:
            if not 0.0 < r <= 1.0:
                raise ValueError(f"rates entries must be in (0, 1], got {r}")
        for name in ("gcn_dropout_keep", "mlp_dropout_keep"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must be in (0, 1], got {v}")
        if self.head_activation not in ("relu", "elu"):
            raise ValueError(f"head_activation must be relu or elu, got {self.head_activation!r}")
        if self.pooling_kind not in POOLING_KINDS:
            raise ValueError(
                f"pooling_kind must be one of {POOLING_KINDS}, got {self.pooling_kind!r}"
            )
        if self.aux_weight < 0.0:
            raise ValueError(f"aux_weight must be non-negative, got {self.aux_weight}")
        if self.lam < 0.0:
            raise ValueError(f"lambda must be non-negative, got {self.lam}")


@dataclass
class ForwardOutput:
    logits: Tensor
    # (R tensor, stage input adjacency) per pooling layer with local voting
    similarities: list[tuple[Tensor, np.ndarray]]
    idx_per_stage: list[list[int]]
    stage_adjacencies: list[np.ndarray]


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class TapNet:
    """Embedding GCN, three GCN+pool blocks, 4-stage readout, 2-layer MLP."""

    NUM_BLOCKS = 3

    def __init__(self, cfg: TapNetConfig, feature_dim: int, num_classes: int, seed: int):
        cfg.validate()
        if feature_dim < 1 or num_classes < 1:
            raise ValueError("feature_dim and num_classes must be positive")
        self.cfg = cfg
        self.feature_dim = feature_dim
        self.num_classes = num_classes
        self.seed = seed
        rng = np.random.default_rng(seed)
        h = cfg.hidden_dim

        self.embed = layers.GcnParams(
            Parameter(_glorot(rng, feature_dim, h), "embed.weight")
        )
        self.blocks: list[layers.GcnParams] = []
        self.pools: list[layers.TapLayerParams | None] = []
        kind = cfg.pooling_kind
        use_wr = kind in ("tap", "tap_no_gv")
        use_p = kind in ("tap", "tap_no_lv", "tap_no_gct", "topk")
        # tap_no_gct keeps both voting branches, so it also carries W_r
        if kind == "tap_no_gct":
            use_wr = True
        for i in range(self.NUM_BLOCKS):
            self.blocks.append(
                layers.GcnParams(Parameter(_glorot(rng, h, h), f"block{i}.gcn.weight"))
            )
            if kind == "none":
                self.pools.append(None)
            else:
                w_r = None
                if use_wr:
                    init = np.eye(h) + 0.01 * _glorot(rng, h, h)
                    w_r = Parameter(init, f"block{i}.pool.w_r")
                p = Parameter(
                    _glorot(rng, h, 1) if use_p else np.zeros((h, 1)),
                    f"block{i}.pool.p",
                )
                self.pools.append(
                    layers.TapLayerParams(
                        w_r=w_r, p=p, lam=cfg.lam, rate=cfg.rates[i]
                    )
                )
        readout_width = 4 * 3 * h
        self.mlp = layers.MlpParams(
            w1=Parameter(_glorot(rng, readout_width, cfg.mlp_hidden), "mlp.w1"),
            b1=Parameter(np.zeros((1, cfg.mlp_hidden)), "mlp.b1"),
            w2=Parameter(_glorot(rng, cfg.mlp_hidden, num_classes), "mlp.w2"),
            b2=Parameter(np.zeros((1, num_classes)), "mlp.b2"),
            activation=cfg.head_activation,
            dropout_keep=cfg.mlp_dropout_keep,
        )

    def parameters(self) -> list[Parameter]:
        params = [self.embed.weight]
        for block in self.blocks:
            params.append(block.weight)
        for pool in self.pools:
            if pool is None:
                continue
            if pool.w_r is not None:
                params.append(pool.w_r)
            if self._pool_uses_p():
                params.append(pool.p)
        params.extend([self.mlp.w1, self.mlp.b1, self.mlp.w2, self.mlp.b2])
        return params

    def _pool_uses_p(self) -> bool:
        return self.cfg.pooling_kind in ("tap", "tap_no_lv", "tap_no_gct", "topk")

    def _pool_flags(self) -> dict:
        kind = self.cfg.pooling_kind
        return {
            "use_lv": kind in ("tap", "tap_no_gv", "tap_no_gct"),
            "use_gv": kind in ("tap", "tap_no_lv", "tap_no_gct", "topk"),
            "use_gct": kind in ("tap", "tap_no_lv", "tap_no_gv"),
            "gating": self.cfg.gating,
            "aggregate_before_projection": kind != "topk",
        }

    def forward(
        self,
        graph: Graph,
        training: bool = False,
        tape: Tape | None = None,
        rng: np.random.Generator | None = None,
    ) -> ForwardOutput:
        if graph.features is None or graph.features.shape[1] != self.feature_dim:
            got = None if graph.features is None else graph.features.shape[1]
            raise ValueError(f"graph feature dim {got} does not match model {self.feature_dim}")
        if training and rng is None:
            raise ValueError("training mode needs an rng for dropout")
        tape = tape or Tape()
        cfg = self.cfg
        adj = graph.adjacency
        h = tape.constant(graph.features)
        h = ad.dropout(h, cfg.gcn_dropout_keep, rng, training)
        h = layers.gcn_forward(tape, self.embed, adj, h)

        stage_outputs = [h]
        stage_adjacencies = [adj]
        similarities: list[tuple[Tensor, np.ndarray]] = []
        idx_per_stage: list[list[int]] = []
        flags = self._pool_flags()
        for block, pool in zip(self.blocks, self.pools):
            x = ad.dropout(h, cfg.gcn_dropout_keep, rng, training)
            x = layers.gcn_forward(tape, block, adj, x)
            if pool is None:
                h = x
            else:
                x = ad.dropout(x, cfg.gcn_dropout_keep, rng, training)
                result = layers.tap_forward(tape, pool, adj, x, **flags)
                if result.similarity is not None:
                    similarities.append((result.similarity, adj))
                idx_per_stage.append(result.idx)
                adj = result.adjacency
                h = result.features
            stage_outputs.append(h)
            stage_adjacencies.append(adj)
        pooled = layers.readout(stage_outputs)
        logits = layers.mlp_forward(tape, self.mlp, pooled, training, rng)
        return ForwardOutput(
            logits=logits,
            similarities=similarities,
            idx_per_stage=idx_per_stage,
            stage_adjacencies=stage_adjacencies,
        )


def build_tapnet(cfg: TapNetConfig, feature_dim: int, num_classes: int, seed: int) -> TapNet:
    return TapNet(cfg, feature_dim, num_classes, seed)


def param_count(model: TapNet) -> tuple[int, int, float]:
    """(total trainable scalars, scalars in the pooling ranking parameters,
    extra / base ratio)."""
    total = sum(p.value.size for p in model.parameters())
    tap_extra = 0
    for pool in model.pools:
        if pool is None:
            continue
        if pool.w_r is not None:
            tap_extra += pool.w_r.value.size
        if model._pool_uses_p():
            tap_extra += pool.p.value.size
    base = total - tap_extra
    ratio = tap_extra / base if base else 0.0
    return total, tap_extra, ratio


def save_checkpoint(path: str, model: TapNet):
    """Versioned npz container: config JSON + named parameter arrays."""
    arrays = {p.name: p.value for p in model.parameters()}
    meta = {
        "format_version": CHECKPOINT_VERSION,
        "config": asdict(model.cfg),
        "feature_dim": model.feature_dim,
        "num_classes": model.num_classes,
        "seed": model.seed,
    }
    np.savez(path, __meta__=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)


def load_checkpoint(path: str) -> TapNet:
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode())
        if meta["format_version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta['format_version']}")
        cfg_dict = meta["config"]
        cfg_dict["rates"] = tuple(cfg_dict["rates"])
        cfg = TapNetConfig(**cfg_dict)
        model = TapNet(cfg, meta["feature_dim"], meta["num_classes"], meta["seed"])
        for p in model.parameters():
            if p.name not in data:
                raise ValueError(f"checkpoint missing parameter {p.name}")
            stored = data[p.name]
            if stored.shape != p.value.shape:
                raise ValueError(
                    f"checkpoint parameter {p.name} has shape {stored.shape}, "
                    f"model expects {p.value.shape}"
                )
            p.value = stored.astype(np.float64)
            p.grad = np.zeros_like(p.value)
    return model
