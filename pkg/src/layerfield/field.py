"""Per-entity space-time neural field.

Each entity owns a deformation network and a radiance network per sampling
stage (coarse, fine).  A query point p at normalized time t is bent into a
canonical frame, p' = p + deform(p, t), and the radiance network maps
(p', d, t) to color and density.  Density depends only on p', so two view
directions at the same point always see the same density.  Direction and
time features enter after the density head:

    trunk: enc(p') -> [raw density, feature]
    color head: [feature, enc(d), enc(t)] -> raw RGB

Density goes through softplus, color through sigmoid.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import rng
from .encoding import encoded_width, positional_encode, positional_encode_backward
from .mlp import Mlp, init_mlp, mlp_backward, mlp_forward, params_astype

STAGES = ("coarse", "fine")


@dataclass
class EncodingConfig:
    position: int = 10
    direction: int = 4
    time: int = 10
    include_input: bool = True


@dataclass
class FieldConfig:
    encoding: EncodingConfig = field(default_factory=EncodingConfig)
    deform_hidden: tuple = (128,) * 6
    deform_skips: tuple = (3,)
    trunk_hidden: tuple = (256,) * 8
    trunk_skips: tuple = (4,)
    color_hidden: tuple = (128,)
    use_deform: bool = True
    use_time_color: bool = True

    @property
    def feature_width(self) -> int:
        return self.trunk_hidden[-1]


def desk_field_config() -> FieldConfig:
    """Reduced profile for desk-scale scenes."""
    return FieldConfig(
        deform_hidden=(64,) * 4,
        deform_skips=(2,),
        trunk_hidden=(64,) * 4,
        trunk_skips=(2,),
        color_hidden=(64,),
    )


@dataclass
class StageNets:
    deform: Mlp  # None when use_deform is off
    trunk: Mlp
    color: Mlp

    def param_list(self) -> list:
        out = []
        if self.deform is not None:
            out.extend(self.deform.param_list())
        out.extend(self.trunk.param_list())
        out.extend(self.color.param_list())
        return out


@dataclass
class EntityField:
    entity_id: int
    config: FieldConfig
    stages: dict  # stage name -> StageNets

    @property
    def shared_stages(self) -> bool:
        return self.stages["coarse"] is self.stages["fine"]

    def num_params(self) -> int:
        nets = [self.stages["coarse"]]
        if not self.shared_stages:
            nets.append(self.stages["fine"])
        return sum(sum(p.size for p in s.param_list()) for s in nets)


def _widths(cfg: FieldConfig):
    e = cfg.encoding
    wp = encoded_width(3, e.position, e.include_input)
    wd = encoded_width(3, e.direction, e.include_input)
    wt = encoded_width(1, e.time, e.include_input)
    return wp, wd, wt


def build_stage(cfg: FieldConfig, seed: int) -> StageNets:
    wp, wd, wt = _widths(cfg)
    deform = None
    if cfg.use_deform:
        deform = init_mlp(
            wp + wt, cfg.deform_hidden, 3, skips=cfg.deform_skips,
            seed=rng.key_from(seed, 1) % (2 ** 31), zero_final=True,
        )
    trunk = init_mlp(
        wp, cfg.trunk_hidden, 1 + cfg.feature_width, skips=cfg.trunk_skips,
        seed=rng.key_from(seed, 2) % (2 ** 31),
    )
    color_in = cfg.feature_width + wd + (wt if cfg.use_time_color else 0)
    color = init_mlp(
        color_in, cfg.color_hidden, 3, skips=(),
        seed=rng.key_from(seed, 3) % (2 ** 31),
    )
    return StageNets(deform=deform, trunk=trunk, color=color)


def build_entity_field(entity_id: int, cfg: FieldConfig, seed: int, share_stages: bool = False) -> EntityField:
    coarse = build_stage(cfg, rng.key_from(seed, entity_id, 0))
    fine = coarse if share_stages else build_stage(cfg, rng.key_from(seed, entity_id, 1))
    return EntityField(entity_id=entity_id, config=cfg, stages={"coarse": coarse, "fine": fine})


def stage_astype(nets: StageNets, dtype) -> StageNets:
    return StageNets(
        deform=None if nets.deform is None else params_astype(nets.deform, dtype),
        trunk=params_astype(nets.trunk, dtype),
        color=params_astype(nets.color, dtype),
    )


def _softplus(x):
    return np.logaddexp(0, x)


def _expit(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class FieldEval:
    rgb: np.ndarray     # (n, 3) in [0,1]
    sigma: np.ndarray   # (n,) >= 0
    p_can: np.ndarray
    sigma_raw: np.ndarray
    deform_tape: list
    trunk_tape: list
    color_tape: list


def field_forward(nets: StageNets, cfg: FieldConfig, p: np.ndarray, d: np.ndarray, t01: np.ndarray) -> FieldEval:
    """Evaluate the field at points p with unit view directions d, times t01.

    p is expected in the entity's normalized box frame, roughly [-1, 1]^3.
    Dtype follows the inputs; pass float64 params for reference runs.
    """
    e = cfg.encoding
    ep = positional_encode(p, e.position, e.include_input)
    et = positional_encode(t01[:, None], e.time, e.include_input)
    deform_tape = None
    if nets.deform is not None:
        delta, deform_tape = mlp_forward(nets.deform, np.concatenate([ep, et], axis=1))
        p_can = p + delta
        epc = positional_encode(p_can, e.position, e.include_input)
    else:
        p_can = p
        epc = ep
    trunk_out, trunk_tape = mlp_forward(nets.trunk, epc)
    sigma_raw = trunk_out[:, 0]
    feat = trunk_out[:, 1:]
    ed = positional_encode(d, e.direction, e.include_input)
    parts = [feat, ed]
    if cfg.use_time_color:
        parts.append(et)
    rgb_raw, color_tape = mlp_forward(nets.color, np.concatenate(parts, axis=1))
    return FieldEval(
        rgb=_expit(rgb_raw),
        sigma=_softplus(sigma_raw),
        p_can=p_can,
        sigma_raw=sigma_raw,
        deform_tape=deform_tape,
        trunk_tape=trunk_tape,
        color_tape=color_tape,
    )


@dataclass
class StageGrads:
    deform: list
    trunk: list
    color: list

    def param_list(self) -> list:
        out = []
        if self.deform is not None:
            out.extend(self.deform)
        out.extend(self.trunk)
        out.extend(self.color)
        return out


def field_backward(nets: StageNets, cfg: FieldConfig, ev: FieldEval, d_rgb: np.ndarray, d_sigma: np.ndarray) -> StageGrads:
    """Gradients of a scalar loss w.r.t. all stage parameters.

    d_rgb, d_sigma are the loss gradients on the activated outputs.
    Gradients w.r.t. the query inputs are not needed and are discarded.
    """
    e = cfg.encoding
    d_rgb_raw = d_rgb * (ev.rgb * (1.0 - ev.rgb))
    color_grads, d_color_in = mlp_backward(nets.color, ev.color_tape, d_rgb_raw)
    fw = cfg.feature_width
    d_feat = d_color_in[:, :fw]
    d_sigma_raw = d_sigma * _expit(ev.sigma_raw)
    d_trunk_out = np.concatenate([d_sigma_raw[:, None], d_feat], axis=1)
    trunk_grads, d_epc = mlp_backward(nets.trunk, ev.trunk_tape, d_trunk_out)
    deform_grads = None
    if nets.deform is not None:
        d_p_can = positional_encode_backward(ev.p_can, d_epc, e.position, e.include_input)
        deform_grads, _ = mlp_backward(nets.deform, ev.deform_tape, d_p_can)
    return StageGrads(deform=deform_grads, trunk=trunk_grads, color=color_grads)


def zero_grads_like(nets: StageNets) -> StageGrads:
    return StageGrads(
        deform=None if nets.deform is None else [np.zeros_like(p) for p in nets.deform.param_list()],
        trunk=[np.zeros_like(p) for p in nets.trunk.param_list()],
        color=[np.zeros_like(p) for p in nets.color.param_list()],
    )


def accumulate_grads(total: StageGrads, part: StageGrads) -> None:
    if total.deform is not None:
        for a, b in zip(total.deform, part.deform):
            a += b
    for a, b in zip(total.trunk, part.trunk):
        a += b
    for a, b in zip(total.color, part.color):
        a += b


def config_to_dict(cfg: FieldConfig) -> dict:
    e = cfg.encoding
    return {
        "encoding": {
            "position": e.position,
            "direction": e.direction,
            "time": e.time,
            "include_input": e.include_input,
        },
        "deform_hidden": list(cfg.deform_hidden),
        "deform_skips": list(cfg.deform_skips),
        "trunk_hidden": list(cfg.trunk_hidden),
        "trunk_skips": list(cfg.trunk_skips),
        "color_hidden": list(cfg.color_hidden),
        "use_deform": cfg.use_deform,
        "use_time_color": cfg.use_time_color,
    }


def config_from_dict(d: dict) -> FieldConfig:
    e = d["encoding"]
    return FieldConfig(
        encoding=EncodingConfig(
            position=int(e["position"]),
            direction=int(e["direction"]),
            time=int(e["time"]),
            include_input=bool(e["include_input"]),
        ),
        deform_hidden=tuple(d["deform_hidden"]),
        deform_skips=tuple(d["deform_skips"]),
        trunk_hidden=tuple(d["trunk_hidden"]),
        trunk_skips=tuple(d["trunk_skips"]),
        color_hidden=tuple(d["color_hidden"]),
        use_deform=bool(d["use_deform"]),
        use_time_color=bool(d["use_time_color"]),
    )
