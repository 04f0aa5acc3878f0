"""Synthetic network graphs: chains, dense skips, U-Nets and their training-step unrolling.

All byte sizes are parameters. Per-layer activation sizes are ``base_bytes``
times a per-layer factor drawn from ``seed`` (or given explicitly), times
``scale`` (the batch multiplier), so activation bytes grow linearly in scale
while parameter bytes stay fixed.
"""
from __future__ import annotations

import random
from dataclasses import asdict, dataclass, field, fields

from .graph import FunctionNode, NetworkGraph, VariableDecl
from .units import MiB, parse_size

__all__ = ["InvalidSpec", "WorkloadSpec", "generate", "resnet50_like", "RESNET50_STAGES"]

ARCHS = ("chain", "dense_skip", "unet")


class InvalidSpec(ValueError):
    pass


@dataclass(frozen=True)
class WorkloadSpec:
    arch: str = "chain"
    depth: int = 8
    base_bytes: int = 4 * MiB
    scale: float = 1.0
    param_bytes: int = 1 * MiB
    train_mirror: bool = False
    seed: int = 0
    # per-layer activation multipliers; drawn from seed in [0.5, 1.5] when empty
    size_factors: tuple[float, ...] = ()
    param_factors: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "size_factors", tuple(self.size_factors))
        object.__setattr__(self, "param_factors", tuple(self.param_factors))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["size_factors"] = list(self.size_factors)
        d["param_factors"] = list(self.param_factors)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "WorkloadSpec":
        """Build and check a spec; byte fields accept size strings such as ``"16MiB"``."""
        d = dict(d)
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise InvalidSpec(f"unknown workload keys {sorted(unknown)}")
        for k in ("base_bytes", "param_bytes"):
            if k in d:
                d[k] = parse_size(d[k])
        spec = cls(**d)
        _check(spec)
        return spec


def _check(spec: WorkloadSpec) -> None:
    if spec.arch not in ARCHS:
        raise InvalidSpec(f"unknown arch {spec.arch!r}; expected one of {ARCHS}")
    if spec.depth < 1:
        raise InvalidSpec("depth must be >= 1")
    if spec.base_bytes < 1 or spec.scale <= 0:
        raise InvalidSpec("base_bytes and scale must be positive")
    if spec.param_bytes < 0:
        raise InvalidSpec("param_bytes must be >= 0")
    for name, fs in (("size_factors", spec.size_factors), ("param_factors", spec.param_factors)):
        if fs and len(fs) != spec.depth + (1 if name == "size_factors" else 0):
            raise InvalidSpec(f"{name} has {len(fs)} entries for depth {spec.depth}")
        if any(f <= 0 for f in fs):
            raise InvalidSpec(f"{name} must be positive")


def _layer_inputs(arch: str, depth: int, i: int) -> list[int]:
    """Activation indices consumed by layer i (1-based); activation 0 is the input."""
    if arch == "chain":
        return [i - 1]
    if arch == "dense_skip":
        return list(range(i))
    # unet: decoder layers also take the mirrored encoder activation
    ins = [i - 1]
    mirror = depth - i
    if i > depth / 2 and mirror < i - 1:
        ins.append(mirror)
    return ins


def generate(spec: WorkloadSpec) -> NetworkGraph:
    _check(spec)
    rng = random.Random(spec.seed)
    d = spec.depth
    factors = spec.size_factors or tuple(round(rng.uniform(0.5, 1.5), 3) for _ in range(d + 1))
    pfactors = spec.param_factors or (1.0,) * d
    units = [max(1, round(spec.base_bytes * f)) for f in factors]
    act = [f"act{i:03d}" for i in range(d + 1)]
    sizes: dict[str, int] = {act[i]: max(1, round(units[i] * spec.scale)) for i in range(d + 1)}
    params = []
    for i in range(1, d + 1):
        pb = round(spec.param_bytes * pfactors[i - 1])
        params.append(f"w{i:03d}" if pb > 0 else None)
        if pb > 0:
            sizes[f"w{i:03d}"] = pb
    inputs = {i: _layer_inputs(spec.arch, d, i) for i in range(1, d + 1)}

    fns: list[FunctionNode] = []
    seq_no = iter(range(1, 10**6))

    def fn(name: str, uses: list[str], outputs: list[str]) -> None:
        fns.append(FunctionNode(f"f{next(seq_no):05d}_{name}", tuple(uses), tuple(outputs)))

    for i in range(1, d + 1):
        w = [params[i - 1]] if params[i - 1] else []
        fn(f"fwd{i:03d}", [act[j] for j in inputs[i]] + w + [act[i]], [act[i]])

    if spec.train_mirror:
        consumers: dict[int, list[int]] = {j: [] for j in range(d + 1)}
        for i, ins in inputs.items():
            for j in ins:
                consumers[j].append(i)
        grad = lambda j, i: f"g{j:03d}_from{i:03d}"  # noqa: E731  gradient of act j flowing back from layer i
        top = f"g{d:03d}_loss"
        sizes[top] = sizes[act[d]]
        fn("loss", [act[d], top], [top])
        for i in range(d, 0, -1):
            g_out = [top] if i == d else [grad(i, c) for c in consumers[i]]
            g_ins = [grad(j, i) for j in inputs[i] if j > 0]
            for j in inputs[i]:
                if j > 0:
                    sizes[grad(j, i)] = sizes[act[j]]
            w = params[i - 1]
            gw = [f"gw{i:03d}"] if w else []
            if w:
                sizes[gw[0]] = sizes[w]
            fn(f"bwd{i:03d}", [act[j] for j in inputs[i]] + ([w] if w else []) + g_out + g_ins + gw,
               g_ins + gw)
            if w:
                fn(f"upd{i:03d}", [w, gw[0]], [])

    used = dict.fromkeys(v for f in fns for v in f.uses)
    return NetworkGraph(tuple(VariableDecl(v, sizes[v]) for v in used), tuple(fns))


# 16 bottleneck blocks of ResNet-50 (3, 4, 6, 3) with relative activation
# sizes halving per stage; approximate and synthetic, not measured tensors.
RESNET50_STAGES = (
    [("conv2", 1.0)] * 3 + [("conv3", 0.5)] * 4 + [("conv4", 0.25)] * 6 + [("conv5", 0.125)] * 3
)


def resnet50_like(scale: float = 1.0, base_bytes: int = 32 * MiB, param_bytes: int = 2 * MiB,
                  seed: int = 0) -> WorkloadSpec:
    """Depth-50 training-step chain shaped like ResNet-50's 16 blocks.

    Three layers per block plus a stem and head (50 layers). Activation
    factors follow the block's stage; parameter factors grow 4x per stage.
    Sizes are illustrative only.
    """
    pstage = {"conv2": 0.25, "conv3": 1.0, "conv4": 4.0, "conv5": 16.0}
    act_f = [2.0, 1.0]  # input image, stem output
    par_f = [0.1]
    for name, f in RESNET50_STAGES:
        act_f += [f, f, 2 * f]  # 1x1 reduce, 3x3, 1x1 expand
        par_f += [pstage[name] * 0.5, pstage[name], pstage[name] * 0.5]
    act_f.append(0.01)  # pooled head
    par_f.append(2.0)
    return WorkloadSpec(arch="chain", depth=50, base_bytes=base_bytes, scale=scale, param_bytes=param_bytes,
                        train_mirror=True, seed=seed, size_factors=tuple(act_f), param_factors=tuple(par_f))
