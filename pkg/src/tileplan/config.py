"""Run configuration: one key=value text file covers everything a run tunes.

    blocks = 128x128x128, 64x64x256   # tile-shape sweep list ("128" = cube)
    topk = 5
    max_mappings = 512
    max_options_per_access = 6
    max_candidates_per_mapping = 48
    max_candidates_per_block = 512
    reserved_l1_fraction = 0.1
    tolerance = 0.20
    clock_ghz = 1.0

Unset keys keep their defaults; the default block list is every power of
two from 32 to 256 per dim, pruned later by scratchpad capacity.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace


class ConfigError(ValueError):
    pass


_POW2 = (32, 64, 128, 256)
DEFAULT_BLOCKS = tuple((bm, bn, bk) for bm in _POW2 for bn in _POW2 for bk in _POW2)


@dataclass(frozen=True)
class RunConfig:
    blocks: tuple[tuple[int, int, int], ...] = DEFAULT_BLOCKS
    topk: int = 5
    max_mappings: int = 512
    max_options_per_access: int = 6
    max_candidates_per_mapping: int = 48
    max_candidates_per_block: int = 512
    reserved_l1_fraction: float = 0.1
    tolerance: float = 0.20
    clock_ghz: float = 1.0
    spatial_reuse: bool = True
    temporal_reuse: bool = True

    def with_overrides(self, **kwargs) -> "RunConfig":
        clean = {k: v for k, v in kwargs.items() if v is not None}
        return replace(self, **clean) if clean else self


def parse_blocks(text: str) -> tuple[tuple[int, int, int], ...]:
    out = []
    for part in text.replace(";", ",").split(","):
        part = part.strip()
        if not part:
            continue
        dims = [p for p in part.lower().split("x") if p]
        if len(dims) == 1:
            v = int(dims[0])
            out.append((v, v, v))
        elif len(dims) == 3:
            out.append(tuple(int(p) for p in dims))
        else:
            raise ConfigError(f"bad block spec {part!r} (use N or BMxBNxBK)")
    if not out:
        raise ConfigError("empty block list")
    return tuple(out)


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    cfg = base or RunConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (p.strip() for p in line.split("=", 1))
        try:
            if key == "blocks":
                cfg = replace(cfg, blocks=parse_blocks(value))
            elif key in ("topk", "max_mappings", "max_options_per_access",
                         "max_candidates_per_mapping", "max_candidates_per_block"):
                cfg = replace(cfg, **{key: int(value)})
            elif key in ("reserved_l1_fraction", "tolerance", "clock_ghz"):
                cfg = replace(cfg, **{key: float(value)})
            elif key in ("spatial_reuse", "temporal_reuse"):
                cfg = replace(cfg, **{key: value.lower() in ("1", "true", "yes", "on")})
            else:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from exc
    if cfg.topk < 1:
        raise ConfigError("topk must be >= 1")
    if not (0.0 <= cfg.reserved_l1_fraction < 1.0):
        raise ConfigError("reserved_l1_fraction must be in [0, 1)")
    return cfg
