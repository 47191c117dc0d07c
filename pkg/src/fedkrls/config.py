"""Flat key=value run configuration files.

One `key = value` pair per line; blank lines and `#` comments allowed.
Unknown keys are rejected so that typos fail loudly instead of silently
falling back to defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, fields


class ConfigError(ValueError):
    pass


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _parse_int_list(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.replace(",", " ").split())


def _parse_str_list(text: str) -> tuple[str, ...]:
    return tuple(v for v in text.replace(",", " ").split())


@dataclass
class RunConfig:
    """Everything a single experiment needs; echoed into every artifact."""

    dataset: str = "iris"
    protocol: str = "fedcg"  # fedcg | cencg | naive
    sampler: str = "P"
    m: int = 50
    lam: float = 1e-3
    gamma: float = 0.0  # 0 -> 1/d default
    random_gamma: bool = False
    toll: float = 1e-6
    max_epochs: int = 500
    n_hospitals: int = 3
    n_providers: int = 2
    seed: int = 0
    repeats: int = 10
    test_fraction: float = 0.3
    transport: str = "bus"
    toy_n_train: int = 600
    toy_n_test: int = 600
    # sweep-only grid fields
    m_grid: tuple[int, ...] = ()
    samplers: tuple[str, ...] = ()
    # attack-only fields
    attack_seeds: tuple[int, ...] = (0,)
    attack_algorithms: tuple[str, ...] = ()
    attack_n_samples: int = 60

    def validate(self) -> None:
        if self.protocol not in ("fedcg", "cencg", "naive"):
            raise ConfigError(f"unknown protocol {self.protocol!r}")
        if self.sampler not in ("P", "U", "N"):
            raise ConfigError(f"unknown sampler {self.sampler!r}")
        if self.m <= 0 or self.repeats <= 0 or self.n_hospitals <= 0 or self.n_providers <= 0:
            raise ConfigError("m, repeats, n_hospitals, n_providers must be positive")
        if not (0.0 < self.test_fraction < 1.0):
            raise ConfigError("test_fraction must lie in (0, 1)")
        if self.transport not in ("bus", "tcp"):
            raise ConfigError(f"unknown transport {self.transport!r}")

    def echo_items(self) -> list[tuple[str, str]]:
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = " ".join(str(x) for x in v)
            out.append((f.name, str(v)))
        return out


_PARSERS = {
    int: int,
    float: float,
    str: str,
    bool: _parse_bool,
}


def parse_config(text: str) -> RunConfig:
    cfg = RunConfig()
    known = {f.name: f for f in fields(RunConfig)}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        f = known[key]
        try:
            if f.type in ("tuple[int, ...]",):
                parsed = _parse_int_list(value)
            elif f.type in ("tuple[str, ...]",):
                parsed = _parse_str_list(value)
            else:
                current = getattr(cfg, key)
                parsed = _PARSERS[type(current)](value)
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {value!r}") from exc
        setattr(cfg, key, parsed)
    cfg.validate()
    return cfg


def load_config(path) -> RunConfig:
    with open(path) as fh:
        return parse_config(fh.read())
