"""Run configuration and seed derivation.

All randomness in the toolkit flows from one root seed through
`derived_rng(root, stream, *indices)`: the arguments feed a
numpy SeedSequence, so independently derived generators are decorrelated
and every consumer is reproducible bit for bit.  Stream tags are small
stable integers, one per random decision site.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError

# stream tags (never renumber; reproducibility of published runs depends on them)
STREAM_SCENE = 1
STREAM_AUGMENT = 2
STREAM_BALANCE = 3
STREAM_TRAIN = 4
STREAM_PLAN = 5
STREAM_START = 6
STREAM_SPLIT = 7
STREAM_OBSCAM = 8


def derived_rng(root: int, *path: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(root), *[int(p) for p in path]]))


def parse_kv_text(text: str, path: str = "<config>") -> dict:
    """Parse `key=value` lines; '#' starts a comment, blank lines ignored."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        if key in out:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def load_kv_file(path) -> dict:
    with open(path, "r", encoding="ascii") as f:
        return parse_kv_text(f.read(), str(path))


class RunConfig:
    """Typed key=value configuration with a closed schema.

    `schema` maps key -> (parser, default).  Unknown keys are rejected;
    `resolved_text()` serializes every effective value for the run log.
    """

    def __init__(self, schema: dict, values: dict = None):
        self.schema = schema
        self._values = {k: default for k, (_, default) in schema.items()}
        if values:
            self.update(values)

    def update(self, values: dict) -> None:
        for key, raw in values.items():
            if key not in self.schema:
                raise ConfigError(f"unknown config key {key!r}")
            parser, _ = self.schema[key]
            try:
                self._values[key] = parser(raw) if isinstance(raw, str) else raw
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key!r}: {exc}") from exc

    def __getitem__(self, key: str):
        return self._values[key]

    def resolved_text(self) -> str:
        lines = [f"{k}={self._format(self._values[k])}" for k in sorted(self._values)]
        return "\n".join(lines) + "\n"

    @staticmethod
    def _format(value) -> str:
        if isinstance(value, bool):
            return "true" if value else "false"
        if isinstance(value, float):
            return f"{value:.17g}"
        return str(value)


def parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")
