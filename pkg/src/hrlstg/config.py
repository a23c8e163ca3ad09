"""INI run configuration.

Sections and keys::

    [run]      seed, stage, run_dir, checkpoint_every
    [env]      layout, room_size, colors_in_play, blocks_per_episode, distractors, max_steps,
               base_max_steps, max_primitive_steps
    [train]    gamma, lr, batch_size, clip_norm, poisson_lambda, alternation_period,
               max_iterations, max_episodes, r_min, window, iw_clip, replay_capacity,
               rms_decay, rms_eps, hidden, no_stg, no_alternating, no_vsw,
               no_curriculum, flat_baseline
    [stg]      alpha, collapse_e1
    [rollout]  base_level, base_greedy
    [explore]  eps_start, eps_end, eps_decay_episodes, heads
    [eval]     n, variants, seeds

``[env.kN]`` and ``[train.kN]`` override their base section for stage N only.
Lists are comma separated; colors may be given by name. ``none`` clears an
optional value. Unknown sections and keys are rejected.
"""
from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field, fields, replace

from .env import ConfigError, EnvConfig
from .evaluation import VARIANTS
from .tasks import COLORS, color_index
from .trainer import TrainConfig

# config key -> TrainConfig field, for the sections folded into TrainConfig
_FOLDED = {
    "stg": {"alpha": "stg_alpha", "collapse_e1": "stg_collapse_e1"},
    "rollout": {"base_level": "base_level", "base_greedy": "base_greedy"},
    "explore": {"eps_start": "eps_start", "eps_end": "eps_end", "eps_decay_episodes": "eps_decay_episodes",
                "heads": "explore_heads"},
}
_TRAIN_KEYS = [f.name for f in fields(TrainConfig) if f.name not in
               {v for m in _FOLDED.values() for v in m.values()}]
_ENV_KEYS = [f.name for f in fields(EnvConfig)]
_STAGE_SECTION = re.compile(r"^(env|train)\.k(\d+)$")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    stage: int = 0
    run_dir: str = "runs/default"
    checkpoint_every: int = 1000
    env: EnvConfig = field(default_factory=EnvConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    env_overrides: dict = field(default_factory=dict)
    train_overrides: dict = field(default_factory=dict)
    eval_n: int = 200
    eval_variants: tuple[str, ...] = VARIANTS
    eval_seeds: tuple[int, ...] = (0,)

    def env_for(self, stage: int) -> EnvConfig:
        return replace(self.env, **self.env_overrides.get(stage, {}))

    def train_for(self, stage: int) -> TrainConfig:
        return replace(self.train, **self.train_overrides.get(stage, {}))


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _color(text: str) -> int:
    text = text.strip()
    return int(text) if text.isdigit() else color_index(text)


def _list(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def _coerce(name: str, text: str, proto):
    """Parse ``text`` to the type of the default value ``proto`` (field ``name``)."""
    if text.strip().lower() == "none":
        return None
    if name == "colors_in_play":
        return tuple(_color(c) for c in _list(text))
    if isinstance(proto, bool):
        return _bool(text)
    if isinstance(proto, int):
        return int(text)
    if isinstance(proto, float):
        return float(text)
    if isinstance(proto, tuple):
        items = _list(text)
        return tuple(int(i) for i in items) if name == "hidden" else tuple(items)
    if name in ("max_episodes", "eps_decay_episodes", "base_max_steps", "max_primitive_steps"):
        return int(text)
    return text.strip()


def _format(name: str, value) -> str:
    if value is None:
        return "none"
    if name == "colors_in_play":
        return ", ".join(COLORS[c] for c in value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(str(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


def _section_values(parser, section: str, allowed: dict[str, str], proto) -> dict:
    out = {}
    for key, text in parser.items(section):
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in [{section}]; allowed: {', '.join(sorted(allowed))}")
        target = allowed[key]
        try:
            out[target] = _coerce(target, text, getattr(proto, target))
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key}: {exc}") from exc
    return out


def _eval_values(parser, section: str) -> dict:
    out = {}
    for key, value in parser.items(section):
        try:
            if key == "n":
                out["eval_n"] = int(value)
            elif key == "variants":
                out["eval_variants"] = tuple(_list(value))
            elif key == "seeds":
                out["eval_seeds"] = tuple(int(s) for s in _list(value))
            else:
                raise ConfigError(f"unknown key {key!r} in [eval]; allowed: n, seeds, variants")
        except ValueError as exc:
            raise ConfigError(f"[eval] {key}: {exc}") from exc
    bad = [v for v in out.get("eval_variants", ()) if v not in VARIANTS]
    if bad:
        raise ConfigError(f"unknown variant(s) {bad}; valid: {', '.join(VARIANTS)}")
    return out


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, default_section="__no_defaults__")
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    env_proto, train_proto, run_proto = EnvConfig(), TrainConfig(), RunConfig()
    run_kw, env_kw, train_kw = {}, {}, {}
    env_over: dict[int, dict] = {}
    train_over: dict[int, dict] = {}
    train_allowed = {k: k for k in _TRAIN_KEYS}
    for section in parser.sections():
        stage_match = _STAGE_SECTION.match(section)
        if section == "run":
            allowed = {k: k for k in ("seed", "stage", "run_dir", "checkpoint_every")}
            run_kw.update(_section_values(parser, section, allowed, run_proto))
        elif section == "env":
            env_kw.update(_section_values(parser, section, {k: k for k in _ENV_KEYS}, env_proto))
        elif section == "train":
            train_kw.update(_section_values(parser, section, train_allowed, train_proto))
        elif section in _FOLDED:
            train_kw.update(_section_values(parser, section, _FOLDED[section], train_proto))
        elif section == "eval":
            run_kw.update(_eval_values(parser, section))
        elif stage_match:
            kind, stage = stage_match.group(1), int(stage_match.group(2))
            if kind == "env":
                env_over[stage] = _section_values(parser, section, {k: k for k in _ENV_KEYS}, env_proto)
            else:
                train_over[stage] = _section_values(parser, section, train_allowed, train_proto)
        else:
            raise ConfigError(f"unknown section [{section}]")
    try:
        cfg = RunConfig(env=EnvConfig(**env_kw), train=TrainConfig(**train_kw), env_overrides=env_over,
                        train_overrides=train_over, **run_kw)
        for stage in set(env_over) | set(train_over) | {cfg.stage}:
            cfg.env_for(stage)
            cfg.train_for(stage)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.stage < 0 or cfg.eval_n < 1 or cfg.checkpoint_every < 1:
        raise ConfigError("stage must be >= 0, eval n and checkpoint_every must be >= 1")
    return cfg


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def dump_config(cfg: RunConfig) -> str:
    """Complete snapshot; ``parse_config(dump_config(c)) == c``."""
    lines = ["[run]"]
    for key in ("seed", "stage", "run_dir", "checkpoint_every"):
        lines.append(f"{key} = {_format(key, getattr(cfg, key))}")
    lines += ["", "[env]"]
    lines += [f"{k} = {_format(k, getattr(cfg.env, k))}" for k in _ENV_KEYS]
    lines += ["", "[train]"]
    lines += [f"{k} = {_format(k, getattr(cfg.train, k))}" for k in _TRAIN_KEYS]
    for section, mapping in _FOLDED.items():
        lines += ["", f"[{section}]"]
        lines += [f"{key} = {_format(target, getattr(cfg.train, target))}" for key, target in mapping.items()]
    lines += ["", "[eval]", f"n = {cfg.eval_n}", f"variants = {', '.join(cfg.eval_variants)}",
              f"seeds = {', '.join(map(str, cfg.eval_seeds))}"]
    for kind, overrides in (("env", cfg.env_overrides), ("train", cfg.train_overrides)):
        for stage in sorted(overrides):
            lines += ["", f"[{kind}.k{stage}]"]
            lines += [f"{k} = {_format(k, v)}" for k, v in overrides[stage].items()]
    return "\n".join(lines) + "\n"
