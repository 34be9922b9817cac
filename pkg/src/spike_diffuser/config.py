"""Run configuration: one INI file, typed sections, stable digests.

Sections map onto the package's config dataclasses:

  [model]    -> transformer.ModelConfig (minus the nested lif block)
  [lif]      -> snn.LifParams (t_steps is taken from [model])
  [train]    -> policy.TrainConfig
  [sampler]  -> diffusion.SamplerConfig
  [run]      -> paths, seeds, and evaluation geometry (RunConfig fields)

Every key has a default; a config file only lists what it changes.
Unknown sections or keys are errors rather than warnings: a typo must
not silently fall back to a default.
"""

import configparser
import dataclasses
import hashlib
import io
from dataclasses import dataclass

from .diffusion import SamplerConfig
from .errors import ConfigError
from .policy import TrainConfig
from .snn import LifParams
from .transformer import ModelConfig


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig
    train: TrainConfig
    sampler: SamplerConfig
    dataset: str = "dataset.sdds"
    out: str = "out"
    seed: int = 0
    n_episodes: int = 64
    n_inits: int = 50
    exec_steps: int = 8
    max_steps: int = 300

    def __post_init__(self):
        for name in ("n_episodes", "n_inits", "exec_steps"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.max_steps < 0:
            raise ConfigError("max_steps must be >= 0")


def default_config() -> RunConfig:
    return RunConfig(
        model=ModelConfig(),
        train=TrainConfig(),
        sampler=SamplerConfig(kind="ddpm", n_inference_steps=100, eta=1.0, seed=0),
    )


# section -> (dataclass, fields excluded from the file)
_SECTIONS = {
    "model": (ModelConfig, {"lif"}),
    "lif": (LifParams, {"t_steps"}),
    "train": (TrainConfig, set()),
    "sampler": (SamplerConfig, set()),
    "run": (RunConfig, {"model", "train", "sampler"}),
}

# workspace locations, not experiment semantics: settable like any key but
# excluded from the canonical rendering so digests are path-independent
_UNRENDERED = {("run", "out"), ("run", "dataset")}


def _coerce(raw: str, typ, section: str, key: str):
    try:
        if typ is bool:
            low = raw.strip().lower()
            if low in ("true", "yes", "1"):
                return True
            if low in ("false", "no", "0"):
                return False
            raise ValueError(raw)
        return typ(raw)
    except ValueError as exc:
        raise ConfigError(
            f"[{section}] {key}: cannot parse {raw!r} as {typ.__name__}") from exc


def _field_types(cls, skip):
    return {
        f.name: f.type if isinstance(f.type, type) else _resolve(cls, f.name)
        for f in dataclasses.fields(cls)
        if f.name not in skip
    }


def _resolve(cls, name):
    # dataclass field annotations arrive as strings under deferred
    # evaluation; everything configurable here is int/float/str/bool
    hints = {"int": int, "float": float, "str": str, "bool": bool}
    ann = next(f.type for f in dataclasses.fields(cls) if f.name == name)
    if isinstance(ann, str) and ann in hints:
        return hints[ann]
    raise ConfigError(f"unsupported config field type for {cls.__name__}.{name}")


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the INI file (if given), then explicit overrides.

    ``overrides`` maps "section.key" to already-typed values; the CLI
    feeds its flags through here.
    """
    values: dict[str, dict] = {name: {} for name in _SECTIONS}
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(path, "r", encoding="utf-8") as fh:
                parser.read_file(fh)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        for section in parser.sections():
            if section not in _SECTIONS:
                raise ConfigError(f"{path}: unknown section [{section}]")
            cls, skip = _SECTIONS[section]
            types = _field_types(cls, skip)
            for key, raw in parser.items(section):
                if key not in types:
                    raise ConfigError(f"{path}: unknown key [{section}] {key}")
                values[section][key] = _coerce(raw, types[key], section, key)
    for dotted, val in (overrides or {}).items():
        section, _, key = dotted.partition(".")
        if section not in _SECTIONS:
            raise ConfigError(f"override targets unknown section [{section}]")
        cls, skip = _SECTIONS[section]
        types = _field_types(cls, skip)
        if key not in types:
            raise ConfigError(f"override targets unknown key [{section}] {key}")
        values[section][key] = (
            val if isinstance(val, types[key]) else
            _coerce(str(val), types[key], section, key)
        )
    try:
        model = ModelConfig(lif=LifParams(**values["lif"]), **values["model"])
        train = TrainConfig(**values["train"])
        sampler_kw = {"kind": "ddpm", "n_inference_steps": 100, "eta": 1.0,
                      "seed": 0, **values["sampler"]}
        sampler = SamplerConfig(**sampler_kw)
        return RunConfig(model=model, train=train, sampler=sampler, **values["run"])
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def _flat_items(cfg: RunConfig):
    per_section = {
        "model": dataclasses.asdict(cfg.model),
        "lif": dataclasses.asdict(cfg.model.lif),
        "train": dataclasses.asdict(cfg.train),
        "sampler": dataclasses.asdict(cfg.sampler),
        "run": dataclasses.asdict(cfg),
    }
    for section in sorted(_SECTIONS):
        _, skip = _SECTIONS[section]
        data = per_section[section]
        for key in sorted(data):
            if key in skip or key == "lif" or (section, key) in _UNRENDERED:
                continue
            yield section, key, data[key]


def render_config(cfg: RunConfig) -> str:
    """Canonical INI text: sorted sections and keys, repr-stable values."""
    buf = io.StringIO()
    current = None
    for section, key, val in _flat_items(cfg):
        if section != current:
            if current is not None:
                buf.write("\n")
            buf.write(f"[{section}]\n")
            current = section
        buf.write(f"{key} = {val}\n")
    return buf.getvalue()


def config_digest(cfg: RunConfig) -> str:
    return hashlib.sha256(render_config(cfg).encode("utf-8")).hexdigest()[:16]


def write_effective_config(cfg: RunConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(render_config(cfg))
