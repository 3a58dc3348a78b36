"""Flat ``key = value`` run configuration shared by the CLI and the estimator."""
from dataclasses import asdict, dataclass, field, fields

from .exceptions import ConfigError
from .model import MtgnnConfig
from .training import TrainConfig


@dataclass
class DataConfig:
    horizon_mode: str = "single"
    horizon: int = 1
    splits: str = "0.6,0.2,0.2"
    aux_time_of_day: bool = False
    steps_per_day: int = 288
    normalization: str = "zscore"
    delimiter: str = "auto"
    nan_policy: str = "reject"

    @property
    def split_fractions(self):
        try:
            parts = tuple(float(x) for x in self.splits.split(","))
        except ValueError:
            raise ConfigError(f"splits must be three comma-separated numbers, got {self.splits!r}") from None
        if len(parts) != 3:
            raise ConfigError(f"splits must be three comma-separated numbers, got {self.splits!r}")
        return parts

    def validate(self):
        if self.horizon_mode not in ("single", "multi"):
            raise ConfigError(f"horizon_mode must be single or multi, got {self.horizon_mode!r}")
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if self.normalization not in ("zscore", "max"):
            raise ConfigError(f"normalization must be zscore or max, got {self.normalization!r}")
        if self.nan_policy not in ("reject", "ffill"):
            raise ConfigError(f"nan_policy must be reject or ffill, got {self.nan_policy!r}")
        self.split_fractions
        return self


SECTIONS = {"model": MtgnnConfig, "train": TrainConfig, "data": DataConfig}
KEY_SECTION = {f.name: sec for sec, cls in SECTIONS.items() for f in fields(cls)}
FIELD_TYPES = {f.name: type(getattr(cls(), f.name)) for cls in SECTIONS.values() for f in fields(cls)}


def coerce(key, text):
    if key not in FIELD_TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    kind = FIELD_TYPES[key]
    text = text.strip()
    try:
        if kind is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {text!r} (expected {kind.__name__})") from None
    return text


def parse_lines(lines, source="<config>"):
    values = {}
    for lineno, line in enumerate(lines, start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        key, sep, value = text.partition("=")
        if not sep:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line.strip()!r}")
        key = key.strip()
        values[key] = coerce(key, value)
    return values


def read_config_file(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_lines(fh.read().splitlines(), str(path))
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc


def parse_overrides(items):
    return parse_lines(items or [], "--override")


@dataclass
class RunConfig:
    model: MtgnnConfig = field(default_factory=MtgnnConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    explicit: set = field(default_factory=set)

    @classmethod
    def from_values(cls, values):
        parts = {sec: {} for sec in SECTIONS}
        for key, value in values.items():
            if key not in KEY_SECTION:
                raise ConfigError(f"unknown config key {key!r}")
            parts[KEY_SECTION[key]][key] = value
        return cls(MtgnnConfig(**parts["model"]), TrainConfig(**parts["train"]),
                   DataConfig(**parts["data"]), set(values))

    @classmethod
    def load(cls, path=None, overrides=None):
        """File values first, then command-line overrides on top."""
        values = read_config_file(path) if path else {}
        values.update(parse_overrides(overrides))
        return cls.from_values(values)

    def flat(self):
        out = {}
        for part in (self.model, self.train, self.data):
            out.update(asdict(part))
        return out

    def fit_to_data(self, num_nodes):
        """Fill in data-dependent model settings that were not set explicitly."""
        m = self.model
        m.num_nodes = num_nodes
        if "in_dim" not in self.explicit:
            m.in_dim = 2 if self.data.aux_time_of_day else 1
        if "top_k" not in self.explicit:
            m.top_k = min(m.top_k, num_nodes)
        if self.data.horizon_mode == "single" and m.output_len != 1:
            if "output_len" in self.explicit:
                raise ConfigError(f"single-step mode predicts one value; output_len={m.output_len} "
                                  "must be 1 (choose the step with horizon)")
            m.output_len = 1
        self.data.validate()
        self.train.validate()
        m.validate()
        return self

    def echo(self):
        """``# key = value`` lines describing the effective configuration."""
        return "".join(f"# {k} = {v}\n" for k, v in sorted(self.flat().items()))
