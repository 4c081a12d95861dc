"""Run configuration: every hyperparameter with its default, plus the flat
"key = value" config-file format the CLI reads (CLI flags override the file)."""

from dataclasses import dataclass, fields, replace

from .errors import ConfigError


@dataclass
class TrainConfig:
    # feature dims: input images are (4h x 4w), feature maps (h x w x c),
    # linguistic features (max_tokens x c_text)
    h: int = 16
    w: int = 16
    c: int = 64
    c_text: int = 32
    max_tokens: int = 12
    vocab_size: int = 24

    # architecture
    tau: float = 0.35
    ma_blocks: int = 2
    dec_blocks: int = 2
    heads: int = 4
    cba_depth: int = 1
    attn_mask_enabled: bool = True
    toi_a_enabled: bool = False
    fe_enabled: bool = True
    freeze_stubs: bool = True  # immutable: the encoders are never trained

    # loss / inference
    gamma: float = 2.0
    focal_weight: float = 0.5
    dice_weight: float = 0.5
    binarize_threshold: float = 0.35

    # optimization
    lr: float = 1e-4
    lr_decay: float = 0.1
    milestone_fractions: tuple = (0.6, 0.84)
    epochs: int = 50
    batch_size: int = 8  # gradient-accumulation count; updates use batch-of-1 forwards
    seed: int = 0

    # data
    train_samples: int = 256
    eval_samples: int = 64
    min_shapes: int = 2
    max_shapes: int = 4

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not self.freeze_stubs:
            raise ConfigError("freeze_stubs is immutable: encoders are always frozen")
        if not (0.0 < self.tau < 1.0):
            raise ConfigError(f"tau must be in (0, 1), got {self.tau}")
        if not (0.0 < self.binarize_threshold < 1.0):
            raise ConfigError("binarize_threshold must be in (0, 1)")
        if self.ma_blocks < 1 or self.dec_blocks < 1:
            raise ConfigError("ma_blocks and dec_blocks must be >= 1")
        if self.c % self.heads != 0:
            raise ConfigError(f"c={self.c} not divisible by heads={self.heads}")
        if self.c % 4 != 0:
            raise ConfigError(f"c={self.c} must be divisible by 4 (decoder upsampling)")
        if self.gamma < 0 or self.focal_weight < 0 or self.dice_weight < 0:
            raise ConfigError("gamma and loss weights must be >= 0")
        if list(self.milestone_fractions) != sorted(self.milestone_fractions):
            raise ConfigError("milestone_fractions must be sorted")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if self.min_shapes < 1 or self.max_shapes < self.min_shapes:
            raise ConfigError("invalid shape-count range")
        if self.vocab_size < 12:
            raise ConfigError("vocab_size must cover the 11 attribute words plus padding")

    def with_overrides(self, **kw):
        cfg = replace(self, **kw)
        cfg.validate()
        return cfg

    def milestones(self):
        return [int(f * self.epochs) for f in self.milestone_fractions]

    def to_flat(self):
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


def _parse_value(name, raw, ftype):
    raw = raw.strip()
    try:
        if ftype is bool:
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if ftype is int:
            return int(raw)
        if ftype is float:
            return float(raw)
        if ftype is tuple:
            return tuple(float(x) for x in raw.split(",") if x.strip())
    except ValueError as e:
        raise ConfigError(f"bad value for {name}: {raw!r}") from e
    raise ConfigError(f"unsupported config field type for {name}")


def parse_flat(text):
    """Parse "key = value" lines into a kwargs dict for TrainConfig."""
    ftypes = {"h": int, "w": int, "c": int, "c_text": int, "max_tokens": int,
              "vocab_size": int, "ma_blocks": int, "dec_blocks": int, "heads": int,
              "cba_depth": int, "epochs": int, "batch_size": int, "seed": int,
              "train_samples": int, "eval_samples": int, "min_shapes": int,
              "max_shapes": int,
              "tau": float, "gamma": float, "focal_weight": float,
              "dice_weight": float, "binarize_threshold": float, "lr": float,
              "lr_decay": float,
              "milestone_fractions": tuple,
              "attn_mask_enabled": bool, "toi_a_enabled": bool,
              "fe_enabled": bool, "freeze_stubs": bool}
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in ftypes:
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        out[key] = _parse_value(key, raw, ftypes[key])
    return out


def load_config(path, **overrides):
    with open(path, "r", encoding="utf-8") as fh:
        kw = parse_flat(fh.read())
    kw.update(overrides)
    return TrainConfig(**kw)
