"""Encoder configuration: the EncoderConfig record, its invariants and key=value loading."""
import logging
import re
from dataclasses import dataclass, fields, replace, asdict
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Mapping, Union

from dotenv import dotenv_values

from sbcodec.errors import ConfigError

logger = logging.getLogger(__name__)

# --- Configuration & Constants ---
SUPPORTED_BIT_DEPTHS = (8, 10)
MIN_CU_SIZE = 8
MAX_QP = 51
MAX_SEARCH_RANGE = 255  # 8-bit header field
MAX_SCU_SIZE = 1024


class SaoMode(str, Enum):
    OFF = "off"
    FIXED = "fixed"
    ADAPTIVE = "adaptive"

    @classmethod
    def parse(cls, value: Union[str, "SaoMode"]) -> "SaoMode":
        if isinstance(value, SaoMode):
            return value
        key = str(value).strip().lower()
        aliases = {"fixedblock": "fixed", "adaptiveblock": "adaptive", "none": "off"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ConfigError(f"unknown SAO mode {value!r}; expected off, fixed or adaptive") from None


class AlfSignaling(str, Enum):
    SUPERBLOCK = "superblock"  # one on/off flag per super-block
    CU = "cu"  # super-block flag plus one flag per cell
    IMPROVED = "improved"  # super-block flag, all-CU flag, then cell flags

    @classmethod
    def parse(cls, value: Union[str, "AlfSignaling"]) -> "AlfSignaling":
        if isinstance(value, AlfSignaling):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ConfigError(f"unknown ALF signaling {value!r}; expected superblock, cu or improved") from None


def _is_power_of_two(value: int) -> bool:
    return value > 0 and value & (value - 1) == 0


@dataclass(frozen=True)
class EncoderConfig:
    """All encoder knobs. Construction validates every invariant.

    Attributes:
        max_scu_width / max_scu_height: SCU size M_SCU in luma pixels (square, power of two)
        max_partition_depth: depth of the minimum CU relative to the SCU
        max_direct_partition_depth: depth of the CTU relative to the SCU
        qp: quantization parameter, 0..51
        intra_period: distance between I frames; 0 means only the first frame is intra
        search_range: full-pel motion search range in luma pixels
        sao_mode: off, fixed-size SAO blocks, or adaptive (SCU split flag)
        sao_block_size: SAO block size in luma pixels
        alf_enabled: CU-level adaptive loop filter on/off
        bit_depth: 8 or 10
        lambda_factor: constant in lambda = factor * 2^((qp - 12) / 3)
        alf_signaling: ALF flag syntax variant
        frame_rate: frames per second, used only to report kbps
    """

    max_scu_width: int = 64
    max_scu_height: int = 64
    max_partition_depth: int = 3
    max_direct_partition_depth: int = 1
    qp: int = 32
    intra_period: int = 0
    search_range: int = 8
    sao_mode: SaoMode = SaoMode.ADAPTIVE
    sao_block_size: int = 32
    alf_enabled: bool = True
    bit_depth: int = 8
    lambda_factor: float = 0.85
    alf_signaling: AlfSignaling = AlfSignaling.IMPROVED
    frame_rate: float = 30.0

    def __post_init__(self):
        object.__setattr__(self, "sao_mode", SaoMode.parse(self.sao_mode))
        object.__setattr__(self, "alf_signaling", AlfSignaling.parse(self.alf_signaling))
        self.validate()

    def validate(self) -> None:
        if self.bit_depth not in SUPPORTED_BIT_DEPTHS:
            raise ConfigError(f"bit_depth must be 8 or 10, got {self.bit_depth}")
        if not 0 <= self.qp <= MAX_QP:
            raise ConfigError(f"qp must be in 0..{MAX_QP}, got {self.qp}")
        if self.max_scu_width != self.max_scu_height:
            raise ConfigError(
                f"only square SCUs are supported (max_scu_width={self.max_scu_width}, "
                f"max_scu_height={self.max_scu_height})"
            )
        if not _is_power_of_two(self.max_scu_width) or not MIN_CU_SIZE <= self.max_scu_width <= MAX_SCU_SIZE:
            raise ConfigError(f"SCU size must be a power of two in {MIN_CU_SIZE}..{MAX_SCU_SIZE}, got {self.max_scu_width}")
        if self.max_partition_depth < 0 or self.max_direct_partition_depth < 0:
            raise ConfigError("partition depths must be nonnegative")
        if self.max_direct_partition_depth > self.max_partition_depth:
            raise ConfigError(
                f"max_direct_partition_depth ({self.max_direct_partition_depth}) must be no greater than "
                f"max_partition_depth ({self.max_partition_depth})"
            )
        if self.max_scu_width >> self.max_partition_depth < MIN_CU_SIZE:
            raise ConfigError(
                f"minimum CU size {self.max_scu_width >> self.max_partition_depth} is below {MIN_CU_SIZE} "
                f"(SCU {self.max_scu_width}, depth {self.max_partition_depth})"
            )
        if self.intra_period < 0:
            raise ConfigError(f"intra_period must be nonnegative, got {self.intra_period}")
        if not 0 <= self.search_range <= MAX_SEARCH_RANGE:
            raise ConfigError(f"search_range must be in 0..{MAX_SEARCH_RANGE}, got {self.search_range}")
        if not _is_power_of_two(self.sao_block_size) or not MIN_CU_SIZE <= self.sao_block_size <= self.max_scu_width:
            raise ConfigError(
                f"sao_block_size must be a power of two in {MIN_CU_SIZE}..{self.max_scu_width}, got {self.sao_block_size}"
            )
        if self.lambda_factor <= 0:
            raise ConfigError(f"lambda_factor must be positive, got {self.lambda_factor}")
        if self.frame_rate <= 0:
            raise ConfigError(f"frame_rate must be positive, got {self.frame_rate}")

    @property
    def scu_size(self) -> int:
        return self.max_scu_width

    def is_intra_frame(self, index: int) -> bool:
        if index == 0:
            return True
        return self.intra_period > 0 and index % self.intra_period == 0

    def with_overrides(self, **overrides: Any) -> "EncoderConfig":
        """Returns a copy with the given fields replaced (None values are ignored)."""
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def echo(self) -> str:
        """Deterministic key=value rendering; also a valid config file."""
        lines = []
        for key, value in sorted(asdict(self).items()):
            if isinstance(value, Enum):
                value = value.value
            elif isinstance(value, bool):
                value = "on" if value else "off"
            lines.append(f"{key}={value}")
        return "\n".join(lines)


# --- Loading ---

# Acronym runs stay together: MaxSCUWidth -> Max_SCU_Width.
_ACRONYM_RE = re.compile(r"([A-Z]+)([A-Z][a-z])")
_CAMEL_RE = re.compile(r"([a-z0-9])([A-Z])")


def _normalize_key(key: str) -> str:
    key = key.strip()
    if "_" not in key and any(c.isupper() for c in key):
        key = _CAMEL_RE.sub(r"\1_\2", _ACRONYM_RE.sub(r"\1_\2", key))
    return key.lower()


def _coerce(name: str, raw: Any, target: Any) -> Any:
    if raw is None:
        raise ConfigError(f"config key {name!r} has no value")
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    try:
        if target is bool:
            lowered = text.lower()
            if lowered in ("1", "true", "on", "yes"):
                return True
            if lowered in ("0", "false", "off", "no"):
                return False
            raise ValueError(text)
        if target is int:
            return int(text)
        if target is float:
            return float(text)
    except ValueError:
        raise ConfigError(f"config key {name!r}: cannot parse {raw!r} as {target.__name__}") from None
    return text


def config_from_mapping(values: Mapping[str, Any], base: EncoderConfig = None) -> EncoderConfig:
    """Builds an EncoderConfig from a mapping keyed by field names (snake_case or camelCase)."""
    base = base or EncoderConfig()
    types = {f.name: f.type for f in fields(EncoderConfig)}
    overrides: Dict[str, Any] = {}
    for key, raw in values.items():
        name = _normalize_key(key)
        if name not in types:
            raise ConfigError(f"unknown config key {key!r}")
        target = types[name]
        if target in (SaoMode, AlfSignaling):
            overrides[name] = target.parse(raw)
        else:
            overrides[name] = _coerce(name, raw, target)
    return replace(base, **overrides)


def load_config(path: Union[str, Path], base: EncoderConfig = None) -> EncoderConfig:
    """Reads a plain key=value config file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    values = dotenv_values(path)
    logger.debug(f"Loaded {len(values)} config keys from {path}")
    return config_from_mapping(values, base)
