"""Plain-text ``key = value`` configuration files.

Lines starting with ``#`` are comments. Values are converted to the type of
the matching dataclass field; tuples are written comma-separated.
"""
import dataclasses
import typing
from pathlib import Path

from .errors import InputError


def parse_kv(text, source="<config>"):
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"config: {source}:{lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def read_kv_file(path):
    path = Path(path)
    if not path.exists():
        raise InputError(f"config: file not found: {path}")
    return parse_kv(path.read_text(), str(path))


def _convert(value, tp, key):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin is typing.Union:
        if value.lower() in ("none", "") and type(None) in args:
            return None
        tp = next(a for a in args if a is not type(None))
        origin, args = typing.get_origin(tp), typing.get_args(tp)
    try:
        if origin is tuple:
            parts = [p.strip() for p in value.strip("()[] ").split(",") if p.strip()]
            return tuple(_convert(p, args[0], key) for p in parts)
        if tp is bool:
            if value.lower() in ("1", "true", "yes", "on"):
                return True
            if value.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if tp in (int, float, str):
            return tp(value)
    except (ValueError, StopIteration) as exc:
        raise InputError(f"config: bad value for {key}: {value!r}") from exc
    return value


def split_prefixed(mapping, prefix):
    """Split ``mapping`` into (keys under ``prefix`` with it removed, the rest)."""
    inner = {k[len(prefix):]: v for k, v in mapping.items() if k.startswith(prefix)}
    rest = {k: v for k, v in mapping.items() if not k.startswith(prefix)}
    return inner, rest


def from_kv(cls, mapping, strict=True):
    """Build dataclass ``cls`` from string values; unknown keys are rejected
    when ``strict``."""
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = set(mapping) - names
    if strict and unknown:
        raise InputError(f"config: unknown keys for {cls.__name__}: {', '.join(sorted(unknown))}")
    kwargs = {k: _convert(v, hints[k], k) if isinstance(v, str) else v for k, v in mapping.items() if k in names}
    return cls(**kwargs)


def to_kv(obj, prefix=""):
    lines = []
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        lines.append(f"{prefix}{f.name} = {value}")
    return "\n".join(lines) + "\n"
