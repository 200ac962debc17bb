"""Line-oriented scenario configuration: ``section.key = value`` pairs.

UTF-8 text, ``#`` starts a comment, blank lines ignored. Unknown sections or
keys are rejected outright; values are coerced by the per-key parsers in the
schema below. Lists are comma-separated; block specifications are
semicolon-separated groups of colon-separated numbers (per-axis low bounds,
per-axis high bounds, then the value, e.g. ``0.2:0.4:0.0`` in 1D or
``0.2:0.3:0.4:0.5:0.0`` in 2D).
"""

from __future__ import annotations

from pathlib import Path


class ConfigError(ValueError):
    pass


def _parse_bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


def _parse_floats(s: str) -> tuple[float, ...]:
    return tuple(float(p) for p in s.split(",") if p.strip())


def _parse_ints(s: str) -> tuple[int, ...]:
    return tuple(int(p) for p in s.split(",") if p.strip())


def _parse_blocks(s: str) -> tuple[tuple[float, ...], ...]:
    groups = []
    for part in s.split(";"):
        part = part.strip()
        if part:
            groups.append(tuple(float(x) for x in part.split(":")))
    return tuple(groups)


def _parse_span(s: str):
    s = s.strip()
    if s == "all":
        return "all"
    lo, hi = s.split(":")
    return (int(lo), int(hi))


SCHEMA = {
    "grid": {
        "dim": int,
        "extents": _parse_floats,
        "counts": _parse_ints,
    },
    "diffusion": {
        "kind": str,            # constant | blocks
        "value": float,
        "base": float,
        "blocks": _parse_blocks,
        "floor": float,
    },
    "c1": {
        "kind": str,            # constant | bump | blocks
        "value": float,
        "base": float,
        "center": _parse_floats,
        "width": float,
        "height": float,
        "blocks": _parse_blocks,
    },
    "c2": {
        "kind": str,
        "value": float,
        "base": float,
        "center": _parse_floats,
        "width": float,
        "height": float,
        "blocks": _parse_blocks,
    },
    "initial": {
        "kind": str,            # constant | bump | blocks | annulus | modes | constructed
        "value": float,
        "base": float,
        "center": _parse_floats,
        "width": float,
        "height": float,
        "blocks": _parse_blocks,
        "inner": _parse_floats,  # annulus inner box: lows then highs
        "outer": _parse_floats,
        "modes": _parse_ints,
        "coeffs": _parse_floats,
        "theta_power": float,
        "theta_scale": float,
        "margin": float,
    },
    "gamma": {
        "face": str,
        "span": _parse_span,
    },
    "time": {
        "horizon": float,
        "samples": int,
        "spacing": str,          # log | linear
        "first": float,
        "tau": float,
        "dt": float,
    },
    "tolerances": {
        "trace_tol": float,
        "f_tol": float,
        "rate_tol": float,
        "trace_match_tol": float,
        "cluster_tol": float,
    },
    "separation": {
        "max_modes": int,
        "tol": float,
    },
    "carleman": {
        "lam": float,
        "samples": int,
        "s_scan": _parse_floats,
        "target": _parse_floats,
        "time_samples": int,
        "growth_tol": float,
    },
    "decay": {
        "condition": str,        # superlinear | linear | sqrt
        "theta_power": float,
        "theta_scale": float,
        "sigma1": float,
    },
    "run": {
        "seed": int,
        "label": str,
    },
}

DEFAULTS = {
    "diffusion": {"kind": "constant", "value": 1.0, "floor": 1e-6},
    "c1": {"kind": "constant", "value": 0.0},
    "c2": {"kind": "constant", "value": 0.0},
    "initial": {"kind": "constant", "value": 1.0},
    "gamma": {"face": "xlo", "span": "all"},
    "time": {"horizon": 2.0, "samples": 40, "spacing": "log", "first": 0.05,
             "tau": 0.5, "dt": 1e-4},
    "tolerances": {"trace_tol": 1e-6, "f_tol": 1e-8, "rate_tol": 1e-3,
                   "trace_match_tol": 1e-4},
    "separation": {"max_modes": 6, "tol": 1e-10},
    "carleman": {"lam": 2.0, "samples": 100, "s_scan": (1.0, 2.0, 4.0, 8.0),
                 "time_samples": 33, "growth_tol": 1.1},
    "decay": {"condition": "superlinear", "theta_power": 0.7,
              "theta_scale": 1.0, "sigma1": 1.0},
    "run": {},
}


def parse_config(text: str) -> dict[str, dict]:
    """Parse and validate configuration text against the schema."""
    sections: dict[str, dict] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'section.key = value'")
        lhs, value = line.split("=", 1)
        lhs = lhs.strip()
        if "." not in lhs:
            raise ConfigError(f"line {lineno}: key {lhs!r} lacks a section")
        section, key = lhs.split(".", 1)
        section, key = section.strip(), key.strip()
        if section not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown section {section!r}")
        if key not in SCHEMA[section]:
            raise ConfigError(f"line {lineno}: unknown key {key!r} in "
                              f"section {section!r}")
        if section in sections and key in sections[section]:
            raise ConfigError(f"line {lineno}: duplicate key {section}.{key}")
        parser = SCHEMA[section][key]
        try:
            parsed = parser(value.strip())
        except (ValueError, TypeError) as err:
            raise ConfigError(f"line {lineno}: bad value for {section}.{key}: "
                              f"{err}") from err
        sections.setdefault(section, {})[key] = parsed
    if "grid" not in sections:
        raise ConfigError("missing required section 'grid'")
    for sec in ("dim", "extents", "counts"):
        if sec not in sections["grid"]:
            raise ConfigError(f"missing required key grid.{sec}")
    merged: dict[str, dict] = {}
    for section in SCHEMA:
        merged[section] = dict(DEFAULTS.get(section, {}))
        merged[section].update(sections.get(section, {}))
    return merged


def load_config(path) -> dict[str, dict]:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def canonical_lines(config: dict[str, dict], seed: int) -> str:
    """Deterministic serialization used for the scenario digest."""
    lines = [f"run.seed = {seed}"]
    for section in sorted(config):
        for key in sorted(config[section]):
            if section == "run" and key == "seed":
                continue
            lines.append(f"{section}.{key} = {config[section][key]!r}")
    return "\n".join(lines)


__all__ = ["ConfigError", "SCHEMA", "DEFAULTS", "parse_config", "load_config",
           "canonical_lines"]
