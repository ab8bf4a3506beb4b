"""Experiment configuration files.

INI-style text read with :mod:`configparser`: ``[section]`` headers and
``key = value`` lines, ``#`` comments, no interpolation.  Lists are comma
separated; a list of points separates points with ``;``.  Every error
names the offending line.

Example::

    [experiment]
    kind = rate
    seed = 7

    [target]
    family = gaussian
    mean = 0
    var = 1

    [parent]
    family = gaussian

    [run]
    q = 2
    sigma = 0.1
    m_values = 4, 16, 64, 256
    trials = 50
"""
from __future__ import annotations

import configparser
import hashlib
import math
import re
from dataclasses import dataclass, field
from typing import Optional

from ..densities import (ParentalDensity, TargetDensity, counterexample_target, gaussian_mixture_target,
                         gaussian_target, piecewise_constant_target, truncated_exponential_target,
                         uniform_target)
from ..errors import ConfigError, DbnApproxError

EXPERIMENTS = ("norms", "rate", "kl_rate", "approximate", "synthesize_rbm", "counterexample", "eval")

ALLOWED = {
    "experiment": {"kind", "name", "seed"},
    "target": {"family", "mean", "var", "dim", "weights", "means", "variances", "lo", "hi",
               "rates", "bounds", "m", "edges", "values"},
    "parent": {"family", "dim", "rates", "bounds"},
    "run": {"q", "q_values", "dims", "families", "m", "m_values", "trials", "sigma", "epsilon",
            "refine_iterations", "omega_lo", "omega_hi", "eta", "m_cap", "samples", "grid_lo",
            "grid_hi", "grid_points", "dbn"},
    "quadrature": {"points_per_axis"},
    "output": {"timings"},
}

_SECTION = re.compile(r"^\s*\[([^\]]+)\]")
_KEY = re.compile(r"^\s*([^#;=:\s\[][^=:]*?)\s*[=:]")
_MISSING = object()


def _line_map(text: str) -> dict:
    out = {}
    section = None
    for n, line in enumerate(text.splitlines(), start=1):
        m = _SECTION.match(line)
        if m:
            section = m.group(1).strip()
            out.setdefault((section, None), n)
            continue
        m = _KEY.match(line)
        if m and section is not None and not line[:1].isspace():
            out.setdefault((section, m.group(1).strip().lower()), n)
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    name: str
    seed: int
    sections: dict = field(repr=False)
    lines: dict = field(repr=False, compare=False)
    path: Optional[str] = None

    def line(self, section: str, key: Optional[str] = None) -> Optional[int]:
        return self.lines.get((section, key)) or self.lines.get((section, None))

    def error(self, section, key, message) -> ConfigError:
        return ConfigError(f"[{section}] {key}: {message}" if key else f"[{section}] {message}",
                           line=self.line(section, key))

    def has(self, section: str, key: str) -> bool:
        return key in self.sections.get(section, {})

    def raw(self, section: str, key: str, default=_MISSING) -> str:
        try:
            return self.sections[section][key]
        except KeyError:
            if default is _MISSING:
                raise ConfigError(f"missing required key [{section}] {key}",
                                  line=self.lines.get((section, None))) from None
            return default

    def _convert(self, section, key, text, kind):
        try:
            v = kind(text)
        except ValueError:
            raise self.error(section, key, f"cannot read {text!r} as {kind.__name__}") from None
        if kind is float and math.isnan(v):
            raise self.error(section, key, "NaN is not allowed")
        return v

    def float(self, section: str, key: str, default=_MISSING) -> float:
        text = self.raw(section, key, default)
        return text if text is default else self._convert(section, key, text, float)

    def int(self, section: str, key: str, default=_MISSING) -> int:
        text = self.raw(section, key, default)
        return text if text is default else self._convert(section, key, text, int)

    def floats(self, section: str, key: str, default=_MISSING) -> tuple:
        text = self.raw(section, key, default)
        if text is default:
            return default
        parts = [p.strip() for p in text.split(",") if p.strip()]
        if not parts:
            raise self.error(section, key, "empty list")
        return tuple(self._convert(section, key, p, float) for p in parts)

    def ints(self, section: str, key: str, default=_MISSING) -> tuple:
        text = self.raw(section, key, default)
        if text is default:
            return default
        parts = [p.strip() for p in text.split(",") if p.strip()]
        if not parts:
            raise self.error(section, key, "empty list")
        return tuple(self._convert(section, key, p, int) for p in parts)

    def points(self, section: str, key: str) -> tuple:
        text = self.raw(section, key)
        return tuple(tuple(self._convert(section, key, c.strip(), float) for c in p.split(","))
                     for p in text.split(";") if p.strip())

    def words(self, section: str, key: str, default=_MISSING) -> tuple:
        text = self.raw(section, key, default)
        if text is default:
            return default
        return tuple(p.strip() for p in text.split(",") if p.strip())

    @property
    def config_hash(self) -> str:
        """First 16 hex digits of a SHA-256 over the normalised config and effective seed."""
        h = hashlib.sha256()
        h.update(f"experiment={self.experiment}\nseed={self.seed}\n".encode())
        for section in sorted(self.sections):
            for key in sorted(self.sections[section]):
                if (section, key) in (("experiment", "seed"), ("experiment", "kind")):
                    continue
                h.update(f"[{section}]{key}={self.sections[section][key]}\n".encode())
        return h.hexdigest()[:16]

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return ExperimentConfig(self.experiment, self.name, int(seed), self.sections, self.lines, self.path)

    def timings(self) -> bool:
        text = self.raw("output", "timings", "false").lower()
        if text not in ("true", "false", "yes", "no", "1", "0"):
            raise self.error("output", "timings", "expected true or false")
        return text in ("true", "yes", "1")

    def target(self) -> TargetDensity:
        fam = self.raw("target", "family")
        try:
            if fam == "gaussian":
                dim = self.int("target", "dim", 1)
                mean = self.floats("target", "mean", (0.0,))
                return gaussian_target(mean if len(mean) > 1 else mean[0], self.float("target", "var", 1.0), dim)
            if fam == "gaussian_mixture":
                return gaussian_mixture_target(self.floats("target", "weights"), self.points("target", "means"),
                                               self.floats("target", "variances"))
            if fam == "uniform":
                return uniform_target(self.floats("target", "lo"), self.floats("target", "hi"))
            if fam == "truncated_exponential":
                return truncated_exponential_target(self.floats("target", "rates"), self.floats("target", "bounds"))
            if fam == "counterexample":
                return counterexample_target(self.int("target", "m"))
            if fam == "piecewise_constant":
                return piecewise_constant_target(self.floats("target", "edges"), self.floats("target", "values"))
        except ConfigError:
            raise
        except (DbnApproxError, ValueError) as exc:
            raise self.error("target", None, str(exc)) from exc
        raise self.error("target", "family", f"unknown target family {fam!r}")

    def parent(self) -> ParentalDensity:
        fam = self.raw("parent", "family")
        try:
            if fam == "gaussian":
                return ParentalDensity.gaussian(self.int("parent", "dim", 1))
            if fam == "truncated_exponential":
                return ParentalDensity.truncated_exponential(self.floats("parent", "rates"),
                                                             self.floats("parent", "bounds"))
        except ConfigError:
            raise
        except (DbnApproxError, ValueError) as exc:
            raise self.error("parent", None, str(exc)) from exc
        raise self.error("parent", "family", f"unknown parent family {fam!r}")


def parse_config(text: str, path: Optional[str] = None, experiment: Optional[str] = None,
                 seed: Optional[int] = None) -> ExperimentConfig:
    """Parse and validate; ``experiment`` and ``seed`` override the file."""
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#",),
                                   inline_comment_prefixes=("#",), empty_lines_in_values=False)
    try:
        cp.read_string(text, source=path or "<config>")
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("key outside any [section]", line=exc.lineno) from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ConfigError("expected 'key = value'", line=lineno) from None
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise ConfigError(exc.message.split(": ", 1)[-1], line=exc.lineno) from None
    lines = _line_map(text)
    sections = {s: {k: v.strip() for k, v in cp[s].items()} for s in cp.sections()}
    for s, keys in sections.items():
        if s not in ALLOWED:
            raise ConfigError(f"unknown section [{s}]", line=lines.get((s, None)))
        for k in keys:
            if k not in ALLOWED[s]:
                raise ConfigError(f"unknown key [{s}] {k}", line=lines.get((s, k)))
    exp = sections.get("experiment", {})
    kind = exp.get("kind")
    if kind is not None:
        kind = kind.replace("-", "_")
        if kind not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment kind {kind!r}", line=lines.get(("experiment", "kind")))
    if experiment is not None:
        experiment = experiment.replace("-", "_")
        if kind is not None and kind != experiment:
            raise ConfigError(f"config is for {kind!r}, not {experiment!r}",
                              line=lines.get(("experiment", "kind")))
        kind = experiment
    if kind is None:
        raise ConfigError("missing required key [experiment] kind", line=lines.get(("experiment", None)))
    if seed is None:
        if "seed" not in exp:
            raise ConfigError("a seed is required ([experiment] seed or --seed)",
                              line=lines.get(("experiment", None)))
        try:
            seed = int(exp["seed"])
        except ValueError:
            raise ConfigError(f"seed must be an integer, got {exp['seed']!r}",
                              line=lines.get(("experiment", "seed"))) from None
    if seed < 0:
        raise ConfigError("seed must be nonnegative", line=lines.get(("experiment", "seed")))
    name = exp.get("name", kind)
    if not re.fullmatch(r"[A-Za-z0-9_.-]+", name):
        raise ConfigError(f"name {name!r} must be a plain file stem", line=lines.get(("experiment", "name")))
    return ExperimentConfig(kind, name, int(seed), sections, lines, path)


def load_config(path: str, experiment: Optional[str] = None, seed: Optional[int] = None) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, path, experiment, seed)
