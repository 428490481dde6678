"""File formats.

Point cloud (``*.csv``)
    Header line ``x0,x1,...,x{p-1}`` optionally followed by ``,density``;
    then one comma-separated row per point. Numbers use ``%.17g`` so binary64
    values round-trip exactly.

Cloud metadata (``<cloud>.meta``)
    ``key=value`` lines: ``format``, ``manifold``, ``n``, ``p``, ``seed``,
    ``density``.

Report (``report.txt``)
    One record per row: ``n=<int> h=<float> metric=<name> value=<float>``.
    Verdicts go to ``verdicts.txt`` as ``name=value`` lines and every metric
    gets ``plot_<metric>.dat`` with two whitespace-separated columns (n, value).

Config
    Flat ``key=value`` text; ``#`` starts a comment; ``n_schedule`` is a
    comma-separated list; ``none`` means unset.

Manifest (``manifest.json``)
    Command, argv, config, SHA-256 digest of the canonical JSON of the config,
    seeds, library version, wall time and output files.

All writes go to a temporary file in the target directory followed by
``os.replace``.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
from dataclasses import dataclass, field, fields

import numpy as np

from .errors import FormatError, ValidationError
from .experiments import ConvergenceReport, ExperimentConfig
from .manifolds import PointCloud, get_model

FMT = "%.17g"
CLOUD_FORMAT = "connlap-cloud-1"


def fmt(x):
    return FMT % x


def atomic_write(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_table(header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else fmt(v) for v in row))
    return "\n".join(lines) + "\n"


# ----------------------------------------------------------------------------
# point clouds


def save_cloud(cloud, path):
    """Write a cloud and its ``.meta`` sidecar; returns the written paths."""
    X = cloud.points
    header = [f"x{k}" for k in range(X.shape[1])]
    data = X
    if cloud.density_values is not None:
        header.append("density")
        data = np.c_[X, cloud.density_values]
    atomic_write(path, format_table(header, data.tolist()))
    meta = {
        "format": CLOUD_FORMAT,
        "manifold": cloud.manifold.name if cloud.manifold is not None else "none",
        "n": X.shape[0],
        "p": X.shape[1],
        "seed": "none" if cloud.seed is None else cloud.seed,
        "density": cloud.density,
    }
    atomic_write(path + ".meta", "".join(f"{k}={v}\n" for k, v in meta.items()))
    return [path, path + ".meta"]


def read_key_values(path):
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise FormatError(f"expected key=value in {path}", lineno)
            key, value = line.split("=", 1)
            key = key.strip()
            if not key:
                raise FormatError(f"empty key in {path}", lineno)
            out[key] = value.strip()
    return out


def load_cloud(path):
    """Read a cloud written by :func:`save_cloud` (the sidecar is optional)."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise FormatError(f"{path} is empty", 1)
    header = [h.strip() for h in lines[0].split(",")]
    has_density = header[-1] == "density"
    coords = header[:-1] if has_density else header
    if not coords or coords != [f"x{k}" for k in range(len(coords))]:
        raise FormatError(f"malformed header in {path}: expected x0,x1,...", 1)
    width = len(header)
    rows = []
    for lineno, line in enumerate(lines[1:], 2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != width:
            raise FormatError(f"expected {width} values, found {len(parts)}", lineno)
        try:
            vals = [float(v) for v in parts]
        except ValueError:
            raise FormatError("non-numeric value", lineno) from None
        if not all(math.isfinite(v) for v in vals):
            raise FormatError("non-finite value", lineno)
        rows.append(vals)
    if len(rows) < 2:
        raise FormatError(f"{path} holds fewer than 2 points", len(lines))
    data = np.array(rows)
    points = data[:, :len(coords)]
    density_values = data[:, -1] if has_density else None
    manifold, seed, density = None, None, "uniform"
    meta_path = path + ".meta"
    if os.path.exists(meta_path):
        meta = read_key_values(meta_path)
        if meta.get("manifold", "none") != "none":
            manifold = get_model(meta["manifold"])
        if meta.get("seed", "none") != "none":
            seed = int(meta["seed"])
        density = meta.get("density", "uniform")
        if "n" in meta and int(meta["n"]) != len(points):
            raise FormatError(f"{meta_path} declares n={meta['n']} but {path} has {len(points)} rows")
    try:
        return PointCloud(points, manifold, density_values, seed, density)
    except ValidationError as exc:
        raise FormatError(str(exc)) from None


# ----------------------------------------------------------------------------
# reports


def report_text(report):
    return "".join(f"n={n} h={fmt(h)} metric={m} value={fmt(v)}\n" for n, h, m, v in report.rows)


def save_report(report, directory):
    """Write report.txt, verdicts.txt and one plot file per metric."""
    written = []
    path = os.path.join(directory, "report.txt")
    atomic_write(path, report_text(report))
    written.append(path)
    path = os.path.join(directory, "verdicts.txt")
    atomic_write(path, "".join(f"{k}={v}\n" for k, v in report.verdicts.items()))
    written.append(path)
    for metric in report.metric_names():
        path = os.path.join(directory, f"plot_{metric}.dat")
        atomic_write(path, "".join(f"{n} {fmt(v)}\n" for n, _, v in report.metric(metric)))
        written.append(path)
    return written


def load_report(directory):
    report = ConvergenceReport()
    path = os.path.join(directory, "report.txt")
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = dict(part.split("=", 1) for part in line.split())
                report.add(int(rec["n"]), float(rec["h"]), rec["metric"], float(rec["value"]))
            except (KeyError, ValueError):
                raise FormatError(f"malformed report record in {path}", lineno) from None
    vpath = os.path.join(directory, "verdicts.txt")
    if os.path.exists(vpath):
        report.verdicts = read_key_values(vpath)
    return report


# ----------------------------------------------------------------------------
# configs

_INT_KEYS = {"seed", "eig_count"}
_FLOAT_KEYS = {"alpha", "gamma", "bandwidth_c", "h", "truncation", "h_pca_c", "rel_gap",
               "tolerance", "heat_t", "threshold"}


def parse_config_value(key, raw):
    raw = raw.strip()
    if raw.lower() == "none":
        return None
    try:
        if key == "n_schedule":
            return [int(v) for v in raw.split(",") if v.strip()]
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
    except ValueError:
        raise ValidationError(f"bad value for {key}: {raw!r}") from None
    return raw


def config_keys():
    return [f.name for f in fields(ExperimentConfig)]


def load_config(path, overrides=None):
    """Read a key=value config; ``overrides`` (raw strings) take precedence."""
    if not os.path.exists(path):
        raise ValidationError(f"config file not found: {path}")
    raw = read_key_values(path)
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    values = {}
    for key, value in raw.items():
        if key not in config_keys():
            raise ValidationError(f"unknown config key {key!r} in {path}")
        parsed = parse_config_value(key, value)
        if parsed is not None:
            values[key] = parsed
    return ExperimentConfig.from_dict(values)


def config_text(config):
    lines = []
    for key, value in config.to_dict().items():
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        elif value is None:
            value = "none"
        elif isinstance(value, float):
            value = fmt(value)
        lines.append(f"{key}={value}\n")
    return "".join(lines)


# ----------------------------------------------------------------------------
# manifest


def digest(config):
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


@dataclass
class RunManifest:
    command: str
    argv: list
    config: dict
    seeds: list
    version: str
    wall_time: float
    outputs: list = field(default_factory=list)
    config_digest: str = ""

    def __post_init__(self):
        if not self.config_digest:
            self.config_digest = digest(self.config)

    def verify(self):
        return digest(self.config) == self.config_digest

    def write(self, directory):
        path = os.path.join(directory, "manifest.json")
        atomic_write(path, json.dumps(self.__dict__, indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def read(cls, path):
        with open(path) as fh:
            return cls(**json.load(fh))
