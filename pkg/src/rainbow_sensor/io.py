"""CSV/JSON readers and writers with a deterministic manifest line."""

from __future__ import annotations

import csv
import hashlib
import io
import json
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
import scipy

from . import __version__
from .filterbank import Signal
from .geometry import ConfigError
from .spectral import Spectrum

SPECTRUM_COLUMNS = ("n", "lambda", "tau", "re_omega_rad_s", "im_omega_rad_s", "re_omega_hz", "dominant")


def config_hash(config: Mapping) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=_jsonable)
    return hashlib.sha256(blob.encode()).hexdigest()


def manifest_line(command: str, config: Mapping) -> str:
    return f"# manifest tool=rainbow_sensor version={__version__} command={command} config_sha256={config_hash(config)}"


def manifest(command: str, config: Mapping) -> dict:
    return {
        "tool": "rainbow_sensor",
        "version": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "command": command,
        "config": json.loads(json.dumps(config, default=_jsonable)),
        "config_sha256": config_hash(config),
    }


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def format_csv(header: Sequence[str], rows: Iterable[Sequence], preamble: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    for line in preamble:
        buf.write(line + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def write_output(path, text: str, command: str, config: Mapping) -> None:
    """Write ``text`` to ``path`` (``-`` for stdout) and a ``.manifest.json`` sidecar."""
    if str(path) == "-":
        print(text, end="")
        return
    path = Path(path)
    path.write_text(text)
    sidecar = path.with_name(path.name + ".manifest.json")
    sidecar.write_text(json.dumps(manifest(command, config), indent=2, sort_keys=True) + "\n")


def matrix_csv(matrix: np.ndarray, labels: Sequence, preamble: Sequence[str] = ()) -> str:
    header = ["label"] + [str(l) for l in labels]
    rows = [[labels[i]] + list(matrix[i]) for i in range(len(labels))]
    return format_csv(header, rows, preamble)


def spectrum_rows(spectrum: Spectrum) -> list:
    dom = spectrum.dominant_resonators()
    labels = spectrum.labels or tuple(range(1, spectrum.n + 1))
    return [
        [i + 1, spectrum.lambdas[i], spectrum.taus[i], spectrum.omegas[i].real, spectrum.omegas[i].imag,
         spectrum.frequencies_hz[i], labels[dom[i]]]
        for i in range(spectrum.n)
    ]


def spectrum_csv(spectrum: Spectrum, preamble: Sequence[str] = ()) -> str:
    return format_csv(SPECTRUM_COLUMNS, spectrum_rows(spectrum), preamble)


def spectrum_json(spectrum: Spectrum, extra: Optional[Mapping] = None) -> str:
    data = {
        "labels": list(spectrum.labels),
        "material": spectrum.material.to_dict(),
        "lambdas": spectrum.lambdas.tolist(),
        "taus": spectrum.taus.tolist(),
        "omegas": [[w.real, w.imag] for w in spectrum.omegas],
        "eigenvectors": spectrum.vectors.T.tolist(),
    }
    if extra:
        data.update(extra)
    return json.dumps(data, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _data_lines(path) -> list:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read: {exc.strerror}") from exc
    return [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]


def read_spectrum_csv(path) -> np.ndarray:
    """Complex ``omega_n`` from a spectrum CSV written by :func:`spectrum_csv`."""
    lines = _data_lines(path)
    reader = csv.DictReader(lines)
    try:
        return np.array([complex(float(r["re_omega_rad_s"]), float(r["im_omega_rad_s"])) for r in reader])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(str(path), f"not a spectrum CSV ({exc})") from exc


def read_signal_csv(path) -> Signal:
    """Signal file: first line ``sample_rate_hz=<value>``, then one sample per line."""
    lines = _data_lines(path)
    if not lines or not lines[0].startswith("sample_rate_hz="):
        raise ConfigError(str(path), "first line must be 'sample_rate_hz=<value>'")
    try:
        rate = float(lines[0].split("=", 1)[1])
        samples = [float(ln) for ln in lines[1:]]
    except ValueError as exc:
        raise ConfigError(str(path), str(exc)) from exc
    return Signal(np.array(samples), rate)


def write_signal_csv(signal: Signal, path) -> None:
    body = "\n".join(repr(float(x)) for x in signal.samples)
    Path(path).write_text(f"sample_rate_hz={signal.sample_rate!r}\n{body}\n")


def read_points_csv(path) -> np.ndarray:
    """``x,y,z`` rows (an optional header line is skipped)."""
    lines = _data_lines(path)
    if lines and not _is_number(lines[0].split(",")[0]):
        lines = lines[1:]
    try:
        pts = np.array([[float(v) for v in ln.split(",")] for ln in lines])
    except ValueError as exc:
        raise ConfigError(str(path), str(exc)) from exc
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ConfigError(str(path), "expected x,y,z rows")
    return pts


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True
