"""File formats: JSON documents for structured results, CSV for tables.

Floats are written with ``repr``, the shortest string that round-trips
exactly, so rereading a file reproduces every value bit for bit.
"""

import json
import os

import numpy as np

from ._validation import check_density, check_operator, is_hermitian
from .exceptions import InvalidParameterError
from .models import model_from_config
from .operators import make_annihilation, operator_from_dict, operator_to_dict


class ConfigError(InvalidParameterError):
    """Unreadable or malformed input document."""


def read_json(path):
    """Parse a JSON file; syntax errors carry the line and column."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from exc


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def write_json(path, data):
    """Write ``data`` deterministically (sorted keys, fixed indentation)."""
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(_plain(data), fh, indent=1, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def density_to_dict(rho):
    return operator_to_dict(rho)


def read_density(path):
    data = read_json(path)
    try:
        rho = operator_from_dict(data.get("rho", data))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: not a density operator document ({exc})") from exc
    return check_density(rho, atol=1e-6)


def read_model(spec):
    """Model from a preset name or a JSON file holding ``{"model", "params", "n_levels"}``."""
    if os.path.exists(str(spec)):
        data = read_json(spec)
        return model_from_config(data.get("model_config", data))
    return model_from_config({"model": spec})


def perturbation_operator(spec, n):
    """Hermitian perturbation from a document.

    Accepts an explicit operator (``{"n", "re", "im"}``, optionally under
    ``"operator"``) or a named bosonic direction ``{"kind": ...}`` with kinds
    ``drive`` (``i(a† - a)``), ``momentum``, ``position`` and ``number``.
    """
    if "kind" in spec:
        a = make_annihilation(n)
        ad = a.conj().T
        kinds = {
            "drive": 1j * (ad - a),
            "momentum": -1j * (a - ad) / np.sqrt(2.0),
            "position": (a + ad) / np.sqrt(2.0),
            "number": ad @ a,
        }
        if spec["kind"] not in kinds:
            raise ConfigError(f"unknown perturbation kind {spec['kind']!r}; known: {sorted(kinds)}")
        op = float(spec.get("scale", 1.0)) * kinds[spec["kind"]]
    else:
        op = operator_from_dict(spec.get("operator", spec))
    op = check_operator(op, n)
    if not is_hermitian(op, atol=1e-10):
        raise ConfigError("perturbation operator is not Hermitian")
    return op


def read_perturbation(path, n):
    return perturbation_operator(read_json(path), n)
