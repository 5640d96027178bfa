"""YAML run configurations validated against the JSON schemas in ``app/schema``."""

from __future__ import annotations

import json
import logging
import os
from typing import Any, Iterable, Mapping, Optional

import yaml
from jsonschema import Draft7Validator, RefResolver
from jsonschema.exceptions import best_match

from app.errors import ConfigError

logger = logging.getLogger(__name__)

SCHEMA_DIR = os.path.join(os.path.dirname(__file__), "schema")


def rewrite_refs(obj, schema_dir_uri):
    """Recursively rewrite relative $ref values to file URIs."""
    if isinstance(obj, dict):
        new_obj = {}
        for k, v in obj.items():
            if k == "$ref" and isinstance(v, str) and not v.startswith(("http", "file://", "#")):
                new_obj[k] = schema_dir_uri + v
            else:
                new_obj[k] = rewrite_refs(v, schema_dir_uri)
        return new_obj
    if isinstance(obj, list):
        return [rewrite_refs(i, schema_dir_uri) for i in obj]
    return obj


def build_schema_store() -> dict[str, dict]:
    store = {}
    for sub in ("", "subtypes"):
        directory = os.path.join(SCHEMA_DIR, sub)
        if not os.path.isdir(directory):
            continue
        for fname in sorted(os.listdir(directory)):
            if fname.endswith(".json"):
                with open(os.path.join(directory, fname), "r") as f:
                    store[f"{sub}/{fname}" if sub else fname] = json.load(f)
    return store


def load_schema(schema_name: str) -> dict:
    path = os.path.join(SCHEMA_DIR, f"{schema_name}.json")
    if not os.path.exists(path):
        raise ConfigError(f"schema {schema_name} not found")
    with open(path, "r") as f:
        return json.load(f)


def validator_for(schema_name: str) -> Draft7Validator:
    schema_dir_uri = f"file://{os.path.abspath(SCHEMA_DIR)}/"
    store = {schema_dir_uri + k: rewrite_refs(v, schema_dir_uri) for k, v in build_schema_store().items()}
    schema = rewrite_refs(load_schema(schema_name), schema_dir_uri)
    resolver = RefResolver(base_uri=schema_dir_uri, referrer=schema, store=store)
    return Draft7Validator(schema, resolver=resolver)


def validate_config(data: Mapping, schema_name: str) -> None:
    error = best_match(validator_for(schema_name).iter_errors(dict(data)))
    if error is not None:
        where = ".".join(str(p) for p in error.absolute_path) or "<root>"
        raise ConfigError(f"{schema_name} config invalid at {where}: {error.message}")


def load_yaml(path: str) -> dict:
    try:
        with open(path, "r") as f:
            data = yaml.safe_load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping, got {type(data).__name__}")
    return data


def parse_overrides(pairs: Optional[Iterable[str]]) -> dict:
    """``KEY=VALUE`` strings to a mapping; values are read as YAML scalars."""
    out = {}
    for pair in pairs or ():
        key, sep, value = pair.partition("=")
        if not sep or not key:
            raise ConfigError(f"override {pair!r} is not KEY=VALUE")
        out[key.strip()] = yaml.safe_load(value)
    return out


def load_config(
    path: Optional[str],
    schema_name: str,
    overrides: Optional[Mapping[str, Any]] = None,
) -> dict:
    """Config file merged with command-line overrides, then validated."""
    data = load_yaml(path) if path else {}
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value
    validate_config(data, schema_name)
    logger.debug("%s config: %s", schema_name, data)
    return data


__all__ = [
    "SCHEMA_DIR",
    "rewrite_refs",
    "build_schema_store",
    "load_schema",
    "validator_for",
    "validate_config",
    "load_yaml",
    "parse_overrides",
    "load_config",
]
