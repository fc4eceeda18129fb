"""Deterministic embedding of the effective run config into artifacts."""

import json


def config_json(config: dict) -> str:
    return json.dumps(config, sort_keys=True, separators=(",", ":"))


def config_comment(config: dict) -> str:
    """One `# config: {...}` line prepended to CSV artifacts."""
    return "# config: " + config_json(config) + "\n"
