"""
Run manifests: a flat KEY=value text file written next to every CLI output.

The file is dotenv-compatible, so it can be read back with
python-dotenv's `dotenv_values` and passed to the CLI as `--config` to
reproduce a run. Keys:

    command, version, seed, duration_seconds
    input.<name>, output.<name>     paths
    <parameter>                     every resolved parameter
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Union

from dotenv import dotenv_values

__all__ = ["RunManifest", "read_config_file", "format_value"]

PathLike = Union[str, Path]

_NEEDS_QUOTES = set(" \t#'\"=\\")


def format_value(value: Any) -> str:
    """Render a value so that dotenv_values returns the same string form."""
    if isinstance(value, bool):
        text = "true" if value else "false"
    elif isinstance(value, float):
        text = repr(value)
    elif value is None:
        text = ""
    else:
        text = str(value)
    if any(c in _NEEDS_QUOTES for c in text):
        escaped = text.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    return text


@dataclass
class RunManifest:
    """
    Attributes:
        command: CLI subcommand name.
        parameters: Resolved parameters (after flags, config file, defaults).
        inputs / outputs: Named file paths.
        seed: Random seed, when the command uses one.
        version: Package version.
        duration_seconds: Wall-clock duration of the run.
    """

    command: str
    version: str
    parameters: Dict[str, Any] = field(default_factory=dict)
    inputs: Dict[str, str] = field(default_factory=dict)
    outputs: Dict[str, str] = field(default_factory=dict)
    seed: Optional[int] = None
    duration_seconds: float = 0.0

    def to_text(self) -> str:
        lines = [
            f"command={format_value(self.command)}",
            f"version={format_value(self.version)}",
        ]
        if self.seed is not None:
            lines.append(f"seed={self.seed}")
        lines.append(f"duration_seconds={self.duration_seconds:.3f}")
        for name in sorted(self.inputs):
            lines.append(f"input.{name}={format_value(self.inputs[name])}")
        for name in sorted(self.outputs):
            lines.append(f"output.{name}={format_value(self.outputs[name])}")
        for name in sorted(self.parameters):
            if name == "seed":
                continue
            lines.append(f"{name}={format_value(self.parameters[name])}")
        return "\n".join(lines) + "\n"

    def write(self, path: PathLike) -> Path:
        path = Path(path)
        path.write_text(self.to_text(), encoding="utf-8")
        return path


def read_config_file(path: PathLike) -> Dict[str, str]:
    """
    Parse a KEY=value config file (or a manifest) into a dict of strings.

    Raises:
        FileNotFoundError: if the file does not exist.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    return {k: v for k, v in dotenv_values(path).items() if v is not None}
