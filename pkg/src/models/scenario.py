"""
Scenario file reader/writer
Format: flat UTF-8 key=value lines, '#' starts a comment, keys are ScenarioConfig field names.
Several pairs may share a line when separated by commas.
"""

from pathlib import Path
from typing import Any, Dict, Union

from models.domain import ScenarioConfig, Strategy, build_config
from models.errors import ScenarioParseError


def load_scenario(text: str) -> ScenarioConfig:
    """
    Parse scenario text into a validated config; omitted keys take benchmark defaults

    Raises:
        ScenarioParseError: malformed line, unknown or repeated key (carries the line number)
        ScenarioRangeError: value outside its range (carries the key)
    """
    fields = ScenarioConfig.model_fields
    values: Dict[str, Any] = {}

    for line_no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        for pair in line.split(","):
            pair = pair.strip()
            if not pair:
                continue
            if "=" not in pair:
                raise ScenarioParseError(f"expected key=value, got '{pair}'", line_no)
            key, value = (part.strip() for part in pair.split("=", 1))
            if key not in fields:
                raise ScenarioParseError(f"unknown key '{key}'", line_no)
            if key in values:
                raise ScenarioParseError(f"duplicate key '{key}'", line_no)
            if not value:
                raise ScenarioParseError(f"missing value for '{key}'", line_no)
            values[key] = value

    return build_config(values)


def load_scenario_file(path: Union[str, Path]) -> ScenarioConfig:
    return load_scenario(Path(path).read_text(encoding="utf-8"))


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, Strategy):
        return value.value
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_scenario(config: ScenarioConfig) -> str:
    """Serialize every field, one key per line; load_scenario(dump_scenario(c)) == c"""
    lines = [f"{name}={_format_value(getattr(config, name))}" for name in ScenarioConfig.model_fields]
    return "\n".join(lines) + "\n"
