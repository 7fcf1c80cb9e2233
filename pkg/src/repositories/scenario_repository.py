"""
Scenario repository: loads scenario files, applies command-line overrides,
hashes scenario content and reads user-supplied schedule files.
"""

import copy
import hashlib
import json
from pathlib import Path
from typing import Any

import structlog
from pydantic import ValidationError

from src.models.scenario import Scenario
from src.models.schedule import ScheduleMode
from src.repositories.base import JsonRepository

logger = structlog.get_logger(__name__)


class ScenarioError(Exception):
    """Base exception for scenario loading errors."""

    pass


class ScenarioNotFoundError(ScenarioError):
    """Raised when a scenario or schedule file does not exist."""

    pass


class ScenarioSchemaError(ScenarioError):
    """Raised when a scenario fails validation; carries JSON-pointer paths."""

    def __init__(self, errors: list[tuple[str, str]]) -> None:
        self.errors = errors
        lines = "; ".join(f"{pointer or '/'}: {message}" for pointer, message in errors)
        super().__init__(f"Invalid scenario: {lines}")


class ManifestMismatchError(ScenarioError):
    """Raised when a manifest's scenario hash differs from the file on disk."""

    pass


def content_hash(data: bytes) -> str:
    """Git-style blob hash: sha1 over "blob <len>\\0" followed by the bytes."""
    header = f"blob {len(data)}\0".encode()
    return hashlib.sha1(header + data).hexdigest()


def parse_override(override: str) -> tuple[list[str], Any]:
    """
    Split "a.b.c=value" into a key path and a value.

    The value is parsed as JSON; anything that is not valid JSON stays a string,
    so `controller.epsilon=auto_dynamic` and `dynamics.alpha=0.5` both work.
    """
    key, sep, raw = override.partition("=")
    key = key.strip()
    if not sep or not key:
        raise ScenarioSchemaError([("", f"Override {override!r} is not of the form key=value")])
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.split("."), value


def apply_overrides(data: dict[str, Any], overrides: list[str]) -> dict[str, Any]:
    """Return a copy of data with dotted-path overrides applied in order."""
    result = copy.deepcopy(data)
    for override in overrides:
        keys, value = parse_override(override)
        node: Any = result
        for depth, key in enumerate(keys[:-1]):
            child = node.get(key) if isinstance(node, dict) else None
            if child is None:
                child = {}
                node[key] = child
            elif not isinstance(child, dict):
                pointer = "/" + "/".join(keys[: depth + 1])
                raise ScenarioSchemaError([(pointer, "cannot override inside a non-object")])
            node = child
        node[keys[-1]] = value
        logger.debug("override_applied", key=".".join(keys), value=value)
    return result


def json_pointer(loc: tuple[int | str, ...]) -> str:
    """Turn a pydantic error location into a JSON pointer."""
    return "/" + "/".join(str(part).replace("~", "~0").replace("/", "~1") for part in loc)


_UNION_TAGS = frozenset({"float", "int", "str", "bool", "list", "dict", "none"})


def _is_union_tag(part: int | str) -> bool:
    return isinstance(part, str) and ("[" in part or part in _UNION_TAGS)


def document_location(loc: tuple[int | str, ...], data: Any) -> tuple[int | str, ...]:
    """
    Keep the parts of a pydantic error location that address the input document.

    Pydantic inserts union-member tags into locations; they are dropped by
    walking the input. Below a scalar every remaining part is a tag; a key
    missing from an object is kept (a missing field) unless it looks like one.
    """
    kept: list[int | str] = []
    node: Any = data
    for part in loc:
        if isinstance(node, dict):
            if part in node:
                kept.append(part)
                node = node[part]
            elif not _is_union_tag(part):
                kept.append(part)
                node = None
        elif isinstance(node, list):
            if isinstance(part, int) and 0 <= part < len(node):
                kept.append(part)
                node = node[part]
        elif node is None and not _is_union_tag(part):
            kept.append(part)
    return tuple(kept)


def schema_error(exc: ValidationError, data: Any = None) -> ScenarioSchemaError:
    """Convert a pydantic ValidationError on `data` into a ScenarioSchemaError."""
    errors = []
    for err in exc.errors():
        if data is None:
            loc = tuple(part for part in err["loc"] if not _is_union_tag(part))
        else:
            loc = document_location(err["loc"], data)
        errors.append((json_pointer(loc), err["msg"]))
    return ScenarioSchemaError(errors)


class ScenarioRepository(JsonRepository[Scenario]):
    """
    Repository for scenario files.

    Paths are resolved against the root; schedule files named inside a
    scenario are resolved against the scenario's own directory.
    """

    model_class = Scenario

    def read_bytes(self, path: Path | str) -> bytes:
        """Raw scenario bytes."""
        target = self.resolve(path)
        if not target.is_file():
            raise ScenarioNotFoundError(f"Scenario file not found: {target}")
        return target.read_bytes()

    def hash(self, path: Path | str) -> str:
        """Content hash of a scenario file."""
        return content_hash(self.read_bytes(path))

    def load(self, path: Path | str, overrides: list[str] | None = None) -> Scenario:
        """
        Load a scenario, apply overrides and validate it.

        Raises:
            ScenarioNotFoundError: If the file does not exist
            ScenarioSchemaError: If the JSON is malformed or fails validation
        """
        raw = self.read_bytes(path)
        try:
            data = json.loads(raw)
        except json.JSONDecodeError as e:
            raise ScenarioSchemaError([("", f"Malformed JSON: {e}")]) from e
        if not isinstance(data, dict):
            raise ScenarioSchemaError([("", "Scenario must be a JSON object")])

        data = apply_overrides(data, overrides or [])
        try:
            scenario = Scenario.model_validate(data)
        except ValidationError as e:
            raise schema_error(e, data) from e

        logger.info(
            "scenario_loaded",
            path=str(path),
            name=scenario.name,
            n=scenario.n,
            overrides=len(overrides or []),
        )
        return scenario

    def schedule_sets(
        self, scenario: Scenario, scenario_path: Path | str
    ) -> list[list[int]] | None:
        """
        Read the activation sets of a file-mode schedule.

        Each line lists the 1-based buses active at that step, separated by
        whitespace; an empty line means no bus updates.

        Returns:
            One list per step, or None when the schedule is not file-based
        """
        if scenario.schedule.mode != ScheduleMode.FILE or scenario.schedule.path is None:
            return None

        path = Path(scenario.schedule.path)
        if not path.is_absolute():
            path = self.resolve(scenario_path).parent / path
        if not path.is_file():
            raise ScenarioNotFoundError(f"Schedule file not found: {path}")

        sets: list[list[int]] = []
        for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
            try:
                sets.append([int(token) for token in line.split()])
            except ValueError as e:
                raise ScenarioSchemaError(
                    [("/schedule/path", f"{path.name} line {lineno}: {e}")]
                ) from e
        return sets
