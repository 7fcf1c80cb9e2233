"""
Base repository pattern for file-backed persistence.

Repositories own a root directory and translate between pydantic models
and files on disk. Services never touch the filesystem directly.
"""

import json
from abc import ABC
from pathlib import Path
from typing import Any, Generic, TypeVar

from pydantic import BaseModel

ModelType = TypeVar("ModelType", bound=BaseModel)


class BaseRepository(ABC):
    """
    Abstract base repository bound to a root directory.

    Relative paths handed to a repository are resolved against its root.

    Usage:
        class ResultsRepository(BaseRepository):
            def write_csv(self, name: str, frame: DataFrame) -> Path:
                path = self.resolve(name)
                ...
    """

    def __init__(self, root: Path | str = ".") -> None:
        """
        Initialize repository with a root directory.

        Args:
            root: Directory that relative paths are resolved against
        """
        self._root = Path(root)

    @property
    def root(self) -> Path:
        """Root directory."""
        return self._root

    def resolve(self, path: Path | str) -> Path:
        """Resolve a path against the root."""
        path = Path(path)
        return path if path.is_absolute() else self._root / path

    def ensure_root(self) -> Path:
        """Create the root directory if needed."""
        self._root.mkdir(parents=True, exist_ok=True)
        return self._root


class JsonRepository(BaseRepository, Generic[ModelType]):
    """
    Repository storing one pydantic model per JSON file.

    Type Parameters:
        ModelType: The pydantic model stored in the files
    """

    model_class: type[ModelType]

    def read_raw(self, path: Path | str) -> dict[str, Any]:
        """Read a JSON object from a file."""
        with self.resolve(path).open(encoding="utf-8") as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ValueError(f"{path} does not contain a JSON object")
        return data

    def load(self, path: Path | str) -> ModelType:
        """Load and validate a model from a file."""
        return self.model_class.model_validate(self.read_raw(path))

    def save(self, model: ModelType, path: Path | str) -> Path:
        """Write a model as indented JSON and return the file path."""
        target = self.resolve(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        write_json(target, model.model_dump(mode="json", by_alias=True))
        return target


def write_json(path: Path, data: Any) -> None:
    """Write data as indented, key-sorted JSON with a trailing newline."""
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
