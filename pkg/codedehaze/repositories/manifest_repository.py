import json
import logging
from pathlib import Path

import numpy as np
from pydantic import ValidationError as PydanticValidationError

from codedehaze.exceptions.errors import DatasetError, ValidationError
from codedehaze.schemas.haze import Manifest, ManifestEntry
from codedehaze.utils.error_handler import handle_io_errors
from codedehaze.utils.image_io import load_image, save_image

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


class ManifestRepository:
    """
    Paired-image dataset on disk: ``clean/`` and ``hazy/`` PNG folders next to
    a ``manifest.json`` whose paths are relative to the dataset root.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)

    @property
    def manifest_path(self) -> Path:
        return self.root / MANIFEST_NAME

    @classmethod
    def from_manifest_file(cls, path: str | Path) -> "ManifestRepository":
        path = Path(path)
        return cls(path.parent if path.suffix == ".json" else path)

    @handle_io_errors
    def prepare(self) -> None:
        (self.root / "clean").mkdir(parents=True, exist_ok=True)
        (self.root / "hazy").mkdir(parents=True, exist_ok=True)

    def write_pair(self, entry: ManifestEntry, clean: np.ndarray, hazy: np.ndarray) -> None:
        save_image(self.root / entry.clean_path, clean)
        save_image(self.root / entry.hazy_path, hazy)

    @handle_io_errors
    def save_manifest(self, manifest: Manifest) -> Path:
        payload = json.dumps(manifest.model_dump(mode="json"), indent=2, sort_keys=True)
        self.manifest_path.write_text(payload + "\n", encoding="utf-8")
        return self.manifest_path

    @handle_io_errors
    def load_manifest(self) -> Manifest:
        if not self.manifest_path.is_file():
            raise DatasetError("Manifest file not found", path=str(self.manifest_path))
        try:
            return Manifest.model_validate_json(self.manifest_path.read_text(encoding="utf-8"))
        except PydanticValidationError as exc:
            raise ValidationError(
                "Malformed manifest",
                field="manifest",
                details={"errors": exc.errors(include_url=False)},
            ) from exc

    def load_pair(self, entry: ManifestEntry) -> tuple[np.ndarray, np.ndarray]:
        """Return (clean, hazy) float arrays for one entry."""
        return load_image(self.root / entry.clean_path), load_image(self.root / entry.hazy_path)

    def load_all(self, manifest: Manifest | None = None) -> tuple[list[np.ndarray], list[np.ndarray], list[str]]:
        manifest = manifest or self.load_manifest()
        cleans, hazies, names = [], [], []
        for entry in manifest.entries:
            clean, hazy = self.load_pair(entry)
            cleans.append(clean)
            hazies.append(hazy)
            names.append(entry.hazy_path)
        logger.info(f"Loaded {len(names)} pairs from {self.root}")
        return cleans, hazies, names
