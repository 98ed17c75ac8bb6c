"""Checkpoint archives.

One uncompressed zip holding ``metadata.json`` plus one raw little-endian
array per tensor under ``tensors/<canonical name>``. Entry order, timestamps
and JSON formatting are fixed so that save -> load -> save reproduces the
same bytes.
"""
import hashlib
import io
import json
import logging
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from pydantic import ValidationError as PydanticValidationError

from codedehaze.exceptions.errors import CheckpointFormatError, CheckpointNotFoundError
from codedehaze.schemas.checkpoint import FORMAT_VERSION, CheckpointMetadata, TensorEntry
from codedehaze.utils.error_handler import handle_io_errors

logger = logging.getLogger(__name__)

METADATA_NAME = "metadata.json"
TENSOR_PREFIX = "tensors/"
_ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)


@dataclass
class CheckpointPayload:
    metadata: CheckpointMetadata
    tensors: dict[str, torch.Tensor] = field(default_factory=dict)


def _to_little_endian(tensor: torch.Tensor) -> np.ndarray:
    array = tensor.detach().cpu().contiguous().numpy()
    return array.astype(array.dtype.newbyteorder("<"), copy=False)


def pack_optimizer(name: str, optimizer: torch.optim.Optimizer) -> tuple[dict, dict[str, torch.Tensor]]:
    """Split an optimizer state dict into JSON-able groups and named tensors."""
    state = optimizer.state_dict()
    tensors: dict[str, torch.Tensor] = {}
    scalars: dict[str, dict[str, float]] = {}
    for index, slot in state["state"].items():
        for key, value in slot.items():
            if torch.is_tensor(value):
                tensors[f"optim.{name}.{index}.{key}"] = value
            else:
                scalars.setdefault(str(index), {})[key] = value
    groups = json.loads(json.dumps(state["param_groups"]))
    return {"param_groups": groups, "scalars": scalars}, tensors


def unpack_optimizer(name: str, optimizer: torch.optim.Optimizer, meta: dict, tensors: dict[str, torch.Tensor]) -> None:
    state: dict[int, dict] = {}
    prefix = f"optim.{name}."
    for key, value in tensors.items():
        if not key.startswith(prefix):
            continue
        index, slot_key = key[len(prefix):].split(".", 1)
        state.setdefault(int(index), {})[slot_key] = value.clone()
    for index, slot in meta.get("scalars", {}).items():
        state.setdefault(int(index), {}).update(slot)
    optimizer.load_state_dict({"state": state, "param_groups": meta["param_groups"]})


class CheckpointRepository:
    def __init__(self, path: str | Path):
        self.path = Path(path)

    @handle_io_errors
    def save(self, payload: CheckpointPayload) -> str:
        """Write the archive and return its checkpoint id."""
        names = sorted(payload.tensors)
        arrays = {name: _to_little_endian(payload.tensors[name]) for name in names}
        payload.metadata.tensors = [
            TensorEntry(name=name, dtype=arrays[name].dtype.str, shape=list(arrays[name].shape)) for name in names
        ]
        metadata = json.dumps(payload.metadata.model_dump(mode="json"), indent=2, sort_keys=True)

        buffer = io.BytesIO()
        with zipfile.ZipFile(buffer, "w", compression=zipfile.ZIP_STORED) as archive:
            archive.writestr(zipfile.ZipInfo(METADATA_NAME, date_time=_ZIP_EPOCH), metadata.encode("utf-8"))
            for name in names:
                archive.writestr(zipfile.ZipInfo(TENSOR_PREFIX + name, date_time=_ZIP_EPOCH), arrays[name].tobytes())
        data = buffer.getvalue()

        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_bytes(data)
        checkpoint_id = hashlib.sha256(data).hexdigest()[:12]
        logger.info(f"Saved {payload.metadata.stage} checkpoint {checkpoint_id} at step {payload.metadata.step} to {self.path}")
        return checkpoint_id

    @handle_io_errors
    def load(self) -> CheckpointPayload:
        if not self.path.is_file():
            raise CheckpointNotFoundError(str(self.path))
        try:
            with zipfile.ZipFile(self.path, "r") as archive:
                metadata = CheckpointMetadata.model_validate_json(archive.read(METADATA_NAME))
                if metadata.format_version != FORMAT_VERSION:
                    raise CheckpointFormatError(
                        f"Unsupported checkpoint format {metadata.format_version}",
                        path=str(self.path),
                    )
                tensors = {}
                for entry in metadata.tensors:
                    raw = archive.read(TENSOR_PREFIX + entry.name)
                    array = np.frombuffer(raw, dtype=np.dtype(entry.dtype)).reshape(entry.shape)
                    tensors[entry.name] = torch.from_numpy(array.astype(array.dtype.newbyteorder("="), copy=True))
        except (zipfile.BadZipFile, KeyError, ValueError, PydanticValidationError) as exc:
            raise CheckpointFormatError(f"Corrupt checkpoint: {exc}", path=str(self.path)) from exc
        return CheckpointPayload(metadata=metadata, tensors=tensors)

    def checkpoint_id(self) -> str:
        if not self.path.is_file():
            raise CheckpointNotFoundError(str(self.path))
        return hashlib.sha256(self.path.read_bytes()).hexdigest()[:12]
