"""Checkpoint archive format.

A checkpoint is a single zip archive:

* ``manifest.json``: format version, profile fields, module list, the shape
  and dtype of every saved array, the training step/epoch counters, and
  optimizer hyperparameters when optimizer state is included.
* ``params.npz``: every model parameter and buffer as a named array.
* ``optim.npz``: optimizer moment arrays (``<idx>.exp_avg`` etc.), present
  only when saved with an optimizer.

Loading validates every array shape against the manifest and every manifest
shape against the model; mismatches raise ``CheckpointError`` rather than
silently truncating. A full save/load round trip restores training exactly:
parameters, moments, and counters.
"""

from __future__ import annotations

import io
import json
import zipfile
from dataclasses import asdict
from pathlib import Path

import numpy as np
import torch

from ..errors import CheckpointError
from ..profiles import EncoderConfig, ScaleProfile
from .network import TextHierNet

FORMAT_VERSION = 1


def _state_arrays(model: TextHierNet) -> dict:
    return {
        name: tensor.detach().cpu().numpy()
        for name, tensor in model.state_dict().items()
    }


def save_checkpoint(
    path: str | Path,
    model: TextHierNet,
    optimizer: torch.optim.Optimizer | None = None,
    step: int = 0,
    epoch: int = 0,
    extra: dict | None = None,
) -> Path:
    path = Path(path)
    arrays = _state_arrays(model)
    manifest = {
        "format_version": FORMAT_VERSION,
        "profile": asdict(model.profile),
        "modules": sorted({name.split(".")[0] for name in arrays}),
        "shapes": {k: list(v.shape) for k, v in arrays.items()},
        "dtypes": {k: str(v.dtype) for k, v in arrays.items()},
        "step": int(step),
        "epoch": int(epoch),
        "self_prompting": {
            "use_refiner": model.self_prompting.use_refiner,
            "learned_tokens": model.self_prompting.learned_tokens,
        },
        "extra": extra or {},
    }

    optim_arrays: dict[str, np.ndarray] = {}
    if optimizer is not None:
        sd = optimizer.state_dict()
        groups = []
        for group in sd["param_groups"]:
            groups.append({k: v for k, v in group.items()})
        steps = {}
        for idx, state in sd["state"].items():
            for key, value in state.items():
                if isinstance(value, torch.Tensor) and value.dim() > 0:
                    optim_arrays[f"{idx}.{key}"] = value.detach().cpu().numpy()
                else:
                    steps[f"{idx}.{key}"] = float(value)
        manifest["optimizer"] = {
            "type": type(optimizer).__name__,
            "param_groups": groups,
            "scalars": steps,
            "shapes": {k: list(v.shape) for k, v in optim_arrays.items()},
        }

    with zipfile.ZipFile(path, "w", zipfile.ZIP_DEFLATED) as zf:
        zf.writestr("manifest.json", json.dumps(manifest, indent=1))
        buf = io.BytesIO()
        np.savez(buf, **arrays)
        zf.writestr("params.npz", buf.getvalue())
        if optim_arrays:
            buf = io.BytesIO()
            np.savez(buf, **optim_arrays)
            zf.writestr("optim.npz", buf.getvalue())
    return path


def read_manifest(path: str | Path) -> dict:
    try:
        with zipfile.ZipFile(path) as zf:
            return json.loads(zf.read("manifest.json"))
    except (zipfile.BadZipFile, KeyError, json.JSONDecodeError, OSError) as exc:
        raise CheckpointError(f"unreadable checkpoint {path}: {exc}") from exc


def _profile_from_manifest(manifest: dict) -> ScaleProfile:
    raw = dict(manifest["profile"])
    raw["encoder"] = EncoderConfig(**raw["encoder"])
    return ScaleProfile(**raw)


def load_checkpoint(
    path: str | Path,
    model: TextHierNet | None = None,
    optimizer: torch.optim.Optimizer | None = None,
) -> tuple[TextHierNet, dict]:
    """Load a checkpoint; builds the model from the manifest when not given.

    Returns (model, manifest). When ``optimizer`` is provided its state is
    restored in place (moments, steps, hyperparameters).
    """
    manifest = read_manifest(path)
    if manifest.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint format {manifest.get('format_version')}"
        )
    if model is None:
        sp = manifest.get("self_prompting", {})
        model = TextHierNet(
            _profile_from_manifest(manifest),
            use_refiner=sp.get("use_refiner", True),
            learned_tokens=sp.get("learned_tokens", False),
        )

    with zipfile.ZipFile(path) as zf:
        with zf.open("params.npz") as fh:
            arrays = dict(np.load(io.BytesIO(fh.read())))

    shapes = manifest["shapes"]
    if set(arrays) != set(shapes):
        missing = set(shapes) ^ set(arrays)
        raise CheckpointError(f"array/manifest name mismatch: {sorted(missing)[:5]}")
    state = model.state_dict()
    if set(state) != set(arrays):
        missing = set(state) ^ set(arrays)
        raise CheckpointError(f"model/checkpoint name mismatch: {sorted(missing)[:5]}")
    new_state = {}
    for name, arr in arrays.items():
        if list(arr.shape) != shapes[name]:
            raise CheckpointError(
                f"{name}: stored shape {list(arr.shape)} != manifest {shapes[name]}"
            )
        if list(arr.shape) != list(state[name].shape):
            raise CheckpointError(
                f"{name}: checkpoint shape {list(arr.shape)} != model "
                f"{list(state[name].shape)}"
            )
        new_state[name] = torch.from_numpy(arr.copy())
    model.load_state_dict(new_state)

    if optimizer is not None:
        opt_meta = manifest.get("optimizer")
        if opt_meta is None:
            raise CheckpointError("checkpoint has no optimizer state")
        with zipfile.ZipFile(path) as zf:
            with zf.open("optim.npz") as fh:
                opt_arrays = dict(np.load(io.BytesIO(fh.read())))
        state_by_idx: dict[int, dict] = {}
        for key, arr in opt_arrays.items():
            idx, field = key.split(".", 1)
            state_by_idx.setdefault(int(idx), {})[field] = torch.from_numpy(arr.copy())
        for key, value in opt_meta["scalars"].items():
            idx, field = key.split(".", 1)
            state_by_idx.setdefault(int(idx), {})[field] = torch.tensor(value)
        optimizer.load_state_dict(
            {"state": state_by_idx, "param_groups": opt_meta["param_groups"]}
        )
    return model, manifest
