"""Checkpoint container.

A checkpoint is a NumPy ``.npz`` archive. Every model weight is stored under
``model/<parameter name>`` and every Adam moment under
``optim/<parameter name>/<field>``. The entry ``__manifest__`` is a JSON
string with these keys:

``format``
    container version (currently 1)
``step``
    number of optimizer steps taken
``config_hash``
    digest of the model config the weights belong to
``run_config``
    the full run config in ``key = value`` form
``arrays``
    name -> {"shape", "dtype"} for every stored array
``optimizer``
    Adam hyperparameters per parameter group
``rng``
    torch CPU generator state is stored as the array ``rng/torch``
"""

from __future__ import annotations

import json
import zipfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from aiosod import config as cfgmod

FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    step: int
    config: cfgmod.RunConfig
    model: dict[str, np.ndarray]
    optimizer: dict[str, np.ndarray]
    optimizer_groups: list[dict]
    rng: np.ndarray | None
    manifest: dict


def _numpy(t: torch.Tensor) -> np.ndarray:
    return t.detach().cpu().numpy().copy()


def checkpoint_save(path, model, optimizer, step: int, run_config: cfgmod.RunConfig) -> Path:
    path = Path(path)
    arrays: dict[str, np.ndarray] = {}
    for name, tensor in model.state_dict().items():
        arrays[f"model/{name}"] = _numpy(tensor)
    names = [n for n, _ in model.named_parameters()]
    groups = []
    if optimizer is not None:
        params = [p for g in optimizer.param_groups for p in g["params"]]
        by_id = {id(p): n for n, p in model.named_parameters()}
        for p in params:
            state = optimizer.state.get(p, {})
            for field, value in sorted(state.items()):
                arrays[f"optim/{by_id[id(p)]}/{field}"] = _numpy(torch.as_tensor(value))
        for g in optimizer.param_groups:
            groups.append({k: (list(v) if isinstance(v, tuple) else v) for k, v in g.items() if k != "params"}
                          | {"params": [by_id[id(p)] for p in g["params"]]})
    arrays["rng/torch"] = torch.get_rng_state().numpy().copy()
    manifest = {
        "format": FORMAT_VERSION,
        "step": int(step),
        "config_hash": run_config.model.config_hash(),
        "run_config": cfgmod.dumps(run_config),
        "parameters": names,
        "arrays": {k: {"shape": list(v.shape), "dtype": str(v.dtype)} for k, v in arrays.items()},
        "optimizer": groups,
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    _write_npz(tmp, {"__manifest__": np.array(json.dumps(manifest, sort_keys=True)), **arrays})
    tmp.replace(path)
    return path


def _write_npz(path: Path, arrays: dict[str, np.ndarray]) -> None:
    """Like ``np.savez`` but with fixed zip timestamps, so equal states give equal bytes."""
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, value in arrays.items():
            info = zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0))
            with zf.open(info, "w", force_zip64=True) as fh:
                np.lib.format.write_array(fh, np.asanyarray(value), allow_pickle=False)


def checkpoint_load(path, expect: cfgmod.ModelConfig | None = None) -> Checkpoint:
    """Read a checkpoint; refuse it if its format or model config does not match."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    with np.load(path, allow_pickle=False) as data:
        if "__manifest__" not in data:
            raise CheckpointError(f"{path} has no manifest; not an aiosod checkpoint")
        manifest = json.loads(str(data["__manifest__"]))
        arrays = {k: data[k] for k in data.files if k != "__manifest__"}
    if manifest.get("format") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: checkpoint format {manifest.get('format')} "
                              f"is not the supported version {FORMAT_VERSION}")
    run_config = cfgmod.loads(manifest["run_config"])
    stored = manifest["config_hash"]
    if run_config.model.config_hash() != stored:
        raise CheckpointError(f"{path}: embedded config does not match its recorded hash {stored}")
    if expect is not None and expect.config_hash() != stored:
        raise CheckpointError(
            f"{path}: weights were saved for model config {stored}, but the requested config hashes to "
            f"{expect.config_hash()}; rebuild with the checkpoint's config or retrain")
    for name, meta in manifest["arrays"].items():
        a = arrays.get(name)
        if a is None or list(a.shape) != meta["shape"] or str(a.dtype) != meta["dtype"]:
            raise CheckpointError(f"{path}: array {name!r} is missing or does not match the manifest")
    return Checkpoint(
        step=int(manifest["step"]),
        config=run_config,
        model={k[len("model/"):]: v for k, v in arrays.items() if k.startswith("model/")},
        optimizer={k[len("optim/"):]: v for k, v in arrays.items() if k.startswith("optim/")},
        optimizer_groups=manifest["optimizer"],
        rng=arrays.get("rng/torch"),
        manifest=manifest,
    )


def restore(ckpt: Checkpoint, model, optimizer=None) -> None:
    """Load weights (and optimizer moments) in place."""
    state = {k: torch.from_numpy(v.copy()) for k, v in ckpt.model.items()}
    model.load_state_dict(state, strict=True)
    if optimizer is None:
        return
    by_name = dict(model.named_parameters())
    for group, saved in zip(optimizer.param_groups, ckpt.optimizer_groups):
        for key, value in saved.items():
            if key != "params":
                group[key] = tuple(value) if isinstance(group.get(key), tuple) else value
    optimizer.state.clear()
    for key, value in ckpt.optimizer.items():
        name, _, field = key.rpartition("/")
        p = by_name[name]
        t = torch.from_numpy(value.copy())
        optimizer.state[p][field] = t if field == "step" else t.to(p.dtype)
    if ckpt.rng is not None:
        torch.set_rng_state(torch.from_numpy(ckpt.rng.copy()))
