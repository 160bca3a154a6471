"""Container files for pilot tensors, datasets and trained models.

Every container is an uncompressed ``.npz`` archive. Complex arrays are
stored as little-endian float64 with a trailing axis of length 2 holding
``(re, im)``; real arrays are little-endian float64 or int64. The archive
member ``header`` is a JSON text with the format name, version, config and
data hashes, the seeds and the full config.

Writes go to a temporary file in the target directory followed by an atomic
rename, so a reader never sees a partial container.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .codec import TargetCodec
from .config import RunConfig
from .gbdt import GBDTRegressor, Tree
from .pipeline import LABEL_FIELDS, Dataset, GLPrecoder, GlModel
from .rft import RFTSelector
from .saab import SaabStage, SaabTransform
from .sounding import ReceivedPilotTensor

FORMAT_VERSION = 1


class ContainerError(ValueError):
    """Missing, corrupt or incompatible container file."""


class HashMismatchError(ContainerError):
    """A container was produced under a different configuration."""


def to_pairs(z) -> np.ndarray:
    z = np.asarray(z)
    return np.stack([z.real, z.imag], axis=-1).astype("<f8")


def from_pairs(a) -> np.ndarray:
    a = np.asarray(a, dtype="<f8")
    if a.shape[-1] != 2:
        raise ContainerError("complex array must have a trailing (re, im) axis")
    return a[..., 0] + 1j * a[..., 1]


def _f8(a) -> np.ndarray:
    return np.asarray(a, dtype="<f8")


def _i8(a) -> np.ndarray:
    return np.asarray(a, dtype="<i8")


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _save(path, kind: str, header: dict, arrays: dict) -> None:
    header = {"format": f"starris-gl/{kind}", "version": FORMAT_VERSION, **header}
    arrays = {"header": np.array(json.dumps(header, sort_keys=True)), **arrays}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        with open(tmp, "wb") as fh:
            np.savez(fh, **arrays)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load(path, kind: str) -> tuple[dict, dict]:
    try:
        with np.load(path, allow_pickle=False) as z:
            arrays = {k: z[k] for k in z.files}
    except (OSError, ValueError) as exc:
        raise ContainerError(f"{path}: cannot read container ({exc})") from exc
    if "header" not in arrays:
        raise ContainerError(f"{path}: no header")
    header = json.loads(str(arrays.pop("header")))
    if header.get("format") != f"starris-gl/{kind}":
        raise ContainerError(f"{path}: expected a {kind} container, found {header.get('format')!r}")
    if header.get("version") != FORMAT_VERSION:
        raise ContainerError(f"{path}: unsupported version {header.get('version')}")
    return header, arrays


def read_header(path) -> dict:
    with np.load(path, allow_pickle=False) as z:
        return json.loads(str(z["header"]))


# -- pilot tensor -------------------------------------------------------------

def save_tensor(path, tensor: ReceivedPilotTensor, cfg: RunConfig) -> None:
    header = {"config_hash": cfg.hash(), "data_hash": cfg.data_hash(), "noise_seed": tensor.noise_seed,
              "shape": list(tensor.R.shape), "config": cfg.to_dict()}
    _save(path, "tensor", header, {"R": to_pairs(tensor.R)})


def load_tensor(path) -> tuple[ReceivedPilotTensor, dict]:
    header, arrays = _load(path, "tensor")
    R = from_pairs(arrays["R"])
    if list(R.shape) != header["shape"]:
        raise ContainerError(f"{path}: tensor shape {R.shape} != header shape {header['shape']}")
    return ReceivedPilotTensor(R, header["noise_seed"]), header


# -- dataset ------------------------------------------------------------------

def save_dataset(path, data: Dataset, cfg: RunConfig) -> None:
    header = {"config_hash": cfg.hash(), "data_hash": data.data_hash, "seed": data.seed,
              "n_samples": len(data), "config": cfg.to_dict()}
    arrays = {"tensors": to_pairs(data.tensors), "targets": _f8(data.targets)}
    for k in LABEL_FIELDS:
        v = data.labels[k]
        if np.iscomplexobj(v):
            arrays[f"label_{k}"] = to_pairs(v)
        elif k in ("index", "iterations"):
            arrays[f"label_{k}"] = _i8(v)
        else:
            arrays[f"label_{k}"] = _f8(v)
    _save(path, "dataset", header, arrays)


def load_dataset(path, expect_hash: str | None = None) -> Dataset:
    header, arrays = _load(path, "dataset")
    if expect_hash is not None and header["data_hash"] != expect_hash:
        raise HashMismatchError(f"{path}: dataset hash {header['data_hash']} != config hash {expect_hash}")
    labels = {}
    for k in LABEL_FIELDS:
        v = arrays[f"label_{k}"]
        labels[k] = from_pairs(v) if k == "w" else v
    return Dataset(from_pairs(arrays["tensors"]), arrays["targets"], labels, header["data_hash"], header["seed"])


def chunk_path(chunk_dir, seed: int, start: int, stop: int) -> Path:
    return Path(chunk_dir) / f"chunk_s{seed}_{start:08d}_{stop:08d}.npz"


def try_load_dataset(path, expect_hash: str) -> Dataset | None:
    """Load a chunk if it exists, is readable and matches ``expect_hash``."""
    if not Path(path).exists():
        return None
    try:
        return load_dataset(path, expect_hash)
    except (ContainerError, KeyError):
        return None


# -- model --------------------------------------------------------------------

def _model_arrays(model: GlModel) -> tuple[dict, dict]:
    pre = model.precoder
    arrays: dict[str, np.ndarray] = {}
    stages = []
    for i, st in enumerate(pre.saab_.stages_):
        arrays[f"saab{i}_ac_anchors"] = _f8(st.ac_anchors)
        arrays[f"saab{i}_energies"] = _f8(st.energies)
        arrays[f"saab{i}_all_energies"] = _f8(st.all_energies)
        stages.append({"axis": st.axis, "patch_len": st.patch_len, "bias": st.bias.hex(),
                       "threshold": float(st.threshold).hex(), "degenerate": st.degenerate})
    arrays["rft_selected"] = _i8(pre.selector_.selected_)
    arrays["rft_losses"] = _f8(pre.selector_.losses_)

    nodes = {k: [] for k in ("feature", "threshold", "left", "right", "value", "gain")}
    tree_sizes, ens_sizes, base, losses = [], [], [], []
    for ens in pre.ensembles_:
        ens_sizes.append(len(ens.trees_))
        base.append(ens.base_score_)
        losses.append(ens.train_loss_)
        for t in ens.trees_:
            tree_sizes.append(len(t.feature))
            for k in nodes:
                nodes[k].append(getattr(t, k))
    for k, parts in nodes.items():
        cat = np.concatenate(parts) if parts else np.zeros(0)
        arrays[f"tree_{k}"] = _i8(cat) if k in ("feature", "left", "right") else _f8(cat)
    arrays["tree_sizes"] = _i8(tree_sizes)
    arrays["ensemble_sizes"] = _i8(ens_sizes)
    arrays["ensemble_base"] = _f8(base)
    arrays["ensemble_train_loss"] = _f8(losses)
    for k in ("train_index_", "val_index_"):
        arrays[k.rstrip("_")] = _i8(getattr(pre, k))
    for k in ("train_mse_", "val_mse_", "val_baseline_mse_"):
        arrays[k.rstrip("_")] = _f8(getattr(pre, k))

    header = {
        "config_hash": model.config_hash, "data_hash": model.data_hash, "config": model.config.to_dict(),
        "precoder_params": pre.get_params(), "stages": stages,
        "saab_input_shape": list(pre.saab_.input_shape_), "n_features": pre.n_features_,
        "codec": [model.codec.n_elements, model.codec.n_bs_antennas],
        "ensemble_seeds": [int(e.random_state) for e in pre.ensembles_],
    }
    return header, arrays


def save_model(path, model: GlModel) -> None:
    header, arrays = _model_arrays(model)
    _save(path, "model", header, arrays)


def model_hash(model: GlModel) -> str:
    """Digest over every stored array and the header; equal for identically trained models."""
    header, arrays = _model_arrays(model)
    h = hashlib.sha256(json.dumps(header, sort_keys=True).encode())
    for k in sorted(arrays):
        h.update(k.encode())
        h.update(np.ascontiguousarray(arrays[k]).tobytes())
    return h.hexdigest()[:16]


def load_model(path, expect_data_hash: str | None = None) -> GlModel:
    header, a = _load(path, "model")
    if expect_data_hash is not None and header["data_hash"] != expect_data_hash:
        raise HashMismatchError(
            f"{path}: model was trained on data hash {header['data_hash']}, config gives {expect_data_hash}")
    cfg = RunConfig.from_dict(header["config"])
    pre = GLPrecoder(**header["precoder_params"])

    saab = SaabTransform(pre.energy_threshold, pre.bias_mode)
    saab.stages_ = [
        SaabStage(st["axis"], st["patch_len"], a[f"saab{i}_ac_anchors"], a[f"saab{i}_energies"],
                  a[f"saab{i}_all_energies"], float.fromhex(st["bias"]), float.fromhex(st["threshold"]),
                  st["degenerate"])
        for i, st in enumerate(header["stages"])
    ]
    saab.input_shape_ = tuple(header["saab_input_shape"])
    saab.n_features_out_ = header["n_features"]
    saab.degenerate_ = any(s.degenerate for s in saab.stages_)
    pre.saab_ = saab

    sel = RFTSelector(pre.n_thresholds, pre.n_select, pre.shared_selection)
    sel.selected_ = a["rft_selected"].astype(np.intp)
    sel.losses_ = a["rft_losses"]
    sel.n_features_in_ = header["n_features"]
    pre.selector_ = sel

    gbdt_params = pre._gbdt_params()
    offsets = np.concatenate([[0], np.cumsum(a["tree_sizes"])])
    ensembles, t = [], 0
    for d, n_trees in enumerate(a["ensemble_sizes"]):
        ens = GBDTRegressor(**gbdt_params, random_state=header["ensemble_seeds"][d])
        ens.base_score_ = float(a["ensemble_base"][d])
        ens.train_loss_ = list(a["ensemble_train_loss"][d])
        ens.n_features_in_ = sel.selected_.shape[1]
        ens.trees_ = []
        for _ in range(n_trees):
            lo, hi = offsets[t], offsets[t + 1]
            ens.trees_.append(Tree(
                a["tree_feature"][lo:hi].astype(np.intp), a["tree_threshold"][lo:hi],
                a["tree_left"][lo:hi].astype(np.intp), a["tree_right"][lo:hi].astype(np.intp),
                a["tree_value"][lo:hi], a["tree_gain"][lo:hi],
            ))
            t += 1
        ensembles.append(ens)
    pre.ensembles_ = ensembles
    pre.n_targets_ = len(ensembles)
    pre.n_features_ = header["n_features"]
    for k in ("train_index", "val_index"):
        setattr(pre, k + "_", a[k].astype(np.intp))
    for k in ("train_mse", "val_mse", "val_baseline_mse"):
        setattr(pre, k + "_", a[k])

    codec = TargetCodec(*header["codec"])
    if codec.dim != pre.n_targets_:
        raise ContainerError(f"{path}: codec expects {codec.dim} targets, model has {pre.n_targets_}")
    return GlModel(pre, codec, cfg, header["data_hash"])
