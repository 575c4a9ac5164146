"""JSON Lines datasets and versioned text checkpoints."""
from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .networks import Layer, MlpParams
from .synth_data import RatedInstance
from .trainer import ModelCheckpoint, TrainConfig

FORMAT_VERSION = 1
CHECKPOINT_KIND = "uol-checkpoint"


class DatasetError(ValueError):
    """A dataset line could not be parsed or violates an instance invariant."""


class CheckpointError(ValueError):
    pass


class UnsupportedVersionError(CheckpointError):
    pass


def _atomic_write(path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def instance_to_dict(inst: RatedInstance) -> dict:
    return {
        "id": int(inst.id),
        "features": [float(v) for v in inst.features],
        "mean_score": float(inst.mean_score),
        "rating_variance": float(inst.rating_variance),
        "true_score": None if inst.true_score is None else float(inst.true_score),
        "ratings": None if inst.ratings is None else [float(v) for v in inst.ratings],
    }


def instance_from_dict(d: dict) -> RatedInstance:
    missing = {"id", "features", "mean_score", "rating_variance"} - set(d)
    if missing:
        raise ValueError(f"missing keys {sorted(missing)}")
    ratings = d.get("ratings")
    inst = RatedInstance(
        id=int(d["id"]),
        features=np.asarray(d["features"], dtype=float),
        mean_score=float(d["mean_score"]),
        rating_variance=float(d["rating_variance"]),
        true_score=None if d.get("true_score") is None else float(d["true_score"]),
        ratings=None if ratings is None else np.asarray(ratings, dtype=float),
    )
    inst.validate()
    return inst


def dumps_dataset(instances: Iterable[RatedInstance]) -> str:
    return "".join(json.dumps(instance_to_dict(inst)) + "\n" for inst in instances)


def save_dataset(instances: Iterable[RatedInstance], path) -> None:
    _atomic_write(path, dumps_dataset(instances))


def load_dataset(path) -> list[RatedInstance]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from exc
            if not isinstance(d, dict):
                raise DatasetError(f"{path}:{lineno}: expected a JSON object")
            try:
                out.append(instance_from_dict(d))
            except (ValueError, TypeError) as exc:
                raise DatasetError(f"{path}:{lineno}: {exc}") from exc
    return out


def _mlp_to_json(params: MlpParams) -> list[dict]:
    return [{
        "shape": list(layer.weight.shape),
        "activation": layer.activation,
        "weight": layer.weight.ravel(order="C").tolist(),
        "bias": layer.bias.tolist(),
    } for layer in params.layers]


def _mlp_from_json(layers: list) -> MlpParams:
    out = []
    for k, d in enumerate(layers):
        fan_in, fan_out = d["shape"]
        w = np.asarray(d["weight"], dtype=float)
        b = np.asarray(d["bias"], dtype=float)
        if w.size != fan_in * fan_out or b.shape != (fan_out,):
            raise CheckpointError(f"layer {k}: weights do not match the shape manifest")
        out.append(Layer(w.reshape(fan_in, fan_out), b, d["activation"]))
    return MlpParams(tuple(out))


def dumps_checkpoint(ckpt: ModelCheckpoint) -> str:
    body = {
        "kind": CHECKPOINT_KIND,
        "format_version": FORMAT_VERSION,
        "seed": int(ckpt.seed),
        "feature_dim": int(ckpt.feature_dim),
        "config": ckpt.config.to_dict(),
        "manifest": {
            "encoder": [list(l.weight.shape) for l in ckpt.encoder.layers],
            "comparator": [list(l.weight.shape) for l in ckpt.comparator.layers],
            "regression_head": None if ckpt.regression_head is None
            else [list(l.weight.shape) for l in ckpt.regression_head.layers],
        },
        "encoder": _mlp_to_json(ckpt.encoder),
        "comparator": _mlp_to_json(ckpt.comparator),
        "regression_head": None if ckpt.regression_head is None else _mlp_to_json(ckpt.regression_head),
    }
    # json writes floats with repr(), the shortest string that round-trips exactly
    return json.dumps(body, indent=1) + "\n"


def loads_checkpoint(text: str) -> ModelCheckpoint:
    try:
        body = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"checkpoint is not valid JSON ({exc.msg} at char {exc.pos})") from exc
    if not isinstance(body, dict) or body.get("kind") != CHECKPOINT_KIND:
        raise CheckpointError("not a checkpoint file")
    version = body.get("format_version")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"unsupported checkpoint format_version {version!r}")
    try:
        encoder = _mlp_from_json(body["encoder"])
        comparator = _mlp_from_json(body["comparator"])
        head = None if body["regression_head"] is None else _mlp_from_json(body["regression_head"])
        manifest = body["manifest"]
        for name, params in (("encoder", encoder), ("comparator", comparator), ("regression_head", head)):
            shapes = None if params is None else [list(l.weight.shape) for l in params.layers]
            if manifest[name] != shapes:
                raise CheckpointError(f"{name} does not match the shape manifest")
        return ModelCheckpoint(
            config=TrainConfig.from_dict(body["config"]),
            feature_dim=int(body["feature_dim"]),
            encoder=encoder,
            comparator=comparator,
            regression_head=head,
            seed=int(body["seed"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, CheckpointError):
            raise
        raise CheckpointError(f"malformed checkpoint: {exc}") from exc


def save_checkpoint(ckpt: ModelCheckpoint, path) -> None:
    _atomic_write(path, dumps_checkpoint(ckpt))


def load_checkpoint(path) -> ModelCheckpoint:
    return loads_checkpoint(Path(path).read_text(encoding="utf-8"))


def write_trace_csv(trace: Sequence[dict], path) -> None:
    cols = ("epoch", "lr", "ce", "hinge", "kl", "total")
    lines = [",".join(cols)]
    for row in trace:
        lines.append(",".join(str(int(row[c])) if c == "epoch" else repr(float(row[c])) for c in cols))
    _atomic_write(path, "\n".join(lines) + "\n")
