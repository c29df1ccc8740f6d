"""Checkpoint save/load.

A checkpoint is one tensor container holding every model parameter under
its dotted name plus reserved entries:

  meta.*   model shape: variant, layers, dim, heads, ff_dim,
           num_attributes, max_speakers, conv_kernel, dropout, input_dim,
           pruned (0/1), each a one-element tensor
  norm.mean, norm.std
           feature normalization vectors baked in at save time

Values are stored as 32-bit floats, so a float32 model round-trips
bitwise; float64 parameters are rounded on save.
"""

import os
import tempfile

import numpy as np

from . import tensorio
from .model import DiarizationModel, ModelConfig

_META_FIELDS = ("variant", "layers", "dim", "heads", "ff_dim",
                "num_attributes", "max_speakers", "conv_kernel", "dropout",
                "input_dim")


class VariantMismatchError(ValueError):
    pass


def save_checkpoint(model: DiarizationModel, path: str) -> None:
    """Write atomically: a temp file in the target directory, then rename."""
    entries = {}
    for name in _META_FIELDS:
        entries["meta." + name] = np.array([getattr(model.config, name)],
                                           dtype=float)
    entries["meta.pruned"] = np.array([1.0 if model.pruned else 0.0])
    entries["norm.mean"] = model.feature_mean
    entries["norm.std"] = model.feature_std
    for name, tensor in model.store.params.items():
        entries[name] = tensor.data

    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    os.close(fd)
    try:
        tensorio.write_tensors(tmp, entries)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path: str, expect_variant=None,
                    dtype=np.float32) -> DiarizationModel:
    """Rebuild the model a checkpoint came from.

    expect_variant, when given, must match the stored variant id; a
    mismatch is an error rather than a silent reinterpretation.
    """
    tensors = tensorio.read_tensors(path)

    def meta(name):
        key = "meta." + name
        if key not in tensors:
            raise tensorio.FormatError("checkpoint missing %s" % key)
        return float(tensors[key].reshape(-1)[0])

    kwargs = {}
    for name in _META_FIELDS:
        value = meta(name)
        kwargs[name] = value if name == "dropout" else int(round(value))
    if expect_variant is not None and kwargs["variant"] != expect_variant:
        raise VariantMismatchError(
            "checkpoint holds variant %d, expected %d"
            % (kwargs["variant"], expect_variant))

    pruned = bool(int(round(meta("pruned"))))
    model = DiarizationModel(ModelConfig(**kwargs), seed=0, dtype=dtype,
                             pruned=pruned)
    model.set_normalization(tensors["norm.mean"].astype(float),
                            tensors["norm.std"].astype(float))
    for name, param in model.store.params.items():
        if name not in tensors:
            raise tensorio.FormatError("checkpoint missing parameter %s" % name)
        stored = tensors[name]
        if stored.shape != param.data.shape:
            raise tensorio.FormatError(
                "parameter %s has shape %s, expected %s"
                % (name, stored.shape, param.data.shape))
        param.data = stored.astype(dtype)

    reserved = {"meta." + n for n in _META_FIELDS} | {"meta.pruned",
                                                      "norm.mean", "norm.std"}
    stray = set(tensors) - reserved - set(model.store.params)
    if stray:
        raise tensorio.FormatError(
            "checkpoint has unexpected tensors: %s" % sorted(stray)[:3])
    return model
