"""Model archives: a directory with a JSON ``manifest`` and TNSR files."""
from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from . import tnsr
from .decomposition import SIGN_CONVENTION_VERSION, LossTrace, TuckerModel
from .filters import bank_from_dict
from .hierarchy import HierarchicalModel, Segment, _empty_segment

MANIFEST = "manifest"


class ArchiveFormatError(ValueError):
    """Manifest missing fields or inconsistent with the stored tensors."""


def _write_manifest(path: Path, manifest: dict) -> None:
    with open(path / MANIFEST, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_manifest(path: Path) -> dict:
    try:
        with open(path / MANIFEST, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ArchiveFormatError(f"bad manifest: {exc}") from exc


def _trace_dict(trace):
    if trace is None:
        return None
    return {"values": [float(v) for v in trace.values], "converged": bool(trace.converged),
            "iterations": int(trace.iterations)}


def _trace_from(d):
    if d is None:
        return None
    return LossTrace(values=list(d["values"]), converged=d["converged"], iterations=d["iterations"])


def save_tucker(path: str | os.PathLike, model: TuckerModel) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    tnsr.save(path / "core.tnsr", model.core)
    for m, u in enumerate(model.factors):
        tnsr.save(path / f"U{m}.tnsr", u)
    if model.mean is not None:
        tnsr.save(path / "mean.tnsr", model.mean)
    _write_manifest(path, {
        "type": "tucker",
        "order": model.order,
        "dims": list(model.dims),
        "ranks": list(model.ranks),
        "mean": model.mean is not None,
        "sign_convention": SIGN_CONVENTION_VERSION,
        "convergence": _trace_dict(model.trace),
    })


def load_tucker(path: str | os.PathLike) -> TuckerModel:
    path = Path(path)
    man = _read_manifest(path)
    try:
        if man["type"] != "tucker":
            raise ArchiveFormatError(f"archive type is {man['type']!r}, not 'tucker'")
        core = tnsr.load(path / "core.tnsr")
        factors = [tnsr.load(path / f"U{m}.tnsr") for m in range(man["order"])]
        mean = tnsr.load(path / "mean.tnsr") if man["mean"] else None
        trace = _trace_from(man.get("convergence"))
    except KeyError as exc:
        raise ArchiveFormatError(f"manifest is missing {exc}") from exc
    ranks = tuple(u.shape[1] for u in factors)
    if tuple(core.shape) != ranks or ranks != tuple(man["ranks"]):
        raise ArchiveFormatError("core shape does not match the mode matrices")
    return TuckerModel(core=core, factors=factors, mean=mean, trace=trace)


def save_hierarchical(path: str | os.PathLike, model: HierarchicalModel) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    bank = model.bank
    bank_spec = None
    if bank is not None:
        if bank.kind == "general":
            bank_spec = {"kind": "general", "dim": bank.dim, "filters": len(bank)}
            for s, h in enumerate(bank.operators):
                tnsr.save(path / f"bank_H{s}.tnsr", h)
        else:
            bank_spec = bank.to_dict()
    ranks = []
    for s, seg in enumerate(model.segments):
        if not seg.active:
            ranks.append([0] * model.order)
            continue
        ranks.append(list(seg.ranks))
        tnsr.save(path / f"seg{s}_core.tnsr", seg.core)
        for c, u in enumerate(seg.factors):
            tnsr.save(path / f"seg{s}_U{c}.tnsr", u)
    if model.mean is not None:
        tnsr.save(path / "mean.tnsr", model.mean)
    info = {k: v for k, v in model.info.items() if not k.startswith("_")}
    _write_manifest(path, {
        "type": "hierarchical",
        "order": model.order,
        "dims": list(model.dims),
        "segments": len(model.segments),
        "ranks": ranks,
        "bank": bank_spec,
        "mean": model.mean is not None,
        "sign_convention": SIGN_CONVENTION_VERSION,
        "convergence": _trace_dict(model.trace),
        "info": info,
    })


def _fix_shape(t: np.ndarray, shape) -> np.ndarray:
    if tuple(t.shape) != tuple(shape):
        raise ArchiveFormatError(f"stored tensor of shape {t.shape} does not match {tuple(shape)}")
    return t


def load_hierarchical(path: str | os.PathLike) -> HierarchicalModel:
    path = Path(path)
    man = _read_manifest(path)
    try:
        if man["type"] != "hierarchical":
            raise ArchiveFormatError(f"archive type is {man['type']!r}, not 'hierarchical'")
        dims = tuple(man["dims"])
        segments = []
        for s, ranks in enumerate(man["ranks"]):
            if any(r == 0 for r in ranks):
                segments.append(_empty_segment(dims))
                continue
            core = _fix_shape(tnsr.load(path / f"seg{s}_core.tnsr"), ranks)
            factors = [_fix_shape(tnsr.load(path / f"seg{s}_U{c}.tnsr"), (dims[c], ranks[c]))
                       for c in range(man["order"])]
            segments.append(Segment(core=core, factors=factors))
        spec = man["bank"]
        bank = None
        if spec is not None:
            if spec["kind"] == "general":
                ops = [tnsr.load(path / f"bank_H{s}.tnsr") for s in range(spec["filters"])]
                bank = bank_from_dict(spec, ops)
            else:
                bank = bank_from_dict(spec)
        mean = tnsr.load(path / "mean.tnsr") if man["mean"] else None
        trace = _trace_from(man.get("convergence"))
        info = dict(man.get("info", {}))
    except KeyError as exc:
        raise ArchiveFormatError(f"manifest is missing {exc}") from exc
    if len(segments) != man["segments"]:
        raise ArchiveFormatError("segment count does not match the manifest")
    return HierarchicalModel(segments=segments, bank=bank, dims=dims, mean=mean, trace=trace,
                             info=info)


def archive_type(path: str | os.PathLike) -> str:
    man = _read_manifest(Path(path))
    if "type" not in man:
        raise ArchiveFormatError("manifest has no type")
    return man["type"]


def load_any(path: str | os.PathLike):
    kind = archive_type(path)
    if kind == "tucker":
        return load_tucker(path)
    if kind == "hierarchical":
        return load_hierarchical(path)
    raise ArchiveFormatError(f"unknown archive type {kind!r}")

