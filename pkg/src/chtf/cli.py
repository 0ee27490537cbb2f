"""Command-line interface.

Commands: decompose, synth, train, project, verify, bench.

Every option can also be given in a ``key=value`` config file passed with
``--config``; command-line flags win.  Exit codes: 0 success, 2 I/O error,
3 malformed input (files, config, arguments), 4 numerical or shape error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import tnsr
from .archive import ArchiveFormatError, load_any, save_hierarchical, save_tucker
from .benchmark import METHODS, BenchConfig, run_benchmark
from .decomposition import TuckerModel, m_mode_svd, truncate, tucker_als
from .filters import grid_bank, identity_bank, make_pyramid_bank, make_segmentation_bank
from .hierarchy import HierarchicalModel, chtf_als, chtf_independent, chtf_overlapping
from .recognition import (LabeledEnsemble, Projector, Signature, SignatureError, global_signature,
                          roc_curve, signature, train_compositional, train_global, verify_pairs)
from .synthetic import planted_tucker

log = logging.getLogger("chtf")

EXIT_IO, EXIT_FORMAT, EXIT_NUMERIC = 2, 3, 4
FLOAT_FMT = "{:.12g}"


class FormatError(ValueError):
    """Malformed user input."""


# ---------------------------------------------------------------------------
# option parsing


def _int(v):
    try:
        return int(v)
    except (TypeError, ValueError):
        raise FormatError(f"expected an integer, got {v!r}") from None


def _float(v):
    try:
        return float(v)
    except (TypeError, ValueError):
        raise FormatError(f"expected a number, got {v!r}") from None


def _bool(v):
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise FormatError(f"expected a boolean, got {v!r}")


def parse_ranks(text):
    """``"2,2,2"`` -> ``[2, 2, 2]``; ``*`` keeps a mode at full rank."""
    if text is None or text == "":
        return None
    out = []
    for tok in str(text).split(","):
        tok = tok.strip()
        out.append(None if tok in ("*", "-", "") else _int(tok))
    return out


def parse_pair(text, sep="x"):
    parts = str(text).lower().split(sep)
    if len(parts) != 2:
        raise FormatError(f"expected AxB, got {text!r}")
    return _int(parts[0]), _int(parts[1])


def parse_dims(text):
    return [_int(t) for t in str(text).lower().replace(",", "x").split("x")]


def _image_shape(dim, shape_text):
    if shape_text:
        w, h = parse_pair(shape_text)
        if w * h != dim:
            raise FormatError(f"image shape {w}x{h} does not match {dim} measurements")
        return w, h
    side = int(round(math.sqrt(dim)))
    if side * side != dim:
        raise FormatError(f"{dim} measurements is not a square image; set image_shape")
    return side, side


def _parse_index_set(text):
    idx = []
    for tok in text.split(","):
        tok = tok.strip()
        if "-" in tok:
            a, b = tok.split("-", 1)
            idx.extend(range(_int(a), _int(b) + 1))
        elif tok:
            idx.append(_int(tok))
    return idx


def parse_bank(spec, dim, image_shape=None):
    """Bank from a spec string.

    ``identity``, ``halves``, ``grid:RxC``, ``regions:0-3;4-7``,
    ``gaussian:L`` or ``laplacian:L``.
    """
    spec = (spec or "identity").strip()
    kind, _, arg = spec.partition(":")
    kind = kind.lower()
    if kind == "identity":
        return identity_bank(dim)
    if kind == "halves":
        if dim < 2:
            raise FormatError("cannot halve a single measurement")
        return make_segmentation_bank(dim, [range(dim // 2), range(dim // 2, dim)])
    if kind == "grid":
        rows, cols = parse_pair(arg)
        w, h = _image_shape(dim, image_shape)
        return grid_bank(w, h, rows, cols)
    if kind == "regions":
        return make_segmentation_bank(dim, [_parse_index_set(r) for r in arg.split(";")])
    if kind in ("gaussian", "laplacian"):
        w, h = _image_shape(dim, image_shape)
        return make_pyramid_bank(w, h, _int(arg or 3), kind, dim=dim)
    raise FormatError(f"unknown bank spec {spec!r}")


OPTIONS = {
    # name: (converter, default, help)
    "input": (str, None, "input file"),
    "output": (str, None, "output file or directory"),
    "model": (str, None, "model archive directory"),
    "observations": (str, None, "observations TNSR (I_0 x N)"),
    "signatures": (str, None, "signature CSV written by 'project'"),
    "bank": (str, "identity", "filter bank spec"),
    "image_shape": (str, None, "image WIDTHxHEIGHT for grid and pyramid banks"),
    "ranks": (str, None, "comma-separated ranks, '*' keeps a mode"),
    "dims": (str, "64x10x6x6", "synthetic tensor dims"),
    "max_iters": (_int, 50, "ALS sweep limit"),
    "tol": (_float, None, "ALS tolerance (default 1e-6*||D||^2)"),
    "seed": (_int, 0, "random seed"),
    "noise": (_float, 0.0, "additive noise level"),
    "occlusion": (_float, 0.25, "occluded image fraction"),
    "reps": (_int, 10, "benchmark repetitions"),
    "method": (str, None, "algorithm or benchmark method list"),
    "center": (_bool, False, "subtract the measurement-mode mean"),
    "threshold": (_float, None, "fixed verification threshold"),
    # benchmark geometry
    "width": (_int, 16, "benchmark image width"),
    "height": (_int, 16, "benchmark image height"),
    "grid": (str, "4x4", "benchmark part grid"),
    "pyramid_levels": (_int, 3, "benchmark pyramid levels"),
    "train_people": (_int, 20, "benchmark training people"),
    "test_people": (_int, 20, "benchmark test people"),
    "train_views": (_int, 3, "benchmark training views"),
    "train_lights": (_int, 3, "benchmark training illuminations"),
    "images_per_person": (_int, 5, "benchmark test images per person"),
    "spread": (_float, 1.0, "benchmark spread of view/illumination vectors"),
    "mean_level": (_float, 1.0, "benchmark mean-face level"),
}

COMMANDS = {
    "decompose": ("input", "output", "bank", "image_shape", "ranks", "max_iters", "tol", "method",
                  "center"),
    "synth": ("output", "dims", "ranks", "noise", "seed"),
    "train": ("input", "output", "bank", "image_shape", "ranks", "max_iters", "tol", "method",
              "center"),
    "project": ("input", "model", "output"),
    "verify": ("input", "signatures", "model", "observations", "output", "threshold"),
    "bench": ("output", "seed", "reps", "occlusion", "method", "ranks", "max_iters", "noise",
              "width", "height", "grid", "pyramid_levels", "train_people", "test_people",
              "train_views", "train_lights", "images_per_person", "spread", "mean_level"),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise FormatError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="chtf", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, keys in COMMANDS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="key=value config file")
        for key in keys:
            _, default, text = OPTIONS[key]
            p.add_argument("--" + key.replace("_", "-"), dest=key, default=argparse.SUPPRESS,
                           help=f"{text} (default: {default})")
    return parser


def read_config(path) -> dict:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise FormatError(f"{path}:{lineno}: expected key=value")
            key, value = (t.strip() for t in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def resolve(command: str, flags: dict) -> dict:
    """Defaults, then config file, then flags, all converted."""
    keys = COMMANDS[command]
    merged = {k: OPTIONS[k][1] for k in keys}
    raw = {}
    if flags.get("config"):
        raw.update(read_config(flags["config"]))
    raw.update({k: v for k, v in flags.items() if k in keys})
    for k, v in raw.items():
        if k not in keys:
            raise FormatError(f"unknown option {k!r} for {command}")
        merged[k] = OPTIONS[k][0](v) if v is not None else None
    return merged


def _require(cfg, *keys):
    for k in keys:
        if cfg.get(k) in (None, ""):
            raise FormatError(f"--{k.replace('_', '-')} is required")


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return FLOAT_FMT.format(float(x))


def _write_csv(path, header, rows, preamble=None):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if preamble:
            fh.write(preamble + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([r if isinstance(r, str) else _fmt(r) for r in row])


def _write_trace(path, trace):
    _write_csv(path, ["iteration", "loss"], [(k, v) for k, v in enumerate(trace.values)])


# ---------------------------------------------------------------------------
# commands


def cmd_decompose(cfg) -> int:
    _require(cfg, "input", "output")
    d = tnsr.load(cfg["input"])
    ranks = parse_ranks(cfg["ranks"])
    bank_spec = (cfg["bank"] or "identity").lower()
    method = (cfg["method"] or "auto").lower()
    if method == "auto":
        if bank_spec == "identity":
            method = "tucker" if ranks else "hosvd"
        else:
            method = "chtf"
    out = Path(cfg["output"])
    if method in ("hosvd", "tucker"):
        if method == "hosvd":
            model = m_mode_svd(d, center=cfg["center"])
            if ranks:
                model = truncate(model, ranks)
        else:
            if not ranks:
                raise FormatError("tucker needs --ranks")
            model = tucker_als(d, ranks, max_iters=cfg["max_iters"], tol=cfg["tol"],
                               center=cfg["center"])
        save_tucker(out, model)
        if model.trace is not None:
            _write_trace(out / "loss.csv", model.trace)
        return 0
    bank = parse_bank(cfg["bank"], d.shape[0], cfg["image_shape"])
    if method == "chtf":
        model, trace = chtf_als(d, bank, ranks, max_iters=cfg["max_iters"], tol=cfg["tol"],
                                center=cfg["center"])
    elif method == "independent":
        model, trace = chtf_independent(d, bank, center=cfg["center"]), None
    elif method == "overlapping":
        if not ranks:
            raise FormatError("overlapping needs --ranks")
        model, trace = chtf_overlapping(d, bank, ranks, center=cfg["center"]), None
    else:
        raise FormatError(f"unknown decompose method {method!r}")
    save_hierarchical(out, model)
    if trace is not None:
        _write_trace(out / "loss.csv", trace)
    return 0


def cmd_synth(cfg) -> int:
    _require(cfg, "output")
    dims = parse_dims(cfg["dims"])
    ranks = parse_ranks(cfg["ranks"]) or [min(40, dims[0])] + [min(n, 10) for n in dims[1:2]] \
        + [min(n, 2) for n in dims[2:]]
    if len(ranks) != len(dims) or any(r is None or r < 1 or r > n for r, n in zip(ranks, dims)):
        raise ValueError(f"ranks {ranks} do not fit dims {dims}")
    rng = np.random.default_rng(cfg["seed"])
    d, core, factors = planted_tucker(rng, dims, ranks, noise=cfg["noise"])
    out = Path(cfg["output"])
    out.mkdir(parents=True, exist_ok=True)
    tnsr.save(out / "ensemble.tnsr", d)
    names = ["measurement", "person", "view", "illumination", "expression"]
    modes = [names[m] if m < len(names) else f"mode{m}" for m in range(len(dims))]
    labels = {"modes": modes,
              "labels": [[f"{modes[m]}{i}" for i in range(n)] for m, n in enumerate(dims)][1:]}
    with open(out / "labels.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(labels, fh, indent=2, sort_keys=True)
        fh.write("\n")
    save_tucker(out / "truth", TuckerModel(core=core, factors=factors))
    return 0


def _load_ensemble(path) -> LabeledEnsemble:
    d = tnsr.load(path)
    labels_path = Path(path).with_name("labels.json")
    if labels_path.exists():
        with open(labels_path, encoding="utf-8") as fh:
            try:
                labels = json.load(fh)["labels"]
            except (json.JSONDecodeError, KeyError) as exc:
                raise FormatError(f"bad labels file: {exc}") from exc
    else:
        labels = [list(range(n)) for n in d.shape[1:]]
    return LabeledEnsemble(d, labels)


def cmd_train(cfg) -> int:
    _require(cfg, "input", "output")
    ens = _load_ensemble(cfg["input"])
    ranks = parse_ranks(cfg["ranks"])
    bank_spec = (cfg["bank"] or "identity").lower()
    method = (cfg["method"] or ("global" if bank_spec == "identity" else "compositional")).lower()
    if method == "global":
        save_tucker(cfg["output"], train_global(ens, ranks=ranks, center=cfg["center"]))
    elif method == "compositional":
        bank = parse_bank(cfg["bank"], ens.measurements, cfg["image_shape"])
        model = train_compositional(ens, bank, ranks=ranks, max_iters=cfg["max_iters"],
                                    tol=cfg["tol"], center=cfg["center"])
        save_hierarchical(cfg["output"], model)
    else:
        raise FormatError(f"unknown train method {method!r}")
    return 0


def _observations(path) -> np.ndarray:
    x = tnsr.load(path)
    if x.ndim == 1:
        return x[:, None]
    return np.reshape(x, (x.shape[0], -1), order="F")


def _signatures(model, obs) -> list:
    out = []
    if isinstance(model, HierarchicalModel):
        fn = lambda x: signature(model, x)  # noqa: E731
    else:
        proj = Projector(model.extended_core())
        fn = lambda x: global_signature(proj, x, model.mean)  # noqa: E731
    for k in range(obs.shape[1]):
        try:
            out.append(fn(obs[:, k]))
        except SignatureError:
            log.warning("observation %d failed to project", k)
            out.append(None)
    return out


def _segment_sizes(model) -> list:
    if isinstance(model, HierarchicalModel):
        return [seg.ranks[1] if seg.active else 0 for seg in model.segments]
    return [model.ranks[1]]


def write_signatures(path, sigs, sizes):
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
    header = (["observation"] + [f"w{s}" for s in range(len(sizes))]
              + [f"fit{s}" for s in range(len(sizes))]
              + [f"p{s}_{k}" for s, n in enumerate(sizes) for k in range(n)])
    rows = []
    for i, sig in enumerate(sigs):
        if sig is None:
            rows.append([i] + [0.0] * (2 * len(sizes) + int(offsets[-1])))
            continue
        vec = np.zeros(int(offsets[-1]))
        for s, v in enumerate(sig.person):
            if v is not None:
                vec[offsets[s]:offsets[s + 1]] = v
        fit = sig.fit if sig.fit is not None else np.ones(len(sizes))
        rows.append([i] + list(sig.weights) + list(fit) + list(vec))
    preamble = "# segment_offsets=" + ",".join(str(o) for o in offsets)
    _write_csv(path, header, rows, preamble)


def read_signatures(path) -> list:
    with open(path, encoding="utf-8", newline="") as fh:
        first = fh.readline().strip()
        if not first.startswith("# segment_offsets="):
            raise FormatError("signature file lacks the segment_offsets header")
        try:
            offsets = [int(t) for t in first.split("=", 1)[1].split(",")]
        except ValueError as exc:
            raise FormatError(f"bad segment offsets: {exc}") from exc
        reader = csv.reader(fh)
        header = next(reader, None)
        n = len(offsets) - 1
        if header is None or len(header) != 1 + 2 * n + offsets[-1]:
            raise FormatError("signature header does not match the offsets")
        sigs = []
        for row in reader:
            if len(row) != len(header):
                raise FormatError("ragged signature row")
            vals = np.array([_float(v) for v in row[1:]])
            w, fit, vec = vals[:n], vals[n:2 * n], vals[2 * n:]
            person = [vec[offsets[s]:offsets[s + 1]] if w[s] > 0 else None for s in range(n)]
            if all(p is None for p in person):
                sigs.append(None)
            else:
                sigs.append(Signature(person=person, weights=w, fit=fit))
    return sigs


def cmd_project(cfg) -> int:
    _require(cfg, "input", "model", "output")
    model = load_any(cfg["model"])
    obs = _observations(cfg["input"])
    sigs = _signatures(model, obs)
    out = Path(cfg["output"])
    if out.parent and not out.parent.exists():
        out.parent.mkdir(parents=True)
    write_signatures(out, sigs, _segment_sizes(model))
    return 0


def read_pairs(path) -> list:
    pairs = []
    with open(path, encoding="utf-8", newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if rows and rows[0][0].strip() == "id_a":
        rows = rows[1:]
    for row in rows:
        if len(row) != 3:
            raise FormatError(f"pairs rows need id_a,id_b,same; got {row}")
        same = _int(row[2])
        if same not in (0, 1):
            raise FormatError(f"same must be 0 or 1, got {row[2]!r}")
        pairs.append((_int(row[0]), _int(row[1]), same))
    if not pairs:
        raise FormatError("pairs file is empty")
    return pairs


def cmd_verify(cfg) -> int:
    _require(cfg, "input", "output")
    pairs = read_pairs(cfg["input"])
    if cfg["signatures"]:
        sigs = read_signatures(cfg["signatures"])
    else:
        _require(cfg, "model", "observations")
        sigs = _signatures(load_any(cfg["model"]), _observations(cfg["observations"]))
    for a, b, _ in pairs:
        if not (0 <= a < len(sigs) and 0 <= b < len(sigs)):
            raise FormatError(f"pair ({a}, {b}) refers to a missing observation")
    empty = Signature(person=[None], weights=np.ones(1))
    sa = [sigs[a] or empty for a, _, _ in pairs]
    sb = [sigs[b] or empty for _, b, _ in pairs]
    res = verify_pairs(sa, sb, [s for _, _, s in pairs], threshold=cfg["threshold"])
    out = Path(cfg["output"])
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "scores.csv", ["id_a", "id_b", "same", "score", "decision"],
               [(a, b, s, sc, int(dec)) for (a, b, s), sc, dec in
                zip(pairs, res.scores, res.decisions)])
    _write_roc(out / "roc.csv", res.roc)
    _write_csv(out / "summary.csv", ["pairs", "threshold", "accuracy", "calibration_accuracy", "auc"],
               [(len(pairs), res.threshold, res.accuracy, res.calibration_accuracy, res.auc)])
    return 0


def _write_roc(path, roc):
    _write_csv(path, ["threshold", "fpr", "tpr"],
               [("inf" if np.isinf(t) else _fmt(t), f, p) for t, f, p in roc])


def cmd_bench(cfg) -> int:
    _require(cfg, "output")
    methods = cfg["method"]
    if methods in (None, "", "default"):
        methods = ("pca", "tensorfaces", "compositional")
    elif methods == "all":
        methods = METHODS
    else:
        methods = tuple(m.strip() for m in methods.split(",") if m.strip())
        for m in methods:
            if m not in METHODS:
                raise FormatError(f"unknown benchmark method {m!r}")
    ranks = parse_ranks(cfg["ranks"]) or [4, 2, 2]
    if len(ranks) != 3 or any(r is None for r in ranks):
        raise FormatError("benchmark ranks are person,view,illumination")
    bench = BenchConfig(width=cfg["width"], height=cfg["height"], ranks=tuple(ranks),
                        train_people=cfg["train_people"], test_people=cfg["test_people"],
                        train_views=cfg["train_views"], train_lights=cfg["train_lights"],
                        images_per_person=cfg["images_per_person"], grid=parse_pair(cfg["grid"]),
                        pyramid_levels=cfg["pyramid_levels"], occlusion=cfg["occlusion"],
                        noise=cfg["noise"], mean_level=cfg["mean_level"], spread=cfg["spread"],
                        seed=cfg["seed"], reps=cfg["reps"], max_iters=cfg["max_iters"],
                        methods=methods, threads=thread_count())
    if bench.reps < 1:
        raise FormatError("reps must be >= 1")
    report = run_benchmark(bench)
    out = Path(cfg["output"])
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "report.csv",
               ["method", "accuracy_mean", "accuracy_std", "auc_mean", "reps", "pair_hash"],
               report.rows())
    _write_csv(out / "accuracy.csv", ["method", "seed", "accuracy", "auc"],
               [(m, bench.seed + k, a, u) for m, r in report.results.items()
                for k, (a, u) in enumerate(zip(r.accuracies, r.aucs))])
    for m, r in report.results.items():
        _write_roc(out / f"roc_{m}.csv", roc_curve(r.scores, r.labels))
    for m, r in report.results.items():
        log.info("%s runtime %.2f s", m, r.seconds)
    return 0


def thread_count() -> int:
    raw = os.environ.get("CHTF_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise FormatError(f"CHTF_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise FormatError("CHTF_THREADS must be >= 1")
    return n


HANDLERS = {"decompose": cmd_decompose, "synth": cmd_synth, "train": cmd_train,
            "project": cmd_project, "verify": cmd_verify, "bench": cmd_bench}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        flags = {k: v for k, v in vars(args).items() if k not in ("command", "verbose")}
        cfg = resolve(args.command, flags)
        with threadpool_limits(limits=thread_count()):
            return HANDLERS[args.command](cfg)
    except (FormatError, tnsr.TnsrFormatError, ArchiveFormatError, json.JSONDecodeError,
            csv.Error, UnicodeDecodeError) as exc:
        print(f"chtf: format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except OSError as exc:
        print(f"chtf: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (np.linalg.LinAlgError, FloatingPointError, ValueError, SignatureError) as exc:
        print(f"chtf: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
