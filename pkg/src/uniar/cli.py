"""Command-line entry point.

Subcommands: eval-heatmap, eval-scanpath, eval-rating (metric suites
over prediction/ground-truth directories), codec encode|decode, train,
predict, and mixture-check. Exit codes separate failure classes: 0
success, 1 usage, 2 bad data, 3 numerically undefined. Diagnostics are
one line on standard error; UNIAR_LOG (error, info, debug) controls
progress chatter. Every subcommand writes only to the paths it was
given, and identical invocations with identical seeds produce
byte-identical outputs.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .codec import decode_robust, encode_target, quantize
from .data import (
    MixtureConfig,
    gen_rating_task,
    gen_saliency_task,
    gen_scanpath_task,
    load_handle,
    mixture_next,
    mixture_start,
    read_grid,
    read_pgm,
    read_ppm,
    read_ratings,
    read_scanpaths,
    write_pgm,
    write_ppm,
    write_scanpaths,
)
from .errors import NumericError, UniarError, ValidationError
from .metrics import (
    evaluate_heatmap,
    fixations_to_map,
    meanshift_clusters,
    multimatch,
    plcc,
    semfed,
    semss,
    sequence_score,
    srcc,
)
from .model import (
    ModelConfig,
    init_params,
    load_params,
    predict_heatmap,
    predict_rating,
    predict_scanpath,
    read_config,
    run_training,
    save_params,
    write_config,
)
from .types import (
    FixationSet,
    GrayMap,
    ImageGrid,
    PromptSpec,
    Scanpath,
    SegmentationMap,
    fixation_pixels,
    parse_prompt,
)

log = logging.getLogger("uniar")

# training knobs without flags; changing them changes every run, so they
# live here as named constants rather than buried literals
TRAIN_LR = 3e-3
TRAIN_BATCH = 8
GEN_EVERY = 5


class UsageError(UniarError):
    """Bad invocation: unknown flag, missing argument, invalid UNIAR_LOG."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


class _StderrHandler(logging.StreamHandler):
    """Resolves sys.stderr at emit time, so redirection works."""

    @property
    def stream(self):
        return sys.stderr

    @stream.setter
    def stream(self, value):
        pass


_LOG_READY = False


def _setup_logging() -> None:
    global _LOG_READY
    name = os.environ.get("UNIAR_LOG", "error")
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    if name not in levels:
        raise UsageError(f"UNIAR_LOG must be one of error, info, debug; got {name!r}")
    if not _LOG_READY:
        handler = _StderrHandler()
        handler.setFormatter(logging.Formatter("uniar %(levelname)s: %(message)s"))
        log.addHandler(handler)
        _LOG_READY = True
    log.setLevel(levels[name])


# ---------------------------------------------------------------------------
# table rendering

def report_table(rows, metrics) -> str:
    """Fixed-width table: one label column, one column per metric.

    Metric names carry their direction as a +/- suffix (higher/lower is
    better); the best cell per column is starred, ties all starred.
    Cells print with 3 decimals, missing values as n/a.
    """
    if not rows:
        raise ValidationError("table needs at least one row")
    directions = [m[-1] if m.endswith(("+", "-")) else "+" for m in metrics]
    for label, values in rows:
        if len(values) != len(metrics):
            raise ValidationError(f"row {label!r} has {len(values)} cells for "
                                  f"{len(metrics)} metrics")
    best = []
    for j, d in enumerate(directions):
        seen = [v[j] for _, v in rows if v[j] is not None]
        if not seen:
            best.append(None)
        else:
            best.append(max(seen) if d == "+" else min(seen))
    cells = []
    for label, values in rows:
        line = []
        for j, v in enumerate(values):
            if v is None:
                line.append("n/a")
            else:
                star = "*" if v == best[j] else ""
                line.append(f"{star}{v:.3f}")
        cells.append((str(label), line))
    label_w = max(len("id"), max(len(c[0]) for c in cells))
    widths = [max(len(m), max(len(c[1][j]) for c in cells)) for j, m in enumerate(metrics)]
    out = ["id".ljust(label_w) + "".join("  " + m.rjust(widths[j])
                                         for j, m in enumerate(metrics))]
    for label, line in cells:
        out.append(label.ljust(label_w) + "".join("  " + cell.rjust(widths[j])
                                                  for j, cell in enumerate(line)))
    return "\n".join(out)


def _mean_row(rows):
    """Column-wise mean over the rows that have the column."""
    n = len(rows[0][1])
    means = []
    for j in range(n):
        seen = [v[j] for _, v in rows if v[j] is not None]
        means.append(float(np.mean(seen)) if seen else None)
    return "mean", means


def _write_csv(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for label, values in rows:
            writer.writerow([label] + ["" if v is None else repr(v) for v in values])


def _pmap(fn, tasks, jobs):
    """Order-preserving map, optionally across processes. Aggregations
    downstream are plain means, so the job count never changes results."""
    if jobs <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks))


# ---------------------------------------------------------------------------
# shared directory plumbing

def _map_files(dirpath):
    """Stem -> path for .grid/.pgm files; the lossless .grid wins when
    both exist."""
    if not os.path.isdir(dirpath):
        raise ValidationError(f"not a directory: {dirpath}")
    found = {}
    for f in sorted(os.listdir(dirpath)):
        stem, ext = os.path.splitext(f)
        if ext in (".grid", ".pgm"):
            found.setdefault(stem, {})[ext] = os.path.join(dirpath, f)
    return {stem: d.get(".grid", d.get(".pgm")) for stem, d in found.items()}


def _read_map(path) -> GrayMap:
    m = read_grid(path) if path.endswith(".grid") else read_pgm(path)
    if not isinstance(m, GrayMap):
        raise ValidationError(f"{path}: expected a float map, found an int grid")
    return m


def _path_files(dirpath):
    if not os.path.isdir(dirpath):
        raise ValidationError(f"not a directory: {dirpath}")
    return {os.path.splitext(f)[0]: os.path.join(dirpath, f)
            for f in sorted(os.listdir(dirpath)) if f.endswith(".jsonl")}


def _read_one_scanpath(path) -> Scanpath:
    entries = read_scanpaths(path)
    if len(entries) != 1:
        raise ValidationError(f"{path}: expected exactly one scanpath, found {len(entries)}")
    return entries[0][0]


def _pooled_fixations(path) -> FixationSet:
    """All fixations of all observers in one file, order preserved."""
    entries = read_scanpaths(path)
    if not entries:
        raise ValidationError(f"{path}: no scanpaths")
    frame = entries[0][0].frame
    for p, _ in entries[1:]:
        if p.frame != frame:
            raise ValidationError(f"{path}: observers disagree on the frame")
    return FixationSet(frame, np.vstack([p.fixations for p, _ in entries]))


# ---------------------------------------------------------------------------
# eval-heatmap

HEATMAP_COLUMNS = ("cc", "kld", "auc_judd", "sauc", "nss", "sim", "rmse", "r2")
HEATMAP_HEADERS = ("cc+", "kld-", "auc_judd+", "sauc+", "nss+", "sim+", "rmse-", "r2+")


def _heatmap_one(task):
    sid, pred_path, gt_path, fix_path, neg_norm, seed, sigma = task
    pred = _read_map(pred_path)
    fixations = _pooled_fixations(fix_path) if fix_path else None
    if gt_path is not None:
        gt = _read_map(gt_path)
    else:
        if fixations is None or sigma is None:
            raise ValidationError(
                f"{sid}: no ground-truth map; need fixations and --sigma to build one")
        gt = fixations_to_map(fixations, sigma)
    negatives = None
    if fixations is not None and neg_norm is not None and len(neg_norm):
        # negatives come from other images; rescale their normalized
        # coordinates into this ground truth's frame
        pts = neg_norm * np.array([gt.width, gt.height], dtype=np.float64)
        negatives = FixationSet((gt.width, gt.height), pts)
    s = evaluate_heatmap(pred, gt, fixations, negatives, seed=seed)
    return sid, [s.cc, s.kld, s.auc_judd, s.sauc, s.nss, s.sim, s.rmse, s.r2]


def _cmd_eval_heatmap(args) -> None:
    preds = _map_files(args.pred)
    gts = _map_files(args.gt)
    if not preds:
        raise ValidationError(f"{args.pred}: no .pgm or .grid maps")
    fixes = _path_files(args.fix) if args.fix else {}
    norm_points = {}
    for sid, path in fixes.items():
        fs = _pooled_fixations(path)
        norm_points[sid] = fs.points / np.array(fs.frame, dtype=np.float64)
    tasks = []
    for sid in sorted(preds):
        gt_path = gts.get(sid)
        if gt_path is None and not fixes.get(sid):
            raise ValidationError(f"{sid}: no ground truth in {args.gt}")
        others = [pts for k, pts in norm_points.items() if k != sid]
        neg = np.vstack(others) if others else None
        tasks.append((sid, preds[sid], gt_path, fixes.get(sid), neg, args.seed, args.sigma))
    log.info("eval-heatmap: %d samples, jobs=%d", len(tasks), args.jobs)
    rows = _pmap(_heatmap_one, tasks, args.jobs)
    rows.append(_mean_row(rows))
    if args.out:
        _write_csv(args.out, ("id",) + HEATMAP_COLUMNS, rows)
    print(report_table(rows, HEATMAP_HEADERS))


# ---------------------------------------------------------------------------
# eval-scanpath

SCANPATH_COLUMNS = ("seq_score", "semss", "semfed",
                    "mm_shape", "mm_direction", "mm_length", "mm_position")
SCANPATH_HEADERS = ("seq_score+", "semss+", "semfed-",
                    "mm_shape+", "mm_direction+", "mm_length+", "mm_position+")


def _scanpath_one(task):
    sid, pred_path, gt_path, seg_path, bandwidth = task
    pred = _read_one_scanpath(pred_path)
    gt = _read_one_scanpath(gt_path)
    clusters = meanshift_clusters(FixationSet(gt.frame, gt.fixations), bandwidth=bandwidth)
    seq = sequence_score(pred, gt, clusters)
    ss = fed = None
    if seg_path is not None:
        seg = read_grid(seg_path)
        if not isinstance(seg, SegmentationMap):
            raise ValidationError(f"{seg_path}: segmentation must be an int grid")
        ss = semss(pred, gt, seg)
        fed = float(semfed(pred, gt, seg))
    mm = multimatch(pred, gt)
    return sid, [seq, ss, fed, mm.shape, mm.direction, mm.length, mm.position]


def _cmd_eval_scanpath(args) -> None:
    preds = _path_files(args.pred)
    gts = _path_files(args.gt)
    if not preds:
        raise ValidationError(f"{args.pred}: no .jsonl scanpaths")
    segs = _map_files(args.seg) if args.seg else {}
    tasks = []
    for sid in sorted(preds):
        if sid not in gts:
            raise ValidationError(f"{sid}: no ground truth in {args.gt}")
        tasks.append((sid, preds[sid], gts[sid], segs.get(sid), args.bandwidth))
    log.info("eval-scanpath: %d samples, jobs=%d", len(tasks), args.jobs)
    rows = _pmap(_scanpath_one, tasks, args.jobs)
    rows.append(_mean_row(rows))
    if args.out:
        _write_csv(args.out, ("id",) + SCANPATH_COLUMNS, rows)
    print(report_table(rows, SCANPATH_HEADERS))


# ---------------------------------------------------------------------------
# eval-rating

def _cmd_eval_rating(args) -> None:
    pairs = read_ratings(args.pairs)
    if not pairs:
        raise ValidationError(f"{args.pairs}: no rating pairs")
    pred = [p for _, p, _ in pairs]
    obs = [o for _, _, o in pairs]
    rows = [(os.path.basename(args.pairs), [srcc(pred, obs), plcc(pred, obs)])]
    if args.out:
        _write_csv(args.out, ("id", "srcc", "plcc"), rows)
    print(report_table(rows, ("srcc+", "plcc+")))


# ---------------------------------------------------------------------------
# codec

def _cmd_codec(args) -> None:
    if args.mode == "encode":
        lines = [encode_target(quantize(path)).text
                 for path, _ in read_scanpaths(args.input)]
        text = "\n".join(lines) + ("\n" if lines else "")
        if args.out:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
    else:
        result = decode_robust(args.input, tuple(args.frame))
        if not result.valid:
            print("INVALID")  # malformed strings are data, not failure
        else:
            print(json.dumps([[x, y] for x, y in result.scanpath.fixations.tolist()]))


# ---------------------------------------------------------------------------
# train

def _cmd_train(args) -> None:
    if bool(args.synthetic) == bool(args.data):
        raise UsageError("pass either --synthetic or --data DIR (at least once)")
    cfg = read_config(args.config) if args.config else ModelConfig()
    seed = args.seed
    if args.synthetic:
        # 64 mixed samples across the three behaviors
        handles = (gen_saliency_task(seed, 22, size=cfg.image_size),
                   gen_scanpath_task(seed, 21, size=cfg.image_size),
                   gen_rating_task(seed, 21, size=cfg.image_size))
    else:
        handles = tuple(load_handle(d) for d in args.data)
    mix = MixtureConfig(handles, seed=seed)
    rng = mixture_start(mix)

    def next_sample():
        nonlocal rng
        s, rng = mixture_next(mix, rng)
        return s

    params = init_params(cfg, seed=seed)
    log.info("train: %d steps, %d handles, lr=%g", args.steps, len(handles), TRAIN_LR)
    params, _, rows = run_training(params, cfg, next_sample, steps=args.steps,
                                   batch_size=TRAIN_BATCH, lr=TRAIN_LR,
                                   gen_every=GEN_EVERY)
    os.makedirs(args.out, exist_ok=True)
    save_params(os.path.join(args.out, "model.ckpt"), params)
    write_config(os.path.join(args.out, "config.txt"), cfg)
    with open(os.path.join(args.out, "train_log.csv"), "w", encoding="utf-8",
              newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("step", "loss", "valid"))
        for step, loss, valid in rows:
            writer.writerow((step, repr(loss), "" if valid is None else valid))
    print(f"step {rows[-1][0]} loss {rows[-1][1]:.6f}")


# ---------------------------------------------------------------------------
# predict

# 3x5 pixel digit glyphs for fixation-order overlays
_FONT = {
    "0": ("111", "101", "101", "101", "111"),
    "1": ("010", "110", "010", "010", "111"),
    "2": ("111", "001", "111", "100", "111"),
    "3": ("111", "001", "111", "001", "111"),
    "4": ("101", "101", "111", "001", "001"),
    "5": ("111", "100", "111", "001", "111"),
    "6": ("111", "100", "111", "101", "111"),
    "7": ("111", "001", "010", "010", "010"),
    "8": ("111", "101", "111", "101", "111"),
    "9": ("111", "101", "111", "001", "111"),
}


def _draw_disc(px, cx, cy, radius, color):
    h, w = px.shape[:2]
    y0, y1 = max(0, cy - radius), min(h, cy + radius + 1)
    x0, x1 = max(0, cx - radius), min(w, cx + radius + 1)
    yy, xx = np.mgrid[y0:y1, x0:x1]
    mask = (yy - cy) ** 2 + (xx - cx) ** 2 <= radius * radius
    px[y0:y1, x0:x1][mask] = color


def _draw_number(px, cx, cy, number, color):
    digits = str(number)
    block_w = 4 * len(digits) - 1
    top, left = cy - 2, cx - block_w // 2
    h, w = px.shape[:2]
    for d, ch in enumerate(digits):
        for r, bits in enumerate(_FONT[ch]):
            for c, bit in enumerate(bits):
                if bit == "1":
                    y, x = top + r, left + 4 * d + c
                    if 0 <= y < h and 0 <= x < w:
                        px[y, x] = color


def render_overlay(image: ImageGrid, path: Scanpath) -> ImageGrid:
    """Fixation order as numbered discs on a copy of the image."""
    px = image.pixels.copy()
    cols, rows = fixation_pixels(path.fixations, image.width, image.height)
    for k, (cx, cy) in enumerate(zip(cols, rows), start=1):
        radius = max(4, 2 * len(str(k)) + 2)
        _draw_disc(px, int(cx), int(cy), radius, np.array([0.85, 0.1, 0.1]))
        _draw_number(px, int(cx), int(cy), k, np.array([1.0, 1.0, 1.0]))
    return ImageGrid(image.width, image.height, px)


def _cmd_predict(args) -> None:
    cfg = read_config(args.config)
    params = load_params(args.ckpt, cfg)
    image = read_ppm(args.image)
    prompt = parse_prompt(args.prompt)
    if args.overlay and prompt.kind != "scanpath":
        raise UsageError("--overlay only applies to scanpath prompts")
    if prompt.kind in ("heatmap", "scanpath") and not args.out:
        raise UsageError(f"--out required for {prompt.kind} prediction")
    if prompt.kind == "heatmap":
        write_pgm(args.out, predict_heatmap(image, prompt, params, cfg))
        log.info("predict: heatmap -> %s", args.out)
    elif prompt.kind == "scanpath":
        raw, result = predict_scanpath(image, prompt, params, cfg)
        log.debug("predict: raw tokens %r", raw)
        if not result.valid:
            print("INVALID")  # undecodable generation is data, not failure
            return
        write_scanpaths(args.out, [(result.scanpath, prompt)])
        if args.overlay:
            write_ppm(args.overlay, render_overlay(image, result.scanpath))
        log.info("predict: %d fixations -> %s", len(result.scanpath), args.out)
    else:
        score = predict_rating(image, prompt, params, cfg).score
        if args.out:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(repr(score) + "\n")
        print(repr(score))


# ---------------------------------------------------------------------------
# mixture-check

def _cmd_mixture_check(args) -> None:
    # 11 handles with a 1000:1 size skew; equal-rate sampling should
    # still hit each about draws/11 times
    sizes = [1000] + [1] * 10
    handles = tuple(gen_rating_task(s, n, size=8) for s, n in enumerate(sizes))
    owner = {id(s): k for k, h in enumerate(handles) for s in h.samples}
    mix = MixtureConfig(handles, seed=args.seed)
    rng = mixture_start(mix)
    counts = [0] * len(handles)
    for _ in range(args.draws):
        s, rng = mixture_next(mix, rng)
        counts[owner[id(s)]] += 1
    rows = [(f"{k}:{h.name}", [len(h.samples), c])
            for k, (h, c) in enumerate(zip(handles, counts))]
    _write_csv(args.out, ("handle", "size", "draws"), rows)
    log.info("mixture-check: %d draws over %d handles -> %s",
             args.draws, len(handles), args.out)
    print(f"{args.draws} draws over {len(handles)} handles, "
          f"counts {min(counts)}..{max(counts)}")


# ---------------------------------------------------------------------------
# wiring

def _build_parser() -> _Parser:
    parser = _Parser(prog="uniar", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval-heatmap", help="map metrics over a prediction directory")
    p.add_argument("--pred", required=True, help="directory of predicted .pgm/.grid maps")
    p.add_argument("--gt", required=True, help="directory of ground-truth maps")
    p.add_argument("--fix", help="directory of per-sample fixation .jsonl files")
    p.add_argument("--out", help="per-sample CSV destination")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sigma", type=float,
                   help="blur radius to build missing ground-truth maps from fixations")
    p.set_defaults(func=_cmd_eval_heatmap)

    p = sub.add_parser("eval-scanpath", help="scanpath metrics over a prediction directory")
    p.add_argument("--pred", required=True, help="directory of predicted .jsonl scanpaths")
    p.add_argument("--gt", required=True, help="directory of ground-truth .jsonl scanpaths")
    p.add_argument("--seg", help="directory of .grid segmentations for SemSS/SemFED")
    p.add_argument("--out", help="per-sample CSV destination")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--bandwidth", type=float,
                   help="mean-shift bandwidth (default: frame diagonal / 10)")
    p.set_defaults(func=_cmd_eval_scanpath)

    p = sub.add_parser("eval-rating", help="rating correlations over a pairs CSV")
    p.add_argument("--pairs", required=True, help="CSV with header id,predicted,observed")
    p.add_argument("--out", help="summary CSV destination")
    p.set_defaults(func=_cmd_eval_rating)

    p = sub.add_parser("codec", help="scanpath token codec")
    p.add_argument("mode", choices=("encode", "decode"))
    p.add_argument("input", help="encode: scanpath .jsonl file; decode: token string")
    p.add_argument("--frame", type=int, nargs=2, metavar=("W", "H"), default=(1000, 1000),
                   help="decode target frame")
    p.add_argument("--out", help="encode output file (default: stdout)")
    p.set_defaults(func=_cmd_codec)

    p = sub.add_parser("train", help="train on synthetic or on-disk datasets")
    p.add_argument("--synthetic", action="store_true",
                   help="64 generated samples mixing all three behaviors")
    p.add_argument("--data", action="append", default=[], metavar="DIR",
                   help="dataset handle directory (repeatable)")
    p.add_argument("--config", help="model config file (default config otherwise)")
    p.add_argument("--steps", type=int, default=600)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="directory for model.ckpt, config.txt, train_log.csv")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("predict", help="run one image through a trained checkpoint")
    p.add_argument("image", help="input .ppm image")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--prompt", required=True,
                   help='e.g. "INPUT_TYPE: natural image OUTPUT_TYPE: scanpath"')
    p.add_argument("--out", help="heatmap .pgm, scanpath .jsonl, or score text file")
    p.add_argument("--overlay", help="write fixation-order discs over the image (.ppm)")
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("mixture-check", help="histogram of equal-rate mixture draws")
    p.add_argument("--draws", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="histogram CSV destination")
    p.set_defaults(func=_cmd_mixture_check)
    return parser


def run(argv=None) -> int:
    """Parse and dispatch. Returns the process exit code instead of
    raising, so it is callable in-process."""
    try:
        _setup_logging()
        args = _build_parser().parse_args(argv)
        args.func(args)
        return 0
    except SystemExit as e:  # argparse --help
        return int(e.code or 0)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except NumericError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except (ValidationError, OSError, UnicodeDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run(sys.argv[1:]))
