"""Dataset handles on disk, synthetic task generators, the equal-rate
mixture sampler, and the file formats everything travels in.

Synthetic stimuli stand in for real gaze/rating corpora: bright Gaussian
blobs on noise for saliency and scanpaths, uniform-noise fields for
contrast-scored ratings. Every sample is a pure function of (seed, task,
index), so any single stimulus can be regenerated without building the
whole set, and a dataset of n samples is a prefix of the same seed's
dataset of n + k.

Formats: text grids (`UARGRID` header), binary PGM (P5, 16-bit) for
maps, binary PPM (P6) for images, JSON lines for scanpaths, CSV for
rating pairs. All writers are deterministic byte-for-byte.
"""

from __future__ import annotations

import csv
import json
import os
import re
from dataclasses import dataclass

import numpy as np

from .errors import NumericError, ParseError, ValidationError
from .types import (
    INPUT_TYPES,
    DatasetHandle,
    GrayMap,
    ImageGrid,
    PromptSpec,
    RatingSample,
    Sample,
    Scanpath,
    SegmentationMap,
    round_halfaway,
    target_kind,
)

# ---------------------------------------------------------------------------
# synthetic scenes

BLOB_SIGMA = 5.0
BLOB_MARGIN = 10          # keeps ~2 sigma of blob mass inside the frame
BLOB_MIN_DIST = 18.0      # at 18px a 0.6 blob flanked by two 1.0 neighbours
                          # still owns its center pixel (spillover gain over
                          # one pixel < the blob's own one-pixel falloff)
BLOB_AMP_RANGE = (0.6, 1.0)
BLOB_NOISE_MAX = 0.25

_TASK_CODES = {"saliency": 1, "scanpath": 2, "rating": 3}


def sample_rng(seed: int, task: str, index: int) -> np.random.Generator:
    """Independent stream for one synthetic sample.

    Keyed by (seed, task, index) so the three tasks never share draws at
    equal seeds and regenerating sample i needs no other sample.
    """
    if task not in _TASK_CODES:
        raise ValidationError(f"unknown task {task!r}")
    if index < 0:
        raise ValidationError("sample index must be >= 0")
    return np.random.default_rng(
        np.random.SeedSequence(entropy=(int(seed), _TASK_CODES[task], int(index))))


@dataclass(frozen=True)
class BlobScene:
    """Parametric truth behind one blob stimulus: the rendered image,
    the clean ground-truth map, and the blob centers/amplitudes that
    produced both."""

    image: ImageGrid
    gt: GrayMap
    centers: tuple
    amps: tuple


def blob_scene(rng: np.random.Generator, size: int = 64) -> BlobScene:
    """Render 1-3 bright Gaussian blobs on uniform noise.

    Centers sit on integer pixels, at least BLOB_MARGIN from every edge
    and BLOB_MIN_DIST apart, so each center is the argmax of the clean
    map within its own neighbourhood and the global argmax is the
    brightest blob's center. The ground truth is the noise-free blob sum
    scaled so its maximum is exactly 1.
    """
    # rejection sampling needs the center box to span at least twice the
    # separation radius or three blobs may not fit at all
    if size - 2 * BLOB_MARGIN - 1 < 2 * BLOB_MIN_DIST:
        raise ValidationError(
            f"scene size {size} cannot hold three blobs {BLOB_MIN_DIST:.0f}px apart; "
            f"need at least {int(2 * BLOB_MIN_DIST + 2 * BLOB_MARGIN + 1)}")
    count = int(rng.integers(1, 4))
    centers = []
    attempts = 0
    while len(centers) < count:
        attempts += 1
        if attempts > 10_000:
            raise NumericError("blob placement did not converge")
        cx = int(rng.integers(BLOB_MARGIN, size - BLOB_MARGIN))
        cy = int(rng.integers(BLOB_MARGIN, size - BLOB_MARGIN))
        if all((cx - ox) ** 2 + (cy - oy) ** 2 >= BLOB_MIN_DIST ** 2 for ox, oy in centers):
            centers.append((cx, cy))
    amps = rng.uniform(*BLOB_AMP_RANGE, size=count)
    yy, xx = np.mgrid[0:size, 0:size]
    field = np.zeros((size, size))
    for (cx, cy), a in zip(centers, amps):
        field += a * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2.0 * BLOB_SIGMA ** 2))
    noise = rng.uniform(0.0, BLOB_NOISE_MAX, size=(size, size))
    gray = np.clip(field + noise, 0.0, 1.0)
    image = ImageGrid(size, size, np.repeat(gray[:, :, None], 3, axis=2))
    gt = GrayMap(size, size, field / field.max(), kind="unit-range")
    return BlobScene(image, gt, tuple(centers), tuple(float(a) for a in amps))


def noise_scene(rng: np.random.Generator, size: int = 64):
    """Uniform-noise stimulus for the rating task.

    gray = 0.5 + a*u with u ~ U[-1, 1] and a <= 0.5, so values never
    clip and raising the amplitude raises the RMS contrast exactly.
    Returns (image, amplitude, field) with field the unit noise u.
    """
    u = rng.uniform(-1.0, 1.0, size=(size, size))
    a = float(rng.uniform(0.05, 0.5))
    gray = 0.5 + a * u
    image = ImageGrid(size, size, np.repeat(gray[:, :, None], 3, axis=2))
    return image, a, u


def contrast_score(image) -> float:
    """Clamped RMS contrast: min(1, 2 * std(gray)).

    Accepts an ImageGrid or a bare 2-D/3-D array; 3-channel input is
    averaged to gray first. A constant image scores 0; a 0/1
    checkerboard has std 0.5 and hits the ceiling at exactly 1.
    """
    pixels = image.pixels if isinstance(image, ImageGrid) else np.asarray(image, dtype=np.float64)
    gray = pixels.mean(axis=2) if pixels.ndim == 3 else pixels
    if gray.min() == gray.max():  # constant image scores exactly 0
        return 0.0
    return float(min(1.0, 2.0 * gray.std()))


def _check_gen_args(seed, n, size, input_type):
    if n < 1:
        raise ValidationError("need at least one sample")
    if input_type not in INPUT_TYPES:
        raise ValidationError(f"unknown input type: {input_type!r}")


def gen_saliency_task(seed: int, n: int, size: int = 64,
                      input_type: str = "natural image",
                      output_type: str = "saliency heatmap") -> DatasetHandle:
    """Blob images with their clean blob-sum maps as heatmap targets.

    output_type may be either heatmap flavour; the stimuli are the same,
    only the prompt tag changes, which is exactly how a transfer
    scenario is expressed.
    """
    _check_gen_args(seed, n, size, input_type)
    if target_kind(output_type) != "heatmap":
        raise ValidationError(f"{output_type!r} is not a heatmap output type")
    prompt = PromptSpec(input_type, output_type)
    samples = []
    for i in range(n):
        scene = blob_scene(sample_rng(seed, "saliency", i), size)
        samples.append(Sample(scene.image, prompt, scene.gt))
    return DatasetHandle(f"blobs-{output_type.split()[0]}", input_type, output_type,
                         tuple(samples))


def gen_scanpath_task(seed: int, n: int, size: int = 64,
                      input_type: str = "natural image") -> DatasetHandle:
    """Blob images with fixation sequences as targets.

    Even-indexed samples free-view: the path visits every blob center in
    decreasing amplitude order. Odd-indexed samples carry the query
    "brightest" and fixate only the brightest center, mimicking
    target-driven search.
    """
    _check_gen_args(seed, n, size, input_type)
    samples = []
    for i in range(n):
        scene = blob_scene(sample_rng(seed, "scanpath", i), size)
        order = np.argsort(-np.asarray(scene.amps), kind="stable")
        if i % 2 == 1:
            prompt = PromptSpec(input_type, "scanpath", query="brightest")
            fixations = [scene.centers[order[0]]]
        else:
            prompt = PromptSpec(input_type, "scanpath")
            fixations = [scene.centers[k] for k in order]
        path = Scanpath((size, size), np.asarray(fixations, dtype=np.float64))
        samples.append(Sample(scene.image, prompt, path))
    return DatasetHandle("blobs-scanpath", input_type, "scanpath", tuple(samples))


def gen_rating_task(seed: int, n: int, size: int = 64,
                    input_type: str = "natural image") -> DatasetHandle:
    """Noise images scored by clamped RMS contrast."""
    _check_gen_args(seed, n, size, input_type)
    prompt = PromptSpec(input_type, "aesthetics score")
    samples = []
    for i in range(n):
        image, _, _ = noise_scene(sample_rng(seed, "rating", i), size)
        samples.append(Sample(image, prompt, RatingSample(contrast_score(image))))
    return DatasetHandle("noise-rating", input_type, "aesthetics score", tuple(samples))


# ---------------------------------------------------------------------------
# mixture

@dataclass(frozen=True)
class MixtureConfig:
    """One or more dataset handles sampled at equal rate, plus the seed
    that makes the draw stream reproducible."""

    handles: tuple
    seed: int = 0

    def __post_init__(self):
        handles = tuple(self.handles)
        if not handles:
            raise ValidationError("mixture needs at least one handle")
        for h in handles:
            if not isinstance(h, DatasetHandle):
                raise ValidationError("mixture handles must be DatasetHandle objects")
        object.__setattr__(self, "handles", handles)
        object.__setattr__(self, "seed", int(self.seed))


def mixture_start(cfg: MixtureConfig) -> np.random.Generator:
    """Fresh draw stream for one training loop."""
    return np.random.default_rng(cfg.seed)


def mixture_next(cfg: MixtureConfig, rng_state: np.random.Generator):
    """Draw one sample: handle uniform over handles, then sample uniform
    within the handle, so every handle contributes at rate 1/D no matter
    how many samples it holds. Returns (sample, rng_state)."""
    if not isinstance(cfg, MixtureConfig):
        raise ValidationError("cfg must be a MixtureConfig")
    handle = cfg.handles[int(rng_state.integers(len(cfg.handles)))]
    sample = handle.samples[int(rng_state.integers(len(handle.samples)))]
    return sample, rng_state


# ---------------------------------------------------------------------------
# text grids

_GRID_MAGIC = "UARGRID"


def _tokens_with_columns(line: str):
    return [(m.group(0), m.start() + 1) for m in re.finditer(r"\S+", line)]


def write_grid(path, obj) -> None:
    """GrayMap -> float grid, SegmentationMap -> int grid.

    Header `UARGRID <width> <height> <float|int>`, then height rows of
    width space-separated values. Floats print with 17 significant
    digits, enough to reproduce the float64 exactly on read.
    """
    if isinstance(obj, GrayMap):
        mode, arr = "float", obj.values
        fmt = "%.17g"
    elif isinstance(obj, SegmentationMap):
        mode, arr = "int", obj.labels
        fmt = "%d"
    else:
        raise ValidationError("write_grid takes a GrayMap or SegmentationMap")
    h, w = arr.shape
    lines = [f"{_GRID_MAGIC} {w} {h} {mode}"]
    for row in arr:
        lines.append(" ".join(fmt % v for v in row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_grid(path):
    """Inverse of write_grid. Malformed input raises ParseError naming
    the 1-based line and column of the offending token."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty grid file", line=1, column=1)
    header = _tokens_with_columns(lines[0])
    if not header or header[0][0] != _GRID_MAGIC:
        col = header[0][1] if header else 1
        raise ParseError(f"expected {_GRID_MAGIC} magic", line=1, column=col)
    if len(header) < 4:
        raise ParseError("header needs `UARGRID <width> <height> <float|int>`",
                         line=1, column=len(lines[0]) + 1)
    if len(header) > 4:
        raise ParseError("trailing tokens after grid mode", line=1, column=header[4][1])
    dims = []
    for tok, col in header[1:3]:
        try:
            v = int(tok)
        except ValueError:
            raise ParseError(f"expected an integer dimension, got {tok!r}", line=1, column=col)
        if v <= 0:
            raise ParseError(f"dimensions must be positive, got {v}", line=1, column=col)
        dims.append(v)
    width, height = dims
    mode, mode_col = header[3]
    if mode not in ("float", "int"):
        raise ParseError(f"mode must be float or int, got {mode!r}", line=1, column=mode_col)
    if len(lines) < 1 + height:
        raise ParseError(f"expected {height} data rows, found {len(lines) - 1}",
                         line=len(lines) + 1, column=1)
    rows = []
    for r in range(height):
        lineno = 2 + r
        toks = _tokens_with_columns(lines[1 + r])
        if len(toks) != width:
            col = toks[width][1] if len(toks) > width else len(lines[1 + r]) + 1
            raise ParseError(f"row has {len(toks)} values, expected {width}",
                             line=lineno, column=col)
        row = []
        for tok, col in toks:
            try:
                v = int(tok) if mode == "int" else float(tok)
            except ValueError:
                raise ParseError(f"bad {mode} literal {tok!r}", line=lineno, column=col)
            if mode == "float" and not np.isfinite(v):
                raise ParseError(f"non-finite value {tok!r}", line=lineno, column=col)
            row.append(v)
        rows.append(row)
    if mode == "int":
        return SegmentationMap(width, height, np.asarray(rows, dtype=np.int64))
    return GrayMap(width, height, np.asarray(rows, dtype=np.float64))


# ---------------------------------------------------------------------------
# binary rasters

def _pnm_header(buf: bytes, magic: bytes, path):
    """Parse `P5`/`P6`, then width/height/maxval with netpbm whitespace
    and # comment rules. Returns (width, height, maxval, raster offset)."""
    if buf[:2] != magic:
        raise ParseError(f"{path}: expected {magic.decode()} magic")
    pos, vals = 2, []
    while len(vals) < 3:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        if pos < len(buf) and buf[pos:pos + 1] == b"#":
            while pos < len(buf) and buf[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ParseError(f"{path}: truncated header")
        try:
            vals.append(int(buf[start:pos]))
        except ValueError:
            raise ParseError(f"{path}: bad header token {buf[start:pos]!r}")
    if pos >= len(buf):
        raise ParseError(f"{path}: missing raster")
    pos += 1  # single whitespace byte separates maxval from raster
    w, h, maxval = vals
    if w <= 0 or h <= 0:
        raise ParseError(f"{path}: dimensions must be positive, got {w}x{h}")
    if not (0 < maxval < 65536):
        raise ParseError(f"{path}: maxval must lie in [1, 65535], got {maxval}")
    return w, h, maxval, pos


def _pnm_raster(buf, pos, count, maxval, path):
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = count * dtype.itemsize
    if len(buf) - pos < need:
        raise ParseError(f"{path}: raster truncated ({len(buf) - pos} of {need} bytes)")
    raw = np.frombuffer(buf[pos:pos + need], dtype=dtype).astype(np.float64)
    if raw.max(initial=0.0) > maxval:
        raise ParseError(f"{path}: raster value exceeds maxval {maxval}")
    return raw / maxval


def write_pgm(path, gmap: GrayMap) -> None:
    """16-bit binary PGM. Values must lie in [0, 1]; each maps to
    round(v * 65535)."""
    v = gmap.values
    if v.min() < 0.0 or v.max() > 1.0:
        raise ValidationError("PGM output needs values in [0, 1]")
    raster = round_halfaway(v * 65535.0).astype(">u2")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{gmap.width} {gmap.height}\n65535\n".encode("ascii"))
        fh.write(raster.tobytes())


def read_pgm(path) -> GrayMap:
    with open(path, "rb") as fh:
        buf = fh.read()
    w, h, maxval, pos = _pnm_header(buf, b"P5", path)
    values = _pnm_raster(buf, pos, w * h, maxval, path).reshape(h, w)
    return GrayMap(w, h, values, kind="unit-range")


def write_ppm(path, image: ImageGrid) -> None:
    """8-bit binary PPM; each channel maps to round(v * 255)."""
    raster = round_halfaway(image.pixels * 255.0).astype("u1")
    with open(path, "wb") as fh:
        fh.write(f"P6\n{image.width} {image.height}\n255\n".encode("ascii"))
        fh.write(raster.tobytes())


def read_ppm(path) -> ImageGrid:
    with open(path, "rb") as fh:
        buf = fh.read()
    w, h, maxval, pos = _pnm_header(buf, b"P6", path)
    pixels = _pnm_raster(buf, pos, w * h * 3, maxval, path).reshape(h, w, 3)
    return ImageGrid(w, h, pixels)


# ---------------------------------------------------------------------------
# scanpath JSON lines

def write_scanpaths(path, items) -> None:
    """One JSON object per line: frame, fixations, input_type,
    output_type, query (null when absent). Floats print with full
    precision, so numeric round trips are exact."""
    lines = []
    for scanpath, prompt in items:
        if not isinstance(scanpath, Scanpath) or not isinstance(prompt, PromptSpec):
            raise ValidationError("write_scanpaths takes (Scanpath, PromptSpec) pairs")
        lines.append(json.dumps({
            "frame": [scanpath.frame[0], scanpath.frame[1]],
            "fixations": [[float(x), float(y)] for x, y in scanpath.fixations],
            "input_type": prompt.input_type,
            "output_type": prompt.output_type,
            "query": prompt.query,
        }))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + ("\n" if lines else ""))


_SCANPATH_FIELDS = ("frame", "fixations", "input_type", "output_type", "query")


def read_scanpaths(path):
    """Inverse of write_scanpaths; returns a list of (Scanpath,
    PromptSpec). Structural violations (empty fixation list, point
    outside the frame, unknown prompt type) are rejected with the line
    number attached."""
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f"bad JSON: {e.msg}", line=lineno, column=e.colno)
            if not isinstance(obj, dict):
                raise ParseError("each line must hold a JSON object", line=lineno)
            missing = [k for k in _SCANPATH_FIELDS if k not in obj]
            if missing:
                raise ParseError(f"missing fields: {', '.join(missing)}", line=lineno)
            try:
                scanpath = Scanpath(tuple(obj["frame"]), np.asarray(obj["fixations"],
                                                                    dtype=np.float64))
                prompt = PromptSpec(obj["input_type"], obj["output_type"], obj["query"])
            except (ValidationError, TypeError, ValueError) as e:
                raise ParseError(str(e), line=lineno)
            out.append((scanpath, prompt))
    return out


# ---------------------------------------------------------------------------
# rating CSV

RATING_HEADER = ("id", "predicted", "observed")


def write_ratings(path, rows) -> None:
    """Rating pairs under the header `id,predicted,observed`, floats at
    full precision, rows in input order."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RATING_HEADER)
        for rid, pred, obs in rows:
            writer.writerow([rid, repr(float(pred)), repr(float(obs))])


def read_ratings(path):
    """Inverse of write_ratings; returns a list of (id, predicted,
    observed) with floats parsed and checked finite."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty ratings file", line=1)
        if tuple(header) != RATING_HEADER:
            raise ParseError(f"header must be {','.join(RATING_HEADER)}", line=1)
        out = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 3:
                raise ParseError(f"expected 3 fields, got {len(row)}", line=lineno)
            try:
                pred, obs = float(row[1]), float(row[2])
            except ValueError:
                raise ParseError(f"bad numeric field in {row!r}", line=lineno)
            if not (np.isfinite(pred) and np.isfinite(obs)):
                raise ParseError("ratings must be finite", line=lineno)
            out.append((row[0], pred, obs))
    return out


# ---------------------------------------------------------------------------
# handle directories

def _read_meta(path):
    meta = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = (part.strip() for part in line.partition("="))
            if not sep or not key:
                raise ParseError("expected `key = value`", line=lineno)
            if key not in ("name", "input_type", "output_type"):
                raise ParseError(f"unknown meta key {key!r}", line=lineno)
            meta[key] = value
    missing = [k for k in ("name", "input_type", "output_type") if k not in meta]
    if missing:
        raise ParseError(f"meta.txt missing keys: {', '.join(missing)}")
    return meta


def save_handle(dirpath, handle: DatasetHandle) -> None:
    """Lay a handle out on disk: meta.txt, images/<id>.ppm, and one
    target store per task kind (maps/<id>.pgm, paths/<id>.jsonl, or
    scores.csv). Ids are zero-padded sample indices, so lexicographic
    and numeric order agree."""
    os.makedirs(os.path.join(dirpath, "images"), exist_ok=True)
    kind = target_kind(handle.output_type)
    with open(os.path.join(dirpath, "meta.txt"), "w", encoding="utf-8") as fh:
        fh.write(f"name = {handle.name}\ninput_type = {handle.input_type}\n"
                 f"output_type = {handle.output_type}\n")
    if kind in ("heatmap", "scanpath"):
        os.makedirs(os.path.join(dirpath, "maps" if kind == "heatmap" else "paths"),
                    exist_ok=True)
    score_rows = []
    for i, sample in enumerate(handle.samples):
        sid = f"{i:06d}"
        write_ppm(os.path.join(dirpath, "images", sid + ".ppm"), sample.image)
        if kind == "heatmap":
            write_pgm(os.path.join(dirpath, "maps", sid + ".pgm"), sample.target)
        elif kind == "scanpath":
            write_scanpaths(os.path.join(dirpath, "paths", sid + ".jsonl"),
                            [(sample.target, sample.prompt)])
        else:
            score_rows.append((sid, sample.target.score))
    if kind == "score":
        with open(os.path.join(dirpath, "scores.csv"), "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(("id", "score"))
            for sid, score in score_rows:
                writer.writerow([sid, repr(score)])


def _read_scores(path):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty scores file", line=1)
        if tuple(header) != ("id", "score"):
            raise ParseError("header must be id,score", line=1)
        scores = {}
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 2:
                raise ParseError(f"expected 2 fields, got {len(row)}", line=lineno)
            try:
                scores[row[0]] = float(row[1])
            except ValueError:
                raise ParseError(f"bad score {row[1]!r}", line=lineno)
    return scores


def _normalize_scores(scores: dict) -> dict:
    """Scores already inside [0, 1] pass through; any other scale is
    min-max mapped onto [0, 1], a constant column landing on 0.5."""
    vals = np.asarray(list(scores.values()), dtype=np.float64)
    if not np.all(np.isfinite(vals)):
        raise ValidationError("scores must be finite")
    lo, hi = float(vals.min()), float(vals.max())
    if 0.0 <= lo and hi <= 1.0:
        return dict(scores)
    if lo == hi:
        return {k: 0.5 for k in scores}
    return {k: (v - lo) / (hi - lo) for k, v in scores.items()}


def load_handle(dirpath) -> DatasetHandle:
    """Inverse of save_handle, tolerant of externally converted data:
    map targets may be .pgm or .grid, ids are arbitrary stems as long as
    images and targets agree, and out-of-range rating scores are min-max
    normalized at ingestion."""
    meta = _read_meta(os.path.join(dirpath, "meta.txt"))
    kind = target_kind(meta["output_type"])
    image_dir = os.path.join(dirpath, "images")
    if not os.path.isdir(image_dir):
        raise ValidationError(f"{dirpath}: missing images/ directory")
    stems = sorted(os.path.splitext(f)[0] for f in os.listdir(image_dir)
                   if f.endswith(".ppm"))
    if not stems:
        raise ValidationError(f"{dirpath}: no images found")
    scores = None
    if kind == "score":
        scores = _normalize_scores(_read_scores(os.path.join(dirpath, "scores.csv")))
    samples = []
    for sid in stems:
        image = read_ppm(os.path.join(image_dir, sid + ".ppm"))
        if kind == "heatmap":
            prompt = PromptSpec(meta["input_type"], meta["output_type"])
            grid_path = os.path.join(dirpath, "maps", sid + ".grid")
            pgm_path = os.path.join(dirpath, "maps", sid + ".pgm")
            if os.path.exists(grid_path):
                target = read_grid(grid_path)
                if not isinstance(target, GrayMap):
                    raise ValidationError(f"{grid_path}: heatmap target must be a float grid")
            elif os.path.exists(pgm_path):
                target = read_pgm(pgm_path)
            else:
                raise ValidationError(f"{dirpath}: no map target for id {sid!r}")
        elif kind == "scanpath":
            path_file = os.path.join(dirpath, "paths", sid + ".jsonl")
            if not os.path.exists(path_file):
                raise ValidationError(f"{dirpath}: no path target for id {sid!r}")
            entries = read_scanpaths(path_file)
            if len(entries) != 1:
                raise ValidationError(f"{dirpath}: path file for {sid!r} must hold one line")
            target, prompt = entries[0]
            if (prompt.input_type, prompt.output_type) != (meta["input_type"],
                                                           meta["output_type"]):
                raise ValidationError(f"{dirpath}: prompt for {sid!r} disagrees with meta.txt")
        else:
            prompt = PromptSpec(meta["input_type"], meta["output_type"])
            if sid not in scores:
                raise ValidationError(f"{dirpath}: no score for id {sid!r}")
            target = RatingSample(scores[sid])
        samples.append(Sample(image, prompt, target))
    return DatasetHandle(meta["name"], meta["input_type"], meta["output_type"],
                         tuple(samples))
