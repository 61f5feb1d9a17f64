"""Plain-text file formats for features, checkpoints, scores, and reports.

Every file is line-based ASCII.  The first line is a magic tag with a
format version (and counts where useful), followed by sorted ``# key=value``
echo lines recording the effective settings that produced the file, then
the payload.  Floats are printed with 17 significant digits so a
write/read round trip is bit-exact.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .encoder import EncoderParams, Mlp
from .exceptions import ConfigError, DataError
from .records import ManipFlags, SegmentRecord
from .training import TrainStep

FEAT_MAGIC = "POIF-FEAT"
CKPT_MAGIC = "POIF-CKPT"
SCORES_MAGIC = "POIF-SCORES"
REPORT_MAGIC = "POIF-REPORT"
SWEEP_MAGIC = "POIF-SWEEP"
LOG_MAGIC = "POIF-LOG"
FORMAT_VERSION = 1

SCORE_COLUMNS = (
    "video_id,identity_id,n_segments,is_fake,v,a,ai,blend,"
    "norm_video,norm_audio,norm_av,fused,decision"
)
REPORT_COLUMNS = "metric,group,n_real,n_fake,video,audio,av,fusion"
SWEEP_COLUMNS = "axis,x,class,n_real,n_fake,auc"
LOG_COLUMNS = "step,l_v,l_a,l_av,l_tot"
UNDEFINED = "undefined"


def fmt(x: float) -> str:
    """Render a float with enough digits to round-trip exactly."""
    if not np.isfinite(x):
        raise ValueError(f"refusing to write non-finite value {x!r}")
    return "%.17g" % x


def _check_id(value: str, name: str) -> str:
    if not value or "," in value or "\n" in value:
        raise DataError(f"{name} must be non-empty and comma-free, got {value!r}")
    return value


def _meta_lines(meta: Mapping[str, str]) -> list[str]:
    lines = []
    for k in sorted(meta):
        v = str(meta[k])
        if "\n" in k or "\n" in v or "=" in k:
            raise ValueError(f"bad meta entry {k!r}={v!r}")
        lines.append(f"# {k}={v}")
    return lines


class _Lines:
    """Cursor over the lines of one file, with parse-error context."""

    def __init__(self, path: str):
        with open(path, "r", encoding="ascii") as f:
            self.lines = f.read().splitlines()
        self.path = path
        self.pos = 0

    def next(self) -> str:
        if self.pos >= len(self.lines):
            raise DataError(f"{self.path}: truncated file at line {self.pos + 1}")
        line = self.lines[self.pos]
        self.pos += 1
        return line

    def at_end(self) -> bool:
        return self.pos >= len(self.lines)

    def fail(self, msg: str):
        raise DataError(f"{self.path}: {msg} at line {self.pos}")


def _read_header(lines: _Lines, magic: str, n_counts: int) -> list[int]:
    head = lines.next().split(",")
    if head[0] != magic:
        lines.fail(f"expected {magic} file, found {head[0]!r}")
    if len(head) != 2 + n_counts:
        lines.fail(f"malformed {magic} header")
    try:
        version = int(head[1])
        counts = [int(c) for c in head[2:]]
    except ValueError:
        lines.fail(f"malformed {magic} header")
    if version != FORMAT_VERSION:
        lines.fail(f"unsupported {magic} version {version}")
    if any(c < 0 for c in counts):
        lines.fail(f"negative count in {magic} header")
    return counts


def _read_meta(lines: _Lines) -> dict[str, str]:
    meta: dict[str, str] = {}
    while not lines.at_end() and lines.lines[lines.pos].startswith("#"):
        line = lines.next()[1:].strip()
        if "=" not in line:
            lines.fail("malformed meta line")
        k, v = line.split("=", 1)
        meta[k.strip()] = v
    return meta


def _parse_floats(fields: Sequence[str], n: int, lines: _Lines) -> np.ndarray:
    if len(fields) != n:
        lines.fail(f"expected {n} values, found {len(fields)}")
    try:
        values = np.array([float(f) for f in fields], dtype=np.float64)
    except ValueError:
        lines.fail("unparseable float")
    if not np.all(np.isfinite(values)):
        lines.fail("non-finite value")
    return values


def _write(path: str, lines: Iterable[str]):
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="ascii") as f:
        f.write("\n".join(lines))
        f.write("\n")
    os.replace(tmp, path)


# -- features -----------------------------------------------------------

def write_features(path: str, segments: Sequence[SegmentRecord], meta: Mapping[str, str]):
    if not segments:
        raise DataError("refusing to write an empty feature file")
    da = segments[0].audio.shape[0]
    dv = segments[0].video.shape[0]
    out = [f"{FEAT_MAGIC},{FORMAT_VERSION},{da},{dv},{len(segments)}"]
    out.extend(_meta_lines(meta))
    for seg in segments:
        if seg.audio.shape[0] != da or seg.video.shape[0] != dv:
            raise DataError(f"inconsistent feature dims in segment {seg.key}")
        f = seg.flags
        fields = [
            _check_id(seg.identity_id, "identity_id"),
            _check_id(seg.video_id, "video_id"),
            str(seg.segment_index),
            str(int(f.is_fake)), str(int(f.v)), str(int(f.a)), str(int(f.ai)),
            fmt(seg.blend),
        ]
        fields.extend(fmt(x) for x in seg.audio)
        fields.extend(fmt(x) for x in seg.video)
        out.append(",".join(fields))
    _write(path, out)


def read_features(path: str) -> tuple[dict[str, str], list[SegmentRecord]]:
    lines = _Lines(path)
    da, dv, count = _read_header(lines, FEAT_MAGIC, 3)
    meta = _read_meta(lines)
    segments = []
    for _ in range(count):
        fields = lines.next().split(",")
        if len(fields) != 8 + da + dv:
            lines.fail(f"expected {8 + da + dv} fields, found {len(fields)}")
        try:
            segment_index = int(fields[2])
            bits = [int(b) for b in fields[3:7]]
        except ValueError:
            lines.fail("malformed segment row")
        if any(b not in (0, 1) for b in bits):
            lines.fail("manipulation flags must be 0 or 1")
        blend = float(_parse_floats(fields[7:8], 1, lines)[0])
        audio = _parse_floats(fields[8:8 + da], da, lines)
        video = _parse_floats(fields[8 + da:], dv, lines)
        try:
            segments.append(
                SegmentRecord(
                    identity_id=fields[0],
                    video_id=fields[1],
                    segment_index=segment_index,
                    audio=audio,
                    video=video,
                    flags=ManipFlags(bool(bits[0]), bool(bits[1]), bool(bits[2]), bool(bits[3])),
                    blend=blend,
                )
            )
        except DataError as e:
            lines.fail(str(e))
    if not lines.at_end():
        lines.fail("trailing data after last segment")
    return meta, segments


# -- checkpoints --------------------------------------------------------

def _mlp_lines(tag: str, mlp: Mlp) -> list[str]:
    out = [f"encoder,{tag},{mlp.n_layers}"]
    for w, b in zip(mlp.weights, mlp.biases):
        out.append(f"layer,{w.shape[0]},{w.shape[1]}")
        for row in w:
            out.append("w," + ",".join(fmt(x) for x in row))
        out.append("b," + ",".join(fmt(x) for x in b))
    return out


def _read_mlp(lines: _Lines, tag: str) -> Mlp:
    fields = lines.next().split(",")
    if len(fields) != 3 or fields[0] != "encoder" or fields[1] != tag:
        lines.fail(f"expected encoder,{tag} section")
    n_layers = int(fields[2])
    weights, biases = [], []
    for _ in range(n_layers):
        head = lines.next().split(",")
        if len(head) != 3 or head[0] != "layer":
            lines.fail("expected layer header")
        out_dim, in_dim = int(head[1]), int(head[2])
        if out_dim < 1 or in_dim < 1:
            lines.fail("bad layer dims")
        w = np.empty((out_dim, in_dim))
        for r in range(out_dim):
            row = lines.next().split(",")
            if row[0] != "w":
                lines.fail("expected weight row")
            w[r] = _parse_floats(row[1:], in_dim, lines)
        brow = lines.next().split(",")
        if brow[0] != "b":
            lines.fail("expected bias row")
        weights.append(w)
        biases.append(_parse_floats(brow[1:], out_dim, lines))
    return Mlp(weights=weights, biases=biases)


def write_checkpoint(
    path: str,
    params: EncoderParams,
    meta: Mapping[str, str],
    *,
    optim_step: int | None = None,
    optim_m: Sequence[np.ndarray] | None = None,
    optim_v: Sequence[np.ndarray] | None = None,
    rng_state: Mapping | None = None,
    steps_done: int | None = None,
):
    """Write encoder weights, optionally with the state needed to resume."""
    out = [f"{CKPT_MAGIC},{FORMAT_VERSION}"]
    out.extend(_meta_lines(meta))
    out.extend(_mlp_lines("audio", params.audio))
    out.extend(_mlp_lines("video", params.video))
    if optim_step is not None:
        out.append(f"optim,{optim_step},{len(optim_m)}")
        for arr in optim_m:
            out.append("m," + ",".join(fmt(x) for x in np.asarray(arr).ravel()))
        for arr in optim_v:
            out.append("v," + ",".join(fmt(x) for x in np.asarray(arr).ravel()))
    if rng_state is not None:
        if rng_state["bit_generator"] != "PCG64":
            raise ValueError(f"unsupported generator {rng_state['bit_generator']!r}")
        s = rng_state["state"]
        out.append(
            f"rng,PCG64,{s['state']},{s['inc']},{rng_state['has_uint32']},{rng_state['uinteger']}"
        )
    if steps_done is not None:
        out.append(f"steps_done,{steps_done}")
    _write(path, out)


@dataclass(eq=False)
class Checkpoint:
    meta: dict[str, str]
    params: EncoderParams
    optim_step: int | None = None
    optim_m: list[np.ndarray] | None = None
    optim_v: list[np.ndarray] | None = None
    rng_state: dict | None = None
    steps_done: int | None = None

    @property
    def can_resume(self) -> bool:
        return self.optim_step is not None and self.rng_state is not None \
            and self.steps_done is not None


def read_checkpoint(path: str) -> Checkpoint:
    lines = _Lines(path)
    _read_header(lines, CKPT_MAGIC, 0)
    meta = _read_meta(lines)
    params = EncoderParams(audio=_read_mlp(lines, "audio"), video=_read_mlp(lines, "video"))
    ckpt = Checkpoint(meta=meta, params=params)
    shapes = [a.shape for mlp in (params.audio, params.video) for pair in
              zip(mlp.weights, mlp.biases) for a in pair]
    while not lines.at_end():
        fields = lines.next().split(",")
        if fields[0] == "optim":
            if len(fields) != 3:
                lines.fail("malformed optim header")
            step, n_arrays = int(fields[1]), int(fields[2])
            if n_arrays != len(shapes):
                lines.fail(f"optim carries {n_arrays} arrays, encoder has {len(shapes)}")
            moments = []
            for tag in ("m", "v"):
                arrays = []
                for shape in shapes:
                    row = lines.next().split(",")
                    if row[0] != tag:
                        lines.fail(f"expected {tag} row")
                    n = int(np.prod(shape))
                    arrays.append(_parse_floats(row[1:], n, lines).reshape(shape))
                moments.append(arrays)
            ckpt.optim_step = step
            ckpt.optim_m, ckpt.optim_v = moments
        elif fields[0] == "rng":
            if len(fields) != 6 or fields[1] != "PCG64":
                lines.fail("malformed rng line")
            ckpt.rng_state = {
                "bit_generator": "PCG64",
                "state": {"state": int(fields[2]), "inc": int(fields[3])},
                "has_uint32": int(fields[4]),
                "uinteger": int(fields[5]),
            }
        elif fields[0] == "steps_done":
            ckpt.steps_done = int(fields[1])
        else:
            lines.fail(f"unexpected section {fields[0]!r}")
    return ckpt


# -- scores -------------------------------------------------------------

@dataclass
class ScoreRow:
    """One scored test video against one person's reference set."""

    video_id: str
    identity_id: str
    n_segments: int
    flags: ManipFlags
    blend: float
    norm_video: float
    norm_audio: float
    norm_av: float
    fused: float
    decision: str

    def statistic(self, name: str) -> float:
        return {
            "video": self.norm_video,
            "audio": self.norm_audio,
            "av": self.norm_av,
            "fused": self.fused,
        }[name]


def write_scores(path: str, rows: Sequence[ScoreRow], meta: Mapping[str, str]):
    out = [f"{SCORES_MAGIC},{FORMAT_VERSION},{len(rows)}"]
    out.extend(_meta_lines(meta))
    out.append(SCORE_COLUMNS)
    for r in rows:
        f = r.flags
        out.append(",".join([
            _check_id(r.video_id, "video_id"),
            _check_id(r.identity_id, "identity_id"),
            str(r.n_segments),
            str(int(f.is_fake)), str(int(f.v)), str(int(f.a)), str(int(f.ai)),
            fmt(r.blend),
            fmt(r.norm_video), fmt(r.norm_audio), fmt(r.norm_av), fmt(r.fused),
            r.decision,
        ]))
    _write(path, out)


def read_scores(path: str) -> tuple[dict[str, str], list[ScoreRow]]:
    lines = _Lines(path)
    (count,) = _read_header(lines, SCORES_MAGIC, 1)
    meta = _read_meta(lines)
    if lines.next() != SCORE_COLUMNS:
        lines.fail("unexpected score columns")
    rows = []
    for _ in range(count):
        fields = lines.next().split(",")
        if len(fields) != 13:
            lines.fail(f"expected 13 fields, found {len(fields)}")
        try:
            bits = [int(b) for b in fields[3:7]]
            flags = ManipFlags(bool(bits[0]), bool(bits[1]), bool(bits[2]), bool(bits[3]))
        except (ValueError, DataError):
            lines.fail("malformed score row flags")
        values = _parse_floats(fields[7:12], 5, lines)
        if fields[12] not in ("real", "fake"):
            lines.fail(f"bad decision {fields[12]!r}")
        rows.append(ScoreRow(
            video_id=fields[0],
            identity_id=fields[1],
            n_segments=int(fields[2]),
            flags=flags,
            blend=float(values[0]),
            norm_video=float(values[1]),
            norm_audio=float(values[2]),
            norm_av=float(values[3]),
            fused=float(values[4]),
            decision=fields[12],
        ))
    if not lines.at_end():
        lines.fail("trailing data after last score row")
    return meta, rows


# -- reports, sweeps, training logs -------------------------------------

def _opt(x: float | None) -> str:
    return UNDEFINED if x is None else fmt(x)


def write_report(path: str, rows: Sequence[Mapping], meta: Mapping[str, str]):
    """Rows carry metric, group, n_real, n_fake and one value per statistic."""
    out = [f"{REPORT_MAGIC},{FORMAT_VERSION},{len(rows)}"]
    out.extend(_meta_lines(meta))
    out.append(REPORT_COLUMNS)
    for r in rows:
        out.append(",".join([
            r["metric"], r["group"], str(r["n_real"]), str(r["n_fake"]),
            _opt(r["video"]), _opt(r["audio"]), _opt(r["av"]), _opt(r["fusion"]),
        ]))
    _write(path, out)


def read_report(path: str) -> tuple[dict[str, str], list[dict]]:
    lines = _Lines(path)
    (count,) = _read_header(lines, REPORT_MAGIC, 1)
    meta = _read_meta(lines)
    if lines.next() != REPORT_COLUMNS:
        lines.fail("unexpected report columns")
    rows = []
    for _ in range(count):
        fields = lines.next().split(",")
        if len(fields) != 8:
            lines.fail(f"expected 8 fields, found {len(fields)}")
        row = {"metric": fields[0], "group": fields[1],
               "n_real": int(fields[2]), "n_fake": int(fields[3])}
        for name, raw in zip(("video", "audio", "av", "fusion"), fields[4:]):
            row[name] = None if raw == UNDEFINED else float(_parse_floats([raw], 1, lines)[0])
        rows.append(row)
    return meta, rows


def write_sweep(path: str, rows: Sequence[Mapping], meta: Mapping[str, str]):
    out = [f"{SWEEP_MAGIC},{FORMAT_VERSION},{len(rows)}"]
    out.extend(_meta_lines(meta))
    out.append(SWEEP_COLUMNS)
    for r in rows:
        out.append(",".join([
            r["axis"], str(r["x"]), r["class"], str(r["n_real"]), str(r["n_fake"]),
            _opt(r["auc"]),
        ]))
    _write(path, out)


def read_sweep(path: str) -> tuple[dict[str, str], list[dict]]:
    lines = _Lines(path)
    (count,) = _read_header(lines, SWEEP_MAGIC, 1)
    meta = _read_meta(lines)
    if lines.next() != SWEEP_COLUMNS:
        lines.fail("unexpected sweep columns")
    rows = []
    for _ in range(count):
        fields = lines.next().split(",")
        if len(fields) != 6:
            lines.fail(f"expected 6 fields, found {len(fields)}")
        rows.append({
            "axis": fields[0], "x": int(fields[1]), "class": fields[2],
            "n_real": int(fields[3]), "n_fake": int(fields[4]),
            "auc": None if fields[5] == UNDEFINED
                   else float(_parse_floats([fields[5]], 1, lines)[0]),
        })
    return meta, rows


def write_train_log(path: str, log: Sequence[TrainStep], meta: Mapping[str, str]):
    out = [f"{LOG_MAGIC},{FORMAT_VERSION},{len(log)}"]
    out.extend(_meta_lines(meta))
    out.append(LOG_COLUMNS)
    for entry in log:
        r = entry.loss
        out.append(",".join([
            str(entry.step), fmt(r.l_v), fmt(r.l_a), fmt(r.l_av), fmt(r.l_tot),
        ]))
    _write(path, out)


# -- config files -------------------------------------------------------

def parse_config_file(path: str) -> dict[str, str]:
    """Read a flat key=value settings file; # starts a comment line."""
    try:
        with open(path, "r", encoding="ascii") as f:
            raw = f.read().splitlines()
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    out: dict[str, str] = {}
    for i, line in enumerate(raw, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{i}: expected key=value, got {stripped!r}")
        k, v = stripped.split("=", 1)
        k, v = k.strip(), v.strip()
        if not k:
            raise ConfigError(f"{path}:{i}: empty key")
        out[k] = v
    return out
