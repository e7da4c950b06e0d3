"""Core data types and their on-disk formats.

Quaternions are stored and serialized in (x, y, z, w) order everywhere.

File formats
------------
motion CSV
    header ``frame,joint,x,y,z[,confidence]``; one row per joint per frame.
motion JSONL
    ``{"frame": i, "joints": [[x, y, z], ...], "confidence": [...]}``
trajectory JSONL
    ``{"frame": i, "t": [x, y, z], "q": [x, y, z, w]}`` with an optional
    ``"scale"`` key (identical on every record when present).
PGM
    P2 (ASCII) or P5 (binary, 8 or 16 bit) grayscale rasters.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from streammotion.errors import FormatError, SchemaError, ValidationError

UNIT_TOL = 1e-9
RENORMALIZE_TOL = 1e-6


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------------------
# quaternion helpers on raw (..., 4) arrays, Hamilton convention, xyzw order
# ---------------------------------------------------------------------------

def quat_multiply(a, b):
    """Hamilton product ``a * b`` of xyzw quaternion arrays."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ax, ay, az, aw = np.moveaxis(a, -1, 0)
    bx, by, bz, bw = np.moveaxis(b, -1, 0)
    return np.stack([
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
        aw * bw - ax * bx - ay * by - az * bz,
    ], axis=-1)


def quat_to_matrix(q):
    """Rotation matrix (..., 3, 3) from unit xyzw quaternions (..., 4)."""
    q = np.asarray(q, dtype=float)
    x, y, z, w = np.moveaxis(q, -1, 0)
    xx, yy, zz = x * x, y * y, z * z
    xy, xz, yz = x * y, x * z, y * z
    wx, wy, wz = w * x, w * y, w * z
    m = np.stack([
        1 - 2 * (yy + zz), 2 * (xy - wz), 2 * (xz + wy),
        2 * (xy + wz), 1 - 2 * (xx + zz), 2 * (yz - wx),
        2 * (xz - wy), 2 * (yz + wx), 1 - 2 * (xx + yy),
    ], axis=-1)
    return m.reshape(q.shape[:-1] + (3, 3))


def quat_from_axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n == 0.0:
        return np.array([0.0, 0.0, 0.0, 1.0])
    axis = axis / n
    half = 0.5 * angle
    return np.concatenate([axis * math.sin(half), [math.cos(half)]])


@dataclass(frozen=True)
class Quaternion:
    """Unit quaternion, components in (x, y, z, w) order.

    The constructor is strict: the norm must already be 1 within 1e-9.
    Use :meth:`normalized` to build one from arbitrary components.
    """

    x: float
    y: float
    z: float
    w: float

    def __post_init__(self):
        comps = (self.x, self.y, self.z, self.w)
        if not all(math.isfinite(c) for c in comps):
            raise ValidationError(f"quaternion has non-finite components {comps}")
        n = math.sqrt(sum(c * c for c in comps))
        if abs(n - 1.0) > UNIT_TOL:
            raise ValidationError(f"quaternion norm {n!r} is not 1")

    @classmethod
    def normalized(cls, x, y, z, w):
        n = math.sqrt(x * x + y * y + z * z + w * w)
        if n < 1e-12:
            raise ValidationError("cannot normalize a zero quaternion")
        return cls(x / n, y / n, z / n, w / n)

    @classmethod
    def from_array(cls, a):
        a = np.asarray(a, dtype=float)
        return cls.normalized(*map(float, a))

    @classmethod
    def identity(cls):
        return cls(0.0, 0.0, 0.0, 1.0)

    @classmethod
    def from_axis_angle(cls, axis, angle):
        return cls.from_array(quat_from_axis_angle(axis, angle))

    def as_array(self):
        return np.array([self.x, self.y, self.z, self.w])

    def to_matrix(self):
        return quat_to_matrix(self.as_array())

    def conjugate(self):
        return Quaternion(-self.x, -self.y, -self.z, self.w)

    def __mul__(self, other):
        return Quaternion.from_array(quat_multiply(self.as_array(), other.as_array()))

    def __neg__(self):
        return Quaternion(-self.x, -self.y, -self.z, -self.w)

    def dot(self, other):
        return self.x * other.x + self.y * other.y + self.z * other.z + self.w * other.w

    def angle(self):
        """Rotation angle in radians, in [0, pi]."""
        return 2.0 * math.atan2(math.sqrt(self.x**2 + self.y**2 + self.z**2), abs(self.w))


# ---------------------------------------------------------------------------
# motion sequences
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MotionSequence:
    """F x J x 3 joint positions with per-joint confidences in [0, 1]."""

    positions: np.ndarray
    confidence: np.ndarray = None
    frame_rate: float = 30.0

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 3 or pos.shape[2] != 3:
            raise SchemaError(f"positions must be F x J x 3, got shape {pos.shape}")
        if pos.shape[0] < 1:
            raise SchemaError("a motion sequence needs at least one frame")
        if pos.shape[1] < 1:
            raise SchemaError("a motion sequence needs at least one joint")
        if not np.all(np.isfinite(pos)):
            raise ValidationError("positions contain non-finite values")
        if self.confidence is None:
            conf = np.ones(pos.shape[:2])
        else:
            conf = np.asarray(self.confidence, dtype=float)
            if conf.shape != pos.shape[:2]:
                raise SchemaError(f"confidence shape {conf.shape} != {pos.shape[:2]}")
            if not np.all(np.isfinite(conf)) or conf.min() < 0.0 or conf.max() > 1.0:
                raise ValidationError("confidence values must lie in [0, 1]")
        if not (self.frame_rate > 0 and math.isfinite(self.frame_rate)):
            raise ValidationError(f"frame_rate must be positive, got {self.frame_rate}")
        object.__setattr__(self, "positions", _frozen(pos))
        object.__setattr__(self, "confidence", _frozen(conf))

    @property
    def num_frames(self):
        return self.positions.shape[0]

    @property
    def num_joints(self):
        return self.positions.shape[1]

    def flat(self):
        """F x 3J view, joint-major within a frame."""
        return self.positions.reshape(self.num_frames, -1)


def _motion_format(path, fmt):
    if fmt is not None:
        return fmt
    suffix = Path(path).suffix.lower()
    if suffix == ".csv":
        return "csv"
    if suffix in (".jsonl", ".json"):
        return "jsonl"
    raise FormatError(f"cannot infer motion format from {path!r}")


def _assemble(frames, path):
    """frames: list of (frame_id, [(joint_id, xyz, conf)]) in file order."""
    counts = {len(joints) for _, joints in frames}
    if len(counts) > 1:
        detail = ", ".join(f"frame {f}: {len(j)}" for f, j in frames[:5])
        raise SchemaError(f"{path}: inconsistent joint counts ({detail})")
    pos = np.array([[xyz for _, xyz, _ in joints] for _, joints in frames], dtype=float)
    conf = np.array([[c for _, _, c in joints] for _, joints in frames], dtype=float)
    return pos, conf


def _check_conf(c, line):
    if not (0.0 <= c <= 1.0):
        raise ValidationError(f"line {line}: confidence {c!r} outside [0, 1]")
    return c


def _load_motion_csv(path):
    frames = []
    index = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip().lower() for h in next(reader)]
        except StopIteration:
            raise FormatError("empty file", line=1) from None
        required = ["frame", "joint", "x", "y", "z"]
        if header[:5] != required or header[5:] not in ([], ["confidence"]):
            raise FormatError(f"unexpected header {header}", line=1)
        has_conf = len(header) == 6
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise FormatError(f"expected {len(header)} fields, got {len(row)}", line=lineno)
            try:
                f, j = int(row[0]), int(row[1])
                xyz = [float(v) for v in row[2:5]]
                c = float(row[5]) if has_conf else 1.0
            except ValueError as exc:
                raise FormatError(str(exc), line=lineno) from None
            if not all(math.isfinite(v) for v in xyz):
                raise FormatError("non-finite coordinate", line=lineno)
            _check_conf(c, lineno)
            if f not in index:
                index[f] = len(frames)
                frames.append((f, []))
            frames[index[f]][1].append((j, xyz, c))
    if not frames:
        raise FormatError("no data rows", line=2)
    return _assemble(frames, path)


def _load_motion_jsonl(path):
    frames = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                f = int(rec.get("frame", len(frames)))
                joints = rec["joints"]
                conf = rec.get("confidence", [1.0] * len(joints))
                if len(conf) != len(joints):
                    raise FormatError("confidence length differs from joint count", line=lineno)
                entries = []
                for j, (xyz, c) in enumerate(zip(joints, conf)):
                    if len(xyz) != 3:
                        raise FormatError(f"joint {j} does not have 3 coordinates", line=lineno)
                    entries.append((j, [float(v) for v in xyz], _check_conf(float(c), lineno)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                if isinstance(exc, ValidationError):
                    raise
                raise FormatError(str(exc), line=lineno) from None
            frames.append((f, entries))
    if not frames:
        raise FormatError("no records", line=1)
    return _assemble(frames, path)


def load_motion(path, format=None, frame_rate=30.0):
    """Read a motion file; ``format`` is ``"csv"`` or ``"jsonl"`` (inferred from suffix)."""
    fmt = _motion_format(path, format)
    if fmt == "csv":
        pos, conf = _load_motion_csv(path)
    elif fmt == "jsonl":
        pos, conf = _load_motion_jsonl(path)
    else:
        raise FormatError(f"unknown motion format {fmt!r}")
    return MotionSequence(pos, conf, frame_rate=frame_rate)


def save_motion(seq, path, format=None):
    fmt = _motion_format(path, format)
    pos = np.asarray(seq.positions)
    if pos.ndim != 3 or pos.shape[1] < 1:
        raise SchemaError("cannot save a sequence without joints")
    conf = seq.confidence
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["frame", "joint", "x", "y", "z", "confidence"])
            for f in range(pos.shape[0]):
                for j in range(pos.shape[1]):
                    x, y, z = pos[f, j]
                    w.writerow([f, j, repr(float(x)), repr(float(y)), repr(float(z)),
                                repr(float(conf[f, j]))])
    elif fmt == "jsonl":
        with open(path, "w") as fh:
            for f in range(pos.shape[0]):
                rec = {"frame": f, "joints": pos[f].tolist(), "confidence": conf[f].tolist()}
                fh.write(json.dumps(rec) + "\n")
    else:
        raise FormatError(f"unknown motion format {fmt!r}")


# ---------------------------------------------------------------------------
# poses and trajectories
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PoseSample:
    frame_index: int
    translation: np.ndarray
    rotation: Quaternion

    def __post_init__(self):
        if int(self.frame_index) != self.frame_index or self.frame_index < 0:
            raise ValidationError(f"frame_index must be a non-negative integer, got {self.frame_index}")
        t = np.asarray(self.translation, dtype=float)
        if t.shape != (3,) or not np.all(np.isfinite(t)):
            raise ValidationError(f"translation must be a finite 3-vector, got {t!r}")
        if not isinstance(self.rotation, Quaternion):
            raise ValidationError("rotation must be a Quaternion")
        object.__setattr__(self, "frame_index", int(self.frame_index))
        object.__setattr__(self, "translation", _frozen(t))

    def __eq__(self, other):
        if not isinstance(other, PoseSample):
            return NotImplemented
        return (self.frame_index == other.frame_index
                and np.array_equal(self.translation, other.translation)
                and self.rotation == other.rotation)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Trajectory:
    samples: tuple = field(default_factory=tuple)
    scale: float = 1.0

    def __post_init__(self):
        samples = tuple(self.samples)
        for a, b in zip(samples, samples[1:]):
            if b.frame_index <= a.frame_index:
                raise ValidationError(
                    f"frame indices must increase strictly ({a.frame_index} then {b.frame_index})")
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ValidationError(f"scale must be positive, got {self.scale}")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __getitem__(self, i):
        return self.samples[i]

    def translations(self):
        return np.array([s.translation for s in self.samples]).reshape(-1, 3)

    def rotations(self):
        return np.array([s.rotation.as_array() for s in self.samples]).reshape(-1, 4)

    def frame_indices(self):
        return np.array([s.frame_index for s in self.samples], dtype=int)

    @classmethod
    def from_arrays(cls, translations, quaternions, frame_indices=None, scale=1.0):
        t = np.asarray(translations, dtype=float)
        q = np.asarray(quaternions, dtype=float)
        if frame_indices is None:
            frame_indices = range(len(t))
        return cls(tuple(PoseSample(int(f), ti, Quaternion.from_array(qi))
                         for f, ti, qi in zip(frame_indices, t, q)), scale=scale)


def _quat_from_file(q, lineno):
    q = [float(v) for v in q]
    if len(q) != 4 or not all(math.isfinite(v) for v in q):
        raise FormatError("q must hold 4 finite numbers", line=lineno)
    n = math.sqrt(sum(v * v for v in q))
    if abs(n - 1.0) >= RENORMALIZE_TOL:
        raise ValidationError(f"line {lineno}: quaternion norm {n!r} is not unit")
    return Quaternion(*(v / n for v in q))


def load_trajectory(path):
    samples = []
    scale = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                frame = rec["frame"]
                t = [float(v) for v in rec["t"]]
                q = rec["q"]
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise FormatError(str(exc), line=lineno) from None
            if len(t) != 3:
                raise FormatError("t must hold 3 numbers", line=lineno)
            if "scale" in rec:
                if scale is not None and rec["scale"] != scale:
                    raise SchemaError(f"line {lineno}: scale differs from earlier records")
                scale = float(rec["scale"])
            rotation = _quat_from_file(q, lineno)
            try:
                samples.append(PoseSample(frame, t, rotation))
            except ValidationError as exc:
                raise ValidationError(f"line {lineno}: {exc}") from None
    return Trajectory(tuple(samples), scale=1.0 if scale is None else scale)


def trajectory_records(traj):
    for s in traj:
        rec = {"frame": s.frame_index, "t": s.translation.tolist(),
               "q": s.rotation.as_array().tolist()}
        if traj.scale != 1.0:
            rec["scale"] = traj.scale
        yield rec


def save_trajectory(traj, path):
    with open(path, "w") as fh:
        for rec in trajectory_records(traj):
            fh.write(json.dumps(rec) + "\n")


# ---------------------------------------------------------------------------
# raster grids
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ScalarGrid:
    """H x W raster of finite floats (masks, soft masks, depth maps)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or min(v.shape) < 1:
            raise ValidationError(f"grid must be 2-D with positive size, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValidationError("grid values must be finite")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]

    def is_mask(self):
        return bool(self.values.min() >= 0.0 and self.values.max() <= 1.0)


def _pgm_tokens(data):
    """Yield whitespace-separated header tokens, skipping # comments, with end offset."""
    i = 0
    n = len(data)
    while i < n:
        c = data[i:i + 1]
        if c == b"#":
            while i < n and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
        elif c.isspace():
            i += 1
        else:
            j = i
            while j < n and not data[j:j + 1].isspace() and data[j:j + 1] != b"#":
                j += 1
            yield data[i:j], j
            i = j


def read_pgm(path, normalize=True):
    """Read a P2/P5 PGM. With ``normalize`` values are divided by maxval."""
    data = Path(path).read_bytes()
    tokens = _pgm_tokens(data)
    try:
        magic, _ = next(tokens)
        width = int(next(tokens)[0])
        height = int(next(tokens)[0])
        maxval_tok, end = next(tokens)
        maxval = int(maxval_tok)
    except (StopIteration, ValueError):
        raise FormatError(f"{path}: malformed PGM header") from None
    if magic not in (b"P2", b"P5") or not (0 < maxval < 65536) or width < 1 or height < 1:
        raise FormatError(f"{path}: unsupported PGM header")
    if magic == b"P5":
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        raw = data[end + 1:end + 1 + width * height * dtype.itemsize]
        if len(raw) != width * height * dtype.itemsize:
            raise FormatError(f"{path}: truncated PGM payload")
        arr = np.frombuffer(raw, dtype=dtype).astype(float)
    else:
        try:
            arr = np.array([int(t) for t, _ in tokens], dtype=float)
        except ValueError:
            raise FormatError(f"{path}: non-integer PGM sample") from None
        if arr.size != width * height:
            raise FormatError(f"{path}: expected {width * height} samples, got {arr.size}")
    arr = arr.reshape(height, width)
    if normalize:
        arr = arr / maxval
    return ScalarGrid(arr)


def write_pgm(grid, path, maxval=65535, binary=True, normalized=True):
    """Write a grid as PGM; with ``normalized`` values in [0,1] are scaled by maxval."""
    v = np.asarray(grid.values if isinstance(grid, ScalarGrid) else grid, dtype=float)
    scaled = v * maxval if normalized else v
    q = np.clip(np.rint(scaled), 0, maxval).astype(int)
    h, w = q.shape
    header = f"{'P5' if binary else 'P2'}\n{w} {h}\n{maxval}\n".encode()
    with open(path, "wb") as fh:
        fh.write(header)
        if binary:
            dtype = ">u2" if maxval > 255 else "u1"
            fh.write(q.astype(dtype).tobytes())
        else:
            for row in q:
                fh.write((" ".join(map(str, row)) + "\n").encode())


def read_depth(path):
    """Load a depth raster.

    ``.f32``: little-endian uint32 height, width, then H*W float32 values.
    ``.pgm``: raw samples multiplied by the float in ``<path>.scale`` if present.
    """
    p = Path(path)
    if p.suffix.lower() == ".f32":
        raw = p.read_bytes()
        if len(raw) < 8:
            raise FormatError(f"{path}: missing f32 grid header")
        h, w = np.frombuffer(raw[:8], dtype="<u4")
        vals = np.frombuffer(raw[8:], dtype="<f4")
        if vals.size != h * w:
            raise FormatError(f"{path}: expected {h * w} values, got {vals.size}")
        return ScalarGrid(vals.astype(float).reshape(int(h), int(w)))
    grid = read_pgm(p, normalize=False)
    sidecar = p.with_name(p.name + ".scale")
    factor = float(sidecar.read_text().strip()) if sidecar.exists() else 1.0
    return ScalarGrid(grid.values * factor)


def write_depth_f32(grid, path):
    v = np.asarray(grid.values if isinstance(grid, ScalarGrid) else grid, dtype=float)
    with open(path, "wb") as fh:
        fh.write(np.array(v.shape, dtype="<u4").tobytes())
        fh.write(v.astype("<f4").tobytes())
