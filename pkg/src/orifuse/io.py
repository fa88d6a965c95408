"""Durable text formats: demonstrations, trajectories, metrics, run configs.

Numeric tables are comma-separated with a single ``#``-prefixed header line
carrying ``key=value`` tokens; every float renders with 17 significant digits
so files round-trip bit-exactly and diffs stay meaningful.  Run configuration
is a JSON document with an explicit schema version.  All parsing is
locale-independent (``.`` decimal separator).
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import so3
from .errors import (
    ConfigError,
    DomainOverlap,
    InconsistentTiming,
    IoError,
    NotARotation,
    ParseError,
)
from .gmm import Demonstration, GaussianMixture

SCHEMA_VERSION = 1
DT_TOL = 1e-9

_DEMO_MAGIC = "orifuse-demo"
_TRAJ_MAGIC = "orifuse-trajectory"
_AXES = ("x", "y", "z")


def _fmt(x):
    return format(float(x), ".17g")


def _write_text(path, text):
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _parse_header(path, line, magic):
    tokens = line.lstrip("#").split()
    if not tokens or tokens[0] != magic:
        raise ParseError(f"expected a '{magic}' header", path=path, line=1)
    fields = {}
    for tok in tokens[1:]:
        if "=" in tok:
            key, val = tok.split("=", 1)
            fields[key] = val
    return fields


def _read_table(path, magic):
    path = Path(path)
    try:
        raw = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read file: {exc}", path=path) from exc
    lines = raw.splitlines()
    if not lines:
        raise ParseError("empty file", path=path, line=1)
    header = _parse_header(path, lines[0], magic)
    rows = []
    width = None
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split(",")
        if width is None:
            width = len(parts)
        elif len(parts) != width:
            raise ParseError(
                f"expected {width} columns, found {len(parts)}", path=path, line=lineno
            )
        row = np.empty(width)
        for col, part in enumerate(parts):
            try:
                row[col] = float(part)
            except ValueError:
                raise ParseError(
                    f"not a number: {part.strip()!r}", path=path, line=lineno, column=col + 1
                ) from None
        rows.append(row)
    data = np.vstack(rows) if rows else np.empty((0, 0))
    return header, data


def _quat_to_matrix(q):
    w, x, y, z = q
    n = w * w + x * x + y * y + z * z
    if n < 1e-12:
        raise ValueError("zero quaternion")
    s = 2.0 / n
    return np.array(
        [
            [1.0 - s * (y * y + z * z), s * (x * y - w * z), s * (x * z + w * y)],
            [s * (x * y + w * z), 1.0 - s * (x * x + z * z), s * (y * z - w * x)],
            [s * (x * z - w * y), s * (y * z + w * x), 1.0 - s * (x * x + y * y)],
        ]
    )


def save_demo(path, demo):
    """Write a demonstration as rows of t plus the row-major rotation."""
    n = len(demo)
    has_pos = demo.positions is not None
    lines = [
        f"# {_DEMO_MAGIC} v{SCHEMA_VERSION} dt={_fmt(demo.dt)} n={n} frame=world rep=matrix"
    ]
    for i in range(n):
        cells = [_fmt(demo.times[i])] + [_fmt(v) for v in demo.rotations[i].ravel()]
        if has_pos:
            cells += [_fmt(v) for v in demo.positions[i]]
        lines.append(",".join(cells))
    _write_text(path, "\n".join(lines) + "\n")


def load_demo(path, reorthonormalize=False):
    """Parse and validate one demonstration file.

    Rotations are stored row-major (or as wxyz quaternions when the header
    says ``rep=quat``).  Matrices failing the orthogonality tolerance raise
    NotARotation with their row index unless reorthonormalize repairs them
    explicitly via polar decomposition.
    """
    path = Path(path)
    header, data = _read_table(path, _DEMO_MAGIC)
    rep = header.get("rep", "matrix")
    rot_cols = 4 if rep == "quat" else 9
    if data.size == 0 or data.shape[1] not in (1 + rot_cols, 1 + rot_cols + 3):
        raise ParseError(
            f"expected 1+{rot_cols} (+3 optional position) columns", path=path, line=2
        )
    times = data[:, 0]
    if times.shape[0] >= 2 and np.any(np.diff(times) <= 0):
        raise ParseError("timestamps must be strictly increasing", path=path)
    rotations = np.empty((data.shape[0], 3, 3))
    for i in range(data.shape[0]):
        if rep == "quat":
            try:
                R = _quat_to_matrix(data[i, 1:5])
            except ValueError as exc:
                raise NotARotation(f"{path}: row {i}: {exc}") from exc
        else:
            R = data[i, 1:10].reshape(3, 3)
        if not so3.is_rotation(R):
            if reorthonormalize:
                R = so3.orthonormalize(R)
            else:
                raise NotARotation(f"{path}: row {i} fails the rotation check")
        rotations[i] = R
    positions = data[:, 1 + rot_cols:] if data.shape[1] == 1 + rot_cols + 3 else None
    return Demonstration(times, rotations, positions)


def load_demos(paths, reorthonormalize=False):
    """Load a demonstration set; all files must share one sampling step."""
    demos = [load_demo(p, reorthonormalize=reorthonormalize) for p in paths]
    if not demos:
        raise ParseError("no demonstration files given")
    dts = [d.dt for d in demos]
    if max(dts) - min(dts) > DT_TOL:
        raise InconsistentTiming(
            f"sampling steps differ by more than {DT_TOL}: {sorted(set(dts))}"
        )
    return demos


def save_trajectory(path, times, rotations, omega_world, weights=None):
    """Write a trajectory as t, psi, R (row-major), omega, weight columns.

    psi is the angle-axis chart coordinate of R in the world chart; its sign
    flips where the trajectory crosses the chart boundary, which is expected
    and does not indicate a discontinuity of R itself.
    """
    times = np.asarray(times, dtype=float)
    n = times.shape[0]
    rotations = np.asarray(rotations, dtype=float)
    omega_world = np.asarray(omega_world, dtype=float)
    if weights is None:
        weights = np.ones((n, 1))
    weights = np.asarray(weights, dtype=float)
    k = weights.shape[1] - 1
    lines = [f"# {_TRAJ_MAGIC} v{SCHEMA_VERSION} n={n} k={k}"]
    psis = so3.log_map_many(rotations) if n else np.empty((0, 3))
    for i in range(n):
        cells = (
            [_fmt(times[i])]
            + [_fmt(v) for v in psis[i]]
            + [_fmt(v) for v in rotations[i].ravel()]
            + [_fmt(v) for v in omega_world[i]]
            + [_fmt(v) for v in weights[i]]
        )
        lines.append(",".join(cells))
    _write_text(path, "\n".join(lines) + "\n")


def load_trajectory(path):
    """Inverse of save_trajectory: (times, rotations, omega, weights)."""
    path = Path(path)
    header, data = _read_table(path, _TRAJ_MAGIC)
    k = int(header.get("k", 0))
    want = 1 + 3 + 9 + 3 + (k + 1)
    if data.size == 0:
        return np.empty(0), np.empty((0, 3, 3)), np.empty((0, 3)), np.empty((0, k + 1))
    if data.shape[1] != want:
        raise ParseError(f"expected {want} columns, found {data.shape[1]}", path=path, line=2)
    times = data[:, 0]
    rotations = data[:, 4:13].reshape(-1, 3, 3)
    omega = data[:, 13:16]
    weights = data[:, 16:]
    return times, rotations, omega, weights


def save_metrics(path, metrics):
    """Write scalar metrics as deterministic key,value rows."""
    lines = ["# orifuse-metrics v1"]
    for key, value in metrics.items():
        if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
            lines.append(f"{key},{int(value)}")
        elif isinstance(value, bool):
            lines.append(f"{key},{int(value)}")
        else:
            lines.append(f"{key},{_fmt(value)}")
    _write_text(path, "\n".join(lines) + "\n")


def save_table(path, columns, rows):
    """Write a comparison table with named columns (sweep/eval output)."""
    lines = ["# orifuse-table v1", ",".join(columns)]
    for row in rows:
        cells = []
        for value in row:
            if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
                cells.append(str(int(value)))
            else:
                cells.append(_fmt(value))
        lines.append(",".join(cells))
    _write_text(path, "\n".join(lines) + "\n")


def save_mixture(path, mixture):
    """Serialize a fitted mixture to JSON (floats keep full precision)."""
    doc = {
        "schema_version": SCHEMA_VERSION,
        "priors": mixture.priors.tolist(),
        "means": mixture.means.tolist(),
        "covariances": mixture.covariances.tolist(),
    }
    _write_text(path, json.dumps(doc, indent=1))


def load_mixture(path):
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot parse mixture file: {exc}", path=path) from exc
    return GaussianMixture(
        np.asarray(doc["priors"], dtype=float),
        np.asarray(doc["means"], dtype=float),
        np.asarray(doc["covariances"], dtype=float),
    )


@dataclass(frozen=True)
class ViaConfig:
    """One via-point entry of a run configuration."""

    t: float
    omega: np.ndarray
    rotation: np.ndarray | None = None
    psi: np.ndarray | None = None
    frame: str = "world"
    orientation_var: np.ndarray | None = None
    velocity_var: np.ndarray = field(default_factory=lambda: np.full(3, 1e-10))
    acceleration_var: np.ndarray | None = None
    relaxed_axis: str | None = None
    eps_strict: float = 1e-10
    eps_loose: float = 1e3
    weight_half_width: float = 2.4

    def target_rotation(self, R_aux=None):
        if self.rotation is not None:
            return self.rotation
        if self.frame == "aux":
            if R_aux is None:
                raise ConfigError(f"via at t={self.t} uses frame=aux but no frame is known")
            return R_aux @ so3.exp_map(self.psi)
        return so3.exp_map(self.psi)

    def orientation_variances(self):
        if self.orientation_var is not None:
            return self.orientation_var
        var = np.full(3, self.eps_strict)
        if self.relaxed_axis is not None:
            var[_AXES.index(self.relaxed_axis)] = self.eps_loose
        return var


@dataclass(frozen=True)
class RunConfig:
    demo_paths: list
    components: int = 5
    seed: int = 0
    l: float = 0.01
    lam: float = 1.0
    lambda_a: float | None = None
    grid: int = 200
    memory: bool = True
    delta_t_via: float = 1e-3
    aux_policy: str = "first-demo-start"
    aux_rotation: np.ndarray | None = None
    aux_via_index: int | None = None
    via_points: list = field(default_factory=list)
    sweep_axis: str | None = None
    sweep_values: list = field(default_factory=list)
    sweep_via_index: int | None = None


def _vector(doc, key, size, path, default=None):
    if key not in doc or doc[key] is None:
        return default
    value = doc[key]
    if np.isscalar(value):
        return np.full(size, float(value))
    arr = np.asarray(value, dtype=float)
    if arr.shape != (size,):
        raise ConfigError(f"{path}: '{key}' must be a scalar or a {size}-vector")
    return arr


def _parse_via(doc, path):
    if "t" not in doc:
        raise ConfigError(f"{path}: via-point entry is missing 't'")
    rotation = None
    psi = None
    if "rotation" in doc and doc["rotation"] is not None:
        rotation = np.asarray(doc["rotation"], dtype=float).reshape(3, 3)
        if not so3.is_rotation(rotation):
            raise ConfigError(f"{path}: via rotation at t={doc['t']} is not a rotation")
    elif "psi" in doc and doc["psi"] is not None:
        psi = np.asarray(doc["psi"], dtype=float)
        if psi.shape != (3,):
            raise ConfigError(f"{path}: via 'psi' must be a 3-vector")
    else:
        raise ConfigError(f"{path}: via-point needs 'rotation' or 'psi'")
    frame = doc.get("frame", "world")
    if frame not in ("world", "aux"):
        raise ConfigError(f"{path}: via frame must be 'world' or 'aux'")
    relaxed = doc.get("relaxed_axis")
    if relaxed is not None and relaxed not in _AXES:
        raise ConfigError(f"{path}: relaxed_axis must be one of {_AXES}")
    return ViaConfig(
        t=float(doc["t"]),
        omega=_vector(doc, "omega", 3, path, default=np.zeros(3)),
        rotation=rotation,
        psi=psi,
        frame=frame,
        orientation_var=_vector(doc, "orientation_var", 3, path),
        velocity_var=_vector(doc, "velocity_var", 3, path, default=np.full(3, 1e-10)),
        acceleration_var=_vector(doc, "acceleration_var", 3, path),
        relaxed_axis=relaxed,
        eps_strict=float(doc.get("eps_strict", 1e-10)),
        eps_loose=float(doc.get("eps_loose", 1e3)),
        weight_half_width=float(doc.get("weight_half_width", 2.4)),
    )


def load_config(path):
    """Parse and validate a JSON run configuration."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"{path}: unsupported schema_version {version!r}")
    demos = doc.get("demos")
    if not isinstance(demos, list) or not demos:
        raise ConfigError(f"{path}: 'demos' must be a non-empty list of paths")
    demo_paths = [path.parent / p for p in demos]
    aux = doc.get("aux_frame", "first-demo-start")
    aux_rotation = None
    aux_via_index = None
    if isinstance(aux, dict):
        policy = aux.get("policy")
        if policy == "explicit":
            aux_rotation = np.asarray(aux.get("rotation"), dtype=float).reshape(3, 3)
            if not so3.is_rotation(aux_rotation):
                raise ConfigError(f"{path}: explicit aux_frame is not a rotation")
        elif policy == "via":
            aux_via_index = int(aux.get("index", 0))
        elif policy not in ("first-demo-start", "per-iovp"):
            raise ConfigError(f"{path}: unknown aux_frame policy {policy!r}")
    else:
        policy = aux
        if policy not in ("first-demo-start", "per-iovp"):
            raise ConfigError(f"{path}: unknown aux_frame policy {policy!r}")
    gmm_doc = doc.get("gmm", {})
    kernel_doc = doc.get("kernel", {})
    lambda_a = kernel_doc.get("lambda_a")
    vias = [_parse_via(v, path) for v in doc.get("via_points", [])]
    times = [v.t for v in vias]
    if times != sorted(times):
        raise ConfigError(f"{path}: via-point times must be sorted")
    sweep = doc.get("sweep") or {}
    sweep_axis = sweep.get("axis")
    if sweep_axis not in (None, "lambda_a", "target-rotation"):
        raise ConfigError(f"{path}: unknown sweep axis {sweep_axis!r}")
    cfg = RunConfig(
        demo_paths=demo_paths,
        components=int(gmm_doc.get("components", 5)),
        seed=int(gmm_doc.get("seed", 0)),
        l=float(kernel_doc.get("l", 0.01)),
        lam=float(kernel_doc.get("lambda", 1.0)),
        lambda_a=None if lambda_a is None else float(lambda_a),
        grid=int(doc.get("grid", 200)),
        memory=bool(doc.get("memory", True)),
        delta_t_via=float(doc.get("delta_t_via", 1e-3)),
        aux_policy=policy,
        aux_rotation=aux_rotation,
        aux_via_index=aux_via_index,
        via_points=vias,
        sweep_axis=sweep_axis,
        sweep_values=list(sweep.get("values", [])),
        sweep_via_index=sweep.get("via_index"),
    )
    _validate_config(cfg, path)
    return cfg


def _validate_config(cfg, path):
    if cfg.components < 1:
        raise ConfigError(f"{path}: gmm components must be >= 1")
    if cfg.l <= 0 or cfg.lam <= 0:
        raise ConfigError(f"{path}: kernel parameters must be positive")
    if cfg.lambda_a is not None and cfg.lambda_a <= 0:
        raise ConfigError(f"{path}: lambda_a must be positive")
    if cfg.grid < 2:
        raise ConfigError(f"{path}: grid must have at least 2 points")
    if cfg.aux_policy == "via" and cfg.aux_via_index is not None:
        if not 0 <= cfg.aux_via_index < len(cfg.via_points):
            raise ConfigError(f"{path}: aux via index {cfg.aux_via_index} out of range")
    if cfg.aux_policy == "per-iovp":
        # the non-interference principle is checked before any computation
        vias = cfg.via_points[1:]
        for k, via in enumerate(vias):
            if k + 1 < len(vias) and via.t + via.weight_half_width > vias[k + 1].t + 1e-12:
                raise DomainOverlap(
                    f"{path}: via at t={via.t} overlaps the next via's domain"
                )
            if k > 0 and via.t - via.weight_half_width < vias[k - 1].t - 1e-12:
                raise DomainOverlap(
                    f"{path}: via at t={via.t} overlaps the previous via's domain"
                )
        for via in vias:
            if via.frame == "aux":
                raise ConfigError(
                    f"{path}: per-iovp runs need world-frame via targets (frame=aux is ambiguous)"
                )
