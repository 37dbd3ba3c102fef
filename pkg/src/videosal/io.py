"""On-disk formats: tensor bundles, checkpoints, fixation CSVs, reports, PGM.

Binary layout shared by bundles and checkpoints:

    magic (4 bytes) | u32 little-endian manifest length | manifest JSON | payload

The manifest records name/shape/element-type per tensor with byte offsets
into the payload region; payloads are raw little-endian floats, row-major.
Round-trips are bit-exact.
"""

from __future__ import annotations

import csv
import dataclasses
import json
from pathlib import Path

import numpy as np

from .config import ModelConfig, TrainConfig, paper_profile, toy_profile
from .errors import ConfigurationError, FileFormatError
from .metrics import FixationRecord, MetricsReport
from .optim import AdamState
from .synth import SyntheticSpec, Video

BUNDLE_MAGIC = b"TBND"
CHECKPOINT_MAGIC = b"VSCK"

_DTYPE_TAGS = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}


def _dtype_tag(arr: np.ndarray) -> str:
    if arr.dtype == np.float32:
        return "f32"
    if arr.dtype == np.float64:
        return "f64"
    raise FileFormatError(f"unsupported element type {arr.dtype}; use float32/float64")


def _write_container(path, magic: bytes, manifest: dict, payload: bytes) -> None:
    blob = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(magic)
        f.write(len(blob).to_bytes(4, "little"))
        f.write(blob)
        f.write(payload)


def _read_container(path, magic: bytes) -> tuple[dict, bytes]:
    raw = Path(path).read_bytes()
    if raw[:4] != magic:
        raise FileFormatError(f"{path}: bad magic {raw[:4]!r} at byte 0, expected {magic!r}")
    mlen = int.from_bytes(raw[4:8], "little")
    head = 8 + mlen
    try:
        manifest = json.loads(raw[8:head].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FileFormatError(f"{path}: malformed manifest in bytes 8..{head}: {e}") from e
    return manifest, raw[head:]


def save_bundle(path, array: np.ndarray, name: str = "tensor") -> None:
    arr = np.ascontiguousarray(array)
    tag = _dtype_tag(arr)
    manifest = {
        "name": name,
        "shape": list(arr.shape),
        "dtype": tag,
        "byte_order": "little",
        "offset": 0,
    }
    _write_container(path, BUNDLE_MAGIC, manifest, arr.astype(_DTYPE_TAGS[tag], copy=False).tobytes())


def load_bundle(path) -> tuple[str, np.ndarray]:
    manifest, payload = _read_container(path, BUNDLE_MAGIC)
    return manifest["name"], _extract(path, manifest, payload)


def _extract(path, entry: dict, payload: bytes) -> np.ndarray:
    if entry.get("byte_order", "little") != "little":
        raise FileFormatError(f"{path}: unsupported byte order {entry.get('byte_order')!r}")
    try:
        dt = _DTYPE_TAGS[entry["dtype"]]
    except KeyError:
        raise FileFormatError(f"{path}: unknown element type {entry.get('dtype')!r}") from None
    shape = tuple(entry["shape"])
    n = int(np.prod(shape)) if shape else 1
    start = entry.get("offset", 0)
    end = start + n * dt.itemsize
    if end > len(payload):
        raise FileFormatError(
            f"{path}: payload for {entry.get('name')!r} ends at byte {end}, file has {len(payload)}"
        )
    return np.frombuffer(payload[start:end], dtype=dt).reshape(shape).copy()


# -- model config (de)serialization -------------------------------------------


def config_to_dict(cfg: ModelConfig) -> dict:
    d = dataclasses.asdict(cfg)
    for key in ("window", "heads", "depths", "patch"):
        d[key] = list(d[key])
    return d


def config_from_dict(d: dict) -> ModelConfig:
    kwargs = dict(d)
    for key in ("window", "heads", "depths", "patch"):
        if key in kwargs:
            kwargs[key] = tuple(kwargs[key])
    return ModelConfig(**kwargs)


def load_run_config(path) -> tuple[ModelConfig, TrainConfig]:
    """Flat key-value JSON; unknown keys rejected, missing keys take toy defaults."""
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise FileFormatError(f"{path}: not valid JSON: {e}") from e
    profile = raw.pop("profile", "toy")
    if profile == "paper":
        mdl = paper_profile()
        trn = TrainConfig(learning_rate=1e-5, clip_len=32)
    elif profile == "toy":
        mdl = toy_profile()
        trn = TrainConfig()
    else:
        raise ConfigurationError(f"{path}: unknown profile {profile!r}")
    mdl_fields = {f.name for f in dataclasses.fields(ModelConfig)}
    trn_fields = {f.name for f in dataclasses.fields(TrainConfig)}
    mdl_over, trn_over = {}, {}
    for key, value in raw.items():
        if key in mdl_fields:
            mdl_over[key] = tuple(value) if isinstance(value, list) else value
        elif key in trn_fields:
            trn_over[key] = value
        else:
            raise ConfigurationError(f"{path}: unknown config key {key!r}")
    mdl = dataclasses.replace(mdl, **mdl_over)
    trn = dataclasses.replace(trn, **trn_over)
    mdl.validate()
    trn.validate()
    return mdl, trn


# -- checkpoints ---------------------------------------------------------------


@dataclasses.dataclass
class Checkpoint:
    config: ModelConfig
    arrays: dict[str, np.ndarray]
    adam: dict | None
    metadata: dict


def save_checkpoint(path, config: ModelConfig, params: dict, adam: AdamState | None = None,
                    metadata: dict | None = None) -> None:
    arrays: dict[str, np.ndarray] = {name: getattr(p, "data", p) for name, p in params.items()}
    if adam is not None:
        for name in params:
            arrays[f"adam.m.{name}"] = adam.m[name]
            arrays[f"adam.v.{name}"] = adam.v[name]
    entries = []
    chunks = []
    offset = 0
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        tag = _dtype_tag(arr)
        data = arr.astype(_DTYPE_TAGS[tag], copy=False).tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "dtype": tag,
                        "byte_order": "little", "offset": offset})
        chunks.append(data)
        offset += len(data)
    manifest = {
        "format_version": 1,
        "model_config": config_to_dict(config),
        "metadata": metadata or {},
        "adam": None if adam is None else {
            "lr": adam.lr, "beta1": adam.beta1, "beta2": adam.beta2,
            "eps": adam.eps, "step": adam.step,
        },
        "tensors": entries,
    }
    _write_container(path, CHECKPOINT_MAGIC, manifest, b"".join(chunks))


def load_checkpoint(path) -> Checkpoint:
    manifest, payload = _read_container(path, CHECKPOINT_MAGIC)
    arrays = {e["name"]: _extract(path, e, payload) for e in manifest["tensors"]}
    return Checkpoint(
        config=config_from_dict(manifest["model_config"]),
        arrays=arrays,
        adam=manifest.get("adam"),
        metadata=manifest.get("metadata", {}),
    )


def apply_checkpoint(model, ckpt: Checkpoint) -> AdamState | None:
    """Load weights (and optimizer moments, if present) into a model.

    The checkpointed ModelConfig must match the model's exactly.
    """
    if ckpt.config != model.config:
        raise ConfigurationError(
            f"checkpoint config {ckpt.config} does not match model config {model.config}"
        )
    weights = {k: v for k, v in ckpt.arrays.items() if not k.startswith("adam.")}
    model.load_state(weights)
    if ckpt.adam is None:
        return None
    state = AdamState(lr=ckpt.adam["lr"], beta1=ckpt.adam["beta1"],
                      beta2=ckpt.adam["beta2"], eps=ckpt.adam["eps"],
                      step=ckpt.adam["step"])
    for name in model.params:
        state.m[name] = ckpt.arrays[f"adam.m.{name}"].astype(model.dtype, copy=True)
        state.v[name] = ckpt.arrays[f"adam.v.{name}"].astype(model.dtype, copy=True)
    return state


# -- fixation CSV ---------------------------------------------------------------


def save_fixations_csv(path, videos: list[Video]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["video", "frame", "row", "col"])
        for video in videos:
            for rec in video.fixations:
                for r, c in rec.points:
                    writer.writerow([video.name, rec.frame, r, c])


def load_fixations_csv(path, height: int, width: int) -> dict[str, dict[int, list[tuple[int, int]]]]:
    out: dict[str, dict[int, list[tuple[int, int]]]] = {}
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != ["video", "frame", "row", "col"]:
            raise FileFormatError(f"{path}:1: expected header video,frame,row,col, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 4:
                raise FileFormatError(f"{path}:{lineno}: expected 4 columns, got {len(row)}")
            video, frame_s, row_s, col_s = row
            try:
                frame, r, c = int(frame_s), int(row_s), int(col_s)
            except ValueError:
                raise FileFormatError(f"{path}:{lineno}: non-integer frame/row/col in {row}") from None
            if not (0 <= r < height and 0 <= c < width):
                raise FileFormatError(
                    f"{path}:{lineno}: fixation ({r}, {c}) outside {height}x{width} frame"
                )
            if frame < 0:
                raise FileFormatError(f"{path}:{lineno}: negative frame index {frame}")
            out.setdefault(video, {}).setdefault(frame, []).append((r, c))
    return out


# -- datasets --------------------------------------------------------------------


def save_dataset(videos: list[Video], out_dir, spec: SyntheticSpec | None = None) -> None:
    out = Path(out_dir)
    (out / "videos").mkdir(parents=True, exist_ok=True)
    for video in videos:
        vdir = out / "videos" / video.name
        vdir.mkdir(parents=True, exist_ok=True)
        save_bundle(vdir / "frames.tbnd", video.frames, name=f"{video.name}/frames")
        save_bundle(vdir / "density.tbnd", video.density, name=f"{video.name}/density")
    save_fixations_csv(out / "fixations.csv", videos)
    meta = {
        "videos": [v.name for v in videos],
        "frames": int(videos[0].frames.shape[0]),
        "height": int(videos[0].frames.shape[1]),
        "width": int(videos[0].frames.shape[2]),
        "spec": dataclasses.asdict(spec) if spec is not None else None,
    }
    (out / "dataset.json").write_text(json.dumps(meta, indent=2, sort_keys=True))


def load_dataset(in_dir) -> list[Video]:
    root = Path(in_dir)
    meta_path = root / "dataset.json"
    if not meta_path.exists():
        raise FileFormatError(f"{meta_path}: dataset manifest not found")
    meta = json.loads(meta_path.read_text())
    fixmap = load_fixations_csv(root / "fixations.csv", meta["height"], meta["width"])
    videos = []
    for name in meta["videos"]:
        vdir = root / "videos" / name
        _, frames = load_bundle(vdir / "frames.tbnd")
        _, density = load_bundle(vdir / "density.tbnd")
        per_frame = fixmap.get(name, {})
        fixations = [
            FixationRecord(frame=t, points=tuple(per_frame.get(t, [])),
                           height=meta["height"], width=meta["width"])
            for t in range(meta["frames"])
        ]
        videos.append(Video(name=name, frames=frames, density=density, fixations=fixations))
    return videos


# -- reports ----------------------------------------------------------------------


def write_metrics_csv(reports: list[MetricsReport], path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["video", "frame", "auc_j", "s_auc", "nss", "cc", "sim"])
        for report in reports:
            for row in report.rows:
                writer.writerow([
                    row["video"], row["frame"],
                    *("" if row[m] is None else repr(row[m])
                      for m in ("auc_j", "s_auc", "nss", "cc", "sim")),
                ])


def write_metrics_json(reports: list[MetricsReport], path) -> None:
    doc = {
        report.video: {
            "aggregate": report.aggregate(),
            "skipped": report.skipped,
            "frames": [
                {k: row[k] for k in ("frame", "auc_j", "s_auc", "nss", "cc", "sim")}
                for row in report.rows
            ],
        }
        for report in reports
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True))


def write_train_log_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["iteration", "cc", "kl", "total", "val_total"])
        for row in rows:
            writer.writerow([
                row["iteration"], repr(row["cc"]), repr(row["kl"]), repr(row["total"]),
                "" if row.get("val_total") is None else repr(row["val_total"]),
            ])


def write_ablation_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["variant", "params", "cc", "nss", "sim", "auc_j"])
        for row in rows:
            writer.writerow([row["variant"], row["params"],
                             *(repr(row[m]) for m in ("cc", "nss", "sim", "auc_j"))])


def export_pgm(map_, path) -> None:
    """8-bit binary PGM; [0,1] values scale to [0,255] with round-half-up."""
    arr = np.asarray(map_, dtype=np.float64)
    if arr.ndim != 2:
        raise FileFormatError(f"PGM export needs a 2-D map, got shape {arr.shape}")
    levels = np.clip(np.floor(arr * 255.0 + 0.5), 0, 255).astype(np.uint8)
    h, w = levels.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(levels.tobytes())
