"""Manifest-driven orchestration: dataset generation, feature extraction,
training, evaluation, single-file inference, and the MLP baseline.

File layout convention: `extract` writes feature files plus `index.csv`
into an output directory, and `train` / `eval` / `baseline-mlp` operate on
that same directory. The index's first line records the feature digest of
the config used at extraction time; eval refuses checkpoints whose config
disagrees. All commands are deterministic for a fixed seed when run
single-threaded.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import AudioClip, load_wav, segment_one_second
from .blocks import build_model
from .config import RunConfig
from .dsp import KIND_LFCC, KIND_MFCC, extract_lfcc, extract_mfcc
from .features import mask_band, pad_center_values, read_feature, write_feature
from .metrics import DegenerateInputError, EvalReport, ScoredSample, evaluate
from .nn import SGD, CheckpointError, accuracy, load_checkpoint, save_checkpoint, softmax, softmax_cross_entropy
from .synth import SynthTaskSpec, generate_dataset

LABELS = ("real", "fake")
SPLITS = ("train", "test", "eval")

MANIFEST_HEADER = ["path", "label", "split", "source_tag"]
INDEX_HEADER = ["segment_id", "path", "mfcc", "lfcc", "label", "split", "source_tag", "status"]

# time axis per raw feature layout: MFCC is coefficient x time, LFCC is time x coefficient
_TIME_AXIS = {KIND_MFCC: 1, KIND_LFCC: 0}


class ManifestError(ValueError):
    """Manifest or index file violates its schema."""


class PipelineError(RuntimeError):
    """A pipeline step cannot proceed; the message says what to run or fix."""


@dataclass
class ManifestEntry:
    path: str
    label: str
    split: str
    source_tag: str = ""


def write_manifest(path, rows: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=MANIFEST_HEADER)
        writer.writeheader()
        writer.writerows(rows)


def read_manifest(path) -> list[ManifestEntry]:
    entries = []
    seen = set()
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != MANIFEST_HEADER:
            raise ManifestError(
                f"{path}: expected header {','.join(MANIFEST_HEADER)}, got {reader.fieldnames}"
            )
        for i, row in enumerate(reader, start=2):
            entry = ManifestEntry(row["path"], row["label"], row["split"], row["source_tag"] or "")
            if entry.label not in LABELS:
                raise ManifestError(f"{path}:{i}: label must be one of {LABELS}, got {entry.label!r}")
            if entry.split not in SPLITS:
                raise ManifestError(f"{path}:{i}: split must be one of {SPLITS}, got {entry.split!r}")
            if entry.path in seen:
                raise ManifestError(f"{path}:{i}: duplicate path {entry.path!r}")
            seen.add(entry.path)
            entries.append(entry)
    return entries


# --- synthgen -------------------------------------------------------------


def run_synthgen(spec: SynthTaskSpec, out_dir) -> Path:
    """Generate the synthetic corpus and its manifest; returns manifest path."""
    out_dir = Path(out_dir)
    rows = generate_dataset(spec, out_dir / "wavs")
    manifest_path = out_dir / "manifest.csv"
    write_manifest(manifest_path, rows)
    return manifest_path


# --- extract --------------------------------------------------------------


def _extract_entry(entry_idx: int, entry: ManifestEntry, cfg: RunConfig, feature_dir: Path):
    """Feature rows for one manifest entry; errors become a status row."""
    try:
        clip = load_wav(entry.path)
        segments = segment_one_second(clip)
        rows = []
        for seg_idx, segment in enumerate(segments):
            segment_id = f"{entry_idx:05d}_{seg_idx:03d}"
            row = {
                "segment_id": segment_id,
                "path": entry.path,
                "mfcc": "",
                "lfcc": "",
                "label": entry.label,
                "split": entry.split,
                "source_tag": entry.source_tag,
                "status": "ok",
            }
            if cfg.fusion in ("mfcc_only", "aff"):
                m = extract_mfcc(segment, cfg.mfcc)
                out = feature_dir / f"{segment_id}.mfcc.affd"
                write_feature(out, m)
                row["mfcc"] = str(out)
            if cfg.fusion in ("lfcc_only", "aff"):
                m = extract_lfcc(segment, cfg.lfcc)
                out = feature_dir / f"{segment_id}.lfcc.affd"
                write_feature(out, m)
                row["lfcc"] = str(out)
            rows.append(row)
        return rows
    except Exception as exc:  # per-file failure must not kill the run
        return [{
            "segment_id": f"{entry_idx:05d}",
            "path": entry.path,
            "mfcc": "",
            "lfcc": "",
            "label": entry.label,
            "split": entry.split,
            "source_tag": entry.source_tag,
            "status": f"error: {exc}",
        }]


def run_extract(manifest_path, cfg: RunConfig, out_dir, threads: int = 1):
    """Segment every manifest file and write per-segment feature files.

    Returns (index_path, n_ok_segments, failures). Extraction order in the
    index follows the manifest regardless of thread count.
    """
    entries = read_manifest(manifest_path)
    out_dir = Path(out_dir)
    feature_dir = out_dir / "features"
    feature_dir.mkdir(parents=True, exist_ok=True)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_entry = list(pool.map(
                lambda pair: _extract_entry(pair[0], pair[1], cfg, feature_dir),
                enumerate(entries),
            ))
    else:
        per_entry = [_extract_entry(i, e, cfg, feature_dir) for i, e in enumerate(entries)]

    index_path = out_dir / "index.csv"
    failures = []
    n_ok = 0
    with open(index_path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# feature_digest={cfg.feature_digest()}\n")
        writer = csv.DictWriter(fh, fieldnames=INDEX_HEADER)
        writer.writeheader()
        for rows in per_entry:
            for row in rows:
                writer.writerow(row)
                if row["status"] == "ok":
                    n_ok += 1
                else:
                    failures.append((row["path"], row["status"]))
    return index_path, n_ok, failures


def read_index(index_path) -> tuple[str, list[dict]]:
    """Returns (feature_digest, rows)."""
    with open(index_path, "r", newline="", encoding="utf-8") as fh:
        first = fh.readline().strip()
        if not first.startswith("# feature_digest="):
            raise ManifestError(f"{index_path}: missing feature_digest line")
        digest = first.split("=", 1)[1]
        reader = csv.DictReader(io.StringIO(fh.read()))
        if reader.fieldnames != INDEX_HEADER:
            raise ManifestError(f"{index_path}: unexpected index header {reader.fieldnames}")
        rows = list(reader)
    return digest, rows


# --- training -------------------------------------------------------------


def _load_split(index_path, cfg: RunConfig, split: str):
    """Load raw feature arrays for one split; fails with the fix spelled out."""
    digest, rows = read_index(index_path)
    if digest != cfg.feature_digest():
        raise PipelineError(
            "feature digest mismatch: index was extracted with a different feature config\n"
            f"  index:  {digest}\n  config: {cfg.feature_digest()}"
        )
    samples = []
    for row in rows:
        if row["status"] != "ok" or row["split"] != split:
            continue
        sample = {
            "label": LABELS.index(row["label"]),
            "tag": row["source_tag"],
            "path": row["path"],
            "mfcc": None,
            "lfcc": None,
        }
        for kind in (KIND_MFCC, KIND_LFCC):
            needed = cfg.fusion in (f"{kind}_only", "aff")
            if not needed:
                continue
            if not row[kind]:
                raise PipelineError(
                    f"split {split!r} has no {kind} features for fusion mode {cfg.fusion!r}; "
                    f"run `affdet extract` with this config first"
                )
            sample[kind] = read_feature(row[kind]).values.astype(np.float32)
        samples.append(sample)
    if not samples:
        raise DegenerateInputError(f"split {split!r} is empty in {index_path}")
    return samples


def _augmented_input(values: np.ndarray, kind: str, cfg: RunConfig,
                     epoch: int, sample_idx: int) -> np.ndarray:
    """Mask (when enabled) then pad one raw feature to the canonical grid."""
    if cfg.masking.enabled and cfg.masking.fraction > 0:
        rng = np.random.default_rng(
            [cfg.masking.seed, epoch, sample_idx, _TIME_AXIS[kind]]
        )
        time_axis = _TIME_AXIS[kind]
        values = mask_band(values, time_axis, cfg.masking.fraction, rng)
        values = mask_band(values, 1 - time_axis, cfg.masking.fraction, rng)
    return pad_center_values(values).astype(np.float32)


def _batch_inputs(samples, indices, cfg: RunConfig, epoch: int, train: bool):
    """Stack (N,1,136,44) inputs for the fusion mode; masking only when training."""
    batches = {}
    for kind in (KIND_MFCC, KIND_LFCC):
        if cfg.fusion not in (f"{kind}_only", "aff"):
            batches[kind] = None
            continue
        mats = []
        for i in indices:
            raw = samples[i][kind]
            if train:
                mats.append(_augmented_input(raw, kind, cfg, epoch, int(i)))
            else:
                mats.append(pad_center_values(raw).astype(np.float32))
        batches[kind] = np.stack(mats)[:, None, :, :]
    return batches[KIND_MFCC], batches[KIND_LFCC]


def run_train(cfg: RunConfig, out_dir, seed: int | None = None):
    """Train the configured model on split=train; returns checkpoint path.

    Writes `checkpoint.affc` and `train_log.txt` (one line per epoch, no
    timestamps so reruns are byte-identical).
    """
    out_dir = Path(out_dir)
    if seed is not None:
        cfg = RunConfig.from_dict({**cfg.to_dict(), "seed": int(seed)})
    samples = _load_split(out_dir / "index.csv", cfg, "train")
    labels = np.array([s["label"] for s in samples])

    model = build_model(cfg.backbone_config(), seed=cfg.seed)
    opt = SGD(model.trainable_parameters(), lr=cfg.optimizer.lr, momentum=cfg.optimizer.momentum)
    n = len(samples)
    batch = cfg.optimizer.batch_size

    log_lines = []
    for epoch in range(cfg.optimizer.epochs):
        order = np.random.default_rng([cfg.seed, 7, epoch]).permutation(n)
        total_loss = 0.0
        total_correct = 0.0
        for start in range(0, n, batch):
            idx = order[start : start + batch]
            mfcc_in, lfcc_in = _batch_inputs(samples, idx, cfg, epoch, train=True)
            y = labels[idx]
            model.zero_grad()
            logits = model.forward(mfcc=mfcc_in, lfcc=lfcc_in, train=True)
            loss, dlogits = softmax_cross_entropy(logits, y)
            model.backward(dlogits)
            opt.step()
            total_loss += loss * len(idx)
            total_correct += accuracy(logits, y) * len(idx)
        log_lines.append(
            f"epoch={epoch + 1} loss={total_loss / n:.6f} acc={total_correct / n:.4f}"
        )

    (out_dir / "train_log.txt").write_text("\n".join(log_lines) + "\n", encoding="utf-8")
    checkpoint_path = out_dir / "checkpoint.affc"
    save_checkpoint(checkpoint_path, model.state_arrays(), cfg.config_digest(), cfg.to_json())
    return checkpoint_path, log_lines


def load_model_from_checkpoint(checkpoint_path):
    """Rebuild the model and RunConfig stored in an AFFC checkpoint."""
    arrays, digest, config_json = load_checkpoint(checkpoint_path)
    cfg = RunConfig.from_json(config_json)
    if digest != cfg.config_digest():
        raise CheckpointError(
            f"{checkpoint_path}: stored digest {digest} does not match its own config "
            f"{cfg.config_digest()}"
        )
    model = build_model(cfg.backbone_config(), seed=cfg.seed)
    model.load_state_arrays(arrays)
    return model, cfg


def score_segments(model, cfg: RunConfig, samples, batch: int = 64) -> np.ndarray:
    """Fake-class probability for each loaded sample, in order."""
    scores = []
    for start in range(0, len(samples), batch):
        idx = np.arange(start, min(start + batch, len(samples)))
        mfcc_in, lfcc_in = _batch_inputs(samples, idx, cfg, epoch=0, train=False)
        logits = model.forward(mfcc=mfcc_in, lfcc=lfcc_in, train=False)
        scores.append(softmax(logits)[:, 1])
    return np.concatenate(scores)


def run_eval(checkpoint_path, out_dir, split: str = "test", threshold: float = 0.5,
             pool: str = "segments") -> EvalReport:
    """Score a split and write report.txt / metrics.kv / roc.txt files.

    pool="files" averages segment scores per source file before computing
    metrics; the default scores each 1-second segment independently.
    """
    if pool not in ("segments", "files"):
        raise PipelineError(f"pool must be 'segments' or 'files', got {pool!r}")
    out_dir = Path(out_dir)
    model, cfg = load_model_from_checkpoint(checkpoint_path)

    index_digest, _ = read_index(out_dir / "index.csv")
    if index_digest != cfg.feature_digest():
        raise PipelineError(
            "checkpoint/features digest mismatch:\n"
            f"  checkpoint features: {cfg.feature_digest()}\n"
            f"  extracted features:  {index_digest}"
        )

    samples = _load_split(out_dir / "index.csv", cfg, split)
    scores = score_segments(model, cfg, samples)

    if pool == "files":
        by_file: dict[str, list[int]] = {}
        for i, s in enumerate(samples):
            by_file.setdefault(s["path"], []).append(i)
        scored = [
            ScoredSample(
                score=float(scores[idxs].mean()),
                label=samples[idxs[0]]["label"],
                source_tag=samples[idxs[0]]["tag"],
            )
            for _, idxs in sorted(by_file.items())
        ]
    else:
        scored = [
            ScoredSample(score=float(scores[i]), label=s["label"], source_tag=s["tag"])
            for i, s in enumerate(samples)
        ]

    report = evaluate(scored, threshold)
    (out_dir / f"report_{split}.txt").write_text(report.to_text(), encoding="utf-8")
    (out_dir / f"metrics_{split}.kv").write_text(report.to_kv(), encoding="utf-8")
    (out_dir / f"roc_{split}.txt").write_text(report.roc_text(), encoding="utf-8")
    return report


def run_infer(checkpoint_path, wav_path) -> tuple[list[float], float]:
    """Per-segment fake probabilities and their mean for a single WAV file."""
    model, cfg = load_model_from_checkpoint(checkpoint_path)
    clip = load_wav(wav_path)
    segments = segment_one_second(clip)
    if not segments:
        raise PipelineError(
            f"{wav_path}: audio is shorter than 1 second ({clip.duration:.3f} s); nothing to score"
        )
    samples = []
    for segment in segments:
        sample = {"mfcc": None, "lfcc": None, "label": 0, "tag": "", "path": str(wav_path)}
        if cfg.fusion in ("mfcc_only", "aff"):
            sample["mfcc"] = extract_mfcc(segment, cfg.mfcc).values.astype(np.float32)
        if cfg.fusion in ("lfcc_only", "aff"):
            sample["lfcc"] = extract_lfcc(segment, cfg.lfcc).values.astype(np.float32)
        samples.append(sample)
    scores = [float(s) for s in score_segments(model, cfg, samples)]
    return scores, float(np.mean(scores))


# --- MLP baseline ----------------------------------------------------------


def run_baseline_mlp(cfg: RunConfig, out_dir, feature_kind: str = KIND_MFCC,
                     split: str = "test", threshold: float = 0.5) -> EvalReport:
    """Train the 2-hidden-layer (5, 2) MLP on flattened raw features.

    Inputs are standardized with train-split statistics. Uses the config's
    optimizer settings and emits the same report files as run_eval, with a
    `mlp_` prefix.
    """
    from .nn import Linear, Module, ReLU  # local import keeps module top light

    if feature_kind not in (KIND_MFCC, KIND_LFCC):
        raise PipelineError(f"feature_kind must be 'mfcc' or 'lfcc', got {feature_kind!r}")

    out_dir = Path(out_dir)
    train_samples = _load_split(out_dir / "index.csv", cfg, "train")
    eval_samples = _load_split(out_dir / "index.csv", cfg, split)

    def flatten(samples):
        mats = [s[feature_kind] for s in samples]
        if any(m is None for m in mats):
            raise PipelineError(
                f"no {feature_kind} features in index; run `affdet extract` with a config "
                f"whose fusion mode includes {feature_kind}"
            )
        x = np.stack([m.reshape(-1) for m in mats]).astype(np.float64)
        y = np.array([s["label"] for s in samples])
        return x, y

    x_train, y_train = flatten(train_samples)
    x_eval, y_eval = flatten(eval_samples)
    mean = x_train.mean(axis=0)
    std = np.maximum(x_train.std(axis=0), 1e-8)
    x_train = ((x_train - mean) / std).astype(np.float32)
    x_eval = ((x_eval - mean) / std).astype(np.float32)

    class BaselineMLP(Module):
        def __init__(self, dim, rng):
            self.fc1 = Linear(dim, 5, rng=rng)
            self.act1 = ReLU()
            self.fc2 = Linear(5, 2, rng=rng)
            self.act2 = ReLU()
            self.head = Linear(2, 2, rng=rng)

        def forward(self, x, train=False):
            h = self.act1.forward(self.fc1.forward(x))
            h = self.act2.forward(self.fc2.forward(h))
            return self.head.forward(h)

        def backward(self, dout):
            dh = self.act2.backward(self.head.backward(dout))
            dh = self.act1.backward(self.fc2.backward(dh))
            return self.fc1.backward(dh)

    rng = np.random.default_rng(cfg.seed)
    model = BaselineMLP(x_train.shape[1], rng)
    opt = SGD(model.trainable_parameters(), lr=cfg.optimizer.lr, momentum=cfg.optimizer.momentum)
    n = x_train.shape[0]
    for epoch in range(cfg.optimizer.epochs):
        order = np.random.default_rng([cfg.seed, 11, epoch]).permutation(n)
        for start in range(0, n, cfg.optimizer.batch_size):
            idx = order[start : start + cfg.optimizer.batch_size]
            model.zero_grad()
            logits = model.forward(x_train[idx], train=True)
            _, dlogits = softmax_cross_entropy(logits, y_train[idx])
            model.backward(dlogits)
            opt.step()

    scores = softmax(model.forward(x_eval))[:, 1]
    scored = [
        ScoredSample(score=float(scores[i]), label=int(y_eval[i]), source_tag=s["tag"])
        for i, s in enumerate(eval_samples)
    ]
    report = evaluate(scored, threshold)
    (out_dir / f"mlp_report_{split}.txt").write_text(report.to_text(), encoding="utf-8")
    (out_dir / f"mlp_metrics_{split}.kv").write_text(report.to_kv(), encoding="utf-8")
    return report
