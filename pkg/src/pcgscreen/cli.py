"""Config-driven command-line orchestration of the full pipeline.

Subcommands: synth, preprocess, extract, evaluate, search, predict,
report.  Every report JSON embeds the resolved configuration, the seed,
and the tool version, so a run can be reproduced bit-identically.
Errors are emitted as machine-readable JSON on stderr with exit code 1
for configuration errors, 2 for data errors, and 3 for internal numeric
failures.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cepstral import CepstralConfig
from .dataio import (
    COHORT_HELDOUT,
    COHORT_TRAIN,
    LABEL_CAD,
    LABEL_NORMAL,
    load_annotations,
    load_manifest,
    load_recording,
    write_annotations,
    write_manifest,
    write_recording,
)
from .errors import ConfigError, DataError, PcgScreenError
from .evaluate import (
    MODE_FEATURE_LEVEL,
    CvConfig,
    channel_combination_search,
    cross_validate,
    cross_validate_score_fusion,
    feature_level_fuse,
    svm_grid_search,
    train_full_and_predict,
)
from .features import (
    FAMILIES,
    FAMILY_PSD,
    FAMILY_SCALE,
    per_channel_matrices,
)
from .learn import KernelSpec, KnnSpec, wilcoxon_rank_sum
from .preprocess import FilterSpec, preprocess_recording
from .selection import FeatureMatrix
from .spectral import SubbandConfig, welch_psd
from .synth import SynthParams, synth_dataset

SCHEMA_VERSION = 1

DEFAULT_CONFIG: dict = {
    "workdir": "pcgscreen-out",
    "seed": 20240101,
    "data": {"manifest": None, "annotations": None},
    "synth": {
        "n_per_class": 40,
        "heldout_per_class": 0,
        "heart_rate_bpm": 72.0,
        "murmur_rel_power": 0.3,
        "ambient_noise_std": 0.02,
    },
    "preprocess": {"filter_order": 8, "cutoff_hz": 1000.0, "fs_out": 2000.0},
    "feature": {
        "family": "lfcc",
        "channels": [2, 3, 6, 7],
        "cepstral": {"num_frames": 20, "coeff_lo": 0, "coeff_hi": 7},
        "cepstral_by_channel": {},
        "subband": {"sbw_hz": 11.72, "tbw_hz": 700.0},
    },
    "selection": {"method": None, "dim": None, "search": False},
    "fusion": {"mode": MODE_FEATURE_LEVEL, "use_platt": False},
    "cv": {
        "k": 5,
        "iterations": 20,
        "classifier": {"kind": "rbf", "C": 1.0, "gamma": None, "coef0": 0.0},
    },
}


# ---------------------------------------------------------------------------
# Configuration handling


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        here = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key: {here}")
        if isinstance(base[key], dict) and isinstance(val, dict) and key not in (
            "cepstral_by_channel", "classifier",
        ):
            out[key] = _merge(base[key], val, here)
        else:
            out[key] = copy.deepcopy(val)
    return out


def load_config(path: str | Path | None, seed_override: int | None = None) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    base_dir = Path.cwd()
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            user = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError(f"config root must be a JSON object: {path}")
        cfg = _merge(cfg, user)
        base_dir = path.parent
    if seed_override is not None:
        cfg["seed"] = int(seed_override)
    if cfg["feature"]["family"] not in FAMILIES:
        raise ConfigError(f"unknown feature family: {cfg['feature']['family']!r}")

    workdir = Path(cfg["workdir"])
    if not workdir.is_absolute():
        workdir = base_dir / workdir
    cfg["workdir"] = str(workdir)
    for key in ("manifest", "annotations"):
        if cfg["data"][key] is None:
            cfg["data"][key] = str(workdir / "data" / f"{key}.csv")
        else:
            p = Path(cfg["data"][key])
            cfg["data"][key] = str(p if p.is_absolute() else base_dir / p)
    return cfg


def _classifier_from_config(c: dict) -> KernelSpec | KnnSpec:
    kind = c.get("kind", "rbf")
    if kind == "knn":
        return KnnSpec(k=int(c.get("k", 11)), metric=c.get("metric", "euclidean"))
    return KernelSpec(
        kind=kind,
        C=float(c.get("C", 1.0)),
        gamma=None if c.get("gamma") is None else float(c["gamma"]),
        coef0=float(c.get("coef0", 0.0)),
    )


def _cv_from_config(cfg: dict) -> CvConfig:
    c = cfg["cv"]
    return CvConfig(
        k=int(c["k"]),
        iterations=int(c["iterations"]),
        rng_seed=int(cfg["seed"]),
        classifier=_classifier_from_config(c["classifier"]),
    )


def _channel_configs(cfg: dict, strict: bool):
    """Per-channel feature configs resolved from the config file."""
    feat = cfg["feature"]
    family = feat["family"]
    channels = [int(c) for c in feat["channels"]]
    out = {}
    for ch in channels:
        if family == FAMILY_PSD:
            sb = feat["subband"]
            out[ch] = SubbandConfig(
                sbw_hz=float(sb["sbw_hz"]), tbw_hz=float(sb["tbw_hz"])
            )
        else:
            base = dict(feat["cepstral"])
            base.update(feat["cepstral_by_channel"].get(str(ch), {}))
            ccfg = CepstralConfig(
                scale=FAMILY_SCALE[family],
                num_frames=int(base["num_frames"]),
                coeff_lo=int(base["coeff_lo"]),
                coeff_hi=int(base["coeff_hi"]),
            )
            if strict:
                ccfg.validate_grid()
            out[ch] = ccfg
    return out


# ---------------------------------------------------------------------------
# Caching and report output


def _hash_parts(*parts: bytes) -> str:
    h = hashlib.sha256()
    for part in parts:
        h.update(part)
        h.update(b"\x1f")
    return h.hexdigest()[:24]


def _config_bytes(obj) -> bytes:
    return json.dumps(obj, sort_keys=True).encode()


def _preprocess_key(cfg: dict) -> str:
    manifest_path = Path(cfg["data"]["manifest"])
    ann_path = Path(cfg["data"]["annotations"])
    if not manifest_path.exists():
        raise ConfigError(f"manifest not found: {manifest_path}")
    if not ann_path.exists():
        raise ConfigError(f"annotations not found: {ann_path}")
    manifest = load_manifest(manifest_path)
    parts = [manifest_path.read_bytes(), ann_path.read_bytes()]
    for entry in manifest.entries:
        parts.append(entry.path.read_bytes())
    parts.append(_config_bytes(cfg["preprocess"]))
    parts.append(__version__.encode())
    return _hash_parts(*parts)


def _cache_dir(cfg: dict) -> Path:
    d = Path(cfg["workdir"]) / "cache"
    d.mkdir(parents=True, exist_ok=True)
    return d


def _report_path(cfg: dict, command: str) -> Path:
    d = Path(cfg["workdir"]) / "reports"
    d.mkdir(parents=True, exist_ok=True)
    return d / f"{command}.json"


def write_report(cfg: dict, command: str, results: dict) -> Path:
    """Serialize a deterministic report embedding config and version."""
    doc = {
        "schema_version": SCHEMA_VERSION,
        "tool": {"name": "pcgscreen", "version": __version__},
        "command": command,
        "seed": cfg["seed"],
        "config": cfg,
        "results": results,
    }
    path = _report_path(cfg, command)
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# Epoch cache


def _save_epochs(path: Path, rows: list[dict]) -> None:
    samples = np.concatenate([r["samples"] for r in rows])
    offsets = np.cumsum([0] + [len(r["samples"]) for r in rows[:-1]])
    np.savez_compressed(
        path,
        samples=samples,
        offsets=offsets.astype(np.int64),
        lengths=np.array([len(r["samples"]) for r in rows], dtype=np.int64),
        subject_ids=np.array([r["subject_id"] for r in rows]),
        channel_ids=np.array([r["channel_id"] for r in rows], dtype=np.int64),
        epoch_idxs=np.array([r["epoch_idx"] for r in rows], dtype=np.int64),
        labels=np.array([r["label"] for r in rows]),
        cohorts=np.array([r["cohort"] for r in rows]),
        fs_hz=np.float64(rows[0]["fs_hz"]),
    )


def _load_epochs(path: Path):
    from .preprocess import Epoch

    with np.load(path, allow_pickle=False) as z:
        samples = z["samples"]
        offsets = z["offsets"]
        lengths = z["lengths"]
        fs = float(z["fs_hz"])
        epochs = []
        cohorts = []
        for i in range(len(lengths)):
            epochs.append(
                Epoch(
                    subject_id=str(z["subject_ids"][i]),
                    channel_id=int(z["channel_ids"][i]),
                    epoch_idx=int(z["epoch_idxs"][i]),
                    samples=samples[offsets[i]:offsets[i] + lengths[i]],
                    label=str(z["labels"][i]),
                    fs_hz=fs,
                )
            )
            cohorts.append(str(z["cohorts"][i]))
    return epochs, cohorts


def _ensure_epochs(cfg: dict, strict: bool) -> tuple[list, list, str]:
    """Load the epoch cache, computing it if missing.  Returns
    (epochs, cohorts, cache_key)."""
    key = _preprocess_key(cfg)
    cache = _cache_dir(cfg) / f"preprocess_{key}.npz"
    if not cache.exists():
        _run_preprocess(cfg, strict, cache)
    epochs, cohorts = _load_epochs(cache)
    return epochs, cohorts, key


def _run_preprocess(cfg: dict, strict: bool, cache: Path) -> int:
    manifest = load_manifest(cfg["data"]["manifest"])
    ann = load_annotations(cfg["data"]["annotations"], strict=strict)
    spec = FilterSpec(
        order=int(cfg["preprocess"]["filter_order"]),
        cutoff_hz=float(cfg["preprocess"]["cutoff_hz"]),
    )
    rows = []
    for entry in manifest.entries:
        rec = load_recording(entry.path).with_subject(entry.subject_id)
        epochs = preprocess_recording(
            rec, ann, label=entry.label, filter_spec=spec,
            fs_out=float(cfg["preprocess"]["fs_out"]), strict=strict,
        )
        for e in epochs:
            rows.append(
                {
                    "samples": e.samples, "subject_id": e.subject_id,
                    "channel_id": e.channel_id, "epoch_idx": e.epoch_idx,
                    "label": e.label, "cohort": entry.cohort, "fs_hz": e.fs_hz,
                }
            )
    if not rows:
        raise DataError("preprocessing produced no epochs")
    _save_epochs(cache, rows)
    return len(rows)


# ---------------------------------------------------------------------------
# Feature cache


def _feature_cache_paths(cfg: dict, key: str, strict: bool) -> dict[int, Path]:
    configs = _channel_configs(cfg, strict)
    feat_key = _hash_parts(
        key.encode(), _config_bytes(cfg["feature"]), __version__.encode()
    )
    cache = _cache_dir(cfg)
    return {ch: cache / f"features_{feat_key}_ch{ch}.npz" for ch in configs}


def _save_feature_matrix(path: Path, fm: FeatureMatrix, cohorts: np.ndarray) -> None:
    np.savez_compressed(
        path,
        X=fm.X, y=fm.y, subject_ids=fm.subject_ids, epoch_idxs=fm.epoch_idxs,
        prov_channel=np.array(
            [-1 if c is None else int(c) for c, _ in fm.provenance], dtype=np.int64
        ),
        prov_desc=np.array([d for _, d in fm.provenance]),
        cohorts=cohorts,
    )


def _load_feature_matrix(path: Path) -> tuple[FeatureMatrix, np.ndarray]:
    with np.load(path, allow_pickle=False) as z:
        prov = tuple(
            (None if int(c) < 0 else int(c), str(d))
            for c, d in zip(z["prov_channel"], z["prov_desc"])
        )
        fm = FeatureMatrix(
            X=z["X"], y=z["y"], subject_ids=z["subject_ids"],
            epoch_idxs=z["epoch_idxs"], provenance=prov,
        )
        return fm, z["cohorts"]


def _ensure_features(cfg: dict, strict: bool) -> dict[int, tuple[FeatureMatrix, np.ndarray]]:
    epochs, cohorts, key = _ensure_epochs(cfg, strict)
    paths = _feature_cache_paths(cfg, key, strict)
    missing = [ch for ch, p in paths.items() if not p.exists()]
    if missing:
        configs = {ch: c for ch, c in _channel_configs(cfg, strict).items()}
        cohort_of = {}
        for e, c in zip(epochs, cohorts):
            cohort_of[(e.subject_id, e.epoch_idx)] = c
        mats = per_channel_matrices(
            epochs, cfg["feature"]["family"],
            {ch: configs[ch] for ch in missing}, strict=strict,
        )
        for ch, fm in mats.items():
            row_cohorts = np.array(
                [cohort_of[(s, i)] for s, i in zip(fm.subject_ids, fm.epoch_idxs)]
            )
            _save_feature_matrix(paths[ch], fm, row_cohorts)
    return {ch: _load_feature_matrix(p) for ch, p in paths.items()}


def _split_cohorts(
    loaded: dict[int, tuple[FeatureMatrix, np.ndarray]]
) -> tuple[dict[int, FeatureMatrix], dict[int, FeatureMatrix]]:
    train, heldout = {}, {}
    for ch, (fm, cohorts) in loaded.items():
        train_mask = cohorts == COHORT_TRAIN
        if train_mask.any():
            train[ch] = fm.select_rows(train_mask)
        held_mask = cohorts == COHORT_HELDOUT
        if held_mask.any():
            heldout[ch] = fm.select_rows(held_mask)
    return train, heldout


# ---------------------------------------------------------------------------
# Subcommands


def cmd_synth(cfg: dict, args) -> dict:
    s = cfg["synth"]
    params = SynthParams(
        heart_rate_bpm=float(s["heart_rate_bpm"]),
        murmur_rel_power=float(s["murmur_rel_power"]),
        ambient_noise_std=float(s["ambient_noise_std"]),
        rng_seed=int(cfg["seed"]),
    )
    manifest, recordings, annotations = synth_dataset(
        n_per_class=int(s["n_per_class"]),
        params=params,
        seed=int(cfg["seed"]),
        heldout_per_class=int(s["heldout_per_class"]),
    )
    data_dir = Path(cfg["workdir"]) / "data"
    data_dir.mkdir(parents=True, exist_ok=True)
    for entry, rec in zip(manifest.entries, recordings):
        write_recording(rec, data_dir / entry.path.name, bit_depth=24)
    write_manifest(list(manifest.entries), Path(cfg["data"]["manifest"]))
    write_annotations(annotations, Path(cfg["data"]["annotations"]))
    return {
        "n_subjects": len(manifest),
        "n_annotation_spans": len(annotations.spans),
        "manifest": cfg["data"]["manifest"],
        "annotations": cfg["data"]["annotations"],
    }


def cmd_preprocess(cfg: dict, args) -> dict:
    key = _preprocess_key(cfg)
    cache = _cache_dir(cfg) / f"preprocess_{key}.npz"
    if cache.exists():
        epochs, _ = _load_epochs(cache)
        n = len(epochs)
    else:
        n = _run_preprocess(cfg, args.strict, cache)
    return {"n_epochs": n, "cache_key": key, "cache_file": str(cache)}


def cmd_extract(cfg: dict, args) -> dict:
    loaded = _ensure_features(cfg, args.strict)
    return {
        "channels": sorted(loaded),
        "n_rows": {str(ch): fm.n_samples for ch, (fm, _) in loaded.items()},
        "n_features": {str(ch): fm.n_features for ch, (fm, _) in loaded.items()},
    }


def cmd_evaluate(cfg: dict, args) -> dict:
    loaded = _ensure_features(cfg, args.strict)
    train, _ = _split_cohorts(loaded)
    if not train:
        raise DataError("no training-cohort rows to evaluate")
    cv = _cv_from_config(cfg)
    sel = cfg["selection"]
    channels = sorted(train)
    if cfg["fusion"]["mode"] == MODE_FEATURE_LEVEL:
        fused = feature_level_fuse([train[ch] for ch in channels])
        if cfg["cv"]["classifier"].get("grid_search") and isinstance(
            cv.classifier, KernelSpec
        ):
            tuned = svm_grid_search(fused, cv.classifier, seed=cfg["seed"],
                                    strict=args.strict)
            cv = CvConfig(k=cv.k, iterations=cv.iterations,
                          rng_seed=cv.rng_seed, classifier=tuned)
        report = cross_validate(
            fused, cv,
            ranking_method=sel["method"],
            search=bool(sel["search"]),
            dim=sel["dim"],
            strict=args.strict,
        )
    else:
        report = cross_validate_score_fusion(
            [train[ch] for ch in channels], cv,
            ranking_method=sel["method"], dim=sel["dim"],
            use_platt=bool(cfg["fusion"]["use_platt"]), strict=args.strict,
        )
    doc = report.to_dict()
    doc["channels"] = channels
    return doc


def cmd_search(cfg: dict, args) -> dict:
    loaded = _ensure_features(cfg, args.strict)
    train, _ = _split_cohorts(loaded)
    cv = _cv_from_config(cfg)
    sel = cfg["selection"]
    table = channel_combination_search(
        train, cv,
        mode=cfg["fusion"]["mode"],
        ranking_method=sel["method"],
        dim=sel["dim"],
        n_jobs=max(1, args.jobs),
        strict=args.strict,
    )
    _write_search_csv(cfg, table)
    return table


def _write_search_csv(cfg: dict, table: dict) -> Path:
    import csv as _csv

    path = _report_path(cfg, "search").with_suffix(".csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = _csv.writer(fh)
        writer.writerow(
            [
                "n_channels", "channels", "fd",
                "epoch_sens", "epoch_spec", "epoch_acc", "epoch_f1",
                "subject_sens", "subject_spec", "subject_acc", "subject_f1",
            ]
        )
        for row in table["best_per_cardinality"]:
            em, sm = row["epoch_metrics"], row["subject_metrics"]
            writer.writerow(
                [
                    row["n_channels"],
                    "-".join(str(c) for c in row["channels"]),
                    row["fd"],
                    em["sens"], em["spec"], em["acc"], em["f1"],
                    sm["sens"], sm["spec"], sm["acc"], sm["f1"],
                ]
            )
    return path


def cmd_predict(cfg: dict, args) -> dict:
    loaded = _ensure_features(cfg, args.strict)
    train, heldout = _split_cohorts(loaded)
    if not heldout:
        raise DataError("no held-out cohort rows; nothing to predict")
    channels = sorted(train)
    fused_train = feature_level_fuse([train[ch] for ch in channels])
    fused_heldout = feature_level_fuse([heldout[ch] for ch in channels])
    sel = cfg["selection"]
    preds = train_full_and_predict(
        fused_train, fused_heldout,
        classifier=_cv_from_config(cfg).classifier,
        ranking_method=sel["method"], dim=sel["dim"], strict=args.strict,
    )
    return {
        "channels": channels,
        "predictions": {
            sid: (LABEL_CAD if p == 1 else LABEL_NORMAL) for sid, p in preds.items()
        },
    }


def cmd_report(cfg: dict, args) -> dict:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    epochs, cohorts, _ = _ensure_epochs(cfg, args.strict)
    train_epochs = [e for e, c in zip(epochs, cohorts) if c == COHORT_TRAIN]
    plots_dir = Path(cfg["workdir"]) / "reports" / "plots"
    plots_dir.mkdir(parents=True, exist_ok=True)
    artifacts = []

    # Mean +- std PSD per class, one panel per channel.
    channels = sorted({e.channel_id for e in train_epochs})
    fig, axes = plt.subplots(
        len(channels), 1, figsize=(8, 2.4 * len(channels)), squeeze=False
    )
    for ax, ch in zip(axes[:, 0], channels):
        for label, color in ((LABEL_NORMAL, "tab:blue"), (LABEL_CAD, "tab:red")):
            sel = [e for e in train_epochs if e.channel_id == ch and e.label == label]
            if not sel:
                continue
            psds = np.vstack([welch_psd(e.samples, e.fs_hz).density for e in sel])
            freqs = welch_psd(sel[0].samples, sel[0].fs_hz).freqs_hz
            mean, std = psds.mean(axis=0), psds.std(axis=0)
            ax.plot(freqs, mean, color=color, label=label, lw=1.0)
            ax.fill_between(freqs, mean - std, mean + std, color=color, alpha=0.2)
        ax.set_title(f"channel {ch}")
        ax.set_xlabel("frequency [Hz]")
        ax.set_ylabel("PSD")
        ax.legend(fontsize=7)
    fig.tight_layout()
    psd_path = plots_dir / "psd_by_channel.png"
    fig.savefig(psd_path, dpi=120)
    plt.close(fig)
    artifacts.append(str(psd_path))

    if cfg["feature"]["family"] != FAMILY_PSD:
        loaded = _ensure_features(cfg, args.strict)
        train, _ = _split_cohorts(loaded)
        ch = sorted(train)[0]
        fm = train[ch]
        ccfg = _channel_configs(cfg, args.strict)[ch]
        shape = (ccfg.num_frames, ccfg.n_coeffs)

        fig, axes = plt.subplots(1, 2, figsize=(10, 4))
        for ax, cls, name in zip(axes, (0, 1), (LABEL_NORMAL, LABEL_CAD)):
            mean_mat = fm.X[fm.y == cls].mean(axis=0).reshape(shape)
            im = ax.imshow(mean_mat.T, aspect="auto", origin="lower", cmap="viridis")
            ax.set_title(f"channel {ch}: mean cepstra, {name}")
            ax.set_xlabel("frame")
            ax.set_ylabel("coefficient")
            fig.colorbar(im, ax=ax)
        fig.tight_layout()
        heat_path = plots_dir / "cepstra_heatmap.png"
        fig.savefig(heat_path, dpi=120)
        plt.close(fig)
        artifacts.append(str(heat_path))

        # Frame-averaged coefficient distributions with rank-sum stars.
        frame_avg = fm.X.reshape(len(fm.X), *shape).mean(axis=1)
        fig, ax = plt.subplots(figsize=(1.2 * shape[1] + 2, 4))
        data, positions, stars = [], [], []
        for c in range(shape[1]):
            a = frame_avg[fm.y == 1, c]
            b = frame_avg[fm.y == 0, c]
            data.extend([b, a])
            positions.extend([3 * c, 3 * c + 1])
            stars.append(wilcoxon_rank_sum(a, b) < 0.05 if len(a) >= 3 and len(b) >= 3
                         else False)
        boxes = ax.boxplot(data, positions=positions, widths=0.8, patch_artist=True)
        for i, patch in enumerate(boxes["boxes"]):
            patch.set_facecolor("tab:blue" if i % 2 == 0 else "tab:red")
        top = max(np.max(d) for d in data if len(d))
        for c, sig in enumerate(stars):
            if sig:
                ax.text(3 * c + 0.5, top, "*", ha="center", fontsize=14)
        ax.set_xticks([3 * c + 0.5 for c in range(shape[1])])
        ax.set_xticklabels(
            [str(ccfg.coeff_lo + c) for c in range(shape[1])], fontsize=8
        )
        ax.set_xlabel("coefficient")
        ax.set_title(f"channel {ch}: frame-averaged coefficients "
                     f"(blue Normal, red CAD, * rank-sum p<0.05)")
        fig.tight_layout()
        box_path = plots_dir / "cepstra_boxplot.png"
        fig.savefig(box_path, dpi=120)
        plt.close(fig)
        artifacts.append(str(box_path))

    return {"plots": artifacts}


# ---------------------------------------------------------------------------
# Entry point


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # noqa: D102 - argparse hook
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pcgscreen", description=__doc__)
    parser.add_argument("--config", type=str, default=None, help="JSON config file")
    parser.add_argument("--seed", type=int, default=None, help="override config seed")
    parser.add_argument("--jobs", type=int, default=1, help="worker pool size")
    parser.add_argument(
        "--strict", action=argparse.BooleanOptionalAction, default=True,
        help="enforce strict data validation (3 epochs per subject, grids)",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("synth", "generate a synthetic labeled dataset"),
        ("preprocess", "filter, resample, segment, and normalize epochs"),
        ("extract", "build per-channel feature matrices"),
        ("evaluate", "run repeated cross-validation and write a report"),
        ("search", "evaluate channel combinations"),
        ("predict", "train on the full training cohort and label held-out subjects"),
        ("report", "render summary plots"),
    ):
        sub.add_parser(name, help=help_text)
    return parser


_COMMANDS = {
    "synth": cmd_synth,
    "preprocess": cmd_preprocess,
    "extract": cmd_extract,
    "evaluate": cmd_evaluate,
    "search": cmd_search,
    "predict": cmd_predict,
    "report": cmd_report,
}


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    cfg = load_config(args.config, seed_override=args.seed)
    results = _COMMANDS[args.command](cfg, args)
    report_path = write_report(cfg, args.command, results)
    print(f"{args.command}: report written to {report_path}")
    return 0


def main(argv: list[str] | None = None) -> int:
    try:
        return run(argv)
    except PcgScreenError as exc:
        payload = {"error": {"type": type(exc).__name__, "message": str(exc)}}
        print(json.dumps(payload), file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # internal failure
        payload = {"error": {"type": type(exc).__name__, "message": str(exc)}}
        print(json.dumps(payload), file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
