"""Desk-scale runners for the four stochastic-FID experiment protocols.

``equal-aug``    noise of the same strength on both halves; reference with dropout on
``ood-table``    one reference half vs a list of increasingly shifted test sets
``sensitivity``  fixed clean reference vs noise-augmented test half per strength
``fixed-test``   fixed clean MCD test half vs increasingly augmented reference

Each run yields a :class:`ResultTable` (one row per condition) and a manifest
dict with the resolved configuration and every derived seed. Seeds derive
from the master seed and a role/condition label, so rows do not depend on the
order conditions are evaluated in. Dropout masks are common across conditions
(one stream for test passes, one for the reference pass), which keeps
strength sweeps free of mask-to-mask jitter.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from fidtrust import __version__
from fidtrust.augment import AugmentSpec, augment_set
from fidtrust.embedder import (
    ToyEmbedderConfig,
    build_toy_embedder,
    embed_deterministic,
    embed_single_pass,
    embed_stochastic,
    save_embeddings,
)
from fidtrust.image_metrics import mae, max_scales, ms_ssim
from fidtrust.linalg import mean_and_cov
from fidtrust.metrics import (
    fid_samples,
    knn_ood_score,
    mean_embedding_norm,
    mean_term_diagnostics,
    pvar,
    vfid_decomposition,
)
from fidtrust.pnm import read_image_dir
from fidtrust.rng import derive_seed, stream
from fidtrust.synthetic import SyntheticSpec, apply_shift, make_images

log = logging.getLogger(__name__)

EXPERIMENTS = ("equal-aug", "ood-table", "sensitivity", "fixed-test")

DEFAULT_STRENGTHS = {
    "equal-aug": (0.0, 5.0, 20.0, 50.0, 100.0),
    "sensitivity": (0.0, 1.0, 5.0, 10.0, 20.0, 40.0, 100.0),
    "fixed-test": (0.0, 1.0, 5.0, 10.0, 20.0, 40.0, 100.0),
    "ood-table": (),
}
# reference embedded with dropout on for equal-aug (as in the protocol) and
# as a single dropout pass for fixed-test; clean deterministic otherwise
DEFAULT_REFERENCE_DROPOUT = {
    "equal-aug": "on",
    "ood-table": "off",
    "sensitivity": "off",
    "fixed-test": "on",
}
DEFAULT_TEST_SETS = (
    "self",
    "holdout",
    "noise:1",
    "overlay:mixed",
    "overlay:textures",
    "shift:0.1",
    "shift:0.25",
    "shift:0.5",
)

COLUMNS = (
    "label", "strength", "fid", "sigma_fid", "v_fid", "pvar", "knn",
    "embedding_norm", "mean_term", "mean_term_std", "mae", "ms_ssim",
    "var_a", "var_b", "var_c", "cov_ab", "cov_ac", "cov_bc",
    "vfid_residual", "n_clamped", "top5",
)
OPTIONAL_COLUMNS = frozenset({"mae", "ms_ssim", "top5"})


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "sensitivity"
    master_seed: int = 0
    n_per_half: int = 256
    image_size: tuple = (32, 32, 3)
    synthetic_kind: str = "mixed"
    data_dir: str | None = None
    strengths: tuple | None = None
    n_passes: int = 20
    k: int = 5
    embedder: ToyEmbedderConfig = field(default_factory=ToyEmbedderConfig)
    reference_dropout: str | None = None
    test_sets: tuple = DEFAULT_TEST_SETS
    n_patches: int = 4
    patch_scale: float = 0.25
    validators: bool = True
    top5_csv: str | None = None
    threads: int = 1

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        object.__setattr__(self, "image_size", tuple(int(v) for v in self.image_size))
        strengths = self.strengths
        if strengths is None:
            strengths = DEFAULT_STRENGTHS[self.experiment]
        strengths = tuple(float(s) for s in strengths)
        if any(b <= a for a, b in zip(strengths, strengths[1:])):
            raise ValueError(f"strengths must be strictly increasing, got {strengths}")
        if self.experiment != "ood-table" and not strengths:
            raise ValueError("strengths list is empty")
        object.__setattr__(self, "strengths", strengths)
        ref = self.reference_dropout or DEFAULT_REFERENCE_DROPOUT[self.experiment]
        if ref not in ("on", "off"):
            raise ValueError(f"reference_dropout must be 'on' or 'off', got {ref!r}")
        object.__setattr__(self, "reference_dropout", ref)
        object.__setattr__(self, "test_sets", tuple(self.test_sets))
        if self.n_passes < 2:
            raise ValueError("n_passes (J) must be >= 2")
        if self.n_per_half < 2:
            raise ValueError("n_per_half must be >= 2")
        if self.embedder.input_size != self.image_size:
            object.__setattr__(self, "embedder", replace(self.embedder, input_size=self.image_size))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["image_size"] = list(self.image_size)
        d["strengths"] = list(self.strengths)
        d["test_sets"] = list(self.test_sets)
        d["embedder"]["input_size"] = list(self.embedder.input_size)
        d["embedder"]["hidden_dims"] = list(self.embedder.hidden_dims)
        return d


class ResultTable:
    """Rows of per-condition results with a fixed column schema."""

    def __init__(self, experiment: str, rows=None):
        self.experiment = experiment
        self.rows: list[dict] = []
        for row in rows or []:
            self.add(row)

    def add(self, row: dict) -> None:
        missing = [c for c in COLUMNS if c not in OPTIONAL_COLUMNS and row.get(c) is None]
        if missing:
            raise ValueError(f"row {row.get('label')!r} misses required cells {missing}")
        for c in COLUMNS:
            v = row.get(c)
            if c != "label" and v is not None and not math.isfinite(v):
                raise ValueError(f"row {row['label']!r}: {c} is not finite ({v})")
        if any(r["label"] == row["label"] for r in self.rows):
            raise ValueError(f"duplicate condition label {row['label']!r}")
        self.rows.append({c: row.get(c) for c in COLUMNS})

    def __len__(self):
        return len(self.rows)

    def column(self, name: str) -> list:
        if name not in COLUMNS:
            raise ValueError(f"unknown column {name!r}; choose from {', '.join(COLUMNS)}")
        return [r[name] for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(COLUMNS)
        for r in self.rows:
            writer.writerow([format_value(r[c]) for c in COLUMNS])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, experiment: str = "") -> "ResultTable":
        reader = csv.DictReader(io.StringIO(text))
        table = cls(experiment)
        for rec in reader:
            row = {}
            for c in COLUMNS:
                v = rec.get(c, "")
                if c == "label":
                    row[c] = v
                elif v == "":
                    row[c] = None
                elif c == "n_clamped":
                    row[c] = int(v)
                else:
                    row[c] = float(v)
            table.add(row)
        return table


def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return format(float(v), ".17g")


def _load_top5(path) -> dict:
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            out[rec["label"]] = float(rec["top5"])
    return out


class _Run:
    """Shared state of one experiment run."""

    def __init__(self, cfg: ExperimentConfig, latents_dir=None):
        self.cfg = cfg
        self.embedder = build_toy_embedder(cfg.embedder)
        self.latents_dir = Path(latents_dir) if latents_dir else None
        seed = cfg.master_seed
        self.seeds = {
            "data": derive_seed(seed, "data"),
            "reference-mcd": derive_seed(seed, "reference-mcd"),
            "test-mcd": derive_seed(seed, "test-mcd"),
            "patches": derive_seed(seed, "patches"),
        }
        self.conditions = []
        self.top5 = _load_top5(cfg.top5_csv) if cfg.top5_csv else {}
        self.reference_half, self.test_half = self._load_halves()
        h, w = self.test_half[0].shape[:2]
        self.ssim_scales = max_scales(h, w)

    def _load_halves(self):
        cfg = self.cfg
        n = cfg.n_per_half
        if cfg.data_dir:
            images, _ = read_image_dir(cfg.data_dir)
            if len(images) < 4:
                raise ValueError(f"{cfg.data_dir}: need at least 4 images to split into halves")
            order = stream(self.seeds["data"], 0).permutation(len(images))
            half = len(images) // 2
            return [images[i] for i in order[:half]], [images[i] for i in order[half:2 * half]]
        images = make_images(SyntheticSpec(cfg.synthetic_kind, 2 * n), self.seeds["data"], cfg.image_size)
        return images[:n], images[n:]

    def noise(self, images, strength, label, role):
        seed = derive_seed(self.cfg.master_seed, f"{self.cfg.experiment}/{label}/{role}")
        self.conditions[-1]["seeds"][role] = seed
        return augment_set(images, AugmentSpec("noise", strength, seed=seed), threads=self.cfg.threads)

    def reference_latents(self, images):
        if self.cfg.reference_dropout == "on":
            return embed_single_pass(self.embedder, images, self.seeds["reference-mcd"])
        return embed_deterministic(self.embedder, images)

    def test_latents(self, images):
        return embed_stochastic(self.embedder, images, self.cfg.n_passes, self.seeds["test-mcd"])

    def begin(self, label):
        self.conditions.append({"label": label, "seeds": {}})

    def row(self, label, strength, test, test_det, ref_latents, ref_det, originals=None, augmented=None):
        """Evaluate every metric of one condition."""
        cfg = self.cfg
        ref = mean_and_cov(ref_latents)
        dist = fid_samples(test, ref, threads=cfg.threads)
        dec = vfid_decomposition(dist)
        dist_mean, dist_std = mean_term_diagnostics(test, ref.mean)
        row = {
            "label": label,
            "strength": strength,
            "fid": dist.mean_fid,
            "sigma_fid": dist.sigma_fid,
            "v_fid": dist.v_fid,
            "pvar": pvar(test),
            "knn": knn_ood_score(test_det, ref_det, cfg.k),
            "embedding_norm": mean_embedding_norm(test),
            "mean_term": dist_mean,
            "mean_term_std": dist_std,
            "vfid_residual": dec.residual,
            "n_clamped": dist.n_clamped,
            "top5": self.top5.get(label),
            **dec.as_dict(),
        }
        if cfg.validators and originals is not None and self.ssim_scales > 0:
            row["mae"] = float(np.mean([mae(a, b) for a, b in zip(originals, augmented)]))
            row["ms_ssim"] = float(np.mean(
                [ms_ssim(a, b, scales=self.ssim_scales) for a, b in zip(originals, augmented)]
            ))
        self.conditions[-1].update({
            "eps_reference": dist.eps_reference,
            "eps_test_max": float(dist.eps_test.max()),
            "n_clamped": dist.n_clamped,
        })
        if self.latents_dir is not None:
            self.latents_dir.mkdir(parents=True, exist_ok=True)
            stem = _safe(label)
            save_embeddings(self.latents_dir / f"{stem}_test.npy", test)
            save_embeddings(self.latents_dir / f"{stem}_reference.npy", ref_latents)
        return row

    def manifest(self) -> dict:
        return {
            "package": "fidtrust",
            "version": __version__,
            "experiment": self.cfg.experiment,
            "config": self.cfg.to_dict(),
            "seeds": dict(self.seeds),
            "ms_ssim_scales": self.ssim_scales,
            "conditions": self.conditions,
        }


def _safe(label: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in label)


def _strength_label(s: float) -> str:
    return f"strength={format_value(s)}"


def run_equal_augmentation(cfg: ExperimentConfig, latents_dir=None):
    """Same-strength noise on both halves; FID of test passes vs reference."""
    run = _Run(cfg, latents_dir)
    table = ResultTable(cfg.experiment)
    for s in cfg.strengths:
        label = _strength_label(s)
        run.begin(label)
        ref_imgs = run.noise(run.reference_half, s, label, "reference")
        test_imgs = run.noise(run.test_half, s, label, "test")
        ref_det = embed_deterministic(run.embedder, ref_imgs)
        table.add(run.row(
            label, s,
            run.test_latents(test_imgs),
            embed_deterministic(run.embedder, test_imgs),
            run.reference_latents(ref_imgs),
            ref_det,
            run.test_half, test_imgs,
        ))
    return table, run.manifest()


def _ood_test_set(run: _Run, name: str):
    """Build one OOD test set; returns (images, originals or None)."""
    cfg = run.cfg
    kind, _, arg = name.partition(":")
    base = run.test_half
    if kind == "self":
        return run.reference_half, run.reference_half
    if kind == "holdout":
        return base, base
    if kind == "noise":
        seed = derive_seed(cfg.master_seed, f"ood-table/{name}")
        run.conditions[-1]["seeds"]["test"] = seed
        return augment_set(base, AugmentSpec("noise", float(arg), seed=seed), threads=cfg.threads), base
    if kind == "overlay":
        if arg in ("reference", "holdout"):
            patches = run.reference_half
        else:
            spec = SyntheticSpec(arg, max(8, min(cfg.n_per_half, 64)))
            patches = make_images(spec, derive_seed(run.seeds["patches"], arg), cfg.image_size)
        seed = derive_seed(cfg.master_seed, f"ood-table/{name}")
        run.conditions[-1]["seeds"]["test"] = seed
        aug = AugmentSpec("overlay", n_patches=cfg.n_patches, patch_scale=cfg.patch_scale, seed=seed)
        return augment_set(base, aug, patch_source=patches, threads=cfg.threads), base
    if kind == "shift":
        return apply_shift(base, float(arg)), base
    if kind == "contrast":
        c = float(arg)
        return [img.with_pixels(img.pixels.mean() + c * (img.pixels - img.pixels.mean())) for img in base], base
    if kind == "dir":
        images, _ = read_image_dir(arg)
        return images, None
    raise ValueError(f"unknown OOD test set {name!r}")


def run_ood_table(cfg: ExperimentConfig, latents_dir=None):
    """Clean reference half vs each configured test set."""
    if not cfg.test_sets:
        raise ValueError("ood-table needs at least one test set")
    run = _Run(cfg, latents_dir)
    ref_latents = run.reference_latents(run.reference_half)
    ref_det = embed_deterministic(run.embedder, run.reference_half)
    table = ResultTable(cfg.experiment)
    for name in cfg.test_sets:
        run.begin(name)
        images, originals = _ood_test_set(run, name)
        kind, _, arg = name.partition(":")
        strength = float(arg) if kind in ("noise", "shift") else 0.0
        table.add(run.row(
            name, strength,
            run.test_latents(images),
            embed_deterministic(run.embedder, images),
            ref_latents, ref_det,
            originals, images if originals is not None else None,
        ))
    return table, run.manifest()


def run_sensitivity_sweep(cfg: ExperimentConfig, latents_dir=None):
    """Clean reference half vs the other half noise-augmented per strength."""
    run = _Run(cfg, latents_dir)
    ref_latents = run.reference_latents(run.reference_half)
    ref_det = embed_deterministic(run.embedder, run.reference_half)
    table = ResultTable(cfg.experiment)
    for s in cfg.strengths:
        label = _strength_label(s)
        run.begin(label)
        test_imgs = run.noise(run.test_half, s, label, "test")
        table.add(run.row(
            label, s,
            run.test_latents(test_imgs),
            embed_deterministic(run.embedder, test_imgs),
            ref_latents, ref_det,
            run.test_half, test_imgs,
        ))
    return table, run.manifest()


def run_fixed_test_sweep(cfg: ExperimentConfig, latents_dir=None):
    """Clean MCD test half (embedded once) vs a reference augmented per strength."""
    run = _Run(cfg, latents_dir)
    test = run.test_latents(run.test_half)
    test_det = embed_deterministic(run.embedder, run.test_half)
    table = ResultTable(cfg.experiment)
    for s in cfg.strengths:
        label = _strength_label(s)
        run.begin(label)
        ref_imgs = run.noise(run.reference_half, s, label, "reference")
        table.add(run.row(
            label, s, test, test_det,
            run.reference_latents(ref_imgs),
            embed_deterministic(run.embedder, ref_imgs),
            run.reference_half, ref_imgs,
        ))
    return table, run.manifest()


RUNNERS = {
    "equal-aug": run_equal_augmentation,
    "ood-table": run_ood_table,
    "sensitivity": run_sensitivity_sweep,
    "fixed-test": run_fixed_test_sweep,
}


def run_experiment(cfg: ExperimentConfig, latents_dir=None):
    return RUNNERS[cfg.experiment](cfg, latents_dir)


def table_from_embeddings(reference, tests: dict, k: int = 5, experiment: str = "ood-table",
                          top5_csv=None) -> ResultTable:
    """Result rows from precomputed embeddings instead of the toy embedder.

    ``reference`` is an (I, K) array. ``tests`` maps a label to either an
    (I, J, K) array or a pair ``(stochastic, deterministic)``; without the
    deterministic latents the kNN score uses the per-image mean over passes.
    """
    top5 = _load_top5(top5_csv) if top5_csv else {}
    ref = mean_and_cov(reference)
    table = ResultTable(experiment)
    for label, value in tests.items():
        stoch, det = value if isinstance(value, tuple) else (value, None)
        stoch = np.asarray(stoch, dtype=np.float64)
        if det is None:
            det = stoch.mean(axis=1)
        dist = fid_samples(stoch, ref)
        dec = vfid_decomposition(dist)
        m, sd = mean_term_diagnostics(stoch, ref.mean)
        table.add({
            "label": label, "strength": 0.0, "fid": dist.mean_fid,
            "sigma_fid": dist.sigma_fid, "v_fid": dist.v_fid, "pvar": pvar(stoch),
            "knn": knn_ood_score(det, reference, k), "embedding_norm": mean_embedding_norm(stoch),
            "mean_term": m, "mean_term_std": sd, "vfid_residual": dec.residual,
            "n_clamped": dist.n_clamped, "top5": top5.get(label), **dec.as_dict(),
        })
    return table


def write_text_atomic(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + f".tmp-{os.getpid()}")
    try:
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


def manifest_json(manifest: dict) -> str:
    return json.dumps(manifest, indent=2, sort_keys=True) + "\n"
