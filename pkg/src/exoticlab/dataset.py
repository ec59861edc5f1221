"""Training sets for the price surrogates, plus sampling validation.

A training row pairs the model-implied surface (active vols in
maturity-major order), the option parameters, and the rate against the
Monte Carlo price of the exotic expressed as percent of spot. Model
parameters generate the rows but are never features.

Sampling validation follows a cluster-separation argument: merge sampled
and historical surfaces into a balanced panel, split it with 2-means, and
compare the adjusted mutual information between cluster and origin labels
against the AMI of random partitions. Indistinguishable origins (AMI close
to the chance level) mean the sampler covers the historical surface
distribution well enough.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import pricing_mc as pm
from .bs_surface import MASK_FULL, MASK_SNP19, SurfaceGrid, SurfaceInvalidError, model_surface
from .market_models import (
    BARRIER_KINDS,
    EXOTIC_KINDS,
    MODEL_KINDS,
    SamplerConfig,
    sample_exotic,
    sample_model,
)
from .rng import substream

_FAILURE_FRACTION = 0.10


@dataclass(frozen=True)
class FeatureLayout:
    """Ordered feature names: vol points, then T, k, optional b, then r."""

    names: tuple[str, ...]
    n_vol_points: int
    has_barrier: bool

    @classmethod
    def build(cls, exotic_kind: str, mask: np.ndarray) -> "FeatureLayout":
        if exotic_kind not in EXOTIC_KINDS:
            raise ValueError(f"unknown exotic kind {exotic_kind!r}")
        n_points = int(np.asarray(mask, dtype=bool).sum())
        names = [f"v_{i + 1}" for i in range(n_points)] + ["T", "k"]
        has_barrier = exotic_kind in BARRIER_KINDS
        if has_barrier:
            names.append("b")
        names.append("r")
        return cls(names=tuple(names), n_vol_points=n_points, has_barrier=has_barrier)

    @property
    def n_features(self) -> int:
        return len(self.names)

    @property
    def vol_columns(self) -> np.ndarray:
        return np.arange(self.n_vol_points)


@dataclass
class TrainingSet:
    layout: FeatureLayout
    features: np.ndarray  # (n, d)
    targets: np.ndarray   # (n,) price as percent of spot
    target_se: np.ndarray  # (n,) Monte Carlo standard error, same units
    provenance: dict

    def __post_init__(self):
        if self.features.shape != (len(self.targets), self.layout.n_features):
            raise ValueError("feature matrix does not match layout")


def features_from_surface(
    layout: FeatureLayout,
    surface: SurfaceGrid,
    spec: pm.ExoticSpec,
    spot: float,
    rate: float,
) -> np.ndarray:
    """One feature vector: active vols, T, k = K/S, optional b = B/S, r."""
    parts = [surface.active_vols(), [spec.maturity, spec.strike / spot]]
    if layout.has_barrier:
        if spec.barrier is None:
            raise ValueError("layout expects a barrier")
        parts.append([spec.barrier / spot])
    parts.append([rate])
    vec = np.concatenate([np.asarray(p, dtype=float) for p in parts])
    if len(vec) != layout.n_features:
        raise ValueError("surface mask does not match layout")
    return vec


def generate_training_set(
    model_kind: str,
    exotic_kind: str,
    n_rows: int,
    sampler_cfg: SamplerConfig,
    mc_cfg: pm.McConfig,
    mask: np.ndarray = MASK_FULL,
    exotic_mode: str = "controlled",
    seed: int | None = None,
) -> TrainingSet:
    """Sample scenarios, build surfaces, and label exotic prices by MC.

    Draws whose surface construction fails are resampled so the set always
    holds exactly ``n_rows`` rows; the resample count lands in provenance.
    Persistent failures (more than 10% of attempts) abort with a diagnostic.
    """
    if model_kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {model_kind!r}")
    if n_rows < 1:
        raise ValueError("n_rows must be >= 1")
    master = sampler_cfg.seed if seed is None else seed
    rng = substream(master, "datagen", 0)
    layout = FeatureLayout.build(exotic_kind, mask)
    features = np.empty((n_rows, layout.n_features))
    targets = np.empty(n_rows)
    target_se = np.empty(n_rows)

    done = 0
    attempts = 0
    failures = 0
    # judge the failure rate on a fair sample; the hard cap stops runaways
    min_attempts_for_abort = max(200, 2 * min(n_rows, 500))
    while done < n_rows:
        attempts += 1
        persistent = attempts >= min_attempts_for_abort and failures > _FAILURE_FRACTION * attempts
        runaway = attempts > 3 * n_rows + 100
        if persistent or runaway:
            raise RuntimeError(
                f"surface construction failed for {failures}/{attempts} draws; "
                "widen the sampler's volatility ranges or add paths"
            )
        draw = sample_model(sampler_cfg, model_kind, rng)
        spec = sample_exotic(sampler_cfg, exotic_kind, rng, mode=exotic_mode)
        try:
            surface = model_surface(draw.params, draw.market, mask, mc_cfg=mc_cfg)
        except SurfaceInvalidError:
            failures += 1
            continue
        paths = pm.simulate_paths(draw.params, draw.market, spec.maturity, mc_cfg, rng=rng)
        est = pm.mc_price(draw.params, draw.market, spec, mc_cfg, paths=paths)
        features[done] = features_from_surface(layout, surface, spec, draw.market.spot, draw.market.rate)
        targets[done] = est.price / draw.market.spot * 100.0
        target_se[done] = est.std_error / draw.market.spot * 100.0
        done += 1

    provenance = {
        "model_kind": model_kind,
        "exotic_kind": exotic_kind,
        "exotic_mode": exotic_mode,
        "n_rows": n_rows,
        "mask_points": layout.n_vol_points,
        "sampler_config": json.loads(sampler_cfg.to_json()),
        "mc_config": asdict(mc_cfg),
        "seed": master,
        "resampled_failures": failures,
        "mean_target_se": float(target_se.mean()),
    }
    return TrainingSet(layout=layout, features=features, targets=targets,
                       target_se=target_se, provenance=provenance)


def generate_barrier_pair_training(
    n_rows: int,
    sampler_cfg: SamplerConfig,
    mc_cfg: pm.McConfig,
    mask: np.ndarray = MASK_SNP19,
    exotic_mode: str = "parity",
    model_kind: str = "heston",
    seed: int | None = None,
) -> tuple[TrainingSet, TrainingSet]:
    """Knock-out and knock-in sets from shared draws and common paths.

    Each sampled scenario prices both payoffs on one path set, so the two
    labels are exactly parity-consistent (their sum is the vanilla Monte
    Carlo price) and the generation cost is paid once.
    """
    if n_rows < 1:
        raise ValueError("n_rows must be >= 1")
    master = sampler_cfg.seed if seed is None else seed
    rng = substream(master, "datagen-pair", 0)
    layout = FeatureLayout.build("knock_out_call", mask)
    features = np.empty((n_rows, layout.n_features))
    targets = {k: np.empty(n_rows) for k in ("ko", "ki")}
    target_se = {k: np.empty(n_rows) for k in ("ko", "ki")}

    done = 0
    attempts = 0
    failures = 0
    min_attempts_for_abort = max(200, 2 * min(n_rows, 500))
    while done < n_rows:
        attempts += 1
        persistent = attempts >= min_attempts_for_abort and failures > _FAILURE_FRACTION * attempts
        if persistent or attempts > 3 * n_rows + 100:
            raise RuntimeError(
                f"surface construction failed for {failures}/{attempts} draws; "
                "widen the sampler's volatility ranges or add paths"
            )
        draw = sample_model(sampler_cfg, model_kind, rng)
        ko = sample_exotic(sampler_cfg, "knock_out_call", rng, mode=exotic_mode)
        ki = pm.ExoticSpec("knock_in_call", strike=ko.strike, maturity=ko.maturity,
                           barrier=ko.barrier)
        try:
            surface = model_surface(draw.params, draw.market, mask, mc_cfg=mc_cfg)
        except SurfaceInvalidError:
            failures += 1
            continue
        paths = pm.simulate_paths(draw.params, draw.market, ko.maturity, mc_cfg, rng=rng)
        est_ko = pm.mc_price(draw.params, draw.market, ko, mc_cfg, paths=paths)
        est_ki = pm.mc_price(draw.params, draw.market, ki, mc_cfg, paths=paths)
        features[done] = features_from_surface(layout, surface, ko, draw.market.spot,
                                               draw.market.rate)
        spot = draw.market.spot
        targets["ko"][done] = est_ko.price / spot * 100.0
        targets["ki"][done] = est_ki.price / spot * 100.0
        target_se["ko"][done] = est_ko.std_error / spot * 100.0
        target_se["ki"][done] = est_ki.std_error / spot * 100.0
        done += 1

    base_prov = {
        "model_kind": model_kind,
        "exotic_mode": exotic_mode,
        "n_rows": n_rows,
        "mask_points": layout.n_vol_points,
        "sampler_config": json.loads(sampler_cfg.to_json()),
        "mc_config": asdict(mc_cfg),
        "seed": master,
        "resampled_failures": failures,
        "common_paths_pair": True,
    }
    out = []
    for kind, tag in (("knock_out_call", "ko"), ("knock_in_call", "ki")):
        prov = dict(base_prov, exotic_kind=kind,
                    mean_target_se=float(target_se[tag].mean()))
        out.append(TrainingSet(layout=layout, features=features.copy(),
                               targets=targets[tag], target_se=target_se[tag],
                               provenance=prov))
    return out[0], out[1]


# ---------------------------------------------------------------------------
# k-means and adjusted mutual information
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KmeansResult:
    labels: np.ndarray
    wcss: float
    degenerate: bool


def kmeans2(panel: np.ndarray, n_restarts: int = 10, seed: int = 0) -> KmeansResult:
    """Two-cluster Lloyd iteration on standardized columns.

    Runs ``n_restarts`` seeded initializations and keeps the labeling with
    the lowest within-cluster sum of squares. A panel of identical vectors
    is degenerate: one cluster, flagged.
    """
    x = np.asarray(panel, dtype=float)
    if x.ndim != 2 or len(x) < 4:
        raise ValueError("panel must be (n, d) with n >= 4")
    std = x.std(axis=0)
    z = (x - x.mean(axis=0)) / np.where(std < 1e-12, 1.0, std)
    if np.allclose(z, z[0], atol=1e-12):
        return KmeansResult(labels=np.zeros(len(x), dtype=int), wcss=0.0, degenerate=True)

    rng = substream(seed, "kmeans")
    best_labels: np.ndarray | None = None
    best_wcss = math.inf
    for _restart in range(n_restarts):
        centers = z[rng.choice(len(z), size=2, replace=False)].copy()
        labels = np.zeros(len(z), dtype=int)
        for sweep in range(100):
            d0 = ((z - centers[0]) ** 2).sum(axis=1)
            d1 = ((z - centers[1]) ** 2).sum(axis=1)
            new_labels = (d1 < d0).astype(int)
            if sweep > 0 and np.array_equal(new_labels, labels):
                break
            labels = new_labels
            for c in (0, 1):
                members = z[labels == c]
                if len(members):
                    centers[c] = members.mean(axis=0)
        wcss = 0.0
        for c in (0, 1):
            members = z[labels == c]
            if len(members):
                wcss += float(((members - members.mean(axis=0)) ** 2).sum())
        if wcss < best_wcss - 1e-12:
            best_wcss = wcss
            best_labels = labels
    assert best_labels is not None
    return KmeansResult(labels=best_labels, wcss=best_wcss, degenerate=False)


def _entropy(counts: np.ndarray, n: int) -> float:
    p = counts[counts > 0] / n
    return float(-(p * np.log(p)).sum())


def _expected_mi(a: np.ndarray, b: np.ndarray, n: int) -> float:
    """E[MI] under the hypergeometric (fixed-marginals permutation) model."""
    lg = math.lgamma
    total = 0.0
    for ai in a:
        for bj in b:
            lo = max(1, ai + bj - n)
            hi = min(ai, bj)
            for nij in range(lo, hi + 1):
                log_p = (
                    lg(ai + 1) + lg(bj + 1) + lg(n - ai + 1) + lg(n - bj + 1)
                    - lg(n + 1) - lg(nij + 1) - lg(ai - nij + 1)
                    - lg(bj - nij + 1) - lg(n - ai - bj + nij + 1)
                )
                total += (nij / n) * math.log(n * nij / (ai * bj)) * math.exp(log_p)
    return total


def adjusted_mutual_information(
    labels_u: np.ndarray,
    labels_v: np.ndarray,
    average_method: str = "arithmetic",
) -> float:
    """Chance-corrected agreement between two labelings.

    AMI = (MI - E[MI]) / (mean(H(U), H(V)) - E[MI]) with the expectation
    taken under the fixed-marginals permutation model. A labeling with zero
    entropy yields 0 by convention.
    """
    u = np.asarray(labels_u).ravel()
    v = np.asarray(labels_v).ravel()
    if len(u) != len(v) or len(u) < 2:
        raise ValueError("labelings must have equal length >= 2")
    n = len(u)
    _, ui = np.unique(u, return_inverse=True)
    _, vi = np.unique(v, return_inverse=True)
    contingency = np.zeros((ui.max() + 1, vi.max() + 1), dtype=int)
    np.add.at(contingency, (ui, vi), 1)
    a = contingency.sum(axis=1)
    b = contingency.sum(axis=0)
    h_u = _entropy(a, n)
    h_v = _entropy(b, n)
    if h_u == 0.0 or h_v == 0.0:
        return 0.0
    h_uv = _entropy(contingency.ravel(), n)
    mi = h_u + h_v - h_uv
    emi = _expected_mi(a, b, n)
    if average_method == "arithmetic":
        norm = 0.5 * (h_u + h_v)
    elif average_method == "max":
        norm = max(h_u, h_v)
    else:
        raise ValueError(f"unknown average_method {average_method!r}")
    denom = norm - emi
    if denom == 0.0:
        return 0.0
    return (mi - emi) / denom


@dataclass(frozen=True)
class AmiReport:
    ami_clustering: float
    ami_random_baseline: float
    verdict: str  # accept | reject
    n_per_origin: int
    degenerate: bool
    note: str = ""


def validate_sampling(
    historical: np.ndarray,
    sampled: np.ndarray,
    seed: int = 0,
    margin: float = 0.05,
    n_baseline: int = 100,
) -> AmiReport:
    """Accept the sampler iff 2-means cannot tell sampled from historical.

    The larger panel is down-sampled so origins are balanced. The verdict is
    ``accept`` when the cluster/origin AMI stays within ``margin`` of the
    mean AMI of random origin permutations (which is near zero).
    """
    hist = np.asarray(historical, dtype=float)
    samp = np.asarray(sampled, dtype=float)
    if hist.ndim != 2 or samp.ndim != 2 or len(hist) < 2 or len(samp) < 2:
        raise ValueError("panels must be (n, d) with n >= 2")
    rng = substream(seed, "ami-validate")
    n_each = min(len(hist), len(samp))
    hist = hist[rng.choice(len(hist), size=n_each, replace=False)]
    samp = samp[rng.choice(len(samp), size=n_each, replace=False)]
    merged = np.vstack([hist, samp])
    origin = np.concatenate([np.zeros(n_each, dtype=int), np.ones(n_each, dtype=int)])

    clusters = kmeans2(merged, seed=seed)
    if clusters.degenerate:
        return AmiReport(
            ami_clustering=0.0, ami_random_baseline=0.0, verdict="reject",
            n_per_origin=n_each, degenerate=True,
            note="degenerate clustering: all surfaces identical",
        )
    ami = adjusted_mutual_information(clusters.labels, origin)
    baseline = float(np.mean([
        adjusted_mutual_information(clusters.labels, rng.permutation(origin))
        for _ in range(n_baseline)
    ]))
    verdict = "accept" if ami < baseline + margin else "reject"
    return AmiReport(
        ami_clustering=ami, ami_random_baseline=baseline, verdict=verdict,
        n_per_origin=n_each, degenerate=False,
    )


# ---------------------------------------------------------------------------
# CSV interface
# ---------------------------------------------------------------------------


def training_set_to_csv(ts: TrainingSet) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(ts.layout.names) + ["price_pct"])
    for row, target in zip(ts.features, ts.targets):
        writer.writerow([f"{v:.17g}" for v in row] + [f"{target:.17g}"])
    return buf.getvalue()


def training_set_from_csv(text: str, provenance: dict | None = None) -> TrainingSet:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if header[-1] != "price_pct":
        raise ValueError("training CSV must end with a price_pct column")
    names = tuple(header[:-1])
    has_barrier = "b" in names
    n_vol = sum(1 for name in names if name.startswith("v_"))
    layout = FeatureLayout(names=names, n_vol_points=n_vol, has_barrier=has_barrier)
    rows = [[float(v) for v in row] for row in reader if row]
    data = np.asarray(rows)
    if data.size == 0:
        raise ValueError("training CSV contains no rows")
    return TrainingSet(
        layout=layout,
        features=data[:, :-1],
        targets=data[:, -1],
        target_se=np.zeros(len(data)),
        provenance=provenance or {},
    )
