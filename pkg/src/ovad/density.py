"""Density estimators producing raw anomaly scores.

Velocity features are low-dimensional and get a full-covariance Gaussian
mixture fitted by EM; the anomaly score is the negative log density. Pose
and deep features are scored by the mean distance to their k nearest
training exemplars (with an optional same-clip exclusion, since an object
barely changes between neighboring frames of its own clip). k-means
centroids can replace the exemplar set as a faster approximation.

All fits are deterministic functions of (data, seed).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

from . import tensorfile
from .errors import ValidationError

_LOG_2PI = np.log(2.0 * np.pi)
_COV_REGULARIZATION = 1e-6
_EM_MAX_ITER = 200
_EM_REL_TOL = 1e-6
_LLOYD_MAX_ITER = 300


@dataclass(frozen=True)
class GmmModel:
    weights: np.ndarray       # (n,), sums to 1
    means: np.ndarray         # (n, dim)
    covariances: np.ndarray   # (n, dim, dim), SPD after regularization
    seed: int
    log_likelihood_trace: np.ndarray  # total train LL per EM iteration

    @property
    def dim(self) -> int:
        return self.means.shape[1]


@dataclass(frozen=True)
class ExemplarIndex:
    features: np.ndarray      # (N, dim)
    clip_ids: tuple[str, ...]
    k: int

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class KMeansIndex:
    centroids: np.ndarray     # (k, dim)
    seed: int
    inertia_trace: np.ndarray  # within-cluster sum of squares per Lloyd iteration

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]


def _as_feature_matrix(features: np.ndarray, what: str) -> np.ndarray:
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise ValueError(f"{what} must be a non-empty 2-D matrix, got shape {X.shape}")
    if not np.isfinite(X).all():
        raise ValueError(f"{what} contains non-finite values")
    return X


def _kmeanspp_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Seed k centers by squared-distance-weighted sampling."""
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]), dtype=np.float64)
    centers[0] = X[int(rng.integers(n))]
    closest = ((X - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = closest.sum()
        if total > 0.0:
            idx = int(rng.choice(n, p=closest / total))
        else:
            idx = int(rng.integers(n))  # remaining points coincide with chosen centers
        centers[j] = X[idx]
        np.minimum(closest, ((X - centers[j]) ** 2).sum(axis=1), out=closest)
    return centers


# ---------------------------------------------------------------------------
# Gaussian mixture
# ---------------------------------------------------------------------------

def _log_component_densities(X: np.ndarray, means: np.ndarray, covariances: np.ndarray) -> np.ndarray:
    """(N, n) log N(x; mean_j, cov_j) via Cholesky factors."""
    n_points, dim = X.shape
    out = np.empty((n_points, means.shape[0]), dtype=np.float64)
    for j in range(means.shape[0]):
        chol = np.linalg.cholesky(covariances[j])
        log_det = 2.0 * np.log(np.diag(chol)).sum()
        solved = solve_triangular(chol, (X - means[j]).T, lower=True)
        mahalanobis = (solved ** 2).sum(axis=0)
        out[:, j] = -0.5 * (dim * _LOG_2PI + log_det + mahalanobis)
    return out


def _gmm_m_step(X: np.ndarray, resp: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n_points, dim = X.shape
    counts = resp.sum(axis=0) + 10.0 * np.finfo(np.float64).eps
    weights = counts / counts.sum()
    means = (resp.T @ X) / counts[:, None]
    covariances = np.empty((resp.shape[1], dim, dim), dtype=np.float64)
    for j in range(resp.shape[1]):
        diff = X - means[j]
        cov = (resp[:, j][:, None] * diff).T @ diff / counts[j]
        cov = 0.5 * (cov + cov.T) + _COV_REGULARIZATION * np.eye(dim)
        covariances[j] = cov
    return weights, means, covariances


def fit_gmm(features: np.ndarray, n_components: int, seed: int) -> GmmModel:
    """EM fit with k-means++-style seeding and per-step covariance regularization.

    Stops when the relative log-likelihood improvement drops below 1e-6 or
    after 200 iterations. The per-iteration total log-likelihood trace is
    kept on the model; it is non-decreasing.
    """
    X = _as_feature_matrix(features, "GMM training features")
    if n_components < 1:
        raise ValueError("n_components must be >= 1")
    if X.shape[0] < n_components:
        raise ValueError(f"need at least n_components={n_components} points, got {X.shape[0]}")

    rng = np.random.default_rng(seed)
    init_means = _kmeanspp_init(X, n_components, rng)

    # Hard assignment to the nearest seed mean gives the initial responsibilities.
    d2 = ((X[:, None, :] - init_means[None, :, :]) ** 2).sum(axis=2)
    labels = d2.argmin(axis=1)
    own_dist = d2[np.arange(X.shape[0]), labels].copy()
    for j in np.flatnonzero(np.bincount(labels, minlength=n_components) == 0):
        far = int(own_dist.argmax())
        labels[far] = j
        own_dist[far] = -1.0  # keep later empty components from stealing the same point
    resp = np.zeros((X.shape[0], n_components), dtype=np.float64)
    resp[np.arange(X.shape[0]), labels] = 1.0

    weights, means, covariances = _gmm_m_step(X, resp)
    trace = []
    prev_ll = None
    with np.errstate(divide="ignore"):  # a dead component's log weight is -inf
        for _ in range(_EM_MAX_ITER):
            log_joint = _log_component_densities(X, means, covariances) + np.log(weights)[None, :]
            log_norm = logsumexp(log_joint, axis=1)
            ll = float(log_norm.sum())
            trace.append(ll)
            if prev_ll is not None and abs(prev_ll) > 0 and (ll - prev_ll) < _EM_REL_TOL * abs(prev_ll):
                break
            prev_ll = ll
            resp = np.exp(log_joint - log_norm[:, None])
            weights, means, covariances = _gmm_m_step(X, resp)

    return GmmModel(weights=weights, means=means, covariances=covariances, seed=int(seed),
                    log_likelihood_trace=np.asarray(trace, dtype=np.float64))


def gmm_log_density(model: GmmModel, X: np.ndarray) -> np.ndarray:
    """(N,) mixture log densities, stabilized with log-sum-exp."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.dim:
        raise ValueError(f"queries must have shape (N, {model.dim}), got {X.shape}")
    with np.errstate(divide="ignore"):
        log_joint = _log_component_densities(X, model.means, model.covariances) + np.log(model.weights)[None, :]
    return logsumexp(log_joint, axis=1)


def gmm_score(model: GmmModel, x: np.ndarray) -> float:
    """Negative log density of one feature vector; higher means more anomalous."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.dim,):
        raise ValueError(f"query has shape {x.shape}, model expects ({model.dim},)")
    return float(-gmm_log_density(model, x[None, :])[0])


def gmm_scores(model: GmmModel, X: np.ndarray) -> np.ndarray:
    return -gmm_log_density(model, X)


# ---------------------------------------------------------------------------
# kNN over training exemplars
# ---------------------------------------------------------------------------

def build_exemplar_index(features: np.ndarray, clip_ids, k: int) -> ExemplarIndex:
    X = _as_feature_matrix(features, "exemplar features")
    clip_ids = tuple(str(c) for c in clip_ids)
    if len(clip_ids) != X.shape[0]:
        raise ValueError(f"{len(clip_ids)} clip ids for {X.shape[0]} exemplar rows")
    if k < 1:
        raise ValueError("k must be >= 1")
    return ExemplarIndex(features=X, clip_ids=clip_ids, k=int(k))


def knn_score(index: ExemplarIndex, x: np.ndarray, k: int | None = None,
              exclude_clip: str | None = None) -> float:
    """Mean Euclidean distance from x to its k nearest exemplars.

    Rows from `exclude_clip` are skipped; if fewer than k exemplars remain
    the mean runs over those remaining.
    """
    k = index.k if k is None else int(k)
    if k < 1:
        raise ValueError("k must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (index.dim,):
        raise ValueError(f"query has shape {x.shape}, index expects ({index.dim},)")
    feats = index.features
    if exclude_clip is not None:
        mask = np.asarray([c != exclude_clip for c in index.clip_ids])
        feats = feats[mask]
    if feats.shape[0] == 0:
        raise ValueError(f"no exemplars left after excluding clip {exclude_clip!r}")
    dists = np.sqrt(((feats - x) ** 2).sum(axis=1))
    nearest = np.sort(dists)[: min(k, dists.shape[0])]
    return float(nearest.mean())


def knn_scores(index: ExemplarIndex, X: np.ndarray, k: int | None = None,
               exclude_clip: str | None = None, block: int = 512) -> np.ndarray:
    """Batch variant of knn_score; queries are processed in blocks."""
    k = index.k if k is None else int(k)
    if k < 1:
        raise ValueError("k must be >= 1")
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != index.dim:
        raise ValueError(f"queries must have shape (N, {index.dim}), got {X.shape}")
    feats = index.features
    if exclude_clip is not None:
        mask = np.asarray([c != exclude_clip for c in index.clip_ids])
        feats = feats[mask]
    if feats.shape[0] == 0:
        raise ValueError(f"no exemplars left after excluding clip {exclude_clip!r}")

    kk = min(k, feats.shape[0])
    feat_sq = (feats ** 2).sum(axis=1)
    out = np.empty(X.shape[0], dtype=np.float64)
    for start in range(0, X.shape[0], block):
        chunk = X[start:start + block]
        d2 = (chunk ** 2).sum(axis=1)[:, None] + feat_sq[None, :] - 2.0 * (chunk @ feats.T)
        np.maximum(d2, 0.0, out=d2)
        if kk < d2.shape[1]:
            nearest = np.partition(d2, kk - 1, axis=1)[:, :kk]
        else:
            nearest = d2
        out[start:start + block] = np.sqrt(np.sort(nearest, axis=1)).mean(axis=1)
    return out


# ---------------------------------------------------------------------------
# k-means compression
# ---------------------------------------------------------------------------

def fit_kmeans(features: np.ndarray, n_clusters: int, seed: int) -> KMeansIndex:
    """Lloyd's algorithm with k-means++ seeding.

    Runs to an assignment fixpoint (or 300 iterations); empty clusters are
    re-seeded from the point farthest from its current centroid. The
    within-cluster sum of squares per iteration is kept on the index.
    """
    X = _as_feature_matrix(features, "k-means training features")
    if n_clusters < 1:
        raise ValueError("n_clusters must be >= 1")
    if X.shape[0] < n_clusters:
        raise ValueError(f"need at least n_clusters={n_clusters} points, got {X.shape[0]}")

    rng = np.random.default_rng(seed)
    centroids = _kmeanspp_init(X, n_clusters, rng)

    def assign(cents):
        d2 = ((X[:, None, :] - cents[None, :, :]) ** 2).sum(axis=2)
        labels = d2.argmin(axis=1)
        return labels, d2[np.arange(X.shape[0]), labels]

    prev_labels = None
    trace = []
    for _ in range(_LLOYD_MAX_ITER):
        labels, min_d2 = assign(centroids)
        counts = np.bincount(labels, minlength=n_clusters)
        reseeds = 0
        while counts.min() == 0 and reseeds < n_clusters and min_d2.max() > 0.0:
            # Re-seed one empty cluster from the farthest point; duplicates of
            # existing centroids (min_d2 all zero) cannot be improved by this.
            empty = int(counts.argmin())
            centroids[empty] = X[int(min_d2.argmax())]
            labels, min_d2 = assign(centroids)
            counts = np.bincount(labels, minlength=n_clusters)
            reseeds += 1
        trace.append(float(min_d2.sum()))
        if prev_labels is not None and np.array_equal(labels, prev_labels):
            break
        for j in np.flatnonzero(counts > 0):
            centroids[j] = X[labels == j].mean(axis=0)
        prev_labels = labels

    final_labels, _ = assign(centroids)
    occupied = np.bincount(final_labels, minlength=n_clusters) > 0
    return KMeansIndex(centroids=centroids[occupied], seed=int(seed),
                       inertia_trace=np.asarray(trace, dtype=np.float64))


def kmeans_score(index: KMeansIndex, x: np.ndarray) -> float:
    """Euclidean distance from x to its nearest centroid."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (index.dim,):
        raise ValueError(f"query has shape {x.shape}, index expects ({index.dim},)")
    return float(np.sqrt(((index.centroids - x) ** 2).sum(axis=1)).min())


def kmeans_scores(index: KMeansIndex, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != index.dim:
        raise ValueError(f"queries must have shape (N, {index.dim}), got {X.shape}")
    d2 = ((X[:, None, :] - index.centroids[None, :, :]) ** 2).sum(axis=2)
    return np.sqrt(d2.min(axis=1))


# ---------------------------------------------------------------------------
# Persistence: JSON header + float64 tensor blobs, deterministic bytes
# ---------------------------------------------------------------------------

DensityModel = GmmModel | ExemplarIndex | KMeansIndex


def save_density_model(model: DensityModel, directory: str | Path, name: str) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if isinstance(model, GmmModel):
        header = {"type": "gmm", "seed": model.seed, "n_components": int(model.weights.shape[0]),
                  "dim": model.dim,
                  "log_likelihood_trace": [float(v) for v in model.log_likelihood_trace],
                  "tensors": {"weights": f"{name}.weights.vadt", "means": f"{name}.means.vadt",
                              "covariances": f"{name}.covariances.vadt"}}
        arrays = {"weights": model.weights, "means": model.means, "covariances": model.covariances}
    elif isinstance(model, ExemplarIndex):
        header = {"type": "knn", "k": model.k, "dim": model.dim,
                  "clip_ids": list(model.clip_ids),
                  "tensors": {"features": f"{name}.features.vadt"}}
        arrays = {"features": model.features}
    elif isinstance(model, KMeansIndex):
        header = {"type": "kmeans", "seed": model.seed, "dim": model.dim,
                  "n_clusters": int(model.centroids.shape[0]),
                  "inertia_trace": [float(v) for v in model.inertia_trace],
                  "tensors": {"centroids": f"{name}.centroids.vadt"}}
        arrays = {"centroids": model.centroids}
    else:
        raise TypeError(f"unknown model type {type(model)!r}")

    for key, rel in header["tensors"].items():
        tensorfile.write_tensor(directory / rel, np.asarray(arrays[key], dtype=np.float64))
    with open(directory / f"{name}.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_density_model(directory: str | Path, name: str) -> DensityModel:
    directory = Path(directory)
    header_path = directory / f"{name}.json"
    if not header_path.is_file():
        raise ValidationError(f"missing model header {header_path}")
    header = json.loads(header_path.read_text(encoding="utf-8"))
    tensors = {key: tensorfile.read_tensor(directory / rel) for key, rel in header["tensors"].items()}
    kind = header.get("type")
    if kind == "gmm":
        return GmmModel(weights=tensors["weights"], means=tensors["means"],
                        covariances=tensors["covariances"], seed=int(header["seed"]),
                        log_likelihood_trace=np.asarray(header["log_likelihood_trace"], dtype=np.float64))
    if kind == "knn":
        return ExemplarIndex(features=tensors["features"], clip_ids=tuple(header["clip_ids"]),
                             k=int(header["k"]))
    if kind == "kmeans":
        return KMeansIndex(centroids=tensors["centroids"], seed=int(header["seed"]),
                           inertia_trace=np.asarray(header["inertia_trace"], dtype=np.float64))
    raise ValidationError(f"model header {header_path} has unknown type {kind!r}")
