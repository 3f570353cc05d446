"""Agreement between a predicted labeling and the ground-truth scan."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .scan_stats import compute_neighbors, label_adjacency, weighted_moments
from .volume_io import GrainScan, PathLike


def _labels(scan: GrainScan, predicted) -> np.ndarray:
    if isinstance(predicted, GrainScan):
        if tuple(predicted.dims) != tuple(scan.dims):
            raise ValueError(f"dims mismatch: {predicted.dims} vs {scan.dims}")
        pred = predicted.labels
    else:
        pred = np.asarray(predicted).reshape(-1)
        if pred.size != scan.n:
            raise ValueError(f"dims mismatch: {pred.size} predicted labels for {scan.n} voxels")
    return pred.astype(np.int64)


def accuracy(scan: GrainScan, predicted) -> float:
    """Fraction of voxels whose predicted label equals the true one (0 never matches)."""
    pred = _labels(scan, predicted)
    return float(np.count_nonzero((pred == scan.labels) & (pred > 0))) / scan.n


def predicted_counts(scan: GrainScan, predicted) -> np.ndarray:
    pred = _labels(scan, predicted)
    k = max(scan.k, int(pred.max(initial=0)))
    return np.bincount(pred, minlength=k + 1)[1:scan.k + 1]


def weight_error(scan: GrainScan, predicted) -> float:
    """``(1/n) Σ_i |κ_i − #{predicted label i}|``."""
    return float(np.abs(scan.kappa() - predicted_counts(scan, predicted)).sum()) / scan.n


def _moment_errors(scan: GrainScan, predicted):
    pred = _labels(scan, predicted)
    pts = scan.coordinates()
    kappa, c_true, S_true = weighted_moments(pts, scan.labels.astype(np.int64), scan.k)
    pred_in = np.where(pred <= scan.k, pred, 0)
    mass, c_pred, S_pred = weighted_moments(pts, pred_in, scan.k)
    empty = mass == 0
    center = 0.5 * np.asarray(scan.dims) * np.asarray(scan.spacing)
    c_pred[empty] = center
    S_pred[empty] = 0.0
    present = kappa > 0
    dc = np.linalg.norm(c_true[present] - c_pred[present], axis=1)
    dS = np.linalg.norm(S_true[present] - S_pred[present], ord=2, axis=(1, 2))
    w = kappa[present] / scan.n
    return float(w @ dc), float(w @ dS), np.flatnonzero(empty & present) + 1


def centroid_error(scan: GrainScan, predicted) -> float:
    """``(1/n) Σ κ_i ‖c(G_i) − c(Ĉ_i)‖₂`` in µm."""
    return _moment_errors(scan, predicted)[0]


def covariance_error(scan: GrainScan, predicted) -> float:
    """``(1/n) Σ κ_i ‖Σ_i − Cov(Ĉ_i)‖₂`` (spectral norm) in µm²."""
    return _moment_errors(scan, predicted)[1]


@dataclass(frozen=True)
class NeighborhoodReport:
    exact: float
    le1: float
    le2: float
    superset: float           # all true neighbors present, extra ones allowed
    differences: tuple        # symmetric-difference size per grain

    def as_tuple(self):
        return (self.exact, self.le1, self.le2)


def neighborhood_report(scan: GrainScan, predicted) -> NeighborhoodReport:
    """Percent of grains whose 26-neighbor set is reproduced with 0, ≤1, ≤2 errors.

    An error is a missing or an additional neighbor.
    """
    pred = _labels(scan, predicted)
    true_adj = compute_neighbors(scan).adjacency()
    pred_vol = pred.reshape(scan.dims, order="F")
    pred_vol = np.where(pred_vol <= scan.k, pred_vol, 0)
    pred_adj = [set() for _ in range(scan.k)]
    for a, b in label_adjacency(pred_vol, scan.k):
        pred_adj[a - 1].add(b)
        pred_adj[b - 1].add(a)
    present = [i for i in range(scan.k) if scan.kappa()[i] > 0]
    diff = np.array([len(true_adj[i] ^ pred_adj[i]) for i in present])
    sup = np.array([true_adj[i] <= pred_adj[i] for i in present])
    pct = (lambda m: 100.0 * float(np.mean(m)) if len(m) else 100.0)
    return NeighborhoodReport(pct(diff == 0), pct(diff <= 1), pct(diff <= 2), pct(sup),
                              tuple(int(d) for d in diff))


@dataclass
class FitReport:
    accuracy: float
    weight_error: float
    centroid_error: float
    covariance_error: float
    neighborhood_exact: float
    neighborhood_le1: float
    neighborhood_le2: float
    neighborhood_superset: float
    empty_cells: list = field(default_factory=list)
    runtime_seconds: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, doc: dict) -> "FitReport":
        return cls(**doc)

    def save(self, path: PathLike) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1, sort_keys=True)

    def table(self, title: str = "fit") -> str:
        """Aligned plain-text table, one metric per row."""
        rows = [("Accuracy Phi_G", f"{self.accuracy:.4f}"),
                ("Weight error Psi_G", f"{self.weight_error:.4f}"),
                ("Centroid error [um]", f"{self.centroid_error:.4f}"),
                ("Covariance error [um^2]", f"{self.covariance_error:.4f}"),
                ("Correct neighborhoods [%]", f"{self.neighborhood_exact:.2f}"),
                ("  up to 1 error [%]", f"{self.neighborhood_le1:.2f}"),
                ("  up to 2 errors [%]", f"{self.neighborhood_le2:.2f}"),
                ("  all true neighbors kept [%]", f"{self.neighborhood_superset:.2f}")]
        rows += [(f"Runtime {stage} [s]", f"{t:.2f}") for stage, t in self.runtime_seconds.items()]
        if self.empty_cells:
            rows.append(("Empty predicted cells", ",".join(map(str, self.empty_cells))))
        w = max(len(r[0]) for r in rows)
        v = max(len(r[1]) for r in rows + [("", title)])
        lines = [f"{'':<{w}}  {title:>{v}}"]
        lines += [f"{name:<{w}}  {val:>{v}}" for name, val in rows]
        return "\n".join(lines)


def evaluate(scan: GrainScan, predicted, runtime_seconds=None) -> FitReport:
    """All metrics at once."""
    c_err, s_err, empty = _moment_errors(scan, predicted)
    nb = neighborhood_report(scan, predicted)
    return FitReport(accuracy(scan, predicted), weight_error(scan, predicted), c_err, s_err,
                     nb.exact, nb.le1, nb.le2, nb.superset,
                     [int(e) for e in empty], dict(runtime_seconds or {}))
