"""Evaluation metrics for comparing posterior approximations.

All comparisons are taken relative to the exact dense reference: the
relative RMSE divides by the reference's error against the simulated
truth, and the log-score difference subtracts the reference's negative
posterior log-density at the truth.
"""

import csv
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ScoreReport",
    "rrmse",
    "log_score",
    "log_score_precision",
    "dls",
    "crps_sample",
    "mse",
]


@dataclass
class ScoreReport:
    """One benchmark row; serialized column order is fixed."""

    method: str
    m: int
    n: int
    rrmse: float
    dls: float
    mse: float
    crps: float
    seconds: float

    COLUMNS = ("method", "m", "n", "rrmse", "dls", "mse", "crps", "seconds")

    def row(self):
        return [getattr(self, c) for c in self.COLUMNS]

    @staticmethod
    def write_csv(reports, fh):
        writer = csv.writer(fh)
        writer.writerow(ScoreReport.COLUMNS)
        for r in reports:
            writer.writerow(
                ["" if isinstance(v, float) and np.isnan(v) else v for v in r.row()]
            )


def mse(estimate, truth):
    estimate = np.asarray(estimate, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    return float(np.mean((estimate - truth) ** 2))


def rrmse(approx_mean, reference_mean, truth):
    """RMSE of the approximation against the truth, divided by the RMSE
    of the reference against the truth."""
    num = np.sqrt(mse(approx_mean, truth))
    den = np.sqrt(mse(reference_mean, truth))
    if den == 0:
        raise ZeroDivisionError("reference error is zero")
    return float(num / den)


def log_score(mean, factor, truth, perm=None):
    """Negative log-density of the truth under N(mean, (V V')^{-1}).

    ``factor`` is the upper-triangular precision factor V in its own
    ordering; pass ``perm`` when mean and truth are in a different
    (original) order.
    """
    mean = np.asarray(mean, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    resid = truth - mean
    if perm is not None:
        resid = resid[perm]
    half = resid @ factor.to_scipy()  # row vector times V = (V' resid)'
    quad = float(half @ half)
    logdet = 2.0 * float(np.sum(np.log(factor.diagonal())))
    n = len(resid)
    return 0.5 * (quad - logdet + n * np.log(2 * np.pi))


def log_score_precision(mean, W, truth):
    """Negative log-density of the truth under N(mean, W^{-1}) for a
    dense precision matrix W."""
    resid = np.asarray(truth, dtype=np.float64) - np.asarray(mean, dtype=np.float64)
    sign, logdet = np.linalg.slogdet(W)
    if sign <= 0:
        raise np.linalg.LinAlgError("precision matrix is not positive definite")
    quad = float(resid @ W @ resid)
    return 0.5 * (quad - logdet + len(resid) * np.log(2 * np.pi))


def dls(approx_log_score, reference_log_score):
    """Log-score difference; zero means indistinguishable from the
    reference posterior."""
    if not (np.isfinite(approx_log_score) and np.isfinite(reference_log_score)):
        raise ValueError("log scores must be finite")
    return float(approx_log_score - reference_log_score)


def crps_sample(samples, observed):
    """Sample-based continuous ranked probability score for one scalar.

    mean |X - z| - 0.5 mean |X - X'| with both means over all ordered
    sample pairs; computed in O(S log S) through the sorted identity.
    """
    x = np.sort(np.asarray(samples, dtype=np.float64).ravel())
    s = x.shape[0]
    if s < 2:
        raise ValueError("need at least two samples")
    term1 = float(np.mean(np.abs(x - float(observed))))
    # sum over i<j of (x_(j) - x_(i)) via rank coefficients
    pair_sum = float(np.sum((2 * np.arange(s) - s + 1) * x))
    return term1 - pair_sum / (s * s)


def crps_mean(samples, observed):
    """Average CRPS over locations; ``samples`` has one column per
    location and one row per draw."""
    samples = np.asarray(samples, dtype=np.float64)
    observed = np.asarray(observed, dtype=np.float64)
    return float(
        np.mean([crps_sample(samples[:, i], observed[i]) for i in range(samples.shape[1])])
    )
