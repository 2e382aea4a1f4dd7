"""Separation quality metrics.

An estimate is decomposed against a set of reference sources into a target
component (projection onto the chosen reference), an interference
component (projection onto the span of all references, minus the target),
and an artifact remainder. SDR and SIR are energy ratios of these parts in
dB, capped at +60 dB, with -inf as the sentinel for a zero target
projection.

The default decomposition is filter-free (pure projections). A distortion
filter length > 1 projects onto delayed copies of the references instead,
which matches the classic bss_eval family; it changes absolute dB values,
not orderings, on the synthetic material used here.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .dsp import Waveform
from .errors import DegenerateReferences, InvalidInput

SDR_CAP_DB = 60.0
NEG_INF = float("-inf")

_COND_LIMIT = 1e12
_EXHAUSTIVE_LIMIT = 6


def _as_samples(x) -> np.ndarray:
    if isinstance(x, Waveform):
        return x.samples
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise InvalidInput(f"signal must be 1-D, got shape {arr.shape}")
    return arr


def _shift_rows(ref: np.ndarray, length: int) -> np.ndarray:
    rows = np.zeros((length, ref.shape[0]))
    for s in range(length):
        rows[s, s:] = ref[: ref.shape[0] - s]
    return rows


def _project(basis: np.ndarray, target: np.ndarray) -> np.ndarray:
    gram = basis @ basis.T
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond >= _COND_LIMIT:
        raise DegenerateReferences(
            f"reference Gram matrix is ill-conditioned (cond={cond:.3g})"
        )
    coef = np.linalg.solve(gram, basis @ target)
    return basis.T @ coef


@dataclass(frozen=True)
class Decomposition:
    """estimate == s_target + e_interf + e_artif (up to float rounding)."""

    s_target: np.ndarray
    e_interf: np.ndarray
    e_artif: np.ndarray


def decompose(estimate, references, target_index: int, filter_length: int = 0) -> Decomposition:
    """Split `estimate` into target/interference/artifact components.

    `filter_length` 0 or 1 projects onto the raw reference signals;
    larger values project onto their delayed copies (0..L-1 samples).
    """
    est = _as_samples(estimate)
    refs = [_as_samples(r) for r in references]
    if not refs:
        raise InvalidInput("references must be non-empty")
    for r in refs:
        if r.shape != est.shape:
            raise InvalidInput("estimate and references must have equal lengths")
    if not 0 <= target_index < len(refs):
        raise InvalidInput(f"target_index {target_index} out of range")
    length = max(1, int(filter_length))

    target_basis = _shift_rows(refs[target_index], length)
    s_target = _project(target_basis, est)
    if len(refs) == 1:
        proj_all = s_target
    else:
        all_basis = np.vstack([_shift_rows(r, length) for r in refs])
        proj_all = _project(all_basis, est)
    return Decomposition(
        s_target=s_target,
        e_interf=proj_all - s_target,
        e_artif=est - proj_all,
    )


def _ratio_db(num: float, denom: float) -> float:
    if num == 0.0:
        return NEG_INF
    if denom <= 0.0:
        return SDR_CAP_DB
    return min(SDR_CAP_DB, 10.0 * np.log10(num / denom))


def sdr(d: Decomposition) -> float:
    """Signal-to-distortion ratio in dB (target vs everything else)."""
    num = float(np.sum(d.s_target**2))
    denom = float(np.sum((d.e_interf + d.e_artif) ** 2))
    return _ratio_db(num, denom)


def sir(d: Decomposition) -> float:
    """Signal-to-interference ratio in dB (target vs cross-source leakage)."""
    num = float(np.sum(d.s_target**2))
    denom = float(np.sum(d.e_interf**2))
    return _ratio_db(num, denom)


@dataclass(frozen=True)
class PairScore:
    estimate_index: int
    reference_index: int
    sdr: float
    sir: float


@dataclass(frozen=True)
class CaseEval:
    assignment: tuple
    pairs: tuple


@dataclass(frozen=True)
class BatchEval:
    cases: tuple
    mean_sdr: float
    std_sdr: float
    mean_sir: float
    std_sir: float
    excluded_count: int
    pair_count: int

    def to_report_dict(self) -> dict:
        return {
            "cases": [
                {
                    "assignment": [list(p) for p in case.assignment],
                    "sdr": [p.sdr for p in case.pairs],
                    "sir": [p.sir for p in case.pairs],
                }
                for case in self.cases
            ],
            "mean_sdr": self.mean_sdr,
            "std_sdr": self.std_sdr,
            "mean_sir": self.mean_sir,
            "std_sir": self.std_sir,
            "excluded_count": self.excluded_count,
        }


def pairwise_scores(estimates, references, filter_length: int = 0):
    """SDR and SIR matrices over every (estimate, reference) pairing."""
    n_est, n_ref = len(estimates), len(references)
    sdr_mat = np.empty((n_est, n_ref))
    sir_mat = np.empty((n_est, n_ref))
    for i in range(n_est):
        for j in range(n_ref):
            d = decompose(estimates[i], references, j, filter_length)
            sdr_mat[i, j] = sdr(d)
            sir_mat[i, j] = sir(d)
    return sdr_mat, sir_mat


def _exhaustive_assignment(sdr_mat: np.ndarray):
    n_est, n_ref = sdr_mat.shape
    best_total = None
    best = None
    if n_est <= n_ref:
        for perm in itertools.permutations(range(n_ref), n_est):
            total = sum(sdr_mat[i, perm[i]] for i in range(n_est))
            if best_total is None or total > best_total:
                best_total, best = total, [(i, perm[i]) for i in range(n_est)]
    else:
        for perm in itertools.permutations(range(n_est), n_ref):
            total = sum(sdr_mat[perm[j], j] for j in range(n_ref))
            if best_total is None or total > best_total:
                best_total, best = total, sorted((perm[j], j) for j in range(n_ref))
    return best


def _hungarian_assignment(sdr_mat: np.ndarray):
    cost = np.where(np.isfinite(sdr_mat), -sdr_mat, 1e18)
    rows, cols = linear_sum_assignment(cost)
    return sorted(zip(rows.tolist(), cols.tolist()))


def best_match_permutation(estimates, references, filter_length: int = 0):
    """SDR-optimal one-to-one assignment of estimates to references.

    Exhaustive search up to 6 signals per side (ties resolved in favor of
    the lowest estimate index), Hungarian assignment beyond that. Returns
    (assignment, pair_scores) where assignment pairs are
    (estimate_index, reference_index); the unmatched surplus on the larger
    side is left unassigned.
    """
    if not estimates or not references:
        raise InvalidInput("estimates and references must both be non-empty")
    sdr_mat, sir_mat = pairwise_scores(estimates, references, filter_length)
    if max(sdr_mat.shape) <= _EXHAUSTIVE_LIMIT:
        assignment = _exhaustive_assignment(sdr_mat)
    else:
        assignment = _hungarian_assignment(sdr_mat)
    pairs = tuple(
        PairScore(i, j, float(sdr_mat[i, j]), float(sir_mat[i, j]))
        for i, j in assignment
    )
    return tuple(assignment), pairs


def evaluate_batch(cases, filter_length: int = 0) -> BatchEval:
    """Best-match evaluation over (estimates, references) cases.

    Aggregates are the mean and population standard deviation over all
    assigned pairs; pairs with a -inf score are excluded and counted.
    """
    if not cases:
        raise InvalidInput("need at least one evaluation case")
    evals = []
    sdrs, sirs = [], []
    excluded = 0
    for estimates, references in cases:
        assignment, pairs = best_match_permutation(estimates, references, filter_length)
        evals.append(CaseEval(assignment=assignment, pairs=pairs))
        for p in pairs:
            if np.isinf(p.sdr) and p.sdr < 0:
                excluded += 1
                continue
            sdrs.append(p.sdr)
            sirs.append(p.sir)
    if sdrs:
        mean_sdr, std_sdr = float(np.mean(sdrs)), float(np.std(sdrs))
        mean_sir, std_sir = float(np.mean(sirs)), float(np.std(sirs))
    else:
        mean_sdr = std_sdr = mean_sir = std_sir = float("nan")
    return BatchEval(
        cases=tuple(evals),
        mean_sdr=mean_sdr,
        std_sdr=std_sdr,
        mean_sir=mean_sir,
        std_sir=std_sir,
        excluded_count=excluded,
        pair_count=len(sdrs),
    )
