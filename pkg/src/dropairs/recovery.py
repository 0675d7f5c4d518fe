"""Reference LS, MS and HAP2S_E gradient weights computed from their own definitions.

These are deliberately written against the similarity matrix, not against
the pair losses, so that comparing them with the grouped solvers in
:mod:`dropairs.dro` checks two independent code paths.

Weight vectors are aligned with the pair list: ``w_pos`` is zero on
negative pairs and ``w_neg`` is zero on positive pairs.
"""

from dataclasses import dataclass, fields
from typing import NamedTuple

import numpy as np

from . import dro
from .core import ConfigurationError, DroConfig, EmbeddingBatch, PairSystem, SimilarityMatrix, build_pair_system, similarity
from .losses import loss_matrix


class RecoveredWeights(NamedTuple):
    w_pos: np.ndarray
    w_neg: np.ndarray
    loss_value: float


def _group_masks(pairs: PairSystem):
    b = pairs.batch_size
    pos = np.zeros((b, b), dtype=bool)
    neg = np.zeros((b, b), dtype=bool)
    pos[pairs.anchor[pairs.y > 0], pairs.other[pairs.y > 0]] = True
    neg[pairs.anchor[pairs.y < 0], pairs.other[pairs.y < 0]] = True
    return pos, neg


def _pairwise_inverse_sums(S, mask, sign, scale):
    """For each masked (i, j): 1 / sum_{k in mask_i} exp(sign * scale * (S_ij - S_ik))."""
    with np.errstate(over="ignore"):
        diff = sign * scale * (S[:, :, None] - S[:, None, :])
        terms = np.where(mask[:, None, :], np.exp(diff), 0.0)
    return terms.sum(axis=2)


def ls_weights(sim: SimilarityMatrix, pairs: PairSystem, lam=0.5) -> RecoveredWeights:
    """Lifted-structure weights w+_ij = 1/sum_k e^{S_ij - S_ik}, w-_ij = 1/sum_k e^{S_ik - S_ij}.

    Weights come from the unhinged expression. ``loss_value`` is the
    hinged LS loss; anchors missing either group contribute nothing.
    """
    S = sim.values
    pos, neg = _group_masks(pairs)
    dpos = _pairwise_inverse_sums(S, pos, +1.0, 1.0)
    dneg = _pairwise_inverse_sums(S, neg, -1.0, 1.0)
    w_pos = np.where(pos, 1.0 / np.where(pos, dpos, 1.0), 0.0)
    w_neg = np.where(neg, 1.0 / np.where(neg, dneg, 1.0), 0.0)

    terms = ls_anchor_terms(sim, pairs, lam)
    return RecoveredWeights(pairs.gather(w_pos), pairs.gather(w_neg), float(np.maximum(terms, 0).sum()))


def ls_anchor_terms(sim: SimilarityMatrix, pairs: PairSystem, lam=0.5):
    """Per-anchor LS term before the outer hinge (-inf when a group is empty)."""
    S = sim.values
    pos, neg = _group_masks(pairs)
    with np.errstate(divide="ignore"):
        lp = np.log(np.where(pos, np.exp(lam - S), 0.0).sum(axis=1))
        ln = np.log(np.where(neg, np.exp(S - lam), 0.0).sum(axis=1))
    return lp + ln


def ls_loss(sim: SimilarityMatrix, pairs: PairSystem, lam=0.5, hinge=True) -> float:
    terms = ls_anchor_terms(sim, pairs, lam)
    terms = terms[np.isfinite(terms)]
    return float(np.maximum(terms, 0).sum() if hinge else terms.sum())


def ms_weights(sim: SimilarityMatrix, pairs: PairSystem, alpha=2.0, beta=50.0, lam=0.5,
               lam_neg=None) -> RecoveredWeights:
    """Multi-similarity weights.

    w+_ij = 1 / (e^{alpha (S_ij - lam)} + sum_k e^{alpha (S_ij - S_ik)})
    w-_ij = 1 / (e^{beta (lam_neg - S_ij)} + sum_k e^{beta (S_ik - S_ij)})

    ``lam_neg`` defaults to ``lam``; a separate value lets the negative
    side use its own threshold. ``loss_value`` carries the 1/B prefactor.
    """
    lam_neg = lam if lam_neg is None else lam_neg
    S = sim.values
    b = pairs.batch_size
    pos, neg = _group_masks(pairs)
    with np.errstate(over="ignore"):
        dpos = _pairwise_inverse_sums(S, pos, +1.0, alpha) + np.exp(alpha * (S - lam))
        dneg = _pairwise_inverse_sums(S, neg, -1.0, beta) + np.exp(beta * (lam_neg - S))
    w_pos = np.where(pos, 1.0 / dpos, 0.0)
    w_neg = np.where(neg, 1.0 / dneg, 0.0)

    def log1p_sum(x, mask):
        # log(1 + sum_k e^{x_k}) row-wise, stable
        xm = np.where(mask, x, -np.inf)
        top = np.maximum(xm.max(axis=1), 0.0)
        return top + np.log(np.exp(-top) + np.exp(xm - top[:, None]).sum(axis=1))

    lp = log1p_sum(-alpha * (S - lam), pos) / alpha
    ln = log1p_sum(beta * (S - lam_neg), neg) / beta
    return RecoveredWeights(pairs.gather(w_pos), pairs.gather(w_neg), float((lp + ln).sum() / b))


def hap2s_e_weights(sim: SimilarityMatrix, pairs: PairSystem, gamma=1.0):
    """Normalized exponential point-to-set weights q_ij / sum_k q_ik.

    q+_ij = exp(-S_ij / gamma) over positives, q-_ij = exp(S_ij / gamma) over negatives.
    Returns ``(w_pos, w_neg)``.
    """
    if gamma <= 0:
        raise ConfigurationError(f"gamma must be positive, got {gamma}")
    S = sim.values
    pos, neg = _group_masks(pairs)

    def normalized(logq, mask):
        logq = np.where(mask, logq, -np.inf)
        top = logq.max(axis=1, keepdims=True)
        top = np.where(np.isfinite(top), top, 0.0)
        q = np.where(mask, np.exp(logq - top), 0.0)
        total = q.sum(axis=1, keepdims=True)
        return np.where(mask, q / np.where(total > 0, total, 1.0), 0.0)

    return pairs.gather(normalized(-S / gamma, pos)), pairs.gather(normalized(S / gamma, neg))


def signed_coeffs(w_pos, w_neg):
    """Gradient coefficients on dS_ij/dtheta: -w+ on positives, +w- on negatives."""
    return np.asarray(w_neg) - np.asarray(w_pos)


@dataclass
class EquivalenceReport:
    status: str
    ls_discrepancy: float
    ms_discrepancy: float
    hap2s_discrepancy: float
    tolerance: float
    ls_pass: bool
    ms_pass: bool
    hap2s_pass: bool
    gamma: float
    min_loss: float

    @property
    def passed(self) -> bool:
        return self.status == "ok" and self.ls_pass and self.ms_pass and self.hap2s_pass

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name}={v!r}" if isinstance(v, float) else f"{f.name}={v}")
        return "\n".join(lines) + "\n"


def equivalence_report(batch: EmbeddingBatch, cfg: DroConfig, tol=1e-10) -> EquivalenceReport:
    """Compare the grouped DRO solvers with the LS, MS and HAP2S_E weights on one batch.

    (a) grouped KL at gamma=1 vs LS, as signed gradient coefficients;
    (b) ms-recovery (thresholds c+, c-; temperatures 1/alpha, 1/beta) vs MS
        with matching per-side thresholds;
    (c) grouped KL at ``cfg.gamma`` vs HAP2S_E at the same gamma.
    Needs every margin loss positive; otherwise status is ``hinge-active``.
    """
    pairs = build_pair_system(batch.labels)
    sim = similarity(batch)
    losses = loss_matrix(sim, pairs, cfg, "margin")
    min_loss = float(losses.loss.min())
    if min_loss <= 0:
        nan = float("nan")
        return EquivalenceReport("hinge-active", nan, nan, nan, tol, False, False, False,
                                 cfg.gamma, min_loss)

    kl1 = dro.solve_kl_grouped(losses, pairs, 1.0, 1.0)
    ls = ls_weights(sim, pairs, cfg.lam)
    d_ls = float(np.abs(dro.weighted_subgradient_coeffs(kl1, losses)
                        - signed_coeffs(ls.w_pos, ls.w_neg)).max())

    ms_cfg = DroConfig(variant="ms-recovery", m=cfg.m, lam=cfg.lam, alpha=cfg.alpha, beta=cfg.beta,
                       c_pos=cfg.c_pos, c_neg=cfg.c_neg)
    r = ms_cfg.resolved()
    ms_dro = dro.solve_ms_recovery(losses, pairs, ms_cfg)
    ms = ms_weights(sim, pairs, 1.0 / r["gamma_pos"], 1.0 / r["gamma_neg"], lam=r["c_pos"],
                    lam_neg=r["c_neg"])
    d_ms = float(np.abs(ms_dro.weights - (ms.w_pos + ms.w_neg)).max())

    klg = dro.solve_kl_grouped(losses, pairs, cfg.gamma, cfg.gamma)
    hp, hn = hap2s_e_weights(sim, pairs, cfg.gamma)
    d_hap = float(np.abs(klg.weights - (hp + hn)).max())

    return EquivalenceReport("ok", d_ls, d_ms, d_hap, tol, d_ls <= tol, d_ms <= tol, d_hap <= tol,
                             cfg.gamma, min_loss)
