"""Self-check suites behind ``dropairs verify``.

Each check returns a :class:`CheckResult`; the CLI prints one row per check.
"""

from dataclasses import dataclass

import numpy as np

from . import dro, oracle
from .core import DroConfig, EmbeddingBatch, PairLossMatrix, build_pair_system, similarity
from .losses import loss_matrix
from .model import EmbeddingModel, backward, forward
from .recovery import equivalence_report


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _loss_vectors(seed, count):
    rng = np.random.default_rng(seed)
    for t in range(count):
        n = (5, 16, 64)[t % 3]
        yield rng.uniform(0.0, 1.0, n)


def _as_losses(v):
    return PairLossMatrix(v, np.zeros_like(v))


def kl_objective(weights, loss, gamma):
    n = weights.size
    pos = weights > 0
    return float(weights @ loss) - gamma * float(np.sum(weights[pos] * np.log(n * weights[pos])))


def check_kl_oracle(seed=0, count=30, gammas=(0.01, 0.1, 1.0), tol=1e-8):
    worst = 0.0
    for v in _loss_vectors(seed, count):
        for g in gammas:
            w = dro.solve_kl(_as_losses(v), g)
            _, best = oracle.simplex_ascent(v, "kl", g)
            worst = max(worst, abs(kl_objective(w.weights, v, g) - best))
    return CheckResult("oracle-kl", bool(worst <= tol), f"max |objective gap| {worst:.3e} (tol {tol:g})")


def check_topk_oracle(seed=0, count=30):
    bad = 0
    for v in _loss_vectors(seed, count):
        for k in (1, 2, v.size // 2, v.size):
            if dro.solve_topk(_as_losses(v), k).robust_value != oracle.topk_oracle(v, k):
                bad += 1
    return CheckResult("oracle-topk", bad == 0, f"{bad} mismatches")


def check_chi2_oracle(seed=0, count=30, rhos=(0.05, 0.25, 1.0), tol=1e-4):
    worst = 0.0
    for v in _loss_vectors(seed, count):
        for rho in rhos:
            worst = max(worst, abs(dro.solve_chi2(_as_losses(v), rho).robust_value
                                   - oracle.chi2_oracle(v, rho)))
    return CheckResult("oracle-chi2", bool(worst <= tol), f"max gap {worst:.3e} (tol {tol:g})")


def check_chi2_identity(seed=0, count=30, rhos=(0.05, 0.25, 1.0), tol=1e-8):
    worst, used = 0.0, 0
    for v in _loss_vectors(seed, count):
        n = v.size
        for rho in rhos:
            w = dro.solve_chi2(_as_losses(v), rho)
            if w.weights.min() > 0:
                used += 1
                target = v.mean() + np.sqrt(2 * rho * v.var() / n)
                worst = max(worst, abs(w.robust_value - target))
    return CheckResult("chi2-identity", bool(used > 0 and worst <= tol),
                       f"{used} interior instances, max gap {worst:.3e}")


def random_batch(rng, b=8, d=4, classes=3):
    labels = rng.integers(0, classes, b)
    labels[:2] = labels[0]  # at least one positive pair
    return EmbeddingBatch.create(np.zeros((b, 1)), rng.standard_normal((b, d)), labels)


def check_recovery(seed=0, count=20, tol=1e-10):
    rng = np.random.default_rng(seed)
    worst = {"ls": 0.0, "ms": 0.0, "hap2s": 0.0}
    for t in range(count):
        cfg = DroConfig(variant="kl-grouped", m=2.0, gamma=(0.1, 0.5, 1.0)[t % 3])
        rep = equivalence_report(random_batch(rng), cfg, tol)
        if rep.status != "ok":
            return CheckResult("recovery", False, f"batch {t}: {rep.status}")
        worst["ls"] = max(worst["ls"], rep.ls_discrepancy)
        worst["ms"] = max(worst["ms"], rep.ms_discrepancy)
        worst["hap2s"] = max(worst["hap2s"], rep.hap2s_discrepancy)
    ok = all(v <= tol for v in worst.values())
    return CheckResult("recovery", ok, " ".join(f"{k}={v:.2e}" for k, v in worst.items()))


def robust_objective(model, x, labels, cfg, kind="margin"):
    """theta -> robust loss of a fixed batch, with the weights re-solved each call."""
    pairs = build_pair_system(labels)

    def fun(theta):
        batch = EmbeddingBatch(x, forward(model.with_params(theta), x), labels)
        return dro.solve(loss_matrix(similarity(batch), pairs, cfg, kind), pairs, cfg).robust_value
    return fun


def check_backward(seed=0, count=20, tol=1e-4):
    rng = np.random.default_rng(seed)
    variants = ("topk", "topk-pn", "kl", "kl-grouped")
    worst = 0.0
    done = 0
    attempts = 0
    while done < count and attempts < 50 * count:
        attempts += 1
        dim_in, dim_out = int(rng.integers(2, 9)), int(rng.integers(2, 9))
        b = int(rng.integers(4, 9))
        hidden = int(rng.choice([0, 5]))
        model = EmbeddingModel.init(dim_in, dim_out, hidden, seed=int(rng.integers(1 << 31)))
        x = rng.standard_normal((b, dim_in))
        labels = rng.integers(0, 2, b)
        labels[:2] = 0
        labels[2] = 1
        cfg = DroConfig(variant=variants[done % 4], K=4, gamma=0.5)
        batch = EmbeddingBatch(x, forward(model, x), labels)
        pairs = build_pair_system(labels)
        losses = loss_matrix(similarity(batch), pairs, cfg)
        z = cfg.m + pairs.y * (cfg.lam - pairs.gather(similarity(batch).values))
        if losses.n_active == 0 or np.any(np.abs(z) < 1e-3):
            continue
        w = dro.solve(losses, pairs, cfg)
        g = backward(model, x, pairs, dro.weighted_subgradient_coeffs(w, losses))
        fd = oracle.finite_diff_grad(robust_objective(model, x, labels, cfg), model.params())
        scale = max(np.abs(fd).max(), 1e-12)
        worst = max(worst, float(np.abs(g - fd).max() / scale))
        done += 1
    return CheckResult("backward-fd", done == count and worst <= tol,
                       f"{done} triples, max relative error {worst:.3e}")


def run_checks(seed=0):
    return [
        check_kl_oracle(seed),
        check_topk_oracle(seed),
        check_chi2_oracle(seed),
        check_chi2_identity(seed),
        check_recovery(seed),
        check_backward(seed),
    ]
