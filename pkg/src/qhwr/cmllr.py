"""Constrained MLLR feature transforms and writer-adaptive training.

One affine transform x' = A x + b per writer (a single regression class;
desk-scale data cannot support more). Estimation is the standard row-wise
iterative optimization of the auxiliary function

    Q(W) = beta log|det A| - 0.5 sum_i (w_i G_i w_i' - 2 w_i k_i')

over W = [A b], with per-dimension accumulators G_i, k_i built from
Gaussian-level posteriors of the writer's data under the current models.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .features import FeatureSequence
from .hmm import EmissionTable, ModelSet, PathInfeasible, TrainStats, _alpha_beta, baum_welch, forward_backward


class CmllrError(Exception):
    pass


class InsufficientData(CmllrError):
    pass


class SingularAccumulator(CmllrError):
    pass


@dataclass(frozen=True)
class CmllrTransform:
    a: np.ndarray  # (D, D)
    b: np.ndarray  # (D,)
    writer_id: str = ""

    def __post_init__(self):
        a = np.asarray(self.a, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or b.shape != (a.shape[0],):
            raise ValueError("transform shape mismatch")
        if abs(np.linalg.det(a)) <= 1e-12:
            raise ValueError("transform matrix is singular")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @classmethod
    def identity(cls, dim, writer_id=""):
        return cls(a=np.eye(dim), b=np.zeros(dim), writer_id=writer_id)

    def log_det(self):
        return float(np.linalg.slogdet(self.a)[1])


def apply_transform(tr: CmllrTransform, obs: FeatureSequence) -> FeatureSequence:
    frames = obs.frames
    if frames.shape[1] != tr.a.shape[0]:
        raise ValueError(f"dim mismatch: obs {frames.shape[1]} vs transform {tr.a.shape[0]}")
    return FeatureSequence(frames=frames @ tr.a.T + tr.b[None, :])


def _accumulate(modelset: ModelSet, corpus, tr: "CmllrTransform | None" = None):
    """Per-dimension CMLLR accumulators: posteriors from the (currently
    transformed) data, outer products over the original features."""
    d = modelset.dim
    table = EmissionTable(modelset)
    g_acc = np.zeros((d, d + 1, d + 1))
    k_acc = np.zeros((d, d + 1))
    beta = 0.0
    n_frames = 0
    for transcript, obs in corpus:
        frames = obs.frames
        comp = modelset.composite(transcript)
        if frames.shape[0] < comp.n_states:
            continue
        aligned = frames if tr is None else frames @ tr.a.T + tr.b[None, :]
        emis, comp_ll = table.state_logliks(aligned, comp.gmm_ids)
        alpha, bwd, loglik = _alpha_beta(comp, emis)
        gamma = np.exp(alpha + bwd - loglik)
        resp = np.exp(comp_ll - emis[:, :, None])
        post = gamma[:, :, None] * resp  # (T, S, M)
        inv_var = table.inv_var[comp.gmm_ids]  # (S, M, D)
        mean_iv = table.means[comp.gmm_ids] * inv_var
        a_td = np.einsum("tsm,smd->td", post, inv_var)
        b_td = np.einsum("tsm,smd->td", post, mean_iv)
        xi = np.concatenate([frames, np.ones((frames.shape[0], 1))], axis=1)
        g_acc += np.einsum("td,ti,tj->dij", a_td, xi, xi)
        k_acc += np.einsum("td,ti->di", b_td, xi)
        beta += frames.shape[0]
        n_frames += frames.shape[0]
    return g_acc, k_acc, beta, n_frames


def _auxiliary(w, g_acc, k_acc, beta):
    a = w[:, :-1]
    sign, logdet = np.linalg.slogdet(a)
    if sign == 0:
        return -np.inf
    q = beta * logdet
    for i in range(w.shape[0]):
        q -= 0.5 * w[i] @ g_acc[i] @ w[i] - w[i] @ k_acc[i]
    return float(q)


def estimate_cmllr(modelset: ModelSet, writer_corpus, iters=20, writer_id="", realign=2) -> CmllrTransform:
    """Row-wise iterative optimization; the auxiliary is non-decreasing per
    sweep. ``realign`` extra EM passes re-accumulate the statistics with the
    current transform so posteriors stop reflecting the unadapted mismatch.
    Requires at least D*(D+1) frames of adaptation data."""
    writer_corpus = list(writer_corpus)
    if not writer_corpus:
        raise InsufficientData("empty adaptation corpus")
    d = modelset.dim
    all_frames = np.concatenate([o.frames for _, o in writer_corpus], axis=0)
    # dims that are constant zero in the data (e.g. a reserved feature slot)
    # carry no information and would make every accumulator singular; they
    # are pinned to the identity after estimation
    inert = (np.abs(all_frames).max(axis=0) < 1e-10).nonzero()[0]
    tr = None
    for _ in range(realign + 1):
        g_acc, k_acc, beta, n_frames = _accumulate(modelset, writer_corpus, tr)
        if n_frames < d * (d + 1):
            raise InsufficientData(f"{n_frames} frames < required {d * (d + 1)}")
        for i in range(d):
            ridge = 1e-8 * np.trace(g_acc[i]) / (d + 1) + 1e-12
            g_acc[i][np.diag_indices(d + 1)] += ridge
        try:
            g_inv = [np.linalg.inv(g_acc[i]) for i in range(d)]
        except np.linalg.LinAlgError as e:
            raise SingularAccumulator(str(e)) from e

        w = np.concatenate([np.eye(d), np.zeros((d, 1))], axis=1)
        if tr is not None:
            w = np.concatenate([tr.a, tr.b[:, None]], axis=1)
        aux = _auxiliary(w, g_acc, k_acc, beta)
        for _ in range(iters):
            for i in range(d):
                a = w[:, :-1]
                cof = np.linalg.inv(a).T * np.linalg.det(a)
                p = np.concatenate([cof[i], [0.0]])
                a_q = float(p @ g_inv[i] @ p)
                b_q = float(p @ g_inv[i] @ k_acc[i])
                if a_q <= 0:
                    raise SingularAccumulator("non-positive quadratic coefficient")
                disc = np.sqrt(b_q * b_q + 4.0 * a_q * beta)
                best_row, best_val = None, -np.inf
                for alpha in ((-b_q + disc) / (2 * a_q), (-b_q - disc) / (2 * a_q)):
                    det_term = alpha * a_q + b_q
                    if det_term == 0:
                        continue
                    val = beta * np.log(abs(det_term)) - 0.5 * alpha * alpha * a_q
                    if val > best_val:
                        best_val = val
                        best_row = (alpha * p + k_acc[i]) @ g_inv[i]
                if best_row is None:
                    raise SingularAccumulator("no valid row update")
                w[i] = best_row
            new_aux = _auxiliary(w, g_acc, k_acc, beta)
            if new_aux < aux - 1e-6 * max(1.0, abs(aux)):
                raise AssertionError("CMLLR auxiliary decreased (defect)")
            if abs(new_aux - aux) < 1e-9 * max(1.0, abs(aux)):
                aux = new_aux
                break
            aux = new_aux
        a_new = w[:, :-1].copy()
        b_new = w[:, -1].copy()
        for i in inert:
            a_new[i, :] = 0.0
            a_new[:, i] = 0.0
            a_new[i, i] = 1.0
            b_new[i] = 0.0
        tr = CmllrTransform(a=a_new, b=b_new, writer_id=writer_id)
    return tr


def transformed_loglik(modelset: ModelSet, corpus, tr: CmllrTransform) -> float:
    """Adaptation-data log-likelihood under the transform, including the
    T log|det A| Jacobian term."""
    total = 0.0
    for transcript, obs in corpus:
        moved = apply_transform(tr, obs)
        try:
            ll, _ = forward_backward(modelset, transcript, moved, stats=TrainStats(modelset))
        except PathInfeasible:
            continue
        total += ll + len(moved.frames) * tr.log_det()
    return total


def writer_adaptive_train(modelset: ModelSet, corpus_by_writer, rounds=2, bw_iters=5, sweeps=20):
    """Alternate per-writer CMLLR estimation with model retraining on the
    transformed data. Returns (models, {writer: transform})."""
    writers = sorted(corpus_by_writer)
    if not writers:
        raise InsufficientData("no writers")
    transforms = {w: CmllrTransform.identity(modelset.dim, w) for w in writers}
    for _ in range(rounds):
        for w in writers:
            transforms[w] = estimate_cmllr(modelset, corpus_by_writer[w], iters=sweeps, writer_id=w)
        pooled = []
        for w in writers:
            tr = transforms[w]
            pooled.extend((t, apply_transform(tr, o)) for t, o in corpus_by_writer[w])
        modelset, _ = baum_welch(modelset, pooled, max_iter=bw_iters, rel_tol=1e-5)
    return modelset, transforms


# --- serialization ------------------------------------------------------------


def transform_to_dict(tr: CmllrTransform) -> dict:
    return {"writerId": tr.writer_id, "A": tr.a.tolist(), "b": tr.b.tolist()}


def transform_from_dict(d) -> CmllrTransform:
    return CmllrTransform(a=np.array(d["A"]), b=np.array(d["b"]), writer_id=d.get("writerId", ""))
