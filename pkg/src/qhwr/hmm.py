"""Grapheme GMM-HMMs: left-to-right topology, log-domain forward-backward,
embedded Baum-Welch, Viterbi alignment and gradual mixture splitting.

Emission densities live in a shared pool so context-tied models can point
several states at one GMM. All recursions run in the log domain; transition
probabilities are floored away from 0/1 so paths never vanish.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .features import FeatureSequence
from .util import dump_canonical, logsumexp

LOG_2PI = float(np.log(2.0 * np.pi))
VALID_STATE_COUNTS = (3, 5, 7, 9)
_TRANS_FLOOR = 1e-3


class HmmError(Exception):
    pass


class BadStateCount(HmmError):
    pass


class DimMismatch(HmmError):
    pass


class PathInfeasible(HmmError):
    """Observation shorter than the composite's minimum path length."""


class EmptyCorpus(HmmError):
    pass


@dataclass
class Gmm:
    """Diagonal-covariance Gaussian mixture."""

    weights: np.ndarray  # (M,)
    means: np.ndarray  # (M, D)
    variances: np.ndarray  # (M, D)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.means = np.asarray(self.means, dtype=np.float64)
        self.variances = np.asarray(self.variances, dtype=np.float64)
        if self.means.shape != self.variances.shape or self.weights.shape[0] != self.means.shape[0]:
            raise ValueError("inconsistent mixture shapes")
        if (self.variances <= 0).any():
            raise ValueError("variances must be positive")
        if abs(self.weights.sum() - 1.0) > 1e-9 or (self.weights < 0).any():
            raise ValueError("weights must be a distribution")

    @property
    def n_components(self):
        return self.weights.shape[0]

    @property
    def dim(self):
        return self.means.shape[1]

    def log_norm(self):
        return -0.5 * (self.dim * LOG_2PI + np.log(self.variances).sum(axis=1))


def log_likelihood(gmm: Gmm, frame) -> float:
    """log sum_m w_m N(frame; mu_m, Sigma_m), via log-sum-exp."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape != (gmm.dim,):
        raise DimMismatch(f"frame dim {frame.shape} vs model dim {gmm.dim}")
    diff = frame[None, :] - gmm.means
    comp = gmm.log_norm() - 0.5 * (diff * diff / gmm.variances).sum(axis=1)
    with np.errstate(divide="ignore"):
        comp = comp + np.log(gmm.weights)
    return float(logsumexp(comp))


def _left_right_matrix(ns, self_prob=0.6):
    """(ns+2)^2 log transition matrix with entry/exit rows."""
    m = np.full((ns + 2, ns + 2), -np.inf)
    m[0, 1] = 0.0
    for i in range(1, ns + 1):
        m[i, i] = np.log(self_prob)
        m[i, i + 1] = np.log1p(-self_prob)
    m[ns + 1, ns + 1] = 0.0
    return m


@dataclass
class GraphemeModel:
    """Left-to-right HMM over pooled GMM states.

    ``owner`` names the transition-sharing unit: the center grapheme for
    context-dependent models, the label itself otherwise.
    """

    label: str
    state_ids: tuple[int, ...]
    transitions: np.ndarray  # (ns+2, ns+2) log probabilities
    owner: str = ""

    def __post_init__(self):
        if not self.owner:
            self.owner = self.label
        ns = len(self.state_ids)
        if self.transitions.shape != (ns + 2, ns + 2):
            raise ValueError("transition matrix shape mismatch")

    @property
    def n_states(self):
        return len(self.state_ids)

    def self_adv(self):
        ns = self.n_states
        idx = np.arange(1, ns + 1)
        return self.transitions[idx, idx], self.transitions[idx, idx + 1]


@dataclass
class Composite:
    """Transcript-level concatenation of grapheme models."""

    labels: tuple[str, ...]
    gmm_ids: np.ndarray  # (S,)
    log_self: np.ndarray  # (S,)
    log_adv: np.ndarray  # (S,)
    owners: list  # (owner_label, state_index) per composite state

    @property
    def n_states(self):
        return len(self.gmm_ids)


@dataclass
class ModelSet:
    """All grapheme models plus the shared emission pool."""

    dim: int
    variance_floor: np.ndarray  # (D,)
    alphabet: tuple[str, ...]
    state_counts: dict
    pool: list  # list[Gmm]
    models: dict  # label -> GraphemeModel
    tying: object = None  # TyingTree for context-dependent sets

    @property
    def context_dependent(self):
        return self.tying is not None

    def model_for(self, label) -> GraphemeModel:
        m = self.models.get(label)
        if m is None and self.tying is not None:
            m = self.tying.resolve_model(self, label)
        if m is None:
            raise KeyError(f"no model for label {label!r}")
        return m

    def composite(self, transcript) -> Composite:
        ids, lself, ladv, owners = [], [], [], []
        for label in transcript:
            m = self.model_for(label)
            s, a = m.self_adv()
            ids.extend(m.state_ids)
            lself.extend(s)
            ladv.extend(a)
            owners.extend((m.owner, k) for k in range(m.n_states))
        return Composite(
            labels=tuple(transcript),
            gmm_ids=np.array(ids, dtype=np.int64),
            log_self=np.array(lself),
            log_adv=np.array(ladv),
            owners=owners,
        )

    def max_components(self):
        return max(g.n_components for g in self.pool)


def build_models(alphabet, state_counts, global_mean, global_var, self_prob=0.6) -> ModelSet:
    """Flat start: every state a single Gaussian at the global statistics."""
    global_mean = np.asarray(global_mean, dtype=np.float64)
    global_var = np.asarray(global_var, dtype=np.float64)
    dim = global_mean.shape[0]
    default = state_counts.get("*", 5) if isinstance(state_counts, dict) else 5
    pool = []
    models = {}
    counts = {}
    for label in alphabet:
        ns = int(state_counts.get(label, default))
        if ns not in VALID_STATE_COUNTS:
            raise BadStateCount(f"state count {ns} for {label!r} not in {VALID_STATE_COUNTS}")
        counts[label] = ns
        ids = []
        for _ in range(ns):
            pool.append(
                Gmm(
                    weights=np.ones(1),
                    means=global_mean[None, :].copy(),
                    variances=np.maximum(global_var, 1e-12)[None, :].copy(),
                )
            )
            ids.append(len(pool) - 1)
        models[label] = GraphemeModel(
            label=label, state_ids=tuple(ids), transitions=_left_right_matrix(ns, self_prob)
        )
    floor = 1e-3 * np.maximum(global_var, 1e-12)
    return ModelSet(
        dim=dim,
        variance_floor=floor,
        alphabet=tuple(alphabet),
        state_counts=counts,
        pool=pool,
        models=models,
    )


def global_stats(corpus):
    """Per-dim mean/variance over all frames of (transcript, FeatureSequence)
    pairs (or bare FeatureSequences)."""
    frames = []
    for item in corpus:
        seq = item[1] if isinstance(item, tuple) else item
        frames.append(seq.frames)
    if not frames:
        raise EmptyCorpus("no frames for global statistics")
    allf = np.concatenate(frames, axis=0)
    return allf.mean(axis=0), np.maximum(allf.var(axis=0), 1e-8)


# --- emissions ----------------------------------------------------------------


class EmissionTable:
    """Padded stack of the pool for vectorized per-frame log densities."""

    def __init__(self, modelset: ModelSet):
        pool = modelset.pool
        p = len(pool)
        mmax = max(g.n_components for g in pool)
        d = modelset.dim
        self.means = np.zeros((p, mmax, d))
        self.inv_var = np.zeros((p, mmax, d))
        self.base = np.full((p, mmax), -np.inf)  # log w + log norm
        for i, g in enumerate(pool):
            m = g.n_components
            self.means[i, :m] = g.means
            self.inv_var[i, :m] = 1.0 / g.variances
            with np.errstate(divide="ignore"):
                self.base[i, :m] = np.log(g.weights) + g.log_norm()
        self.mmax = mmax

    def component_logliks(self, obs, ids):
        """(T, len(ids), Mmax) per-component log densities (padded -inf)."""
        diff = obs[:, None, None, :] - self.means[ids][None]
        sq = np.einsum("tumd,umd->tum", diff * diff, self.inv_var[ids])
        return self.base[ids][None] - 0.5 * sq

    def state_logliks(self, obs, ids):
        comp = self.component_logliks(obs, ids)
        emis = logsumexp(comp, axis=2)
        return emis, comp


# --- statistics ----------------------------------------------------------------


class TrainStats:
    """EM sufficient statistics over the emission pool and transitions."""

    def __init__(self, modelset: ModelSet):
        p = len(modelset.pool)
        mmax = modelset.max_components()
        d = modelset.dim
        self.occ = np.zeros((p, mmax))
        self.x = np.zeros((p, mmax, d))
        self.xx = np.zeros((p, mmax, d))
        self.trans = {}  # owner -> (self_counts, adv_counts)
        self.total_loglik = 0.0
        self.n_frames = 0
        self.n_samples = 0
        self.n_skipped = 0

    def add(self, other: "TrainStats"):
        self.occ += other.occ
        self.x += other.x
        self.xx += other.xx
        for k, (s, a) in other.trans.items():
            if k in self.trans:
                self.trans[k][0][:] += s
                self.trans[k][1][:] += a
            else:
                self.trans[k] = [s.copy(), a.copy()]
        self.total_loglik += other.total_loglik
        self.n_frames += other.n_frames
        self.n_samples += other.n_samples
        self.n_skipped += other.n_skipped
        return self


def _check_obs(modelset, obs):
    frames = obs.frames if isinstance(obs, FeatureSequence) else np.asarray(obs, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[1] != modelset.dim:
        raise DimMismatch(f"observation dim {frames.shape} vs model dim {modelset.dim}")
    return frames


def _alpha_beta(comp: Composite, emis):
    t_len, s_len = emis.shape
    alpha = np.full((t_len, s_len), -np.inf)
    alpha[0, 0] = emis[0, 0]
    for t in range(1, t_len):
        stay = alpha[t - 1] + comp.log_self
        move = np.empty(s_len)
        move[0] = -np.inf
        move[1:] = alpha[t - 1, :-1] + comp.log_adv[:-1]
        alpha[t] = emis[t] + np.logaddexp(stay, move)
    loglik = alpha[-1, -1] + comp.log_adv[-1]
    beta = np.full((t_len, s_len), -np.inf)
    beta[-1, -1] = comp.log_adv[-1]
    for t in range(t_len - 2, -1, -1):
        stay = comp.log_self + emis[t + 1] + beta[t + 1]
        move = np.empty(s_len)
        move[-1] = -np.inf
        move[:-1] = comp.log_adv[:-1] + emis[t + 1, 1:] + beta[t + 1, 1:]
        beta[t] = np.logaddexp(stay, move)
    return alpha, beta, float(loglik)


def forward_backward(modelset: ModelSet, transcript, obs, stats: TrainStats | None = None, weight=1.0, table=None):
    """Log-domain forward-backward over the concatenated composite.

    Accumulates occupancy / moment / transition statistics into ``stats``
    (a fresh TrainStats if not given) scaled by ``weight`` (may be negative
    for discriminative denominators). Returns (loglik, stats).
    """
    if not transcript:
        raise EmptyCorpus("empty transcript")
    frames = _check_obs(modelset, obs)
    comp = modelset.composite(transcript)
    t_len, s_len = frames.shape[0], comp.n_states
    if t_len < s_len:
        raise PathInfeasible(f"T={t_len} < minimum path length {s_len}")
    table = table or EmissionTable(modelset)
    emis, comp_ll = table.state_logliks(frames, comp.gmm_ids)
    alpha, beta, loglik = _alpha_beta(comp, emis)
    if not np.isfinite(loglik):
        raise PathInfeasible("no feasible path (zero-probability observation)")
    stats = stats if stats is not None else TrainStats(modelset)

    log_gamma = alpha + beta - loglik
    gamma = np.exp(log_gamma)
    # component responsibilities within each state
    resp = np.exp(comp_ll - emis[:, :, None])
    post = gamma[:, :, None] * resp * weight
    occ_sm = post.sum(axis=0)
    x_sm = np.einsum("tsm,td->smd", post, frames)
    xx_sm = np.einsum("tsm,td->smd", post, frames * frames)
    mm = occ_sm.shape[1]
    np.add.at(stats.occ[:, :mm], comp.gmm_ids, occ_sm)
    np.add.at(stats.x[:, :mm], comp.gmm_ids, x_sm)
    np.add.at(stats.xx[:, :mm], comp.gmm_ids, xx_sm)

    # transition events
    if t_len > 1:
        self_ev = np.exp(alpha[:-1] + comp.log_self[None, :] + emis[1:] + beta[1:] - loglik).sum(axis=0)
        adv_ev = np.zeros(s_len)
        adv_ev[:-1] = np.exp(
            alpha[:-1, :-1] + comp.log_adv[None, :-1] + emis[1:, 1:] + beta[1:, 1:] - loglik
        ).sum(axis=0)
    else:
        self_ev = np.zeros(s_len)
        adv_ev = np.zeros(s_len)
    adv_ev[-1] += 1.0  # exit event
    for s, (owner, k) in enumerate(comp.owners):
        if owner not in stats.trans:
            ns = modelset.state_counts.get(owner)
            if ns is None:
                ns = len(modelset.model_for(owner).state_ids) if owner in modelset.models else k + 1
            size = max(ns, k + 1)
            stats.trans[owner] = [np.zeros(size), np.zeros(size)]
        sc, ac = stats.trans[owner]
        if k >= len(sc):
            sc.resize(k + 1, refcheck=False)
            ac.resize(k + 1, refcheck=False)
        sc[k] += weight * self_ev[s]
        ac[k] += weight * adv_ev[s]

    stats.total_loglik += weight * loglik
    stats.n_frames += t_len
    stats.n_samples += 1
    return loglik, stats


def viterbi_align(modelset: ModelSet, transcript, obs, table=None):
    """Max-probability monotone path through the composite.

    Returns (loglik, path) where path[t] is the composite state index; the
    composite's owners list maps indices back to (grapheme, state).
    """
    if not transcript:
        raise EmptyCorpus("empty transcript")
    frames = _check_obs(modelset, obs)
    comp = modelset.composite(transcript)
    t_len, s_len = frames.shape[0], comp.n_states
    if t_len < s_len:
        raise PathInfeasible(f"T={t_len} < minimum path length {s_len}")
    table = table or EmissionTable(modelset)
    emis, _ = table.state_logliks(frames, comp.gmm_ids)
    delta = np.full(s_len, -np.inf)
    delta[0] = emis[0, 0]
    back = np.zeros((t_len, s_len), dtype=np.int8)
    for t in range(1, t_len):
        stay = delta + comp.log_self
        move = np.empty(s_len)
        move[0] = -np.inf
        move[1:] = delta[:-1] + comp.log_adv[:-1]
        back[t] = move > stay
        delta = emis[t] + np.maximum(stay, move)
    loglik = float(delta[-1] + comp.log_adv[-1])
    if not np.isfinite(loglik):
        raise PathInfeasible("no feasible path")
    path = np.empty(t_len, dtype=np.int64)
    s = s_len - 1
    for t in range(t_len - 1, -1, -1):
        path[t] = s
        if back[t, s]:
            s -= 1
    return loglik, path


def _m_step(modelset: ModelSet, stats: TrainStats, min_occ=1e-6):
    new_pool = []
    for i, g in enumerate(modelset.pool):
        m = g.n_components
        occ = stats.occ[i, :m]
        total = occ.sum()
        if total < min_occ:
            new_pool.append(g)
            continue
        safe = np.maximum(occ, 1e-12)[:, None]
        mean = stats.x[i, :m] / safe
        var = stats.xx[i, :m] / safe - mean * mean
        var = np.maximum(var, modelset.variance_floor[None, :])
        dead = occ < min_occ
        if dead.any():
            mean[dead] = g.means[dead]
            var[dead] = g.variances[dead]
        w = np.maximum(occ / total, 1e-8)
        w = w / w.sum()
        new_pool.append(Gmm(weights=w, means=mean, variances=var))
    new_models = {}
    new_trans = {}
    for owner, (sc, ac) in stats.trans.items():
        tot = sc + ac
        ok = tot > min_occ
        p_self = np.where(ok, sc / np.where(tot > 0, tot, 1.0), np.nan)
        new_trans[owner] = np.clip(p_self, _TRANS_FLOOR, 1 - _TRANS_FLOOR)
    for label, m in modelset.models.items():
        p_self = new_trans.get(m.owner)
        if p_self is None or np.isnan(p_self[: m.n_states]).any():
            new_models[label] = m
            continue
        ns = m.n_states
        mat = np.full((ns + 2, ns + 2), -np.inf)
        mat[0, 1] = 0.0
        idx = np.arange(1, ns + 1)
        mat[idx, idx] = np.log(p_self[:ns])
        mat[idx, idx + 1] = np.log1p(-p_self[:ns])
        mat[ns + 1, ns + 1] = 0.0
        new_models[label] = replace(m, transitions=mat)
    return replace(modelset, pool=new_pool, models=new_models)


def baum_welch(modelset: ModelSet, corpus, max_iter=20, rel_tol=1e-4, verbose=False):
    """Embedded ML re-estimation. Returns (models, per-iteration loglik).

    Samples whose observation is shorter than their composite are skipped
    (with a warning, counted in stats). Total loglik is non-decreasing up to
    numerical slack; stops early when the relative improvement < rel_tol.
    """
    corpus = list(corpus)
    if not corpus:
        raise EmptyCorpus("baum_welch on empty corpus")
    history = []
    for it in range(max_iter):
        table = EmissionTable(modelset)
        stats = TrainStats(modelset)
        for transcript, obs in corpus:
            try:
                forward_backward(modelset, transcript, obs, stats=stats, table=table)
            except PathInfeasible:
                stats.n_skipped += 1
        if stats.n_samples == 0:
            raise EmptyCorpus("every sample was infeasible")
        if stats.n_skipped and it == 0:
            warnings.warn(f"baum_welch skipped {stats.n_skipped} infeasible samples")
        history.append(stats.total_loglik)
        modelset = _m_step(modelset, stats)
        if len(history) >= 2:
            prev, cur = history[-2], history[-1]
            if abs(cur - prev) < rel_tol * abs(prev):
                break
        if verbose:
            print(f"  iter {it}: loglik {history[-1]:.3f}")
    return modelset, history


def corpus_loglik(modelset: ModelSet, corpus):
    table = EmissionTable(modelset)
    total = 0.0
    for transcript, obs in corpus:
        try:
            ll, _ = forward_backward(modelset, transcript, obs, stats=TrainStats(modelset), table=table)
            total += ll
        except PathInfeasible:
            pass
    return total


def split_mixtures(modelset: ModelSet, target_m, corpus, retrain_iters=5) -> ModelSet:
    """Double every mixture (mean +/- 0.2 sigma, halved weights) and retrain,
    repeating until each state has target_m components."""
    if target_m < 1 or (target_m & (target_m - 1)) != 0:
        raise ValueError("target mixture count must be a power of 2")
    while modelset.max_components() < target_m:
        pool = []
        for g in modelset.pool:
            sigma = np.sqrt(g.variances)
            means = np.concatenate([g.means + 0.2 * sigma, g.means - 0.2 * sigma])
            variances = np.concatenate([g.variances, g.variances])
            weights = np.concatenate([g.weights, g.weights]) / 2.0
            pool.append(Gmm(weights=weights, means=means, variances=variances))
        modelset = replace(modelset, pool=pool)
        modelset, _ = baum_welch(modelset, corpus, max_iter=retrain_iters, rel_tol=0.0)
    return modelset


# --- serialization --------------------------------------------------------------


def modelset_to_dict(ms: ModelSet) -> dict:
    from .tying import tying_to_dict  # local import to avoid a cycle

    return {
        "version": 1,
        "dim": ms.dim,
        "varianceFloor": ms.variance_floor.tolist(),
        "alphabet": list(ms.alphabet),
        "stateCounts": {k: int(v) for k, v in ms.state_counts.items()},
        "pool": [
            {
                "weights": g.weights.tolist(),
                "means": g.means.tolist(),
                "variances": g.variances.tolist(),
            }
            for g in ms.pool
        ],
        "models": {
            label: {
                "owner": m.owner,
                "states": list(m.state_ids),
                "transitions": _trans_to_list(m.transitions),
            }
            for label, m in ms.models.items()
        },
        "tying": tying_to_dict(ms.tying) if ms.tying is not None else None,
    }


def _trans_to_list(mat):
    return [[None if v == -np.inf else float(v) for v in row] for row in mat]


def _trans_from_list(rows):
    mat = np.array([[(-np.inf if v is None else v) for v in row] for row in rows], dtype=np.float64)
    return mat


def save_models(ms: ModelSet) -> bytes:
    return dump_canonical(modelset_to_dict(ms))


def load_models(data: bytes) -> ModelSet:
    from .tying import tying_from_dict

    doc = json.loads(data.decode("utf-8"))
    if doc.get("version") != 1:
        raise ValueError("unsupported model file version")
    pool = [
        Gmm(
            weights=np.array(g["weights"]),
            means=np.array(g["means"]),
            variances=np.array(g["variances"]),
        )
        for g in doc["pool"]
    ]
    models = {
        label: GraphemeModel(
            label=label,
            state_ids=tuple(m["states"]),
            transitions=_trans_from_list(m["transitions"]),
            owner=m["owner"],
        )
        for label, m in doc["models"].items()
    }
    return ModelSet(
        dim=int(doc["dim"]),
        variance_floor=np.array(doc["varianceFloor"]),
        alphabet=tuple(doc["alphabet"]),
        state_counts={k: int(v) for k, v in doc["stateCounts"].items()},
        pool=pool,
        models=models,
        tying=tying_from_dict(doc["tying"]) if doc.get("tying") else None,
    )
