"""Tri-grapheme context expansion and question-driven decision-tree state
clustering.

A trigrapheme label is "left|center|right" with "#" marking a word/sample
boundary. Trees are grown per (center, state index) by greedily splitting on
membership questions about the left or right context, maximizing the pooled
single-Gaussian log-likelihood gain. Any context resolves through the tree,
so unseen trigraphemes are always covered.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .hmm import EmissionTable, Gmm, GraphemeModel, ModelSet, TrainStats, forward_backward

BOUNDARY = "#"
SEP = "|"


class TyingError(Exception):
    pass


class NoStats(TyingError):
    pass


class UnresolvableContext(TyingError):
    pass


@dataclass(frozen=True)
class Trigrapheme:
    left: str | None
    center: str
    right: str | None

    @property
    def label(self):
        l = self.left if self.left is not None else BOUNDARY
        r = self.right if self.right is not None else BOUNDARY
        return f"{l}{SEP}{self.center}{SEP}{r}"


def parse_tri_label(label: str) -> Trigrapheme:
    parts = label.split(SEP)
    if len(parts) != 3:
        raise ValueError(f"not a trigrapheme label: {label!r}")
    l, c, r = parts
    return Trigrapheme(None if l == BOUNDARY else l, c, None if r == BOUNDARY else r)


def is_tri_label(label: str) -> bool:
    return label.count(SEP) == 2


def expand_trigraphemes(transcript) -> list[Trigrapheme]:
    """Positional expansion with boundary markers at both ends."""
    transcript = list(transcript)
    if not transcript:
        raise ValueError("empty transcript")
    out = []
    for i, c in enumerate(transcript):
        left = transcript[i - 1] if i > 0 else None
        right = transcript[i + 1] if i + 1 < len(transcript) else None
        out.append(Trigrapheme(left, c, right))
    return out


def expand_labels(transcript) -> list[str]:
    return [t.label for t in expand_trigraphemes(transcript)]


@dataclass(frozen=True)
class Question:
    name: str
    side: str  # 'L' or 'R'
    members: frozenset

    def ask(self, tri: Trigrapheme) -> bool:
        ctx = tri.left if self.side == "L" else tri.right
        return (BOUNDARY if ctx is None else ctx) in self.members


def save_questions(questions) -> str:
    lines = [f"QS {q.name} {q.side} " + " ".join(sorted(q.members)) for q in questions]
    return "\n".join(lines) + "\n"


def load_questions(text: str) -> list[Question]:
    out = []
    for ln, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#!"):
            continue
        parts = line.split()
        if parts[0] != "QS" or len(parts) < 4 or parts[2] not in ("L", "R"):
            raise ValueError(f"bad question at line {ln}: {line!r}")
        out.append(Question(name=parts[1], side=parts[2], members=frozenset(parts[3:])))
    return out


# --- context statistics -------------------------------------------------------


@dataclass
class ContextStats:
    """Per (center, state index): occupancy and first/second moments keyed by
    (left, right) context."""

    dim: int
    table: dict = field(default_factory=dict)  # (center, k) -> {(l, r): [occ, sx, sxx]}

    def entry(self, center, k, left, right):
        slot = self.table.setdefault((center, k), {})
        key = (left, right)
        if key not in slot:
            slot[key] = [0.0, np.zeros(self.dim), np.zeros(self.dim)]
        return slot[key]


def collect_context_stats(modelset: ModelSet, corpus) -> ContextStats:
    """State-level posteriors from the mono models, attributed to the
    trigrapheme context of each transcript position."""
    stats = ContextStats(dim=modelset.dim)
    table = EmissionTable(modelset)
    for transcript, obs in corpus:
        tris = expand_trigraphemes(transcript)
        comp = modelset.composite(transcript)
        frames = obs.frames
        if frames.shape[0] < comp.n_states:
            continue
        from .hmm import _alpha_beta

        emis, _ = table.state_logliks(frames, comp.gmm_ids)
        alpha, beta, loglik = _alpha_beta(comp, emis)
        gamma = np.exp(alpha + beta - loglik)
        # map composite states to transcript positions
        pos = []
        for p, label in enumerate(transcript):
            ns = modelset.model_for(label).n_states
            pos.extend((p, k) for k in range(ns))
        occ = gamma.sum(axis=0)
        sx = gamma.T @ frames
        sxx = gamma.T @ (frames * frames)
        for s, (p, k) in enumerate(pos):
            tri = tris[p]
            slot = stats.entry(tri.center, k, tri.left, tri.right)
            slot[0] += occ[s]
            slot[1] += sx[s]
            slot[2] += sxx[s]
    return stats


# --- tree growth ---------------------------------------------------------------


@dataclass
class TreeNode:
    question: Question | None = None
    yes: "TreeNode | None" = None
    no: "TreeNode | None" = None
    leaf_id: int = -1
    occ: float = 0.0

    @property
    def is_leaf(self):
        return self.question is None


def _pooled(entries):
    occ = sum(e[0] for e in entries)
    sx = sum((e[1] for e in entries), start=np.zeros_like(entries[0][1]))
    sxx = sum((e[2] for e in entries), start=np.zeros_like(entries[0][2]))
    return occ, sx, sxx


def _gauss_loglik(occ, sx, sxx):
    """Log-likelihood of the pooled data under its own single Gaussian."""
    if occ <= 0:
        return 0.0
    mean = sx / occ
    var = np.maximum(sxx / occ - mean * mean, 1e-8)
    d = len(mean)
    return -0.5 * occ * (d * (1.0 + np.log(2.0 * np.pi)) + np.log(var).sum())


@dataclass
class TyingTree:
    """Per (center, state) question trees plus what tie_models needs to
    synthesize a model for any context."""

    trees: dict  # (center, k) -> TreeNode
    n_leaves: int
    center_transitions: dict  # center -> log transition matrix
    center_state_ids: dict  # center -> tuple of mono pool ids (for cloning)

    def resolve_leaf(self, center, k, left, right):
        node = self.trees.get((center, k))
        if node is None:
            raise UnresolvableContext(f"no tree for ({center!r}, state {k})")
        tri = Trigrapheme(left, center, right)
        while not node.is_leaf:
            node = node.yes if node.question.ask(tri) else node.no
        return node.leaf_id

    def resolve_model(self, modelset: ModelSet, label: str) -> GraphemeModel:
        if not is_tri_label(label):
            return None
        tri = parse_tri_label(label)
        ns = len(self.center_state_ids[tri.center])
        ids = tuple(self.resolve_leaf(tri.center, k, tri.left, tri.right) for k in range(ns))
        model = GraphemeModel(
            label=label,
            state_ids=ids,
            transitions=self.center_transitions[tri.center].copy(),
            owner=tri.center,
        )
        modelset.models[label] = model  # cache; serialized with the set
        return model

    def with_transitions(self, trans: dict) -> "TyingTree":
        merged = dict(self.center_transitions)
        merged.update(trans)
        return replace(self, center_transitions=merged)


def grow_tree(stats: ContextStats, questions, min_occupancy=100.0, min_gain=200.0) -> TyingTree:
    """Greedy likelihood-gain splitting, deterministic (first question in
    list order wins ties)."""
    if not stats.table:
        raise NoStats("no context statistics to cluster")
    trees = {}
    leaf_counter = [0]

    def build(contexts):
        entries = list(contexts.values())
        occ, sx, sxx = _pooled(entries)
        parent_ll = _gauss_loglik(occ, sx, sxx)
        best = None
        for q in questions:
            yes_keys = [key for key in contexts if q.ask(Trigrapheme(key[0], "", key[1]))]
            if not yes_keys or len(yes_keys) == len(contexts):
                continue
            yes_entries = [contexts[k] for k in yes_keys]
            y_occ, y_sx, y_sxx = _pooled(yes_entries)
            n_occ, n_sx, n_sxx = occ - y_occ, sx - y_sx, sxx - y_sxx
            if y_occ < min_occupancy or n_occ < min_occupancy:
                continue
            gain = _gauss_loglik(y_occ, y_sx, y_sxx) + _gauss_loglik(n_occ, n_sx, n_sxx) - parent_ll
            if gain >= min_gain and (best is None or gain > best[0] + 1e-12):
                best = (gain, q, set(yes_keys))
        node = TreeNode(occ=occ)
        if best is None:
            node.leaf_id = leaf_counter[0]
            leaf_counter[0] += 1
            return node
        _, q, yes_keys = best
        node.question = q
        node.yes = build({k: v for k, v in contexts.items() if k in yes_keys})
        node.no = build({k: v for k, v in contexts.items() if k not in yes_keys})
        return node

    for key in sorted(stats.table, key=lambda ck: (ck[0], ck[1])):
        trees[key] = build(stats.table[key])
    return TyingTree(trees=trees, n_leaves=leaf_counter[0], center_transitions={}, center_state_ids={})


def tie_models(modelset: ModelSet, tree: TyingTree) -> ModelSet:
    """Context-dependent set whose states are the tree leaves.

    Each leaf GMM starts as a clone of the mono (center, state) GMM, so a
    single-leaf tree behaves identically to the mono set; training then
    specializes the shared leaves.
    """
    center_transitions = {}
    center_state_ids = {}
    for label in modelset.alphabet:
        m = modelset.model_for(label)
        center_transitions[label] = m.transitions.copy()
        center_state_ids[label] = tuple(m.state_ids)
    tree = replace(tree, center_transitions=center_transitions, center_state_ids=center_state_ids)

    pool = [None] * tree.n_leaves

    def fill(center, k, node):
        if node.is_leaf:
            src = modelset.pool[modelset.model_for(center).state_ids[k]]
            pool[node.leaf_id] = Gmm(
                weights=src.weights.copy(),
                means=src.means.copy(),
                variances=src.variances.copy(),
            )
        else:
            fill(center, k, node.yes)
            fill(center, k, node.no)

    for (center, k), node in tree.trees.items():
        fill(center, k, node)
    if any(g is None for g in pool):
        raise UnresolvableContext("tree leaves not contiguous")

    return ModelSet(
        dim=modelset.dim,
        variance_floor=modelset.variance_floor.copy(),
        alphabet=modelset.alphabet,
        state_counts=dict(modelset.state_counts),
        pool=pool,
        models={},
        tying=tree,
    )


def prime_models(modelset: ModelSet, transcripts):
    """Resolve (and cache) every trigrapheme appearing in the transcripts."""
    for transcript in transcripts:
        for label in expand_labels(transcript):
            modelset.model_for(label)
    return modelset


# --- serialization --------------------------------------------------------------


def _node_to_dict(node: TreeNode):
    if node.is_leaf:
        return {"leaf": node.leaf_id, "occ": node.occ}
    return {
        "question": {"name": node.question.name, "side": node.question.side, "members": sorted(node.question.members)},
        "occ": node.occ,
        "yes": _node_to_dict(node.yes),
        "no": _node_to_dict(node.no),
    }


def _node_from_dict(d) -> TreeNode:
    if "leaf" in d:
        return TreeNode(leaf_id=int(d["leaf"]), occ=float(d.get("occ", 0.0)))
    q = d["question"]
    return TreeNode(
        question=Question(name=q["name"], side=q["side"], members=frozenset(q["members"])),
        occ=float(d.get("occ", 0.0)),
        yes=_node_from_dict(d["yes"]),
        no=_node_from_dict(d["no"]),
    )


def tying_to_dict(tree: TyingTree | None):
    if tree is None:
        return None
    return {
        "nLeaves": tree.n_leaves,
        "trees": {f"{c}:{k}": _node_to_dict(node) for (c, k), node in tree.trees.items()},
        "centerTransitions": {
            c: [[None if v == -np.inf else float(v) for v in row] for row in mat]
            for c, mat in tree.center_transitions.items()
        },
        "centerStateIds": {c: list(ids) for c, ids in tree.center_state_ids.items()},
    }


def tying_from_dict(d) -> TyingTree | None:
    if d is None:
        return None
    trees = {}
    for key, node in d["trees"].items():
        center, k = key.rsplit(":", 1)
        trees[(center, int(k))] = _node_from_dict(node)
    center_transitions = {
        c: np.array([[(-np.inf if v is None else v) for v in row] for row in mat])
        for c, mat in d["centerTransitions"].items()
    }
    return TyingTree(
        trees=trees,
        n_leaves=int(d["nLeaves"]),
        center_transitions=center_transitions,
        center_state_ids={c: tuple(ids) for c, ids in d["centerStateIds"].items()},
    )
