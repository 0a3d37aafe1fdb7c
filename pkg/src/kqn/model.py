"""Knowledge-query model: a recurrent encoder summarizes a response history
into a knowledge-state vector, a two-layer perceptron embeds each skill onto
the unit sphere, and their dot product is the logit for the next response.

All forward passes are batched over students with explicit validity masks;
backward passes are hand-derived and exact for the masked objective (the
cross-entropy summed over valid trials).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .metrics import P_CLAMP, TrialResult, binary_cross_entropy
from .ops import dropout_mask, l2_normalize_rows, l2_normalize_rows_backward, sigmoid

Params = dict[str, np.ndarray]

_RNN_KINDS = ("lstm", "gru")
# Gate blocks along axis 0 of the stacked recurrent weights.
_GATES = {"lstm": 4, "gru": 3}


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters.

    num_skills: N, skills are ids 1..N.
    dim: d, width of knowledge-state and skill vectors.
    rnn_kind: "lstm" or "gru".
    rnn_hidden: recurrent state width.
    mlp_hidden: hidden width of the skill encoder.
    keep_prob: dropout keep probability on the recurrent output (train only).
    """

    num_skills: int
    dim: int
    rnn_kind: str = "lstm"
    rnn_hidden: int = 32
    mlp_hidden: int = 32
    keep_prob: float = 0.6

    def __post_init__(self):
        if self.num_skills < 2:
            raise ValueError(f"num_skills must be >= 2, got {self.num_skills}")
        if self.dim < 1 or self.rnn_hidden < 1 or self.mlp_hidden < 1:
            raise ValueError("dim, rnn_hidden and mlp_hidden must be positive")
        if self.rnn_kind not in _RNN_KINDS:
            raise ValueError(f"rnn_kind must be one of {_RNN_KINDS}, got {self.rnn_kind!r}")
        if not 0.0 < self.keep_prob <= 1.0:
            raise ValueError(f"keep_prob must be in (0, 1], got {self.keep_prob}")


def init_params(config: ModelConfig, rng: np.random.Generator) -> Params:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero biases.

    The LSTM forget-gate bias starts at +1 so early training does not
    erase state before the gates have learned anything.
    """
    n, d = config.num_skills, config.dim
    h, m = config.rnn_hidden, config.mlp_hidden
    g = _GATES[config.rnn_kind]

    def uniform(rows, cols):
        lim = 1.0 / np.sqrt(cols)
        return rng.uniform(-lim, lim, size=(rows, cols))

    params: Params = {
        "rnn_wx": uniform(g * h, 2 * n),
        "rnn_wh": uniform(g * h, h),
        "rnn_b": np.zeros(g * h),
        "proj_w": uniform(d, h),
        "proj_b": np.zeros(d),
        "mlp_w0": uniform(m, n),
        "mlp_b0": np.zeros(m),
        "mlp_w1": uniform(d, m),
        "mlp_b1": np.zeros(d),
    }
    if config.rnn_kind == "lstm":
        params["rnn_b"][h : 2 * h] = 1.0
    return params


def zero_grads(params: Params) -> Params:
    return {k: np.zeros_like(v) for k, v in params.items()}


# ---------------------------------------------------------------------------
# Recurrent cells (batched: x is (B, 2N), states are (B, H))


def lstm_cell(x, h_prev, c_prev, wx, wh, b):
    """One LSTM step. Gate order along the stacked axis is i, f, g, o."""
    hh = h_prev.shape[1]
    pre = x @ wx.T + h_prev @ wh.T + b
    i = sigmoid(pre[:, :hh])
    f = sigmoid(pre[:, hh : 2 * hh])
    g = np.tanh(pre[:, 2 * hh : 3 * hh])
    o = sigmoid(pre[:, 3 * hh :])
    c = f * c_prev + i * g
    h = o * np.tanh(c)
    cache = (x, h_prev, c_prev, i, f, g, o, c)
    return h, c, cache


def lstm_cell_backward(dh, dc_next, cache, wx, wh):
    """Backward through one LSTM step.

    Returns (dh_prev, dc_prev, dwx, dwh, db). dh is the gradient arriving
    at h from this step's output, dc_next the one arriving at c from the
    following step.
    """
    x, h_prev, c_prev, i, f, g, o, c = cache
    tc = np.tanh(c)
    do = dh * tc
    dc = dc_next + dh * o * (1.0 - tc * tc)
    di = dc * g
    df = dc * c_prev
    dg = dc * i
    dc_prev = dc * f
    dpre = np.concatenate(
        [
            di * i * (1.0 - i),
            df * f * (1.0 - f),
            dg * (1.0 - g * g),
            do * o * (1.0 - o),
        ],
        axis=1,
    )
    dwx = dpre.T @ x
    dwh = dpre.T @ h_prev
    db = dpre.sum(axis=0)
    dh_prev = dpre @ wh
    return dh_prev, dc_prev, dwx, dwh, db


def gru_cell(x, h_prev, wx, wh, b):
    """One GRU step, candidate gated as tanh(Wx + U(r*h_prev)).

    Gate order along the stacked axis is r, z, n, and the new state is
    z*h_prev + (1-z)*n.
    """
    hh = h_prev.shape[1]
    a = x @ wx.T + b
    r = sigmoid(a[:, :hh] + h_prev @ wh[:hh].T)
    z = sigmoid(a[:, hh : 2 * hh] + h_prev @ wh[hh : 2 * hh].T)
    rh = r * h_prev
    n = np.tanh(a[:, 2 * hh :] + rh @ wh[2 * hh :].T)
    h = z * h_prev + (1.0 - z) * n
    cache = (x, h_prev, r, z, n)
    return h, cache


def gru_cell_backward(dh, cache, wx, wh):
    """Backward through one GRU step. Returns (dh_prev, dwx, dwh, db)."""
    x, h_prev, r, z, n = cache
    hh = h_prev.shape[1]
    dz = dh * (h_prev - n)
    dn = dh * (1.0 - z)
    dh_prev = dh * z

    dan = dn * (1.0 - n * n)
    rh = r * h_prev
    dwh_n = dan.T @ rh
    drh = dan @ wh[2 * hh :]
    dr = drh * h_prev
    dh_prev = dh_prev + drh * r

    dar = dr * r * (1.0 - r)
    daz = dz * z * (1.0 - z)
    dwh_r = dar.T @ h_prev
    dwh_z = daz.T @ h_prev
    dh_prev = dh_prev + dar @ wh[:hh] + daz @ wh[hh : 2 * hh]

    dpre = np.concatenate([dar, daz, dan], axis=1)
    dwx = dpre.T @ x
    dwh = np.concatenate([dwh_r, dwh_z, dwh_n], axis=0)
    db = dpre.sum(axis=0)
    return dh_prev, dwx, dwh, db


# ---------------------------------------------------------------------------
# Encoders


def encode_response(skill: int, correct: int, num_skills: int) -> np.ndarray:
    """One-hot response vector of length 2N: position skill-1 flags a wrong
    answer, position skill-1+N a correct one."""
    if not 1 <= skill <= num_skills:
        raise ValueError(f"skill must be in 1..{num_skills}, got {skill}")
    if correct not in (0, 1):
        raise ValueError(f"correct must be 0 or 1, got {correct}")
    x = np.zeros(2 * num_skills)
    x[skill - 1 + correct * num_skills] = 1.0
    return x


def encode_skill_table(params: Params):
    """Unit-sphere embeddings for every skill at once.

    Returns (table, cache): table is (N, d) with row e-1 the vector for
    skill e; cache feeds skill_table_backward.
    """
    z0 = params["mlp_w0"].T + params["mlp_b0"]
    a0 = np.maximum(z0, 0.0)
    z1 = a0 @ params["mlp_w1"].T + params["mlp_b1"]
    a1 = np.maximum(z1, 0.0)
    table, norms = l2_normalize_rows(a1)
    cache = {"z0": z0, "a0": a0, "z1": z1, "a1": a1, "norms": norms}
    return table, cache


def skill_table_backward(d_table: np.ndarray, cache: dict, params: Params) -> Params:
    """Gradients of the skill-encoder parameters given gradients on the
    full embedding table."""
    da1 = l2_normalize_rows_backward(d_table, cache["a1"], cache["norms"])
    dz1 = da1 * (cache["z1"] > 0)
    dw1 = dz1.T @ cache["a0"]
    db1 = dz1.sum(axis=0)
    da0 = dz1 @ params["mlp_w1"]
    dz0 = da0 * (cache["z0"] > 0)
    # Inputs to the first layer are the identity rows, so dw0 is just dz0
    # transposed and db0 its column sums.
    return {
        "mlp_w0": dz0.T,
        "mlp_b0": dz0.sum(axis=0),
        "mlp_w1": dw1,
        "mlp_b1": db1,
    }


def encode_skill(skill: int, params: Params) -> np.ndarray:
    """Unit-sphere embedding of a single skill id."""
    num_skills = params["mlp_w0"].shape[1]
    if not 1 <= skill <= num_skills:
        raise ValueError(f"skill must be in 1..{num_skills}, got {skill}")
    table, _ = encode_skill_table(params)
    return table[skill - 1]


# ---------------------------------------------------------------------------
# Query head

# Odds are reported from a probability nudged strictly inside (0, 1) so the
# ratio stays finite even for saturated predictions.
_ODDS_LO = 1e-300
_ODDS_HI = 1.0 - 2.0 ** -53


@dataclass(frozen=True)
class Prediction:
    """One query outcome: raw logit, probability, and odds p/(1-p)."""

    logit: float
    prob: float
    odds: float


def query(knowledge_state: np.ndarray, skill_vector: np.ndarray) -> Prediction:
    """Dot-product query of a knowledge state by a skill vector."""
    ks = np.asarray(knowledge_state, dtype=float)
    s = np.asarray(skill_vector, dtype=float)
    if ks.shape != s.shape or ks.ndim != 1:
        raise ValueError(
            f"knowledge state and skill vector must be 1-d with equal length, "
            f"got {ks.shape} and {s.shape}"
        )
    y = float(ks @ s)
    p = sigmoid(y)
    pc = min(max(p, _ODDS_LO), _ODDS_HI)
    return Prediction(logit=y, prob=p, odds=pc / (1.0 - pc))


# ---------------------------------------------------------------------------
# Batched sequence forward/backward


@dataclass
class BatchForward:
    """Everything produced by one batched forward pass.

    probs, targets, valid are (S, B) where S = max length - 1; position
    (j, b) is student b's prediction for trial j+1. knowledge_states is
    (S, B, d). cache is populated only in train mode.
    """

    probs: np.ndarray
    targets: np.ndarray
    valid: np.ndarray
    knowledge_states: np.ndarray
    skill_table: np.ndarray
    cache: Optional[dict] = field(default=None, repr=False)

    @property
    def num_valid(self) -> int:
        return int(np.sum(self.valid))

    def loss_sum(self) -> float:
        """Cross-entropy summed over valid trials."""
        if self.num_valid == 0:
            return 0.0
        return float(
            np.sum(binary_cross_entropy(self.probs[self.valid], self.targets[self.valid]))
        )


def batch_arrays(sequences):
    """Pad a list of response sequences into (skills, corrects, lengths).

    Padded cells hold skill 1 / correct 0; the validity mask built from
    lengths is what gives them meaning downstream.
    """
    lengths = np.array([len(seq.responses) for seq in sequences], dtype=int)
    t_max = int(lengths.max()) if len(lengths) else 0
    skills = np.ones((len(sequences), t_max), dtype=int)
    corrects = np.zeros((len(sequences), t_max), dtype=int)
    for b, seq in enumerate(sequences):
        for t, resp in enumerate(seq.responses):
            skills[b, t] = resp.skill
            corrects[b, t] = resp.correct
    return skills, corrects, lengths


def forward_batch(
    skills: np.ndarray,
    corrects: np.ndarray,
    lengths: np.ndarray,
    params: Params,
    config: ModelConfig,
    mode: str = "eval",
    rng: Optional[np.random.Generator] = None,
) -> BatchForward:
    """Run the recurrent encoder over a padded batch and query every
    next-trial skill.

    Student b contributes predictions for j in 0..lengths[b]-2; all other
    positions are masked out by `valid` and excluded from loss and
    gradients.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    if mode == "train" and config.keep_prob < 1.0 and rng is None:
        raise ValueError("train mode with dropout needs an rng")
    n, d, hh = config.num_skills, config.dim, config.rnn_hidden
    bsz = len(lengths)
    s_steps = max(int(lengths.max()) - 1, 0) if bsz else 0

    table, skill_cache = encode_skill_table(params)
    probs = np.zeros((s_steps, bsz))
    targets = np.zeros((s_steps, bsz))
    valid = np.zeros((s_steps, bsz), dtype=bool)
    kstates = np.zeros((s_steps, bsz, d))

    train = mode == "train"
    cache = (
        {"cells": [], "masks": [], "hd": [], "q": [], "s_sel": [], "skill": skill_cache}
        if train
        else None
    )

    h = np.zeros((bsz, hh))
    c = np.zeros((bsz, hh))
    hot = skills - 1 + corrects * n
    wx, wh, b = params["rnn_wx"], params["rnn_wh"], params["rnn_b"]

    for j in range(s_steps):
        ok = j < lengths - 1
        x = np.zeros((bsz, 2 * n))
        x[np.flatnonzero(ok), hot[ok, j]] = 1.0
        if config.rnn_kind == "lstm":
            h, c, cell_cache = lstm_cell(x, h, c, wx, wh, b)
        else:
            h, cell_cache = gru_cell(x, h, wx, wh, b)
        if train and config.keep_prob < 1.0:
            mask = dropout_mask((bsz, hh), config.keep_prob, rng)
        else:
            mask = np.ones((bsz, hh))
        hd = h * mask
        ks = hd @ params["proj_w"].T + params["proj_b"]
        q = skills[:, j + 1]
        s_sel = table[q - 1]
        y = np.sum(ks * s_sel, axis=1)

        probs[j] = sigmoid(y)
        targets[j] = corrects[:, j + 1]
        valid[j] = ok
        kstates[j] = ks
        if train:
            cache["cells"].append(cell_cache)
            cache["masks"].append(mask)
            cache["hd"].append(hd)
            cache["q"].append(q)
            cache["s_sel"].append(s_sel)

    return BatchForward(
        probs=probs,
        targets=targets,
        valid=valid,
        knowledge_states=kstates,
        skill_table=table,
        cache=cache,
    )


def backward_batch(fwd: BatchForward, params: Params, config: ModelConfig) -> Params:
    """Exact gradients of fwd.loss_sum() with respect to every parameter.

    Trials whose clamped probability sits on a clamp boundary contribute
    zero gradient, matching the piecewise-flat loss there.
    """
    if fwd.cache is None:
        raise ValueError("backward needs a forward pass run with mode='train'")
    cache = fwd.cache
    n, d, hh = config.num_skills, config.dim, config.rnn_hidden
    s_steps, bsz = fwd.probs.shape

    interior = (fwd.probs > P_CLAMP) & (fwd.probs < 1.0 - P_CLAMP)
    dy = np.where(fwd.valid & interior, fwd.probs - fwd.targets, 0.0)

    grads = zero_grads(params)
    d_table = np.zeros((n, d))
    dh_rec = np.zeros((bsz, hh))
    dc_rec = np.zeros((bsz, hh))
    wx, wh = params["rnn_wx"], params["rnn_wh"]

    for j in reversed(range(s_steps)):
        dyj = dy[j]
        ks = fwd.knowledge_states[j]
        s_sel = cache["s_sel"][j]
        q = cache["q"][j]
        hd = cache["hd"][j]
        mask = cache["masks"][j]

        dks = dyj[:, None] * s_sel
        np.add.at(d_table, q - 1, dyj[:, None] * ks)
        grads["proj_w"] += dks.T @ hd
        grads["proj_b"] += dks.sum(axis=0)
        dh = (dks @ params["proj_w"]) * mask + dh_rec

        if config.rnn_kind == "lstm":
            dh_rec, dc_rec, dwx, dwh, db = lstm_cell_backward(
                dh, dc_rec, cache["cells"][j], wx, wh
            )
        else:
            dh_rec, dwx, dwh, db = gru_cell_backward(dh, cache["cells"][j], wx, wh)
        grads["rnn_wx"] += dwx
        grads["rnn_wh"] += dwh
        grads["rnn_b"] += db

    grads.update(skill_table_backward(d_table, cache["skill"], params))
    return grads


def forward_sequence(seq, params: Params, config: ModelConfig, mode: str = "eval", rng=None):
    """Forward one response sequence; returns (trials, batch_forward)."""
    if len(seq.responses) < 2:
        raise ValueError(
            f"sequence needs at least 2 responses to score, got {len(seq.responses)}"
        )
    skills, corrects, lengths = batch_arrays([seq])
    fwd = forward_batch(skills, corrects, lengths, params, config, mode=mode, rng=rng)
    trials = [
        TrialResult(prob=float(fwd.probs[j, 0]), target=int(fwd.targets[j, 0]))
        for j in range(fwd.probs.shape[0])
    ]
    return trials, fwd


def total_loss(trials) -> float:
    """Cross-entropy summed over trials; 0.0 for an empty list."""
    if not trials:
        return 0.0
    probs = np.array([t.prob for t in trials])
    targets = np.array([t.target for t in trials])
    return float(np.sum(binary_cross_entropy(probs, targets)))


class KqnModel:
    """Trainer-facing wrapper pairing a config with the functional core."""

    name = "kqn"

    def __init__(self, config: ModelConfig):
        self.config = config

    def init_params(self, rng: np.random.Generator) -> Params:
        return init_params(self.config, rng)

    def forward(self, params, skills, corrects, lengths, mode="eval", rng=None) -> BatchForward:
        return forward_batch(skills, corrects, lengths, params, self.config, mode=mode, rng=rng)

    def backward(self, params, fwd: BatchForward) -> Params:
        return backward_batch(fwd, params, self.config)
