"""LSTM baseline for next-response prediction, plus the hybrid variant
whose input concatenates a correctness encoding with frozen skill vectors
learned elsewhere.

The output layer maps the hidden state to one logit per skill; trial t
scores element e_{t+1} of that vector against c_{t+1}. Training plumbing
(masking, loss, Adam) is shared with the query model through the same
forward/backward protocol.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .metrics import P_CLAMP, TrialResult, binary_cross_entropy
from .model import Params, batch_arrays, lstm_cell, lstm_cell_backward
from .ops import dropout_mask, sigmoid

_INPUT_MODES = ("onehot", "hybrid")
_HYBRID_ENCODINGS = ("correctness", "signed")


@dataclass(frozen=True)
class DktConfig:
    """num_skills N and hidden width H; input_mode selects the plain 2N
    one-hot response encoding or the hybrid N+d concatenation that needs a
    skill-vector table."""

    num_skills: int
    hidden: int = 32
    keep_prob: float = 0.6
    input_mode: str = "onehot"
    hybrid_encoding: str = "correctness"

    def __post_init__(self):
        if self.num_skills < 2:
            raise ValueError(f"num_skills must be >= 2, got {self.num_skills}")
        if self.hidden < 1:
            raise ValueError(f"hidden must be positive, got {self.hidden}")
        if not 0.0 < self.keep_prob <= 1.0:
            raise ValueError(f"keep_prob must be in (0, 1], got {self.keep_prob}")
        if self.input_mode not in _INPUT_MODES:
            raise ValueError(f"input_mode must be one of {_INPUT_MODES}, got {self.input_mode!r}")
        if self.hybrid_encoding not in _HYBRID_ENCODINGS:
            raise ValueError(
                f"hybrid_encoding must be one of {_HYBRID_ENCODINGS}, "
                f"got {self.hybrid_encoding!r}"
            )


def dkt_kqn_input(response, skill_table: np.ndarray, encoding: str = "correctness") -> np.ndarray:
    """Hybrid input vector of length N + d for one response.

    First N entries: the correctness flag written at index skill-1
    ("correctness" encoding; a wrong answer leaves the block zero) or +/-1
    there ("signed"). Last d entries: the frozen skill vector row.
    """
    table = np.asarray(skill_table, dtype=float)
    n = table.shape[0]
    if not 1 <= response.skill <= n:
        raise ValueError(f"skill {response.skill} missing from table of {n} skills")
    if encoding not in _HYBRID_ENCODINGS:
        raise ValueError(f"encoding must be one of {_HYBRID_ENCODINGS}, got {encoding!r}")
    v = np.zeros(n + table.shape[1])
    if encoding == "correctness":
        v[response.skill - 1] = float(response.correct)
    else:
        v[response.skill - 1] = 1.0 if response.correct else -1.0
    v[n:] = table[response.skill - 1]
    return v


def init_params(config: DktConfig, input_dim: int, rng: np.random.Generator) -> Params:
    """Same scheme as the query model: uniform +/-1/sqrt(fan_in), zero
    biases, LSTM forget bias +1."""
    h, n = config.hidden, config.num_skills

    def uniform(rows, cols):
        lim = 1.0 / np.sqrt(cols)
        return rng.uniform(-lim, lim, size=(rows, cols))

    params: Params = {
        "rnn_wx": uniform(4 * h, input_dim),
        "rnn_wh": uniform(4 * h, h),
        "rnn_b": np.zeros(4 * h),
        "out_w": uniform(n, h),
        "out_b": np.zeros(n),
    }
    params["rnn_b"][h : 2 * h] = 1.0
    return params


@dataclass
class DktForward:
    """Batched forward outputs under the shared trainer protocol."""

    probs: np.ndarray
    targets: np.ndarray
    valid: np.ndarray
    cache: Optional[dict] = field(default=None, repr=False)

    @property
    def num_valid(self) -> int:
        return int(np.sum(self.valid))

    def loss_sum(self) -> float:
        if self.num_valid == 0:
            return 0.0
        return float(
            np.sum(binary_cross_entropy(self.probs[self.valid], self.targets[self.valid]))
        )


class DktModel:
    """Trainer-facing wrapper. In hybrid mode the skill table is data, not
    a parameter: gradients never touch it."""

    name = "dkt"

    def __init__(self, config: DktConfig, skill_table: Optional[np.ndarray] = None):
        self.config = config
        if config.input_mode == "hybrid":
            if skill_table is None:
                raise ValueError("hybrid input mode needs a skill-vector table")
            table = np.asarray(skill_table, dtype=float)
            if table.ndim != 2 or table.shape[0] != config.num_skills:
                raise ValueError(
                    f"skill table must have {config.num_skills} rows, got shape {table.shape}"
                )
            self.skill_table = table.copy()
        else:
            if skill_table is not None:
                raise ValueError("skill table is only used in hybrid input mode")
            self.skill_table = None

    @property
    def input_dim(self) -> int:
        if self.config.input_mode == "onehot":
            return 2 * self.config.num_skills
        return self.config.num_skills + self.skill_table.shape[1]

    def init_params(self, rng: np.random.Generator) -> Params:
        return init_params(self.config, self.input_dim, rng)

    def _inputs(self, skills, corrects, ok, j):
        """Input matrix for step j with invalid rows all zero."""
        cfg = self.config
        n = cfg.num_skills
        bsz = skills.shape[0]
        x = np.zeros((bsz, self.input_dim))
        rows = np.flatnonzero(ok)
        e = skills[rows, j]
        c = corrects[rows, j]
        if cfg.input_mode == "onehot":
            x[rows, e - 1 + c * n] = 1.0
        else:
            if cfg.hybrid_encoding == "correctness":
                x[rows, e - 1] = c
            else:
                x[rows, e - 1] = 2.0 * c - 1.0
            x[rows[:, None], n + np.arange(self.skill_table.shape[1])[None, :]] = (
                self.skill_table[e - 1]
            )
        return x

    def forward(self, params, skills, corrects, lengths, mode="eval", rng=None) -> DktForward:
        if mode not in ("train", "eval"):
            raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
        cfg = self.config
        if mode == "train" and cfg.keep_prob < 1.0 and rng is None:
            raise ValueError("train mode with dropout needs an rng")
        if skills.size and (skills.min() < 1 or skills.max() > cfg.num_skills):
            raise ValueError(
                f"skill ids must lie in 1..{cfg.num_skills}, "
                f"got range {skills.min()}..{skills.max()}"
            )
        hh = cfg.hidden
        bsz = len(lengths)
        s_steps = max(int(lengths.max()) - 1, 0) if bsz else 0

        probs = np.zeros((s_steps, bsz))
        targets = np.zeros((s_steps, bsz))
        valid = np.zeros((s_steps, bsz), dtype=bool)
        train = mode == "train"
        cache = {"cells": [], "masks": [], "hd": [], "q": []} if train else None

        h = np.zeros((bsz, hh))
        c_state = np.zeros((bsz, hh))
        wx, wh, b = params["rnn_wx"], params["rnn_wh"], params["rnn_b"]

        for j in range(s_steps):
            ok = j < lengths - 1
            x = self._inputs(skills, corrects, ok, j)
            h, c_state, cell_cache = lstm_cell(x, h, c_state, wx, wh, b)
            if train and cfg.keep_prob < 1.0:
                mask = dropout_mask((bsz, hh), cfg.keep_prob, rng)
            else:
                mask = np.ones((bsz, hh))
            hd = h * mask
            a = hd @ params["out_w"].T + params["out_b"]
            q = skills[:, j + 1]
            y = a[np.arange(bsz), q - 1]

            probs[j] = sigmoid(y)
            targets[j] = corrects[:, j + 1]
            valid[j] = ok
            if train:
                cache["cells"].append(cell_cache)
                cache["masks"].append(mask)
                cache["hd"].append(hd)
                cache["q"].append(q)

        return DktForward(probs=probs, targets=targets, valid=valid, cache=cache)

    def backward(self, params, fwd: DktForward) -> Params:
        if fwd.cache is None:
            raise ValueError("backward needs a forward pass run with mode='train'")
        cfg = self.config
        cache = fwd.cache
        s_steps, bsz = fwd.probs.shape

        interior = (fwd.probs > P_CLAMP) & (fwd.probs < 1.0 - P_CLAMP)
        dy = np.where(fwd.valid & interior, fwd.probs - fwd.targets, 0.0)

        grads = {k: np.zeros_like(v) for k, v in params.items()}
        dh_rec = np.zeros((bsz, cfg.hidden))
        dc_rec = np.zeros((bsz, cfg.hidden))
        wx, wh = params["rnn_wx"], params["rnn_wh"]

        for j in reversed(range(s_steps)):
            dyj = dy[j]
            q = cache["q"][j]
            hd = cache["hd"][j]
            mask = cache["masks"][j]

            np.add.at(grads["out_w"], q - 1, dyj[:, None] * hd)
            np.add.at(grads["out_b"], q - 1, dyj)
            dhd = dyj[:, None] * params["out_w"][q - 1]
            dh = dhd * mask + dh_rec

            dh_rec, dc_rec, dwx, dwh, db = lstm_cell_backward(
                dh, dc_rec, cache["cells"][j], wx, wh
            )
            grads["rnn_wx"] += dwx
            grads["rnn_wh"] += dwh
            grads["rnn_b"] += db
        return grads


def dkt_forward(
    seq,
    params: Params,
    config: DktConfig,
    mode: str = "eval",
    rng=None,
    skill_table: Optional[np.ndarray] = None,
) -> list[TrialResult]:
    """Score one sequence; returns a TrialResult per predicted trial."""
    if len(seq.responses) < 2:
        raise ValueError(
            f"sequence needs at least 2 responses to score, got {len(seq.responses)}"
        )
    model = DktModel(config, skill_table=skill_table)
    skills, corrects, lengths = batch_arrays([seq])
    fwd = model.forward(params, skills, corrects, lengths, mode=mode, rng=rng)
    return [
        TrialResult(prob=float(fwd.probs[j, 0]), target=int(fwd.targets[j, 0]))
        for j in range(fwd.probs.shape[0])
    ]
