"""Shared oracles and finite-difference machinery.

Every oracle here is an independent re-derivation of the quantity under
test (pair counting for AUC, contingency tables for ARI, Prim's MST for
single linkage, explicit loops elsewhere). Tests compare the fast library
implementations against these.
"""

import numpy as np

# ---------------------------------------------------------------------------
# Finite differences


def finite_diff(f, x, eps=1e-5):
    """Central-difference gradient of scalar f(x), elementwise.

    Works on a private copy of x; f receives the perturbed copy."""
    x = np.array(x, dtype=float)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = f(x)
        flat[i] = orig - eps
        lo = f(x)
        flat[i] = orig
        gf[i] = (hi - lo) / (2.0 * eps)
    return g


def max_rel_err(numeric, analytic, floor=1e-6):
    """Max elementwise |num - ana| / max(floor, |num|, |ana|)."""
    numeric = np.asarray(numeric, dtype=float)
    analytic = np.asarray(analytic, dtype=float)
    denom = np.maximum(floor, np.maximum(np.abs(numeric), np.abs(analytic)))
    return float(np.max(np.abs(numeric - analytic) / denom))


# ---------------------------------------------------------------------------
# Shared gradient-check instance: two short sequences, tiny dims, dropout
# off. The init seed is chosen so every skill-MLP pre-activation magnitude
# exceeds 1e-3 and every pre-normalization row norm exceeds 1e-2 for both
# cell kinds; relu and the normalizer's uniform fallback both have kinks
# with exact-zero subgradients, and central differences at eps=1e-5 must
# stay on one side of them. The tests assert these margins.

GRAD_CHECK_DATA_SEED = 3
GRAD_CHECK_INIT_SEED = 5
GRAD_CHECK_EPS = 1e-5
GRAD_CHECK_FLOOR = 1e-3


def gradient_check_setup(rnn_kind):
    from kqn.data import ResponseSequence, StudentResponse
    from kqn.model import ModelConfig, batch_arrays, init_params

    config = ModelConfig(
        num_skills=5, dim=4, rnn_kind=rnn_kind, rnn_hidden=6, mlp_hidden=6, keep_prob=1.0
    )
    rng = np.random.default_rng(GRAD_CHECK_DATA_SEED)
    seqs = []
    for sid, steps in ((1, 8), (2, 6)):
        resp = tuple(
            StudentResponse(int(rng.integers(1, 6)), int(rng.integers(0, 2)))
            for _ in range(steps)
        )
        seqs.append(ResponseSequence(student_id=sid, responses=resp))
    arrays = batch_arrays(seqs)
    params = init_params(config, np.random.default_rng(GRAD_CHECK_INIT_SEED))
    return config, params, arrays


def assert_gradient_margins(params):
    from kqn.model import encode_skill_table

    _, cache = encode_skill_table(params)
    assert min(np.min(np.abs(cache["z0"])), np.min(np.abs(cache["z1"]))) > 1e-3
    assert np.min(cache["norms"]) > 1e-2


def kqn_gradient_errors(rnn_kind):
    """Max relative FD error per parameter name, at the frozen instance."""
    from kqn.model import backward_batch, forward_batch

    config, params, (skills, corrects, lengths) = gradient_check_setup(rnn_kind)
    assert_gradient_margins(params)

    def loss(p):
        return forward_batch(skills, corrects, lengths, p, config, mode="eval").loss_sum()

    fwd = forward_batch(skills, corrects, lengths, params, config, mode="train")
    grads = backward_batch(fwd, params, config)
    errors = {}
    for key in sorted(params):
        def loss_with(arr, k=key):
            p2 = dict(params)
            p2[k] = arr
            return loss(p2)

        numeric = finite_diff(loss_with, params[key], GRAD_CHECK_EPS)
        errors[key] = max_rel_err(numeric, grads[key], floor=GRAD_CHECK_FLOOR)
    return errors


# ---------------------------------------------------------------------------
# AUC oracle: all-pairs counting with half credit for score ties


def auc_pairs(scores, labels):
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("need both classes")
    wins = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                wins += 1.0
            elif p == q:
                wins += 0.5
    return wins / (len(pos) * len(neg))


# ---------------------------------------------------------------------------
# ARI oracle: contingency table + comb2, straight from the definition


def _comb2(k):
    return k * (k - 1) / 2.0


def ari_contingency(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    ua = sorted(set(a.tolist()))
    ub = sorted(set(b.tolist()))
    table = np.zeros((len(ua), len(ub)))
    for i, x in enumerate(ua):
        for j, y in enumerate(ub):
            table[i, j] = np.sum((a == x) & (b == y))
    sum_cells = sum(_comb2(int(n)) for n in table.reshape(-1))
    sum_rows = sum(_comb2(int(n)) for n in table.sum(axis=1))
    sum_cols = sum(_comb2(int(n)) for n in table.sum(axis=0))
    total = _comb2(len(a))
    expected = sum_rows * sum_cols / total
    max_index = (sum_rows + sum_cols) / 2.0
    if max_index == expected:
        return 1.0
    return (sum_cells - expected) / (max_index - expected)


# ---------------------------------------------------------------------------
# Single-linkage oracle: sorted MST edge weights equal sorted merge heights


def mst_edge_weights(dist):
    dist = np.asarray(dist, dtype=float)
    n = dist.shape[0]
    in_tree = np.zeros(n, dtype=bool)
    in_tree[0] = True
    best = dist[0].copy()
    weights = []
    for _ in range(n - 1):
        best_masked = np.where(in_tree, np.inf, best)
        j = int(np.argmin(best_masked))
        weights.append(best_masked[j])
        in_tree[j] = True
        best = np.minimum(best, dist[j])
    return np.sort(np.array(weights))


# ---------------------------------------------------------------------------
# Random synthetic-style distance matrices and unit vectors


def random_distance_matrix(n, rng):
    pts = rng.normal(size=(n, 3))
    d = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2))
    return d


def random_unit_vectors(n, dim, rng):
    v = rng.normal(size=(n, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)
