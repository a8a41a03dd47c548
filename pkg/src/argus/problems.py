"""Concrete bilevel instances: data hyper-cleaning on synthetic blobs, a
two-task continual-learning toy, and a quadratic oracle with a closed-form
lower solution for validation.

All instances use linear models and dense desk-scale data; generation is
fully determined by the seed.
"""
from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .core import BilevelProblem, ProblemDims, prox_l1
from .errors import InvalidArgumentError


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _ce_per_sample(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    return lse - shifted[np.arange(len(labels)), labels]


def _onehot(labels: np.ndarray, classes: int) -> np.ndarray:
    out = np.zeros((len(labels), classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _blobs(rng: np.random.Generator, count: int, d_f: int, classes: int,
           means: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    labels = rng.integers(0, classes, size=count)
    X = means[labels] + rng.standard_normal((count, d_f))
    return X, labels


# --------------------------------------------------------------------------
# quadratic validation oracle
# --------------------------------------------------------------------------

class QuadraticInstance(BilevelProblem):
    """Upper 0.5||x - y||^2, lower 0.5||y - B_i x - c_i||^2, optional tiny l1.

    The lower problem under consensus has the closed form
    y*(xbar) = mean_i(B_i xbar + c_i), which validates the estimator and the
    cut x-gradients.
    """

    def __init__(self, B: list[np.ndarray], c: list[np.ndarray], l1_weight: float = 0.0):
        N = len(B)
        m, n = B[0].shape
        if n != m:
            raise InvalidArgumentError("quadratic instance couples x and y directly; need n == m")
        super().__init__(ProblemDims(n=n, m=m, N=N))
        self.B = [np.asarray(b, dtype=np.float64) for b in B]
        self.c = [np.asarray(v, dtype=np.float64) for v in c]
        self.l1_weight = l1_weight

    def eval_G(self, i, x, y):
        d = x - y
        return 0.5 * float(d @ d)

    def grad_G_x(self, i, x, y):
        return x - y

    def grad_G_y(self, i, x, y):
        return y - x

    def _res(self, i, x, y):
        return y - self.B[i] @ x - self.c[i]

    def eval_g(self, i, x, y):
        r = self._res(i, x, y)
        return 0.5 * float(r @ r)

    def grad_g_x(self, i, x, y):
        return -self.B[i].T @ self._res(i, x, y)

    def grad_g_y(self, i, x, y):
        return self._res(i, x, y)

    def cross_jvp(self, i, x, y, v):
        return -self.B[i] @ v

    def eval_R(self, x):
        return self.l1_weight * float(np.abs(x).sum())

    def prox_R(self, v, s):
        return prox_l1(v, s * self.l1_weight) if self.l1_weight else super().prox_R(v, s)

    def eval_r(self, y):
        return self.l1_weight * float(np.abs(y).sum())

    def prox_r(self, v, s):
        return prox_l1(v, s * self.l1_weight) if self.l1_weight else super().prox_r(v, s)

    def closed_form_lower(self, x_bar: np.ndarray) -> np.ndarray:
        """Consensus minimizer of the lower sum at a consensus upper point."""
        return np.mean([b @ x_bar + c for b, c in zip(self.B, self.c)], axis=0)


def gen_quadratic(seed: int, N: int, n: int, m: int, l1_weight: float = 0.0,
                  spectral_cap: float = 1.6, init_scale: float = 0.0) -> QuadraticInstance:
    if n < 1 or m < 1 or N < 1:
        raise InvalidArgumentError("dims must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
    B, c = [], []
    for _ in range(N):
        A = rng.standard_normal((m, n))
        top = np.linalg.norm(A, 2)
        scale = spectral_cap * rng.uniform(0.5, 1.0) / max(top, 1e-12)
        B.append(A * scale)  # spectral norm <= spectral_cap < 2
        c.append(rng.standard_normal(m))
    inst = QuadraticInstance(B, c, l1_weight=l1_weight)
    inst.init_scale, inst.init_seed = init_scale, seed
    return inst


# --------------------------------------------------------------------------
# data hyper-cleaning
# --------------------------------------------------------------------------

@dataclass
class AgentSplit:
    X_tr: np.ndarray
    y_tr: np.ndarray
    corrupted: np.ndarray  # boolean mask over the train set
    X_val: np.ndarray
    y_val: np.ndarray


class HyperCleanInstance(BilevelProblem):
    """Per-sample weight learning against label corruption.

    Upper variable: one logit per training sample (sigmoid gives its weight).
    Lower variable: flattened linear softmax weights.  The lower objective is
    the weighted training cross-entropy plus an l1 term; the upper objective
    is the clean validation cross-entropy.
    """

    def __init__(self, splits: list[AgentSplit], classes: int, r_l1: float = 1e-3):
        n_train = splits[0].X_tr.shape[0]
        d_f = splits[0].X_tr.shape[1]
        super().__init__(ProblemDims(n=n_train, m=d_f * classes, N=len(splits)),
                         datasets=splits)
        self.classes = classes
        self.d_f = d_f
        self.r_l1 = r_l1

    def _W(self, w: np.ndarray) -> np.ndarray:
        return w.reshape(self.d_f, self.classes)

    def eval_G(self, i, x, y):
        s = self.datasets[i]
        return float(np.mean(_ce_per_sample(s.X_val @ self._W(y), s.y_val)))

    def grad_G_x(self, i, x, y):
        return np.zeros_like(x)

    def grad_G_y(self, i, x, y):
        s = self.datasets[i]
        P = _softmax(s.X_val @ self._W(y))
        G = s.X_val.T @ (P - _onehot(s.y_val, self.classes)) / len(s.y_val)
        return G.ravel()

    def eval_g(self, i, x, y):
        s = self.datasets[i]
        ce = _ce_per_sample(s.X_tr @ self._W(y), s.y_tr)
        return float(np.mean(_sigmoid(x) * ce))

    def grad_g_x(self, i, x, y):
        s = self.datasets[i]
        ce = _ce_per_sample(s.X_tr @ self._W(y), s.y_tr)
        sig = _sigmoid(x)
        return sig * (1.0 - sig) * ce / len(s.y_tr)

    def grad_g_y(self, i, x, y):
        s = self.datasets[i]
        P = _softmax(s.X_tr @ self._W(y))
        weighted = _sigmoid(x)[:, None] * (P - _onehot(s.y_tr, self.classes))
        return (s.X_tr.T @ weighted / len(s.y_tr)).ravel()

    def cross_jvp(self, i, x, y, v):
        s = self.datasets[i]
        P = _softmax(s.X_tr @ self._W(y))
        sig = _sigmoid(x)
        scale = sig * (1.0 - sig) * v
        return (s.X_tr.T @ (scale[:, None] * (P - _onehot(s.y_tr, self.classes)))
                / len(s.y_tr)).ravel()

    def eval_r(self, y):
        return self.r_l1 * float(np.abs(y).sum())

    def prox_r(self, v, s):
        return prox_l1(v, s * self.r_l1)

    def task_metric(self, x_block, y_block):
        accs = []
        for i, s in enumerate(self.datasets):
            pred = np.argmax(s.X_val @ self._W(y_block[i]), axis=1)
            accs.append(float(np.mean(pred == s.y_val)))
        return float(np.mean(accs))

    def separation_auc(self, x_block: np.ndarray) -> float:
        """Rank AUC of sample weights separating clean from corrupted samples
        (clean should score higher), pooled over agents."""
        scores, clean = [], []
        for i, s in enumerate(self.datasets):
            scores.append(_sigmoid(x_block[i]))
            clean.append(~s.corrupted)
        scores = np.concatenate(scores)
        clean = np.concatenate(clean)
        pos = scores[clean]
        neg = scores[~clean]
        if len(pos) == 0 or len(neg) == 0:
            return float("nan")
        wins = (pos[:, None] > neg[None, :]).sum() + 0.5 * (pos[:, None] == neg[None, :]).sum()
        return float(wins / (len(pos) * len(neg)))


def gen_hyperclean(seed: int, N: int = 10, d_f: int = 10, n_train: int = 100,
                   n_val: int = 100, classes: int = 3, corruption_rate: float = 0.3,
                   r_l1: float = 1e-3, mean_spread: float = 3.0,
                   shared_mask: bool = True, init_scale: float = 0.0) -> HyperCleanInstance:
    """Synthetic Gaussian-blob hyper-cleaning instance.

    shared_mask corrupts the same sample indices at every agent, which keeps
    the per-index weight vector meaningful under the upper-level consensus
    constraint (weights are averaged across agents); labels are still
    resampled independently per agent.
    """
    if classes < 2:
        raise InvalidArgumentError(f"need at least 2 classes, got {classes}")
    if not (0.0 <= corruption_rate < 1.0):
        raise InvalidArgumentError(f"corruption rate must be in [0, 1), got {corruption_rate}")
    # corruption uses its own substream so the underlying data is identical
    # across corruption rates (clean ablations share samples exactly)
    kids = np.random.SeedSequence(seed).spawn(2)
    rng = np.random.default_rng(kids[0])
    rng_corrupt = np.random.default_rng(kids[1])
    means = rng.standard_normal((classes, d_f)) * mean_spread
    n_corrupt = int(np.floor(corruption_rate * n_train))
    shared_idx = rng_corrupt.choice(n_train, size=n_corrupt, replace=False)
    splits = []
    for _ in range(N):
        X_tr, y_tr = _blobs(rng, n_train, d_f, classes, means)
        mask = np.zeros(n_train, dtype=bool)
        idx = shared_idx if shared_mask \
            else rng_corrupt.choice(n_train, size=n_corrupt, replace=False)
        mask[idx] = True
        for j in idx:
            wrong = [c for c in range(classes) if c != y_tr[j]]
            y_tr[j] = wrong[rng_corrupt.integers(0, classes - 1)]
        X_val, y_val = _blobs(rng, n_val, d_f, classes, means)
        splits.append(AgentSplit(X_tr=X_tr, y_tr=y_tr, corrupted=mask,
                                 X_val=X_val, y_val=y_val))
    inst = HyperCleanInstance(splits, classes=classes, r_l1=r_l1)
    inst.init_scale, inst.init_seed = init_scale, seed
    return inst


def dump_dataset(problem: HyperCleanInstance) -> str:
    """CSV dump of the per-agent splits (corrupted flag is 0 for validation)."""
    d_f = problem.d_f
    buf = io.StringIO()
    buf.write("agent,split,label,corrupted," + ",".join(f"f{k}" for k in range(d_f)) + "\n")
    for i, s in enumerate(problem.datasets):
        for X, y, corr, split in ((s.X_tr, s.y_tr, s.corrupted, "train"),
                                  (s.X_val, s.y_val, np.zeros(len(s.y_val), bool), "val")):
            for row in range(len(y)):
                feats = ",".join(repr(float(v)) for v in X[row])
                buf.write(f"{i},{split},{y[row]},{int(corr[row])},{feats}\n")
    return buf.getvalue()


def load_dataset(text: str) -> list[AgentSplit]:
    """Inverse of dump_dataset."""
    lines = text.strip().split("\n")
    header = lines[0].split(",")
    d_f = len(header) - 4
    per_agent: dict[int, dict[str, list]] = {}
    for line in lines[1:]:
        cells = line.split(",")
        agent, split, label, corr = int(cells[0]), cells[1], int(cells[2]), bool(int(cells[3]))
        feats = [float(v) for v in cells[4:4 + d_f]]
        bucket = per_agent.setdefault(agent, {"train": [], "val": []})
        bucket[split].append((feats, label, corr))
    splits = []
    for agent in sorted(per_agent):
        tr = per_agent[agent]["train"]
        va = per_agent[agent]["val"]
        splits.append(AgentSplit(
            X_tr=np.array([r[0] for r in tr]), y_tr=np.array([r[1] for r in tr]),
            corrupted=np.array([r[2] for r in tr]),
            X_val=np.array([r[0] for r in va]), y_val=np.array([r[1] for r in va])))
    return splits


# --------------------------------------------------------------------------
# continual learning toy
# --------------------------------------------------------------------------

@dataclass
class TaskPair:
    X_old: np.ndarray
    y_old: np.ndarray
    X_new: np.ndarray
    y_new: np.ndarray


class ContinualInstance(BilevelProblem):
    """Two sequential tasks: x holds the historical model, y the current one.

    The lower level fits the new task with a squared proximity pull toward the
    historical parameters; the upper level keeps the current model's outputs
    close to the historical model's on the old task (output cross-entropy).
    Both blocks carry an l1 term.
    """

    def __init__(self, tasks: list[TaskPair], classes: int, d_f: int,
                 prox_weight: float = 0.1, l1_weight: float = 1e-3):
        dim = d_f * classes
        super().__init__(ProblemDims(n=dim, m=dim, N=len(tasks)), datasets=tasks)
        self.classes = classes
        self.d_f = d_f
        self.prox_weight = prox_weight
        self.l1_weight = l1_weight

    def _W(self, w: np.ndarray) -> np.ndarray:
        return w.reshape(self.d_f, self.classes)

    def eval_G(self, i, x, y):
        t = self.datasets[i]
        p = _softmax(t.X_old @ self._W(x))
        logits_y = t.X_old @ self._W(y)
        shifted = logits_y - logits_y.max(axis=1, keepdims=True)
        log_q = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        return float(np.mean(-(p * log_q).sum(axis=1)))

    def grad_G_x(self, i, x, y):
        t = self.datasets[i]
        p = _softmax(t.X_old @ self._W(x))
        logits_y = t.X_old @ self._W(y)
        shifted = logits_y - logits_y.max(axis=1, keepdims=True)
        log_q = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        a = -log_q
        V = p * a - p * (p * a).sum(axis=1, keepdims=True)
        return (t.X_old.T @ V / len(t.y_old)).ravel()

    def grad_G_y(self, i, x, y):
        t = self.datasets[i]
        p = _softmax(t.X_old @ self._W(x))
        q = _softmax(t.X_old @ self._W(y))
        return (t.X_old.T @ (q - p) / len(t.y_old)).ravel()

    def eval_g(self, i, x, y):
        t = self.datasets[i]
        ce = float(np.mean(_ce_per_sample(t.X_new @ self._W(y), t.y_new)))
        d = x - y
        return ce + self.prox_weight * float(d @ d)

    def grad_g_x(self, i, x, y):
        return 2.0 * self.prox_weight * (x - y)

    def grad_g_y(self, i, x, y):
        t = self.datasets[i]
        P = _softmax(t.X_new @ self._W(y))
        ce_grad = (t.X_new.T @ (P - _onehot(t.y_new, self.classes)) / len(t.y_new)).ravel()
        return ce_grad + 2.0 * self.prox_weight * (y - x)

    def cross_jvp(self, i, x, y, v):
        return -2.0 * self.prox_weight * v

    def eval_R(self, x):
        return self.l1_weight * float(np.abs(x).sum())

    def prox_R(self, v, s):
        return prox_l1(v, s * self.l1_weight)

    def eval_r(self, y):
        return self.l1_weight * float(np.abs(y).sum())

    def prox_r(self, v, s):
        return prox_l1(v, s * self.l1_weight)

    def task_metric(self, x_block, y_block):
        accs = []
        for i, t in enumerate(self.datasets):
            pred = np.argmax(t.X_new @ self._W(y_block[i]), axis=1)
            accs.append(float(np.mean(pred == t.y_new)))
        return float(np.mean(accs))


def gen_continual(seed: int, N: int = 10, d_f: int = 8, classes: int = 3,
                  n_old: int = 80, n_new: int = 80, prox_weight: float = 0.1,
                  l1_weight: float = 1e-3, mean_spread: float = 2.0,
                  init_scale: float = 0.0) -> ContinualInstance:
    if d_f < 1 or classes < 2 or N < 1:
        raise InvalidArgumentError("dims must be >= 1 with at least 2 classes")
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
    means_old = rng.standard_normal((classes, d_f)) * mean_spread
    means_new = rng.standard_normal((classes, d_f)) * mean_spread
    tasks = []
    for _ in range(N):
        X_old, y_old = _blobs(rng, n_old, d_f, classes, means_old)
        X_new, y_new = _blobs(rng, n_new, d_f, classes, means_new)
        tasks.append(TaskPair(X_old=X_old, y_old=y_old, X_new=X_new, y_new=y_new))
    inst = ContinualInstance(tasks, classes=classes, d_f=d_f,
                             prox_weight=prox_weight, l1_weight=l1_weight)
    inst.init_scale, inst.init_seed = init_scale, seed
    return inst
