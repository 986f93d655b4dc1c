"""Latent evolution model.

Each snapshot in a short window is tri-factorised as ``G_t ~ U_t C V_t`` with a
shared interaction matrix ``C``. Transition matrices ``A`` (k x k) and ``B``
(n x n) carry ``U_{t-1} -> U_t`` and ``V_{t-1} -> V_t``, and a long-term guide
``(U_lt, V_lt)`` fitted on a longer window anchors ``U_T A`` and ``V_T B``.
The joint loss is

    L = sum_t ||G_t - U_t C V_t||^2
        + lambda1 * sum_{t>=2} (||U_t - U_{t-1} A||^2 + ||V_t - V_{t-1} B||^2)
        + lambda2 * (||U_lt - U_T A||^2 + ||V_lt - V_T B||^2)

and is minimised with multiplicative updates, each of which cannot increase L.
The next snapshot is predicted as ``(U_T A) C (V_T B)``.

Time indices in this module are 0-based positions inside the window.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .graphseq import GraphSequence, GraphSnapshot, frobenius_distance

logger = logging.getLogger(__name__)


# updated entries are floored here; values decaying into the subnormal range
# slow every product that touches them
FLOOR = 1e-30
_TINY = 1e-300


def _mu(x: np.ndarray, num: np.ndarray, den: np.ndarray, delta: float) -> np.ndarray:
    out = x * num / (den + delta)
    np.maximum(out, FLOOR, out=out)
    return out


class NumericalError(RuntimeError):
    """The optimisation produced a non-finite loss."""


@dataclass(frozen=True)
class HyperParams:
    k: int = 16
    T: int = 3
    long_multiplier: int = 4
    lambda1: float = 0.5
    lambda2: float = 8.0
    epsilon: float = 1e-4
    max_iter: int = 200
    delta_guard: float = 1e-12

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if self.long_multiplier < 1:
            raise ValueError("long_multiplier must be >= 1")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("regularisers must be non-negative")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not self.delta_guard > 0:
            raise ValueError("delta_guard must be positive")

    @property
    def long_window(self) -> int:
        return self.long_multiplier * self.T

    def to_dict(self) -> dict:
        return {f: getattr(self, f) for f in self.__dataclass_fields__}


@dataclass
class LatentState:
    """Factors of one window: ``U`` (T of n x k), ``V`` (T of k x n), ``C``, ``A``, ``B``."""

    U: list[np.ndarray]
    V: list[np.ndarray]
    C: np.ndarray
    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        self.U = [np.asarray(u, dtype=float) for u in self.U]
        self.V = [np.asarray(v, dtype=float) for v in self.V]
        self.C = np.asarray(self.C, dtype=float)
        self.A = np.asarray(self.A, dtype=float)
        self.B = np.asarray(self.B, dtype=float)

    @property
    def T(self) -> int:
        return len(self.U)

    @property
    def n(self) -> int:
        return self.U[0].shape[0]

    @property
    def k(self) -> int:
        return self.U[0].shape[1]

    def copy(self) -> "LatentState":
        return LatentState([u.copy() for u in self.U], [v.copy() for v in self.V],
                           self.C.copy(), self.A.copy(), self.B.copy())

    def check(self) -> None:
        """Raise ``ValueError`` on a shape or sign violation."""
        n, k = self.n, self.k
        if len(self.V) != len(self.U):
            raise ValueError("U and V lists differ in length")
        for u, v in zip(self.U, self.V):
            if u.shape != (n, k) or v.shape != (k, n):
                raise ValueError(f"factor shape mismatch: U {u.shape}, V {v.shape}, expected ({n},{k})/({k},{n})")
        if self.C.shape != (k, k) or self.A.shape != (k, k) or self.B.shape != (n, n):
            raise ValueError("C, A must be k x k and B n x n")
        for m in (*self.U, *self.V, self.C, self.A, self.B):
            if np.any(m < 0):
                raise ValueError("negative entry in latent state")


@dataclass
class LongTermGuide:
    U_lt: np.ndarray
    V_lt: np.ndarray
    r: np.ndarray
    trace: list[float] = field(default_factory=list)


@dataclass(frozen=True)
class LossBreakdown:
    J: float
    Tterm: float
    H: float
    total: float


def _stack(seq) -> np.ndarray:
    if isinstance(seq, GraphSequence):
        return seq.stack()
    if isinstance(seq, GraphSnapshot):
        return seq.weights[None]
    g = np.asarray(seq, dtype=float)
    if g.ndim == 2:
        g = g[None]
    return g


def _sq(x: np.ndarray) -> float:
    return float(np.vdot(x, x))


def objective(seq, state: LatentState, guide: LongTermGuide | None, hp: HyperParams) -> LossBreakdown:
    """Evaluate the reconstruction, transition and long-term terms of the loss."""
    G = _stack(seq)
    if len(G) != state.T:
        raise ValueError(f"window has {len(G)} snapshots but state has {state.T}")
    if G.shape[1:] != (state.n, state.n):
        raise ValueError("snapshot shape does not match factors")
    U, V, C, A, B = state.U, state.V, state.C, state.A, state.B
    J = sum(_sq(G[t] - U[t] @ C @ V[t]) for t in range(state.T))
    Tt = sum(_sq(U[t] - U[t - 1] @ A) + _sq(V[t] - V[t - 1] @ B) for t in range(1, state.T))
    H = 0.0
    if guide is not None:
        H = _sq(guide.U_lt - U[-1] @ A) + _sq(guide.V_lt - V[-1] @ B)
    return LossBreakdown(J, Tt, H, J + hp.lambda1 * Tt + hp.lambda2 * H)


def total_loss(seq, state, guide, hp) -> float:
    return objective(seq, state, guide, hp).total


# -- multiplicative updates -------------------------------------------------
#
# Each rule is x <- x * Num / (Den + delta) where Num and Den are the negative
# and positive parts of the gradient of L in x. Neighbour terms that do not
# exist at the window boundary are dropped from both.


def update_U(state: LatentState, guide: LongTermGuide | None, seq, hp: HyperParams, t: int) -> np.ndarray:
    """Return the updated ``U_t`` (state is not modified)."""
    G = _stack(seq)
    return _update_U(state, guide, G[t], hp, t)


def _update_U(state, guide, Gt, hp, t):
    U, V, C, A = state.U, state.V, state.C, state.A
    last = state.T - 1
    Ut = U[t]
    CV = C @ V[t]
    num = Gt @ CV.T
    den = Ut @ (CV @ CV.T)
    if t > 0:
        num = num + hp.lambda1 * (U[t - 1] @ A)
        den = den + hp.lambda1 * Ut
    if t < last:
        num = num + hp.lambda1 * (U[t + 1] @ A.T)
        den = den + hp.lambda1 * (Ut @ A @ A.T)
    if t == last and guide is not None and hp.lambda2 > 0:
        num = num + hp.lambda2 * (guide.U_lt @ A.T)
        den = den + hp.lambda2 * (Ut @ A @ A.T)
    return _mu(Ut, num, den, hp.delta_guard)


def update_V(state: LatentState, guide: LongTermGuide | None, seq, hp: HyperParams, t: int) -> np.ndarray:
    """Return the updated ``V_t`` (state is not modified)."""
    G = _stack(seq)
    return _update_V(state, guide, G[t], hp, t)


def _update_V(state, guide, Gt, hp, t):
    U, V, C, B = state.U, state.V, state.C, state.B
    last = state.T - 1
    Vt = V[t]
    UC = U[t] @ C
    num = UC.T @ Gt
    den = (UC.T @ UC) @ Vt
    if t > 0:
        num = num + hp.lambda1 * (V[t - 1] @ B)
        den = den + hp.lambda1 * Vt
    if t < last or (t == last and guide is not None and hp.lambda2 > 0):
        VBBt = (Vt @ B) @ B.T
    if t < last:
        num = num + hp.lambda1 * (V[t + 1] @ B.T)
        den = den + hp.lambda1 * VBBt
    if t == last and guide is not None and hp.lambda2 > 0:
        num = num + hp.lambda2 * (guide.V_lt @ B.T)
        den = den + hp.lambda2 * VBBt
    return _mu(Vt, num, den, hp.delta_guard)


def _transition_update(X, Fs, target, lam1, lam2, delta):
    """Shared rule for A (on the U factors) and B (on the V factors).

    With ``prev``/``nxt`` the consecutive factors stacked along axis 0, the
    numerator is ``lam1 prev^T nxt + lam2 F_T^T target`` and the denominator
    ``lam1 prev^T (prev X) + lam2 F_T^T (F_T X)``.
    """
    num = np.zeros_like(X)
    den = np.zeros_like(X)
    used = False
    if lam1 > 0 and len(Fs) > 1:
        prev = np.concatenate(Fs[:-1], axis=0)
        nxt = np.concatenate(Fs[1:], axis=0)
        num += lam1 * (prev.T @ nxt)
        den += lam1 * (prev.T @ (prev @ X))
        used = True
    if lam2 > 0 and target is not None:
        last = Fs[-1]
        num += lam2 * (last.T @ target)
        den += lam2 * (last.T @ (last @ X))
        used = True
    if not used:
        # loss does not depend on this transition
        return X.copy()
    return _mu(X, num, den, delta)


def update_A(state: LatentState, guide: LongTermGuide | None, hp: HyperParams) -> np.ndarray:
    target = guide.U_lt if guide is not None else None
    return _transition_update(state.A, state.U, target, hp.lambda1, hp.lambda2, hp.delta_guard)


def update_B(state: LatentState, guide: LongTermGuide | None, hp: HyperParams) -> np.ndarray:
    target = guide.V_lt if guide is not None else None
    return _transition_update(state.B, state.V, target, hp.lambda1, hp.lambda2, hp.delta_guard)


def update_C(state: LatentState, seq, hp: HyperParams) -> np.ndarray:
    G = _stack(seq)
    num = np.zeros_like(state.C)
    den = np.zeros_like(state.C)
    C = state.C
    for t in range(state.T):
        U, V = state.U[t], state.V[t]
        num += U.T @ G[t] @ V.T
        den += (U.T @ U) @ C @ (V @ V.T)
    return _mu(C, num, den, hp.delta_guard)


def sweep(state: LatentState, guide: LongTermGuide | None, seq, hp: HyperParams) -> LatentState:
    """One in-place pass: U_t, V_t for t ascending (freshest values), then A, B, C."""
    G = _stack(seq)
    for t in range(state.T):
        state.U[t] = _update_U(state, guide, G[t], hp, t)
        state.V[t] = _update_V(state, guide, G[t], hp, t)
    state.A = update_A(state, guide, hp)
    state.B = update_B(state, guide, hp)
    state.C = update_C(state, G, hp)
    return state


# -- long-term guide --------------------------------------------------------


def adaptive_weights(long_seq) -> np.ndarray:
    """Softmax weights favouring snapshots close (Frobenius) to the most recent one."""
    G = _stack(long_seq)
    if len(G) == 0:
        raise ValueError("empty window")
    d = np.array([frobenius_distance(g, G[-1]) for g in G])
    s = 1.0 / (1.0 + d)
    s = s / s.sum()
    e = np.exp(s - s.max())
    return e / e.sum()


def guide_objective(long_seq, r: np.ndarray, U_lt: np.ndarray, V_lt: np.ndarray) -> float:
    """Weighted residual ``sum_t r_t ||G_t - U_lt V_lt||^2``."""
    G = _stack(long_seq)
    R = U_lt @ V_lt
    return float(sum(w * _sq(g - R) for w, g in zip(r, G)))


def _init_scale(G: np.ndarray, k: int) -> float:
    m = float(np.mean(G))
    return math.sqrt(m / k) if m > 0 else 1.0 / math.sqrt(k)


def _uniform01(rng, shape):
    # (0, 1]: keeps every factor entry strictly positive
    return 1.0 - rng.random(shape)


def fit_longterm(long_seq, r: np.ndarray, hp: HyperParams, rng: np.random.Generator | None = None,
                 init: tuple[np.ndarray, np.ndarray] | None = None) -> LongTermGuide:
    """Fit guide factors ``U_lt (n x k)``, ``V_lt (k x n)`` to the r-weighted window.

    Since r sums to one, the weighted updates reduce to a plain two-factor
    multiplicative fit of the r-weighted mean snapshot.
    """
    G = _stack(long_seq)
    r = np.asarray(r, dtype=float)
    if len(r) != len(G):
        raise ValueError("weight vector length does not match window")
    if abs(r.sum() - 1.0) > 1e-9:
        raise ValueError("weights must sum to 1")
    n, k = G.shape[1], hp.k
    Gbar = np.tensordot(r, G, axes=1)
    if init is not None:
        Ul, Vl = init[0].copy(), init[1].copy()
    else:
        rng = rng if rng is not None else np.random.default_rng(0)
        s = _init_scale(G, k)
        Ul = s * _uniform01(rng, (n, k))
        Vl = s * _uniform01(rng, (k, n))
    trace = [guide_objective(G, r, Ul, Vl)]
    d = hp.delta_guard
    for _ in range(hp.max_iter):
        Ul = _mu(Ul, Gbar @ Vl.T, Ul @ (Vl @ Vl.T), d)
        Vl = _mu(Vl, Ul.T @ Gbar, (Ul.T @ Ul) @ Vl, d)
        trace.append(guide_objective(G, r, Ul, Vl))
        prev, cur = trace[-2], trace[-1]
        if prev == 0 or abs(prev - cur) / prev < hp.epsilon:
            break
    return LongTermGuide(Ul, Vl, r, trace)


# -- fitting and prediction -------------------------------------------------


def init_state(seq, hp: HyperParams, rng: np.random.Generator | None = None) -> LatentState:
    """Cold start: scaled uniform factors, near-identity transitions and core."""
    G = _stack(seq)
    rng = rng if rng is not None else np.random.default_rng(0)
    T, n = len(G), G.shape[1]
    k = hp.k
    s = _init_scale(G, k)
    U = [s * _uniform01(rng, (n, k)) for _ in range(T)]
    V = [s * _uniform01(rng, (k, n)) for _ in range(T)]
    eye_k = np.eye(k) + 0.01
    return LatentState(U, V, eye_k.copy(), eye_k.copy(), np.eye(n) + 0.01)


def rebalance(state: LatentState, limit: float = 1e3) -> LatentState:
    """Per-dimension rescaling that leaves every ``U_t C V_t`` and the prediction unchanged.

    Column ``j`` of all ``U_t`` is scaled by ``d_j`` and row ``j`` of ``C`` by
    ``1/d_j`` (``A -> D^-1 A D``), with ``d_j`` equalising the two norms; the
    same is done for rows of ``V_t`` against columns of ``C``. Without it a
    latent dimension can slowly die in ``U`` while its ``C``/``A`` rows grow,
    which after many warm starts wrecks the prediction.
    """
    st = state.copy()
    u = np.sqrt(sum((x * x).sum(axis=0) for x in st.U))
    c = np.linalg.norm(st.C, axis=1)
    d = np.clip(np.sqrt(c / np.maximum(u, _TINY)), 1.0 / limit, limit)
    d[(u == 0) | (c == 0)] = 1.0
    st.U = [x * d for x in st.U]
    st.C = st.C / d[:, None]
    st.A = st.A / d[:, None] * d[None, :]
    v = np.sqrt(sum((x * x).sum(axis=1) for x in st.V))
    c = np.linalg.norm(st.C, axis=0)
    e = np.clip(np.sqrt(c / np.maximum(v, _TINY)), 1.0 / limit, limit)
    e[(v == 0) | (c == 0)] = 1.0
    st.V = [x * e[:, None] for x in st.V]
    st.C = st.C / e[None, :]
    return st


def shift_state(state: LatentState) -> LatentState:
    """Warm start for the next window: drop the oldest factors, repeat the newest, rebalance."""
    U = [u.copy() for u in state.U[1:]] + [state.U[-1].copy()]
    V = [v.copy() for v in state.V[1:]] + [state.V[-1].copy()]
    return rebalance(LatentState(U, V, state.C.copy(), state.A.copy(), state.B.copy()))


def fit(seq, guide: LongTermGuide | None, hp: HyperParams, init: LatentState | None = None,
        rng: np.random.Generator | None = None) -> tuple[LatentState, list[float]]:
    """Alternate full sweeps until the relative loss change drops below ``hp.epsilon``.

    Returns the fitted state and the loss trace; ``trace[0]`` is the loss at
    the initial state and ``trace[i]`` the loss after sweep ``i``.
    """
    G = _stack(seq)
    state = init.copy() if init is not None else init_state(G, hp, rng)
    if state.T != len(G):
        raise ValueError(f"init has {state.T} time slices, window has {len(G)}")
    state.check()
    trace = [total_loss(G, state, guide, hp)]
    for _ in range(hp.max_iter):
        sweep(state, guide, G, hp)
        cur = total_loss(G, state, guide, hp)
        if not math.isfinite(cur):
            raise NumericalError(f"non-finite loss after {len(trace)} sweeps")
        trace.append(cur)
        prev = trace[-2]
        if prev == 0 or abs(prev - cur) / prev < hp.epsilon:
            break
    logger.debug("fit: %d sweeps, loss %.6g -> %.6g", len(trace) - 1, trace[0], trace[-1])
    return state, trace


def predict_matrix(state: LatentState) -> np.ndarray:
    return (state.U[-1] @ state.A) @ state.C @ (state.V[-1] @ state.B)


def predict_next(state: LatentState, timestamp: int = 0, directed: bool = True) -> GraphSnapshot:
    """Predicted next snapshot ``(U_T A) C (V_T B)``.

    With ``directed=False`` the prediction is symmetrised as ``(P + P^T) / 2``.
    """
    P = predict_matrix(state)
    if not directed:
        P = 0.5 * (P + P.T)
    return GraphSnapshot(timestamp, np.maximum(P, 0.0), directed)
