import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from latentcpd import lemcore
from latentcpd.lemcore import HyperParams, LatentState, LongTermGuide

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_problem(rng, n, k, T, lam1=0.5, lam2=1.0, low=0.0, guide=True):
    """Random non-negative window, state and guide; entries drawn from [low, low + 1)."""
    G = [rng.random((n, n)) * 2 for _ in range(T)]
    U = [low + rng.random((n, k)) for _ in range(T)]
    V = [low + rng.random((k, n)) for _ in range(T)]
    state = LatentState(U, V, low + rng.random((k, k)), low + rng.random((k, k)), low + rng.random((n, n)))
    g = None
    if guide:
        g = LongTermGuide(low + rng.random((n, k)), low + rng.random((k, n)), np.full(4, 0.25))
    hp = HyperParams(k=k, T=max(T, 1), lambda1=lam1, lambda2=lam2)
    return np.array(G), state, g, hp


def exact_fit(rng, n=5, k=2, T=3):
    """Zero-loss problem: permutation transitions carry U, V forward exactly."""
    Pk = np.eye(k)[rng.permutation(k)]
    Pn = np.eye(n)[rng.permutation(n)]
    U0 = 0.5 + rng.random((n, k))
    V0 = 0.5 + rng.random((k, n))
    C = 0.5 + rng.random((k, k))
    U = [U0 @ np.linalg.matrix_power(Pk, t) for t in range(T)]
    V = [V0 @ np.linalg.matrix_power(Pn, t) for t in range(T)]
    G = np.array([U[t] @ C @ V[t] for t in range(T)])
    guide = LongTermGuide(U[-1] @ Pk, V[-1] @ Pn, np.full(4, 0.25))
    state = LatentState(U, V, C, Pk.copy(), Pn.copy())
    return G, state, guide, HyperParams(k=k, T=T)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def apply_ops(G, state, guide, hp):
    """Yield (name, state) after each individual update of one sweep."""
    st = state.copy()
    for t in range(st.T):
        st.U[t] = lemcore.update_U(st, guide, G, hp, t)
        yield f"U{t}", st
        st.V[t] = lemcore.update_V(st, guide, G, hp, t)
        yield f"V{t}", st
    st.A = lemcore.update_A(st, guide, hp)
    yield "A", st
    st.B = lemcore.update_B(st, guide, hp)
    yield "B", st
    st.C = lemcore.update_C(st, G, hp)
    yield "C", st
