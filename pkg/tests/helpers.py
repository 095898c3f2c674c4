"""Shared builders for the test suite."""
import numpy as np

from framecraft.core import Instance, SignalingScheme


def random_instance(rng, n_states, n_actions, forbid=0.0):
    """Instance with uniform raw utilities and a Dirichlet prior.

    ``forbid`` is the chance that each (action, state) pair is forbidden;
    at least one action stays allowed in each state.
    """
    states = [f"w{i}" for i in range(n_states)]
    actions = [f"a{i}" for i in range(n_actions)]
    prior = rng.dirichlet(np.ones(n_states))
    u = rng.uniform(-1, 2, size=(n_actions, n_states))
    v = rng.uniform(-1, 2, size=(n_actions, n_states))
    pairs = []
    if forbid > 0:
        for w in range(n_states):
            for a in range(1, n_actions):
                if rng.random() < forbid:
                    pairs.append((actions[a], states[w]))
    return Instance.from_raw(states, actions, prior, u, v, pairs)


def random_scheme(rng, n_states, n_signals, zeros=False):
    p = rng.dirichlet(np.ones(n_signals), size=n_states)
    if zeros:
        p[rng.random(p.shape) < 0.3] = 0.0
        p[p.sum(axis=1) == 0, 0] = 1.0
        p /= p.sum(axis=1, keepdims=True)
    return SignalingScheme([f"s{k}" for k in range(n_signals)], p)


def reference_obedience_value(mu, prior, u, v, eps=0.0, allowed=None):
    """U*(mu) from scipy's HiGHS in inequality form, written independently.

    Variables are pi[w, a] in row-major order.  Returns -inf when infeasible.
    """
    from scipy.optimize import linprog

    n_a, n_w = u.shape
    c = -(prior[:, None] * u.T).ravel()
    rows = []
    for a in range(n_a):
        for b in range(n_a):
            if a == b:
                continue
            r = np.zeros((n_w, n_a))
            r[:, a] = mu * (v[b] - v[a])
            rows.append(r.ravel())
    A_eq = np.kron(np.eye(n_w), np.ones((1, n_a)))
    if allowed is None:
        bounds = [(0, None)] * (n_w * n_a)
    else:
        bounds = [(0, None) if allowed[a, w] else (0, 0) for w in range(n_w) for a in range(n_a)]
    res = linprog(c, A_ub=np.array(rows) if rows else None, b_ub=np.full(len(rows), eps) if rows else None,
                  A_eq=A_eq, b_eq=np.ones(n_w), bounds=bounds, method="highs")
    if res.status == 2:
        return -np.inf
    assert res.status == 0, res.message
    return -res.fun


def reference_fixed_utility(instance, scheme, mu):
    """U_pi(mu) by explicit Bayes updates, one signal at a time."""
    from framecraft.core import inducibility_margin

    _, etas = inducibility_margin(instance)
    direct = set(scheme.signals) <= set(instance.actions)
    u, v = instance.sender_utility, instance.receiver_utility
    total = 0.0
    for k, s in enumerate(scheme.signals):
        joint = [mu[w] * scheme.probs[w, k] for w in range(instance.n_states)]
        z = sum(joint)
        if z > 0:
            post = [x / z for x in joint]
        elif direct:
            post = list(etas[s])
        else:
            post = list(mu)
        rv = [sum(v[a, w] * post[w] for w in range(len(post))) for a in range(instance.n_actions)]
        best = max(rv)
        cands = [a for a in range(instance.n_actions) if rv[a] >= best - 1e-9]
        su = [sum(u[a, w] * post[w] for w in range(len(post))) for a in cands]
        top = max(su)
        act = next(a for a, x in zip(cands, su) if x >= top - 1e-9)
        total += sum(instance.prior[w] * scheme.probs[w, k] * u[act, w] for w in range(instance.n_states))
    return total
