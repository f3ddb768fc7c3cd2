"""SOCP instances with optima known by construction.

A primal point ``(x, s)`` and a dual point ``(y, z)`` are drawn so that
``s`` and ``z`` are complementary in every cone; ``c, h, b`` are then chosen
to make both feasible, so ``c'x`` is the optimal value.
"""

import numpy as np

from optbranch.socp import ConicProblem


def _complementary_pair(rng, l, q):
    s, z = [], []
    split = rng.random(l) < 0.5
    s.append(np.where(split, rng.uniform(0.1, 2.0, l), 0.0))
    z.append(np.where(split, 0.0, rng.uniform(0.1, 2.0, l)))
    for d in q:
        kind = rng.integers(3)
        u = rng.standard_normal(d - 1)
        u /= np.linalg.norm(u)
        if kind == 0:  # s on the boundary, z on the reflected ray
            a, b = rng.uniform(0.1, 2.0, 2)
            s.append(a * np.r_[1.0, u])
            z.append(b * np.r_[1.0, -u])
        elif kind == 1:  # s interior, z zero
            s.append(np.r_[rng.uniform(1.5, 3.0), rng.uniform(0, 1.0) * u])
            z.append(np.zeros(d))
        else:  # z interior, s zero
            s.append(np.zeros(d))
            z.append(np.r_[rng.uniform(1.5, 3.0), rng.uniform(0, 1.0) * u])
    return np.concatenate(s), np.concatenate(z)


def known_optimum(rng):
    """``(problem, optimal value)`` for a random instance of random shape."""
    n = int(rng.integers(3, 25))
    l = int(rng.integers(0, 12))
    q = [int(d) for d in rng.integers(2, 6, size=rng.integers(1 if l == 0 else 0, 5))]
    m = l + sum(q)
    # enough cone rows to make the optimum unique-valued; the value is what we test
    p = int(rng.integers(0, max(1, min(n - 1, n // 2)) + 1))
    G = rng.standard_normal((m, n))
    A = rng.standard_normal((p, n))
    x = rng.standard_normal(n)
    y = rng.standard_normal(p)
    s, z = _complementary_pair(rng, l, q)
    c = -G.T @ z - A.T @ y
    prob = ConicProblem(c=c, G=G, h=G @ x + s, dims={"l": l, "q": q}, A=A, b=A @ x)
    return prob, float(c @ x)


def infeasible(rng):
    """Two half-spaces that cannot meet, padded with a random cone block."""
    n = int(rng.integers(2, 8))
    a = rng.standard_normal(n)
    G = np.vstack([a, -a, -np.eye(n)[:1]])
    h = np.array([-1.0, -1.0, 5.0])
    c = rng.standard_normal(n)
    return ConicProblem(c=c, G=G, h=h, dims={"l": 3})


def unbounded(rng):
    """A cone-feasible ray along which the objective decreases without bound."""
    n = int(rng.integers(2, 8))
    d = rng.standard_normal(n)
    G = np.zeros((3, n))
    G[1:, :] = rng.standard_normal((2, n))
    G[1:, :] -= np.outer(G[1:, :] @ d, d) / (d @ d)  # the ray leaves the cone rows fixed
    h = np.array([1.0, 0.0, 0.0])
    return ConicProblem(c=d, G=G, h=h, dims={"q": [3]})
