#!/usr/bin/env python3
"""Compute circle-criterion gains for the Jansen-Rit plant over [4,8] x [22,28].

Solves the observer LMI at the four corners of the box (it is affine in p,
so this covers the whole box) with L = 0 and prints a gains TOML file on
stdout. The problem is badly scaled in the original coordinates, so it is
solved for z = T^-1 x with T = diag(1, a, 1, a, 1, b) and mapped back.

Usage: python3 scripts/jansen_rit_gains.py > configs/jansen_rit_gains.toml
Needs numpy, scipy, cvxpy and clarabel.
"""

import itertools

import cvxpy as cp
import numpy as np
import scipy.linalg as sl

A_RATE, B_RATE = 100.0, 50.0
C1 = 135.0
C2, C3, C4 = 0.8 * C1, 0.25 * C1, 0.25 * C1
E0, R = 2.5, 0.56
LOWER, UPPER = (4.0, 22.0), (8.0, 28.0)
SLOPE = E0 * R / 2


def block(k):
    return np.array([[0.0, 1.0], [-k * k, -2.0 * k]])


A = sl.block_diag(block(A_RATE), block(A_RATE), block(B_RATE))
C = np.array([[0.0, 0.0, 1.0, 0.0, -1.0, 0.0]])
H = np.zeros((2, 6))
H[0, 0], H[1, 0] = C1, C3


def g_of(p):
    g = np.zeros((6, 2))
    g[3, 0] = p[0] * A_RATE * C2
    g[5, 1] = p[1] * B_RATE * C4
    return g


def lmi(p, P, m, K, nu, mu):
    M = np.diag(m)
    X = np.block([
        [P @ A + A.T @ P + nu * np.eye(6), P @ g_of(p) + (H + K @ C).T @ M, P],
        [(P @ g_of(p) + (H + K @ C).T @ M).T, -2 * M / SLOPE, np.zeros((2, 6))],
        [P, np.zeros((6, 2)), -mu * np.eye(6)],
    ])
    return np.linalg.eigvalsh(X).max()


def solve():
    T = np.diag([1.0, A_RATE, 1.0, A_RATE, 1.0, B_RATE])
    Ti = np.linalg.inv(T)
    As, Cs, Hs, TT = Ti @ A @ T, C @ T, H @ T, T.T @ T
    Ps = cp.Variable((6, 6), symmetric=True)
    m = cp.Variable(2)
    Y = cp.Variable((2, 1))
    mu, nu, t = cp.Variable(), cp.Variable(), cp.Variable()
    M = cp.diag(m)
    cons = [Ps >> t * np.eye(6), m >= t, nu >= t, mu <= 1e3,
            cp.trace(Ps) <= 10, cp.sum(m) <= 10]
    corners = list(itertools.product(*zip(LOWER, UPPER)))
    for p in corners:
        Gs = Ti @ g_of(p)
        B = Ps @ Gs + Hs.T @ M + Cs.T @ Y.T
        X = cp.bmat([
            [Ps @ As + As.T @ Ps + nu * TT, B, Ps],
            [B.T, -2 * M / SLOPE, np.zeros((2, 6))],
            [Ps, np.zeros((6, 2)), -mu * TT],
        ])
        cons.append((X + X.T) / 2 << -t * np.eye(14))
    prob = cp.Problem(cp.Maximize(t), cons)
    prob.solve(solver="CLARABEL")
    if prob.status != "optimal" or t.value <= 0:
        raise SystemExit(f"solver status {prob.status}, margin {t.value}")
    P = Ti.T @ ((Ps.value + Ps.value.T) / 2) @ Ti
    K = Y.value / m.value[:, None]
    worst = max(lmi(p, P, m.value, K, nu.value, mu.value) for p in corners)
    return P, m.value, K, float(nu.value), float(mu.value), worst


def rows(x):
    return "[" + ", ".join("[" + ", ".join(repr(float(v)) for v in r) + "]" for r in x) + "]"


def main():
    P, m, K, nu, mu, worst = solve()
    center = [(lo + hi) / 2 for lo, hi in zip(LOWER, UPPER)]
    print("# Circle-criterion gains for the Jansen-Rit plant, certified at the four")
    print("# corners of [4,8] x [22,28]. The LMI is affine in p, so this covers the box.")
    print("# Regenerate with scripts/jansen_rit_gains.py.\n")
    print("[[certificate]]")
    print('class = "circle_criterion"')
    print(f"p = {center}")
    print(f"valid_lower = {list(LOWER)}")
    print(f"valid_upper = {list(UPPER)}")
    print(f"L = {rows(np.zeros((6, 1)))}")
    print(f"K = {rows(K)}")
    print("P = [")
    for r in P:
        print("    [" + ", ".join(f"{v:.16e}" for v in r) + "],")
    print("]")
    print(f"m_diag = [{float(m[0])!r}, {float(m[1])!r}]")
    print(f"nu = {nu!r}")
    print(f"lmi_mu = {mu!r}")
    print(f"sector_upper = [{SLOPE}, {SLOPE}]")
    print(f"max_eig = {worst:.2g}\n")
    print("[certificate.metadata]")
    print('source = "cvxpy + Clarabel, scaled coordinates x = diag(1, a, 1, a, 1, b) z"')


if __name__ == "__main__":
    main()
