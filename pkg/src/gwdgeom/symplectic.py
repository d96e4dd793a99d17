"""Jacobians of the elementary flows and the symplectic-structure residual.

Variables are flattened as ``z = (q, p, vec Q1, vec P1, vec Q2, vec P2)`` with
``Q = Q1 + i Q2``, ``P = P1 + i P2`` and ``vec`` stacking columns, so that
matrix entry ``(j, k)`` (zero-based) lands at offset ``j + D k``.  In these
variables the symplectic form is the constant block-diagonal matrix
``diag(J_2D, hbar/2 J_2D^2, hbar/2 J_2D^2)``.
"""
from __future__ import annotations

import numpy as np

from .effective import MethodKind, coefficients_at
from .integrators import StepPlan, kinetic_flow, potential_flow, step
from .states import GaussianState, position_covariance

MAX_SYMPLECTIC_DIM = 8


def z_size(D: int) -> int:
    return 2 * D + 4 * D * D


def pack(state: GaussianState) -> np.ndarray:
    vec = lambda M: M.ravel(order="F")
    return np.concatenate(
        [state.q, state.p, vec(state.Q.real), vec(state.P.real), vec(state.Q.imag), vec(state.P.imag)]
    )


def unpack(z: np.ndarray, like: GaussianState) -> GaussianState:
    D = like.dim
    n2 = D * D
    mat = lambda k: z[2 * D + k * n2 : 2 * D + (k + 1) * n2].reshape(D, D, order="F")
    return like.evolve(q=z[:D].copy(), p=z[D : 2 * D].copy(), Q=mat(0) + 1j * mat(2), P=mat(1) + 1j * mat(3))


def _J(n: int) -> np.ndarray:
    return np.kron(np.array([[0.0, 1.0], [-1.0, 0.0]]), np.eye(n))


def omega(D: int, hbar: float = 1.0) -> np.ndarray:
    """Matrix of the symplectic form in the flattened Hagedorn variables."""
    n = z_size(D)
    W = np.zeros((n, n))
    W[: 2 * D, : 2 * D] = _J(D)
    block = 0.5 * hbar * _J(D * D)
    o = 2 * D
    W[o : o + 2 * D * D, o : o + 2 * D * D] = block
    o += 2 * D * D
    W[o:, o:] = block
    return W


def _slices(D: int):
    n2 = D * D
    base = 2 * D
    return {
        "q": slice(0, D),
        "p": slice(D, 2 * D),
        "Q1": slice(base, base + n2),
        "P1": slice(base + n2, base + 2 * n2),
        "Q2": slice(base + 2 * n2, base + 3 * n2),
        "P2": slice(base + 3 * n2, base + 4 * n2),
    }


def step_jacobian_kinetic(t: float, mass, D: int) -> np.ndarray:
    """Jacobian of the kinetic flow: stability matrix blocks ``[[I, t m^-1], [0, I]]``."""
    from .states import as_mass_matrix

    minv = np.linalg.inv(as_mass_matrix(mass, D))
    M = np.block([[np.eye(D), t * minv], [np.zeros((D, D)), np.eye(D)]])
    # column-major vec(m^-1 P) = (I kron m^-1) vec(P)
    n2 = D * D
    M2 = np.block([[np.eye(n2), t * np.kron(np.eye(D), minv)], [np.zeros((n2, n2)), np.eye(n2)]])
    n = z_size(D)
    J = np.zeros((n, n))
    J[: 2 * D, : 2 * D] = M
    J[2 * D : 2 * D + 2 * D * D, 2 * D : 2 * D + 2 * D * D] = M2
    J[2 * D + 2 * D * D :, 2 * D + 2 * D * D :] = M2
    return J


def _tensors(method: MethodKind, pot, state: GaussianState):
    """Second, third and fourth derivative tensors entering the potential-flow Jacobian."""
    pot = getattr(pot, "inner", pot)
    q = state.q
    sigma = position_covariance(state)
    if method is MethodKind.VAR:
        return tuple(np.asarray(pot.expectation(q, sigma, n)) for n in (2, 3, 4)) + (sigma,)
    return tuple(np.asarray(pot.derivative(q, n)) for n in (2, 3, 4)) + (sigma,)


def potential_jacobian_blocks(method, pot, state: GaussianState) -> dict:
    """Blocks ``a``, ``b[r]``, ``c[r]``, ``d[r, s]`` (``r, s`` in ``{1, 2}``) as 2-D arrays.

    Row/column pairs ``(j, k)`` are flattened column-major, consistently with :func:`pack`.
    """
    method = MethodKind.parse(method)
    D, hbar = state.dim, state.hbar
    V2, V3, V4, sigma = _tensors(method, pot, state)
    Qr = {1: state.Q.real, 2: state.Q.imag}
    eye = np.eye(D)

    if method is MethodKind.LCA:
        a = V2 + 0.5 * np.einsum("jklm,lm->jk", V4, sigma)
    else:
        a = V2.copy()

    def flat_cols(T):  # T[j, k, l] -> (j, k + D l)
        return T.transpose(0, 2, 1).reshape(D, D * D)

    def flat_rows(T):  # T[j, k, l] -> (j + D k, l)
        return T.transpose(1, 0, 2).reshape(D * D, D)

    def flat_4(T):  # T[j, k, l, m] -> (j + D k, l + D m)
        return T.transpose(1, 0, 3, 2).reshape(D * D, D * D)

    blocks = {"a": a}
    for r in (1, 2):
        if method is MethodKind.LHA:
            b = np.zeros((D, D, D))
        else:
            b = 0.5 * hbar * np.einsum("jkm,ml->jkl", V3, Qr[r])
        c = np.einsum("jml,mk->jkl", V3, Qr[r])
        blocks["b", r] = flat_cols(b)
        blocks["c", r] = flat_rows(c)
        for s in (1, 2):
            d = np.einsum("jl,km->jklm", V2, eye) if r == s else np.zeros((D, D, D, D))
            if method is MethodKind.VAR:
                d = d + 0.5 * hbar * np.einsum("jnlp,nk,pm->jklm", V4, Qr[r], Qr[s])
            blocks["d", r, s] = flat_4(d)
    return blocks


def step_jacobian_potential(t: float, method, pot, state: GaussianState) -> np.ndarray:
    """Jacobian of the potential flow for time ``t`` at ``state``: ``I - t N``."""
    blocks = potential_jacobian_blocks(method, pot, state)
    D = state.dim
    sl = _slices(D)
    n = z_size(D)
    N = np.zeros((n, n))
    N[sl["p"], sl["q"]] = blocks["a"]
    for r, (Qs, Ps) in {1: ("Q1", "P1"), 2: ("Q2", "P2")}.items():
        N[sl["p"], sl[Qs]] = blocks["b", r]
        N[sl[Ps], sl["q"]] = blocks["c", r]
        for s, Qs2 in {1: "Q1", 2: "Q2"}.items():
            N[sl[Ps], sl[Qs2]] = blocks["d", r, s]
    return np.eye(n) - t * N


def block_condition_defects(method, pot, state: GaussianState) -> dict:
    """Max-norm residuals of ``a^T = a``, ``b_r^T = (hbar/2) c_r`` and ``d_rs^T = d_sr``."""
    blocks = potential_jacobian_blocks(method, pot, state)
    h2 = 0.5 * state.hbar
    out = {"a": float(np.max(np.abs(blocks["a"] - blocks["a"].T)))}
    out["bc"] = max(float(np.max(np.abs(blocks["b", r].T - h2 * blocks["c", r]))) for r in (1, 2))
    out["d"] = max(
        float(np.max(np.abs(blocks["d", r, s].T - blocks["d", s, r]))) for r in (1, 2) for s in (1, 2)
    )
    return out


def finite_difference_jacobian(fn, state: GaussianState, h: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of ``z -> pack(fn(unpack(z)))``."""
    z0 = pack(state)
    n = z0.size
    J = np.empty((n, n))
    for i in range(n):
        dz = np.zeros(n)
        dz[i] = h
        fp = pack(fn(unpack(z0 + dz, state)))
        fm = pack(fn(unpack(z0 - dz, state)))
        J[:, i] = (fp - fm) / (2 * h)
    return J


def _mp_blocks(method: MethodKind, pot, state: GaussianState):
    """Same blocks as :func:`potential_jacobian_blocks`, in mpmath arithmetic."""
    import mpmath as mp

    pot = getattr(pot, "inner", pot)
    D, h2 = state.dim, mp.mpf(state.hbar) / 2
    Qr = {r: np.array([[mp.mpf(float(v)) for v in row] for row in M], dtype=object)
          for r, M in ((1, state.Q.real), (2, state.Q.imag))}
    sigma = h2 * (Qr[1] @ Qr[1].T + Qr[2] @ Qr[2].T)
    T = pot.tensors_mp(state.q, sigma, (2, 3, 4), average=method is MethodKind.VAR)
    V2, V3, V4 = T[2], T[3], T[4]
    zero = mp.mpf(0)
    a = V2 + np.einsum("jklm,lm->jk", V4, sigma) / 2 if method is MethodKind.LCA else V2
    blocks = {"a": a}
    eye = np.array([[mp.mpf(int(i == j)) for j in range(D)] for i in range(D)], dtype=object)
    for r in (1, 2):
        if method is MethodKind.LHA:
            b = np.full((D, D, D), zero, dtype=object)
        else:
            b = h2 * np.einsum("jkm,ml->jkl", V3, Qr[r])
        c = np.einsum("jml,mk->jkl", V3, Qr[r])
        blocks["b", r] = b.transpose(0, 2, 1).reshape(D, D * D)
        blocks["c", r] = c.transpose(1, 0, 2).reshape(D * D, D)
        for s in (1, 2):
            d = np.einsum("jl,km->jklm", V2, eye) if r == s else np.full((D,) * 4, zero, dtype=object)
            if method is MethodKind.VAR:
                d = d + h2 * np.einsum("jnlp,nk,pm->jklm", V4, Qr[r], Qr[s])
            blocks["d", r, s] = d.transpose(1, 0, 3, 2).reshape(D * D, D * D)
    return blocks


def _apply_kinetic(J, t, minv, D):
    # left-multiply J by the kinetic-flow Jacobian; rows of p and P are unchanged
    sl = _slices(D)
    mk = np.kron(np.eye(D), minv)  # acts on column-major vec(P)
    J[sl["q"]] = J[sl["q"]] + t * (minv @ J[sl["p"]])
    J[sl["Q1"]] = J[sl["Q1"]] + t * (mk @ J[sl["P1"]])
    J[sl["Q2"]] = J[sl["Q2"]] + t * (mk @ J[sl["P2"]])


def _apply_potential(J, t, blocks, D):
    # left-multiply J by I - t N; N only reads rows of q, Q1, Q2, which it leaves unchanged
    sl = _slices(D)
    Jq, JQ1, JQ2 = J[sl["q"]], J[sl["Q1"]], J[sl["Q2"]]
    J[sl["p"]] = J[sl["p"]] - t * (blocks["a"] @ Jq + blocks["b", 1] @ JQ1 + blocks["b", 2] @ JQ2)
    for r, Ps in ((1, "P1"), (2, "P2")):
        J[sl[Ps]] = J[sl[Ps]] - t * (blocks["c", r] @ Jq + blocks["d", r, 1] @ JQ1 + blocks["d", r, 2] @ JQ2)


def _identity(n, dps):
    if dps is None:
        return np.eye(n)
    import mpmath as mp

    return np.array([[mp.mpf(int(i == j)) for j in range(n)] for i in range(n)], dtype=object)


def accumulate_jacobian(s0: GaussianState, plan: StepPlan, pot, n_steps: int, fd_step: float = 1e-6,
                        record_every: int = 0, dps: int | None = None):
    """Propagate ``n_steps`` steps while multiplying step Jacobians.

    Geometric plans use the analytic flow Jacobians, applied in their block
    structure; RK4 steps are differentiated by central finite differences.
    With ``dps`` set, the Jacobian factors and their product are evaluated
    in mpmath with that many digits at the (double-precision) trajectory
    points, so that rounding of large Jacobians does not mask the property
    being measured.  With ``record_every > 0`` also returns
    ``[(time, residual), ...]`` sampled along the way.
    """
    D = s0.dim
    if D > MAX_SYMPLECTIC_DIM:
        raise ValueError(f"symplecticity check limited to D <= {MAX_SYMPLECTIC_DIM}")
    if dps is not None and plan.integrator == "rk4":
        raise ValueError("multiprecision accumulation needs analytic Jacobians")
    ctx = None
    if dps is not None:
        import mpmath

        ctx = mpmath.workdps(dps)
        ctx.__enter__()
    try:
        J = _identity(z_size(D), dps)
        minv = s0.minv if dps is None else np.array([[mpmath.mpf(float(v)) for v in row] for row in s0.minv], dtype=object)
        state = s0
        history = []
        for n in range(1, n_steps + 1):
            if plan.integrator == "rk4":
                Js = finite_difference_jacobian(lambda s: step(s, plan, pot), state, fd_step)
                state = step(state, plan, pot)
                J = Js @ J
            else:
                for kind, frac in plan.flows:
                    t = frac * plan.dt
                    tt = t if dps is None else mpmath.mpf(t)
                    if kind == "T":
                        _apply_kinetic(J, tt, minv, D)
                        state = kinetic_flow(state, t)
                    else:
                        blocks = (potential_jacobian_blocks(plan.method, pot, state) if dps is None
                                  else _mp_blocks(plan.method, pot, state))
                        _apply_potential(J, tt, blocks, D)
                        state = potential_flow(state, t, plan.method, pot)
            if record_every and (n % record_every == 0 or n == n_steps):
                history.append((n * plan.dt, symplectic_defect(J, D, s0.hbar)))
        return state, J, history
    finally:
        if ctx is not None:
            ctx.__exit__(None, None, None)


def symplectic_defect(J: np.ndarray, D: int, hbar: float = 1.0) -> float:
    """Frobenius norm of ``J^T omega J - omega`` (float or mpmath object arrays)."""
    W = omega(D, hbar)
    if J.dtype == object:
        import mpmath as mp

        R = J.T @ W.astype(object) @ J - W
        return float(mp.sqrt(mp.fsum(x * x for x in R.ravel())))
    return float(np.linalg.norm(J.T @ W @ J - W))


def symplecticity_residual(s0: GaussianState, plan: StepPlan, pot, n_steps: int, fd_step: float = 1e-6,
                           dps: int | None = None) -> float:
    """``||Phi'^T omega Phi' - omega||_F`` for the flow of ``n_steps`` steps."""
    if n_steps == 0:
        return 0.0
    _, J, _ = accumulate_jacobian(s0, plan, pot, n_steps, fd_step, dps=dps)
    if dps is None:
        return symplectic_defect(J, s0.dim, s0.hbar)
    import mpmath

    with mpmath.workdps(dps):
        return symplectic_defect(J, s0.dim, s0.hbar)
