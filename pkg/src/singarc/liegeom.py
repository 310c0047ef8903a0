"""Lie-bracket calculus over the dual-number engine.

Brackets use the convention [a,b](x) = (db/dx) a(x) - (da/dx) b(x) and
iterated words are right-nested: "ffg1" means [f,[f,g1]].  Every derivative
is exact (nested forward-mode duals); finite differences appear only in the
test oracles.

Fields evaluate on component lists whose entries may be floats, numpy
arrays (batched sweeps) or dual numbers (nesting), so a bracket is itself a
field that can be bracketed again, up to words of length 4.
"""
from __future__ import annotations

import re as _re
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .arm2dof import FullyActuatedSystem, _components
from .duals import Dual, HyperDual, seed, value
from .errors import DerivativeUnavailable, SpanViolation

MAX_WORD = 4


@dataclass(frozen=True)
class VectorField:
    """Named evaluator from 2n component scalars to 2n component scalars."""

    name: str
    fn: Callable[[Sequence], list]

    def __call__(self, x):
        return self.fn(x)


def drift_field(sys: FullyActuatedSystem) -> VectorField:
    def fn(x):
        f, _ = sys.dyn(list(x))
        return f
    return VectorField("f", fn)


def input_field(sys: FullyActuatedSystem, i: int) -> VectorField:
    """g_i = [0; column i of M(q)^-1], 0-based channel index."""
    n = sys.n

    def fn(x):
        _, L = sys.dyn(list(x))
        zero = x[0] * 0.0
        return [zero] * n + [L[r][i] for r in range(n)]
    return VectorField(f"g{i + 1}", fn)


def _bracket_components(a, b, x):
    ax = a(x)
    bx = b(x)
    dba = b(seed(x, ax))
    dab = a(seed(x, bx))
    out = []
    for p, q in zip(dba, dab):
        pim = p.im if type(p) is Dual else p * 0.0
        qim = q.im if type(q) is Dual else q * 0.0
        out.append(pim - qim)
    return out


def bracket_field(a, b) -> VectorField:
    name_a = getattr(a, "name", "a")
    name_b = getattr(b, "name", "b")
    return VectorField(f"[{name_a},{name_b}]",
                       lambda x: _bracket_components(a, b, x))


def lie_bracket(a, b, x) -> np.ndarray:
    """[a,b] evaluated at x (plain float or batched-array components)."""
    return np.asarray(_bracket_components(a, b, list(_components(x))))


def parse_word(word) -> tuple[str, ...]:
    """Split a bracket word like "ffg2" or ("f","g1") into field tokens."""
    if not isinstance(word, str):
        tokens = tuple(word)
    else:
        tokens = tuple(_re.findall(r"f|g\d+", word))
        if "".join(tokens) != word:
            raise ValueError(f"cannot parse bracket word {word!r}")
    if not tokens:
        raise ValueError("empty bracket word")
    return tokens


def field_by_token(sys: FullyActuatedSystem, token: str) -> VectorField:
    if token == "f":
        return drift_field(sys)
    if token.startswith("g"):
        i = int(token[1:]) - 1
        if not 0 <= i < sys.n:
            raise ValueError(f"no input channel {token!r} for n = {sys.n}")
        return input_field(sys, i)
    raise ValueError(f"unknown field token {token!r}")


def word_field(sys: FullyActuatedSystem, word) -> VectorField:
    """Right-nested bracket field for a word over {f, g1..gn}."""
    tokens = parse_word(word)
    if len(tokens) > MAX_WORD:
        raise DerivativeUnavailable(
            f"bracket word {word!r} exceeds supported length {MAX_WORD}")
    fld = field_by_token(sys, tokens[-1])
    for tok in reversed(tokens[:-1]):
        fld = bracket_field(field_by_token(sys, tok), fld)
    return fld


def iterated_bracket(sys: FullyActuatedSystem, word, x) -> np.ndarray:
    """Evaluate the right-nested bracket of a word (length <= 4) at x."""
    return np.asarray(word_field(sys, word)(list(_components(x))))


@dataclass(frozen=True)
class AlphaTensor:
    """Coefficients expressing each g_i f g_j in the {g_k} basis at a point.

    values[i, j, k] multiplies g_k in the expansion of g_i f g_j; symmetric
    in (i, j) because the inputs commute.  Batched evaluation appends the
    sample axis last.
    """

    values: np.ndarray
    residual: float

    def beta(self, u) -> np.ndarray:
        """beta[i, k] = sum_j u_j * alpha[i, j, k] for a fixed control u."""
        u = np.asarray(u, dtype=float)
        return np.einsum("j,ijk...->ik...", u, self.values)


def beta_matrix(alpha: AlphaTensor, u) -> np.ndarray:
    return alpha.beta(u)


def alpha_coefficients(sys: FullyActuatedSystem, x, rtol: float = 1e-9) -> AlphaTensor:
    """Solve the bottom-block systems (g_i f g_j) = sum_k alpha_ijk g_k.

    Raises SpanViolation when a reconstruction residual exceeds
    rtol * max(||g_i f g_j||, 1) -- the theory guarantees membership, so a
    violation signals a modeling bug.
    """
    n = sys.n
    comps = list(_components(x))
    _, L = sys.dyn(comps)
    Lm = np.asarray(L)                       # (n, n) or (n, n, N)
    batched = Lm.ndim == 3
    Ab = np.moveaxis(Lm, -1, 0) if batched else Lm

    fgj = [word_field(sys, f"fg{j + 1}") for j in range(n)]
    gi = [input_field(sys, i) for i in range(n)]

    values = np.empty((n, n, n) + Lm.shape[2:], dtype=float)
    worst = 0.0
    for i in range(n):
        for j in range(i, n):
            w = np.asarray(_bracket_components(gi[i], fgj[j], comps))
            bottom = np.moveaxis(w[n:], -1, 0) if batched else w[n:]
            coef = np.linalg.solve(Ab, bottom[..., None])[..., 0]
            coef_t = np.moveaxis(coef, 0, -1) if batched else coef
            recon_bottom = np.einsum("kr...,r...->k...", Lm, coef_t)
            recon = np.concatenate([np.zeros_like(w[:n]), recon_bottom])
            scale = np.maximum(np.linalg.norm(w, axis=0), 1.0)
            res = np.linalg.norm(w - recon, axis=0) / scale
            worst = max(worst, float(np.max(res)))
            values[i, j] = coef_t
            values[j, i] = coef_t
    if worst > rtol:
        raise SpanViolation(
            f"bracket span residual {worst:.3e} exceeds rtol {rtol:.1e}")
    return AlphaTensor(values=values, residual=worst)


def _stacked_fields(sys: FullyActuatedSystem, words, x) -> np.ndarray:
    comps = list(_components(x))
    cols = [np.asarray(word_field(sys, w)(comps)) for w in words]
    A = np.stack(cols, axis=1)               # (2n, m) or (2n, m, N)
    if A.ndim == 3:
        A = np.moveaxis(A, -1, 0)            # (N, 2n, m)
    return A


def frame_rank(sys: FullyActuatedSystem, x) -> float | np.ndarray:
    """Smallest singular value of [g_1..g_n, fg_1..fg_n] at x."""
    words = [f"g{i + 1}" for i in range(sys.n)] + \
            [f"fg{i + 1}" for i in range(sys.n)]
    A = _stacked_fields(sys, words, x)
    s = np.linalg.svd(A, compute_uv=False)
    smin = s[..., -1]
    return float(smin) if smin.ndim == 0 else smin


def b_set_certificate(sys: FullyActuatedSystem, x, c: float,
                      rtol: float = 1e-10):
    """Independence certificate for {g2, fg2, ffg2, fffg2 + c*g1ffg2}.

    c is the bang value of the first channel.  Returns (ok, evidence) where
    ok is True iff the four vectors are independent at x, judged by
    sigma_min > rtol * sigma_max (scale-invariant).  Batched x returns
    arrays.
    """
    if sys.n != 2:
        raise ValueError("the B-set certificate is specific to n = 2")
    comps = list(_components(x))
    g2c = np.asarray(word_field(sys, "g2")(comps))
    fg2c = np.asarray(word_field(sys, "fg2")(comps))
    ffg2c = np.asarray(word_field(sys, "ffg2")(comps))
    fffg2c = np.asarray(word_field(sys, "fffg2")(comps))
    g1ffg2c = np.asarray(word_field(sys, "g1ffg2")(comps))
    A = np.stack([g2c, fg2c, ffg2c, fffg2c + c * g1ffg2c], axis=1)
    if A.ndim == 3:
        A = np.moveaxis(A, -1, 0)
    s = np.linalg.svd(A, compute_uv=False)
    smin, smax = s[..., -1], s[..., 0]
    ok = smin > rtol * smax
    evidence = {"sigma_min": smin if smin.ndim else float(smin),
                "sigma_max": smax if smax.ndim else float(smax)}
    if smin.ndim == 0:
        return bool(ok), evidence
    return ok, evidence


@dataclass(frozen=True)
class BracketTableau:
    """Bracket family entering the first-channel singular law at one state.

    Components are scalar-typed like the input (floats or batched arrays);
    produced by shared dual evaluations and cross-checked against the
    word_field path in the test suite.  df_cols and dL carry the
    first-order Jacobian data (columns of Df, entries of DL) so the
    adjoint equation costs no extra evaluations.
    """

    f: list
    g1: list
    g2: list
    fg1: list
    fg2: list
    ffg1: list
    g1fg1: list
    g1fg2: list
    L: list
    df_cols: list      # df_cols[i] = Df . e_i, length-4 columns
    dL: list           # dL[r][c][i] = d L_rc / d x_i


def u1_singular_brackets(sys: FullyActuatedSystem, x) -> BracketTableau:
    """Fused evaluation of the brackets needed by the u1-singular law.

    One plain, four first-order (basis directions, giving the full
    Jacobians of f and G) and four second-order evaluations of sys.dyn;
    all remaining brackets are assembled by matrix-vector work.  This is
    the integration hot path.
    """
    if sys.n != 2:
        raise ValueError("fused tableau implemented for n = 2")
    comps = list(_components(x))
    zero = comps[0] * 0.0
    one = zero + 1.0
    f0, L0 = sys.dyn(comps)
    g1 = [zero, zero, L0[0][0], L0[1][0]]
    g2 = [zero, zero, L0[0][1], L0[1][1]]

    df_cols = []
    dL = [[[None] * 4 for _ in range(2)], [[None] * 4 for _ in range(2)]]
    for i in range(4):
        pt = [Dual(comps[j], one if j == i else zero) for j in range(4)]
        fD, LD = sys.dyn(pt)
        df_cols.append([c.im for c in fD])
        for r in range(2):
            for c in range(2):
                dL[r][c][i] = LD[r][c].im

    def df_dot(v):
        return [df_cols[0][r] * v[0] + df_cols[1][r] * v[1]
                + df_cols[2][r] * v[2] + df_cols[3][r] * v[3]
                for r in range(4)]

    def dg_dot(c, v):
        return [zero, zero,
                dL[0][c][0] * v[0] + dL[0][c][1] * v[1]
                + dL[0][c][2] * v[2] + dL[0][c][3] * v[3],
                dL[1][c][0] * v[0] + dL[1][c][1] * v[1]
                + dL[1][c][2] * v[2] + dL[1][c][3] * v[3]]

    df_g1 = df_dot(g1)
    df_g2 = df_dot(g2)
    df_f = df_dot(f0)
    dg1_f = dg_dot(0, f0)
    dg2_f = dg_dot(1, f0)
    dg1_g1 = dg_dot(0, g1)
    dg2_g1 = dg_dot(1, g1)

    # [f, g] = Dg.f - Df.g
    fg1 = [a - b for a, b in zip(dg1_f, df_g1)]
    fg2 = [a - b for a, b in zip(dg2_f, df_g2)]
    df_fg1 = df_dot(fg1)
    dg1_fg1 = dg_dot(0, fg1)
    dg1_fg2 = dg_dot(0, fg2)

    def d2(v, w, z):
        """dyn at x + eps*v + delta*(w + eps*z); the d-slots carry
        D2phi(v, w) + Dphi.z for phi = f and each entry of L."""
        pt = [HyperDual(comps[i], v[i], w[i], z[i]) for i in range(4)]
        fH, LH = sys.dyn(pt)
        ddf = [c.d for c in fH]
        ddL = [[c.d for c in row] for row in LH]
        return ddf, ddL

    e1f, e1L = d2(f0, g1, dg1_f)     # f-slot: D2f(f,g1) + Df.Dg1.f
    _, e2L = d2(f0, f0, df_f)        # G1-slot: D2g1(f,f) + Dg1.Df.f
    e3f, _ = d2(g1, g1, dg1_g1)      # D2f(g1,g1) + Df.Dg1.g1
    e4f, _ = d2(g1, g2, dg2_g1)      # D2f(g1,g2) + Df.Dg2.g1

    # D(fg1).f = [D2g1(f,f) + Dg1.Df.f] - [D2f(f,g1) + Df.Dg1.f]
    b2 = [zero, zero, e2L[0][0], e2L[1][0]]
    dfg1_f = [b2[i] - e1f[i] for i in range(4)]
    ffg1 = [a - b for a, b in zip(dfg1_f, df_fg1)]

    # Symmetry of second derivatives recovers the (g1, f) pairings from
    # the e1 G-slots: D2gj(g1,f) = e1L_j - Dgj.Dg1.f.
    b1_1 = [zero, zero, e1L[0][0], e1L[1][0]]
    b1_2 = [zero, zero, e1L[0][1], e1L[1][1]]
    dg1_dg1f = dg_dot(0, dg1_f)
    dg2_dg1f = dg_dot(1, dg1_f)
    dg1_dfg1 = dg_dot(0, df_g1)
    dg2_dfg1 = dg_dot(1, df_g1)

    dfg1_g1 = [b1_1[i] - dg1_dg1f[i] + dg1_dfg1[i] - e3f[i] for i in range(4)]
    g1fg1 = [a - b for a, b in zip(dfg1_g1, dg1_fg1)]

    dfg2_g1 = [b1_2[i] - dg2_dg1f[i] + dg2_dfg1[i] - e4f[i] for i in range(4)]
    g1fg2 = [a - b for a, b in zip(dfg2_g1, dg1_fg2)]

    return BracketTableau(f=f0, g1=g1, g2=g2, fg1=fg1, fg2=fg2,
                          ffg1=ffg1, g1fg1=g1fg1, g1fg2=g1fg2, L=L0,
                          df_cols=df_cols, dL=dL)
