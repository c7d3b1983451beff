"""Compiled Gibbs/Metropolis steps of the MINTS sampler.

State is packed into a few arrays so the kernels stay allocation-free:

``G`` (4, C, T)
    current X grid, Y grid, f(X) and h(X).
``cvec`` (4, C)
    X_0, Y_0, drift gamma_c, intercept alpha_c.
``par`` (8,)
    scalar parameters, indexed by the constants below.
``B`` (4, C, T) / ``B0`` (4, C)
    cell bounds (x_low, x_up, y_low, y_cap) and start-year bounds
    (x0_low, x0_up, y0_low, y0_up).
``prop`` (4,)
    phi and the base proposal covariance entries c00, c01, c11.
``counters`` (4,) int64
    MH accepts, MH proposals, degenerate X windows, degenerate Y windows.

Every step updates the arrays in place. Steps follow the printed order of the
algorithm: variances and (beta, rho) first, then hierarchies, then the
descending-time imputation of X, X_0, Y and Y_0.
"""

import math

import numpy as np
from numba import njit

from mints.distributions import ig_draw, norm_cdf, tn_draw
from mints.priors import (D_0, D_DRIFT, D_X, D_Y, MU_XE, MU_YE, NU0, NU_DRIFT, R,
                          VAR_XE, VAR_YE, ZETA0_2, ZETA_DRIFT2)

SX2, MU_DRIFT, S_DRIFT2, BETA, RHO, SY2, MU0, S0_2 = range(8)
N_PAR = 8
X0, Y0, GAMMA, ALPHA = range(4)
ACC, PROPOSED, DEGEN_X, DEGEN_Y = range(4)
N_TRACE_PAR = 6  # beta, rho, sigma_X2, sigma_Y2, mu_drift, mu_0


@njit(cache=True)
def spline_at(x, k, v, lo, hi):
    n = k.shape[0]
    if x <= k[0]:
        y = v[0]
    elif x >= k[n - 1]:
        y = v[n - 1]
    else:
        a, b = 0, n - 1
        while b - a > 1:
            m = (a + b) // 2
            if k[m] <= x:
                a = m
            else:
                b = m
        y = v[a] + (v[b] - v[a]) * (x - k[a]) / (k[b] - k[a])
    if y < lo:
        y = lo
    elif y > hi:
        y = hi
    return y


@njit(cache=True)
def refresh_fh(G, c, fk, fv, fr, hk, hv, hr):
    for t in range(G.shape[2]):
        x = G[0, c, t]
        G[2, c, t] = spline_at(x, fk, fv, fr[0], fr[1])
        G[3, c, t] = spline_at(x, hk, hv, hr[0], hr[1])


@njit(cache=True)
def _tn_safe(rng, mu, var, lo, up, counters, slot):
    # an empty window can only arise from an imputed neighbour touching a bound
    if not up > lo:
        counters[slot] += 1
        return lo
    return tn_draw(rng, mu, var, lo, up)


# ---------------------------------------------------------------- step 1
@njit(cache=True)
def y_residual_ss(G, cvec, beta, rho):
    ss = 0.0
    for c in range(G.shape[1]):
        prev = cvec[Y0, c]
        a = cvec[ALPHA, c]
        for t in range(G.shape[2]):
            y = G[1, c, t]
            e = y - rho * prev - a - beta * G[2, c, t]
            ss += e * e / G[3, c, t]
            prev = y
    return ss


@njit(cache=True)
def step_sigma_y(rng, G, cvec, par, cp):
    n = G.shape[1] * G.shape[2]
    ss = y_residual_ss(G, cvec, par[BETA], par[RHO])
    par[SY2] = ig_draw(rng, 2.0 + 0.5 * n, cp[D_Y] + 0.5 * ss)


# ---------------------------------------------------------------- step 2
@njit(cache=True)
def beta_rho_stats(G, cvec):
    """Weighted cross-products of (Y - alpha, f(X), Y_prev) with weights 1/h."""
    S = np.zeros(6)  # ee, ef, ep, ff, fp, pp
    for c in range(G.shape[1]):
        prev = cvec[Y0, c]
        a = cvec[ALPHA, c]
        for t in range(G.shape[2]):
            w = 1.0 / G[3, c, t]
            e = G[1, c, t] - a
            f = G[2, c, t]
            S[0] += w * e * e
            S[1] += w * e * f
            S[2] += w * e * prev
            S[3] += w * f * f
            S[4] += w * f * prev
            S[5] += w * prev * prev
            prev = G[1, c, t]
    return S


@njit(cache=True)
def beta_rho_loglik(S, beta, rho, sy2):
    q = (S[0] - 2.0 * beta * S[1] - 2.0 * rho * S[2] + beta * beta * S[3]
         + 2.0 * beta * rho * S[4] + rho * rho * S[5])
    return -0.5 * q / sy2


@njit(cache=True)
def log_rho_mass(rho, sd):
    """log P(proposal rho lands in [0, 1] | centre rho)."""
    p = norm_cdf((1.0 - rho) / sd) - norm_cdf(-rho / sd)
    return math.log(p) if p > 0.0 else -np.inf


@njit(cache=True)
def propose_beta_rho(rng, beta, rho, prop):
    phi, c00, c01, c11 = prop[0], prop[1], prop[2], prop[3]
    rho_new = tn_draw(rng, rho, phi * c11, 0.0, 1.0)
    cmean = beta + c01 / c11 * (rho_new - rho)
    cvar = phi * (c00 - c01 * c01 / c11)
    beta_new = cmean + math.sqrt(cvar) * rng.standard_normal()
    return beta_new, rho_new


@njit(cache=True)
def log_accept_ratio(S, beta, rho, beta_new, rho_new, sy2, prop):
    sd = math.sqrt(prop[0] * prop[3])
    la = beta_rho_loglik(S, beta_new, rho_new, sy2) - beta_rho_loglik(S, beta, rho, sy2)
    la += -0.5 * (beta_new * beta_new - beta * beta)  # N(0, 1) prior on beta
    la += log_rho_mass(rho, sd) - log_rho_mass(rho_new, sd)
    return la


@njit(cache=True)
def step_beta_rho(rng, G, cvec, par, prop, counters):
    """One MH update of (beta, rho); returns the acceptance probability."""
    S = beta_rho_stats(G, cvec)
    beta, rho = par[BETA], par[RHO]
    beta_new, rho_new = propose_beta_rho(rng, beta, rho, prop)
    la = log_accept_ratio(S, beta, rho, beta_new, rho_new, par[SY2], prop)
    counters[PROPOSED] += 1
    if math.log(rng.random()) < la:
        par[BETA] = beta_new
        par[RHO] = rho_new
        counters[ACC] += 1
    return 1.0 if la >= 0.0 else math.exp(la)


# ---------------------------------------------------------------- step 3
@njit(cache=True)
def x_residual_ss(G, cvec):
    ss = 0.0
    for c in range(G.shape[1]):
        prev = cvec[X0, c]
        g = cvec[GAMMA, c]
        for t in range(G.shape[2]):
            e = G[0, c, t] - prev - g
            ss += e * e
            prev = G[0, c, t]
    return ss


@njit(cache=True)
def step_sigma_x(rng, G, cvec, par, cp):
    n = G.shape[1] * G.shape[2]
    par[SX2] = ig_draw(rng, 2.0 + 0.5 * n, cp[D_X] + 0.5 * x_residual_ss(G, cvec))


# ---------------------------------------------------------------- steps 4, 5
@njit(cache=True)
def _hyper_draw(rng, values, nu, zeta2, delta, s2_prev):
    C = values.shape[0]
    prec = 1.0 / zeta2 + C / s2_prev
    mean = (nu / zeta2 + values.sum() / s2_prev) / prec
    mu = mean + math.sqrt(1.0 / prec) * rng.standard_normal()
    ss = 0.0
    for c in range(C):
        ss += (values[c] - mu) ** 2
    s2 = ig_draw(rng, 2.0 + 0.5 * C, delta + 0.5 * ss)
    return mu, s2


@njit(cache=True)
def step_drift_hyper(rng, cvec, par, cp):
    mu, s2 = _hyper_draw(rng, cvec[GAMMA], cp[NU_DRIFT], cp[ZETA_DRIFT2],
                         cp[D_DRIFT], par[S_DRIFT2])
    par[MU_DRIFT] = mu
    par[S_DRIFT2] = s2


@njit(cache=True)
def step_gamma(rng, G, cvec, par):
    T = G.shape[2]
    sd2, sx2 = par[S_DRIFT2], par[SX2]
    prec = 1.0 / sd2 + T / sx2
    sd = math.sqrt(1.0 / prec)
    for c in range(G.shape[1]):
        total = G[0, c, T - 1] - cvec[X0, c]  # sum of first differences
        mean = (par[MU_DRIFT] / sd2 + total / sx2) / prec
        cvec[GAMMA, c] = mean + sd * rng.standard_normal()


@njit(cache=True)
def step_intercept_hyper(rng, cvec, par, cp):
    mu, s2 = _hyper_draw(rng, cvec[ALPHA], cp[NU0], cp[ZETA0_2], cp[D_0], par[S0_2])
    par[MU0] = mu
    par[S0_2] = s2


@njit(cache=True)
def alpha_conditional(G, cvec, par, c):
    s02, sy2 = par[S0_2], par[SY2]
    beta, rho = par[BETA], par[RHO]
    prec = 1.0 / s02
    num = par[MU0] / s02
    prev = cvec[Y0, c]
    for t in range(G.shape[2]):
        w = 1.0 / (sy2 * G[3, c, t])
        y = G[1, c, t]
        prec += w
        num += w * (y - rho * prev - beta * G[2, c, t])
        prev = y
    return num / prec, 1.0 / prec


@njit(cache=True)
def step_alpha(rng, G, cvec, par):
    for c in range(G.shape[1]):
        m, v = alpha_conditional(G, cvec, par, c)
        cvec[ALPHA, c] = m + math.sqrt(v) * rng.standard_normal()


# ---------------------------------------------------------------- steps 6, 7
@njit(cache=True)
def x_conditional(G, cvec, par, c, t):
    T = G.shape[2]
    prev = cvec[X0, c] if t == 0 else G[0, c, t - 1]
    if t == T - 1:
        return prev + cvec[GAMMA, c], par[SX2]
    # as printed: midpoint of the neighbours, drift omitted
    return 0.5 * (G[0, c, t + 1] + prev), 0.5 * par[SX2]


@njit(cache=True)
def x_window(G, obs, B, track, c, t):
    lo = B[0, c, t]
    if track and obs[1, c, t] and G[1, c, t] > lo:
        lo = G[1, c, t]  # keep Y <= X satisfiable where Y is observed
    return lo, B[1, c, t]


@njit(cache=True)
def impute_x(rng, G, obs, cvec, par, B, track, counters, fk, fv, fr, hk, hv, hr):
    for c in range(G.shape[1]):
        touched = False
        for t in range(G.shape[2] - 1, -1, -1):
            if obs[0, c, t]:
                continue
            m, v = x_conditional(G, cvec, par, c, t)
            lo, up = x_window(G, obs, B, track, c, t)
            G[0, c, t] = _tn_safe(rng, m, v, lo, up, counters, DEGEN_X)
            touched = True
        if touched:
            refresh_fh(G, c, fk, fv, fr, hk, hv, hr)


@njit(cache=True)
def x0_conditional(G, cvec, par, cp, c):
    prec = 1.0 / par[SX2] + 1.0 / cp[VAR_XE]
    num = (G[0, c, 0] - cvec[GAMMA, c]) / par[SX2] + cp[MU_XE] / cp[VAR_XE]
    return num / prec, 1.0 / prec


@njit(cache=True)
def step_x0(rng, G, cvec, par, cp, B0, counters):
    for c in range(G.shape[1]):
        m, v = x0_conditional(G, cvec, par, cp, c)
        cvec[X0, c] = _tn_safe(rng, m, v, B0[0, c], B0[1, c], counters, DEGEN_X)


# ---------------------------------------------------------------- steps 8, 9
@njit(cache=True)
def y_conditional(G, cvec, par, c, t):
    T = G.shape[2]
    a, beta, rho, sy2 = cvec[ALPHA, c], par[BETA], par[RHO], par[SY2]
    prev = cvec[Y0, c] if t == 0 else G[1, c, t - 1]
    v_here = sy2 * G[3, c, t]
    local = rho * prev + a + beta * G[2, c, t]
    if t == T - 1:
        return local, v_here
    v_next = sy2 * G[3, c, t + 1]
    prec = rho * rho / v_next + 1.0 / v_here
    num = rho * (G[1, c, t + 1] - a - beta * G[2, c, t + 1]) / v_next + local / v_here
    return num / prec, 1.0 / prec


@njit(cache=True)
def y_window(G, B, track, c, t):
    up = B[3, c, t]
    if track and G[0, c, t] < up:
        up = G[0, c, t]
    return B[2, c, t], up


@njit(cache=True)
def impute_y(rng, G, obs, cvec, par, B, track, counters):
    for c in range(G.shape[1]):
        for t in range(G.shape[2] - 1, -1, -1):
            if obs[1, c, t]:
                continue
            m, v = y_conditional(G, cvec, par, c, t)
            lo, up = y_window(G, B, track, c, t)
            G[1, c, t] = _tn_safe(rng, m, v, lo, up, counters, DEGEN_Y)


@njit(cache=True)
def y0_conditional(G, cvec, par, cp, c):
    r = cp[R]
    v_prior = (1.0 - r * r) * cp[VAR_YE]
    m_prior = cp[MU_YE] + r * math.sqrt(cp[VAR_YE] / cp[VAR_XE]) * (cvec[X0, c] - cp[MU_XE])
    rho = par[RHO]
    v1 = par[SY2] * G[3, c, 0]
    prec = rho * rho / v1 + 1.0 / v_prior
    num = rho * (G[1, c, 0] - cvec[ALPHA, c] - par[BETA] * G[2, c, 0]) / v1 + m_prior / v_prior
    return num / prec, 1.0 / prec


@njit(cache=True)
def step_y0(rng, G, cvec, par, cp, B0, counters):
    for c in range(G.shape[1]):
        m, v = y0_conditional(G, cvec, par, cp, c)
        cvec[Y0, c] = _tn_safe(rng, m, v, B0[2, c], B0[3, c], counters, DEGEN_Y)


# ---------------------------------------------------------------- sweep / run
@njit(cache=True)
def sweep(rng, G, obs, cvec, par, cp, prop, counters, B, B0, track,
          fk, fv, fr, hk, hv, hr):
    step_sigma_y(rng, G, cvec, par, cp)
    acc = step_beta_rho(rng, G, cvec, par, prop, counters)
    step_sigma_x(rng, G, cvec, par, cp)
    step_drift_hyper(rng, cvec, par, cp)
    step_gamma(rng, G, cvec, par)
    step_intercept_hyper(rng, cvec, par, cp)
    step_alpha(rng, G, cvec, par)
    impute_x(rng, G, obs, cvec, par, B, track, counters, fk, fv, fr, hk, hv, hr)
    step_x0(rng, G, cvec, par, cp, B0, counters)
    impute_y(rng, G, obs, cvec, par, B, track, counters)
    step_y0(rng, G, cvec, par, cp, B0, counters)
    return acc


@njit(cache=True)
def _cell_value(G, flat):
    # flat index into the stacked (X, Y) grids
    C, T = G.shape[1], G.shape[2]
    v = flat // (C * T)
    r = flat % (C * T)
    return G[v, r // T, r % T]


@njit(cache=True)
def run(rng, G, obs, cvec, par, cp, prop, counters, B, B0, track,
        fk, fv, fr, hk, hv, hr,
        n_iter, adapt, adapt_offset, target,
        trace, trace_cells, acc_trace, thin, rec_cells, rec):
    """Advance a chain ``n_iter`` sweeps.

    ``trace`` (n_iter rows, or 0 rows to skip) gets the six monitored scalars
    followed by the ``trace_cells`` values each sweep, and ``acc_trace`` the
    running count of accepted (beta, rho) moves. Every ``thin``-th sweep
    the values at ``rec_cells`` go into the next row of ``rec``. With
    ``adapt`` set, log(phi) moves by (acceptance probability - target)/sqrt(k).
    """
    h = 0
    for i in range(n_iter):
        a = sweep(rng, G, obs, cvec, par, cp, prop, counters, B, B0, track,
                  fk, fv, fr, hk, hv, hr)
        if adapt:
            prop[0] *= math.exp((a - target) / math.sqrt(adapt_offset + i + 1.0))
        if trace.shape[0] > 0:
            trace[i, 0] = par[BETA]
            trace[i, 1] = par[RHO]
            trace[i, 2] = par[SX2]
            trace[i, 3] = par[SY2]
            trace[i, 4] = par[MU_DRIFT]
            trace[i, 5] = par[MU0]
            for k in range(trace_cells.shape[0]):
                trace[i, N_TRACE_PAR + k] = _cell_value(G, trace_cells[k])
        if acc_trace.shape[0] > 0:
            acc_trace[i] = counters[ACC]
        if thin > 0 and (i + 1) % thin == 0 and h < rec.shape[0]:
            for k in range(rec_cells.shape[0]):
                rec[h, k] = _cell_value(G, rec_cells[k])
            h += 1
    return h
