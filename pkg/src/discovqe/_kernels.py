"""Compiled inner loops over coupled-pair tables.

A table is flat: element ``k`` couples basis states ``I[k] -> J[k]`` with
sign ``S[k]`` (kappa |I> = S |J>).  Elements are grouped into stages
(``stage_ptr``) and stages into operators (``op_ptr``).  Inside one stage
every basis state appears at most once, so each stage is a set of disjoint
2x2 rotations.
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def rotate_op(psi, I, J, S, stage_ptr, op_ptr, op, c, s):
    for st in range(op_ptr[op], op_ptr[op + 1]):
        for k in range(stage_ptr[st], stage_ptr[st + 1]):
            i = I[k]
            j = J[k]
            x = psi[i]
            y = psi[j]
            ss = s * S[k]
            psi[i] = c * x - ss * y
            psi[j] = c * y + ss * x


@njit(cache=True, nogil=True)
def generator_into(out, psi, I, J, S, stage_ptr, op_ptr, op):
    for st in range(op_ptr[op], op_ptr[op + 1]):
        for k in range(stage_ptr[st], stage_ptr[st + 1]):
            out[J[k]] += S[k] * psi[I[k]]
            out[I[k]] -= S[k] * psi[J[k]]


@njit(cache=True, nogil=True)
def generator_overlap(sigma, psi, I, J, S, stage_ptr, op_ptr, op):
    """<sigma| kappa |psi> for real vectors."""
    acc = 0.0
    for st in range(op_ptr[op], op_ptr[op + 1]):
        for k in range(stage_ptr[st], stage_ptr[st + 1]):
            acc += S[k] * (sigma[J[k]] * psi[I[k]] - sigma[I[k]] * psi[J[k]])
    return acc


@njit(cache=True, nogil=True)
def product_state(psi, I, J, S, stage_ptr, op_ptr, seq, amps):
    """Apply exp(t_i kappa_i) for i = 0..M-1 in place, first element acting first."""
    for m in range(seq.shape[0]):
        t = amps[m]
        if t != 0.0:
            rotate_op(psi, I, J, S, stage_ptr, op_ptr, seq[m], np.cos(t), np.sin(t))


@njit(cache=True, nogil=True)
def reverse_gradient(psi, sigma, I, J, S, stage_ptr, op_ptr, seq, amps, grad):
    """dE/dt_i = 2 <sigma_i| kappa_i |psi_i>, unwinding psi and sigma = H psi in place."""
    for m in range(seq.shape[0] - 1, -1, -1):
        op = seq[m]
        grad[m] = 2.0 * generator_overlap(sigma, psi, I, J, S, stage_ptr, op_ptr, op)
        t = amps[m]
        if t != 0.0:
            c = np.cos(t)
            s = -np.sin(t)
            rotate_op(psi, I, J, S, stage_ptr, op_ptr, op, c, s)
            rotate_op(sigma, I, J, S, stage_ptr, op_ptr, op, c, s)


@njit(cache=True, nogil=True)
def selection_gradients(sigma, psi, I, J, S, stage_ptr, op_ptr, out):
    for op in range(out.shape[0]):
        out[op] = 2.0 * generator_overlap(sigma, psi, I, J, S, stage_ptr, op_ptr, op)


@njit(cache=True, nogil=True)
def csr_matvec(indptr, indices, data, x, out):
    for r in range(out.shape[0]):
        acc = 0.0
        for k in range(indptr[r], indptr[r + 1]):
            acc += data[k] * x[indices[k]]
        out[r] = acc


@njit(cache=True, nogil=True)
def _energy_grad(x, grad, psi, sigma, hp, hi, hd, core, ref, I, J, S, stage_ptr, op_ptr, seq):
    psi[:] = 0.0
    psi[ref] = 1.0
    product_state(psi, I, J, S, stage_ptr, op_ptr, seq, x)
    csr_matvec(hp, hi, hd, psi, sigma)
    e = core + psi @ sigma
    reverse_gradient(psi, sigma, I, J, S, stage_ptr, op_ptr, seq, x, grad)
    return e


@njit(cache=True, nogil=True)
def _cubic_min(a, fa, da, b, fb, db):
    if a == b:
        return np.nan
    d1 = da + db - 3.0 * (fa - fb) / (a - b)
    disc = d1 * d1 - da * db
    if disc < 0:
        return np.nan
    d2 = np.sqrt(disc)
    if b < a:
        d2 = -d2
    denom = db - da + 2.0 * d2
    if denom == 0:
        return np.nan
    return b - (b - a) * (db + d2 - d1) / denom


@njit(cache=True, nogil=True)
def relax_bfgs(x0, gtol, max_iterations, max_step, hp, hi, hd, core, ref, I, J, S, stage_ptr, op_ptr, seq):
    """Dense BFGS with a strong-Wolfe line search on the product-state energy.

    Returns (x, energy, gradient, converged, iterations, evaluations).  The
    Armijo test carries a slack of a few ulps of |E| so that the last digits
    of descent are not rejected as round-off.
    """
    c1 = 1e-4
    c2 = 0.9
    max_ls = 30
    n = x0.shape[0]
    dim = hp.shape[0] - 1
    psi = np.empty(dim)
    sigma = np.empty(dim)
    x = x0.copy()
    g = np.empty(n)
    f = _energy_grad(x, g, psi, sigma, hp, hi, hd, core, ref, I, J, S, stage_ptr, op_ptr, seq)
    evals = 1
    if n == 0:
        return x, f, g, True, 0, evals
    Hinv = np.eye(n)
    fresh = True
    gt = np.empty(n)
    xt = np.empty(n)
    glo = np.empty(n)
    ghi = np.empty(n)
    it = 0
    while it < max_iterations:
        if np.max(np.abs(g)) <= gtol:
            return x, f, g, True, it, evals
        it += 1
        d = -(Hinv @ g)
        dg0 = g @ d
        if dg0 >= 0:
            Hinv = np.eye(n)
            fresh = True
            d = -g.copy()
            dg0 = g @ d
        a = 1.0
        dmax = np.max(np.abs(d))
        if dmax > max_step:
            a = max_step / dmax
        slack = 64 * 2.220446049250313e-16 * max(1.0, abs(f))

        # bracketing phase
        ok = False
        a_acc = 0.0
        f_acc = f
        a_prev = 0.0
        f_prev = f
        dg_prev = dg0
        glo[:] = g
        al = 0.0
        fl = f
        dl = dg0
        ah = 0.0
        fh = f
        dh = dg0
        bracketed = False
        ne = 0
        while ne < max_ls:
            xt[:] = x + a * d
            ft = _energy_grad(xt, gt, psi, sigma, hp, hi, hd, core, ref, I, J, S, stage_ptr, op_ptr, seq)
            evals += 1
            ne += 1
            if not np.isfinite(ft):
                a = 0.5 * (a_prev + a)
                continue
            dgt = gt @ d
            if ft > f + c1 * a * dg0 + slack or (ne > 1 and ft >= f_prev):
                al, fl, dl = a_prev, f_prev, dg_prev
                ah, fh, dh = a, ft, dgt
                ghi[:] = gt
                bracketed = True
                break
            if abs(dgt) <= -c2 * dg0:
                ok = True
                a_acc = a
                f_acc = ft
                glo[:] = gt
                break
            if dgt >= 0:
                al, fl, dl = a, ft, dgt
                glo[:] = gt
                ah, fh, dh = a_prev, f_prev, dg_prev
                bracketed = True
                break
            a_prev, f_prev, dg_prev = a, ft, dgt
            glo[:] = gt
            a = min(2.0 * a, 1e3)

        # zoom phase
        if bracketed:
            while ne < max_ls:
                left = min(al, ah)
                right = max(al, ah)
                width = right - left
                if width < 1e-14 * max(1.0, right):
                    break
                trial = _cubic_min(al, fl, dl, ah, fh, dh)
                if not np.isfinite(trial) or trial < left + 0.1 * width or trial > right - 0.1 * width:
                    trial = 0.5 * (al + ah)
                xt[:] = x + trial * d
                ft = _energy_grad(xt, gt, psi, sigma, hp, hi, hd, core, ref, I, J, S, stage_ptr, op_ptr, seq)
                evals += 1
                ne += 1
                dgt = gt @ d
                if ft > f + c1 * trial * dg0 + slack or ft >= fl:
                    ah, fh, dh = trial, ft, dgt
                else:
                    if abs(dgt) <= -c2 * dg0:
                        ok = True
                        a_acc = trial
                        f_acc = ft
                        glo[:] = gt
                        break
                    if dgt * (ah - al) >= 0:
                        ah, fh, dh = al, fl, dl
                    al, fl, dl = trial, ft, dgt
                    glo[:] = gt
            if not ok and al > 0 and fl <= f + slack:
                ok = True
                a_acc = al
                f_acc = fl
        if not ok:
            if fresh:
                return x, f, g, False, it, evals
            Hinv = np.eye(n)
            fresh = True
            continue
        s = a_acc * d
        y = glo - g
        sy = s @ y
        x = x + s
        f = f_acc
        g = glo.copy()
        if sy > 1e-300:
            if fresh:
                Hinv = np.eye(n) * (sy / (y @ y))
            rho = 1.0 / sy
            Hy = Hinv @ y
            Hinv = Hinv + ((sy + y @ Hy) * rho * rho) * np.outer(s, s) - rho * (np.outer(Hy, s) + np.outer(s, Hy))
            fresh = False
    return x, f, g, np.max(np.abs(g)) <= gtol, it, evals
