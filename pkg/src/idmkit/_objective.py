"""Vectorized penalized log-likelihood objective with analytic gradients.

The per-subject reference lives in :mod:`idmkit.likelihood`; this module
restates the same contributions as batched array operations so that the
optimizer can evaluate the objective and its exact gradient cheaply. The
two paths share the panel layout, so they agree to roundoff, which the
test suite asserts.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .basis import penalty_matrix
from .exceptions import LikelihoodNumericError
from .hazards import SPLINE, ispline_design, mspline_design
from .likelihood import integration_panels, pairwise_sum
from .model import IllnessDeathModel
from .quadrature import panel_nodes
from .records import ObservationPattern, classify_pattern


class InvalidParameterRegion(Exception):
    """Trial parameters outside the objective's domain (e.g. weibull <= 0)."""


class _SplineTransition:
    """Design-matrix backed block: values are linear in theta**2."""

    def __init__(self, spec):
        self.grid = spec.grid
        self.n_par = spec.grid.n_basis

    def point_design(self, t):
        return mspline_design(self.grid, np.asarray(t, dtype=float))

    def cum_design(self, a, b):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        return ispline_design(self.grid, b) - ispline_design(self.grid, a)

    def value(self, design, par):
        return design @ (par**2)

    def value_and_grad(self, design, par):
        return design @ (par**2), design * (2.0 * par)[None, :]


class _WeibullTransition:
    """Closed-form block with theta = (shape, scale), both positive."""

    n_par = 2

    def point_design(self, t):
        t = np.asarray(t, dtype=float)
        return {"t": t, "logt": np.log(t)}

    def cum_design(self, a, b):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        return {"loga": np.log(a), "logb": np.log(b)}

    @staticmethod
    def _check(par):
        shape, scale = par
        if not (np.isfinite(shape) and np.isfinite(scale) and shape > 0 and scale > 0):
            raise InvalidParameterRegion(f"weibull parameters out of domain: {par}")
        return shape, scale, np.log(scale)

    def value(self, design, par):
        shape, scale, logs = self._check(par)
        if "t" in design:
            return (shape / scale) * np.exp((shape - 1.0) * (design["logt"] - logs))
        return np.exp(shape * (design["logb"] - logs)) - np.exp(shape * (design["loga"] - logs))

    def value_and_grad(self, design, par):
        shape, scale, logs = self._check(par)
        grad = np.empty((len(design["logt"] if "t" in design else design["loga"]), 2))
        if "t" in design:
            rel = design["logt"] - logs
            val = (shape / scale) * np.exp((shape - 1.0) * rel)
            grad[:, 0] = val * (1.0 / shape + rel)
            grad[:, 1] = val * (-shape / scale)
            return val, grad
        relb = design["logb"] - logs
        rela = design["loga"] - logs
        pb = np.exp(shape * relb)
        pa = np.exp(shape * rela)
        val = pb - pa
        grad[:, 0] = pb * relb - pa * rela
        grad[:, 1] = -(shape / scale) * val
        return val, grad


def _make_block(spec):
    return _SplineTransition(spec) if spec.form == SPLINE else _WeibullTransition()


class _IntegralTerm:
    """Latent-onset window integral for a batch of records.

    Computes ``Q_i = int_{lo_i}^{hi_i} S00(lo_i, u) a01(u) S11(u, T_i) du``
    (the S11 factor is dropped when ``include_post_onset`` is false, which
    is never the case for the shipped patterns but keeps the term generic).
    """

    def __init__(self, obj, rows, lo, hi, target):
        self.rows = np.asarray(rows, dtype=int)
        n_g = len(self.rows)
        nodes, weights, seg = [], [], []
        for i, (a, b) in enumerate(zip(lo, hi)):
            edges = integration_panels(obj.template, float(a), float(b))
            u, w = panel_nodes(edges, obj.n_quad)
            nodes.append(u)
            weights.append(w)
            seg.append(np.full(u.size, i, dtype=int))
        self.u = np.concatenate(nodes) if nodes else np.empty(0)
        self.w = np.concatenate(weights) if weights else np.empty(0)
        self.seg = np.concatenate(seg) if seg else np.empty(0, dtype=int)
        n_nodes = self.u.size
        self.agg = sp.csr_matrix(
            (np.ones(n_nodes), (self.seg, np.arange(n_nodes))), shape=(n_g, n_nodes)
        )
        lo = np.asarray(lo, dtype=float)
        target = np.asarray(target, dtype=float)
        b01, b02, b12 = obj.blocks
        self.p01 = b01.point_design(self.u)
        self.c01 = b01.cum_design(lo[self.seg], self.u)
        self.c02 = b02.cum_design(lo[self.seg], self.u)
        self.c12 = b12.cum_design(self.u, target[self.seg])

    def _node_values(self, obj, pars, efac):
        e1, e2, e3 = (efac[h][self.rows][self.seg] for h in range(3))
        b01, b02, b12 = obj.blocks
        a01 = b01.value(self.p01, pars[0]) * e1
        expo = (
            b01.value(self.c01, pars[0]) * e1
            + b02.value(self.c02, pars[1]) * e2
            + b12.value(self.c12, pars[2]) * e3
        )
        return a01, np.exp(-expo)

    def value(self, obj, pars, efac):
        a01, surv = self._node_values(obj, pars, efac)
        return self.agg @ (self.w * surv * a01)

    def value_and_grad(self, obj, pars, efac, grad_out, z_mat):
        """Q values plus accumulation of dQ/(dtheta, dbeta) into grad_out.

        ``grad_out`` is the (n_group, n_params) array receiving dQ; the
        caller divides by Q (or composes) afterwards.
        """
        e1, e2, e3 = (efac[h][self.rows][self.seg] for h in range(3))
        b01, b02, b12 = obj.blocks
        a01b, da01b = b01.value_and_grad(self.p01, pars[0])
        a1v, da1 = b01.value_and_grad(self.c01, pars[0])
        a2v, da2 = b02.value_and_grad(self.c02, pars[1])
        a3v, da3 = b12.value_and_grad(self.c12, pars[2])
        a01 = a01b * e1
        expo = a1v * e1 + a2v * e2 + a3v * e3
        surv = np.exp(-expo)
        integ = self.w * surv * a01
        q = self.agg @ integ
        s_point = self.w * surv * e1
        grad_out[:, obj.slices[0]] += self.agg @ (s_point[:, None] * da01b)
        grad_out[:, obj.slices[0]] -= self.agg @ ((integ * e1)[:, None] * da1)
        grad_out[:, obj.slices[2]] -= self.agg @ ((integ * e2)[:, None] * da2)
        grad_out[:, obj.slices[4]] -= self.agg @ ((integ * e3)[:, None] * da3)
        if z_mat.shape[1]:
            zg = z_mat[self.rows]
            grad_out[:, obj.slices[1]] += (self.agg @ (integ * (1.0 - a1v * e1)))[:, None] * zg
            grad_out[:, obj.slices[3]] -= (self.agg @ (integ * a2v * e2))[:, None] * zg
            grad_out[:, obj.slices[5]] -= (self.agg @ (integ * a3v * e3))[:, None] * zg
        return q


class PenalizedObjective:
    """Penalized log-likelihood, gradient, and curvature for a record set.

    Parameters enter as one flat vector in the template model's layout.
    The penalty is ``sum_h kappa_h c_h' P_h c_h`` on the realized spline
    coefficients ``c = theta**2``; weibull transitions are unpenalized.
    """

    def __init__(self, records, template: IllnessDeathModel, kappas=(0.0, 0.0, 0.0),
                 n_quad: int = 30, censor_at_last_alive: bool = False):
        self.records = list(records)
        self.template = template
        self.kappas = tuple(float(k) for k in kappas)
        self.n_quad = n_quad
        self.censor_at_last_alive = censor_at_last_alive
        self.blocks = tuple(_make_block(s) for s in template.specs)
        sl = template.param_slices()
        self.n_params = sl["__len__"]
        # Interleaved (theta01, beta01, theta02, beta02, theta12, beta12) slices.
        self.slices = (sl["theta0->1"], sl["beta0->1"], sl["theta0->2"],
                       sl["beta0->2"], sl["theta1->2"], sl["beta1->2"])
        self.z_mat = np.array([template.z_vector(r.covariates) for r in self.records]) \
            if self.records else np.zeros((0, len(template.covariate_names)))
        if self.z_mat.ndim == 1:
            self.z_mat = self.z_mat.reshape(len(self.records), -1)
        self.ids = [r.id for r in self.records]
        self._penalties = [
            penalty_matrix(s.grid) if (s.form == SPLINE and self.kappas[i] > 0) else None
            for i, s in enumerate(template.specs)
        ]
        self._build_groups()

    # -- static design construction ---------------------------------------

    def _build_groups(self):
        n = len(self.records)
        entry = np.array([r.entry_age for r in self.records])
        first_stop = np.empty(n)
        idx = {p: [] for p in ObservationPattern}
        exact_rows, exact_x, exact_t, exact_dead = [], [], [], []
        for i, rec in enumerate(self.records):
            pat = classify_pattern(rec)
            idx[pat].append(i)
            if rec.onset_exact is not None:
                first_stop[i] = rec.onset_exact
                exact_rows.append(i)
                exact_x.append(rec.onset_exact)
                exact_t.append(rec.terminal_age)
                exact_dead.append(rec.dead)
            elif pat is ObservationPattern.HEALTHY_THEN_DEAD_CONCLUSIVE:
                first_stop[i] = rec.death_age
            else:
                first_stop[i] = rec.last_healthy_age

        b01, b02, b12 = self.blocks
        self.d_init01 = b01.cum_design(entry, first_stop)
        self.d_init02 = b02.cum_design(entry, first_stop)

        rows_c = np.array(idx[ObservationPattern.HEALTHY_THEN_DEAD_CONCLUSIVE], dtype=int)
        self.rows_c = rows_c
        self.d_c_a02 = b02.point_design(np.array(
            [self.records[i].death_age for i in rows_c])) if rows_c.size else None

        self.rows_e = np.array(exact_rows, dtype=int)
        if self.rows_e.size:
            x = np.array(exact_x)
            t = np.array(exact_t)
            self.d_e_a01 = b01.point_design(x)
            self.d_e_a12cum = b12.cum_design(x, t)
            self.e_dead = np.array(exact_dead, dtype=bool)
            dead_ages = np.array([self.records[i].death_age for i in self.rows_e[self.e_dead]])
            self.d_e_a12 = b12.point_design(dead_ages) if dead_ages.size else None

        rows_i = [i for i in idx[ObservationPattern.ILL_CENSORED]
                  + idx[ObservationPattern.ILL_THEN_DEAD]
                  if self.records[i].onset_interval is not None]
        rows_i.sort()
        self.rows_i = np.array(rows_i, dtype=int)
        if self.rows_i.size:
            lo = [self.records[i].onset_interval[0] for i in rows_i]
            hi = [self.records[i].onset_interval[1] for i in rows_i]
            tt = [self.records[i].terminal_age for i in rows_i]
            self.term_i = _IntegralTerm(self, rows_i, lo, hi, tt)
            self.i_dead = np.array([self.records[i].dead for i in rows_i], dtype=bool)
            dead_ages = np.array([self.records[i].death_age
                                  for i in self.rows_i[self.i_dead]])
            self.d_i_a12 = b12.point_design(dead_ages) if dead_ages.size else None

        rows_x = idx[ObservationPattern.DEAD_INCONCLUSIVE]
        self.rows_x = np.array(rows_x, dtype=int)
        if self.rows_x.size:
            lo = np.array([self.records[i].last_healthy_age for i in rows_x])
            d = np.array([self.records[i].death_age for i in rows_x])
            self.term_x = _IntegralTerm(self, rows_x, lo, d, d)
            self.d_x_stay01 = b01.cum_design(lo, d)
            self.d_x_stay02 = b02.cum_design(lo, d)
            self.d_x_a02 = b02.point_design(d)
            self.d_x_a12 = b12.point_design(d)

        rows_h = []
        if self.censor_at_last_alive:
            rows_h = [i for i in idx[ObservationPattern.HEALTHY_CENSORED]
                      if self.records[i].last_alive_age > self.records[i].last_healthy_age]
        self.rows_h = np.array(rows_h, dtype=int)
        if self.rows_h.size:
            lo = np.array([self.records[i].last_healthy_age for i in rows_h])
            c = np.array([self.records[i].last_alive_age for i in rows_h])
            self.term_h = _IntegralTerm(self, rows_h, lo, c, c)
            self.d_h_stay01 = b01.cum_design(lo, c)
            self.d_h_stay02 = b02.cum_design(lo, c)

    # -- parameter plumbing -------------------------------------------------

    def split(self, x):
        x = np.asarray(x, dtype=float)
        thetas = [x[self.slices[0]], x[self.slices[2]], x[self.slices[4]]]
        betas = [x[self.slices[1]], x[self.slices[3]], x[self.slices[5]]]
        return thetas, betas

    def model_at(self, x) -> IllnessDeathModel:
        return self.template.unpack(x)

    def _efactors(self, betas):
        if self.z_mat.shape[1] == 0:
            ones = np.ones(len(self.records))
            return [ones, ones, ones]
        return [np.exp(self.z_mat @ b) for b in betas]

    def _fail(self, rows, what):
        first = self.ids[int(rows[0])] if len(rows) else "<none>"
        raise LikelihoodNumericError(first, what)

    # -- likelihood ----------------------------------------------------------

    def loglik_vector(self, x) -> np.ndarray:
        """Per-subject log contributions (no penalty)."""
        return self._loglik(x, want_grad=False)[0]

    def loglik_and_grads(self, x):
        """Per-subject log contributions and their gradient matrix (n, p)."""
        return self._loglik(x, want_grad=True)

    def _loglik(self, x, want_grad):
        thetas, betas = self.split(x)
        pars = thetas
        efac = self._efactors(betas)
        n = len(self.records)
        ll = np.zeros(n)
        grad = np.zeros((n, self.n_params)) if want_grad else None
        b01, b02, b12 = self.blocks
        z = self.z_mat

        # initial disease-free survival from entry to the first stop age
        for block, tsl, bsl, par, ef in (
            (b01, self.slices[0], self.slices[1], pars[0], efac[0]),
            (b02, self.slices[2], self.slices[3], pars[1], efac[1]),
        ):
            design = self.d_init01 if block is b01 else self.d_init02
            if want_grad:
                val, dval = block.value_and_grad(design, par)
                grad[:, tsl] -= dval * ef[:, None]
                if z.shape[1]:
                    grad[:, bsl] -= (val * ef)[:, None] * z
            else:
                val = block.value(design, par)
            ll -= val * ef

        if self.rows_c.size:
            rows = self.rows_c
            if want_grad:
                a0, da0 = b02.value_and_grad(self.d_c_a02, pars[1])
            else:
                a0 = b02.value(self.d_c_a02, pars[1])
            if np.any(a0 <= 0) or not np.all(np.isfinite(a0)):
                self._fail(rows[(a0 <= 0) | ~np.isfinite(a0)], "a02 at death <= 0")
            ll[rows] += np.log(a0) + np.log(efac[1][rows])
            if want_grad:
                grad[rows[:, None], np.arange(*self.slices[2].indices(self.n_params))[None, :]] \
                    += da0 / a0[:, None]
                if z.shape[1]:
                    grad[rows[:, None], np.arange(*self.slices[3].indices(self.n_params))[None, :]] \
                        += z[rows]

        if self.rows_e.size:
            rows = self.rows_e
            if want_grad:
                a0, da0 = b01.value_and_grad(self.d_e_a01, pars[0])
                a12c, da12c = b12.value_and_grad(self.d_e_a12cum, pars[2])
            else:
                a0 = b01.value(self.d_e_a01, pars[0])
                a12c = b12.value(self.d_e_a12cum, pars[2])
            if np.any(a0 <= 0) or not np.all(np.isfinite(a0)):
                self._fail(rows[(a0 <= 0) | ~np.isfinite(a0)], "a01 at onset <= 0")
            ll[rows] += np.log(a0) + np.log(efac[0][rows]) - a12c * efac[2][rows]
            if want_grad:
                cols0 = np.arange(*self.slices[0].indices(self.n_params))
                cols4 = np.arange(*self.slices[4].indices(self.n_params))
                grad[rows[:, None], cols0[None, :]] += da0 / a0[:, None]
                grad[rows[:, None], cols4[None, :]] -= da12c * efac[2][rows][:, None]
                if z.shape[1]:
                    grad[rows[:, None],
                         np.arange(*self.slices[1].indices(self.n_params))[None, :]] += z[rows]
                    grad[rows[:, None],
                         np.arange(*self.slices[5].indices(self.n_params))[None, :]] \
                        -= (a12c * efac[2][rows])[:, None] * z[rows]
            if np.any(self.e_dead):
                drows = rows[self.e_dead]
                self._add_point_log(ll, grad, want_grad, drows, self.d_e_a12, b12,
                                    pars[2], efac[2], self.slices[4], self.slices[5])

        if self.rows_i.size:
            rows = self.rows_i
            if want_grad:
                gq = np.zeros((rows.size, self.n_params))
                q = self.term_i.value_and_grad(self, pars, efac, gq, z)
            else:
                q = self.term_i.value(self, pars, efac)
            if np.any(q <= 0) or not np.all(np.isfinite(q)):
                self._fail(rows[(q <= 0) | ~np.isfinite(q)], "onset-window integral <= 0")
            ll[rows] += np.log(q)
            if want_grad:
                grad[rows] += gq / q[:, None]
            if np.any(self.i_dead):
                drows = rows[self.i_dead]
                self._add_point_log(ll, grad, want_grad, drows, self.d_i_a12, b12,
                                    pars[2], efac[2], self.slices[4], self.slices[5])

        if self.rows_x.size:
            rows = self.rows_x
            e1r, e2r, e3r = efac[0][rows], efac[1][rows], efac[2][rows]
            if want_grad:
                s1, ds1 = b01.value_and_grad(self.d_x_stay01, pars[0])
                s2, ds2 = b02.value_and_grad(self.d_x_stay02, pars[1])
                a02, da02 = b02.value_and_grad(self.d_x_a02, pars[1])
                a12, da12 = b12.value_and_grad(self.d_x_a12, pars[2])
                gq = np.zeros((rows.size, self.n_params))
                q = self.term_x.value_and_grad(self, pars, efac, gq, z)
            else:
                s1 = b01.value(self.d_x_stay01, pars[0])
                s2 = b02.value(self.d_x_stay02, pars[1])
                a02 = b02.value(self.d_x_a02, pars[1])
                a12 = b12.value(self.d_x_a12, pars[2])
                q = self.term_x.value(self, pars, efac)
            stay = np.exp(-(s1 * e1r + s2 * e2r))
            bracket = stay * a02 * e2r + a12 * e3r * q
            if np.any(bracket <= 0) or not np.all(np.isfinite(bracket)):
                self._fail(rows[(bracket <= 0) | ~np.isfinite(bracket)],
                           "inconclusive-death bracket <= 0")
            ll[rows] += np.log(bracket)
            if want_grad:
                dv = np.zeros((rows.size, self.n_params))
                term1 = (stay * a02 * e2r)
                dv[:, self.slices[0]] -= (term1 * e1r)[:, None] * ds1
                dv[:, self.slices[2]] += (stay * e2r)[:, None] * da02 \
                    - (term1 * e2r)[:, None] * ds2
                dv[:, self.slices[4]] += (e3r * q)[:, None] * da12
                dv += (a12 * e3r)[:, None] * gq
                if z.shape[1]:
                    zr = z[rows]
                    dv[:, self.slices[1]] -= (term1 * s1 * e1r)[:, None] * zr
                    dv[:, self.slices[3]] += (term1 * (1.0 - s2 * e2r))[:, None] * zr
                    dv[:, self.slices[5]] += (a12 * e3r * q)[:, None] * zr
                grad[rows] += dv / bracket[:, None]

        if self.rows_h.size:
            rows = self.rows_h
            e1r, e2r = efac[0][rows], efac[1][rows]
            if want_grad:
                s1, ds1 = b01.value_and_grad(self.d_h_stay01, pars[0])
                s2, ds2 = b02.value_and_grad(self.d_h_stay02, pars[1])
                gq = np.zeros((rows.size, self.n_params))
                q = self.term_h.value_and_grad(self, pars, efac, gq, z)
            else:
                s1 = b01.value(self.d_h_stay01, pars[0])
                s2 = b02.value(self.d_h_stay02, pars[1])
                q = self.term_h.value(self, pars, efac)
            stay = np.exp(-(s1 * e1r + s2 * e2r))
            bracket = stay + q
            if np.any(bracket <= 0) or not np.all(np.isfinite(bracket)):
                self._fail(rows[(bracket <= 0) | ~np.isfinite(bracket)],
                           "extended-censoring bracket <= 0")
            ll[rows] += np.log(bracket)
            if want_grad:
                dv = np.zeros((rows.size, self.n_params))
                dv[:, self.slices[0]] -= (stay * e1r)[:, None] * ds1
                dv[:, self.slices[2]] -= (stay * e2r)[:, None] * ds2
                dv += gq
                if z.shape[1]:
                    zr = z[rows]
                    dv[:, self.slices[1]] -= (stay * s1 * e1r)[:, None] * zr
                    dv[:, self.slices[3]] -= (stay * s2 * e2r)[:, None] * zr
                grad[rows] += dv / bracket[:, None]

        if not np.all(np.isfinite(ll)):
            self._fail(np.where(~np.isfinite(ll))[0], "non-finite log contribution")
        return ll, grad

    def _add_point_log(self, ll, grad, want_grad, rows, design, block, par, ef, tsl, bsl):
        if want_grad:
            a0, da0 = block.value_and_grad(design, par)
        else:
            a0 = block.value(design, par)
        if np.any(a0 <= 0) or not np.all(np.isfinite(a0)):
            self._fail(rows[(a0 <= 0) | ~np.isfinite(a0)], "hazard at death <= 0")
        ll[rows] += np.log(a0) + np.log(ef[rows])
        if want_grad:
            cols = np.arange(*tsl.indices(self.n_params))
            grad[rows[:, None], cols[None, :]] += da0 / a0[:, None]
            if self.z_mat.shape[1]:
                bcols = np.arange(*bsl.indices(self.n_params))
                grad[rows[:, None], bcols[None, :]] += self.z_mat[rows]

    # -- penalty --------------------------------------------------------------

    def penalty(self, x) -> float:
        thetas, _ = self.split(x)
        total = 0.0
        for theta, kappa, pen in zip(thetas, self.kappas, self._penalties):
            if pen is not None:
                c = theta**2
                total += kappa * float(c @ pen @ c)
        return total

    def penalty_grad(self, x) -> np.ndarray:
        thetas, _ = self.split(x)
        out = np.zeros(self.n_params)
        for k, (theta, kappa, pen) in enumerate(zip(thetas, self.kappas, self._penalties)):
            if pen is not None:
                out[self.slices[2 * k]] = 4.0 * kappa * theta * (pen @ theta**2)
        return out

    def penalty_hessian(self, x) -> np.ndarray:
        thetas, _ = self.split(x)
        out = np.zeros((self.n_params, self.n_params))
        for k, (theta, kappa, pen) in enumerate(zip(thetas, self.kappas, self._penalties)):
            if pen is not None:
                pc = pen @ theta**2
                block = 4.0 * kappa * np.diag(pc) + 8.0 * kappa * np.outer(theta, theta) * pen
                sl = self.slices[2 * k]
                out[sl, sl] = block
        return out

    # -- assembled objective ----------------------------------------------------

    def value(self, x) -> float:
        """Penalized log-likelihood (to be maximized)."""
        return pairwise_sum(self.loglik_vector(x)) - self.penalty(x)

    def value_and_grad(self, x):
        ll, grads = self.loglik_and_grads(x)
        f = pairwise_sum(ll) - self.penalty(x)
        g = grads.sum(axis=0) - self.penalty_grad(x)
        return f, g, grads

    def gradient(self, x) -> np.ndarray:
        return self.value_and_grad(x)[1]

    def fd_gradient(self, x, step: float = 1e-5) -> np.ndarray:
        """Central finite differences of the penalized objective."""
        x = np.asarray(x, dtype=float)
        out = np.empty_like(x)
        for j in range(x.size):
            xp, xm = x.copy(), x.copy()
            xp[j] += step
            xm[j] -= step
            out[j] = (self.value(xp) - self.value(xm)) / (2.0 * step)
        return out

    def fd_hessian(self, x, step: float = 1e-5) -> np.ndarray:
        """Central finite differences of the analytic gradient."""
        x = np.asarray(x, dtype=float)
        cols = np.empty((x.size, x.size))
        for j in range(x.size):
            h = step * max(1.0, abs(x[j]))
            xp, xm = x.copy(), x.copy()
            xp[j] += h
            xm[j] -= h
            gp = self.value_and_grad(xp)[1]
            gm = self.value_and_grad(xm)[1]
            cols[j] = (gp - gm) / (2.0 * h)
        return (cols + cols.T) / 2.0
