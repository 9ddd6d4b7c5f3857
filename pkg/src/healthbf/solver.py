"""Proximal-gradient dual ascent for health-aware selective beamforming.

Two estimators share one iteration:

* :class:`PGDABeamformer` penalizes individual weights by
  ``rho_s * sum (1 - beta_ij) |w_ij|`` under a transmit power budget and
  per-user minimum and maximum spectral efficiency constraints.
* :class:`GPGDABeamformer` penalizes whole antenna rows by
  ``rho_s * sum (1 - beta'_i) ||row_i||`` under a hybrid power budget
  ``sum ||w_j||^2 / eta_PA + P_A sum ||row_i|| <= P_tot`` and minimum
  rate constraints, which selects a subset of antennas.

Each outer iteration takes a backtracking gradient-ascent step on the
smooth Lagrangian, applies the proximal operator of the nonsmooth part,
and then takes a projected ascent step on the multipliers.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import (
    InvalidArgumentError,
    check_complex_matrix,
    check_hermitian_psd,
    check_positive,
    check_positive_int,
)
from .gradients import _comm_weights, _grad_comm, _grad_radar, smooth_lagrangian
from .metrics import _mi_eigenvalues, _sinr_parts, compute_metrics
from .power import hybrid_power_surrogate
from .prox import prox_elementwise, prox_group_rows, row_thresholds
from .scenario import MaskKind, ReliabilityMask, SystemConfig, radar_covariance

PGDA_INITIAL_DUALS = (0.04, 0.06, 0.05)


class DivergenceError(RuntimeError):
    """The iteration produced a non-finite value; ``trace`` holds the history."""

    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class DualState:
    """Multipliers for minimum rate, maximum rate and power constraints."""

    lambda1: np.ndarray
    lambda2: np.ndarray
    mu: float

    def __post_init__(self):
        l1 = np.array(self.lambda1, dtype=float, ndmin=1)
        l2 = np.array(self.lambda2, dtype=float, ndmin=1)
        if l1.shape != l2.shape:
            raise InvalidArgumentError("lambda1 and lambda2 must have equal length")
        l1.setflags(write=False)
        l2.setflags(write=False)
        object.__setattr__(self, "lambda1", l1)
        object.__setattr__(self, "lambda2", l2)
        object.__setattr__(self, "mu", float(self.mu))

    @classmethod
    def constant(cls, n_users, lambda1=0.0, lambda2=0.0, mu=0.0):
        return cls(np.full(n_users, lambda1), np.full(n_users, lambda2), mu)

    def is_feasible(self):
        return bool(np.all(self.lambda1 >= 0) and np.all(self.lambda2 >= 0) and self.mu >= 0)

    def to_dict(self):
        return {"lambda1": self.lambda1.tolist(), "lambda2": self.lambda2.tolist(),
                "mu": self.mu}


@dataclass(frozen=True)
class SolverOptions:
    dual_step: float = 0.025
    primal_step: float = 0.025
    backtrack_factor: float = 0.5
    tol: float = 1e-12
    max_iter: int = 1000
    max_backtracks: int = 50
    eta_min: float = 1e-12

    def __post_init__(self):
        for name in ("dual_step", "primal_step", "tol", "eta_min"):
            check_positive(getattr(self, name), name)
        if not 0 < self.backtrack_factor < 1:
            raise InvalidArgumentError("backtrack_factor must lie in (0, 1)")
        check_positive_int(self.max_iter, "max_iter")
        check_positive_int(self.max_backtracks, "max_backtracks")

    @classmethod
    def from_dict(cls, data):
        return cls(**(data or {}))


@dataclass(frozen=True)
class GpgdaPowerParams:
    """Hybrid power budget: PA efficiency, per-antenna cost and total budget."""

    eta_pa: float = 0.4
    p_antenna: float = 5.0
    p_total: float = 100.0

    def __post_init__(self):
        if not 0 < self.eta_pa <= 1:
            raise InvalidArgumentError("eta_pa must lie in (0, 1]")
        if self.p_antenna < 0:
            raise InvalidArgumentError("p_antenna must be nonnegative")
        check_positive(self.p_total, "p_total")


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    objective: float
    radar_mi: float
    comm_sum: float
    sparsity_penalty: float
    tx_power: float
    constraint_power: float
    se: np.ndarray
    duals: DualState
    eta: float
    step_norm: float


@dataclass
class ConvergenceTrace:
    records: list = field(default_factory=list)

    def append(self, record):
        if self.records and record.iteration <= self.records[-1].iteration:
            raise ValueError("iteration indices must increase")
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, idx):
        return self.records[idx]

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records])

    def header(self):
        m = len(self.records[0].se) if self.records else 0
        return (["iteration", "objective", "radar_mi", "comm_sum", "sparsity_penalty",
                 "tx_power", "constraint_power"]
                + [f"se_{j + 1}" for j in range(m)]
                + [f"lambda1_{j + 1}" for j in range(m)]
                + [f"lambda2_{j + 1}" for j in range(m)]
                + ["mu", "eta", "step_norm"])

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.header())
        for r in self.records:
            row = [r.iteration, r.objective, r.radar_mi, r.comm_sum, r.sparsity_penalty,
                   r.tx_power, r.constraint_power, *r.se, *r.duals.lambda1,
                   *r.duals.lambda2, r.duals.mu, r.eta, r.step_norm]
            writer.writerow([str(row[0])] + [repr(float(v)) for v in row[1:]])
        return buf.getvalue()


@dataclass(frozen=True)
class SolveResult:
    w_star: np.ndarray
    duals: DualState
    trace: ConvergenceTrace
    metrics: object
    converged: bool
    iterations: int


def dual_update(duals, se_per_user, power_value, config, alpha, power_budget=None,
                max_rate=True):
    """Projected ascent step on the multipliers.

    Minimum-rate multipliers grow while a user is below ``rate_min``,
    maximum-rate multipliers while above ``rate_max``, and the power
    multiplier while ``power_value`` exceeds the budget. With
    ``max_rate=False`` the maximum-rate multipliers are left untouched.
    """
    check_positive(alpha, "alpha")
    budget = config.power_budget if power_budget is None else power_budget
    se = np.asarray(se_per_user, dtype=float)
    lambda1 = np.maximum(0.0, duals.lambda1 + alpha * (np.asarray(config.rate_min) - se))
    lambda2 = duals.lambda2
    if max_rate:
        lambda2 = np.maximum(0.0, lambda2 + alpha * (se - np.asarray(config.rate_max)))
    mu = max(0.0, duals.mu + alpha * (power_value - budget))
    return DualState(lambda1, lambda2, mu)


def backtrack_step(W, gradient, eta_start, evaluator, factor=0.5, max_backtracks=50,
                   eta_min=1e-12):
    """Largest step ``eta_start * factor**k`` that does not decrease ``evaluator``.

    Returns ``(W_new, eta_used)``. When no such step is found within
    ``max_backtracks`` halvings (or before ``eta`` drops under
    ``eta_min``), ``W`` is returned unchanged together with ``eta_min``.
    """
    f0 = evaluator(W)
    eta = eta_start
    for _ in range(max_backtracks + 1):
        candidate = W + eta * gradient
        value = evaluator(candidate)
        if value >= f0:
            return candidate, eta
        eta *= factor
        if eta < eta_min:
            break
    return W, eta_min


class _Problem:
    """Smooth/nonsmooth split of one Lagrangian, with precomputed data."""

    power_scale = 1.0
    max_rate = True

    def __init__(self, config, H, R, rho_s):
        self.config = config
        self.H = H
        self.R = R
        self.rho_s = rho_s
        self.weights = config.user_weights

    @property
    def power_budget(self):
        return self.config.power_budget

    def ascent_direction(self, W, duals):
        """Real gradient of the smooth Lagrangian (twice the conjugate one).

        The prox thresholds ``eta * rho_s * (1 - beta)`` assume a step along
        the real gradient; pairing them with the conjugate gradient would
        double the effective sparsity weight.
        """
        return 2.0 * self.gradient(W, duals)

    def gradient(self, W, duals):
        cfg = self.config
        g = _grad_radar(W, self.R, cfg.sigma2_r, cfg.bw_fraction_radar)
        g += _grad_comm(W, self.H, cfg.sigma2_c, _comm_weights(cfg, duals))
        g -= (duals.mu * self.power_scale) * W
        return g

    def value(self, W, duals):
        return smooth_lagrangian(W, self.R, self.H, duals, self.config,
                                 power_scale=self.power_scale,
                                 power_budget=self.power_budget)

    def se(self, W):
        signal, denom = _sinr_parts(self.H, W, self.config.sigma2_c)
        return np.log2(1.0 + signal / denom)

    def radar_mi(self, W):
        if self.R is None:
            return 0.0
        ev = np.clip(_mi_eigenvalues(self.R, W, self.config.sigma2_r), 0.0, None)
        return float(np.sum(np.log2(1.0 + ev)))

    def constraint_power(self, W):
        return float(np.sum(np.abs(W) ** 2))

    def update_duals(self, duals, W, alpha):
        return dual_update(duals, self.se(W), self.constraint_power(W), self.config,
                           alpha, power_budget=self.power_budget, max_rate=self.max_rate)


class _PGDAProblem(_Problem):
    def __init__(self, config, H, R, rho_s, beta):
        super().__init__(config, H, R, rho_s)
        self.beta = beta  # n_tx x M

    def prox(self, X, eta, duals):
        return prox_elementwise(X, eta * self.rho_s * (1.0 - self.beta))

    def penalty(self, W):
        return self.rho_s * float(np.sum((1.0 - self.beta) * np.abs(W)))


class _GPGDAProblem(_Problem):
    max_rate = False

    def __init__(self, config, H, R, rho_s, beta_vec, power):
        super().__init__(config, H, R, rho_s)
        self.beta_vec = beta_vec
        self.power = power
        self.power_scale = 1.0 / power.eta_pa

    @property
    def power_budget(self):
        return self.power.p_total

    def prox(self, X, eta, duals):
        tau = row_thresholds(self.beta_vec, self.rho_s, eta, duals.mu, self.power.p_antenna)
        return prox_group_rows(X, tau)

    def penalty(self, W):
        return self.rho_s * float(np.dot(1.0 - self.beta_vec, np.linalg.norm(W, axis=1)))

    def constraint_power(self, W):
        return hybrid_power_surrogate(W, self.power.eta_pa, self.power.p_antenna)


def _iterate(problem, W, duals, options, update_duals=True):
    trace = ConvergenceTrace()
    converged = False
    k = 0
    for k in range(1, options.max_iter + 1):
        g = problem.ascent_direction(W, duals)

        def evaluator(X, duals=duals):
            return problem.value(X, duals)

        X, eta = backtrack_step(W, g, options.primal_step, evaluator,
                                options.backtrack_factor, options.max_backtracks,
                                options.eta_min)
        Z = problem.prox(X, eta, duals)
        if not np.all(np.isfinite(Z)):
            raise DivergenceError(f"non-finite iterate at iteration {k}", trace)
        if update_duals:
            duals = problem.update_duals(duals, Z, options.dual_step)
        step = float(np.linalg.norm(Z - W))

        se = problem.se(Z)
        mi = problem.radar_mi(Z)
        comm = float(np.dot(problem.weights, se))
        record = IterationRecord(
            iteration=k,
            objective=problem.config.bw_fraction_radar * mi + comm,
            radar_mi=mi,
            comm_sum=comm,
            sparsity_penalty=problem.penalty(Z),
            tx_power=float(np.sum(np.abs(Z) ** 2)),
            constraint_power=problem.constraint_power(Z),
            se=se,
            duals=duals,
            eta=eta,
            step_norm=step,
        )
        trace.append(record)
        if not (np.isfinite(record.objective)
                and np.isfinite(duals.mu) and np.all(np.isfinite(duals.lambda1))):
            raise DivergenceError(f"non-finite iterate at iteration {k}", trace)
        W = Z
        if step < options.tol:
            converged = True
            break
    return W, duals, trace, converged, k


def initial_beamformer(rng, n_tx, n_users, power):
    """Random complex Gaussian ``W`` scaled to ``trace(W W^H) = power``."""
    rng = np.random.default_rng(rng)
    W = (rng.standard_normal((n_tx, n_users))
         + 1j * rng.standard_normal((n_tx, n_users))) / np.sqrt(2)
    return W * np.sqrt(power / np.sum(np.abs(W) ** 2))


class _BaseBeamformer(BaseEstimator):
    """Shared fit plumbing; subclasses define the problem split."""

    def _options(self):
        return SolverOptions(
            dual_step=self.dual_step,
            primal_step=self.primal_step,
            backtrack_factor=self.backtrack_factor,
            tol=self.tol,
            max_iter=self.max_iter,
            max_backtracks=self.max_backtracks,
            eta_min=self.eta_min,
        )

    def _validate_inputs(self, H, R):
        config = self.config if self.config is not None else SystemConfig()
        H = check_complex_matrix(H, "H", shape=(config.n_tx, config.n_users))
        if R is not None:
            R = check_hermitian_psd(R, "R")
            if R.shape[0] != config.n_tx:
                raise InvalidArgumentError(f"R must be {config.n_tx} x {config.n_tx}")
        return config, H, R

    def _rho_s(self, config):
        return config.sparsity_weight if self.rho_s is None else float(self.rho_s)

    def _start(self, config, W0, duals0, make_initial):
        if W0 is None and self.warm_start and hasattr(self, "coef_"):
            W0 = self.coef_
            duals0 = self.duals_ if duals0 is None else duals0
        if W0 is None:
            W0 = make_initial()
        W0 = check_complex_matrix(W0, "W0", shape=(config.n_tx, config.n_users))
        if duals0 is None:
            duals0 = self._initial_duals(config.n_users)
        if duals0.lambda1.shape != (config.n_users,):
            raise InvalidArgumentError("initial duals do not match the number of users")
        return W0.copy(), duals0

    def _finish(self, problem, config, H, R, W0, duals0, mask):
        W, duals, trace, converged, n_iter = _iterate(
            problem, W0, duals0, self._options(), update_duals=self.update_duals)
        self.coef_ = W
        self.duals_ = duals
        self.trace_ = trace
        self.converged_ = converged
        self.n_iter_ = n_iter
        self.metrics_ = compute_metrics(config, H, R, W, mask)
        return self

    def transform(self, S):
        """Transmit block ``X = W S`` for symbol streams ``S`` (``M x L``)."""
        check_is_fitted(self, "coef_")
        S = check_complex_matrix(S, "S", shape=(self.coef_.shape[1], None))
        return self.coef_ @ S

    def score(self, H, R=None):
        """Weighted utility ``rho_r MI + sum_j rho_j SE_j`` of the fitted ``W``."""
        check_is_fitted(self, "coef_")
        config, H, R = self._validate_inputs(H, R)
        problem = _Problem(config, H, R, 0.0)
        se = problem.se(self.coef_)
        return config.bw_fraction_radar * problem.radar_mi(self.coef_) + float(
            np.dot(config.user_weights, se))

    def result(self):
        """Package the fitted state as a :class:`SolveResult`."""
        check_is_fitted(self, "coef_")
        return SolveResult(self.coef_, self.duals_, self.trace_, self.metrics_,
                           self.converged_, self.n_iter_)


class PGDABeamformer(_BaseBeamformer):
    """Selective beamformer with reliability-weighted entrywise sparsity.

    Parameters
    ----------
    config : SystemConfig, default=None
        Scenario parameters; ``None`` uses the default 28 GHz scenario.
    rho_s : float, default=None
        Sparsity weight. ``None`` takes ``config.sparsity_weight``.
    dual_step, primal_step : float, default=0.025
        Multiplier step ``alpha`` and initial primal step ``eta``.
    backtrack_factor : float, default=0.5
        Step shrink factor of the line search.
    tol : float, default=1e-12
        Stop once ``||W_{k+1} - W_k||_F < tol``.
    max_iter, max_backtracks : int
        Outer iteration cap and line-search cap.
    eta_min : float, default=1e-12
        Smallest primal step tried.
    initial_duals : tuple, default=(0.04, 0.06, 0.05)
        Starting ``(lambda1, lambda2, mu)``, broadcast over users.
    update_duals : bool, default=True
        If False the multipliers stay at their initial values.
    warm_start : bool, default=False
        Start from the previous solution and multipliers when refitting.
    random_state : int, Generator or None
        Seed for the random initial beamformer.

    Attributes
    ----------
    coef_ : ndarray of shape (n_tx, n_users)
        Beamforming matrix.
    duals_ : DualState
    trace_ : ConvergenceTrace
    converged_ : bool
    n_iter_ : int
    metrics_ : MetricsRecord
    """

    def __init__(self, config=None, rho_s=None, dual_step=0.025, primal_step=0.025,
                 backtrack_factor=0.5, tol=1e-12, max_iter=1000, max_backtracks=50,
                 eta_min=1e-12, initial_duals=PGDA_INITIAL_DUALS, update_duals=True,
                 warm_start=False, random_state=None):
        self.config = config
        self.rho_s = rho_s
        self.dual_step = dual_step
        self.primal_step = primal_step
        self.backtrack_factor = backtrack_factor
        self.tol = tol
        self.max_iter = max_iter
        self.max_backtracks = max_backtracks
        self.eta_min = eta_min
        self.initial_duals = initial_duals
        self.update_duals = update_duals
        self.warm_start = warm_start
        self.random_state = random_state

    def _initial_duals(self, n_users):
        return DualState.constant(n_users, *self.initial_duals)

    def fit(self, H, R=None, beta=None, W0=None, duals0=None):
        """Optimize ``W`` for channel ``H`` and radar covariance ``R``.

        ``beta`` is a per-entry :class:`ReliabilityMask` or an ``n_tx x M``
        array; ``None`` means every entry is fully healthy.
        """
        config, H, R = self._validate_inputs(H, R)
        if beta is None:
            beta = ReliabilityMask.per_entry(np.ones((config.n_tx, config.n_users)))
        elif not isinstance(beta, ReliabilityMask):
            beta = ReliabilityMask.per_entry(beta)
        if beta.kind is not MaskKind.PER_ENTRY:
            raise InvalidArgumentError("PGDA expects a per-entry mask")
        beta.check_compatible(config.n_tx, config.n_users)
        rho_s = self._rho_s(config)
        if rho_s < 0:
            raise InvalidArgumentError("rho_s must be nonnegative")
        W0, duals0 = self._start(config, W0, duals0, lambda: initial_beamformer(
            self.random_state, config.n_tx, config.n_users, config.power_budget / 2))
        problem = _PGDAProblem(config, H, R, rho_s, np.asarray(beta.values))
        return self._finish(problem, config, H, R, W0, duals0, beta)


class GPGDABeamformer(_BaseBeamformer):
    """Antenna selection by row-group sparsity under a hybrid power budget.

    Takes the same parameters as :class:`PGDABeamformer` plus ``power``
    (:class:`GpgdaPowerParams`). The multipliers reuse :class:`DualState`:
    ``lambda1`` holds the minimum-rate multipliers, ``mu`` the hybrid
    power multiplier, and ``lambda2`` stays at zero since no maximum rate
    is imposed.
    """

    def __init__(self, config=None, rho_s=None, power=None, dual_step=0.025,
                 primal_step=0.025, backtrack_factor=0.5, tol=1e-12, max_iter=1000,
                 max_backtracks=50, eta_min=1e-12, initial_duals=(0.04, 0.0, 0.05),
                 update_duals=True, warm_start=False, random_state=None):
        self.config = config
        self.rho_s = rho_s
        self.power = power
        self.dual_step = dual_step
        self.primal_step = primal_step
        self.backtrack_factor = backtrack_factor
        self.tol = tol
        self.max_iter = max_iter
        self.max_backtracks = max_backtracks
        self.eta_min = eta_min
        self.initial_duals = initial_duals
        self.update_duals = update_duals
        self.warm_start = warm_start
        self.random_state = random_state

    def _initial_duals(self, n_users):
        return DualState.constant(n_users, *self.initial_duals)

    def fit(self, H, R=None, beta=None, W0=None, duals0=None):
        """Optimize ``W``; ``beta`` is a per-antenna mask or length-``n_tx`` array."""
        config, H, R = self._validate_inputs(H, R)
        power = self.power if self.power is not None else GpgdaPowerParams()
        if beta is None:
            beta = ReliabilityMask.per_antenna(np.ones(config.n_tx))
        elif not isinstance(beta, ReliabilityMask):
            beta = ReliabilityMask.per_antenna(beta)
        if beta.kind is not MaskKind.PER_ANTENNA:
            raise InvalidArgumentError("GPGDA expects a per-antenna mask")
        beta.check_compatible(config.n_tx, config.n_users)
        rho_s = self._rho_s(config)
        if rho_s < 0:
            raise InvalidArgumentError("rho_s must be nonnegative")
        W0, duals0 = self._start(config, W0, duals0, lambda: _scale_to_hybrid(
            initial_beamformer(self.random_state, config.n_tx, config.n_users, 1.0),
            power, power.p_total / 2))
        problem = _GPGDAProblem(config, H, R, rho_s, np.asarray(beta.values), power)
        return self._finish(problem, config, H, R, W0, duals0, beta)


def _scale_to_hybrid(W, power, target):
    """Rescale ``W`` so the hybrid power surrogate equals ``target``."""
    a = np.sum(np.abs(W) ** 2) / power.eta_pa
    b = power.p_antenna * np.linalg.norm(W, axis=1).sum()
    if a == 0:
        return W
    s = (-b + np.sqrt(b * b + 4 * a * target)) / (2 * a)
    return W * s


def _scene_covariance(config, scene):
    if scene is None or scene.n_targets == 0:
        return None
    return radar_covariance(scene, config.n_tx, config.spacing, config.wavelength)


def _options_kwargs(options):
    options = options if options is not None else SolverOptions()
    return dict(dual_step=options.dual_step, primal_step=options.primal_step,
                backtrack_factor=options.backtrack_factor, tol=options.tol,
                max_iter=options.max_iter, max_backtracks=options.max_backtracks,
                eta_min=options.eta_min)


def pgda_solve(config, scene, channel, beta=None, options=None, *, rho_s=None,
               W0=None, duals0=None, random_state=None, update_duals=True):
    """Run PGDA once and return a :class:`SolveResult`.

    ``scene`` may be None (no radar term). ``rho_s`` defaults to
    ``config.sparsity_weight``.
    """
    est = PGDABeamformer(config=config, rho_s=rho_s, random_state=random_state,
                         update_duals=update_duals, **_options_kwargs(options))
    est.fit(channel, _scene_covariance(config, scene), beta, W0=W0, duals0=duals0)
    return est.result()


def gpgda_solve(config, scene, channel, beta_vec=None, power=None, options=None, *,
                rho_s=None, W0=None, duals0=None, random_state=None):
    """Run GPGDA once and return a :class:`SolveResult`."""
    est = GPGDABeamformer(config=config, rho_s=rho_s, power=power,
                          random_state=random_state, **_options_kwargs(options))
    est.fit(channel, _scene_covariance(config, scene), beta_vec, W0=W0, duals0=duals0)
    return est.result()

