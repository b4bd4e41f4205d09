"""Hard-label low-rank attack (TenAd) and the full-space opt-attack baseline.

Both attacks minimise the boundary distance ``g`` -- the smallest step along a
unit direction that flips the model's label -- by zeroth-order gradient
descent. TenAd searches over rank-one directions
``theta1 o theta2 o theta3 o theta4`` (W + H + C + T parameters); the baseline
searches over dense directions (W * H * C * T parameters). Everything else,
including query accounting, step acceptance and termination, is shared.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .tensor import ORDER, as_tensor4, frobenius_norm, hosvd, multi_mode_product, outer_product

INIT_MODES = ("hosvd", "gaussian")
GRAD_MODES = ("per-factor", "chain-rule")
MAX_SHRINK = 20
FLAT_DIFF = 1e-12


class GradientUninformative(Exception):
    """Every probe was infeasible or left g unchanged. ``gradient`` holds the
    (zero) estimate that was discarded."""

    def __init__(self, message, gradient=None):
        super().__init__(message)
        self.gradient = gradient


# ---------------------------------------------------------------------------
# configuration and result types
# ---------------------------------------------------------------------------


@dataclass
class AttackConfig:
    rank: int = 1
    query_budget: int = 10_000
    alpha: float = 0.2
    beta: float = 0.05
    beta_floor: float = 1e-6
    lambda_tol: float = 1e-4
    init: str = "hosvd"
    q: tuple = (1, 1, 1, 1)  # 1-based HOSVD column per mode
    grad_mode: str = "per-factor"
    directions_per_step: int = 1
    seed: int = 0
    lambda0: float | None = None  # None: 0.1 * ||x||_F
    lambda_cap: float | None = None  # None: 10 * ||x||_F
    max_restarts: int = 50
    max_halvings: int = 10
    max_rejections: int = 3
    patience: int = 20
    min_rel_improvement: float = 1e-6
    clamp_min: float | None = None
    clamp_max: float | None = None

    def __post_init__(self):
        self.q = tuple(int(v) for v in self.q)
        self.validate()

    def validate(self):
        for name in ("rank", "query_budget", "directions_per_step", "patience", "max_rejections"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        for name in ("alpha", "beta", "beta_floor"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.lambda_tol < 1:
            raise ValueError("lambda_tol must lie in (0, 1)")
        if self.init not in INIT_MODES:
            raise ValueError(f"init must be one of {INIT_MODES}")
        if self.grad_mode not in GRAD_MODES:
            raise ValueError(f"grad_mode must be one of {GRAD_MODES}")
        if len(self.q) != ORDER or min(self.q) < 1:
            raise ValueError("q needs four 1-based column indices")
        for name in ("lambda0", "lambda_cap"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_restarts < 0 or self.max_halvings < 0:
            raise ValueError("max_restarts and max_halvings must be nonnegative")

    @classmethod
    def from_kv(cls, items: dict) -> "AttackConfig":
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in items.items():
            if key not in known:
                raise ValueError(f"unknown attack option {key!r}")
            kwargs[key] = _parse_value(key, raw, cls.__dataclass_fields__[key].default)
        return cls(**kwargs)

    def to_kv(self) -> dict:
        out = {}
        for k, v in asdict(self).items():
            if v is None:
                continue
            out[k] = ",".join(str(e) for e in v) if isinstance(v, tuple) else str(v)
        return out


def _parse_value(key, raw, default):
    if key == "q":
        return tuple(int(s) for s in raw.split(","))
    if isinstance(default, str):
        return raw
    if raw.lower() in ("none", ""):
        return None
    if isinstance(default, int) and not isinstance(default, bool):
        return int(raw.replace("_", ""))
    return float(raw)


@dataclass
class FactorSet:
    """l terms, each a 4-tuple of factor vectors (one per mode)."""

    terms: list

    def __post_init__(self):
        terms = []
        for term in self.terms:
            if len(term) != ORDER:
                raise ValueError("each term needs exactly four factor vectors")
            vs = tuple(np.array(v, dtype=np.float64).ravel() for v in term)
            for v in vs:
                n = np.linalg.norm(v)
                if not (np.isfinite(n) and n > 0):
                    raise ValueError("factor vectors must be finite with positive norm")
            terms.append(vs)
        if not terms:
            raise ValueError("a FactorSet needs at least one term")
        dims = tuple(v.size for v in terms[0])
        if any(tuple(v.size for v in t) != dims for t in terms):
            raise ValueError("all terms must share dims")
        self.terms = terms

    @property
    def dims(self) -> tuple:
        return tuple(v.size for v in self.terms[0])

    @property
    def rank(self) -> int:
        return len(self.terms)

    @property
    def n_params(self) -> int:
        return self.rank * sum(self.dims)

    def normalized(self) -> "FactorSet":
        return FactorSet([[v / np.linalg.norm(v) for v in t] for t in self.terms])

    def replace(self, i, j, v) -> "FactorSet":
        terms = [list(t) for t in self.terms]
        terms[i][j] = v
        return FactorSet(terms)

    def to_list(self) -> list:
        return [[v.tolist() for v in t] for t in self.terms]


@dataclass
class AttackResult:
    method: str
    adversarial: np.ndarray
    g_star: float
    queries_used: int
    success: bool
    label: int
    status: str
    trajectory: list = field(default_factory=list)  # (g, cumulative queries) per accepted step
    theta_star: FactorSet | None = None
    loss_frobenius: float | None = None
    loss_mode_sum: float | None = None
    n_params: int = 0
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "success": self.success,
            "status": self.status,
            "label": self.label,
            "g_star": self.g_star if math.isfinite(self.g_star) else None,
            "queries_used": self.queries_used,
            "n_params": self.n_params,
            "loss_frobenius": self.loss_frobenius,
            "loss_mode_sum": self.loss_mode_sum,
            "trajectory": [[g, q] for g, q in self.trajectory],
            "theta_star": self.theta_star.to_list() if self.theta_star is not None else None,
            "diagnostics": self.diagnostics,
        }


# ---------------------------------------------------------------------------
# directions and losses
# ---------------------------------------------------------------------------


def assemble_direction(theta: FactorSet) -> tuple[np.ndarray, float]:
    """Unit-norm direction spanned by ``theta`` and its scale.

    For one term the scale is the product of the factor norms. For several
    terms the per-mode normalised outer products are summed and the sum is
    renormalised; the scale is the norm of that sum.
    """
    if theta.rank == 1:
        vs = theta.terms[0]
        norms = [np.linalg.norm(v) for v in vs]
        unit = outer_product(*(v / n for v, n in zip(vs, norms)))
        return unit, float(np.prod(norms))
    total = sum(outer_product(*(v / np.linalg.norm(v) for v in t)) for t in theta.terms)
    scale = frobenius_norm(total)
    if scale == 0:
        raise ValueError("terms cancel to a zero direction")
    return total / scale, scale


def loss_values(theta: FactorSet) -> tuple[float, float]:
    """Squared-Frobenius loss (sum over terms of the product of squared factor
    norms) and mode-sum loss (sum of all squared factor norms)."""
    sq = [[float(v @ v) for v in t] for t in theta.terms]
    return float(sum(np.prod(s) for s in sq)), float(sum(sum(s) for s in sq))


def balanced_factors(theta: FactorSet, magnitude: float) -> FactorSet:
    """Factor set whose summed outer products equal ``magnitude * direction``,
    with the magnitude of every term split evenly over its four modes."""
    unit, scale = assemble_direction(theta)
    terms = []
    for t in theta.terms:
        weight = magnitude / scale if theta.rank > 1 else magnitude
        root = abs(weight) ** (1.0 / ORDER)
        vs = [v / np.linalg.norm(v) * root for v in t]
        if weight < 0:
            vs[0] = -vs[0]
        terms.append(vs)
    return FactorSet(terms)


# ---------------------------------------------------------------------------
# boundary distance
# ---------------------------------------------------------------------------


def _bisect_steps(tol: float) -> int:
    return math.ceil(math.log2(1.0 / tol))


def g_eval_worst_case(lam0: float, cap: float, tol: float) -> int:
    """Upper bound on the queries a single ``g_eval`` call may spend."""
    grow = max(0, math.ceil(math.log2(max(cap / lam0, 1.0)))) + 1
    return 1 + max(grow, MAX_SHRINK) + _bisect_steps(tol) + 1


def g_eval(model, x, d, y, cfg: AttackConfig, lam0=None, cap=None, ceiling=None):
    """Smallest step ``lam`` along unit direction ``d`` with label != y.

    Coarse search doubles (or halves) the step from ``lam0`` until the label
    flip is bracketed, then bisects to relative width ``cfg.lambda_tol``. The
    returned value always lies on the flipped side.

    With ``ceiling`` set the caller only cares whether g(d) < ceiling: if the
    label does not flip at the ceiling, ``inf`` comes back after one query.

    Returns ``(lam, queries)``; ``lam`` is ``inf`` when no flip occurs up to
    ``cap`` (the direction is infeasible).
    """
    x = np.asarray(x, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    if abs(frobenius_norm(d) - 1.0) > 1e-10:
        raise ValueError("direction must have unit Frobenius norm")
    scale = frobenius_norm(x) or 1.0
    lam0 = lam0 if lam0 is not None else (cfg.lambda0 or 0.1 * scale)
    cap = cap if cap is not None else (cfg.lambda_cap or 10.0 * scale)
    queries = 0

    def flips(lam):
        nonlocal queries
        queries += 1
        return model.predict(x + lam * d) != y

    if ceiling is not None:
        if not flips(ceiling):
            return math.inf, queries
        hi = ceiling
        lo = None
    else:
        start = min(lam0, cap)
        if flips(start):
            hi, lo = start, None
        else:
            lo, hi = start, min(2.0 * start, cap)
            while True:
                if flips(hi):
                    break
                if hi >= cap:
                    return math.inf, queries
                lo, hi = hi, min(2.0 * hi, cap)
    if lo is None:
        # shrink until the label holds again
        lo = 0.0
        cand = hi
        for _ in range(MAX_SHRINK):
            cand = cand / 2.0
            if flips(cand):
                hi = cand
            else:
                lo = cand
                break
    while hi - lo > cfg.lambda_tol * hi:
        mid = 0.5 * (lo + hi)
        if flips(mid):
            hi = mid
        else:
            lo = mid
    return hi, queries


# ---------------------------------------------------------------------------
# zeroth-order gradient estimators
# ---------------------------------------------------------------------------


def _unit_gaussian(rng, shape):
    u = rng.standard_normal(shape)
    return u / np.linalg.norm(u)


def estimate_per_factor(g_fn, theta: FactorSet, g0: float, beta: float, rng, directions: int = 1):
    """Per-factor finite differences: perturb one factor vector at a time.

    ``g_fn`` maps a FactorSet to g (``inf`` when infeasible). Returns the
    gradient as a list of terms of per-mode vectors.
    """
    grads = [[np.zeros_like(v) for v in t] for t in theta.terms]
    informative = False
    for _ in range(directions):
        for i, term in enumerate(theta.terms):
            for j, v in enumerate(term):
                u = _unit_gaussian(rng, v.shape)
                g1 = g_fn(theta.replace(i, j, v + beta * u))
                if not math.isfinite(g1):
                    continue
                diff = g1 - g0
                if abs(diff) >= FLAT_DIFF:
                    informative = True
                grads[i][j] += (diff / beta) * u
    grads = [[gv / directions for gv in t] for t in grads]
    if not informative:
        raise GradientUninformative("all per-factor probes infeasible or flat", grads)
    return grads


def contract_except(tensor, vectors, mode: int) -> np.ndarray:
    """Contract ``tensor`` with the given vectors on every mode except ``mode``
    (1-based), returning a vector of the remaining mode's extent."""
    others = [n for n in range(1, ORDER + 1) if n != mode]
    mats = [np.asarray(vectors[n - 1])[None, :] for n in others]
    return multi_mode_product(tensor, mats, others).ravel()


def chain_rule_gradient(G, theta: FactorSet):
    """Map a gradient over the dense tensor to gradients over the factors."""
    return [[contract_except(G, t, j + 1) for j in range(ORDER)] for t in theta.terms]


def rho_of(theta: FactorSet) -> np.ndarray:
    return sum(outer_product(*t) for t in theta.terms)


def estimate_chain_rule(g_rho_fn, theta: FactorSet, g0: float, beta: float, rng, directions: int = 1):
    """Dense finite difference on ``rho = sum of outer products``, pushed back
    to the factors by the chain rule. ``g_rho_fn`` maps a dense tensor to g."""
    rho = rho_of(theta)
    G = np.zeros_like(rho)
    informative = False
    for _ in range(directions):
        U = _unit_gaussian(rng, rho.shape)
        g1 = g_rho_fn(rho + beta * U)
        if not math.isfinite(g1):
            continue
        diff = g1 - g0
        if abs(diff) >= FLAT_DIFF:
            informative = True
        G += (diff / beta) * U
    grads = chain_rule_gradient(G / directions, theta)
    if not informative:
        raise GradientUninformative("chain-rule probe infeasible or flat", grads)
    return grads


def estimate_dense(g_rho_fn, rho, g0: float, beta: float, rng, directions: int = 1):
    """Directional finite difference over the full tensor (baseline)."""
    G = np.zeros_like(rho)
    informative = False
    for _ in range(directions):
        U = _unit_gaussian(rng, rho.shape)
        g1 = g_rho_fn(rho + beta * U)
        if not math.isfinite(g1):
            continue
        diff = g1 - g0
        if abs(diff) >= FLAT_DIFF:
            informative = True
        G += (diff / beta) * U
    if not informative:
        raise GradientUninformative("dense probe infeasible or flat", G / directions)
    return G / directions


class _Session:
    """Query accounting and g evaluation for one attack run."""

    def __init__(self, model, x, y, cfg, start_count):
        self.model, self.x, self.y, self.cfg = model, x, y, cfg
        self.start = start_count
        scale = frobenius_norm(x) or 1.0
        self.lam0 = cfg.lambda0 or 0.1 * scale
        self.cap = cfg.lambda_cap or 10.0 * scale

    @property
    def used(self) -> int:
        return self.model.query_count - self.start

    def affordable(self, n_evals, lam0) -> bool:
        cost = n_evals * g_eval_worst_case(lam0, self.cap, self.cfg.lambda_tol)
        return self.used + cost + 1 <= self.cfg.query_budget  # +1 for the confirming query

    def g(self, d, lam0=None, ceiling=None) -> float:
        lam, _ = g_eval(self.model, self.x, d, self.y, self.cfg,
                        lam0=lam0 or self.lam0, cap=self.cap, ceiling=ceiling)
        return lam

    def g_dense(self, rho, lam0=None) -> float:
        n = frobenius_norm(rho)
        if n == 0:
            return math.inf
        return self.g(rho / n, lam0=lam0)


def grad_per_factor(model, x, theta, beta, y, rng, g0, cfg=None):
    """Per-factor estimator against a model. Returns ``(grads, queries)``."""
    cfg = cfg or AttackConfig()
    x = as_tensor4(x)
    s = _Session(model, x, y, cfg, model.query_count)
    grads = estimate_per_factor(lambda th: s.g(assemble_direction(th)[0], lam0=g0),
                                theta, g0, beta, rng, cfg.directions_per_step)
    return grads, s.used


def grad_chain_rule(model, x, theta, beta, y, rng, g0, cfg=None):
    """Chain-rule estimator against a model. Returns ``(grads, queries)``."""
    cfg = cfg or AttackConfig()
    x = as_tensor4(x)
    s = _Session(model, x, y, cfg, model.query_count)
    grads = estimate_chain_rule(lambda r: s.g_dense(r, lam0=g0),
                                theta, g0, beta, rng, cfg.directions_per_step)
    return grads, s.used


# ---------------------------------------------------------------------------
# initialisation
# ---------------------------------------------------------------------------


def gaussian_theta(dims, rank, rng) -> FactorSet:
    return FactorSet([[rng.standard_normal(n) for n in dims] for _ in range(rank)])


def init_theta(x, cfg: AttackConfig, rng) -> FactorSet:
    """HOSVD columns of ``x`` (column q per mode) or Gaussian factors."""
    x = as_tensor4(x)
    if cfg.init == "gaussian":
        return gaussian_theta(x.shape, cfg.rank, rng)
    if frobenius_norm(x) == 0:
        warnings.warn("zero input has no HOSVD structure; using gaussian init", RuntimeWarning)
        return gaussian_theta(x.shape, cfg.rank, rng)
    for q, n in zip(cfg.q, x.shape):
        if q > n:
            raise ValueError(f"HOSVD column {q} exceeds mode extent {n}")
    factors = hosvd(x).factors
    terms = []
    for i in range(cfg.rank):
        terms.append([U[:, (q - 1 + i) % U.shape[1]].copy() for U, q in zip(factors, cfg.q)])
    return FactorSet(terms)


# ---------------------------------------------------------------------------
# the shared optimisation loop
# ---------------------------------------------------------------------------


class _LowRankSpace:
    name = "tenad"

    def __init__(self, cfg):
        self.cfg = cfg
        self.evals_per_probe = 1 if cfg.grad_mode == "chain-rule" else ORDER * cfg.rank

    def from_theta(self, theta):
        return theta.normalized()

    def direction(self, theta):
        return assemble_direction(theta)[0]

    def n_params(self, x):
        return self.cfg.rank * sum(x.shape)

    def gradient(self, session, theta, g0, beta, rng):
        if self.cfg.grad_mode == "chain-rule":
            return estimate_chain_rule(lambda r: session.g_dense(r, lam0=g0), theta, g0, beta,
                                       rng, self.cfg.directions_per_step)
        return estimate_per_factor(lambda th: session.g(self.direction(th), lam0=g0), theta, g0,
                                   beta, rng, self.cfg.directions_per_step)

    def grad_norm(self, grad):
        return math.sqrt(sum(float(gv @ gv) for t in grad for gv in t))

    def step(self, theta, grad, a):
        terms = [[v - a * gv for v, gv in zip(t, gt)] for t, gt in zip(theta.terms, grad)]
        for t in terms:
            for v in t:
                if not np.linalg.norm(v) > 0:
                    return None
        return FactorSet(terms).normalized()


class _DenseSpace:
    name = "baseline"
    evals_per_probe = 1

    def __init__(self, cfg):
        self.cfg = cfg

    def from_theta(self, theta):
        return assemble_direction(theta)[0]

    def direction(self, rho):
        return rho / frobenius_norm(rho)

    def n_params(self, x):
        return int(x.size)

    def gradient(self, session, rho, g0, beta, rng):
        return estimate_dense(lambda r: session.g_dense(r, lam0=g0), rho, g0, beta, rng,
                              self.cfg.directions_per_step)

    def grad_norm(self, grad):
        return frobenius_norm(grad)

    def step(self, rho, grad, a):
        new = rho - a * grad
        n = frobenius_norm(new)
        return new / n if n > 0 else None


def _optimize(space, model, x, cfg: AttackConfig) -> AttackResult:
    x = as_tensor4(x)
    rng = np.random.default_rng(cfg.seed)
    start = model.query_count
    y = model.predict(x)
    s = _Session(model, x, y, cfg, start)
    diagnostics = {}

    # initial direction: configured init, its mirror image, then gaussian restarts
    if cfg.init == "hosvd" and frobenius_norm(x) == 0:
        diagnostics["init_fallback"] = "gaussian"
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        theta0 = init_theta(x, cfg, rng)
    candidates = [theta0, theta0.replace(0, 0, -theta0.terms[0][0])]
    state, g = None, math.inf
    attempts = 0
    while attempts < len(candidates) + cfg.max_restarts:
        if attempts < len(candidates):
            theta = candidates[attempts]
        else:
            theta = gaussian_theta(x.shape, cfg.rank, rng)
        attempts += 1
        if not s.affordable(1, s.lam0):
            break
        cand = space.from_theta(theta)
        g = s.g(space.direction(cand))
        if math.isfinite(g):
            state = cand
            break
    diagnostics["init_attempts"] = attempts

    if state is None:
        diagnostics["reason"] = "no feasible initial direction"
        return AttackResult(space.name, x.copy(), math.inf, s.used, False, y,
                            "infeasible", n_params=space.n_params(x), diagnostics=diagnostics)

    trajectory = [(g, s.used)]
    history = [g]
    alpha, beta = cfg.alpha, cfg.beta
    rejections = 0
    decays = 0
    status = "budget"
    while True:
        if beta < cfg.beta_floor:
            status = "beta-floor"
            break
        n_evals = space.evals_per_probe * cfg.directions_per_step
        if not s.affordable(n_evals + 1, g):
            status = "budget"
            break
        try:
            grad = space.gradient(s, state, g, beta, rng)
        except GradientUninformative:
            beta /= 10.0
            decays += 1
            rejections = 0
            continue

        # step along the normalised gradient: the parameters live on unit
        # spheres, so alpha is an angle-like length independent of g's units
        gnorm = space.grad_norm(grad)
        if not gnorm > 0:
            beta /= 10.0
            decays += 1
            rejections = 0
            continue
        accepted = None
        a = alpha / gnorm
        out_of_budget = False
        for k in range(cfg.max_halvings + 1):
            if not s.affordable(1, g):
                out_of_budget = True
                break
            cand = space.step(state, grad, a)
            if cand is not None:
                g_c = s.g(space.direction(cand), lam0=g, ceiling=g)
                # a decrease must beat the bisection resolution to count
                if g_c < g * (1.0 - cfg.lambda_tol):
                    accepted = (cand, g_c, k)
                    break
            a /= 2.0
        if accepted is not None:
            state, g, k = accepted
            alpha = a * gnorm * (2.0 if k == 0 else 1.0)
            rejections = 0
            history.append(g)
            trajectory.append((g, s.used))
            if len(history) > cfg.patience:
                ref = history[-cfg.patience - 1]
                if (ref - g) / ref < cfg.min_rel_improvement:
                    status = "converged"
                    break
        elif out_of_budget:
            status = "budget"
            break
        else:
            rejections += 1
            if rejections >= cfg.max_rejections:
                beta /= 10.0
                decays += 1
                rejections = 0

    direction = space.direction(state)
    adversarial = x + g * direction
    if cfg.clamp_min is not None or cfg.clamp_max is not None:
        adversarial = np.clip(adversarial, cfg.clamp_min, cfg.clamp_max)
    adv_label = model.predict(adversarial)
    success = adv_label != y and g > 0
    diagnostics.update({"beta_decays": decays, "final_beta": beta, "final_alpha": alpha,
                        "adversarial_label": adv_label})

    theta_star = losses = None
    if isinstance(state, FactorSet):
        theta_star = balanced_factors(state, g)
        losses = loss_values(theta_star)
    return AttackResult(
        method=space.name,
        adversarial=adversarial,
        g_star=float(g),
        queries_used=s.used,
        success=bool(success),
        label=int(y),
        status=status,
        trajectory=trajectory,
        theta_star=theta_star,
        loss_frobenius=losses[0] if losses else None,
        loss_mode_sum=losses[1] if losses else None,
        n_params=space.n_params(x),
        diagnostics=diagnostics,
    )


def tenad_attack(model, x, cfg: AttackConfig | None = None) -> AttackResult:
    """Low-rank hard-label attack over rank-``cfg.rank`` factor sets."""
    cfg = cfg or AttackConfig()
    return _optimize(_LowRankSpace(cfg), model, x, cfg)


def opt_attack_baseline(model, x, cfg: AttackConfig | None = None) -> AttackResult:
    """The same optimiser over dense directions (vectorised opt-attack)."""
    cfg = cfg or AttackConfig()
    return _optimize(_DenseSpace(cfg), model, x, cfg)


ATTACKS = {"tenad": tenad_attack, "baseline": opt_attack_baseline}
