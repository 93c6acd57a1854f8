"""Plain Monte Carlo benchmark for portfolio value VaR, ES and contributions.

Nothing here touches the Hermite machinery: systematic mode uses closed-form
conditional step probabilities, full mode samples the idiosyncratic shocks
and evaluates each value spec directly.

Random streams are keyed by ``(seed, block)`` for the factors and
``(seed, block, facility)`` for idiosyncratic shocks, so results depend on
``(seed, scenarios, batch_size, mode)`` only, not on the worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .exceptions import InsufficientTailError
from .hermite import gauss_hermite_rule
from .portfolio import Portfolio

MODES = ("systematic", "full")
MIN_WINDOW = 100


@dataclass(frozen=True)
class SimConfig:
    scenarios: int = 1_000_000
    seed: int = 0
    mode: str = "systematic"
    alpha: float = 0.001
    window: tuple[float, float] | None = None  # tail probabilities (lo, hi)
    batch_size: int = 16_384
    workers: int = 1
    curve_nodes: int = 32

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if not 0.0 < self.alpha < 0.5:
            raise ValueError("alpha must lie in (0, 0.5)")
        if self.scenarios < 1 or self.batch_size < 1:
            raise ValueError("scenarios and batch_size must be positive")
        lo, hi = self.effective_window
        if not lo < self.alpha < hi:
            raise ValueError(f"window {lo}:{hi} must bracket alpha={self.alpha}")

    @property
    def effective_window(self) -> tuple[float, float]:
        if self.window is None:
            return 0.75 * self.alpha, 1.25 * self.alpha
        return float(self.window[0]), float(self.window[1])

    def to_dict(self) -> dict:
        return {
            "scenarios": self.scenarios, "seed": self.seed, "mode": self.mode, "alpha": self.alpha,
            "window": list(self.effective_window), "batch_size": self.batch_size,
            "curve_nodes": self.curve_nodes,
        }


@dataclass
class SimResult:
    expected_value: float
    expected_value_se: float
    var_estimate: float
    var_std_error: float
    es_estimate: float
    es_std_error: float
    quantile: float
    scenarios: int
    seed: int
    config: dict
    ids: list[str]
    contributions: np.ndarray | None = None
    contribution_se: np.ndarray | None = None
    window_var: float | None = None
    window_count: int = 0
    tail_count: int = 0  # scenarios at or below the quantile
    tail_values: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def to_dict(self) -> dict:
        out = {
            "expected_value": self.expected_value,
            "expected_value_se": self.expected_value_se,
            "var_estimate": self.var_estimate,
            "var_std_error": self.var_std_error,
            "es_estimate": self.es_estimate,
            "es_std_error": self.es_std_error,
            "quantile": self.quantile,
            "scenarios": self.scenarios,
            "tail_count": self.tail_count,
            "seed": self.seed,
            "config": self.config,
        }
        if self.contributions is not None:
            out["window_var"] = self.window_var
            out["window_count"] = self.window_count
            out["facilities"] = [
                {"id": fid, "var_c": float(c), "var_c_se": float(s)}
                for fid, c, s in zip(self.ids, self.contributions, self.contribution_se)
            ]
        return out


# --------------------------------------------------------------------------
# facility evaluation


class _Evaluator:
    """Vectorised conditional/direct facility values for one portfolio."""

    def __init__(self, portfolio: Portfolio, curve_nodes: int):
        facs = portfolio.facilities
        self.n = len(facs)
        self.weights = portfolio.weights
        self.rhos = portfolio.rhos
        self.sig = np.sqrt(1.0 - self.rhos ** 2)
        self.loadings = portfolio.loading_matrix
        self.curves = []
        steps = []
        for i, f in enumerate(facs):
            st = f.value.as_step()
            if st is None:
                self.curves.append(i)
                steps.append(((), (0.0,)))
            else:
                steps.append((tuple(st.thresholds), tuple(st.values)))
        kmax = max(1, max(len(t) for t, _ in steps))
        self.base = np.array([v[0] for _, v in steps])
        self.thr = np.full((self.n, kmax), np.inf)
        self.jump = np.zeros((self.n, kmax))
        for i, (t, v) in enumerate(steps):
            k = len(t)
            self.thr[i, :k] = t
            self.jump[i, :k] = np.diff(v)
        self.rule = gauss_hermite_rule(curve_nodes) if self.curves else None
        self.facs = facs

    def conditional(self, s: np.ndarray) -> np.ndarray:
        """``E[v_i | s_i]`` for a (scenarios, facilities) array of ``s``."""
        rs = self.rhos * s
        out = np.broadcast_to(self.base, s.shape).copy()
        for k in range(self.thr.shape[1]):
            live = np.isfinite(self.thr[:, k]) & (self.jump[:, k] != 0.0)
            if not np.any(live):
                continue
            z = (rs[:, live] - self.thr[live, k]) / self.sig[live]
            out[:, live] += self.jump[live, k] * ndtr(z)
        for i in self.curves:
            spec = self.facs[i].value
            eps = rs[:, i, None] + self.sig[i] * self.rule.nodes[None, :]
            out[:, i] = spec.evaluate(eps) @ self.rule.weights
        return out

    def direct(self, s: np.ndarray, xi: np.ndarray) -> np.ndarray:
        eps = self.rhos * s + self.sig * xi
        out = np.broadcast_to(self.base, s.shape).copy()
        for k in range(self.thr.shape[1]):
            live = np.isfinite(self.thr[:, k]) & (self.jump[:, k] != 0.0)
            if np.any(live):
                out[:, live] += self.jump[live, k] * (eps[:, live] > self.thr[live, k])
        for i in self.curves:
            out[:, i] = self.facs[i].value.evaluate(eps[:, i])
        return out


def _block_generator(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed) & (2**64 - 1), *key])))


@dataclass
class _Partial:
    count: int
    total: float  # sum of V - ref
    total_sq: float
    fac_sum: np.ndarray
    tail_v: np.ndarray
    tail_idx: np.ndarray
    tail_fac: np.ndarray


def _lowest(v: np.ndarray, idx: np.ndarray, keep: int) -> np.ndarray:
    """Positions of the ``keep`` smallest values, ties broken by scenario index."""
    order = np.lexsort((idx, v))
    return order[:keep]


def _run_block(ev: _Evaluator, cfg: SimConfig, block: int, keep: int, ref: float) -> _Partial:
    start = block * cfg.batch_size
    n = min(cfg.batch_size, cfg.scenarios - start)
    eta = _block_generator(cfg.seed, block, 0).standard_normal((n, ev.loadings.shape[1]))
    s = eta @ ev.loadings.T
    if cfg.mode == "systematic":
        vals = ev.conditional(s)
    else:
        xi = np.empty((n, ev.n))
        for i in range(ev.n):
            xi[:, i] = _block_generator(cfg.seed, block, 1, i).standard_normal(n)
        vals = ev.direct(s, xi)
    vals *= ev.weights
    v = vals.sum(axis=1)
    idx = np.arange(start, start + n)
    pos = _lowest(v, idx, keep)
    d = v - ref
    return _Partial(n, float(d.sum()), float(np.dot(d, d)), vals.sum(axis=0),
                    v[pos], idx[pos], vals[pos])


def _merge(a: _Partial, b: _Partial, keep: int) -> _Partial:
    tv = np.concatenate([a.tail_v, b.tail_v])
    ti = np.concatenate([a.tail_idx, b.tail_idx])
    tf = np.concatenate([a.tail_fac, b.tail_fac])
    pos = _lowest(tv, ti, keep)
    return _Partial(a.count + b.count, a.total + b.total, a.total_sq + b.total_sq,
                    a.fac_sum + b.fac_sum, tv[pos], ti[pos], tf[pos])


def _simulate(portfolio: Portfolio, cfg: SimConfig) -> SimResult:
    S = cfg.scenarios
    alpha = cfg.alpha
    lo, hi = cfg.effective_window
    k = max(1, math.ceil(alpha * S))
    band = math.sqrt(S * alpha * (1.0 - alpha))
    keep = min(S, max(math.ceil(hi * S), k + math.ceil(band) + 1) + 1)
    ev = _Evaluator(portfolio, cfg.curve_nodes)
    n_blocks = math.ceil(S / cfg.batch_size)
    # moments are accumulated around the value at the origin: exact for
    # constant portfolios and free of large cancellations otherwise
    origin = np.zeros((1, ev.n))
    ref = float((ev.conditional(origin) * ev.weights).sum(axis=1)[0])

    def work(b):
        return _run_block(ev, cfg, b, keep, ref)

    acc = None
    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            parts = pool.map(work, range(n_blocks))
            for p in parts:
                acc = p if acc is None else _merge(acc, p, keep)
    else:
        for b in range(n_blocks):
            p = work(b)
            acc = p if acc is None else _merge(acc, p, keep)

    shift = acc.total / S
    mean = ref + shift
    var = max(acc.total_sq / S - shift * shift, 0.0)
    tail = acc.tail_v
    q = float(tail[k - 1])
    k_lo = max(1, int(math.floor(k - band)))
    k_hi = min(tail.size, int(math.ceil(k + band)))
    var_se = 0.5 * float(tail[k_hi - 1] - tail[k_lo - 1])
    worst = tail[:k]
    es = shift - float((worst - ref).mean())
    es_se = float(worst.std(ddof=1) / math.sqrt(k)) if k > 1 else 0.0
    # quantile uncertainty feeds the ES error as well
    es_se = math.hypot(es_se, var_se * math.sqrt(alpha))

    result = SimResult(
        expected_value=mean, expected_value_se=math.sqrt(var / S),
        var_estimate=mean - q, var_std_error=var_se,
        es_estimate=es, es_std_error=es_se, quantile=q,
        scenarios=S, seed=cfg.seed, config=cfg.to_dict(), ids=list(portfolio.ids),
        tail_count=k, tail_values=tail.copy(),
    )
    r0 = int(math.floor(lo * S))
    r1 = min(int(math.ceil(hi * S)), tail.size)
    n_win = r1 - r0
    result.window_count = max(n_win, 0)
    if n_win >= MIN_WINDOW:
        win = acc.tail_fac[r0:r1]
        wv = acc.tail_v[r0:r1]
        fac_mean = acc.fac_sum / S
        result.contributions = fac_mean - win.mean(axis=0)
        # sampling noise inside the window plus the noise of the window's
        # location, carried by the local slope of E[v_i | V]
        dv = wv - wv.mean()
        spread = float(dv @ dv)
        slope = (dv @ (win - win.mean(axis=0))) / spread if spread > 0 else np.zeros(ev.n)
        within = win.std(axis=0, ddof=1) / math.sqrt(n_win)
        result.contribution_se = np.hypot(within, slope * var_se)
        result.window_var = shift - float((wv - ref).mean())
    return result


def simulate_systematic(portfolio: Portfolio, cfg: SimConfig | None = None) -> SimResult:
    cfg = cfg or SimConfig()
    if cfg.mode != "systematic":
        cfg = SimConfig(**{**cfg.__dict__, "mode": "systematic"})
    return _simulate(portfolio, cfg)


def simulate_full(portfolio: Portfolio, cfg: SimConfig | None = None) -> SimResult:
    cfg = cfg or SimConfig(mode="full")
    if cfg.mode != "full":
        cfg = SimConfig(**{**cfg.__dict__, "mode": "full"})
    return _simulate(portfolio, cfg)


def simulate(portfolio: Portfolio, cfg: SimConfig) -> SimResult:
    return _simulate(portfolio, cfg)


def estimate_contributions(result: SimResult) -> tuple[np.ndarray, np.ndarray]:
    """Window VaR contributions and their standard errors from a finished run.

    Raises :class:`InsufficientTailError` when the window holds fewer than
    ``MIN_WINDOW`` scenarios.
    """
    if result.contributions is None:
        raise InsufficientTailError(
            f"contribution window holds {result.window_count} scenarios, need at least {MIN_WINDOW}"
        )
    return result.contributions, result.contribution_se
