"""LASSO solvers: analog LCA, spiking LCA and FISTA.

Problems are ``min_a 0.5*||Phi a - s||^2 + lam*||a||_1`` with the columns of
``Phi`` scaled to unit norm at construction. Solutions are returned in the
normalized coordinates; :meth:`LassoProblem.map_back` divides by the column
scales to recover coefficients for the original dictionary.
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ShapeError
from .snn import SimTrace

log = logging.getLogger(__name__)


@dataclass
class LassoProblem:
    phi: np.ndarray
    s: np.ndarray
    lam: float
    scale: np.ndarray = field(default=None)

    def __post_init__(self):
        phi = np.atleast_2d(np.asarray(self.phi, dtype=float))
        s = np.asarray(self.s, dtype=float).reshape(-1)
        if s.shape[0] != phi.shape[0]:
            raise ShapeError(f"target length {s.shape[0]} != dictionary rows {phi.shape[0]}")
        if not (np.all(np.isfinite(phi)) and np.all(np.isfinite(s)) and np.isfinite(self.lam)):
            raise DomainError("problem data must be finite")
        if self.lam < 0:
            raise DomainError("lambda must be >= 0")
        norms = np.linalg.norm(phi, axis=0)
        if np.any(norms == 0):
            raise DomainError("dictionary has an all-zero column")
        prior = np.ones(phi.shape[1]) if self.scale is None else np.asarray(self.scale, dtype=float)
        self.phi = phi / norms
        self.s = s
        self.scale = prior * norms
        self.lam = float(self.lam)

    @property
    def n(self) -> int:
        return self.phi.shape[1]

    def gram(self) -> np.ndarray:
        return self.phi.T @ self.phi

    def drive(self) -> np.ndarray:
        return self.phi.T @ self.s

    def objective(self, a) -> float:
        r = self.phi @ a - self.s
        return 0.5 * float(r @ r) + self.lam * float(np.sum(np.abs(a)))

    def map_back(self, a) -> np.ndarray:
        return np.asarray(a) / self.scale

    def lam_max(self) -> float:
        """Smallest lambda for which zero is optimal."""
        return float(np.max(np.abs(self.drive())))

    def to_dict(self) -> dict:
        return {"phi": self.phi.tolist(), "s": self.s.tolist(), "lam": self.lam,
                "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, doc) -> "LassoProblem":
        # stored dictionaries are already normalized; keep the recorded scale
        return cls(np.array(doc["phi"]), np.array(doc["s"]), doc["lam"], np.array(doc["scale"]))


@dataclass
class LassoResult:
    a: np.ndarray
    iterations: int
    kkt: float
    converged: bool
    trace: SimTrace | None = None
    log: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {"a": self.a.tolist(), "iterations": self.iterations, "kkt": self.kkt,
                "converged": self.converged}


def soft_threshold(u, lam):
    """``sign(u) * max(|u| - lam, 0)``; exactly zero when ``|u| == lam``."""
    u = np.asarray(u, dtype=float)
    return np.sign(u) * np.maximum(np.abs(u) - lam, 0.0)


def kkt_residual(problem: LassoProblem, a) -> float:
    a = np.asarray(a, dtype=float)
    g = problem.phi.T @ (problem.phi @ a - problem.s)
    lam = problem.lam
    active = a != 0
    r_on = np.abs(g[active] + lam * np.sign(a[active]))
    r_off = np.maximum(np.abs(g[~active]) - lam, 0.0)
    return float(max(r_on.max(initial=0.0), r_off.max(initial=0.0)))


def solve_lca(problem: LassoProblem, tau: float = 1.0, dt: float = 0.1, max_steps: int = 200_000,
              tol: float = 1e-6, record_every: int = 0) -> LassoResult:
    """Analog locally competitive algorithm.

    Iterates ``u += (dt/tau)*(Phi^T s - u - (Phi^T Phi - I) a)`` with
    ``a = soft_threshold(u, lam)`` until the membrane step ``||du||_inf`` (which
    bounds ``||da||_inf``) drops to ``tol``.
    """
    if not (tau > 0 and 0 < dt <= tau):
        raise DomainError("need tau > 0 and 0 < dt <= tau")
    h = dt / tau
    b = problem.drive()
    inhib = problem.gram() - np.eye(problem.n)
    u = np.zeros(problem.n)
    a = np.zeros(problem.n)
    rows = []
    converged = False
    step = 0
    for step in range(1, max_steps + 1):
        du = h * (b - u - inhib @ a)
        u = u + du
        a = soft_threshold(u, problem.lam)
        if record_every and step % record_every == 0:
            rows.append((step, problem.objective(a), kkt_residual(problem, a)))
        if np.max(np.abs(du)) <= tol:
            converged = True
            break
    if not converged:
        log.warning("LCA did not converge in %d steps", max_steps)
    return LassoResult(a, step, kkt_residual(problem, a), converged, log=rows)


def solve_slca(problem: LassoProblem, window: int = 20_000, dt: float = 0.01, threshold: float | None = None,
               tau: float = 1.0, filter_len: int = 10, warmup: int = 0,
               max_rate: float = 0.5) -> LassoResult:
    """Spiking LCA.

    Every coefficient is a pair of integrate-and-fire units, one for each sign.
    A leaky soma current ``u_i`` is driven by ``Phi^T s`` and inhibited through
    ``-(Phi^T Phi - I)`` by the box-car filtered (``filter_len`` steps) spike
    trains of the other coefficients. The positive unit integrates
    ``dt*(u_i - lam)`` and the negative unit ``dt*(-u_i - lam)``; each fires and
    subtracts ``threshold`` on crossing it, and neither is allowed to go below
    ``-threshold``. After ``warmup`` steps, spikes are counted over ``window``
    steps and decoded as ``threshold*(n_pos - n_neg)/(window*dt)``.

    With ``threshold=None`` it is set so that a coefficient of size
    ``||Phi^T s||_inf`` fires at ``max_rate`` spikes per step.
    """
    if window < 1:
        raise DomainError("window must be >= 1 step")
    if not (tau > 0 and 0 < dt <= tau):
        raise DomainError("need tau > 0 and 0 < dt <= tau")
    n = problem.n
    b = problem.drive()
    inhib = problem.gram() - np.eye(n)
    if threshold is None:
        threshold = dt * max(float(np.max(np.abs(b))), 1e-12) / max_rate
    h = dt / tau
    u = np.zeros(n)
    v = np.zeros((2, n))
    hist = np.zeros((filter_len, n))
    box = np.zeros(n)
    total = warmup + window
    rasters = np.zeros((2, n, window), dtype=np.uint8)
    counted_spikes = 0
    all_spikes = 0
    rate_unit = threshold / (filter_len * dt)
    for t in range(total):
        a_hat = rate_unit * box
        u = u + h * (b - u - inhib @ a_hat)
        v[0] += dt * (u - problem.lam)
        v[1] += dt * (-u - problem.lam)
        np.maximum(v, -threshold, out=v)
        spk = v >= threshold
        v -= threshold * spk
        signed = spk[0].astype(float) - spk[1]
        slot = t % filter_len
        box += signed - hist[slot]
        hist[slot] = signed
        all_spikes += int(spk.sum())
        if t >= warmup:
            rasters[:, :, t - warmup] = spk
            counted_spikes += int(spk.sum())
    counts = rasters.sum(axis=2, dtype=np.int64)
    a = threshold * (counts[0] - counts[1]) / (window * dt)
    fan = np.count_nonzero(inhib, axis=0)
    syn = int(np.sum(counts.sum(axis=0) * fan))
    trace = SimTrace(
        rasters=[rasters[0], rasters[1]],
        spike_count=counted_spikes,
        syn_events=syn,
        neuron_updates=2 * n * window,
        steps=window,
    )
    kkt = kkt_residual(problem, a)
    return LassoResult(a, total, kkt, True, trace=trace, log=[("warmup_spikes", all_spikes - counted_spikes)])


def power_iteration(mat, rtol: float = 1e-6, max_iter: int = 10_000, seed: int = 0) -> float:
    """Largest eigenvalue of a symmetric PSD matrix."""
    rng = np.random.default_rng(seed)
    x = rng.normal(size=mat.shape[0])
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(max_iter):
        y = mat @ x
        new = float(np.linalg.norm(y))
        if new == 0:
            return 0.0
        x = y / new
        if abs(new - est) <= rtol * new:
            return new
        est = new
    return est


def solve_fista(problem: LassoProblem, max_iter: int = 100_000, tol: float = 1e-10) -> LassoResult:
    """FISTA with step ``1/L`` and a monotone restart.

    When an accelerated step would increase the objective, momentum is reset
    and a plain proximal-gradient step from the previous iterate is taken
    instead, so the objective never increases. Stops once the KKT residual is
    at most ``tol``.
    """
    phi, s, lam = problem.phi, problem.s, problem.lam
    gram = problem.gram()
    b = problem.drive()
    lip = power_iteration(gram)
    if lip == 0:
        return LassoResult(np.zeros(problem.n), 0, kkt_residual(problem, np.zeros(problem.n)), True)
    step = 1.0 / lip
    x = np.zeros(problem.n)
    y = x.copy()
    t = 1.0
    f_prev = problem.objective(x)
    rows = []
    converged = kkt_residual(problem, x) <= tol
    it = 0
    while not converged and it < max_iter:
        it += 1
        z = soft_threshold(y - step * (gram @ y - b), step * lam)
        f_z = problem.objective(z)
        if f_z > f_prev:
            t = 1.0
            z = soft_threshold(x - step * (gram @ x - b), step * lam)
            f_z = problem.objective(z)
            y = z.copy()
        else:
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            y = z + ((t - 1.0) / t_next) * (z - x)
            t = t_next
        x, f_prev = z, f_z
        kkt = kkt_residual(problem, x)
        rows.append((it, f_prev, kkt))
        converged = kkt <= tol
    return LassoResult(x, it, kkt_residual(problem, x), converged, log=rows)


def write_log_csv(path, result: LassoResult) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "objective", "kkt_residual"])
        for row in result.log:
            if isinstance(row[0], str):
                continue
            w.writerow([row[0], repr(float(row[1])), repr(float(row[2]))])


def save_json(path, problem: LassoProblem, result: LassoResult | None = None) -> None:
    doc = {"problem": problem.to_dict()}
    if result is not None:
        doc["solution"] = result.to_dict()
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_json(path):
    with open(path) as fh:
        doc = json.load(fh)
    sol = doc.get("solution")
    return LassoProblem.from_dict(doc["problem"]), (np.array(sol["a"]) if sol else None)
