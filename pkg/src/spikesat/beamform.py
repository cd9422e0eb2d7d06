"""Sparse receive beamforming for a uniform linear array.

The weights ``w`` are fit so that the array response ``w^H a(theta)`` follows
a 0/1 desired response over an angle grid, with an L1 penalty on the real and
imaginary parts of ``w`` so that whole elements (RF chains) switch off.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ShapeError
from .lasso import LassoProblem, LassoResult, solve_fista, solve_slca
from .snn import SimTrace

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ArrayGeometry:
    n: int = 32
    spacing: float = 0.5  # in wavelengths

    def __post_init__(self):
        if self.n < 2:
            raise DomainError("an array needs at least 2 elements")
        if not 0 < self.spacing <= 1:
            raise DomainError("spacing must lie in (0, 1] wavelengths")


def steering_vector(geometry: ArrayGeometry, theta_deg):
    """``a_n(theta) = exp(i 2pi d n sin(theta))``; a matrix ``(len(theta), n)`` for array input."""
    th = np.asarray(theta_deg, dtype=float)
    if np.any(np.abs(th) > 90):
        raise DomainError("angles must lie within [-90, 90] degrees")
    n = np.arange(geometry.n)
    phase = 2j * np.pi * geometry.spacing * np.multiply.outer(np.sin(np.deg2rad(th)), n)
    return np.exp(phase)


def beamwidth_deg(geometry: ArrayGeometry) -> float:
    """Rough half-power beamwidth at broadside, 102/N degrees."""
    return 102.0 / geometry.n


@dataclass
class BeamTask:
    theta0: float = 20.0
    grid: np.ndarray = field(default_factory=lambda: np.linspace(-90.0, 90.0, 256))
    lam: float = 0.0
    desired: np.ndarray | None = None
    interferers: list = field(default_factory=lambda: [(-40.0, 10.0), (50.0, 10.0)])
    noise_power: float = 1.0
    window_halfwidth: float | None = None

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        if self.grid.ndim != 1 or self.grid.size < 2:
            raise ShapeError("angle grid must be a vector of at least 2 angles")
        if np.unique(self.grid).size != self.grid.size:
            raise DomainError("angle grid contains duplicate angles")
        if np.any(np.abs(self.grid) > 90):
            raise DomainError("grid angles must lie within [-90, 90]")
        if not self.grid.min() <= self.theta0 <= self.grid.max():
            raise DomainError("target angle lies outside the grid")
        if self.lam < 0 or self.noise_power < 0:
            raise DomainError("lambda and noise power must be >= 0")
        if self.desired is not None:
            d = np.asarray(self.desired, dtype=float)
            if d.shape != self.grid.shape or not np.all((d == 0) | (d == 1)):
                raise ShapeError("desired response must be a 0/1 vector over the grid")
            self.desired = d

    def main_lobe(self, geometry: ArrayGeometry) -> np.ndarray:
        """Boolean mask of grid points inside the main-lobe window."""
        if self.desired is not None:
            return self.desired > 0
        half = self.window_halfwidth if self.window_halfwidth is not None else 2 * beamwidth_deg(geometry)
        mask = np.abs(self.grid - self.theta0) <= half
        if not mask.any():
            mask[np.argmin(np.abs(self.grid - self.theta0))] = True
        return mask

    def response(self, geometry: ArrayGeometry) -> np.ndarray:
        return self.main_lobe(geometry).astype(float)

    def to_dict(self) -> dict:
        return {
            "theta0": self.theta0, "grid": self.grid.tolist(), "lam": self.lam,
            "desired": None if self.desired is None else self.desired.tolist(),
            "interferers": [list(x) for x in self.interferers],
            "noise_power": self.noise_power, "window_halfwidth": self.window_halfwidth,
        }

    @classmethod
    def from_dict(cls, doc) -> "BeamTask":
        doc = dict(doc)
        doc["interferers"] = [tuple(x) for x in doc.get("interferers", [])]
        return cls(**doc)


@dataclass
class BeamWeights:
    w: np.ndarray
    eps_off: float | None = None
    degenerate: bool = False
    trace: SimTrace | None = None
    raw: np.ndarray | None = None

    def off(self):
        return rf_chains_off(self.w, self.eps_off)


@dataclass
class ReassemblyMap:
    n: int
    scale: np.ndarray

    def to_complex(self, x_normalized) -> np.ndarray:
        x = np.asarray(x_normalized) / self.scale
        return x[: self.n] + 1j * x[self.n:]


def steering_matrix(task: BeamTask, geometry: ArrayGeometry) -> np.ndarray:
    """Rows ``a(theta_g)^H`` so that ``(A w)_g = a(theta_g)^H w``."""
    return steering_vector(geometry, task.grid).conj()


def stack_real(a_mat, d):
    """Real form ``[[Re A, -Im A], [Im A, Re A]]`` and ``[d; 0]`` of a complex fit."""
    re, im = a_mat.real, a_mat.imag
    big = np.block([[re, -im], [im, re]])
    return big, np.concatenate([np.asarray(d, dtype=float), np.zeros(a_mat.shape[0])])


def build_lasso(task: BeamTask, geometry: ArrayGeometry) -> tuple[LassoProblem, ReassemblyMap]:
    """Real-stacked LASSO for ``min ||A w - d||^2/2 + lam(||Re w||_1 + ||Im w||_1)``.

    The stacked columns all have norm ``sqrt(G)``; the penalty is divided by
    that factor so the normalized problem has the same minimizer.
    """
    a_mat = steering_matrix(task, geometry)
    big, d = stack_real(a_mat, task.response(geometry))
    norms = np.linalg.norm(big, axis=0)
    # all stacked columns share one norm, so a uniform lambda rescale is exact
    lam = task.lam / norms[0]
    prob = LassoProblem(big, d, lam)
    return prob, ReassemblyMap(geometry.n, prob.scale)


def lam_max(task: BeamTask, geometry: ArrayGeometry) -> float:
    """``||A~^T d~||_inf``: at or above this penalty the zero vector is optimal."""
    big, d = stack_real(steering_matrix(task, geometry), task.response(geometry))
    return float(np.max(np.abs(big.T @ d)))


def distortionless(w, geometry: ArrayGeometry, theta0: float):
    """Rescale ``w`` so that ``w^H a(theta0) = 1``."""
    resp = np.vdot(w, steering_vector(geometry, theta0))
    if resp == 0:
        raise DomainError("weights have zero response toward the target")
    # w^H a scales by conj(c) when w scales by c
    return w / np.conj(resp)


def solve_beam(task: BeamTask, geometry: ArrayGeometry, solver: str = "fista",
               slca_window: int = 20_000, slca_dt: float = 0.01, fista_tol: float = 1e-10,
               **slca_kw) -> BeamWeights:
    prob, remap = build_lasso(task, geometry)
    if solver == "fista":
        res: LassoResult = solve_fista(prob, tol=fista_tol)
    elif solver == "slca":
        res = solve_slca(prob, window=slca_window, dt=slca_dt, **slca_kw)
    else:
        raise DomainError(f"unknown solver {solver!r}")
    raw = remap.to_complex(res.a)
    if not np.any(raw):
        log.warning("all-zero beamformer (lambda %.4g too large)", task.lam)
        return BeamWeights(raw, degenerate=True, trace=res.trace, raw=raw)
    resp = np.vdot(raw, steering_vector(geometry, task.theta0))
    if abs(resp) < 1e-12 * np.linalg.norm(raw):
        log.warning("beamformer has no response toward the target")
        return BeamWeights(raw, degenerate=True, trace=res.trace, raw=raw)
    return BeamWeights(distortionless(raw, geometry, task.theta0), trace=res.trace, raw=raw)


def beampattern(w, geometry: ArrayGeometry, grid, db: bool = False) -> np.ndarray:
    """``|w^H a(theta)|^2`` over the grid, optionally in dB."""
    a = steering_vector(geometry, grid)
    p = np.abs(a @ np.conj(np.asarray(w))) ** 2
    if db:
        with np.errstate(divide="ignore"):
            return 10.0 * np.log10(p)
    return p


def rf_chains_off(w, eps_off: float | None = None) -> tuple[int, float]:
    """Elements whose real and imaginary weights are both within ``eps_off`` of zero.

    The default tolerance is ``1e-6`` times the largest weight magnitude.
    """
    w = np.asarray(w)
    if eps_off is None:
        peak = np.max(np.abs(w)) if w.size else 0.0
        eps_off = 1e-6 * peak
    off = (np.abs(w.real) <= eps_off) & (np.abs(w.imag) <= eps_off)
    count = int(np.sum(off))
    return count, count / w.size


def main_lobe_loss_db(w, w_ref, task: BeamTask, geometry: ArrayGeometry) -> float:
    """Mean main-lobe power of the reference minus that of ``w``, in dB.

    Both weight vectors are normalized to unit response at the target first.
    """
    mask = task.main_lobe(geometry)
    grid = task.grid[mask]
    p = beampattern(distortionless(w, geometry, task.theta0), geometry, grid)
    p_ref = beampattern(distortionless(w_ref, geometry, task.theta0), geometry, grid)
    return float(10 * np.log10(np.mean(p_ref) / np.mean(p)))


def snapshots(task: BeamTask, geometry: ArrayGeometry, count: int, seed) -> np.ndarray:
    """Received snapshots ``(count, n)``: unit-modulus target signal plus
    complex Gaussian interferers (power given in dB over the noise) and noise."""
    rng = np.random.default_rng(seed)
    a0 = steering_vector(geometry, task.theta0)
    sig = np.exp(2j * np.pi * rng.random(count))
    r = np.outer(sig, a0)
    for ang, inr_db in task.interferers:
        power = task.noise_power * 10 ** (inr_db / 10)
        amp = np.sqrt(power / 2) * (rng.normal(size=count) + 1j * rng.normal(size=count))
        r += np.outer(amp, steering_vector(geometry, ang))
    noise = rng.normal(size=(count, geometry.n)) + 1j * rng.normal(size=(count, geometry.n))
    return r + np.sqrt(task.noise_power / 2) * noise


def avg_output_power(w, task: BeamTask, geometry: ArrayGeometry, count: int = 2048, seed=0) -> float:
    """Mean ``|w^H r(t)|^2`` over simulated snapshots (= ``w^H R_hat w``)."""
    w = np.asarray(w)
    resp = np.vdot(w, steering_vector(geometry, task.theta0))
    if abs(resp - 1) > 1e-9:
        raise DomainError("weights must satisfy w^H a(theta0) = 1 before comparing output power")
    r = snapshots(task, geometry, count, seed)
    y = r @ np.conj(w)
    return float(np.mean(np.abs(y) ** 2))


def default_task(geometry: ArrayGeometry, lam_fraction: float = 0.0, **kw) -> BeamTask:
    """Default scenario with ``lam`` set as a fraction of :func:`lam_max`."""
    task = BeamTask(**kw)
    if lam_fraction:
        task.lam = lam_fraction * lam_max(task, geometry)
    return task


def sweep_lambda(task: BeamTask, geometry: ArrayGeometry, fractions, solver: str = "fista") -> list[dict]:
    """Sparsity and main-lobe loss along a penalty sweep (fractions of ``lam_max``)."""
    base = BeamTask.from_dict({**task.to_dict(), "lam": 0.0})
    dense = solve_beam(base, geometry, solver="fista")
    top = lam_max(task, geometry)
    rows = []
    for frac in fractions:
        t = BeamTask.from_dict({**task.to_dict(), "lam": float(frac) * top})
        bw = solve_beam(t, geometry, solver=solver)
        count, fraction = rf_chains_off(bw.w)
        loss = float("nan") if bw.degenerate else main_lobe_loss_db(bw.w, dense.w, t, geometry)
        rows.append({"lam_fraction": float(frac), "lam": t.lam, "off_count": count,
                     "off_fraction": fraction, "main_lobe_loss_db": loss,
                     "degenerate": bw.degenerate})
    return rows


def save_task(path, task: BeamTask, geometry: ArrayGeometry) -> None:
    with open(path, "w") as fh:
        json.dump({"geometry": {"n": geometry.n, "spacing": geometry.spacing},
                   "task": task.to_dict()}, fh)


def load_task(path) -> tuple[BeamTask, ArrayGeometry]:
    with open(path) as fh:
        doc = json.load(fh)
    return BeamTask.from_dict(doc["task"]), ArrayGeometry(**doc["geometry"])
