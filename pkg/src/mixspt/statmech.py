"""Quenched-disorder Ising models on square-lattice cylinders.

Spins sit at ``(x, y)`` with ``0 <= x < Lx`` (open direction) and
``0 <= y < Ly`` (periodic when ``Ly >= 3``); spin index is ``x * Ly + y``.
Bonds are ordered horizontal first, ``(x, y)-(x+1, y)``, then vertical,
``(x, y)-(x, y+1)``.  A configuration has weight ``exp(sum_e K_e s_u s_v)``.

Three evaluators of ``<s_i s_j>`` check one another: exhaustive
enumeration (at most 16 spins), a column transfer matrix (circumference
at most 8) and single-spin Metropolis compiled with numba.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property

import numba
import numpy as np

MAX_EXACT_SPINS = 16
MAX_TM_CIRCUMFERENCE = 8
K_MAX = 40.0  # tanh(K_MAX) == 1.0 in double precision


class SizeMethodError(ValueError):
    """Requested evaluator cannot handle this lattice."""


class BracketingError(ValueError):
    """Failure curves do not cross inside the scanned grid."""


def nishimori_beta(p: float) -> float:
    if not 0.0 <= p <= 0.5:
        raise ValueError(f"p must lie in [0, 0.5], got {p}")
    return math.inf if p == 0.0 else math.atanh(1.0 - 2.0 * p)


def antiferro_probability(beta: float) -> float:
    return 1.0 / (1.0 + math.exp(2.0 * beta)) if math.isfinite(beta) else 0.0


@dataclass(frozen=True)
class SquareLattice:
    Lx: int
    Ly: int

    def __post_init__(self) -> None:
        if self.Lx < 1 or self.Ly < 1:
            raise ValueError("lattice dimensions must be positive")

    @property
    def periodic(self) -> bool:
        return self.Ly >= 3

    @property
    def n_spins(self) -> int:
        return self.Lx * self.Ly

    def index(self, site) -> int:
        if isinstance(site, (tuple, list)):
            x, y = site
            return int(x) * self.Ly + int(y)
        return int(site)

    @cached_property
    def edges(self) -> np.ndarray:
        out = [(x * self.Ly + y, (x + 1) * self.Ly + y) for x in range(self.Lx - 1) for y in range(self.Ly)]
        n_vert = self.Ly if self.periodic else self.Ly - 1
        out += [(x * self.Ly + y, x * self.Ly + (y + 1) % self.Ly) for x in range(self.Lx) for y in range(n_vert)]
        return np.array(out, dtype=np.int64).reshape(-1, 2)

    @property
    def n_horizontal(self) -> int:
        return (self.Lx - 1) * self.Ly

    @property
    def n_edges(self) -> int:
        return len(self.edges)


@dataclass(frozen=True, eq=False)
class IsingInstance:
    """Ising model with arbitrary real couplings on a square cylinder."""
    lattice: SquareLattice
    couplings: np.ndarray

    def __post_init__(self) -> None:
        k = np.clip(np.asarray(self.couplings, dtype=float), -K_MAX, K_MAX)
        if k.shape != (self.lattice.n_edges,):
            raise ValueError(f"expected {self.lattice.n_edges} couplings, got shape {k.shape}")
        object.__setattr__(self, "couplings", k)

    def gauge(self, tau: np.ndarray) -> "IsingInstance":
        tau = np.asarray(tau)
        e = self.lattice.edges
        return IsingInstance(self.lattice, self.couplings * tau[e[:, 0]] * tau[e[:, 1]])


@dataclass(frozen=True, eq=False)
class RBIMInstance:
    """Random-bond Ising model at inverse temperature atanh(1-2p).

    With perturbation ``lam`` the reduced coupling of bond e is
    ``atanh[(tanh lam + t m_e) / (1 + t m_e tanh lam)]`` with ``t = 1-2p``,
    which is the same as ``lam + beta * m_e``.
    """
    lattice: SquareLattice
    bonds: np.ndarray
    p: float
    lam: float = 0.0

    def __post_init__(self) -> None:
        m = np.asarray(self.bonds, dtype=np.int8)
        if m.shape != (self.lattice.n_edges,) or not np.isin(m, (-1, 1)).all():
            raise ValueError("bonds must be a +-1 vector with one entry per edge")
        if self.lam < 0:
            raise ValueError("lam must be non-negative")
        nishimori_beta(self.p)
        object.__setattr__(self, "bonds", m)

    @property
    def beta(self) -> float:
        return nishimori_beta(self.p)

    @property
    def effective_couplings(self) -> np.ndarray:
        t = 1.0 - 2.0 * self.p
        if self.lam == 0.0:
            return self.beta * self.bonds.astype(float)
        tl = math.tanh(self.lam)
        ratio = (tl + t * self.bonds) / (1.0 + tl * t * self.bonds)
        with np.errstate(divide="ignore"):
            return np.arctanh(np.clip(ratio, -1.0, 1.0))

    def ising(self) -> IsingInstance:
        return IsingInstance(self.lattice, self.effective_couplings)

    def gauge(self, tau: np.ndarray) -> "RBIMInstance":
        e = self.lattice.edges
        return RBIMInstance(self.lattice, self.bonds * tau[e[:, 0]] * tau[e[:, 1]], self.p, self.lam)


@dataclass(frozen=True, eq=False)
class DisorderSample:
    """Bond configuration with the error set that produced it.

    ``errors`` marks bonds that disagree with the reference spin pattern
    ``tau`` (all +1 for Nishimori sampling); ``log_weight`` is the log
    probability of the error set under i.i.d. flips with probability p.
    """
    instance: RBIMInstance
    errors: np.ndarray
    tau: np.ndarray
    log_weight: float


def _as_ising(instance) -> IsingInstance:
    return instance.ising() if isinstance(instance, RBIMInstance) else instance


def _error_log_weight(errors: np.ndarray, p: float) -> float:
    k = int(errors.sum())
    n = len(errors)
    if p == 0.0:
        return 0.0 if k == 0 else -math.inf
    if p == 1.0:
        return 0.0 if k == n else -math.inf
    return k * math.log(p) + (n - k) * math.log1p(-p)


def sample_nishimori(dims: tuple[int, int], p: float, rng: np.random.Generator) -> DisorderSample:
    """i.i.d. bonds with P(m = -1) = 1/(1+exp(2 beta)), which equals p."""
    lat = SquareLattice(*dims)
    p_minus = antiferro_probability(nishimori_beta(p))
    errors = rng.random(lat.n_edges) < p_minus
    bonds = np.where(errors, -1, 1)
    return DisorderSample(RBIMInstance(lat, bonds, p), errors, np.ones(lat.n_spins, dtype=np.int8),
                          _error_log_weight(errors, p))


# ---------------------------------------------------------------- evaluators

@dataclass(frozen=True)
class Correlation:
    value: float
    stderr: float
    method: str


def _all_configs(n: int) -> np.ndarray:
    idx = np.arange(2 ** n, dtype=np.int64)[:, None]
    return (1 - 2 * ((idx >> np.arange(n)) & 1)).astype(np.int8)


def _exact_log_weights(model: IsingInstance) -> tuple[np.ndarray, np.ndarray]:
    n = model.lattice.n_spins
    if n > MAX_EXACT_SPINS:
        raise SizeMethodError(f"exact enumeration is limited to {MAX_EXACT_SPINS} spins, got {n}")
    cfg = _all_configs(n)
    e = model.lattice.edges
    bond_products = cfg[:, e[:, 0]].astype(float) * cfg[:, e[:, 1]]
    return cfg, bond_products @ model.couplings


def log_partition_exact(instance) -> float:
    _, logw = _exact_log_weights(_as_ising(instance))
    top = logw.max()
    return float(top + np.log(np.exp(logw - top).sum()))


def _correlation_exact(model: IsingInstance, i: int, j: int) -> float:
    cfg, logw = _exact_log_weights(model)
    w = np.exp(logw - logw.max())
    return float(w @ (cfg[:, i].astype(float) * cfg[:, j]) / w.sum())


class _ColumnTransfer:
    """Log-scaled transfer matrix acting on columns of ``Ly`` spins."""

    def __init__(self, model: IsingInstance):
        lat = model.lattice
        if lat.Ly > MAX_TM_CIRCUMFERENCE:
            raise SizeMethodError(f"transfer matrix is limited to circumference {MAX_TM_CIRCUMFERENCE}, got {lat.Ly}")
        self.lat = lat
        self.spins = _all_configs(lat.Ly).astype(float)  # (2^Ly, Ly), bit y of the index is spin y
        k = model.couplings
        nh = lat.n_horizontal
        self.k_h = k[:nh].reshape(lat.Lx - 1, lat.Ly) if lat.Lx > 1 else np.zeros((0, lat.Ly))
        n_vert = lat.Ly if lat.periodic else lat.Ly - 1
        self.k_v = k[nh:].reshape(lat.Lx, n_vert)
        rolled = np.roll(self.spins, -1, axis=1)[:, :n_vert]
        self.vertical_products = self.spins[:, :n_vert] * rolled

    def _column_log(self, x: int) -> np.ndarray:
        return self.vertical_products @ self.k_v[x]

    def _hop(self, vecs: np.ndarray, x: int) -> tuple[np.ndarray, float]:
        """Apply the horizontal bonds between columns x and x+1."""
        ly = self.lat.Ly
        log_scale = 0.0
        t = vecs.reshape((vecs.shape[0],) + (2,) * ly)
        for y in range(ly):
            k = self.k_h[x, y]
            small = math.exp(-2.0 * abs(k))
            mat = np.array([[1.0, small], [small, 1.0]]) if k >= 0 else np.array([[small, 1.0], [1.0, small]])
            axis = 1 + (ly - 1 - y)
            t = np.moveaxis(np.tensordot(t, mat, axes=([axis], [0])), -1, axis)
            log_scale += abs(k)
        return t.reshape(vecs.shape), log_scale

    def run(self, insertions: list[list[int]]) -> tuple[float, np.ndarray]:
        """Return log Z and the ratios Z[prod s]/Z for each insertion list."""
        ly = self.lat.Ly
        n_vec = 1 + len(insertions)
        log_z = 0.0
        vecs = None
        for x in range(self.lat.Lx):
            col = self._column_log(x)
            top = col.max()
            w = np.exp(col - top)
            log_z += top
            if vecs is None:
                vecs = np.tile(w, (n_vec, 1))
            else:
                vecs, scale = self._hop(vecs, x - 1)
                log_z += scale
                vecs = vecs * w
            for r, sites in enumerate(insertions, start=1):
                for s in sites:
                    if s // ly == x:
                        vecs[r] *= self.spins[:, s % ly]
            norm = vecs[0].sum()
            vecs = vecs / norm
            log_z += math.log(norm)
        return log_z, vecs[1:].sum(axis=1)


def log_partition_tm(instance) -> float:
    return _ColumnTransfer(_as_ising(instance)).run([])[0]


@numba.njit(cache=True)
def _metropolis_kernel(spins, ptr, nbr, kk, n_therm, n_meas, every, seed):
    np.random.seed(seed)
    n = spins.shape[0]
    snaps = np.empty((n_meas, n), dtype=np.int8)
    total = n_therm + n_meas * every
    for sweep in range(total):
        for _ in range(n):
            s = np.random.randint(n)
            h = 0.0
            for t in range(ptr[s], ptr[s + 1]):
                h += kk[t] * spins[nbr[t]]
            d = 2.0 * spins[s] * h
            if d <= 0.0 or np.random.random() < np.exp(-d):
                spins[s] = -spins[s]
        done = sweep - n_therm + 1
        if done > 0 and done % every == 0:
            snaps[done // every - 1] = spins
    return snaps


def _adjacency(model: IsingInstance) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    e = model.lattice.edges
    n = model.lattice.n_spins
    src = np.concatenate([e[:, 0], e[:, 1]])
    dst = np.concatenate([e[:, 1], e[:, 0]])
    k = np.concatenate([model.couplings, model.couplings])
    order = np.argsort(src, kind="stable")
    ptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(ptr, src + 1, 1)
    return np.cumsum(ptr), dst[order].astype(np.int64), k[order]


def metropolis_samples(instance, n_meas: int, seed: int, n_therm: int = 1000, every: int = 2,
                       start: np.ndarray | None = None) -> np.ndarray:
    """Spin snapshots (n_meas, n_spins) from single-spin Metropolis.

    One sweep is n_spins random single-site proposals; snapshots are taken
    every ``every`` sweeps after ``n_therm`` thermalization sweeps.
    """
    model = _as_ising(instance)
    ptr, nbr, kk = _adjacency(model)
    n = model.lattice.n_spins
    if start is None:
        start = np.where(np.random.default_rng(seed).random(n) < 0.5, 1, -1)
    spins = np.asarray(start, dtype=np.int8).copy()
    return _metropolis_kernel(spins, ptr, nbr, kk, n_therm, n_meas, every, seed)


def binned_stderr(values: np.ndarray, n_bins: int = 50) -> float:
    values = np.asarray(values, dtype=float)
    n_bins = min(n_bins, len(values))
    if n_bins < 2:
        return math.nan
    usable = len(values) // n_bins * n_bins
    means = values[:usable].reshape(n_bins, -1).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(n_bins))


def correlation(instance, i, j, method: str = "auto", n_meas: int = 20000, n_therm: int = 1000,
                every: int = 2, seed: int = 0) -> Correlation:
    """Thermal <s_i s_j>; sites are indices or (x, y) pairs."""
    model = _as_ising(instance)
    lat = model.lattice
    i, j = lat.index(i), lat.index(j)
    if method == "auto":
        if lat.n_spins <= MAX_EXACT_SPINS:
            method = "exact"
        elif lat.Ly <= MAX_TM_CIRCUMFERENCE:
            method = "transfer_matrix"
        else:
            method = "metropolis"
    if method == "exact":
        return Correlation(_correlation_exact(model, i, j), 0.0, method)
    if method == "transfer_matrix":
        _, ratios = _ColumnTransfer(model).run([[i, j]])
        return Correlation(float(ratios[0]), 0.0, method)
    if method == "metropolis":
        snaps = metropolis_samples(model, n_meas, seed, n_therm, every)
        vals = snaps[:, i].astype(float) * snaps[:, j]
        return Correlation(float(vals.mean()), binned_stderr(vals), method)
    raise SizeMethodError(f"unknown method {method!r}")


# ------------------------------------------------------------ disorder checks

@dataclass(frozen=True)
class NishimoriCheck:
    lhs: float
    rhs: float
    z: float
    n_disorder: int


def nishimori_identity_check(dims: tuple[int, int], p: float, n_disorder: int, seed: int = 0,
                             i=None, j=None, method: str = "auto") -> NishimoriCheck:
    """Compare [<s_i s_j>^2] with [<s_i s_j>] over Nishimori-line disorder.

    The default pair is (0, 0) and (Lx-1, Ly//2), the farthest apart on the cylinder.
    """
    rng = np.random.default_rng(seed)
    lat = SquareLattice(*dims)
    i = (0, 0) if i is None else i
    j = (lat.Lx - 1, lat.Ly // 2) if j is None else j
    c = np.empty(n_disorder)
    for k in range(n_disorder):
        inst = sample_nishimori(dims, p, rng).instance
        c[k] = correlation(inst, i, j, method=method, seed=seed + k).value
    lhs, rhs = float(np.mean(c ** 2)), float(np.mean(c))
    diff = c ** 2 - c
    sd = diff.std(ddof=1) / math.sqrt(n_disorder) if n_disorder > 1 else 0.0
    z = 0.0 if sd == 0.0 else float(diff.mean() / sd)
    return NishimoriCheck(lhs, rhs, z, n_disorder)


def sdc_instance(dims: tuple[int, int], observed: np.ndarray, q: float, r: float) -> IsingInstance:
    """Ising couplings for outcome-dependent flips of the SDC channel.

    Bond e gets ``K_e = m_e * ln(w0/w1) / 2`` where w0, w1 are the no-flip
    and flip weights given the observed outcome.  With r = 0 this is the
    Nishimori coupling at p = q/2.
    """
    from .decoders import ErrorModel  # local import keeps statmech free of decoder state
    observed = np.asarray(observed)
    w0, w1 = ErrorModel("sdc", q=q, r=r).weights(observed)
    with np.errstate(divide="ignore"):
        k = 0.5 * (np.log(w0) - np.log(w1))
    return IsingInstance(SquareLattice(*dims), observed * k)


# ------------------------------------------------------------- lambda model

def sample_clean_ising(lattice: SquareLattice, coupling: float, rng: np.random.Generator, n: int) -> np.ndarray:
    """Exact samples (n, n_spins) of the uniform Ising model by column ancestral sampling."""
    if lattice.Ly > MAX_TM_CIRCUMFERENCE:
        return np.stack([metropolis_samples(IsingInstance(lattice, np.full(lattice.n_edges, coupling)), 1,
                                            int(rng.integers(2 ** 31)), n_therm=2000)[0] for _ in range(n)])
    ly = lattice.Ly
    spins = _all_configs(ly).astype(float)
    n_vert = ly if lattice.periodic else ly - 1
    col = coupling * (spins[:, :n_vert] * np.roll(spins, -1, axis=1)[:, :n_vert]).sum(axis=1)
    hop = coupling * (spins @ spins.T)
    hop_w = np.exp(hop - hop.max())
    col_w = np.exp(col - col.max())
    back = [None] * lattice.Lx
    back[-1] = col_w / col_w.sum()
    for x in range(lattice.Lx - 2, -1, -1):
        v = col_w * (hop_w @ back[x + 1])
        back[x] = v / v.sum()
    out = np.empty((n, lattice.n_spins), dtype=np.int8)
    state = _categorical(np.tile(back[0], (n, 1)), rng)
    out[:, :ly] = spins[state]
    for x in range(1, lattice.Lx):
        state = _categorical(hop_w[state] * back[x], rng)
        out[:, x * ly:(x + 1) * ly] = spins[state]
    return out


def _categorical(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    cdf = np.cumsum(weights, axis=1)
    u = rng.random(len(weights)) * cdf[:, -1]
    return np.minimum((cdf < u[:, None]).sum(axis=1), weights.shape[1] - 1)


def sample_lambda_disorder(dims: tuple[int, int], p: float, lam: float, rng: np.random.Generator,
                           n: int = 1) -> list[DisorderSample]:
    """Draw bonds with probability proportional to Z(m, lam).

    Summing the joint weight over m leaves a clean Ising model at coupling
    lam for the spins; given the spins each bond is an independent
    heat-bath draw equal to s_u s_v with probability 1-p.
    """
    lat = SquareLattice(*dims)
    tau = sample_clean_ising(lat, lam, rng, n)
    e = lat.edges
    out = []
    for t in tau:
        errors = rng.random(lat.n_edges) < p
        bonds = t[e[:, 0]] * t[e[:, 1]] * np.where(errors, -1, 1)
        out.append(DisorderSample(RBIMInstance(lat, bonds, p, lam), errors, t, _error_log_weight(errors, p)))
    return out


def ratio_sites(lattice: SquareLattice) -> tuple[int, int, int]:
    """Reference spin at x = Lx/4 with partners at Lx/2 (near) and 3Lx/4 (far), row 0."""
    L = lattice.Lx
    return lattice.index((L // 4, 0)), lattice.index((L // 2, 0)), lattice.index((3 * L // 4, 0))


def correlation_ratio_samples(samples: list[DisorderSample]) -> np.ndarray:
    """Per-sample squared correlations (far, near) for the ratio observable."""
    out = np.empty((len(samples), 2))
    for k, s in enumerate(samples):
        ref, near, far = ratio_sites(s.instance.lattice)
        _, ratios = _ColumnTransfer(s.instance.ising()).run([[ref, far], [ref, near]])
        out[k] = ratios ** 2
    return out


# ----------------------------------------------------------- threshold scan

SCAN_COLUMNS = ["model", "L", "p", "lambda", "observable", "value", "stderr", "n_samples", "seed"]


@dataclass(frozen=True)
class ScanRow:
    model: str
    L: int
    p: float
    lam: float
    observable: str
    value: float
    stderr: float
    n_samples: int
    seed: int

    def as_list(self) -> list:
        return [self.model, self.L, self.p, self.lam, self.observable, self.value, self.stderr,
                self.n_samples, self.seed]


@dataclass(frozen=True)
class ThresholdScan:
    rows: list[ScanRow]
    p_c: float
    ci: tuple[float, float]
    pair_crossings: list[float]


def _point_seed(seed: int, L: int, k: int) -> int:
    return int(np.random.SeedSequence([seed, L, k]).generate_state(1)[0])


def _statistic(observable: str, per_sample: np.ndarray) -> float:
    """Failure-like value: decreases with L in the ordered phase."""
    if observable == "mwpm":
        return float(per_sample.mean())
    far, near = per_sample.mean(axis=0)
    return float(1.0 - far / near) if near > 0 else 1.0


def _point_samples(args) -> np.ndarray:
    observable, L, p, lam, n_samples, seed = args
    if observable == "mwpm":
        from .decoders import DecodingLattice, ErrorModel, matching_failures, sample_edges
        dl = DecodingLattice(L, L)
        model = ErrorModel("z", p=p)
        return matching_failures(dl, model, sample_edges(dl, model, np.random.default_rng(seed), n_samples))
    rng = np.random.default_rng(seed)
    return correlation_ratio_samples(sample_lambda_disorder((L, L), p, lam, rng, n_samples))


def _bootstrap_stderr(observable: str, per_sample: np.ndarray, rng: np.random.Generator, n_boot: int = 100) -> float:
    if observable == "mwpm":
        rate = per_sample.mean()
        return math.sqrt(max(rate * (1 - rate), 1.0 / len(per_sample)) / len(per_sample))
    n = len(per_sample)
    vals = [_statistic(observable, per_sample[rng.integers(n, size=n)]) for _ in range(n_boot)]
    return float(np.std(vals, ddof=1))


def crossing_point(p_grid: np.ndarray, small: np.ndarray, large: np.ndarray) -> float:
    """First p where the smaller size stops failing more often than the larger one."""
    d = np.asarray(small) - np.asarray(large)
    for k in range(len(d) - 1):
        if d[k] > 0 >= d[k + 1]:
            return float(p_grid[k] + (p_grid[k + 1] - p_grid[k]) * d[k] / (d[k] - d[k + 1]))
    raise BracketingError("failure curves do not cross inside the grid")


def _estimate(p_grid, values: dict[int, np.ndarray]) -> tuple[float, list[float]]:
    sizes = sorted(values)
    pairs = [crossing_point(p_grid, values[a], values[b]) for a, b in zip(sizes, sizes[1:])]
    return float(np.mean(pairs)), pairs


def threshold_scan(p_grid, sizes, n_samples: int, seed: int = 0, observable: str = "mwpm", lam: float = 0.0,
                   n_boot: int = 200, workers: int = 1) -> ThresholdScan:
    """Per-size curves versus p and their crossing with a bootstrap CI.

    ``observable`` is "mwpm" (matching-decoder failure rate for edge
    dephasing on the Lieb cylinder; lam must be 0) or "corr_ratio"
    (one minus [<s s>^2 at Lx/2] / [<s s>^2 at Lx/4] for the lam model,
    exact per disorder sample by transfer matrix).  The CI resamples
    disorder samples at every grid point.
    """
    p_grid = np.asarray(sorted(p_grid), dtype=float)
    sizes = sorted(sizes)
    if len(sizes) < 2:
        raise ValueError("need at least two sizes")
    if observable not in ("mwpm", "corr_ratio"):
        raise ValueError(f"unknown observable {observable!r}")
    if observable == "mwpm" and lam != 0.0:
        raise ValueError("the matching decoder observable has no lam perturbation")
    jobs = [(observable, L, float(p), lam, n_samples, _point_seed(seed, L, k))
            for L in sizes for k, p in enumerate(p_grid)]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(workers) as pool:
            raw = list(pool.map(_point_samples, jobs))
    else:
        raw = [_point_samples(job) for job in jobs]
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    model = "toric_z" if observable == "mwpm" else ("rbim_lambda" if lam > 0 else "rbim_nishimori")
    rows = [ScanRow(model, job[1], job[2], lam, observable, _statistic(observable, data),
                    _bootstrap_stderr(observable, data, rng), n_samples, job[5]) for job, data in zip(jobs, raw)]
    per_size = {L: [d for job, d in zip(jobs, raw) if job[1] == L] for L in sizes}
    values = {L: np.array([_statistic(observable, d) for d in per_size[L]]) for L in sizes}
    p_c, pairs = _estimate(p_grid, values)
    boot = []
    for _ in range(n_boot):
        resampled = {L: np.array([_statistic(observable, d[rng.integers(len(d), size=len(d))]) for d in per_size[L]])
                     for L in sizes}
        try:
            boot.append(_estimate(p_grid, resampled)[0])
        except BracketingError:
            continue
    ci = (float(np.percentile(boot, 2.5)), float(np.percentile(boot, 97.5))) if boot else (math.nan, math.nan)
    return ThresholdScan(rows, p_c, ci, pairs)


def write_scan_csv(rows: list[ScanRow], path: str, extra: dict | None = None) -> None:
    extra = extra or {}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SCAN_COLUMNS + list(extra))
        for row in rows:
            w.writerow(row.as_list() + list(extra.values()))
