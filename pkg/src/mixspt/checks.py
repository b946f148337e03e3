"""Invariant suites run by ``mixspt selftest``.

Each suite is a function returning (passed, detail).  They are small,
deterministic versions of the property tests so a fresh install can be
checked without pytest.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import gf2
from .channels import KINDS, ChannelSpec, is_weakly_symmetric, kraus_of, purification
from .decoders import DecodingLattice, ErrorModel, decode_2d_matching, sample_edges
from .lattice import Chain1D, LiebCylinder2D
from .protocol import closed_form_1d, coherent_info_no_env, coherent_info_pure, coherent_info_with_env
from .statmech import RBIMInstance, correlation, log_partition_exact, sample_nishimori
from .strange import Ring1D, type1_decay_1d, type2_sc
from .virtual import foliated_from_sample, syndrome_history


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def _decomposable_channels() -> list[ChannelSpec]:
    return [
        ChannelSpec("z_dephase", p_a=0.2, p_b=0.3),
        ChannelSpec("y_dephase", p_a=0.15, p_b=0.25),
        ChannelSpec("swap"),
        ChannelSpec("sdc", theta=0.3, phi=0.2, q=1.0),
        ChannelSpec("sdc", theta=0.7, phi=0.4, q=0.6, mask="B"),
    ]


def check_pure_transmission() -> tuple[bool, str]:
    values = [coherent_info_pure(Chain1D(n)).value for n in range(1, 5)]
    values.append(coherent_info_pure(LiebCylinder2D(3, 3)).value)
    return all(abs(v - 1) < 1e-12 for v in values), f"values {values}"


def check_cptp() -> tuple[bool, str]:
    worst = 0.0
    for kind in KINDS:
        spec = ChannelSpec(kind, p_a=0.3, p_b=0.3, theta=0.4, phi=0.3, q=0.7)
        ops = kraus_of(spec, "A").operators
        worst = max(worst, np.abs(sum(k.conj().T @ k for k in ops) - np.eye(2)).max())
        # the purification reproduces the Kraus action on a random input
        rng = np.random.default_rng(0)
        a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        rho = a @ a.conj().T
        rho /= np.trace(rho)
        direct = sum(k @ rho @ k.conj().T for k in ops)
        via = sum(k @ rho @ k.conj().T for k in purification(spec, "A").kraus())
        worst = max(worst, np.abs(direct - via).max())
    return worst < 1e-10, f"max deviation {worst:.2e}"


def check_decomposable_env() -> tuple[bool, str]:
    chain = Chain1D(2)
    vals = [coherent_info_with_env(chain, ch).value for ch in _decomposable_channels()]
    ch_val = coherent_info_with_env(chain, ChannelSpec("controlled_hadamard", p_a=1.0, mask="A")).value
    ok = all(abs(v - 1) < 1e-9 for v in vals) and abs(ch_val) < 1e-9
    return ok, f"decomposable {np.round(vals, 12).tolist()}, controlled-H {ch_val:.3g}"


def check_data_processing() -> tuple[bool, str]:
    chain = Chain1D(2)
    gaps = []
    for ch in _decomposable_channels() + [ChannelSpec("controlled_hadamard", p_a=0.4, p_b=0.2)]:
        gaps.append(coherent_info_with_env(chain, ch, env_mode="kept").value
                    - coherent_info_no_env(chain, ch).value)
    return min(gaps) > -1e-9, f"min I_c(ERM) - I_c(RM) = {min(gaps):.3g}"


def check_closed_form_1d() -> tuple[bool, str]:
    worst = 0.0
    for n in (1, 2, 3):
        for ch in (ChannelSpec("z_dephase", p_b=0.15, mask="B"), ChannelSpec("z_dephase", p_a=0.1, p_b=0.2)):
            chain = Chain1D(n)
            worst = max(worst, abs(coherent_info_no_env(chain, ch).value - closed_form_1d(chain, ch)))
    return worst < 1e-9, f"max |dense - closed form| {worst:.2e}"


def check_gauge_invariance() -> tuple[bool, str]:
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(5):
        inst = sample_nishimori((4, 3), 0.2, rng).instance
        inst = RBIMInstance(inst.lattice, inst.bonds, 0.2, 0.3)
        tau = np.where(rng.random(inst.lattice.n_spins) < 0.5, -1, 1)
        gauged = inst.ising().gauge(tau)
        worst = max(worst, abs(log_partition_exact(gauged) - log_partition_exact(inst)))
        a = correlation(inst, 0, 7, "exact").value
        b = correlation(gauged, 0, 7, "exact").value
        worst = max(worst, abs(abs(a) - abs(b)))
    return worst < 1e-10, f"max deviation {worst:.2e}"


def check_homology_soundness() -> tuple[bool, str]:
    rng = np.random.default_rng(2)
    dl = DecodingLattice(5, 5)
    model = ErrorModel("z", p=0.08)
    loops = [k for k in gf2.nullspace(dl.H) if dl.logical_parity(k) == 0]
    mismatches = 0
    for rec in sample_edges(dl, model, rng, 30).observed:
        _, gamma = decode_2d_matching(dl, model, rec)
        shifted = rec.copy()
        shifted[dl.noisy_positions[loops[rng.integers(len(loops))] == 1]] *= -1
        mismatches += decode_2d_matching(dl, model, shifted)[1] != gamma
    return mismatches == 0, f"{mismatches} of 30 decodes changed under contractible loops"


def check_weak_symmetry() -> tuple[bool, str]:
    cases = {
        (math.pi / 2, 0.3): True,
        (0.3, math.pi / 4): True,
        (1.1, math.pi / 4): True,
        (0.3, 0.2): False,
    }
    got = {k: is_weakly_symmetric(ChannelSpec("sdc", theta=k[0], phi=k[1])) for k in cases}
    return got == cases, f"classification {got}"


def check_strange_correlators() -> tuple[bool, str]:
    ring = Ring1D(6)
    ch = ChannelSpec("sdc", theta=0.5, phi=0.3, q=0.8, mask="A")
    gap = abs(type2_sc(ch, ring, 0, 6).value - type2_sc(ch, ring, 0, 6, "closed_form").value)
    odd = type2_sc(ch, ring, 1, 7).value
    rep = type1_decay_1d(0.1, 6, np.random.default_rng(3))
    xi_exact = 1 / math.log(1 / 0.8)
    ok = gap < 1e-10 and abs(odd - 1) < 1e-10 and abs(rep.xi - xi_exact) < 0.05 * xi_exact
    return ok, f"type-II gap {gap:.1e}, odd {odd:.12g}, xi {rep.xi:.6g} vs {xi_exact:.6g}"


def check_foliation() -> tuple[bool, str]:
    dl = DecodingLattice(6, 5)
    sample = sample_edges(dl, ErrorModel("z", p=0.1), np.random.default_rng(4), 500)
    history = syndrome_history(foliated_from_sample(dl, sample)).reshape(500, -1)
    same = bool((history == dl.syndrome(sample.errors)).all())
    return same, "syndrome histories identical" if same else "syndrome histories differ"


SUITES: dict[str, Callable[[], tuple[bool, str]]] = {
    "pure_transmission": check_pure_transmission,
    "cptp": check_cptp,
    "decomposable_env": check_decomposable_env,
    "data_processing": check_data_processing,
    "closed_form_1d": check_closed_form_1d,
    "gauge_invariance": check_gauge_invariance,
    "homology_soundness": check_homology_soundness,
    "weak_symmetry": check_weak_symmetry,
    "strange_correlators": check_strange_correlators,
    "foliation": check_foliation,
}


def run_suites(names: list[str] | None = None) -> list[CheckResult]:
    out = []
    for name in names or list(SUITES):
        start = time.perf_counter()
        try:
            passed, detail = SUITES[name]()
        except Exception as exc:  # a crashing suite counts as a failed check
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        out.append(CheckResult(name, bool(passed), detail, time.perf_counter() - start))
    return out
