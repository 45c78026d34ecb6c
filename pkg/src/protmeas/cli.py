"""Experiment runner.

``protmeas run config.json [--check] [--out DIR]`` executes one scenario and
writes its CSV/JSON artifacts; ``protmeas validate config.json`` checks the
schema only. A config is a JSON object::

    {"scenario": "zeno-curves", "seed": 1,
     "parameters": {"N": [1, 3, 5], "r": [0.5, 0.7], "sigma": 0.1},
     "output_path": "out/curves"}

The environment variable ``PROTMEAS_SEED`` overrides ``seed``.

Exit codes: 0 success, 1 a check failed under ``--check``, 2 invalid usage
or config, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import subprocess
import sys
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.integrate import simpson

from . import __version__, epigauss, hamgauss, tomography, toybit, zeno
from .qcore import (
    NAMED_OBSERVABLES,
    DensityOperator,
    Observable,
    OrthonormalBasis,
    QuantumChannel,
    StateVector,
    dephasing_channel,
    matrix_from_json,
    matrix_to_json,
    named_basis,
    random_basis,
)
from .reporting import config_hash, write_csv, write_json

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3
SEED_ENV = "PROTMEAS_SEED"
TOP_LEVEL_KEYS = {"scenario", "parameters", "seed", "output_path"}

NUMERICAL_ERRORS = (
    zeno.QuadratureError,
    tomography.SpectralAmbiguityError,
    tomography.NotAProtectionChannel,
    np.linalg.LinAlgError,
    FloatingPointError,
)


class ConfigError(ValueError):
    """Invalid configuration; maps to the usage exit code."""


# --------------------------------------------------------------------------
# config


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str
    parameters: dict
    seed: int
    output_path: str | None = None

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        problems = validate(data)
        if problems:
            raise ConfigError("; ".join(problems))
        params = dict(SCENARIOS[data["scenario"]].defaults)
        params.update(data.get("parameters", {}))
        return cls(data["scenario"], params, int(data["seed"]), data.get("output_path"))

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "parameters": self.parameters,
            "seed": self.seed,
            "output_path": self.output_path,
        }


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""

    def to_json(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed), "detail": self.detail}


@dataclass
class RunReport:
    config: dict
    version: str
    seed_source: str
    wall_time: float
    started_at: str
    results: dict
    checks: list[Check]
    artifacts: list[str] = field(default_factory=list)

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def payload(self) -> dict:
        """The deterministic part: identical for identical config and seed."""
        return {
            "config": self.config,
            "results": self.results,
            "checks": [c.to_json() for c in self.checks],
            "all_passed": self.all_passed,
        }

    def to_json(self) -> dict:
        return {
            **self.payload(),
            "version": self.version,
            "seed_source": self.seed_source,
            "wall_time_s": self.wall_time,
            "started_at": self.started_at,
            "artifacts": self.artifacts,
        }


@dataclass(frozen=True)
class Scenario:
    runner: Callable
    required: frozenset
    defaults: dict
    extra_check: Callable[[dict], list[str]] | None = None


# --------------------------------------------------------------------------
# parameter parsing


def _state(spec, d: int) -> DensityOperator:
    """``"0"``, ``"1"``, ``"+"``, ``"-"``, ``"+i"``, ``"-i"``, ``"mixed"``, amplitudes or a density matrix."""
    s = 1 / np.sqrt(2)
    named = {
        "0": [1, 0],
        "1": [0, 1],
        "+": [s, s],
        "-": [s, -s],
        "+i": [s, 1j * s],
        "-i": [s, -1j * s],
    }
    if spec == "mixed":
        return DensityOperator.maximally_mixed(d)
    if isinstance(spec, str):
        if spec not in named or d != 2:
            raise ConfigError(f"unknown state {spec!r} for dimension {d}")
        return StateVector(np.array(named[spec], dtype=complex)).density()
    arr = matrix_from_json(spec)
    if arr.ndim == 1:
        return StateVector.normalized(arr).density()
    return DensityOperator(arr)


def _observable(spec) -> Observable:
    if isinstance(spec, str):
        if spec not in NAMED_OBSERVABLES:
            raise ConfigError(f"unknown observable {spec!r}")
        return Observable(NAMED_OBSERVABLES[spec], two_outcome=True)
    return Observable(matrix_from_json(spec), two_outcome=True)


def _basis(spec, d: int | None = None, rng: np.random.Generator | None = None) -> OrthonormalBasis:
    if spec == "random":
        return random_basis(d, rng)
    if isinstance(spec, str):
        if spec not in NAMED_OBSERVABLES:
            raise ConfigError(f"unknown basis {spec!r}")
        return named_basis(spec)
    return OrthonormalBasis(matrix_from_json(spec))


def _as_list(x) -> list:
    return list(x) if isinstance(x, (list, tuple)) else [x]


def _zeno_config(p: dict, N: int) -> zeno.ZenoConfig:
    return zeno.ZenoConfig(N, float(p["g"]), float(p["sigma"]), _basis(p["basis"]), _observable(p["observable"]))


def _histogram_rows(counts, edges, expected=None):
    rows = []
    for k, c in enumerate(counts):
        row = [float(edges[k]), float(edges[k + 1]), int(c)]
        if expected is not None:
            row.append(float(expected[k]))
        rows.append(row)
    return rows


class _Artifacts:
    def __init__(self, out: Path, digest: str):
        self.out = out
        self.digest = digest
        self.paths: list[str] = []

    def csv(self, name: str, header, rows) -> None:
        write_csv(self.out / name, header, rows, self.digest)
        self.paths.append(name)

    def json(self, name: str, obj) -> None:
        write_json(self.out / name, obj)
        self.paths.append(name)


# --------------------------------------------------------------------------
# scenarios


def _zeno_curves(p, rng, art):
    Ns = [int(n) for n in _as_list(p["N"])]
    rs = [float(r) for r in _as_list(p["r"])]
    sigma = float(p["sigma"])
    Q = np.linspace(float(p["q_min"]), float(p["q_max"]), int(p["points"]))
    rows, errors = [], {}
    for r in rs:
        for N in Ns:
            fe = zeno.f_exact(N, r, sigma, Q)
            fg = zeno.f_gauss(N, r, sigma, Q)
            errors.setdefault(str(r), {})[str(N)] = float(np.max(np.abs(fe - fg)))
            rows.extend([N, r, q, a, b] for q, a, b in zip(Q, fe, fg))
    art.csv("curves.csv", ["N", "r", "Q", "f_exact", "f_gauss"], rows)
    checks = []
    if len(Ns) > 1:
        lo, hi = min(Ns), max(Ns)
        for r in rs:
            e = errors[str(r)]
            checks.append(
                Check(
                    f"gauss_error_improves_r={r}",
                    e[str(hi)] < e[str(lo)],
                    f"sup error N={hi}: {e[str(hi)]:.3e}, N={lo}: {e[str(lo)]:.3e}",
                )
            )
    return {"sup_error_f_exact_vs_f_gauss": errors}, checks


def _zeno_sample(p, rng, art):
    cfg = _zeno_config(p, int(p["N"]))
    rho = _state(p["state"], cfg.dim)
    povm = zeno.povm_density(cfg)
    n = int(p["samples"])
    Q, aborted = zeno.sample_outcomes(povm, rho, n, rng)
    edges = np.linspace(float(p["hist_lo"]), float(p["hist_hi"]), int(p["bins"]) + 1)
    counts, _ = np.histogram(Q[~aborted], bins=edges)
    p_abort = zeno.abort_probability(povm, rho)
    expected = _bin_masses(povm, rho, edges)
    expected = expected / expected.sum()
    observed = counts / max(1, counts.sum())
    tv = zeno.total_variation(observed, expected)
    abort_freq = float(aborted.mean())
    se = math.sqrt(max(p_abort * (1 - p_abort), 1e-300) / n)
    art.csv(
        "samples.csv",
        ["index", "Q", "aborted"],
        ([i, float(q) if not a else "", int(a)] for i, (q, a) in enumerate(zip(Q, aborted))),
    )
    art.csv("histogram.csv", ["bin_lo", "bin_hi", "count", "expected_fraction"], _histogram_rows(counts, edges, expected))
    checks = [
        Check("histogram_tv", tv < float(p["tv_tol"]), f"TV {tv:.4g} (tolerance {p['tv_tol']})"),
        Check(
            "abort_frequency",
            abs(abort_freq - p_abort) <= 4 * se + 1e-12,
            f"observed {abort_freq:.5g}, predicted {p_abort:.5g}",
        ),
    ]
    return {
        "samples": n,
        "overlaps": cfg.overlaps.tolist(),
        "abort_probability": p_abort,
        "abort_frequency": abort_freq,
        "histogram_tv": tv,
    }, checks


def _bin_masses(povm, rho, edges, sub: int = 32) -> np.ndarray:
    """Probability of each histogram bin, by Simpson's rule on ``sub`` panels per bin."""
    fine = np.linspace(edges[0], edges[-1], (edges.size - 1) * sub + 1)
    pdf = zeno.outcome_pdf(povm, rho, fine)
    idx = np.arange(edges.size - 1)[:, None] * sub + np.arange(sub + 1)
    return simpson(pdf[idx], x=fine[idx], axis=1)


def _zeno_oracle(p, rng, art):
    spec = zeno.GridSpec(int(p["grid_points"]), float(p["grid_lo"]), float(p["grid_hi"]))
    results, rows, checks = {}, [], []
    for N in (int(n) for n in _as_list(p["N"])):
        cfg = _zeno_config(p, N)
        rho = _state(p["state"], cfg.dim)
        oracle = zeno.grid_oracle(cfg, rho, spec)
        povm = zeno.povm_density(cfg)
        analytic = zeno.outcome_pdf(povm, rho, oracle.Q) * spec.dx
        tv = zeno.total_variation(oracle.cell_probabilities, analytic)
        p_abort = zeno.abort_probability(povm, rho)
        results[str(N)] = {
            "total_variation": tv,
            "abort_oracle": oracle.abort_probability,
            "abort_analytic": p_abort,
        }
        rows.extend([N, q, a, b] for q, a, b in zip(oracle.Q, oracle.cell_probabilities, analytic))
        checks.append(Check(f"tv_N={N}", tv < 1e-3, f"TV {tv:.3e}"))
        diff = abs(oracle.abort_probability - p_abort)
        checks.append(Check(f"abort_N={N}", diff < 1e-6, f"|difference| {diff:.3e}"))
    art.csv("oracle.csv", ["N", "Q", "oracle_probability", "analytic_probability"], rows)
    return results, checks


def _ham_solve(p, rng, art):
    osc = hamgauss.OscillatorConfig(float(p["c_q"]), float(p["c_p"]), float(p["theta"]), float(p["g"]))
    t = float(p["t"]) if p["t"] is not None else 1.0 / osc.g
    m = hamgauss.heisenberg_map(t, osc.g, osc.c_theta)
    header, rows = hamgauss.coefficient_table(np.linspace(0.0, t, int(p["samples"])), osc.g, osc.c_theta)
    art.csv("coefficients.csv", header, rows)
    art.json("map.json", m.to_json())
    checks = [Check("symplectic", m.symplectic_error() < 1e-10, f"error {m.symplectic_error():.3e}")]
    results = {"t": t, "c_theta": osc.c_theta, "map": m.to_json(), "symplectic_error": m.symplectic_error()}
    if p["ode_check"]:
        step = 1e-3 * min(1.0, 1.0 / osc.g)
        diff = m.max_difference(hamgauss.ode_oracle(t, osc.g, osc.c_theta, step))
        results["ode_max_difference"] = diff
        checks.append(Check("ode_oracle", diff < 1e-8, f"max coefficient difference {diff:.3e}"))
    return results, checks


def _ham_regimes(p, rng, art):
    c_theta = float(hamgauss.OscillatorConfig(float(p["c_q"]), float(p["c_p"]), float(p["theta"]), 1.0).c_theta)
    var_Q = float(p["pointer_var_Q"])
    cases = {
        "von-neumann": (hamgauss.VonNeumann(), float(p["g_von_neumann"])),
        "semiprotected": (hamgauss.Semiprotected(int(p["n_semiprotected"])), None),
        "protected": (hamgauss.Protected(), float(p["g_protected"])),
    }
    results, checks = {}, []
    for name, (regime, g) in cases.items():
        if g is None:
            g = regime.g
            prep = hamgauss.PointerPrep.sheared(g, float(p["semi_var_u"]), float(p["semi_var_P"]))
        else:
            prep = hamgauss.PointerPrep.minimum_uncertainty(var_Q)
        osc = hamgauss.OscillatorConfig(float(p["c_q"]), float(p["c_p"]), float(p["theta"]), g)
        rep = hamgauss.limit_report(regime, g, c_theta)
        mean, var = hamgauss.pointer_reading_distribution(osc, regime, prep)
        results[name] = {
            "g": g,
            "g_effective": rep.g_effective,
            "t": rep.t,
            "reading_mean": mean,
            "reading_var": var,
            "pointer_residual": rep.pointer_residual,
            "system_residual": rep.system_residual,
            "map": rep.actual.to_json(),
        }
        checks.append(Check(f"{name}_mean", abs(mean - c_theta) < 1e-9, f"mean {mean!r}, c_theta {c_theta!r}"))
        if name == "semiprotected":
            m = rep.actual
            exact = np.array_equal(m.linear[:2, :2], np.eye(2)) and not np.any(m.linear[:2, 2:]) and not np.any(m.shift[:2])
            checks.append(Check("semiprotected_system_identity", bool(exact), "system block and shift bitwise exact"))
            var_u = float(p["semi_var_u"])
            checks.append(
                Check("semiprotected_variance", abs(var - var_u) <= 1e-9 * var_u, f"{var!r} vs {var_u!r}")
            )
        else:
            bound = 10 * (1 / g if name == "von-neumann" else g)
            checks.append(
                Check(f"{name}_limit", rep.pointer_residual < bound, f"pointer residual {rep.pointer_residual:.3e}")
            )
    art.json("regimes.json", results)
    return results, checks


def _tomo_channel(p, rng, art):
    d = int(p["d"])
    basis = _basis(p["basis"], d, rng)
    channel = dephasing_channel(basis)
    shots = math.inf if p["shots"] in ("inf", None) else int(p["shots"])
    preps = tomography.standard_preparations(d)
    meas = tomography.standard_measurements(d, rng)
    table = tomography.simulate_statistics(channel, preps, meas, shots, rng)
    est = tomography.ChannelTomography(
        preps, meas, n_fixed=None if math.isinf(shots) else d, random_state=int(rng.integers(2**63))
    ).fit(table)
    err = float(np.linalg.norm(est.estimate_.superoperator - channel.superoperator))
    fid = tomography.basis_fidelities(basis, est.basis_)
    found = est.predict([StateVector(basis[j].amplitudes) for j in range(d)])
    # the recovered basis is unordered; map it back to the true labels
    overlap = np.abs(basis.vectors.conj().T @ est.basis_.vectors) ** 2
    labels = [int(np.argmax(overlap[:, k])) for k in found]
    art.json("table.json", json.loads(table.to_json()))
    art.json("superoperator.json", matrix_to_json(est.estimate_.superoperator))
    results = {
        "d": d,
        "shots": "inf" if math.isinf(shots) else shots,
        "frobenius_error": err,
        "min_choi_eigenvalue": est.estimate_.min_choi_eigenvalue,
        "cp_violation": bool(est.cp_violation_),
        "basis_fidelities": fid.tolist(),
        "identified": labels,
    }
    checks = [Check("identify_state", labels == list(range(d)), f"identified {labels}")]
    if math.isinf(shots):
        checks.append(Check("frobenius_error", err < 1e-10, f"{err:.3e}"))
        checks.append(Check("basis_fidelity", fid.min() > 1 - 1e-8, f"min {fid.min():.16f}"))
    return results, checks


def _tomo_hamiltonian(p, rng, art):
    energies = np.array([float(e) for e in p["energies"]])
    d = energies.size
    basis = _basis(p["basis"], d, rng)
    h_true = (basis.vectors * energies) @ basis.vectors.conj().T
    samples = [(float(t), (basis.vectors * np.exp(-1j * energies * t)) @ basis.vectors.conj().T) for t in _as_list(p["times"])]
    est = tomography.HamiltonianTomography(float(p["energy_bound"]), random_state=int(rng.integers(2**63))).fit(samples)
    err = float(np.linalg.norm(est.hamiltonian_ - h_true))
    gs_true = basis.vectors[:, int(np.argmin(energies))]
    gs_fid = float(abs(np.vdot(gs_true, est.ground_state_.amplitudes)) ** 2)
    art.json("hamiltonian.json", {"H": matrix_to_json(est.hamiltonian_), "energies": np.sort(est.estimate_.energies).tolist()})
    results = {
        "energies": np.sort(est.estimate_.energies).tolist(),
        "frobenius_error": err,
        "ground_state_fidelity": gs_fid,
    }
    checks = [
        Check("hamiltonian_error", err < 1e-8, f"{err:.3e}"),
        Check("ground_state", gs_fid > 1 - 1e-8, f"fidelity {gs_fid:.16f}"),
    ]
    return results, checks


def _toy_run(p, rng, art):
    cfg = toybit.ToyRunConfig(
        int(p["N"]), float(p["g"]), float(p["r_rate"]), p["protect"], p["measure"], bool(p["backaction"])
    )
    if p["prepare"] not in toybit.PREPARATIONS:
        raise ConfigError(f"unknown preparation {p['prepare']!r}")
    runs = int(p["runs"])
    ens = toybit.protected_ensemble(cfg, toybit.PREPARATIONS[p["prepare"]], runs, rng)
    art.json(
        "runs.json",
        [{"run": i, "success": bool(s), "final_Q": float(q)} for i, (s, q) in enumerate(zip(ens.success, ens.final_Q))],
    )
    counts, edges = np.histogram(ens.final_Q, bins=int(p["bins"]))
    art.csv("histogram.csv", ["bin_lo", "bin_hi", "count"], _histogram_rows(counts, edges))
    freq = ens.success_frequency
    results = {
        "runs": runs,
        "success_frequency": freq,
        "mean_final_Q": float(ens.final_Q.mean()),
        "var_final_Q": float(ens.final_Q.var(ddof=1)) if runs > 1 else 0.0,
    }
    checks = []
    # back-action flips the coordinate the pointer does not read; protection only sees it when that is the protected one
    if cfg.flip_probability == 0 or cfg.protect == cfg.measure:
        checks.append(Check("always_succeeds", bool(ens.success.all()), f"success frequency {freq}"))
    else:
        p_succ = toybit.success_probability(cfg.N, cfg.g, cfg.r_rate)
        se = math.sqrt(p_succ * (1 - p_succ) / runs)
        results["success_probability"] = p_succ
        checks.append(Check("success_probability", abs(freq - p_succ) <= 3 * se, f"{freq:.4g} vs {p_succ:.4g}"))
    if cfg.protect != cfg.measure and runs >= 100:
        var_pred = 1.0 / cfg.N
        se_mean = math.sqrt(var_pred / runs)
        checks.append(Check("mean_zero", abs(results["mean_final_Q"]) <= 3 * se_mean, f"{results['mean_final_Q']:.4g}"))
        rel = abs(results["var_final_Q"] / var_pred - 1)
        checks.append(Check("variance_1_over_N", rel < 0.1, f"var * N = {results['var_final_Q'] * cfg.N:.4g}"))
    return results, checks


def _gauss_run(p, rng, art):
    osc = hamgauss.OscillatorConfig(float(p["c_q"]), float(p["c_p"]), float(p["theta"]), float(p["g"]))
    pt = p["point"] if p["point"] is not None else [osc.c_q, osc.c_p, 0.0, 0.0]
    point = epigauss.PhasePoint(*(float(x) for x in pt))
    traj = epigauss.run_trajectory(osc, point, np.linspace(0.0, 1.0 / osc.g, int(p["samples"])))
    art.csv("trajectory.csv", list(epigauss.TRAJECTORY_COLUMNS), traj.rows())
    final = traj.lab[-1]
    results = {"final_lab": final.tolist(), "final_a_theta": float(traj.a_theta[-1])}
    checks = []
    if p["ode_check"]:
        step = 1e-3 * min(1.0, 1.0 / osc.g)
        oracle = hamgauss.ode_oracle(1.0 / osc.g, osc.g, osc.c_theta, step)
        other = epigauss.apply_map(point.as_array(), oracle, osc)
        diff = float(np.max(np.abs(other - final)))
        results["ode_max_difference"] = diff
        checks.append(Check("ode_oracle", diff < 1e-8, f"{diff:.3e}"))
    return results, checks


def _regime_from(p) -> tuple[hamgauss.RegimeCase, float]:
    name = p["regime"]
    if name == "semiprotected":
        r = hamgauss.Semiprotected(int(p["n"]))
        return r, r.g
    if name == "protected":
        return hamgauss.Protected(), float(p["g"])
    return hamgauss.VonNeumann(), float(p["g"])


def _gauss_ensemble(p, rng, art):
    regime, g = _regime_from(p)
    if isinstance(regime, hamgauss.Semiprotected):
        prep = hamgauss.PointerPrep.sheared(g, float(p["semi_var_u"]), float(p["semi_var_P"]), p["pointer_mean"])
    else:
        prep = hamgauss.PointerPrep.minimum_uncertainty(float(p["pointer_var_Q"]), p["pointer_mean"])
    cfg = epigauss.EnsembleConfig(float(p["c_q"]), float(p["c_p"]), float(p["theta"]), g, prep, int(p["runs"]))
    stats = epigauss.ensemble_statistics(cfg, regime, rng, bins=int(p["bins"]))
    counts, edges = stats.histogram
    art.csv("histogram.csv", ["bin_lo", "bin_hi", "count"], _histogram_rows(counts, edges))
    results = stats.to_json()
    del results["histogram"]
    checks = [
        Check(
            "moments_agree",
            stats.agrees(3.0),
            f"mean {stats.mean_final_Q:.5g} vs {stats.predicted_mean:.5g}, "
            f"var {stats.var_final_Q:.5g} vs {stats.predicted_var:.5g}",
        )
    ]
    if p["disturbance"]:
        dc = epigauss.ontic_disturbance_check(cfg, 1.0 / g, rng)
        results["disturbance"] = {
            "t": 1.0 / g,
            "mean_displacement": dc.mean_displacement,
            "ks_pvalue_q": dc.ks_pvalue_q,
            "ks_pvalue_p": dc.ks_pvalue_p,
        }
        checks.append(Check("ontic_disturbance", dc.passed(0.01), f"KS p-values {dc.ks_pvalue_q:.3g}, {dc.ks_pvalue_p:.3g}"))
    art.json("summary.json", results)
    return results, checks


def _gauss_ensemble_extra(p: dict) -> list[str]:
    if p.get("regime") not in ("protected", "semiprotected", "von-neumann"):
        return [f"regime must be protected, semiprotected or von-neumann, got {p.get('regime')!r}"]
    if p["regime"] != "semiprotected" and p.get("g") is None:
        return [f"missing key 'g' (required for regime {p['regime']})"]
    return []


_ZENO_DEFAULTS = {"g": 1.0, "observable": "X", "basis": "Z", "state": "0"}
_OSC = frozenset({"c_q", "c_p", "theta"})

SCENARIOS: dict[str, Scenario] = {
    "zeno-curves": Scenario(_zeno_curves, frozenset({"N", "r", "sigma"}), {"q_min": -2.0, "q_max": 2.0, "points": 801}),
    "zeno-sample": Scenario(
        _zeno_sample,
        frozenset({"N", "sigma", "samples"}),
        {**_ZENO_DEFAULTS, "bins": 200, "hist_lo": -4.0, "hist_hi": 4.0, "tv_tol": 0.01},
    ),
    "zeno-oracle": Scenario(
        _zeno_oracle,
        frozenset({"N", "sigma"}),
        {**_ZENO_DEFAULTS, "grid_points": 4096, "grid_lo": -4.0, "grid_hi": 4.0},
    ),
    "ham-solve": Scenario(_ham_solve, _OSC | {"g"}, {"t": None, "samples": 201, "ode_check": True}),
    "ham-regimes": Scenario(
        _ham_regimes,
        _OSC,
        {
            "g_von_neumann": 1e6,
            "n_semiprotected": 1,
            "g_protected": 1e-4,
            "pointer_var_Q": 0.01,
            "semi_var_u": 1e-4,
            "semi_var_P": 2500.0,
        },
    ),
    "tomo-channel": Scenario(_tomo_channel, frozenset({"d", "shots"}), {"basis": "random"}),
    "tomo-hamiltonian": Scenario(
        _tomo_hamiltonian, frozenset({"energies", "times", "energy_bound"}), {"basis": "random"}
    ),
    "toy-run": Scenario(
        _toy_run,
        frozenset({"N", "runs"}),
        {"g": 1.0, "r_rate": 0.0, "protect": "X", "measure": "X", "prepare": "x+", "backaction": False, "bins": 50},
    ),
    "gauss-run": Scenario(_gauss_run, _OSC | {"g"}, {"point": None, "samples": 401, "ode_check": True}),
    "gauss-ensemble": Scenario(
        _gauss_ensemble,
        _OSC | {"regime", "runs"},
        {
            "g": None,
            "n": 1,
            "pointer_mean": [0.0, 0.0],
            "pointer_var_Q": 0.01,
            "semi_var_u": 1e-4,
            "semi_var_P": 2500.0,
            "bins": 50,
            "disturbance": False,
        },
        _gauss_ensemble_extra,
    ),
}


# --------------------------------------------------------------------------
# validation and execution


def validate(config) -> list[str]:
    """Schema check without execution; an empty list means the config is valid."""
    if not isinstance(config, dict):
        return ["config must be a JSON object"]
    out = []
    missing_top = sorted({"scenario", "seed", "parameters"} - config.keys())
    out += [f"missing key {k!r}" for k in missing_top]
    out += [f"unknown key {k!r}" for k in sorted(config.keys() - TOP_LEVEL_KEYS)]
    if "seed" in config:
        seed = config["seed"]
        if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
            out.append(f"seed must be an unsigned 64-bit integer, got {seed!r}")
    if "output_path" in config and not isinstance(config["output_path"], (str, type(None))):
        out.append("output_path must be a string")
    scenario = config.get("scenario")
    if scenario is None:
        return out
    if scenario not in SCENARIOS:
        out.append(f"unknown scenario {scenario!r}; expected one of {sorted(SCENARIOS)}")
        return out
    params = config.get("parameters", {})
    if not isinstance(params, dict):
        return out + ["parameters must be a JSON object"]
    sc = SCENARIOS[scenario]
    out += [f"missing key {k!r} for scenario {scenario}" for k in sorted(sc.required - params.keys())]
    allowed = sc.required | sc.defaults.keys()
    out += [f"unknown key {k!r} for scenario {scenario}" for k in sorted(params.keys() - allowed)]
    if sc.extra_check is not None and not out:
        out += sc.extra_check({**sc.defaults, **params})
    return out


def _version_stamp() -> str:
    try:
        rev = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"],
            cwd=Path(__file__).parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if rev.returncode == 0 and rev.stdout.strip():
            return f"{__version__}+g{rev.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def resolve_seed(config: dict) -> tuple[dict, str]:
    """Apply the ``PROTMEAS_SEED`` override; returns the effective config and the seed's source."""
    env = os.environ.get(SEED_ENV)
    if env is None or env == "":
        return config, "config"
    try:
        seed = int(env)
    except ValueError as exc:
        raise ConfigError(f"{SEED_ENV}={env!r} is not an integer") from exc
    if not 0 <= seed < 2**64:
        raise ConfigError(f"{SEED_ENV} must be an unsigned 64-bit integer")
    return {**config, "seed": seed}, f"env:{SEED_ENV}"


def run(config: dict, out_dir: str | Path | None = None, seed_source: str = "config") -> RunReport:
    """Execute one scenario and write its artifacts plus ``results.json`` and ``report.json``.

    Raises :class:`ConfigError` for invalid configs; numerical failures
    propagate as their own exception types.
    """
    cfg = ExperimentConfig.from_dict(config)
    echo = cfg.to_dict()
    digest = config_hash({k: v for k, v in echo.items() if k != "output_path"})
    out = Path(out_dir or cfg.output_path or Path("protmeas-out") / cfg.scenario)
    out.mkdir(parents=True, exist_ok=True)
    art = _Artifacts(out, digest)
    rng = np.random.default_rng(cfg.seed)

    started = datetime.now(timezone.utc).isoformat()
    t0 = time.perf_counter()
    try:
        results, checks = SCENARIOS[cfg.scenario].runner(cfg.parameters, rng, art)
    except (TypeError, KeyError) as exc:
        raise ConfigError(f"bad parameter value: {exc}") from exc
    except ValueError as exc:
        if isinstance(exc, NUMERICAL_ERRORS):
            raise
        raise ConfigError(str(exc)) from exc
    wall = time.perf_counter() - t0

    report = RunReport(
        config={**echo, "config_sha256": digest},
        version=_version_stamp(),
        seed_source=seed_source,
        wall_time=wall,
        started_at=started,
        results=results,
        checks=checks,
        artifacts=list(art.paths),
    )
    write_json(out / "results.json", report.payload())
    write_json(out / "report.json", report.to_json())
    return report


def _load(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="protmeas", description="Protective measurement simulations.")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="execute a scenario config")
    p_run.add_argument("config")
    p_run.add_argument("--check", action="store_true", help="exit 1 if any acceptance check fails")
    p_run.add_argument("--out", default=None, help="output directory (overrides output_path)")
    p_val = sub.add_parser("validate", help="check a config without running it")
    p_val.add_argument("config")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _load(args.config)
        if args.command == "validate":
            problems = validate(config)
            for msg in problems:
                print(f"error: {msg}", file=sys.stderr)
            if not problems:
                print("ok")
            return EXIT_USAGE if problems else EXIT_OK
        config, source = resolve_seed(config)
        report = run(config, args.out, source)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL

    print(f"scenario {report.config['scenario']} seed {report.config['seed']} ({source})")
    for c in report.checks:
        print(f"  {'PASS' if c.passed else 'FAIL'} {c.name}: {c.detail}")
    print(f"wall time {report.wall_time:.2f} s")
    if args.check and not report.all_passed:
        return EXIT_CHECK_FAILED
    return EXIT_OK
