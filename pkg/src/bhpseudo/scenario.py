"""Scenario files: schema validation and the experiment runners behind the CLI.

A scenario is a YAML document with the sections ``layout``, ``physics``,
``initial``, ``run`` and ``analysis`` plus a ``name`` and a ``kind`` naming
the runner (``relax``, ``equilibrate``, ``transport`` or ``lyapunov``).
Unknown keys are rejected with the full dotted path of the offending field.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from . import __version__
from .dynamics import Propagator, evolve_ensemble
from .io import write_csv, write_json, write_matrix_csv
from .lattice import Region, SiteGraph, build_layout, classical_energy
from .lyapunov import ensemble_lyapunov, lyapunov_sweep
from .observables import (
    TransportMeasure,
    TransportRecord,
    be_deviation,
    be_refit,
    bloch_amplitudes,
    default_window,
    extract_gamma,
    populations_and_counts,
    spdm,
    transport_fit,
)
from .thermal import Ensemble, ThermalPoint, embed_ensembles, mode_energies, sample_quantum_ensemble, solve_beta_mu

__all__ = ["ScenarioError", "Scenario", "BUILTINS", "load_scenario", "builtin_scenario", "validate", "run_scenario"]

KINDS = ("relax", "equilibrate", "transport", "lyapunov")

_SCHEMA: dict[str, Any] = {
    "name": str,
    "kind": str,
    "layout": {"kind": str, "M": int, "L": int, "eps": (float, list), "J": float},
    "physics": {"g": float, "g_chain": (float, type(None))},
    "initial": "initial",
    "run": {"dt": float, "t_final": float, "sample_every": float, "n_traj": int, "seed": int},
    "analysis": {
        "spdm": bool,
        "histogram": {"bins": int, "components": list},
        "lyapunov": {"T": float, "tau_r": float, "dt": float, "n_traj": int},
        "refit": bool,
        "transport": {"window": (list, type(None)), "estimator": str},
        "sweeps": list,
    },
}
_INITIAL_KEYS = {"beta", "mu", "n_bar", "e_bar", "shifted", "empty"}
_SWEEP_KEYS = {"kind", "values", "beta", "e_kin", "g", "M", "n_samples", "T", "tau_r", "dt", "shifted"}

_DEFAULTS = {
    "physics": {"g": 0.4, "g_chain": 0.0},
    "run": {"dt": 0.01, "t_final": 100.0, "sample_every": 1.0, "n_traj": 2048, "seed": 0},
    "analysis": {"spdm": True, "refit": False},
}

BUILTINS = {
    "fig1_thermal": "fig1_thermal.yaml",
    "fig3_equilibrate": "fig3_equilibrate.yaml",
    "fig6_transport": "fig6_transport.yaml",
    "fig7_sweep": "fig7_sweep.yaml",
    "fig8_appendixB": "fig8_appendixB.yaml",
}


class ScenarioError(ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field
        self.message = message


@dataclass
class Scenario:
    raw: dict

    @property
    def name(self) -> str:
        return self.raw["name"]

    @property
    def kind(self) -> str:
        return self.raw["kind"]

    def section(self, key: str) -> dict:
        return self.raw.get(key, {})


def _check_type(path, value, expected):
    if expected is float and isinstance(value, bool):
        raise ScenarioError(path, f"expected a number, got {value!r}")
    if expected is float and isinstance(value, (int, float)):
        return
    if expected is int and isinstance(value, bool):
        raise ScenarioError(path, f"expected an integer, got {value!r}")
    if isinstance(expected, tuple):
        errors = []
        for e in expected:
            try:
                _check_type(path, value, e)
                return
            except ScenarioError as exc:
                errors.append(exc.message)
        raise ScenarioError(path, f"unexpected value {value!r}")
    if not isinstance(value, expected):
        raise ScenarioError(path, f"expected {expected.__name__}, got {type(value).__name__} {value!r}")


def _check_section(path: str, data, schema: dict):
    if not isinstance(data, dict):
        raise ScenarioError(path, "expected a mapping")
    for key, value in data.items():
        sub = f"{path}.{key}" if path else str(key)
        if key not in schema:
            raise ScenarioError(sub, f"unknown key; allowed keys are {sorted(schema)}")
        expected = schema[key]
        if isinstance(expected, dict):
            if isinstance(value, bool) and key in ("lyapunov", "histogram", "transport"):
                continue
            _check_section(sub, value, expected)
        elif expected == "initial":
            continue
        else:
            _check_type(sub, value, expected)


def _check_initial(graph: SiteGraph, initial) -> None:
    if not isinstance(initial, dict):
        raise ScenarioError("initial", "expected a mapping from region name to initial state")
    expected = {r.value for r in graph.regions}
    given = set(initial)
    for key in given - expected:
        raise ScenarioError(f"initial.{key}", f"region does not exist in this layout; regions are {sorted(expected)}")
    for key in expected - given:
        raise ScenarioError(f"initial.{key}", "missing initial state for this region")
    for key, spec in initial.items():
        path = f"initial.{key}"
        if spec == "empty":
            continue
        if not isinstance(spec, dict):
            raise ScenarioError(path, "expected a mapping or the string 'empty'")
        unknown = set(spec) - _INITIAL_KEYS
        if unknown:
            raise ScenarioError(f"{path}.{sorted(unknown)[0]}", f"unknown key; allowed keys are {sorted(_INITIAL_KEYS)}")
        if spec.get("empty"):
            if set(spec) - {"empty"}:
                raise ScenarioError(path, "an empty region takes no other parameters")
            continue
        keys = frozenset(k for k in spec if k in ("beta", "mu", "n_bar", "e_bar"))
        allowed = (frozenset({"beta", "mu"}), frozenset({"beta", "n_bar"}), frozenset({"n_bar", "e_bar"}))
        if keys not in allowed:
            raise ScenarioError(path, "give exactly one of (beta, mu), (beta, n_bar) or (n_bar, e_bar)")
        if key == Region.CHAIN.value:
            raise ScenarioError(path, "the chain can only start empty")


def _merge_defaults(raw: dict) -> dict:
    out = copy.deepcopy(raw)
    for section, defaults in _DEFAULTS.items():
        merged = dict(defaults)
        merged.update(out.get(section) or {})
        out[section] = merged
    return out


def validate(raw: dict) -> Scenario:
    """Check a parsed scenario document and fill in defaults."""
    if not isinstance(raw, dict):
        raise ScenarioError("", "scenario must be a mapping")
    _check_section("", raw, _SCHEMA)
    for key in ("name", "kind", "layout"):
        if key not in raw:
            raise ScenarioError(key, "required field is missing")
    if raw["kind"] not in KINDS:
        raise ScenarioError("kind", f"must be one of {list(KINDS)}, got {raw['kind']!r}")
    raw = _merge_defaults(raw)
    for key in ("dt", "t_final", "sample_every"):
        if not raw["run"][key] > 0:
            raise ScenarioError(f"run.{key}", "must be positive")
    if raw["run"]["n_traj"] < 1:
        raise ScenarioError("run.n_traj", "must be at least 1")
    sweeps = raw["analysis"].get("sweeps", [])
    for i, sw in enumerate(sweeps):
        if not isinstance(sw, dict):
            raise ScenarioError(f"analysis.sweeps[{i}]", "expected a mapping")
        unknown = set(sw) - _SWEEP_KEYS
        if unknown:
            raise ScenarioError(f"analysis.sweeps[{i}].{sorted(unknown)[0]}", f"unknown key; allowed keys are {sorted(_SWEEP_KEYS)}")
        if sw.get("kind") not in ("beta", "g", "M") or "values" not in sw:
            raise ScenarioError(f"analysis.sweeps[{i}]", "needs kind in {beta, g, M} and a list of values")
    if raw["kind"] == "lyapunov" and not sweeps:
        raise ScenarioError("analysis.sweeps", "a lyapunov scenario needs at least one sweep")
    est = raw["analysis"].get("transport", {})
    if isinstance(est, dict) and est.get("estimator", "junction") not in ("central", "junction"):
        raise ScenarioError("analysis.transport.estimator", "must be 'central' or 'junction'")
    for eps_graph in _graphs(raw):
        if raw["kind"] != "lyapunov":
            _check_initial(eps_graph, raw.get("initial", {}))
    return Scenario(raw)


def _graphs(raw: dict) -> list[SiteGraph]:
    layout = dict(raw["layout"])
    eps = layout.get("eps")
    values = eps if isinstance(eps, list) else [eps]
    graphs = []
    for e in values:
        spec = dict(layout, g=raw["physics"]["g"], g_chain=raw["physics"]["g_chain"])
        if e is not None:
            spec["eps"] = e
        try:
            graphs.append(build_layout(spec))
        except ValueError as exc:
            raise ScenarioError("layout", str(exc)) from None
    return graphs


def load_scenario(path) -> Scenario:
    """Load a scenario file, or the resolved scenario embedded in a run manifest."""
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ScenarioError("", f"could not parse {path}: {exc}") from None
    if isinstance(raw, dict) and "manifest_version" in raw:
        raw = raw["scenario"]
    return validate(raw)


def builtin_scenario(name: str) -> Scenario:
    if name not in BUILTINS:
        raise ScenarioError("", f"unknown built-in scenario {name!r}; choose from {sorted(BUILTINS)}")
    text = resources.files("bhpseudo").joinpath("scenarios", BUILTINS[name]).read_text()
    return validate(yaml.safe_load(text))


def _initial_point(spec: dict, m: int, J: float) -> ThermalPoint:
    if "mu" in spec:
        return ThermalPoint.from_beta_mu(float(spec["beta"]), float(spec["mu"]), m, J)
    if "beta" in spec:
        return ThermalPoint.from_beta_density(float(spec["beta"]), float(spec["n_bar"]), m, J)
    try:
        return solve_beta_mu(float(spec["n_bar"]), float(spec["e_bar"]), m, J)
    except ValueError as exc:
        raise ScenarioError("initial", str(exc)) from None


def _initial_ensemble(graph: SiteGraph, sc: Scenario) -> Ensemble:
    run = sc.section("run")
    n_traj, seed = int(run["n_traj"]), int(run["seed"])
    J = float(graph.layout.get("J", 1.0))
    parts = {}
    for stream, region in enumerate(sorted(graph.regions, key=lambda r: r.value)):
        spec = sc.raw["initial"][region.value]
        if spec == "empty" or (isinstance(spec, dict) and spec.get("empty")):
            parts[region] = None
            continue
        point = _initial_point(spec, len(graph.sites(region)), J)
        parts[region] = sample_quantum_ensemble(point, n_traj, seed, bool(spec.get("shifted", False)), stream)
    return embed_ensembles(graph, parts, n_traj, seed)


def _t_grid(run: dict) -> np.ndarray:
    n = int(round(run["t_final"] / run["sample_every"]))
    return np.arange(n + 1) * float(run["sample_every"])


class BlochMeasure:
    """Summing measure: Bloch populations and energies of every ring region."""

    sums = True

    def __init__(self, graph: SiteGraph):
        self.graph = graph
        self.rings = sorted((r for r in graph.regions if graph.is_ring(r)), key=lambda r: r.value)

    def __call__(self, a):
        out = {}
        p = a.real**2 + a.imag**2
        out["pop"] = p.sum(axis=0)
        out["pop2"] = (p**2).sum(axis=0)
        for r in self.rings:
            b = bloch_amplitudes(a[:, self.graph.sites(r)])
            q = b.real**2 + b.imag**2
            out[f"bloch_{r.value}"] = q.sum(axis=0)
            out[f"bloch2_{r.value}"] = (q**2).sum(axis=0)
        e, ek, ep = classical_energy(self.graph, a)
        out["energy"] = np.array([e.sum(), ek.sum(), ep.sum()])
        return out


def _mean_se(total, total2, n):
    mean = total / n
    var = np.maximum(total2 / n - mean**2, 0.0) * n / max(n - 1, 1)
    return mean, np.sqrt(var / n)


def _write_spdm(out: Path, tag: str, states, graph: SiteGraph, region: Region):
    rho = spdm(states, graph, region, basis="bloch")
    write_matrix_csv(out / f"spdm_bloch_{region.value}_{tag}.csv", rho.matrix)
    return rho


def _histograms(out: Path, tag: str, states, graph: SiteGraph, bins: int, components):
    e, ek, ep = classical_energy(graph, states)
    vals = {"total": e / graph.n_sites, "kinetic": ek / graph.n_sites, "potential": ep / graph.n_sites}
    rows = []
    for comp in components:
        v = vals[comp]
        lo, hi = float(v.min()), float(v.max())
        if hi - lo < 1e-9 * max(1.0, abs(lo)):
            # a component can be exactly the same for every trajectory (e.g. kinetic energy at t = 0)
            lo, hi = lo - 1e-6, hi + 1e-6
        counts, edges = np.histogram(v, bins=bins, range=(lo, hi))
        rows += [(comp, lo, hi, int(c)) for lo, hi, c in zip(edges[:-1], edges[1:], counts)]
    write_csv(out / f"energy_hist_{tag}.csv", ["component", "bin_lo", "bin_hi", "count"], rows)
    return {k: float(v.mean()) for k, v in vals.items()}


def _bloch_timeseries(out: Path, snaps, graph: SiteGraph, measure: BlochMeasure):
    n = snaps.n_traj
    rows = []
    for r in measure.rings:
        m = len(graph.sites(r))
        mean, se = _mean_se(snaps.data[f"bloch_{r.value}"], snaps.data[f"bloch2_{r.value}"], n)
        for i, t in enumerate(snaps.times):
            rows += [(r.value, t, k, 2 * math.pi * k / m, mean[i, k], se[i, k]) for k in range(m)]
    write_csv(out / "bloch_diag.csv", ["region", "t", "k", "kappa", "rho_kk", "se"], rows)
    mean, se = _mean_se(snaps.data["pop"], snaps.data["pop2"], n)
    rows = [(t, l, mean[i, l], se[i, l]) for i, t in enumerate(snaps.times) for l in range(graph.n_sites)]
    write_csv(out / "populations.csv", ["t", "site", "n", "se"], rows)
    en = snaps.data["energy"] / (n * graph.n_sites)
    write_csv(out / "energies.csv", ["t", "E_total", "E_K", "E_P"], [(t, *en[i]) for i, t in enumerate(snaps.times)])


def _run_relax(sc: Scenario, out: Path, workers: int) -> dict:
    graph = _graphs(sc.raw)[0]
    if Region.WHOLE not in graph.rings:
        raise ScenarioError("layout.kind", "relax scenarios need a single ring")
    run, an = sc.section("run"), sc.section("analysis")
    J = float(graph.layout.get("J", 1.0))
    m = graph.n_sites
    ens = _initial_ensemble(graph, sc)
    init = ens.meta["points"]["whole"]
    measure = BlochMeasure(graph)
    snaps = evolve_ensemble(ens, Propagator.build(graph, float(run["dt"])), _t_grid(run), measure, workers)
    _bloch_timeseries(out, snaps, graph, measure)
    derived: dict = {"initial_point": init, "warnings": snaps.warnings}
    final = snaps.final_states

    rho0 = _write_spdm(out, "t0", ens.states, graph, Region.WHOLE)
    rho1 = _write_spdm(out, "final", final, graph, Region.WHOLE)
    n_k = ThermalPoint.from_beta_mu(init["beta"], init["mu"], m, J).occupations
    off = ~np.eye(m, dtype=bool)
    derived["offdiag_max_over_se"] = float(np.max(np.abs(rho1.matrix[off]) / rho1.se[off]))
    derived["max_rel_dev_initial_be"] = float(np.max(np.abs(rho1.diagonal - n_k) / n_k))
    derived["max_abs_dev_initial_be"] = float(np.max(np.abs(rho1.diagonal - n_k)))

    hist = an.get("histogram")
    if hist:
        hist = hist if isinstance(hist, dict) else {}
        comps = hist.get("components", ["total", "kinetic", "potential"])
        bins = int(hist.get("bins", 40))
        derived["mean_energy_t0"] = _histograms(out, "t0", ens.states, graph, bins, comps)
        derived["mean_energy_final"] = _histograms(out, "final", final, graph, bins, comps)

    curve_rows = None
    if an.get("refit"):
        fit = be_refit(final, graph, Region.WHOLE, J)
        derived["refit"] = {
            "beta": fit.beta,
            "mu": fit.mu,
            "max_dev_refit": fit.max_dev,
            "max_dev_initial": be_deviation(rho1.diagonal, init["beta"], init["mu"], J),
            "n_bar": fit.n_bar,
            "e_kin": fit.e_kin,
        }
        curve_rows = fit.point.occupations
    rows = []
    for k in range(m):
        row = [k, 2 * math.pi * k / m, n_k[k], rho0.diagonal[k], rho1.diagonal[k], rho1.se[k, k]]
        row.append(curve_rows[k] if curve_rows is not None else "")
        rows.append(row)
    write_csv(out / "be_curve.csv", ["k", "kappa", "n_k_initial", "rho_kk_t0", "rho_kk_final", "se_final", "n_k_refit"], rows)

    ly = an.get("lyapunov")
    if ly:
        ly = ly if isinstance(ly, dict) else {}
        n_ly = int(ly.get("n_traj", ens.n_traj))
        prop = Propagator.build(graph, float(ly.get("dt", 0.05)))
        lrun = ensemble_lyapunov(ens.states[:n_ly], prop, float(ly.get("T", 2000.0)), float(ly.get("tau_r", 1.0)), int(run["seed"]), workers)
        e0 = classical_energy(graph, ens.states[:n_ly])[0] / m
        write_csv(out / "lyapunov.csv", ["traj", "E_total", "lambda"], [(j, e0[j], lrun.lambdas[j]) for j in range(n_ly)])
        derived["lyapunov"] = {
            "mean": lrun.mean,
            "stderr": lrun.stderr,
            "min": float(lrun.lambdas.min()),
            "max": float(lrun.lambdas.max()),
            "fraction_positive": float(np.mean(lrun.lambdas > 0.01)),
        }
    return derived


def _run_equilibrate(sc: Scenario, out: Path, workers: int) -> dict:
    graph = _graphs(sc.raw)[0]
    run = sc.section("run")
    J = float(graph.layout.get("J", 1.0))
    ens = _initial_ensemble(graph, sc)
    measure = BlochMeasure(graph)
    snaps = evolve_ensemble(ens, Propagator.build(graph, float(run["dt"])), _t_grid(run), measure, workers)
    _bloch_timeseries(out, snaps, graph, measure)
    pts = ens.meta["points"]
    derived: dict = {"initial_points": pts, "warnings": snaps.warnings}
    rings = measure.rings
    m = len(graph.sites(rings[0]))
    n_mean = np.mean([pts[r.value]["n_bar"] for r in rings])
    e_mean = np.mean([pts[r.value]["e_bar"] for r in rings])
    target = solve_beta_mu(float(n_mean), float(e_mean), m, J)
    derived["target"] = target.as_dict()
    n_k = target.occupations
    rows = []
    final = snaps.final_states
    diags = {}
    for r in rings:
        rho = _write_spdm(out, "final", final, graph, r)
        diags[r.value] = rho
        derived[f"max_rel_dev_{r.value}"] = float(np.max(np.abs(rho.diagonal - n_k) / n_k))
    a, b = (diags[r.value] for r in rings)
    derived["ring_agreement_max_over_se"] = float(
        np.max(np.abs(a.diagonal - b.diagonal) / np.sqrt(np.diag(a.se) ** 2 + np.diag(b.se) ** 2))
    )
    for k in range(m):
        rows.append([k, 2 * math.pi * k / m, n_k[k]] + [diags[r.value].diagonal[k] for r in rings])
    write_csv(out / "be_curve.csv", ["k", "kappa", "n_k_target"] + [f"rho_kk_{r.value}" for r in rings], rows)
    return derived


def _run_transport(sc: Scenario, out: Path, workers: int) -> dict:
    run, an = sc.section("run"), sc.section("analysis")
    tr = an.get("transport", {})
    tr = tr if isinstance(tr, dict) else {}
    estimator = tr.get("estimator", "junction")
    window = tr.get("window")
    derived: dict = {"runs": []}
    for graph in _graphs(sc.raw):
        eps = graph.layout["eps"]
        sub = out / f"eps_{eps:.6g}"
        ens = _initial_ensemble(graph, sc)
        snaps = evolve_ensemble(ens, Propagator.build(graph, float(run["dt"])), _t_grid(run), TransportMeasure(graph), workers)
        rec = TransportRecord.from_snapshots(snaps, graph)
        rows = [
            (t, rec.n_left[i], rec.n_right[i], rec.n_chain[i], rec.delta_n[i], rec.z[i], rec.central_current[i])
            for i, t in enumerate(rec.times)
        ]
        write_csv(sub / "transport.csv", ["t", "N_L", "N_R", "N_chain", "dN", "z", "j"], rows)
        nb = rec.currents.shape[1]
        rows = [(t, b, rec.currents[i, b], rec.currents_se[i, b]) for i, t in enumerate(rec.times) for b in range(nb)]
        write_csv(sub / "bond_currents.csv", ["t", "bond", "j", "se"], rows)
        pop, _ = populations_and_counts(snaps.final_states, graph)
        write_csv(sub / "populations_final.csv", ["site", "n"], list(enumerate(pop)))
        for r in (Region.LEFT_RING, Region.RIGHT_RING):
            _write_spdm(sub, "t0", ens.states, graph, r)
            _write_spdm(sub, "final", snaps.final_states, graph, r)
        win = tuple(window) if window else default_window(rec)
        entry = {"eps": eps, "window": list(win), "warnings": snaps.warnings}
        try:
            fit = transport_fit(rec, win)
            entry["fit"] = fit._asdict()
            g_fit = extract_gamma(rec, None, win, estimator)
            entry["gamma"] = g_fit._asdict()
            entry["gamma_central"] = extract_gamma(rec, None, win, "central")._asdict()
        except ValueError as exc:
            entry["error"] = str(exc)
        entry["initial_points"] = ens.meta["points"]
        derived["runs"].append(entry)
    gammas = {r["eps"]: r["gamma"]["Gamma"] for r in derived["runs"] if "gamma" in r}
    if len(gammas) > 1:
        eps0 = min(gammas, key=lambda e: abs(e - 0.1))
        derived["gamma_ratios"] = {f"{e:.6g}": gammas[e] / gammas[eps0] for e in sorted(gammas)}
    return derived


def _run_lyapunov(sc: Scenario, out: Path, workers: int) -> dict:
    run = sc.section("run")
    layout = sc.section("layout")
    base = sc.raw.get("initial", {}).get("whole", {})
    derived = {"sweeps": []}
    for sw in sc.section("analysis")["sweeps"]:
        rows = lyapunov_sweep(
            sw["kind"],
            sw["values"],
            beta=float(sw.get("beta", base.get("beta", 2.0))),
            g=float(sw.get("g", sc.section("physics")["g"])),
            m=int(sw.get("M", layout.get("M", 20))),
            n_bar=float(base.get("n_bar", 1.0)),
            n_samples=int(sw.get("n_samples", 100)),
            T=float(sw.get("T", 1000.0)),
            tau_r=float(sw.get("tau_r", 1.0)),
            dt=float(sw.get("dt", 0.05)),
            seed=int(run["seed"]),
            shifted=bool(sw.get("shifted", False)),
            J=float(layout.get("J", 1.0)),
            workers=workers,
            e_kin=None if sw.get("e_kin") is None else float(sw["e_kin"]),
        )
        cols = ["value", "beta", "g", "M", "E_K", "E_total", "lambda_mean", "stderr", "n_samples"]
        tag = sw["kind"] + ("_shifted" if sw.get("shifted") else "")
        write_csv(out / f"sweep_{tag}.csv", cols, [[r[c] for c in cols] for r in rows])
        derived["sweeps"].append({"kind": tag, "rows": rows})
    return derived


_RUNNERS = {"relax": _run_relax, "equilibrate": _run_equilibrate, "transport": _run_transport, "lyapunov": _run_lyapunov}


def run_scenario(scenario: Scenario | str | Path, out_dir, workers: int = 1) -> Path:
    """Run a scenario and write its CSV artifacts plus ``manifest.json`` into ``out_dir``."""
    sc = scenario if isinstance(scenario, Scenario) else load_scenario(scenario)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    derived = _RUNNERS[sc.kind](sc, out, workers)
    manifest = {
        "manifest_version": 1,
        "code_version": __version__,
        "scenario": sc.raw,
        "seed": sc.section("run")["seed"],
        "derived": derived,
    }
    write_json(out / "manifest.json", manifest)
    return out
