"""Configuration-driven experiment runners behind the service and CLI.

A run is fully determined by one nested key-value config (INI sections
``model``, ``contract``, ``solver``, ``run`` and optionally ``verify``); the
same config and seed always produce byte-identical CSV artifacts.  Every
artifact embeds the config hash and the solver version.
"""

import hashlib
import io
import json
import time
from dataclasses import dataclass, field
from configparser import ConfigParser
from importlib import resources

import numpy as np

from . import __version__
from .boundary import BoundaryPolicy
from .closedform import LinearDynamicsParams, solve_riccati
from .contracts import ClampSpec, StorageSpec, SwingSpec, storage_contract, swing_contract
from .errors import ConfigError
from .grid import Grid, Surface
from .market import CarteaVillaplanaModel, audit_assumptions
from .solver import (cfl_timestep, riccati_gradient, solve_risk_neutral_pde,
                     solve_uip_pde)
from .strategies import extract_strategies, switching_boundary
from .verification import DPConfig, dp_value, dual_lower_bound, simulate

PRESET_NAMES = ("table1", "table2", "fig1", "fig2", "fig3", "fig4", "verify-small")

_FLOAT_KEYS = {
    "model": {"a", "k", "sigma_f", "delta", "theta", "sigma", "rho", "k_c", "k_d",
              "alpha_c", "alpha_d", "sigma_c", "sigma_d", "eta", "mu_f"},
    "contract": {"strike", "u_max", "m", "big_m", "penalty_scale", "clamp",
                 "clamp_phi", "k1", "k2", "k3", "z_base", "bleed"},
    "solver": {"x_min", "x_max", "x2_min", "x2_max", "z_max"},
    "run": {"horizon", "q", "gamma", "probe_t", "probe_x", "probe_z"},
    "verify": {"x0", "z0", "tolerance_dp", "tolerance_dual_rel", "horizon_mc"},
}
_INT_KEYS = {
    "solver": {"n_x", "n_x2", "n_z", "n_t", "n_stored"},
    "run": {"seed"},
    "verify": {"dp_steps", "dp_x", "dp_z", "dp_u", "dp_pi", "mc_paths", "mc_steps"},
}
_LIST_KEYS = {
    "model": {"maturities"},
    "run": {"sweep_gamma", "sweep_rho", "slice_times"},
}
_STR_KEYS = {
    "model": {"family"},
    "contract": {"kind", "penalty_kind"},
    "solver": {"boundary_x_min", "boundary_x_max"},
    "verify": {"mode"},
}

_SECTIONS = ("model", "contract", "solver", "run", "verify")


def _coerce(section, key, raw):
    if key in _FLOAT_KEYS.get(section, ()):
        if raw.strip().lower() == "none":
            return None
        return float(raw)
    if key in _INT_KEYS.get(section, ()):
        return int(raw)
    if key in _LIST_KEYS.get(section, ()):
        return [float(tok) for tok in raw.split(",") if tok.strip()]
    if key in _STR_KEYS.get(section, ()):
        return raw.strip()
    raise ConfigError(f"unknown key '{key}' in section [{section}]")


def parse_config_text(text) -> dict:
    """Parse a config file into typed section dicts; unknown keys are fatal."""
    cp = ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except Exception as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    sections = {}
    for name in cp.sections():
        if name not in _SECTIONS:
            raise ConfigError(f"unknown section [{name}]")
        sections[name] = {k: _coerce(name, k, v) for k, v in cp.items(name)}
    for required in ("model", "contract", "solver", "run"):
        if required not in sections:
            raise ConfigError(f"missing section [{required}]")
    return sections


def load_preset(name) -> str:
    if name not in PRESET_NAMES:
        raise ConfigError(f"unknown preset '{name}'; available: {', '.join(PRESET_NAMES)}")
    fname = name.replace("-", "_") + ".cfg"
    return resources.files("uip_pricer.presets").joinpath(fname).read_text()


def config_hash(sections) -> str:
    canonical = json.dumps(sections, sort_keys=True, default=str)
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------

def _need(section, d, *keys):
    missing = [k for k in keys if k not in d]
    if missing:
        raise ConfigError(f"section [{section}] missing keys: {', '.join(missing)}")


def build_model(sections, gamma=None, rho=None):
    """Instantiate the model family; gamma/rho may override the run section."""
    m = sections["model"]
    run = sections["run"]
    horizon = run.get("horizon", 1.0)
    family = m.get("family", "linear")
    if family == "linear":
        _need("model", m, "a", "k", "sigma_f", "delta", "theta", "sigma", "rho")
        params = LinearDynamicsParams(
            a=m["a"], k=m["k"], sigma_f=m["sigma_f"], delta=m["delta"],
            theta=m["theta"], sigma=m["sigma"],
            rho=m["rho"] if rho is None else rho,
            gamma=run.get("gamma", 0.01) if gamma is None else gamma,
            horizon=horizon,
        )
        return params.model(), params
    if family == "cartea_villaplana":
        _need("model", m, "k_c", "k_d", "alpha_c", "alpha_d", "sigma_c", "sigma_d", "rho")
        sc, sd = m["sigma_c"], m["sigma_d"]
        eta0, mu0 = m.get("eta", 0.0), m.get("mu_f", 0.0)
        model = CarteaVillaplanaModel(
            k_c=m["k_c"], k_d=m["k_d"], alpha_c=m["alpha_c"], alpha_d=m["alpha_d"],
            sigma_c=lambda t: sc, sigma_d=lambda t: sd,
            rho=m["rho"] if rho is None else rho,
            eta=lambda t: eta0, mu_f=lambda t: mu0,
            maturities=tuple(m.get("maturities", [horizon])),
            horizon=horizon,
        )
        return model, None
    raise ConfigError(f"unknown model family '{family}'")


def build_contract(sections):
    c = sections["contract"]
    horizon = sections["run"].get("horizon", 1.0)
    clamp = None
    if c.get("clamp") is not None:
        clamp = ClampSpec(kappa=c["clamp"], kappa_phi=c.get("clamp_phi"))
    kind = c.get("kind", "swing")
    if kind == "swing":
        _need("contract", c, "strike", "u_max", "m", "big_m", "penalty_scale")
        spec = SwingSpec(strike=c["strike"], u_max=c["u_max"], m=c["m"],
                         big_m=c["big_m"], penalty_scale=c["penalty_scale"],
                         penalty_kind=c.get("penalty_kind", "two_sided"))
        return swing_contract(spec, horizon, clamp=clamp)
    if kind == "storage":
        _need("contract", c, "k1", "k2", "k3", "z_base", "bleed", "penalty_scale", "big_m")
        spec = StorageSpec(k1=c["k1"], k2=c["k2"], k3=c["k3"], z_base=c["z_base"],
                           bleed=c["bleed"], penalty_scale=c["penalty_scale"],
                           big_m=c["big_m"])
        z_max = sections["solver"].get("z_max", 1.0)
        return storage_contract(spec, z_max, clamp=clamp)
    raise ConfigError(f"unknown contract kind '{kind}'")


def build_grid(sections, grid_override=None):
    s = dict(sections["solver"])
    if grid_override:
        s.update(grid_override)
    run = sections["run"]
    _need("solver", s, "x_min", "x_max", "n_x", "n_z", "n_t")
    bounds = [(s["x_min"], s["x_max"])]
    n_x = [s["n_x"]]
    if "x2_min" in s or "n_x2" in s:
        _need("solver", s, "x2_min", "x2_max", "n_x2")
        bounds.append((s["x2_min"], s["x2_max"]))
        n_x.append(s["n_x2"])
    return Grid(
        horizon=run.get("horizon", 1.0),
        n_t=s["n_t"],
        x_bounds=tuple(bounds),
        n_x=tuple(n_x),
        z_max=s.get("z_max", 1.0),
        n_z=s["n_z"],
        n_stored=s.get("n_stored", 41),
    )


def build_boundary(sections):
    s = sections["solver"]
    return BoundaryPolicy(
        x_min=s.get("boundary_x_min", "second_derivative_zero"),
        x_max=s.get("boundary_x_max", "second_derivative_zero"),
    )


def _j0_grad(params, model):
    """No-claim gradient callable; zero for state-independent forward drift."""
    if params is None:          # Cartea-Villaplana: J0 is time-only
        return None, None
    sol = solve_riccati(params, steps=2000)
    if params.k == 0.0:
        return None, sol        # gradient identically zero
    return riccati_gradient(sol), sol


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------

@dataclass
class Artifact:
    name: str
    content: str


@dataclass
class RunResult:
    summary: dict
    artifacts: list = field(default_factory=list)
    config_hash: str = ""
    wall_time_s: float = 0.0
    ok: bool = True


def _headers(sections, extra=()):
    return [f"config_hash={config_hash(sections)}", f"version={__version__}", *extra]


def _slice_times(sections, grid):
    run = sections["run"]
    times = run.get("slice_times")
    if not times:
        probe_t = run.get("probe_t")
        times = [probe_t] if probe_t is not None else [grid.stored_times[0]]
    return times


def _shape_checks(surface, t, z_cut=None):
    """Monotonicity fractions on one slice: value vs z (down) and vs x (up)."""
    sl = surface.slice_at(t)
    zs = surface.grid.z_nodes
    if z_cut is not None:
        sl = sl[:, zs <= z_cut + 1e-12]
    dz = np.diff(sl, axis=-1)
    dx = np.diff(sl, axis=0)
    return {
        "fraction_nonincreasing_in_z": float(np.mean(dz <= 1e-9)),
        "fraction_nondecreasing_in_x": float(np.mean(dx >= -1e-9)),
    }


def _sweep(sections):
    run = sections["run"]
    if run.get("sweep_gamma") and run.get("sweep_rho"):
        raise ConfigError("sweep_gamma and sweep_rho are mutually exclusive")
    if run.get("sweep_gamma"):
        return [("gamma", g) for g in run["sweep_gamma"]]
    if run.get("sweep_rho"):
        return [("rho", r) for r in run["sweep_rho"]]
    return [(None, None)]


def _solve_uip_for(sections, grid, bc, param=None, value=None):
    run = sections["run"]
    gamma = run.get("gamma", 0.01)
    rho = None
    if param == "gamma":
        gamma = value
    elif param == "rho":
        rho = value
    model, params = build_model(sections, gamma=gamma, rho=rho)
    contract = build_contract(sections)
    j0, _ = _j0_grad(params, model)
    surf = solve_uip_pde(model, contract, run.get("q", 1.0), gamma, j0, grid, bc)
    return surf, model, contract, gamma


def run_price(sections, grid_override=None) -> RunResult:
    """Price surfaces plus a probe-point report, optionally over a sweep."""
    t_start = time.perf_counter()
    grid = build_grid(sections, grid_override)
    bc = build_boundary(sections)
    run = sections["run"]
    times = _slice_times(sections, grid)
    probe = None
    if run.get("probe_t") is not None:
        probe = (run["probe_t"], run.get("probe_x"), run.get("probe_z", 0.0))

    artifacts = []
    rows = []
    for param, value in _sweep(sections):
        surf, model, contract, gamma = _solve_uip_for(sections, grid, bc, param, value)
        tag = "" if param is None else f"_{param}{value:g}"
        entry = {
            "param": param, "value": value, "gamma": gamma,
            "grid": {"n_x": grid.n_x, "n_z": grid.n_z, "n_t": grid.n_t},
            "dt": grid.dt,
            "cfl_dt": cfl_timestep(grid, model, gamma, run.get("q", 1.0), contract),
        }
        if probe and probe[1] is not None:
            entry["probe"] = {"t": probe[0], "x": probe[1], "z": probe[2],
                              "value": surf.value_at(probe[0], probe[1], probe[2])}
        entry["shape"] = _shape_checks(surf, times[0])
        rows.append(entry)
        buf = io.StringIO()
        surf.to_csv(buf, header_lines=_headers(sections, [f"kind=uip{tag}"]), times=times)
        artifacts.append(Artifact(f"uip{tag}.csv", buf.getvalue()))

    summary = {"command": "price", "runs": rows, "slice_times": list(times),
               "config_hash": config_hash(sections), "version": __version__}
    artifacts.append(Artifact("summary.json", json.dumps(summary, indent=2, sort_keys=True)))
    return RunResult(summary=summary, artifacts=artifacts,
                     config_hash=config_hash(sections),
                     wall_time_s=time.perf_counter() - t_start)


def run_compare_classical(sections, grid_override=None) -> RunResult:
    """Indifference vs risk-neutral price on the same grid, plus difference."""
    t_start = time.perf_counter()
    grid = build_grid(sections, grid_override)
    bc = build_boundary(sections)
    run = sections["run"]
    times = _slice_times(sections, grid)
    q = run.get("q", 1.0)

    surf, model, contract, gamma = _solve_uip_for(sections, grid, bc)
    classical = solve_risk_neutral_pde(model, contract, q, grid, bc)
    diff = classical.values - surf.values

    t0 = times[0]
    k = int(np.argmin(np.abs(surf.t_stored - t0)))
    d_slice = diff[k]
    upper_half = d_slice[d_slice.shape[0] // 2:]
    summary = {
        "command": "compare-classical",
        "gamma": gamma,
        "slice_times": list(times),
        "difference": {
            "max": float(diff.max()), "min": float(diff.min()),
            "fraction_positive_upper_x": float(np.mean(upper_half >= -1e-9)),
        },
        "config_hash": config_hash(sections),
        "version": __version__,
    }
    artifacts = []
    for name, s in (("uip", surf), ("classical", classical)):
        buf = io.StringIO()
        s.to_csv(buf, header_lines=_headers(sections, [f"kind={name}"]), times=times)
        artifacts.append(Artifact(f"{name}.csv", buf.getvalue()))
    buf = io.StringIO()
    Surface(grid=grid, t_stored=surf.t_stored.copy(), values=diff,
            meta={"kind": "classical_minus_uip"}).to_csv(
        buf, header_lines=_headers(sections, ["kind=classical_minus_uip"]), times=times)
    artifacts.append(Artifact("difference.csv", buf.getvalue()))
    artifacts.append(Artifact("summary.json", json.dumps(summary, indent=2, sort_keys=True)))
    return RunResult(summary=summary, artifacts=artifacts,
                     config_hash=config_hash(sections),
                     wall_time_s=time.perf_counter() - t_start)


def run_strategy(sections, grid_override=None) -> RunResult:
    """Exercise policy, switching boundary and hedge fields at the slice times."""
    t_start = time.perf_counter()
    grid = build_grid(sections, grid_override)
    bc = build_boundary(sections)
    run = sections["run"]
    times = _slice_times(sections, grid)
    q = run.get("q", 1.0)

    surf, model, contract, gamma = _solve_uip_for(sections, grid, bc)
    bundle = extract_strategies(surf, contract, q, model)

    artifacts = []
    xs = grid.x_nodes(0)
    zs = grid.z_nodes
    u_max = contract.control.hi if hasattr(contract.control, "hi") else 1.0
    stats = []
    for t in times:
        k = int(np.argmin(np.abs(bundle.t_stored - t)))
        ex, hed = bundle.exercise[k], bundle.hedge[k]
        buf = io.StringIO()
        for line in _headers(sections, [f"kind=exercise t={t:g}"]):
            buf.write(f"# {line}\n")
        buf.write("x,z,u\n")
        for i, x in enumerate(xs):
            for j, z in enumerate(zs):
                buf.write(f"{x:.17g},{z:.17g},{ex[i, j]:.17g}\n")
        artifacts.append(Artifact(f"exercise_t{t:g}.csv", buf.getvalue()))

        boundary_curve = switching_boundary(ex, xs, zs, u_max)
        buf = io.StringIO()
        for line in _headers(sections, [f"kind=switching_boundary t={t:g}"]):
            buf.write(f"# {line}\n")
        buf.write("x,z_threshold\n")
        for x, zb in zip(xs, boundary_curve):
            buf.write(f"{x:.17g},{zb:.17g}\n")
        artifacts.append(Artifact(f"boundary_t{t:g}.csv", buf.getvalue()))

        buf = io.StringIO()
        for line in _headers(sections, [f"kind=hedge t={t:g}"]):
            buf.write(f"# {line}\n")
        buf.write("x,z,h\n")
        for i, x in enumerate(xs):
            for j, z in enumerate(zs):
                buf.write(f"{x:.17g},{z:.17g},{hed[i, j]:.17g}\n")
        artifacts.append(Artifact(f"hedge_t{t:g}.csv", buf.getvalue()))

        stats.append({
            "t": t,
            "exercise_values": sorted(set(np.round(np.unique(ex), 12).tolist())),
            "hedge_max": float(hed.max()), "hedge_min": float(hed.min()),
        })

    summary = {"command": "strategy", "gamma": gamma, "slices": stats,
               "config_hash": config_hash(sections), "version": __version__}
    artifacts.append(Artifact("summary.json", json.dumps(summary, indent=2, sort_keys=True)))
    return RunResult(summary=summary, artifacts=artifacts,
                     config_hash=config_hash(sections),
                     wall_time_s=time.perf_counter() - t_start)


def run_verify(sections, grid_override=None) -> RunResult:
    """Oracle comparisons (DP lattice, dual Monte Carlo) against the PDE."""
    t_start = time.perf_counter()
    if "verify" not in sections:
        raise ConfigError("verify command needs a [verify] section")
    v = sections["verify"]
    mode = v.get("mode", "both")
    if mode not in ("dp", "dual", "both"):
        raise ConfigError(f"unknown verify mode '{mode}'")
    grid = build_grid(sections, grid_override)
    bc = build_boundary(sections)
    run = sections["run"]
    q = run.get("q", 1.0)
    gamma = run.get("gamma", 0.01)
    seed = run.get("seed", 0)
    x0 = v.get("x0", float(np.mean(grid.x_bounds[0])))
    z0 = v.get("z0", 0.0)

    surf, model, contract, gamma = _solve_uip_for(sections, grid, bc)
    v_pde = surf.value_at(0.0, x0, z0)
    report = {"command": "verify", "pde_value": v_pde, "x0": x0, "z0": z0,
              "seed": seed, "checks": [],
              "config_hash": config_hash(sections), "version": __version__}
    ok = True

    if mode in ("dp", "both"):
        cfg = DPConfig(
            n_steps=v.get("dp_steps", 8), n_x=v.get("dp_x", 41),
            n_z=v.get("dp_z", 17), n_u=v.get("dp_u", 3), n_pi=v.get("dp_pi", 21),
        )
        res = dp_value(model, contract, q, gamma, cfg, x0=x0, z0=z0)
        tol = v.get("tolerance_dp", 0.05)
        rel = abs(res.uip - v_pde) / max(abs(v_pde), 1e-12)
        passed = rel <= tol
        ok = ok and passed
        report["checks"].append({
            "kind": "dp", "value": res.uip, "rel_diff": rel, "tolerance": tol,
            "passed": passed,
        })

    if mode in ("dual", "both"):
        model_params = build_model(sections, gamma=gamma)[1]
        if model_params is None:
            raise ConfigError("dual verification needs the linear-dynamics family")
        j0, _ = _j0_grad(model_params, model)
        paths = simulate(model, "q0", gamma, j0, run.get("horizon", 1.0),
                         v.get("mc_steps", 200), v.get("mc_paths", 20000),
                         seed=seed, x0=x0)
        bundle = extract_strategies(surf, contract, q, model)
        bound = dual_lower_bound(model, contract, q, gamma, bundle, paths)
        tol_rel = v.get("tolerance_dual_rel", 0.05)
        gap = v_pde - bound.value
        passed = (gap >= -3.0 * bound.stderr) and \
            (abs(gap) <= tol_rel * max(abs(v_pde), 1e-12) + 3.0 * bound.stderr)
        ok = ok and passed
        report["checks"].append({
            "kind": "dual_mc", "value": bound.value, "stderr": bound.stderr,
            "n_paths": bound.n_paths, "seed": bound.seed, "gap": gap,
            "tolerance_rel": tol_rel, "passed": passed,
        })

    report["ok"] = ok
    artifacts = [Artifact("verify_report.json",
                          json.dumps(report, indent=2, sort_keys=True))]
    return RunResult(summary=report, artifacts=artifacts,
                     config_hash=config_hash(sections),
                     wall_time_s=time.perf_counter() - t_start, ok=ok)


def run_audit(sections, grid_override=None) -> RunResult:
    """Assumption audit over the configured domain box."""
    t_start = time.perf_counter()
    grid = build_grid(sections, grid_override)
    model, _ = build_model(sections)
    generic = model.as_market_model() if hasattr(model, "as_market_model") else model
    domain = list(grid.x_bounds)
    if generic.factors.dim_factors == 2 and len(domain) == 1:
        domain = domain * 2
    report = audit_assumptions(generic, domain, samples=200,
                               seed=sections["run"].get("seed", 0))
    payload = {
        "command": "audit",
        "config_hash": config_hash(sections),
        "version": __version__,
        "n_samples": report.n_samples,
        "ellipticity_min": report.ellipticity_min,
        "unspanned_eig_min": report.unspanned_eig_min,
        "unspanned_eig_max": report.unspanned_eig_max,
        "delta_estimate": report.delta_estimate,
        "rank_range": list(report.rank_range),
        "lipschitz": report.lipschitz,
        "violations": report.violations,
        "ok": report.ok,
    }
    artifacts = [Artifact("audit.json", json.dumps(payload, indent=2, sort_keys=True))]
    return RunResult(summary=payload, artifacts=artifacts,
                     config_hash=config_hash(sections),
                     wall_time_s=time.perf_counter() - t_start, ok=report.ok)


RUNNERS = {
    "price": run_price,
    "compare-classical": run_compare_classical,
    "strategy": run_strategy,
    "verify": run_verify,
    "audit": run_audit,
}
