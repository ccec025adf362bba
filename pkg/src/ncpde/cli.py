"""Command-line driver.

Usage:  ncpde --config cfg.json [--out DIR] [--seed N] [--tol X] [--quiet]

The JSON config carries the command, the backend descriptor and the
per-command problem payload; it is validated against a strict schema
(unknown fields are rejected) before any computation.  All randomized
batteries are drawn from numpy's PCG64 generator seeded from the config
(command-line --seed overrides), so identical config + seed reproduces
bit-identical JSON output.  Exit codes: 0 success with all checks passed,
2 completed with check failures (reports still written), 1 errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import backends as bk
from . import serialize as sz
from .calculus import (
    divergence,
    gradient,
    gradient_matrix,
    hilbert_inner,
    hilbert_norm,
    involution_j,
    module_act,
    random_tangent,
    riemannian_metric,
    right_act,
    simple_tensor_norm_sq,
    tangent_components,
)
from .dirichlet import (
    bakry_emery_check,
    build_space,
    dirichlet_form,
    markov_check,
    poincare_constant,
)
from .elliptic import (
    NoSolution,
    QuasilinearOptions,
    curved_map,
    identity_map,
    minimize_dirichlet_energy,
    negated_map,
    solve_poisson,
    solve_quasilinear,
)
from .evolution import EvolutionProblem, solve_evolution
from .reports import Report, check_ge, check_le
from .serialize import tangent_from_json

COMMANDS = (
    "describe",
    "markov-check",
    "gap",
    "calculus-check",
    "solve-poisson",
    "solve-quasilinear",
    "evolve",
    "be-check",
)

_PAIRS = {"type": "array", "items": {
    "type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}}

_BACKEND_SCHEMA = {
    "oneOf": [
        {
            "type": "object",
            "properties": {
                "kind": {"const": "matrix"},
                "dim": {"type": "integer", "minimum": 1},
                "generators": {"type": "array", "items": _PAIRS, "minItems": 1},
            },
            "required": ["kind", "dim", "generators"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "kind": {"const": "nc_torus"},
                "level": {"type": "integer", "minimum": 1},
                "theta": {"type": "number"},
                "rational": {
                    "oneOf": [
                        {"type": "null"},
                        {"type": "array", "items": {"type": "integer"},
                         "minItems": 2, "maxItems": 2},
                    ]
                },
            },
            "required": ["kind", "level", "theta"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "kind": {"const": "cyclic"},
                "order": {"type": "integer", "minimum": 2},
                "lengths": {"type": "array", "items": {"type": "number"}},
            },
            "required": ["kind", "order", "lengths"],
            "additionalProperties": False,
        },
    ]
}

_FLOW_SCHEMA = {
    "oneOf": [
        {"type": "null"},
        {
            "type": "object",
            "properties": {
                "constant_gradient_of": _PAIRS,
                "scale": {"type": "number"},
            },
            "required": ["constant_gradient_of"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "times": {"type": "array", "items": {"type": "number"}},
                "vectors": {"type": "array", "items": {"type": "array", "items": _PAIRS}},
            },
            "required": ["times", "vectors"],
            "additionalProperties": False,
        },
    ]
}

_PROBLEM_SCHEMAS = {
    "describe": {"type": "object", "properties": {}, "additionalProperties": False},
    "gap": {
        "type": "object",
        "properties": {"battery": {"type": "integer", "minimum": 0}},
        "additionalProperties": False,
    },
    "markov-check": {
        "type": "object",
        "properties": {
            "t_samples": {"type": "array", "items": {"type": "number", "minimum": 0}},
            "battery": {"type": "integer", "minimum": 1},
        },
        "required": ["t_samples"],
        "additionalProperties": False,
    },
    "calculus-check": {
        "type": "object",
        "properties": {
            "battery": {"type": "integer", "minimum": 1},
            "radius": {"oneOf": [{"type": "null"}, {"type": "integer", "minimum": 0}]},
        },
        "additionalProperties": False,
    },
    "be-check": {
        "type": "object",
        "properties": {
            "K": {"type": "number"},
            "t_samples": {"type": "array", "items": {"type": "number", "minimum": 0}},
            "battery": {"type": "integer", "minimum": 1},
            "radius": {"oneOf": [{"type": "null"}, {"type": "integer", "minimum": 0}]},
        },
        "required": ["K", "t_samples"],
        "additionalProperties": False,
    },
    "solve-poisson": {
        "type": "object",
        "properties": {
            "f": _PAIRS,
            "method": {"enum": ["both", "spectral", "variational"]},
            "project_kernel": {"type": "boolean"},
        },
        "required": ["f"],
        "additionalProperties": False,
    },
    "solve-quasilinear": {
        "type": "object",
        "properties": {
            "f": _PAIRS,
            "map": {
                "type": "object",
                "properties": {
                    "name": {"enum": ["identity", "curved", "negated"]},
                    "beta": {"type": "number"},
                },
                "required": ["name"],
                "additionalProperties": False,
            },
            "restarts": {"type": "integer", "minimum": 0},
            "project_kernel": {"type": "boolean"},
        },
        "required": ["f", "map"],
        "additionalProperties": False,
    },
    "evolve": {
        "type": "object",
        "properties": {
            "form": {"enum": ["heat", "continuity"]},
            "u0": _PAIRS,
            "horizon": {"type": "number", "exclusiveMinimum": 0},
            "dt": {"type": "number", "exclusiveMinimum": 0},
            "scheme": {"enum": ["implicit-euler", "crank-nicolson"]},
            "epsilon": {"type": "number", "minimum": 0},
            "flow": _FLOW_SCHEMA,
            "source": {
                "oneOf": [
                    {"type": "null"},
                    {
                        "type": "object",
                        "properties": {
                            "times": {"type": "array", "items": {"type": "number"}},
                            "elements": {"type": "array", "items": _PAIRS},
                        },
                        "required": ["times", "elements"],
                        "additionalProperties": False,
                    },
                ]
            },
            "probes": {"type": "integer", "minimum": 0},
        },
        "required": ["form", "u0", "horizon", "dt"],
        "additionalProperties": False,
    },
}

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "command": {"enum": list(COMMANDS)},
        "backend": _BACKEND_SCHEMA,
        "problem": {"type": "object"},
        "tolerances": {
            "type": "object",
            "properties": {
                "check": {"type": "number", "exclusiveMinimum": 0},
                "gap": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "seed": {"type": "integer", "minimum": 0},
        "out": {"type": "string"},
    },
    "required": ["command", "backend"],
    "additionalProperties": False,
}


class ConfigError(Exception):
    pass


def validate_config(config: dict) -> None:
    try:
        jsonschema.validate(config, CONFIG_SCHEMA)
        schema = _PROBLEM_SCHEMAS[config["command"]]
        jsonschema.validate(config.get("problem", {}), schema)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid config: {exc.message}") from exc


def _dump_json(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _write(out_dir: Path | None, name: str, text: str) -> None:
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / name).write_text(text, encoding="utf-8")


def _write_trajectory_csv(out_dir: Path | None, times, states) -> None:
    if out_dir is None:
        return
    out_dir.mkdir(parents=True, exist_ok=True)
    D = states.shape[1] // 2
    with open(out_dir / "trajectory.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"{p}_{i:03d}" for i in range(D) for p in ("re", "im")])
        for t, x in zip(times, states):
            row = [repr(float(t))]
            for i in range(D):
                row += [repr(float(x[i])), repr(float(x[D + i]))]
            writer.writerow(row)


def _solution_csv(sol) -> str:
    lines = ["index,re,im"]
    flat = bk.to_l2(sol)
    for i, z in enumerate(flat):
        lines.append(f"{i},{z.real!r},{z.imag!r}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Command implementations
# ---------------------------------------------------------------------------


def _cmd_describe(space, problem, rng, tol):
    spectrum = [float(np.round(v, 10)) for v in space.evals]
    result = {
        "backend": sz.descriptor_to_json(space.backend),
        "l2_dim": space.dim,
        "real_dim": 2 * space.dim,
        "kernel_dim": space.kernel_dim,
        "spectrum": spectrum,
        "tangent_components": tangent_components(space),
    }
    return result, Report(kind="describe", extra=result)


def _cmd_gap(space, problem, rng, tol):
    res = poincare_constant(space, rng, battery=problem.get("battery", 32))
    result = {"C_P": res.c_p, "gap": res.gap, "kernel_dim": res.kernel_dim}
    report = Report(kind="gap", extra=res.to_dict())
    if res.battery_margin is not None:
        report.checks.append(check_ge("poincare_battery_margin", res.battery_margin, -tol))
    return result, report


def _cmd_markov(space, problem, rng, tol):
    report = markov_check(space, problem["t_samples"], rng,
                          battery=problem.get("battery", 16), tol=tol)
    return report.to_dict(), report


def _default_radius(desc) -> int | None:
    # triple products a * b * b^* must stay inside the torus window
    if isinstance(desc, bk.NCTorus):
        return desc.level // 3
    return None


def _cmd_calculus(space, problem, rng, tol):
    battery = problem.get("battery", 50)
    radius = problem.get("radius", _default_radius(space.backend))
    report = Report(kind="calculus-check",
                    extra={"battery": battery, "radius": radius})
    desc = space.backend
    if isinstance(desc, bk.NCTorus) and radius == 0:
        report.flags.append(
            "degenerate battery: triple products need level >= 3 for nonconstant supports")

    gm = gradient_matrix(space)
    fact = np.linalg.norm(gm.conj().T @ gm - space.generator) / max(
        np.linalg.norm(space.generator), 1e-300)
    report.checks.append(check_le("generator_factorization", fact, 1e-10))

    leib = adj = energy = tensor = pairing = jgrad = 0.0
    witness_min = np.inf
    for _ in range(battery):
        a = bk.random_element(desc, rng, radius=radius)
        b = bk.random_element(desc, rng, radius=radius)
        h = random_tangent(space, rng, radius=radius)
        scale_ = max(bk.norm_l2(a) * bk.norm_l2(b), 1.0)
        lhs = gradient(space, bk.mul(a, b))
        rhs = right_act(gradient(space, a), b) + module_act(a, gradient(space, b), bk.unit(desc))
        leib = max(leib, max(bk.norm_l2(x - y) for x, y in zip(lhs.parts, rhs.parts)) / scale_)
        ip1 = hilbert_inner(gradient(space, a), h)
        ip2 = bk.inner_l2(a, divergence(space, h))
        adj = max(adj, abs(ip1 - ip2) / max(abs(ip1), 1.0))
        e1 = hilbert_inner(gradient(space, a), gradient(space, b))
        e2 = dirichlet_form(space, a, b)
        energy = max(energy, abs(e1 - e2) / max(abs(e2), 1.0))
        tn = simple_tensor_norm_sq(space, a, b)
        tb = hilbert_norm(right_act(gradient(space, a), b)) ** 2
        tensor = max(tensor, abs(tn - tb) / (1.0 + tb))
        rho = riemannian_metric(space, h, h)
        pairing = max(pairing, abs(rho.trace().real - hilbert_norm(h) ** 2)
                      / (1.0 + hilbert_norm(h) ** 2))
        if rho.witness is not None:
            witness_min = min(witness_min, rho.witness / max(bk.norm_l2(rho.element), 1.0))
        dj = involution_j(gradient(space, a)) - gradient(space, bk.adjoint(a))
        jgrad = max(jgrad, max(bk.norm_l2(p) for p in dj.parts) / max(bk.norm_l2(a), 1.0))
    report.checks.append(check_le("leibniz", leib, 1e-10))
    report.checks.append(check_le("gradient_divergence_adjointness", adj, 1e-10))
    report.checks.append(check_le("energy_identity", energy, 1e-10))
    report.checks.append(check_le("tensor_norm_agreement", tensor, 1e-9))
    report.checks.append(check_le("metric_trace_pairing", pairing, 1e-10))
    if np.isfinite(witness_min):
        report.checks.append(check_ge("metric_psd_witness", witness_min, -tol))
    report.checks.append(check_le("involution_vs_gradient", jgrad, 1e-10))
    return report.to_dict(), report


def _cmd_be(space, problem, rng, tol):
    radius = problem.get("radius", _default_radius(space.backend))
    battery = [
        bk.random_element(space.backend, rng, radius=radius, self_adjoint=True)
        for _ in range(problem.get("battery", 4))
    ]
    report = bakry_emery_check(space, problem["K"], problem["t_samples"], battery)
    return report.to_dict(), report


def _cmd_poisson(space, problem, rng, tol, out_dir):
    f = sz.element_data_from_json(space.backend, problem["f"])
    method = problem.get("method", "both")
    project = problem.get("project_kernel", False)
    report = Report(kind="solve-poisson", extra={"method": method})
    reps = {}
    if method in ("both", "spectral"):
        reps["spectral"] = solve_poisson(space, f, project_kernel=project)
    if method in ("both", "variational"):
        reps["variational"] = minimize_dirichlet_energy(space, f, project_kernel=project)
    for name, rep in reps.items():
        report.checks.append(check_le(f"weak_residual[{name}]", rep.residual_weak, 1e-8))
        report.checks.append(check_le(f"strong_residual[{name}]", rep.residual_strong, 1e-8))
        report.extra[f"iterations[{name}]"] = rep.iterations
        report.extra[f"flags[{name}]"] = rep.flags
    if len(reps) == 2:
        diff = bk.norm_l2(reps["spectral"].solution - reps["variational"].solution)
        report.checks.append(check_le("solver_agreement_l2", diff, 1e-8))
    primary = reps.get("spectral") or reps["variational"]
    report.extra["kernel_component"] = primary.kernel_component
    _write(out_dir, "solution.json", _dump_json(sz.element_to_json(primary.solution)))
    _write(out_dir, "solution.csv", _solution_csv(primary.solution))
    return report.to_dict(), report


def _make_map(map_cfg: dict):
    name = map_cfg["name"]
    if name == "identity":
        return identity_map()
    if name == "curved":
        return curved_map(map_cfg.get("beta", 1.0))
    return negated_map()


def _cmd_quasilinear(space, problem, rng, tol, out_dir):
    f = sz.element_data_from_json(space.backend, problem["f"])
    F = _make_map(problem["map"])
    project = problem.get("project_kernel", False)
    opts = QuasilinearOptions(project_kernel=project)
    base = solve_quasilinear(space, F, f, opts)
    report = Report(kind="solve-quasilinear", extra={"map": F.name})
    report.checks.append(check_le("weak_residual", base.residual_weak, 1e-8))
    report.checks.append(check_le("strong_residual", base.residual_strong, 1e-8))
    report.extra["iterations"] = base.iterations
    report.extra["galerkin_dim"] = base.galerkin_dim
    report.extra["flags"] = base.flags
    restarts = problem.get("restarts", 0)
    worst = 0.0
    for _ in range(restarts):
        init = rng.standard_normal(base.galerkin_dim)
        other = solve_quasilinear(
            space, F, f, QuasilinearOptions(project_kernel=project, init=init))
        worst = max(worst, bk.norm_l2(base.solution - other.solution))
    if restarts:
        report.checks.append(check_le("restart_agreement_l2", worst, 1e-8))
    _write(out_dir, "solution.json", _dump_json(sz.element_to_json(base.solution)))
    _write(out_dir, "solution.csv", _solution_csv(base.solution))
    return report.to_dict(), report


def _parse_flow(space, flow_cfg):
    if flow_cfg is None:
        return None, None
    if "constant_gradient_of" in flow_cfg:
        el = sz.element_data_from_json(space.backend, flow_cfg["constant_gradient_of"])
        h = flow_cfg.get("scale", 1.0) * gradient(space, el)
        return [0.0], [h]
    times = [float(t) for t in flow_cfg["times"]]
    vectors = [
        tangent_from_json(space, [{"data": comp} for comp in vec])
        for vec in flow_cfg["vectors"]
    ]
    return times, vectors


def _cmd_evolve(space, problem, rng, tol, out_dir):
    u0 = sz.element_data_from_json(space.backend, problem["u0"])
    flow_times, flow = _parse_flow(space, problem.get("flow"))
    source_cfg = problem.get("source")
    source_times = source = None
    if source_cfg is not None:
        source_times = [float(t) for t in source_cfg["times"]]
        source = [sz.element_data_from_json(space.backend, e) for e in source_cfg["elements"]]
    prob = EvolutionProblem(
        space=space,
        form=problem["form"],
        u0=u0,
        horizon=float(problem["horizon"]),
        dt=float(problem["dt"]),
        scheme=problem.get("scheme", "implicit-euler"),
        epsilon=float(problem.get("epsilon", 0.0)),
        flow_times=flow_times,
        flow=flow,
        source_times=source_times,
        source=source,
    )
    res = solve_evolution(prob, rng=rng, probes=problem.get("probes", 8))
    report = Report(kind="evolve", extra={"steps": prob.n_steps(), "scheme": prob.scheme})
    report.checks.append(check_le("linear_solve_residual", res.solve_residual_max, 1e-12))
    report.extra["conservation_drift_max"] = float(np.abs(res.conservation_defect).max())
    report.extra["conservation_defects"] = [float(v) for v in res.conservation_defect]
    if res.terminal_error_vs_oracle is not None:
        report.extra["terminal_error_vs_oracle"] = res.terminal_error_vs_oracle
    if res.coercivity_margin is not None:
        report.checks.append(
            check_ge("coercivity_margin_min", float(res.coercivity_margin.min()), -tol))
        report.extra["coercivity_margins"] = [float(v) for v in res.coercivity_margin]
    if res.boundedness_ratio is not None:
        report.extra["boundedness_ratio_max"] = float(res.boundedness_ratio.max())
    report.flags.extend(res.flags)
    _write_trajectory_csv(out_dir, res.times, res.states)
    _write(out_dir, "summary.json", _dump_json(report.to_dict()))
    return report.to_dict(), report


def run(config: dict, out_dir: str | None = None, quiet: bool = False,
        seed_override: int | None = None, tol_override: float | None = None) -> int:
    """Execute one validated config; returns the process exit code."""
    validate_config(config)
    command = config["command"]
    desc = sz.descriptor_from_json(config["backend"])
    tols = config.get("tolerances", {})
    tol = tol_override if tol_override is not None else tols.get("check", 1e-10)
    gap_tol = tols.get("gap", 1e-8)
    seed = seed_override if seed_override is not None else config.get("seed", 0)
    rng = np.random.Generator(np.random.PCG64(seed))
    out_path = Path(out_dir) if out_dir else (Path(config["out"]) if "out" in config else None)
    space = build_space(desc, gap_tol=gap_tol)
    problem = config.get("problem", {})

    if command == "describe":
        result, report = _cmd_describe(space, problem, rng, tol)
    elif command == "gap":
        result, report = _cmd_gap(space, problem, rng, tol)
    elif command == "markov-check":
        result, report = _cmd_markov(space, problem, rng, tol)
    elif command == "calculus-check":
        result, report = _cmd_calculus(space, problem, rng, tol)
    elif command == "be-check":
        result, report = _cmd_be(space, problem, rng, tol)
    elif command == "solve-poisson":
        result, report = _cmd_poisson(space, problem, rng, tol, out_path)
    elif command == "solve-quasilinear":
        result, report = _cmd_quasilinear(space, problem, rng, tol, out_path)
    else:
        result, report = _cmd_evolve(space, problem, rng, tol, out_path)

    text = _dump_json(result)
    _write(out_path, "report.json", _dump_json(report.to_dict()))
    if not quiet:
        sys.stdout.write(text)
    return 0 if report.passed else 2


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ncpde",
        description="Dirichlet-form calculus and PDE solvers on noncommutative measure spaces",
    )
    parser.add_argument("--config", required=True, help="path to the JSON run config")
    parser.add_argument("--out", default=None, help="directory for report/solution artifacts")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--tol", type=float, default=None, help="override the check tolerance")
    parser.add_argument("--quiet", action="store_true", help="suppress stdout")
    args = parser.parse_args(argv)
    try:
        config = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 1
    try:
        return run(config, out_dir=args.out, quiet=args.quiet,
                   seed_override=args.seed, tol_override=args.tol)
    except (ConfigError, bk.AlgebraError, NoSolution, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
