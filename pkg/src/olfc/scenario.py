"""Scenario files, run pipeline and output artifacts.

A scenario is a JSON document; see ``data/case6_nominal.json`` for the
bundled six-bus case. Bus numbers in the file are arbitrary integers; loads,
communication edges and overrides refer to them.
"""
from __future__ import annotations

import copy
import hashlib
import json
import os
import tempfile
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .actuation import TurbineGovernor, droop_certificate
from .analysis import dissipation_check, linearized_spectrum, run_metrics
from .coordination import CommGraph, DestabilizationOverride
from .dispatch import BenefitFunction, CostFunction, brute_force_dispatch, optimal_dispatch
from .grid import BusParams, DisconnectedNetworkError, NetworkModel, SteadyStateError, solve_steady_state
from .simulation import (
    ControllableLoad,
    ControllerSpec,
    GeneratorUnit,
    LoadSchedule,
    Scenario,
    Trajectory,
    simulate,
)

BUNDLED = ("case6_nominal", "case6_unstable", "case6_droop_reading",
           "case6_droop_reading_unstable", "case6_open_loop")


class ScenarioError(ValueError):
    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path or '<root>'}: {message}")


class ScenarioWarning(UserWarning):
    pass


_pos = {"type": "number", "exclusiveMinimum": 0}
_quad = {
    "type": "object",
    "required": ["q", "r"],
    "properties": {"q": _pos, "r": {"type": "number"}, "s": {"type": "number"}},
    "additionalProperties": False,
}

SCHEMA = {
    "type": "object",
    "required": ["network", "units", "controllers", "schedule", "integrator"],
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "base_power_mva": _pos,
        "frequency_base_hz": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "droop_reading": {"enum": ["K_inv", "K"]},
        "network": {
            "type": "object",
            "required": ["buses", "lines"],
            "properties": {
                "buses": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "required": ["id", "kind", "D", "V"],
                        "properties": {
                            "id": {"type": "integer"},
                            "kind": {"enum": ["generator", "load"]},
                            "M": _pos, "D": _pos, "V": _pos,
                        },
                        "additionalProperties": False,
                    },
                },
                "lines": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["from", "to", "B"],
                        "properties": {
                            "from": {"type": "integer"},
                            "to": {"type": "integer"},
                            "B": {"type": "number", "not": {"const": 0}},
                        },
                        "additionalProperties": False,
                    },
                },
            },
            "additionalProperties": False,
        },
        "units": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["bus", "order", "T_m", "T_theta", "cost"],
                "properties": {
                    "bus": {"type": "integer"},
                    "order": {"enum": [1, 2]},
                    "T_m": _pos, "T_s": _pos, "T_theta": _pos,
                    "K": {"type": "number", "not": {"const": 0}},
                    "K_inv": {"type": "number"},
                    "cost": _quad,
                },
                "oneOf": [{"required": ["K"]}, {"required": ["K_inv"]}],
                "additionalProperties": False,
            },
        },
        "controllers": {
            "type": "object",
            "required": ["family"],
            "properties": {
                "family": {"enum": ["consensus", "primal_dual", "decentralized", "none"]},
                "comm_edges": {
                    "type": "array",
                    "items": {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2},
                },
                "overrides": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["bus", "gain"],
                        "properties": {
                            "bus": {"type": "integer"},
                            "gain": {"type": "number"},
                            "start_time": {"type": "number", "minimum": 0},
                        },
                        "additionalProperties": False,
                    },
                },
                "primal_dual_gains": {
                    "type": "object",
                    "properties": {"v": _pos, "lambda": _pos},
                    "additionalProperties": False,
                },
                "controllable_loads": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["bus", "T_theta", "benefit"],
                        "properties": {"bus": {"type": "integer"}, "T_theta": _pos, "benefit": _quad},
                        "additionalProperties": False,
                    },
                },
            },
            "additionalProperties": False,
        },
        "schedule": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["time", "loads"],
                "properties": {
                    "time": {"type": "number", "minimum": 0},
                    "loads": {"type": "object", "additionalProperties": {"type": "number"}},
                },
                "additionalProperties": False,
            },
        },
        "integrator": {
            "type": "object",
            "required": ["dt", "horizon"],
            "properties": {"dt": _pos, "horizon": {"type": "number", "minimum": 0},
                           "divergence_bound": _pos},
            "additionalProperties": False,
        },
        "analysis": {
            "type": "object",
            "properties": {"settle_threshold": _pos, "vdot_slack": _pos},
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}


def resolve_path(path_or_name) -> Path:
    p = Path(path_or_name)
    if p.exists():
        return p
    stem = p.name[:-5] if p.name.endswith(".json") else p.name
    if stem in BUNDLED:
        with resources.as_file(resources.files("olfc") / "data" / f"{stem}.json") as fp:
            return Path(fp)
    raise FileNotFoundError(f"no scenario file or bundled scenario named {path_or_name!r}")


def digest(doc: dict) -> str:
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


def _validate_schema(doc: dict) -> None:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: (len(e.absolute_path), e.message))
    if errors:
        err = errors[-1]
        path = "/".join(str(p) for p in err.absolute_path)
        raise ScenarioError(path, err.message)


def unit_K_inv(unit: dict, reading: str) -> float:
    if "K_inv" in unit:
        return float(unit["K_inv"])
    return float(unit["K"]) if reading == "K_inv" else 1.0 / float(unit["K"])


def parse_scenario(doc: dict, name: str = "scenario", strict: bool = False) -> Scenario:
    """Validate a scenario document and build the :class:`Scenario`.

    Assumption checks: steady-state solvability for every schedule segment is
    always an error; insecure steady states, droop certificates outside their
    interval and destabilising overrides are reported as warnings, or raised
    when ``strict`` is set (except overrides, which are deliberate).
    """
    _validate_schema(doc)
    notices: list[str] = []

    def warn(path: str, msg: str):
        if strict:
            raise ScenarioError(path, msg)
        notices.append(f"{path}: {msg}")
        warnings.warn(f"{name}: {path}: {msg}", ScenarioWarning, stacklevel=3)

    net = doc["network"]
    raw_buses = net["buses"]
    ids = [b["id"] for b in raw_buses]
    if len(set(ids)) != len(ids):
        raise ScenarioError("network/buses", "bus ids must be unique")
    for k, b in enumerate(raw_buses):
        if b["kind"] == "generator" and "M" not in b:
            raise ScenarioError(f"network/buses/{k}", "generator bus needs inertia M")
    gen_ids = sorted(b["id"] for b in raw_buses if b["kind"] == "generator")
    load_ids = sorted(b["id"] for b in raw_buses if b["kind"] == "load")
    if not gen_ids:
        raise ScenarioError("network/buses", "at least one generator bus is required")
    order = gen_ids + load_ids
    index = {bid: k for k, bid in enumerate(order)}
    by_id = {b["id"]: b for b in raw_buses}
    buses = [BusParams(by_id[i]["kind"], by_id[i]["D"], by_id[i]["V"], by_id[i].get("M")) for i in order]

    lines = []
    for k, ln in enumerate(net["lines"]):
        for end in ("from", "to"):
            if ln[end] not in index:
                raise ScenarioError(f"network/lines/{k}/{end}", f"unknown bus {ln[end]}")
        if ln["from"] == ln["to"]:
            raise ScenarioError(f"network/lines/{k}", "line connects a bus to itself")
        lines.append((index[ln["from"]], index[ln["to"]], ln["B"]))
    try:
        model = NetworkModel.from_buses(buses, lines, doc.get("base_power_mva", 100.0))
    except DisconnectedNetworkError as exc:
        named = [[order[i] for i in comp] for comp in exc.components]
        raise ScenarioError("network/lines", f"network is disconnected; bus components {named}") from None

    reading = doc.get("droop_reading", "K_inv")
    unit_docs = {}
    for k, u in enumerate(doc["units"]):
        if u["bus"] not in gen_ids:
            raise ScenarioError(f"units/{k}/bus", f"bus {u['bus']} is not a generator bus")
        if u["bus"] in unit_docs:
            raise ScenarioError(f"units/{k}/bus", f"bus {u['bus']} has more than one unit")
        if u["order"] == 2 and "T_s" not in u:
            raise ScenarioError(f"units/{k}", "second-order unit needs T_s")
        unit_docs[u["bus"]] = (k, u)
    missing = [g for g in gen_ids if g not in unit_docs]
    if missing:
        raise ScenarioError("units", f"generator buses without a unit: {missing}")

    units, certificates = [], {}
    for g in gen_ids:
        k, u = unit_docs[g]
        K_inv = unit_K_inv(u, reading)
        tg = TurbineGovernor(u["order"], u["T_m"], K_inv, u["T_theta"], u.get("T_s"))
        if u["order"] == 1 and not K_inv > 0:
            raise ScenarioError(f"units/{k}", "first-order units need a positive K_inv")
        units.append(GeneratorUnit(tg, CostFunction(**u["cost"])))
        if u["order"] == 2:
            cert = droop_certificate(u["T_s"], u["T_m"], by_id[g]["D"], K_inv)
            certificates[g] = cert
            if not cert.holds:
                warn(f"units/{k}", f"droop certificate fails at bus {g}: " + "; ".join(cert.diagnostics()))

    ctrl_doc = doc["controllers"]
    family = ctrl_doc["family"]
    cl_docs = ctrl_doc.get("controllable_loads", [])
    controllers = list(gen_ids)
    c_loads = []
    for k, c in enumerate(cl_docs):
        if c["bus"] not in load_ids:
            raise ScenarioError(f"controllers/controllable_loads/{k}/bus", f"bus {c['bus']} is not a load bus")
        if c["bus"] in controllers:
            raise ScenarioError(f"controllers/controllable_loads/{k}/bus", "duplicate controllable load")
        controllers.append(c["bus"])
        c_loads.append(ControllableLoad(load_ids.index(c["bus"]), BenefitFunction(**c["benefit"]), c["T_theta"]))
    cpos = {b: i for i, b in enumerate(controllers)}

    comm = None
    edges = ctrl_doc.get("comm_edges", [])
    for k, (a, b) in enumerate(edges):
        for end, bus in enumerate((a, b)):
            if bus not in cpos:
                raise ScenarioError(f"controllers/comm_edges/{k}/{end}", f"bus {bus} has no controller")
    if family == "consensus":
        try:
            comm = CommGraph(len(controllers), tuple((cpos[a], cpos[b]) for a, b in edges))
        except DisconnectedNetworkError as exc:
            named = [[controllers[i] for i in comp] for comp in exc.components]
            raise ScenarioError("controllers/comm_edges",
                                f"communication graph is disconnected; components {named}") from None

    overrides = []
    for k, o in enumerate(ctrl_doc.get("overrides", [])):
        if o["bus"] not in gen_ids or unit_docs[o["bus"]][1]["order"] != 2:
            raise ScenarioError(f"controllers/overrides/{k}/bus",
                                f"bus {o['bus']} has no second-order controller")
        if family in ("none",):
            raise ScenarioError(f"controllers/overrides/{k}", "overrides need an active controller family")
        overrides.append(DestabilizationOverride(gen_ids.index(o["bus"]), o["gain"], o.get("start_time", 0.0)))
        if o["gain"] != 1:
            notices.append(f"controllers/overrides/{k}: frequency gain at bus {o['bus']} multiplied by "
                           f"{o['gain']:g} from t = {o.get('start_time', 0.0):g} s")
    gains = ctrl_doc.get("primal_dual_gains", {})
    try:
        controller = ControllerSpec(family, comm, tuple(overrides), gains.get("v", 1.0),
                                    gains.get("lambda", 1.0), tuple(c_loads))
    except ValueError as exc:
        raise ScenarioError("controllers", str(exc)) from None

    times, loads = [], []
    for k, entry in enumerate(doc["schedule"]):
        vec = np.zeros(len(load_ids))
        keys = {}
        for key, val in entry["loads"].items():
            try:
                bus = int(key)
            except ValueError:
                raise ScenarioError(f"schedule/{k}/loads/{key}", "load keys must be bus numbers") from None
            if bus not in load_ids:
                raise ScenarioError(f"schedule/{k}/loads/{key}", f"bus {bus} is not a load bus")
            keys[bus] = val
        absent = [b for b in load_ids if b not in keys]
        if absent:
            raise ScenarioError(f"schedule/{k}/loads", f"missing load buses {absent}")
        for bus, val in keys.items():
            vec[load_ids.index(bus)] = val
        times.append(float(entry["time"]))
        loads.append(vec)
    if times[0] != 0.0:
        raise ScenarioError("schedule/0/time", "the first schedule entry must start at t = 0")
    try:
        schedule = LoadSchedule(tuple(times), tuple(loads))
    except ValueError as exc:
        raise ScenarioError("schedule", str(exc)) from None

    integ = doc["integrator"]
    try:
        scenario = Scenario(model, units, controller, schedule, float(integ["horizon"]), float(integ["dt"]),
                            float(integ.get("divergence_bound", 1e6)), name=name)
    except ValueError as exc:
        raise ScenarioError("integrator", str(exc)) from None

    for k, t in enumerate(times):
        opt = scenario.optimum(t)
        total = scenario.base_loads(t).copy()
        if c_loads:
            total[[c.load_index for c in c_loads]] += opt.u_l_opt
        P = opt.P_m_opt if family != "none" else scenario.optimum(0.0).P_m_opt
        try:
            ss = solve_steady_state(P, total, model)
        except SteadyStateError as exc:
            raise ScenarioError(f"schedule/{k}", f"no steady state at the optimal dispatch: {exc}") from None
        if not ss.secure:
            warn(f"schedule/{k}", "steady-state line angle differences reach pi/2")

    scenario.metadata = {
        "document": doc,
        "digest": digest(doc),
        "notices": notices,
        "certificates": certificates,
        "bus_order": order,
        "generator_buses": gen_ids,
        "load_buses": load_ids,
        "controllable_load_buses": [c["bus"] for c in cl_docs],
        "lines": [(order[i], order[j]) for i, j, _ in lines],
        "droop_reading": reading,
        "analysis": doc.get("analysis", {}),
        "frequency_base_hz": doc.get("frequency_base_hz"),
    }
    return scenario


def load_document(path_or_name) -> tuple[dict, str]:
    path = resolve_path(path_or_name)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError("", f"invalid JSON: {exc}") from None
    return doc, doc.get("name", path.stem) if isinstance(doc, dict) else path.stem


def load_scenario(path_or_name, strict: bool = False, dt: float | None = None,
                  horizon: float | None = None) -> Scenario:
    doc, name = load_document(path_or_name)
    if not isinstance(doc, dict):
        raise ScenarioError("", "scenario must be a JSON object")
    doc = copy.deepcopy(doc)
    if dt is not None or horizon is not None:
        integ = doc.setdefault("integrator", {})
        if dt is not None:
            integ["dt"] = dt
        if horizon is not None:
            integ["horizon"] = horizon
    return parse_scenario(doc, name, strict)


def certify(path_or_name) -> dict:
    """Droop certificates of every second-order unit under both readings of a tabulated K."""
    doc, name = load_document(path_or_name)
    _validate_schema(doc)
    damping = {b["id"]: b["D"] for b in doc["network"]["buses"]}
    default = doc.get("droop_reading", "K_inv")
    units = []
    for u in doc["units"]:
        entry = {"bus": u["bus"], "order": u["order"]}
        if u["order"] == 2:
            readings = ["K_inv", "K"] if "K" in u else ["K_inv"]
            entry["tabulated_K"] = u.get("K")
            entry["readings"] = {}
            for reading in readings:
                K_inv = unit_K_inv(u, reading)
                cert = droop_certificate(u["T_s"], u["T_m"], damping[u["bus"]], K_inv)
                entry["readings"][reading] = cert.to_dict()
        units.append(entry)

    def all_hold(reading):
        return all(e["readings"][reading]["holds"] for e in units
                   if e["order"] == 2 and reading in e["readings"])

    summary = {r: all_hold(r) for r in ("K_inv", "K")
               if any(r in e.get("readings", {}) for e in units)}
    return _jsonable({"scenario": name, "default_reading": default, "units": units, "all_hold": summary})


def dispatch_summary(scenario: Scenario, resolution: float = 0.01) -> list[dict]:
    """Closed-form dispatch per schedule segment, cross-checked by the brute-force oracle."""
    out = []
    for t in scenario.schedule.times:
        total = float(np.sum(scenario.base_loads(t)))
        closed = optimal_dispatch(scenario.costs, total)
        entry = {"time": t, "total_load": total, "lambda_opt": closed.lambda_opt,
                 "P_m_opt": closed.P_m_opt.tolist(), "total_cost": closed.total_cost}
        if len(scenario.costs) <= 4:
            brute = brute_force_dispatch(scenario.costs, total, resolution)
            entry["oracle_P_m"] = brute.P_m_opt.tolist()
            entry["oracle_max_deviation"] = float(np.max(np.abs(brute.P_m_opt - closed.P_m_opt)))
        if scenario.controller.loads:
            w = scenario.optimum(t)
            entry["social_welfare"] = {"lambda_opt": w.lambda_opt, "P_m_opt": w.P_m_opt.tolist(),
                                       "u_l_opt": w.u_l_opt.tolist(), "welfare": w.welfare}
        out.append(entry)
    return out


def csv_columns(traj: Trajectory) -> tuple[list[str], np.ndarray]:
    meta = traj.scenario.metadata
    gens = meta.get("generator_buses") or list(range(1, traj.scenario.model.n_g + 1))
    loads = meta.get("load_buses") or list(range(len(gens) + 1, len(gens) + traj.scenario.model.n_l + 1))
    lines = meta.get("lines") or [(i + 1, j + 1) for i, j in traj.scenario.model.topology.lines]
    cl = meta.get("controllable_load_buses", [])
    order = meta.get("bus_order") or gens + loads
    idx2 = [gens[i] for i in np.flatnonzero(traj.scenario.orders == 2)]

    names = ["t"]
    blocks = [traj.times[:, None]]

    def add(prefix, labels, data):
        if data.shape[1]:
            names.extend(f"{prefix}{lab}" for lab in labels)
            blocks.append(data)

    add("eta_", [f"{a}_{b}" for a, b in lines], traj.channel("eta"))
    add("omega_g", gens, traj.channel("omega_g"))
    add("omega_l", loads, traj.omega_l())
    add("P_m", gens, traj.channel("P_m"))
    add("P_s", idx2, traj.channel("P_s"))
    add("theta", gens, traj.channel("theta"))
    add("v_", [f"{a}_{b}" for a, b in lines], traj.channel("v"))
    add("lambda", order, traj.channel("lambda"))
    add("theta_l", cl, traj.channel("theta_l"))
    add("P_l", loads, traj.base_loads())
    add("marginal_", gens, traj.marginal_costs())
    return names, np.hstack(blocks)


def write_trajectory_csv(traj: Trajectory, path) -> Path:
    names, data = csv_columns(traj)
    path = Path(path)
    np.savetxt(path, data, delimiter=",", header=",".join(names), comments="", fmt="%.17g")
    return path


def read_trajectory_csv(path) -> tuple[list[str], np.ndarray]:
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data


def write_plot_data(traj: Trajectory, directory, stride: int | None = None) -> list[Path]:
    """Two-column (t, value) files: frequencies, generated power and its optimum."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    sc = traj.scenario
    if stride is None:
        stride = max(1, int(round(0.01 / sc.dt)))
    sel = slice(None, None, stride)
    t = traj.times[sel]
    gens = sc.metadata.get("generator_buses") or list(range(1, sc.model.n_g + 1))
    loads = sc.metadata.get("load_buses") or list(range(len(gens) + 1, len(gens) + sc.model.n_l + 1))
    P_opt = np.array([sc.optimum(tt).P_m_opt for tt in t])
    paths = []

    def put(fname, values):
        p = directory / fname
        np.savetxt(p, np.column_stack([t, values]), fmt="%.10g", header="t value")
        paths.append(p)

    for k, g in enumerate(gens):
        put(f"frequency_omega_g{g}.txt", traj.channel("omega_g")[sel, k])
    omega_l = traj.omega_l()[sel]
    for k, b in enumerate(loads):
        put(f"frequency_omega_l{b}.txt", omega_l[:, k])
    for k, g in enumerate(gens):
        put(f"power_P_m{g}.txt", traj.channel("P_m")[sel, k])
        put(f"power_P_m{g}_opt.txt", P_opt[:, k])
    return paths


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def build_report(scenario: Scenario, traj: Trajectory | None = None) -> dict:
    meta = scenario.metadata
    analysis_cfg = meta.get("analysis", {})
    doc = copy.deepcopy(meta.get("document", {}))
    doc.setdefault("integrator", {}).update(dt=scenario.dt, horizon=scenario.horizon)
    report = {
        "scenario": scenario.name,
        "digest": digest(doc),
        "inputs": doc,
        "notices": meta.get("notices", []),
        "droop_reading": meta.get("droop_reading"),
        "certificates": {str(b): c.to_dict() for b, c in meta.get("certificates", {}).items()},
        "dispatch": dispatch_summary(scenario),
    }
    try:
        ev = linearized_spectrum(scenario)
        report["linearization"] = {"spectral_abscissa": float(ev.real.max()),
                                   "slowest_mode": [float(ev[np.argmax(ev.real)].real),
                                                    float(ev[np.argmax(ev.real)].imag)]}
    except (ValueError, SteadyStateError) as exc:
        report["linearization"] = {"error": str(exc)}
    if traj is None:
        return _jsonable(report)

    threshold = analysis_cfg.get("settle_threshold", 1e-3)
    metrics = run_metrics(traj, threshold)
    report["metrics"] = metrics.to_dict()
    report["diverged"] = traj.diverged
    report["divergence_time"] = traj.divergence_time
    report["samples"] = len(traj.times)
    report["terminal_state"] = {
        "P_m": traj.channel("P_m")[-1],
        "omega_g": traj.channel("omega_g")[-1],
        "omega_l": traj.omega_l()[-1],
    }
    try:
        storage = dissipation_check(traj, slack=analysis_cfg.get("vdot_slack", 1e-6), allow_diverged=True)
        report["storage"] = storage.summary()
    except (ValueError, SteadyStateError, ZeroDivisionError) as exc:
        report["storage"] = {"error": str(exc)}
    return _jsonable(report)


def run(path_or_name, out_dir, dt: float | None = None, horizon: float | None = None,
        strict: bool = False, certify_only: bool = False) -> dict:
    """Load, simulate and write trajectory CSV, plot data and report JSON under ``out_dir/<name>``."""
    scenario = load_scenario(path_or_name, strict=strict, dt=dt, horizon=horizon)
    target = Path(out_dir) / scenario.name
    target.mkdir(parents=True, exist_ok=True)
    if certify_only:
        report = build_report(scenario)
        report["certify"] = certify(path_or_name)
        report["files"] = {"report": str(target / "report.json")}
    else:
        traj = simulate(scenario)
        report = build_report(scenario, traj)
        csv = write_trajectory_csv(traj, target / "trajectory.csv")
        plots = write_plot_data(traj, target / "plot")
        report["files"] = {"trajectory": str(csv), "plot": [str(p) for p in plots],
                           "report": str(target / "report.json")}
    _atomic_write(target / "report.json", json.dumps(report, indent=2) + "\n")
    return report


def _run_isolated(args):
    path, out_dir, dt, horizon, strict = args
    try:
        return run(path, out_dir, dt=dt, horizon=horizon, strict=strict)
    except Exception as exc:  # noqa: BLE001 - batch isolates per-scenario failures
        return {"scenario": str(path), "error": f"{type(exc).__name__}: {exc}"}


def batch(paths, out_dir, parallelism: int = 1, dt: float | None = None, horizon: float | None = None,
          strict: bool = False) -> list[dict]:
    """Run scenarios independently; results come back in input order."""
    jobs = [(p, out_dir, dt, horizon, strict) for p in paths]
    if parallelism > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            reports = list(pool.map(_run_isolated, jobs))
    else:
        reports = [_run_isolated(j) for j in jobs]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = ["scenario,diverged,divergence_time,settling_time,dispatch_error,marginal_spread,error"]
    for r in reports:
        m = r.get("metrics", {})
        rows.append(",".join(str(x) if x is not None else "" for x in (
            r.get("scenario"), r.get("diverged"), r.get("divergence_time"), m.get("settling_time"),
            m.get("dispatch_error"), m.get("terminal_marginal_spread"), r.get("error"))))
    _atomic_write(out / "summary.csv", "\n".join(rows) + "\n")
    return reports


def with_overrides(scenario: Scenario, **changes) -> Scenario:
    """Copy of ``scenario`` with dataclass fields replaced (metadata is shared)."""
    return replace(scenario, **changes)
