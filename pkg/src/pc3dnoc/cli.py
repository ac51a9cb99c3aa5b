"""Command-line entry point.

    pc3dnoc placement --dims 4 4 4 --elevators 3
    pc3dnoc optimize --topology p_s1 --traffic uniform --out runs/a
    pc3dnoc simulate --policy adele --pir 0.05 --out runs/a
    pc3dnoc sweep --policy nearest --rates 0.001,0.02,0.04
    pc3dnoc sweep --over adele.threshold --values 0,0.25,0.5,1
    pc3dnoc compare --policies nearest,cda,adele --rates 0.02,0.06
    pc3dnoc pipeline --config exp.json --out runs/b

Every command reads one JSON config (``--config``) layered over built-in
defaults, then ``--set key.path=value`` overrides, then the shorthand flags.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from . import config as C
from .engine import (SimConfig, SimulationError, load_distribution, max_elevator_load, run, saturation_rate,
                     simulate)
from .optimizer import (ArchiveSolution, STRATEGIES, amosa_optimize, optimize_placement, pick_solution,
                        save_archive)
from .selection import POLICIES, ElevatorAssignment
from .traffic import frequency_matrix

log = logging.getLogger("pc3dnoc")

COMMANDS = ("placement", "optimize", "simulate", "sweep", "compare", "pipeline")


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage


@dataclass
class ExperimentSpec:
    command: str
    config_path: str | None = None
    out_dir: str = "."
    overrides: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ValueError(f"unknown command {self.command!r}")
        if self.config_path is not None and not Path(self.config_path).is_file():
            raise FileNotFoundError(f"config file {self.config_path} does not exist")

    def resolve(self) -> dict:
        return C.load_config(self.config_path, self.overrides)

    def out(self) -> Path:
        p = Path(self.out_dir)
        p.mkdir(parents=True, exist_ok=True)
        return p


# ---------------------------------------------------------------------------
# helpers


def _dump(path: Path, obj: Any) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[dict], cfg: dict) -> None:
    """CSV whose first line is a ``#``-comment holding the resolved config."""
    buf = io.StringIO()
    buf.write("# config: " + json.dumps(cfg, sort_keys=True) + "\n")
    w = csv.DictWriter(buf, fieldnames=list(header), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: r.get(k) for k in header})
    path.write_text(buf.getvalue())


@contextmanager
def _mapper(jobs: int):
    if jobs and jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            yield ex.map
    else:
        yield map


def optimize_archive(cfg: dict) -> list[ArchiveSolution]:
    topo = C.topology_of(cfg)
    traffic = frequency_matrix(C.traffic_of(cfg), topo)
    return amosa_optimize(topo, traffic, C.amosa_of(cfg))


def resolve_assignment(cfg: dict, policy: str) -> ElevatorAssignment | None:
    """Assignment for rr/adele: the configured one, else optimise on the fly."""
    if policy not in ("rr", "adele"):
        return None
    if cfg.get("assignment") is not None:
        return C.assignment_from_ref(cfg["assignment"], cfg["strategy"])
    return pick_solution(optimize_archive(cfg), cfg["strategy"]).assignment


def _metrics_row(m, topo) -> dict:
    return {"avg_latency": m.avg_latency, "energy_per_flit": m.energy_per_flit, "throughput": m.throughput,
            "delivered": m.delivered, "injected": m.injected,
            "max_elevator_load": max_elevator_load(m, topo)}


def _report_config(cfg: dict, assignment: ElevatorAssignment | None = None) -> dict:
    out = dict(cfg)
    if assignment is not None:
        out["assignment"] = assignment.to_json()
    return out


def format_table(rows: Sequence[dict], columns: Sequence[str]) -> str:
    """Aligned-column text rendering for humans."""
    def cell(v):
        return f"{v:.4g}" if isinstance(v, float) else ("-" if v is None else str(v))
    body = [[cell(r.get(c)) for c in columns] for r in rows]
    widths = [max(len(c), *(len(b[i]) for b in body)) if body else len(c) for i, c in enumerate(columns)]
    lines = ["  ".join(c.rjust(w) for c, w in zip(columns, widths))]
    lines += ["  ".join(v.rjust(w) for v, w in zip(b, widths)) for b in body]
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# commands


def run_placement(spec: ExperimentSpec) -> dict:
    cfg = spec.resolve()
    pl = cfg["placement"]
    dims = tuple(int(d) for d in pl["dims"])
    elevators = optimize_placement(dims, int(pl["elevators"]))
    doc = {"dims": list(dims), "elevators": [list(e) for e in elevators], "config": cfg}
    _dump(spec.out() / "placement.json", doc)
    return doc


def run_optimize(spec: ExperimentSpec) -> list[ArchiveSolution]:
    cfg = spec.resolve()
    archive = optimize_archive(cfg)
    out = spec.out()
    save_archive(archive, out / "archive.json")
    chosen = pick_solution(archive, cfg["strategy"])
    _dump(out / "assignment.json", _assignment_doc(cfg, chosen))
    return archive


def _assignment_doc(cfg: dict, sol: ArchiveSolution) -> dict:
    return {"config": cfg, "strategy": cfg["strategy"],
            "objectives": {"variance": sol.objectives.variance, "avg_distance": sol.objectives.avg_distance},
            "subsets": sol.assignment.to_json()}


def run_simulate(spec: ExperimentSpec, per_cycle: str | None = None) -> dict:
    cfg = spec.resolve()
    policy = cfg["policy"]
    assignment = resolve_assignment(cfg, policy)
    sim = C.sim_config(cfg, policy, assignment)
    result = run(sim)
    doc = {"config": _report_config(cfg, assignment), "resolved": sim.describe(), "seed": sim.seed,
           "metrics": result.metrics.to_dict(),
           "load_distribution": load_distribution(result.metrics, sim.topology)}
    out = spec.out()
    _dump(out / "metrics.json", doc)
    if per_cycle:
        with open(out / per_cycle, "w", newline="") as fh:
            fh.write("# config: " + json.dumps(doc["config"], sort_keys=True) + "\n")
            fh.write("cycle,injected_flits,delivered_packets\n")
            for t, (i, d) in enumerate(zip(result.cycle_injected_flits, result.cycle_delivered_packets)):
                fh.write(f"{t},{i},{d}\n")
    return doc


def run_sweep(spec: ExperimentSpec, over: str | None = None, values: Sequence[Any] | None = None) -> list[dict]:
    """Latency/energy versus injection rate, or versus any config key."""
    cfg = spec.resolve()
    policy = cfg["policy"]
    assignment = resolve_assignment(cfg, policy)
    if over is None:
        key, xs = "rate", [float(r) for r in cfg["rates"]]
        if xs != sorted(xs) or min(xs) <= 0:
            raise ValueError("injection rates must be positive and ascending")
        sims = [C.sim_config(cfg, policy, assignment, rate=r, seed=cfg["seed"] + i) for i, r in enumerate(xs)]
    else:
        if not values:
            raise ValueError("--over needs --values")
        # matched seed: only the swept parameter changes between runs
        key, xs, sims = over, list(values), []
        for v in xs:
            c = json.loads(json.dumps(cfg))
            C.apply_override(c, f"{over}={json.dumps(v)}")
            sims.append(C.sim_config(c, policy, assignment))
    with _mapper(int(cfg.get("jobs", 1))) as m:
        metrics = list(m(simulate, sims))
    topo = C.topology_of(cfg)
    wide = []
    for x, met in zip(xs, metrics):
        wide.append({"sweep_key": key, "sweep_value": x, "policy": policy, **_metrics_row(met, topo)})
    if key == "rate":
        sat = saturation_rate(xs, [r["avg_latency"] for r in wide], wide[0]["avg_latency"])
        for r in wide:
            r["saturation_rate"] = sat
    tidy = [{"sweep_key": r["sweep_key"], "sweep_value": r["sweep_value"], "policy": policy,
             "metric": k, "value": r[k]}
            for r in wide for k in r if k not in ("sweep_key", "sweep_value", "policy")]
    _write_csv(spec.out() / "sweep.csv", ["sweep_key", "sweep_value", "policy", "metric", "value"], tidy,
               _report_config(cfg, assignment))
    return wide


def _pct(value: float, ref: float) -> float:
    if value == ref:
        return 0.0
    return 100.0 * (value - ref) / ref if ref else float("inf")


COMPARE_COLUMNS = ["policy", "rate", "seed", "avg_latency", "energy_per_flit", "throughput", "max_elevator_load",
                   "saturation_rate", "delta_latency_pct", "delta_energy_pct", "delta_max_load_pct",
                   "delta_saturation_pct"]


def run_compare(spec: ExperimentSpec) -> list[dict]:
    """Matched-seed runs of every policy at every rate, with deltas vs the first policy."""
    cfg = spec.resolve()
    policies = list(cfg["policies"])
    rates = [float(r) for r in cfg["rates"]]
    if len(policies) < 2:
        raise ValueError("compare needs at least two policies")
    if not rates or rates != sorted(rates) or min(rates) <= 0:
        raise ValueError("injection rates must be positive and ascending")
    for p in policies:
        if p not in POLICIES:
            raise ValueError(f"unknown policy {p!r}")
    topo = C.topology_of(cfg)
    assignments = {p: resolve_assignment(cfg, p) for p in dict.fromkeys(policies)}
    rows: list[dict] = []
    with _mapper(int(cfg.get("jobs", 1))) as m:
        for p in policies:
            sims = [C.sim_config(cfg, p, assignments[p], rate=r, seed=cfg["seed"] + i) for i, r in enumerate(rates)]
            try:
                metrics = list(m(simulate, sims))
            except (SimulationError, ValueError) as exc:
                raise RuntimeError(f"policy {p!r} failed: {exc}") from exc
            lat = [x.avg_latency for x in metrics]
            sat = saturation_rate(rates, lat, lat[0])
            for r, s, met in zip(rates, sims, metrics):
                rows.append({"policy": p, "rate": r, "seed": s.seed, **_metrics_row(met, topo),
                             "saturation_rate": sat})
    ref = {r["rate"]: r for r in rows if r["policy"] == policies[0]}
    for r in rows:
        b = ref[r["rate"]]
        r["delta_latency_pct"] = _pct(r["avg_latency"], b["avg_latency"])
        r["delta_energy_pct"] = _pct(r["energy_per_flit"], b["energy_per_flit"])
        r["delta_max_load_pct"] = _pct(r["max_elevator_load"], b["max_elevator_load"])
        if r["saturation_rate"] is None or b["saturation_rate"] is None:
            r["delta_saturation_pct"] = None
        else:
            r["delta_saturation_pct"] = _pct(r["saturation_rate"], b["saturation_rate"])
    rep_cfg = dict(cfg)
    rep_cfg["assignments"] = {p: (a.to_json() if a is not None else None) for p, a in assignments.items()}
    _write_csv(spec.out() / "compare.csv", COMPARE_COLUMNS, rows, rep_cfg)
    return rows


def run_pipeline(spec: ExperimentSpec) -> dict:
    """optimize -> pick_solution -> simulate, persisting each artifact."""
    cfg = spec.resolve()
    out = spec.out()
    try:
        archive = optimize_archive(cfg)
        save_archive(archive, out / "archive.json")
    except Exception as exc:
        raise StageError("optimize", exc) from exc
    try:
        chosen = pick_solution(archive, cfg["strategy"])
        _dump(out / "assignment.json", _assignment_doc(cfg, chosen))
    except Exception as exc:
        raise StageError("pick_solution", exc) from exc
    try:
        policy = cfg["policy"]
        assignment = chosen.assignment if policy in ("rr", "adele") else None
        sim: SimConfig = C.sim_config(cfg, policy, assignment)
        metrics = simulate(sim)
        doc = {"config": _report_config(cfg, assignment), "resolved": sim.describe(), "seed": sim.seed,
               "metrics": metrics.to_dict(), "load_distribution": load_distribution(metrics, sim.topology)}
        _dump(out / "metrics.json", doc)
    except Exception as exc:
        raise StageError("simulate", exc) from exc
    return {"archive": archive, "assignment": chosen, "metrics": metrics}


# ---------------------------------------------------------------------------
# argument parsing


def _csv_floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _csv_values(text: str) -> list[Any]:
    return [C._parse_value(t.strip()) for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config")
    common.add_argument("--out", default=".", help="output directory (default: .)")
    common.add_argument("--seed", type=int, help="simulation seed")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="dotted-path override, e.g. adele.xi=0.1 (repeatable)")
    common.add_argument("--topology", help="preset name or topology JSON file")
    common.add_argument("--traffic", help="uniform | shuffle | trace:<path>")
    common.add_argument("--pir", type=float, help="injection rate in flits/node/cycle")
    common.add_argument("--warmup", type=int, help="warmup cycles")
    common.add_argument("--cycles", type=int, help="measured cycles")
    common.add_argument("--jobs", type=int, help="parallel simulations")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="pc3dnoc", description="Elevator selection for partially connected 3D NoCs")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("placement", parents=[common], help="greedy elevator placement for a grid")
    p.add_argument("--dims", type=int, nargs=3, metavar=("X", "Y", "L"))
    p.add_argument("--elevators", type=int)

    p = sub.add_parser("optimize", parents=[common], help="AMOSA archive of elevator subsets")
    p.add_argument("--strategy", choices=STRATEGIES)

    for name, helptext in (("simulate", "single simulation"), ("pipeline", "optimize, pick, simulate")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--policy", choices=POLICIES)
        p.add_argument("--assignment", help="assignment.json or archive.json")
        p.add_argument("--strategy", choices=STRATEGIES)
        if name == "simulate":
            p.add_argument("--per-cycle", metavar="FILE", help="also write per-cycle counts as CSV")

    p = sub.add_parser("sweep", parents=[common], help="sweep injection rate or a config key")
    p.add_argument("--policy", choices=POLICIES)
    p.add_argument("--assignment")
    p.add_argument("--rates", type=_csv_floats)
    p.add_argument("--over", metavar="KEY", help="config key to sweep instead of the rate")
    p.add_argument("--values", type=_csv_values)

    p = sub.add_parser("compare", parents=[common], help="matched-seed policy comparison")
    p.add_argument("--policies", type=lambda s: [t for t in s.split(",") if t])
    p.add_argument("--assignment")
    p.add_argument("--rates", type=_csv_floats)
    return parser


def _shorthand(args: argparse.Namespace) -> list[str]:
    sets = []
    for attr, key in (("seed", "seed"), ("topology", "topology"), ("traffic", "traffic"), ("pir", "pir"),
                      ("warmup", "warmup"), ("cycles", "cycles"), ("jobs", "jobs"), ("policy", "policy"),
                      ("strategy", "strategy"), ("elevators", "placement.elevators")):
        v = getattr(args, attr, None)
        if v is not None:
            sets.append(f"{key}={json.dumps(v)}")
    for attr in ("rates", "policies", "dims"):
        v = getattr(args, attr, None)
        if v is not None:
            key = "placement.dims" if attr == "dims" else attr
            sets.append(f"{key}={json.dumps(v)}")
    if getattr(args, "assignment", None):
        sets.append(f"assignment={json.dumps(args.assignment)}")
    return sets


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        spec = ExperimentSpec(args.command, args.config, args.out, list(args.overrides) + _shorthand(args))
        if args.command == "placement":
            doc = run_placement(spec)
            print(json.dumps({"dims": doc["dims"], "elevators": doc["elevators"]}))
        elif args.command == "optimize":
            archive = run_optimize(spec)
            print(format_table([{"variance": s.objectives.variance, "avg_distance": s.objectives.avg_distance,
                                 "mean_subset": sum(map(len, s.assignment)) / len(s.assignment)} for s in archive],
                               ["variance", "avg_distance", "mean_subset"]))
        elif args.command == "simulate":
            doc = run_simulate(spec, per_cycle=args.per_cycle)
            m = doc["metrics"]
            print(format_table([{k: m[k] for k in ("avg_latency", "delivered", "injected", "throughput",
                                                   "energy_per_flit")}],
                               ["avg_latency", "delivered", "injected", "throughput", "energy_per_flit"]))
        elif args.command == "sweep":
            rows = run_sweep(spec, over=args.over, values=args.values)
            cols = ["sweep_key", "sweep_value", "avg_latency", "energy_per_flit", "throughput", "max_elevator_load"]
            print(format_table(rows, cols))
        elif args.command == "compare":
            rows = run_compare(spec)
            print(format_table(rows, COMPARE_COLUMNS))
        elif args.command == "pipeline":
            res = run_pipeline(spec)
            print(res["metrics"].to_json())
    except StageError as exc:
        log.error("%s", exc)
        return 1
    except (Exception, KeyboardInterrupt) as exc:  # noqa: BLE001 - report and exit nonzero
        log.error("%s: %s", type(exc).__name__, exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
