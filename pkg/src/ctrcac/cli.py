"""Command-line interface: ``ctrcac run | tune | presets``.

Exit codes are 0 on completion (a diverged simulation still completes),
2 for unreadable or schema-invalid scenarios, 3 for semantically invalid
scenarios or options and 4 for file-system failures.
"""

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path

from .pso import pso_optimize, scenario_search, score_scenario
from .scenario import (
    ScenarioError,
    build_system,
    load_scenario,
    preset_names,
    scenario_json_schema,
)
from .simulate import compute_metrics, integrate
from .validation import ConfigurationError

OUTPUT_ENV = "CTRCAC_OUTPUT_DIR"
DEFAULT_OUTPUT = "ctrcac-output"

EXIT_OK, EXIT_PARSE, EXIT_SEMANTIC, EXIT_IO = 0, 2, 3, 4

TIMESERIES_FILE = "timeseries.csv"
METRICS_JSON = "metrics.json"
METRICS_TXT = "metrics.txt"
ECHO_FILE = "scenario.yaml"
PLOT_FILE = "plot_timeseries.py"
HISTORY_FILE = "tune_history.csv"
BEST_FILE = "tune_best.json"

_PLOT_TEMPLATE = '''"""Plot the columns of {csv} (generated by ctrcac run)."""
import csv
import sys
from pathlib import Path

import matplotlib.pyplot as plt

here = Path(__file__).resolve().parent
with open(here / "{csv}", newline="") as fh:
    rows = list(csv.reader(fh))
names, data = rows[0], [[float(v) for v in r] for r in rows[1:]]
cols = dict(zip(names, zip(*data)))
t = cols.pop("t")
groups = {{}}
for name in cols:
    groups.setdefault(name.split("_")[0], []).append(name)
fig, axes = plt.subplots(len(groups), 1, sharex=True, figsize=(8, 2 * len(groups)))
for ax, (key, members) in zip(getattr(axes, "flat", [axes]), groups.items()):
    for name in members:
        ax.plot(t, cols[name], label=name)
    ax.legend(fontsize="small", loc="best")
axes_last = list(getattr(axes, "flat", [axes]))[-1]
axes_last.set_xlabel("t [s]")
fig.tight_layout()
if len(sys.argv) > 1:
    fig.savefig(sys.argv[1])
else:
    plt.show()
'''


def output_dir(cli_value, scenario):
    """``--out``, then the scenario's ``outputs.dir``, then the env var."""
    for candidate in (cli_value, scenario.outputs.dir, os.environ.get(OUTPUT_ENV)):
        if candidate:
            return Path(candidate)
    return Path(DEFAULT_OUTPUT)


def write_csv(path, columns):
    names = list(columns)
    data = [columns[n] for n in names]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in zip(*data):
            w.writerow(["%.17g" % v for v in row])


def _json_number(v):
    # JSON has no inf/nan; a diverged run may produce either
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def _metrics_text(name, metrics):
    lines = [f"scenario: {name}"]
    for key, val in metrics.items():
        lines.append(f"{key}: {val}")
    return "\n".join(lines) + "\n"


def run_command(scenario_path, out=None, plot=False):
    scn = load_scenario(scenario_path)
    system = build_system(scn)
    log = integrate(system, cfg=scn.sim_config())
    metrics = {k: _json_number(v) for k, v in compute_metrics(log).as_dict().items()}
    metrics["horizon"] = scn.sim.T
    metrics["n_samples"] = int(len(log.t))
    d = output_dir(out, scn)
    d.mkdir(parents=True, exist_ok=True)
    write_csv(d / TIMESERIES_FILE, log.columns())
    (d / METRICS_JSON).write_text(json.dumps(metrics, indent=2) + "\n")
    (d / METRICS_TXT).write_text(_metrics_text(scn.name, metrics))
    (d / ECHO_FILE).write_text(scn.to_yaml())
    if plot or scn.outputs.plot_script:
        (d / PLOT_FILE).write_text(_PLOT_TEMPLATE.format(csv=TIMESERIES_FILE))
    status = f"diverged at t = {metrics['t_diverge']:.6g} s" if metrics["diverged"] else "completed"
    print(f"{scn.name}: {status}; IAE = {metrics['iae']}, final error = {metrics['final_error']}")
    print(f"wrote {d}")
    return EXIT_OK


def tune_command(scenario_path, swarm=None, iters=None, seed=None, out=None):
    scn = load_scenario(scenario_path)
    space, cfg = scenario_search(scn, swarm, iters, seed)
    lo, hi = space.lower, space.upper
    print(f"bounds: log10 P0 in [{lo[0]:g}, {hi[0]:g}], p_f in [{lo[1]:g}, {hi[1]:g}]")
    print(f"swarm size {cfg.swarm_size}, {cfg.iterations} iterations, seed {cfg.seed}")
    res = pso_optimize(lambda p: score_scenario(scn, p), space, cfg)
    d = output_dir(out, scn)
    d.mkdir(parents=True, exist_ok=True)
    rows = res.history_rows()
    cols = ["iteration", "particle", *space.names, "score", "best_score"]
    write_csv(d / HISTORY_FILE, {c: [r[i] for r in rows] for i, c in enumerate(cols)})
    best = dict(zip(space.names, map(float, res.best_position)))
    best["P0"] = 10.0 ** best["log10_P0"]
    best["score"] = float(res.best_score)
    (d / BEST_FILE).write_text(json.dumps(best, indent=2) + "\n")
    print(f"best: P0 = 10^{best['log10_P0']:.4g}, p_f = {best['p_f']:.4g}, score = {best['score']:.6g}")
    print(f"wrote {d}")
    return EXIT_OK


def presets_command():
    for name in preset_names():
        scn = load_scenario(name)
        print(f"{name:26s} {scn.description}")
    return EXIT_OK


def schema_command():
    print(json.dumps(scenario_json_schema(), indent=2))
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="ctrcac", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="simulate a scenario file or preset")
    r.add_argument("scenario")
    r.add_argument("--out", help=f"output directory (default: ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT})")
    r.add_argument("--plot-script", action="store_true", help="also write a matplotlib script")
    t = sub.add_parser("tune", help="particle swarm search over (log10 P0, p_f)")
    t.add_argument("scenario")
    t.add_argument("--swarm", type=int)
    t.add_argument("--iters", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--out")
    sub.add_parser("presets", help="list bundled scenarios")
    sub.add_parser("schema", help="print the scenario JSON schema")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return run_command(args.scenario, args.out, args.plot_script)
        if args.command == "tune":
            return tune_command(args.scenario, args.swarm, args.iters, args.seed, args.out)
        if args.command == "presets":
            return presets_command()
        return schema_command()
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SEMANTIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
