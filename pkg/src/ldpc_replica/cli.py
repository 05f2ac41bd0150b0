"""Command-line surface.

Every command writes a RunManifest JSON next to its main output recording the
command, full parameter set, seeds, tool version, channel spec hash and the
output file hashes; ``rerun`` re-executes a manifest and reproduces the CSV
outputs byte-for-byte.

Exit codes: 0 success, 2 parse/validation, 3 convergence failure, 4 I/O.
"""

import hashlib
import json
import sys
import time

import click
import numpy as np

from . import __version__
from .channels import (
    MemorylessChannelSpec,
    channel_spec_hash,
    check_irreducible_q0,
    classify,
    embed_memoryless,
    frozen_solution_exists,
    load_channel_spec,
    make_dec,
    stationary_left_message,
)
from .dec import (
    SolverConfig,
    dec_entropy_curve,
    dec_bp_threshold,
    dec_map_threshold_info,
    entropy_curve_to_csv,
    fmt12,
)
from .ensemble import new_ensemble
from .errors import ConvergenceError, ValidationError
from .markov_population import (
    export_markov_snapshot,
    rs_entropy_markov,
    run_markov_population_dynamics,
)
from .population import (
    export_population_snapshot,
    rs_entropy_memoryless,
    run_population_dynamics,
)
from .simulator import sim_stats_to_csv, simulate_rate

PLOT_SCRIPT = """\
#!/usr/bin/env python3
\"\"\"Plot an entropy curve CSV: erasure level vs conditional entropy per symbol.\"\"\"
import csv
import sys

import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else {csv_path!r}
eps, h_rep, h_non = [], [], []
with open(path) as fh:
    for row in csv.DictReader(fh):
        eps.append(float(row["eps"]))
        h_rep.append(float(row["h_reported"]))
        h_non.append(float(row["h_nontrivial"]))
fig, ax = plt.subplots()
ax.plot(eps, h_rep, label="reported (MAP choice)")
ax.plot(eps, h_non, "--", label="nontrivial branch")
ax.set_xlabel("channel erasure probability")
ax.set_ylabel("conditional entropy per symbol [bits]")
ax.legend()
ax.grid(True, alpha=0.3)
fig.savefig(path + ".png", dpi=150)
print("wrote", path + ".png")
"""


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(65536), b""):
            h.update(block)
    return h.hexdigest()


def _write_manifest(command, params, outputs, extras, duration, manifest_path):
    manifest = {
        "command": command,
        "params": params,
        "seeds": {k: v for k, v in params.items() if "seed" in k},
        "version": __version__,
        "channel_spec_hash": extras.pop("channel_spec_hash", None),
        "duration_s": duration,
        "outputs": [{"path": str(p), "sha256": _sha256(p)} for p in outputs],
        "extras": extras,
    }
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return manifest_path


def _execute(command, params):
    start = time.monotonic()
    outputs, extras = _REGISTRY[command](params)
    duration = time.monotonic() - start
    out = params.get("out")
    manifest_path = f"{out}.manifest.json" if out else f"{command}.manifest.json"
    _write_manifest(command, params, outputs, extras, duration, manifest_path)
    click.echo(f"manifest: {manifest_path}")


def _channel_from_params(p):
    """Either a spec file or the --eps dicode-erasure shortcut."""
    has_spec = p.get("spec") is not None
    has_eps = p.get("eps") is not None
    if has_spec == has_eps:
        raise ValidationError("give exactly one of --spec and --eps")
    if has_spec:
        return load_channel_spec(p["spec"])
    return make_dec(p["eps"])


def _run_dec_curve(p):
    e = new_ensemble(p["l"], p["r"])
    cfg = SolverConfig(tol=p["tol"], max_iter=p["max_iter"])
    if p["steps"] == 1:
        grid = [p["eps_start"]]
    else:
        grid = np.linspace(p["eps_start"], p["eps_end"], p["steps"])
    points = dec_entropy_curve(e, grid, cfg)
    with open(p["out"], "w", newline="") as fh:
        entropy_curve_to_csv(points, fh)
    plot_path = f"{p['out']}.plot.py"
    with open(plot_path, "w") as fh:
        fh.write(PLOT_SCRIPT.format(csv_path=p["out"]))
    click.echo(f"wrote {p['out']} ({len(points)} points) and {plot_path}")
    return [p["out"], plot_path], {}


def _run_threshold(p):
    e = new_ensemble(p["l"], p["r"])
    if p["kind"] == "bp":
        value = dec_bp_threshold(e, p["tol"])
        extras = {"threshold": value}
    else:
        info = dec_map_threshold_info(e, p["tol"])
        value = info.value
        extras = {"threshold": value, "degenerate": info.degenerate,
                  "bp_threshold": info.bp_value}
    click.echo(f"{value:.6f}")
    outputs = []
    if p.get("out"):
        with open(p["out"], "w") as fh:
            fh.write(f"{value:.6f}\n")
        outputs.append(p["out"])
    return outputs, extras


def _run_de(p):
    spec = _channel_from_params(p)
    e = new_ensemble(p["l"], p["r"])
    meta = {
        "pop_size": p["pop_size"], "sweeps": p["sweeps"], "seed": p["seed"],
        "channel_spec_hash": channel_spec_hash(spec),
    }
    workers = p.get("workers", 1)
    if isinstance(spec, MemorylessChannelSpec):
        pop = run_population_dynamics(e, spec, p["pop_size"], p["sweeps"], p["seed"],
                                      workers=workers)
        est = rs_entropy_memoryless(pop, e, spec, p["mc_samples"], p["seed"])
        export_population_snapshot(pop, p["out"], meta)
    else:
        pop = run_markov_population_dynamics(spec, e, p["pop_size"], p["sweeps"], p["seed"],
                                             workers=workers)
        est = rs_entropy_markov(pop, spec, e, p["mc_samples"], p["seed"])
        export_markov_snapshot(pop, p["out"], meta)
    click.echo(f"conditional entropy = {est.value:.6f} +/- {est.stderr:.6f} bits/symbol")
    extras = {"entropy": est.value, "entropy_stderr": est.stderr,
              "channel_spec_hash": meta["channel_spec_hash"]}
    return [p["out"], f"{p['out']}.meta.json"], extras


def _run_simulate(p):
    spec = _channel_from_params(p)
    if isinstance(spec, MemorylessChannelSpec):
        spec = embed_memoryless(spec)
    e = new_ensemble(p["l"], p["r"])
    param = p["eps"] if p.get("eps") is not None else float("nan")
    stats = simulate_rate(e, p["n"], spec, p["trials"], p["max_iter"], p["seed"],
                          param=param, workers=p.get("workers", 1))
    with open(p["out"], "w", newline="") as fh:
        sim_stats_to_csv(stats, fh)
    if p.get("verbose"):
        for t, (err, it) in enumerate(zip(stats.errors_per_trial, stats.iters_per_trial)):
            click.echo(f"trial {t}: residual {int(err) if err == int(err) else err}"
                       f" / {stats.n}, iterations {int(it)}")
    click.echo(
        f"mean residual rate = {fmt12(stats.mean_rate)} "
        f"+/- {fmt12(stats.std_err)} over {stats.trials} trials ({stats.metric})"
    )
    return [p["out"]], {"mean_rate": stats.mean_rate, "std_err": stats.std_err,
                        "channel_spec_hash": channel_spec_hash(spec)}


def _run_channel_check(p):
    spec = load_channel_spec(p["spec"])
    memoryless = isinstance(spec, MemorylessChannelSpec)
    markov = embed_memoryless(spec) if memoryless else spec
    cls = classify(markov)
    irreducible = check_irreducible_q0(markov)
    frozen, witness = frozen_solution_exists(markov)
    m_ls = stationary_left_message(markov)
    click.echo(f"spec: {p['spec']}{' (memoryless, single-state embedding)' if memoryless else ''}")
    click.echo(f"classification: {cls.value}")
    click.echo(f"state chain irreducible: {irreducible}")
    click.echo(f"frozen solution exists: {frozen}")
    if witness is not None:
        click.echo(
            f"  witness: y={witness.y} kind={witness.kind} "
            f"fixed={witness.fixed} offenders={witness.offenders}"
        )
    click.echo("stationary left message: ["
               + ", ".join(fmt12(v) for v in m_ls) + "]")
    return [], {
        "classification": cls.value,
        "irreducible": irreducible,
        "frozen_exists": frozen,
        "m_Ls": [float(v) for v in m_ls],
        "channel_spec_hash": channel_spec_hash(spec),
    }


_REGISTRY = {
    "dec-curve": _run_dec_curve,
    "threshold": _run_threshold,
    "de": _run_de,
    "simulate": _run_simulate,
    "channel-check": _run_channel_check,
}


@click.group()
@click.version_option(version=__version__)
def cli():
    """Replica-symmetric entropy and threshold solvers for regular LDPC codes
    over memoryless and Markov channels."""


@cli.command("dec-curve")
@click.option("--l", type=int, required=True)
@click.option("--r", type=int, required=True)
@click.option("--eps-start", type=float, default=0.0, show_default=True)
@click.option("--eps-end", type=float, default=1.0, show_default=True)
@click.option("--steps", type=int, default=201, show_default=True)
@click.option("--tol", type=float, default=1e-12, show_default=True)
@click.option("--max-iter", type=int, default=1_000_000, show_default=True)
@click.option("--out", type=click.Path(), required=True)
def cmd_dec_curve(**params):
    """Entropy curve of the dicode erasure channel, plus a plot script."""
    if not 0.0 <= params["eps_start"] <= 1.0 or not 0.0 <= params["eps_end"] <= 1.0:
        raise ValidationError("eps range must lie inside [0, 1]")
    if params["steps"] > 1 and params["eps_start"] >= params["eps_end"]:
        raise ValidationError("eps-start must be below eps-end")
    _execute("dec-curve", params)


@cli.command("threshold")
@click.option("--l", type=int, required=True)
@click.option("--r", type=int, required=True)
@click.option("--kind", type=click.Choice(["bp", "map"]), required=True)
@click.option("--tol", type=float, default=1e-6, show_default=True)
@click.option("--out", type=click.Path(), default=None)
def cmd_threshold(**params):
    """BP or MAP threshold of the dicode erasure channel (6 decimals)."""
    _execute("threshold", params)


@cli.command("de")
@click.option("--spec", type=click.Path(exists=True), default=None,
              help="Channel spec file; alternative to --eps.")
@click.option("--eps", type=float, default=None,
              help="Dicode-erasure shortcut instead of a spec file.")
@click.option("--l", type=int, required=True)
@click.option("--r", type=int, required=True)
@click.option("--pop-size", type=int, default=20_000, show_default=True)
@click.option("--sweeps", type=int, default=200, show_default=True)
@click.option("--mc-samples", type=int, default=100_000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--workers", type=int, default=1, show_default=True,
              envvar="LDPC_REPLICA_WORKERS")
@click.option("--out", type=click.Path(), required=True)
def cmd_de(**params):
    """Population-dynamics density evolution for a channel spec file."""
    _execute("de", params)


@cli.command("simulate")
@click.option("--spec", type=click.Path(exists=True), default=None,
              help="Channel spec file; alternative to --eps.")
@click.option("--eps", type=float, default=None,
              help="Dicode-erasure shortcut instead of a spec file.")
@click.option("--l", type=int, required=True)
@click.option("--r", type=int, required=True)
@click.option("--n", type=int, required=True)
@click.option("--trials", type=int, default=10, show_default=True)
@click.option("--max-iter", type=int, default=500, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--workers", type=int, default=1, show_default=True,
              envvar="LDPC_REPLICA_WORKERS")
@click.option("--verbose", is_flag=True, default=False,
              help="Log one line per decoding trial.")
@click.option("--out", type=click.Path(), required=True)
def cmd_simulate(**params):
    """Finite-N joint BP decoding trials."""
    _execute("simulate", params)


@cli.command("channel-check")
@click.option("--spec", type=click.Path(exists=True), required=True)
def cmd_channel_check(**params):
    """Validate a channel spec and report its structural properties."""
    _execute("channel-check", params)


@cli.command("rerun")
@click.option("--manifest", type=click.Path(exists=True), required=True)
def cmd_rerun(manifest):
    """Re-execute a recorded run; CSV outputs are reproduced byte-exactly."""
    with open(manifest) as fh:
        data = json.load(fh)
    command = data.get("command")
    if command not in _REGISTRY:
        raise ValidationError(f"manifest names unknown command {command!r}")
    _execute(command, data["params"])


def main(argv=None):
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        sys.exit(exc.exit_code)
    except click.ClickException as exc:
        exc.show()
        sys.exit(2)
    except ValidationError as exc:
        click.echo(f"validation error: {exc}", err=True)
        sys.exit(2)
    except ConvergenceError as exc:
        click.echo(f"convergence failure: {exc}", err=True)
        sys.exit(3)
    except OSError as exc:
        click.echo(f"i/o error: {exc}", err=True)
        sys.exit(4)
    sys.exit(0)


if __name__ == "__main__":
    main()
