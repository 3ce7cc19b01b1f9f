"""Batch command-line surface: simulate | fit | ghcn-prepare | table.

Every run resolves its configuration from built-in defaults, then an
optional key=value config file, then explicit flags (flags win), and
records the resolved values plus input hashes in a manifest.json next to
the artifacts. Artifacts are staged in a temporary directory and moved
into place only when the command succeeds, so failures leave no partial
outputs. Wall-clock timing lives only in the manifest: with the seed
fixed, the artifact files themselves are byte-for-byte reproducible.

Exit codes: 0 success (a non-converged fit is still a success), 2 usage,
3 data error, 4 numerical failure.
"""

import argparse
import hashlib
import json
import os
import pathlib
import shutil
import sys
import tempfile
import time

import numpy as np

from . import __version__
from .covariance import CovarianceParams
from .ghcn import (EmptySelectionError, InconsistentLengthError, IngestConfig,
                   MalformedLineError, build_dataset, parse_dly,
                   parse_stations, read_dataset_bundle,
                   select_complete_stations, write_dataset_bundle)
from .likelihood import (CoeffOptions, FitConfig, GammaOptions,
                         NotPositiveDefiniteError, empirical_correlation,
                         fit_alternating, fitted_correlation, procrustes_align)
from .monotone import DomainError
from .simulate import (SCENARIO_KINDS, ScenarioSpec, deformed_grid,
                       run_scenario_data, run_scenario_replicates, table_row)
from .wavelets import WaveletFamily

OUTPUT_ROOT_ENV = "WAVEDEFORM_OUTPUT_ROOT"

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

TABLE_COLUMNS = ("scenario", "family", "J", "nu", "theta", "nugget",
                 "mse", "converged", "seconds")

_FAMILY_NAMES = {
    "mexican-hat": WaveletFamily.MEXICAN_HAT,
    "mexican_hat": WaveletFamily.MEXICAN_HAT,
    "shannon": WaveletFamily.SHANNON,
}


class DataError(Exception):
    """Input files or their contents are unusable."""


def _parse_family(name):
    try:
        return _FAMILY_NAMES[name.lower()]
    except KeyError:
        raise DataError(f"unknown wavelet family {name!r}; "
                        "choose mexican-hat or shannon") from None


def _sha256_file(path):
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _load_config_file(path):
    """Parse a key = value text file; values are JSON scalars or strings."""
    resolved = {}
    with open(path) as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DataError(f"{path}:{lineno}: expected key = value")
            key, _, value = line.partition("=")
            value = value.strip()
            try:
                resolved[key.strip().replace("-", "_")] = json.loads(value)
            except json.JSONDecodeError:
                resolved[key.strip().replace("-", "_")] = value
    return resolved


def _resolve_options(args, defaults):
    """defaults < config file < explicit flags; returns a plain dict."""
    resolved = dict(defaults)
    if getattr(args, "config", None):
        file_values = _load_config_file(args.config)
        unknown = set(file_values) - set(defaults)
        if unknown:
            raise DataError(
                f"config file sets unknown key(s): {', '.join(sorted(unknown))}")
        resolved.update(file_values)
    for key in defaults:
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            resolved[key] = flag_value
    return resolved


def _default_out_dir(tag):
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if not root:
        raise DataError(
            f"--out not given and {OUTPUT_ROOT_ENV} is not set")
    return str(pathlib.Path(root) / tag)


class ArtifactSet:
    """Stages artifact files and commits them atomically with a manifest."""

    def __init__(self, out_dir):
        self.out_dir = pathlib.Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.staging = pathlib.Path(
            tempfile.mkdtemp(prefix=".staging-", dir=self.out_dir))
        self.names = []

    def write_text(self, name, text):
        (self.staging / name).write_text(text)
        self.names.append(name)

    def write_matrix(self, name, matrix):
        np.savetxt(self.staging / name, np.asarray(matrix, dtype=np.float64),
                   delimiter=",", fmt="%.17g")
        self.names.append(name)

    def adopt_bundle(self, writer):
        """Run a bundle writer against the staging directory."""
        before = {p.name for p in self.staging.iterdir()}
        writer(self.staging)
        self.names.extend(sorted(
            p.name for p in self.staging.iterdir()
            if p.name not in before and p.is_file()))

    def commit(self, manifest):
        manifest = dict(manifest)
        manifest["artifacts"] = {
            name: _sha256_file(self.staging / name) for name in sorted(self.names)}
        manifest["tool_version"] = __version__
        (self.staging / "manifest.json").write_text(
            json.dumps(manifest, sort_keys=True, indent=2) + "\n")
        for name in self.names + ["manifest.json"]:
            os.replace(self.staging / name, self.out_dir / name)
        shutil.rmtree(self.staging, ignore_errors=True)

    def abort(self):
        shutil.rmtree(self.staging, ignore_errors=True)


def _run_with_artifacts(out_dir, body, manifest_base):
    """Execute ``body(artifacts)``; commit on success, clean up on failure."""
    artifacts = ArtifactSet(out_dir)
    started = time.time()
    try:
        extra = body(artifacts) or {}
    except BaseException:
        artifacts.abort()
        raise
    manifest = dict(manifest_base)
    manifest.update(extra)
    manifest["wall_clock_seconds"] = time.time() - started
    artifacts.commit(manifest)
    return artifacts.out_dir


def _format_number(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.5f}"
    return "" if value is None else str(value)


def _rows_to_csv(rows, columns):
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(_format_number(row.get(col)) for col in columns))
    return "\n".join(lines) + "\n"


def _rows_to_markdown(rows, columns):
    lines = ["| " + " | ".join(columns) + " |",
             "| " + " | ".join("---" for _ in columns) + " |"]
    for row in rows:
        lines.append("| " + " | ".join(
            _format_number(row.get(col)) for col in columns) + " |")
    return "\n".join(lines) + "\n"


# simulate ------------------------------------------------------------

SIMULATE_DEFAULTS = {
    "kind": None,
    "n": 50,
    "T": 2048,
    "nu": 1.0,
    "theta": 0.25,
    "nugget": 0.05,
    "seed": 0,
    "grid_size": 21,
}


def cmd_simulate(args):
    options = _resolve_options(args, SIMULATE_DEFAULTS)
    if options["kind"] not in SCENARIO_KINDS:
        raise DataError(f"--kind must be one of {', '.join(SCENARIO_KINDS)}")
    spec = ScenarioSpec(
        kind=options["kind"], n=int(options["n"]), n_times=int(options["T"]),
        params=CovarianceParams(nu=options["nu"], theta=options["theta"],
                                nugget=options["nugget"]),
        seed=int(options["seed"]))
    out_dir = args.out or _default_out_dir(
        f"simulate-{spec.kind}-seed{spec.seed}")

    def body(artifacts):
        run = run_scenario_data(spec)
        dataset = run.dataset()
        artifacts.adopt_bundle(lambda d: write_dataset_bundle(d, dataset))
        ids = dataset.site_ids or tuple(
            f"site{i:04d}" for i in range(dataset.n_sites))
        lines = ["site_id,y1,y2"]
        for sid, (y1, y2) in zip(ids, run.true_deformed):
            lines.append(f"{sid},{y1:.17g},{y2:.17g}")
        artifacts.write_text("true_deformed.csv", "\n".join(lines) + "\n")
        artifacts.write_matrix("empirical_corr.csv", run.empirical_corr)
        grid_size = int(options["grid_size"])
        if grid_size:
            grid, warped = deformed_grid(spec.kind, grid_size)
            glines = ["x1,x2,y1,y2"]
            for (x1, x2), (y1, y2) in zip(grid, warped):
                glines.append(f"{x1:.17g},{x2:.17g},{y1:.17g},{y2:.17g}")
            artifacts.write_text("deformed_grid.csv", "\n".join(glines) + "\n")
        print(f"simulated {spec.kind}: n={spec.n} T={spec.n_times} "
              f"seed={spec.seed} -> {artifacts.out_dir}")

    _run_with_artifacts(out_dir, body, {
        "subcommand": "simulate",
        "config": {k: options[k] for k in sorted(options)},
        "inputs": {},
        "seed": spec.seed,
    })
    return 0


# fit -----------------------------------------------------------------

FIT_DEFAULTS = {
    "family": None,
    "J": None,
    "variant": "single",
    "seed": 0,
    "init_scale": 0.1,
    "init_cross_slope": -2.0,
    "restarts": 1,
    "max_outer": 100,
    "rel_tol": 1e-6,
    "gamma_max_evals": 400,
    "coeff_max_iters": 60,
}


def _bundle_input_hashes(data_dir):
    data_dir = pathlib.Path(data_dir)
    hashes = {}
    for name in ("locations.csv", "observations.csv", "normalization.json"):
        path = data_dir / name
        if path.exists():
            hashes[str(path)] = _sha256_file(path)
    return hashes


def cmd_fit(args):
    options = _resolve_options(args, FIT_DEFAULTS)
    if options["family"] is None or options["J"] is None:
        raise DataError("--family and --J are required")
    family = _parse_family(str(options["family"]))
    data_dir = pathlib.Path(args.data)
    if not (data_dir / "locations.csv").exists():
        raise DataError(f"no dataset bundle at {data_dir} (locations.csv missing)")
    dataset, _ = read_dataset_bundle(data_dir)
    config = FitConfig(
        family=family,
        max_level=int(options["J"]),
        variant=str(options["variant"]),
        init_seed=int(options["seed"]),
        init_scale=float(options["init_scale"]),
        init_cross_log_slope=float(options["init_cross_slope"]),
        outer_max_iters=int(options["max_outer"]),
        outer_rel_tol=float(options["rel_tol"]),
        restarts=int(options["restarts"]),
        gamma_options=GammaOptions(max_evals=int(options["gamma_max_evals"])),
        coeff_options=CoeffOptions(max_iters=int(options["coeff_max_iters"])),
    )
    out_dir = args.out or _default_out_dir(
        f"fit-{family.value}-J{config.max_level}-seed{config.init_seed}")

    def body(artifacts):
        started = time.perf_counter()
        result = fit_alternating(dataset, config)
        fit_seconds = time.perf_counter() - started
        artifacts.write_text("fit_result.json", result.to_json(indent=2) + "\n")

        ids = dataset.site_ids or tuple(
            f"site{i:04d}" for i in range(dataset.n_sites))
        aligned = procrustes_align(result.deformed_coords, dataset.locations)
        for name, coords in (("deformed_coords.csv", result.deformed_coords),
                             ("deformed_coords_aligned.csv", aligned)):
            lines = ["site_id,y1,y2"]
            for sid, (y1, y2) in zip(ids, coords):
                lines.append(f"{sid},{y1:.17g},{y2:.17g}")
            artifacts.write_text(name, "\n".join(lines) + "\n")

        emp = empirical_correlation(dataset.observations)
        fit_corr = fitted_correlation(result.deformed_coords,
                                      result.params.theta)
        lines = ["i,j,empirical,fitted"]
        n = dataset.n_sites
        for i in range(n):
            for j in range(i + 1, n):
                lines.append(f"{i},{j},{emp[i, j]:.17g},{fit_corr[i, j]:.17g}")
        artifacts.write_text("corr_scatter.csv", "\n".join(lines) + "\n")

        row = table_row(str(data_dir), result)
        print(",".join(_format_number(row.get(col)) for col in TABLE_COLUMNS))
        return {"fit_seconds": fit_seconds,
                "converged": bool(result.converged)}

    _run_with_artifacts(out_dir, body, {
        "subcommand": "fit",
        "config": {k: options[k] for k in sorted(options)},
        "inputs": _bundle_input_hashes(data_dir),
        "seed": config.init_seed,
    })
    return 0


# ghcn-prepare --------------------------------------------------------

GHCN_DEFAULTS = {
    "element": "TMAX",
    "from_year": 1980,
    "to_year": 1999,
    "states": None,
    "keep_flagged": False,
}


def _collect_dly_paths(inputs):
    paths = []
    for item in inputs:
        path = pathlib.Path(item)
        if path.is_dir():
            paths.extend(sorted(path.glob("*.dly")))
        elif path.exists():
            paths.append(path)
        else:
            raise DataError(f"no such file or directory: {path}")
    if not paths:
        raise DataError("no .dly files found under the given inputs")
    return paths


def cmd_ghcn_prepare(args):
    options = _resolve_options(args, GHCN_DEFAULTS)
    states = options["states"]
    if isinstance(states, str):
        states = tuple(s.strip() for s in states.split(",") if s.strip())
    if states:
        bad = [s for s in states if not (len(s) == 2 and s.isalpha())]
        if bad:
            raise DataError(f"state codes must be two letters, got {bad}")
    config = IngestConfig(
        element=str(options["element"]),
        start_year=int(options["from_year"]),
        end_year=int(options["to_year"]),
        state_filter=tuple(states) if states else None,
        drop_flagged=not bool(options["keep_flagged"]),
    )
    dly_paths = _collect_dly_paths(args.dly)
    stations_path = pathlib.Path(args.stations)
    out_dir = args.out or _default_out_dir(
        f"ghcn-{config.element}-{config.start_year}-{config.end_year}")

    def body(artifacts):
        records = []
        for path in dly_paths:
            records.extend(parse_dly(path, element=config.element,
                                     drop_flagged=config.drop_flagged))
        meta = parse_stations(stations_path)
        selected = select_complete_stations(records, meta, config)
        dataset, normalization = build_dataset(selected, config)
        artifacts.adopt_bundle(
            lambda d: write_dataset_bundle(d, dataset, normalization))
        print(f"selected {dataset.n_sites} station(s) with complete "
              f"{config.element} {config.start_year}-{config.end_year} "
              f"({dataset.n_times} days) -> {artifacts.out_dir}")
        return {"n_stations": dataset.n_sites, "n_days": dataset.n_times}

    inputs = {str(p): _sha256_file(p) for p in dly_paths}
    inputs[str(stations_path)] = _sha256_file(stations_path)
    _run_with_artifacts(out_dir, body, {
        "subcommand": "ghcn-prepare",
        "config": {k: options[k] for k in sorted(options)},
        "inputs": inputs,
        "seed": None,
    })
    return 0


# table ---------------------------------------------------------------

TABLE_DEFAULTS = {
    "format": "csv",
    "families": "mexican-hat,shannon",
    "levels": "3",
    "scenario": None,
    "replicates": 1,
    "n": 50,
    "T": 2048,
    "seed": 0,
    "threads": 1,
    "fit_seed": 0,
    "restarts": 1,
}


def _result_row_from_json(path):
    with open(path) as handle:
        payload = json.load(handle)
    return {
        "scenario": None,
        "family": payload["family"],
        "J": payload["J"],
        "nu": payload["params"]["nu"],
        "theta": payload["params"]["theta"],
        "nugget": payload["params"]["nugget"],
        "mse": payload["mse"],
        "converged": payload["converged"],
        "seconds": None,
    }


def _fit_configs_from(options):
    families = [_parse_family(f.strip())
                for f in str(options["families"]).split(",") if f.strip()]
    levels = [int(x) for x in str(options["levels"]).split(",") if x.strip()]
    if not families or not levels:
        raise DataError("--families and --levels must be non-empty")
    return [FitConfig(family=fam, max_level=lev,
                      init_seed=int(options["fit_seed"]),
                      restarts=int(options["restarts"]))
            for fam in families for lev in levels]


def cmd_table(args):
    options = _resolve_options(args, TABLE_DEFAULTS)
    rows = []
    summaries = []
    if options["scenario"]:
        spec = ScenarioSpec(kind=str(options["scenario"]), n=int(options["n"]),
                            n_times=int(options["T"]),
                            seed=int(options["seed"]))
        configs = _fit_configs_from(options)
        rep_rows, summaries = run_scenario_replicates(
            spec, configs, replicates=int(options["replicates"]),
            threads=int(options["threads"]))
        for row in rep_rows:
            row = dict(row)
            row["seconds"] = None
            rows.append(row)
    else:
        seen = set()
        for path in args.results:
            digest = _sha256_file(path)
            if digest in seen:
                continue
            seen.add(digest)
            rows.append(_result_row_from_json(path))

    columns = TABLE_COLUMNS if options["scenario"] else TABLE_COLUMNS[1:-1]
    render = _rows_to_markdown if options["format"] == "markdown" else _rows_to_csv
    text = render(rows, columns)
    if summaries:
        text += render(summaries, ("scenario", "family", "J", "replicates",
                                   "mse_mean", "mse_sd", "n_converged"))
    if args.out:
        path = pathlib.Path(args.out)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(text)
        os.replace(tmp, path)
    else:
        sys.stdout.write(text)
    return 0


# parser --------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="wavedeform",
        description="Deformation-based nonstationary covariance estimation")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    sim = sub.add_parser("simulate", help="simulate a nonstationary field")
    sim.add_argument("--kind", choices=SCENARIO_KINDS)
    sim.add_argument("--n", type=int)
    sim.add_argument("--T", type=int)
    sim.add_argument("--nu", type=float)
    sim.add_argument("--theta", type=float)
    sim.add_argument("--nugget", type=float)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--grid-size", type=int, dest="grid_size")
    sim.add_argument("--out")
    sim.add_argument("--config")
    sim.set_defaults(func=cmd_simulate)

    fit = sub.add_parser("fit", help="fit the deformation model to a bundle")
    fit.add_argument("--data", required=True)
    fit.add_argument("--family")
    fit.add_argument("--J", type=int, dest="J")
    fit.add_argument("--variant", choices=("single", "double"))
    fit.add_argument("--seed", type=int)
    fit.add_argument("--init-scale", type=float, dest="init_scale")
    fit.add_argument("--init-cross-slope", type=float, dest="init_cross_slope",
                     help="starting log-slope of the cross components")
    fit.add_argument("--restarts", type=int)
    fit.add_argument("--max-outer", type=int, dest="max_outer")
    fit.add_argument("--rel-tol", type=float, dest="rel_tol")
    fit.add_argument("--gamma-max-evals", type=int, dest="gamma_max_evals")
    fit.add_argument("--coeff-max-iters", type=int, dest="coeff_max_iters")
    fit.add_argument("--out")
    fit.add_argument("--config")
    fit.set_defaults(func=cmd_fit)

    ghcn = sub.add_parser("ghcn-prepare",
                          help="build a dataset bundle from archive files")
    ghcn.add_argument("--dly", nargs="+", required=True,
                      help="`.dly` files or directories containing them")
    ghcn.add_argument("--stations", required=True,
                      help="fixed-width stations metadata file")
    ghcn.add_argument("--element")
    ghcn.add_argument("--from", type=int, dest="from_year")
    ghcn.add_argument("--to", type=int, dest="to_year")
    ghcn.add_argument("--states")
    ghcn.add_argument("--keep-flagged", action="store_const", const=True,
                      dest="keep_flagged")
    ghcn.add_argument("--out")
    ghcn.add_argument("--config")
    ghcn.set_defaults(func=cmd_ghcn_prepare)

    table = sub.add_parser("table", help="aggregate fit results into a table")
    table.add_argument("results", nargs="*",
                       help="fit_result.json paths to aggregate")
    table.add_argument("--scenario", choices=SCENARIO_KINDS,
                       help="simulate-and-fit mode instead of aggregation")
    table.add_argument("--replicates", type=int)
    table.add_argument("--families")
    table.add_argument("--levels")
    table.add_argument("--n", type=int)
    table.add_argument("--T", type=int)
    table.add_argument("--seed", type=int)
    table.add_argument("--fit-seed", type=int, dest="fit_seed")
    table.add_argument("--restarts", type=int)
    table.add_argument("--threads", type=int)
    table.add_argument("--format", choices=("csv", "markdown"))
    table.add_argument("--out")
    table.add_argument("--config")
    table.set_defaults(func=cmd_table)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (NotPositiveDefiniteError, FloatingPointError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, DomainError, MalformedLineError, EmptySelectionError,
            InconsistentLengthError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
