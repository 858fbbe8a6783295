"""Experiment runner: config-file driven sweeps with CSV/JSON artifacts.

Subcommands:

    starklab run <config.ini> [--jobs N] [--output DIR]
    starklab summarize <dir>

A config is an INI file with named sections (grid, packet, potential,
schedule, scattering, reconstruction, output) and an [experiment] section
selecting the kind: one of propagate, smatrix, reconstruct, ratecheck,
exponents.  Every run writes a manifest.json (config hash, package and
dependency versions, verdicts) next to its CSV artifacts; `summarize`
aggregates manifests without recomputing anything.

Exit codes: 0 all verdicts pass, 1 some verdict failed, 2 configuration or
runtime error.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import math
import os
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigInvalid, MissingArtifacts, StarkLabError
from .exponents import closed_form_problems, optimize_exponent, remainder_exponent
from .grids import PacketProfile, boundary_band_mass, make_grid, make_packet, momentum_expectation, position_expectation
from .potentials import check_thresholds, spec_from_mapping, validate_decay
from .propagators import free_stark, full_propagate
from .reconstruction import (
    ExperimentPlan,
    ReconstructionGrid,
    collect_samples,
    invert,
    make_angle_set,
    rhs_direct,
)
from .scattering import HorizonPolicy, commutator_functional
from .ratelab import LemmaTarget, rate_sweep, report as rate_report

CSV_SCHEMA = "starklab-csv v1"

_KINDS = ("propagate", "smatrix", "reconstruct", "ratecheck", "exponents")


def _fail(msg, field=None):
    raise ConfigInvalid(msg, field=field)


def _floats(text):
    return tuple(float(x) for x in str(text).split(",") if x.strip())


@dataclass
class RunContext:
    config: configparser.ConfigParser
    out_dir: Path
    jobs: int
    seed: int

    def section(self, name, required=True):
        if not self.config.has_section(name):
            if required:
                _fail(f"missing [{name}] section", field=name)
            return {}
        return dict(self.config.items(name))


def _load_config(path: Path) -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    read = cp.read(path)
    if not read:
        _fail(f"cannot read config {path}")
    if not cp.has_section("experiment"):
        _fail("missing [experiment] section", field="experiment")
    kind = cp.get("experiment", "kind", fallback=None)
    if kind not in _KINDS:
        _fail(f"experiment.kind must be one of {_KINDS}, got {kind!r}", field="experiment.kind")
    return cp


def _grid_from(ctx: RunContext):
    sec = ctx.section("grid")
    try:
        return make_grid(
            int(sec.get("n_dims", 2)),
            int(sec.get("points_per_axis", 128)),
            float(sec.get("box_half_width", 50.0)),
        )
    except (StarkLabError, ValueError) as exc:
        _fail(f"grid: {exc}", field="grid")


def _profile_from(ctx: RunContext):
    sec = ctx.section("packet")
    center = _floats(sec.get("center", "0.0, 0.0"))
    return PacketProfile(
        eta=float(sec.get("eta", 1.0)),
        center=center,
        sharpness=float(sec.get("sharpness", 3.0)),
    )


def _potential_from(ctx: RunContext, required=True):
    sec = ctx.section("potential", required=required)
    if not sec:
        from .potentials import PotentialSpec

        return PotentialSpec()
    try:
        return spec_from_mapping(sec)
    except (StarkLabError, ValueError, KeyError) as exc:
        _fail(f"potential: {exc}", field="potential")


def _policy_from(ctx: RunContext):
    sec = ctx.section("scattering", required=False)
    kw = {}
    for key, cast in (
        ("t_plus", float),
        ("t_minus", float),
        ("cook_tolerance", float),
        ("max_t", float),
        ("dt", float),
        ("cook_dt", float),
    ):
        if key in sec:
            kw[{"t_plus": "T_plus", "t_minus": "T_minus", "max_t": "max_T"}.get(key, key)] = cast(
                sec[key]
            )
    return HorizonPolicy(**kw)


def _check_angles(angles, delta_max):
    for vh in angles:
        if abs(vh[0]) >= 1.0 - 1e-12:
            _fail(
                f"angle {vh}: incoming directions must satisfy |v_hat . e1| < 1",
                field="schedule.angles",
            )
        if abs(vh[0]) > delta_max + 1e-12:
            _fail(f"angle {vh} outside |v_hat . e1| <= {delta_max}", field="schedule.angles")


def _write_csv(path: Path, kind: str, header: str, rows) -> None:
    with path.open("w", encoding="utf-8", newline="\n") as f:
        f.write(f"# {CSV_SCHEMA} {kind}\n")
        f.write(header + "\n")
        for row in rows:
            f.write(",".join(repr(x) if isinstance(x, float) else str(x) for x in row) + "\n")


def _manifest(ctx: RunContext, kind: str, verdicts: dict, artifacts) -> dict:
    import scipy

    cfg_text = Path(ctx.config_path).read_text(encoding="utf-8")
    return {
        "kind": kind,
        "config_sha256": hashlib.sha256(cfg_text.encode()).hexdigest(),
        "versions": {
            "starklab": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "seed": ctx.seed,
        "verdicts": {k: bool(v) for k, v in verdicts.items()},
        "artifacts": [str(a) for a in artifacts],
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }


def _run_exponents(ctx: RunContext):
    sec = ctx.section("schedule", required=False)
    g0s = _floats(sec.get("gamma0_list", "0.55,0.65,0.8,0.9,1.0"))
    g1s = _floats(sec.get("gamma1_list", "1.05,1.2,1.3,1.5,1.8"))
    gds = _floats(sec.get("gamma_d_list", "0.3,0.35,0.4,0.45,0.5"))
    rows = []
    worst = 0.0
    for g0 in g0s:
        for g1 in g1s:
            if not g0 < g1 - 0.0 <= 1.0 + g0:
                pass
            for gd in gds:
                for p in closed_form_problems(g0, g1, g1, gd):
                    r = optimize_exponent(p)
                    if r.empty or p.expected_infimum is None:
                        continue
                    dev = abs(r.infimum - p.expected_infimum)
                    worst = max(worst, dev)
                    rows.append((p.label, g0, g1, gd, r.infimum, p.expected_infimum, dev))
    rem_rows = []
    for g1 in g1s:
        e, ok = remainder_exponent("short", gamma1=g1)
        rem_rows.append(("short", g1, math.nan, e, ok))
        for gd in gds:
            e, ok = remainder_exponent("long", gamma1=g1, gamma_d=gd)
            rem_rows.append(("long", g1, gd, e, ok))
    out1 = ctx.out_dir / "infima.csv"
    _write_csv(out1, "exponents-infima", "label,gamma0,gamma1,gamma_d,infimum,expected,deviation", rows)
    out2 = ctx.out_dir / "remainders.csv"
    _write_csv(out2, "exponents-remainders", "scenario,gamma1,gamma_d,exponent,limit_holds", rem_rows)
    verdicts = {"closed_forms_match_1e-6": worst <= 1e-6}
    return verdicts, [out1, out2]


def _run_propagate(ctx: RunContext):
    grid = _grid_from(ctx)
    profile = _profile_from(ctx)
    V = _potential_from(ctx, required=False)
    sec = ctx.section("schedule", required=False)
    t_from = float(sec.get("t_from", 0.0))
    t_to = float(sec.get("t_to", 2.0))
    boost_v = np.asarray(_floats(sec.get("boost", "0.0, 0.0")))
    n_report = int(sec.get("report_points", 8))
    from .grids import boost as boost_op

    state = boost_op(make_packet(grid, profile), boost_v)
    rows = []
    ts = np.linspace(t_from, t_to, n_report + 1)
    cur = state
    worst_drift = 0.0
    worst_band = 0.0
    for a, b in zip(ts[:-1], ts[1:]):
        cur, rep = full_propagate(cur, V, float(a), float(b))
        x = position_expectation(cur)
        p = momentum_expectation(cur)
        worst_drift = max(worst_drift, rep.norm_drift)
        worst_band = max(worst_band, rep.boundary_mass_max)
        rows.append((float(b), cur.norm, *map(float, x), *map(float, p), rep.boundary_mass_max))
    out = ctx.out_dir / "trajectory.csv"
    _write_csv(out, "propagate", "t,norm,x1,x2,p1,p2,boundary_mass", rows)
    verdicts = {
        "norm_drift_within_budget": worst_drift <= 1e-8 * max(1.0, abs(t_to - t_from)),
        "boundary_mass_below_1e-8": worst_band <= 1e-8,
    }
    return verdicts, [out]


def _run_smatrix(ctx: RunContext):
    grid = _grid_from(ctx)
    profile = _profile_from(ctx)
    V = _potential_from(ctx)
    policy = _policy_from(ctx)
    sec = ctx.section("schedule")
    vmags = _floats(sec.get("vmags", "4, 8, 16"))
    if list(vmags) != sorted(vmags) or len(set(vmags)) != len(vmags):
        _fail("schedule.vmags must be strictly increasing", field="schedule.vmags")
    v_hat = np.asarray(_floats(sec.get("v_hat", "0.0, 1.0")))
    v_hat = v_hat / np.linalg.norm(v_hat)
    delta_max = float(sec.get("delta_max", 0.9))
    _check_angles([v_hat], delta_max)
    axes = tuple(int(a) for a in _floats(sec.get("axes", "1")))
    max_rel_err = float(sec.get("max_rel_err", 0.05))

    packet = make_packet(grid, profile)
    rows = []
    ok_final = True
    ok_monotone = True
    for axis in axes:
        ref = rhs_direct(V, v_hat, packet, packet, axis) if V.l_part is None else None
        errs = []
        for vm in vmags:
            val = commutator_functional(V, vm * v_hat, packet, packet, axis, "none" if V.l_part is None else "dollard_l", policy)
            rel = abs(val - ref) / abs(ref) if ref not in (None, 0) else math.nan
            errs.append(rel)
            rows.append(
                (vm, float(v_hat[0]), float(v_hat[1]), axis, val.real, val.imag,
                 ref.real if ref else math.nan, ref.imag if ref else math.nan, rel)
            )
        if ref is not None:
            ok_final &= errs[-1] <= max_rel_err
            ok_monotone &= all(b < a for a, b in zip(errs, errs[1:]))
    out = ctx.out_dir / "functional.csv"
    _write_csv(
        out, "smatrix", "vmag,vhat1,vhat2,axis,re,im,rhs_re,rhs_im,rel_err", rows
    )
    verdicts = {"final_error_within_budget": ok_final, "error_monotone_decreasing": ok_monotone}
    return verdicts, [out]


def _run_ratecheck(ctx: RunContext):
    grid = _grid_from(ctx)
    profile = _profile_from(ctx)
    V = _potential_from(ctx)
    sec = ctx.section("schedule")
    vmags = _floats(sec.get("vmags", "4, 8, 16, 32"))
    targets = [t.strip() for t in sec.get("targets", "L2.3").split(",")]
    fits = [rate_sweep(LemmaTarget(t), V, grid, profile, vmag_schedule=vmags) for t in targets]
    csv_body, human = rate_report(fits)
    out = ctx.out_dir / "rates.csv"
    with out.open("w", encoding="utf-8", newline="\n") as f:
        f.write(f"# {CSV_SCHEMA} ratecheck\n")
        f.write(csv_body)
    (ctx.out_dir / "rates.txt").write_text(human + "\n", encoding="utf-8")
    verdicts = {f"{f.target}_slope_bound": f.verdict for f in fits}
    return verdicts, [out, ctx.out_dir / "rates.txt"]


def _run_reconstruct(ctx: RunContext):
    grid = _grid_from(ctx)
    profile = _profile_from(ctx)
    V = _potential_from(ctx)
    policy = _policy_from(ctx)
    sec = ctx.section("schedule")
    rsec = ctx.section("reconstruction", required=False)
    n_angles = int(sec.get("n_angles", 90))
    delta_max = float(sec.get("delta_max", 0.9))
    offsets = _floats(sec.get("offsets", "-8, 8, 33"))
    if len(offsets) != 3:
        _fail("schedule.offsets must be 'start, stop, count'", field="schedule.offsets")
    offsets = tuple(np.linspace(offsets[0], offsets[1], int(offsets[2])))
    axes = tuple(int(a) for a in _floats(sec.get("axes", "1, 2")))
    vmags = _floats(sec.get("vmags", "16"))
    source = sec.get("source", "rhs_direct")
    angles = make_angle_set(n_angles, delta_max)
    _check_angles(angles, delta_max)
    plan = ExperimentPlan(angles=angles, offsets=offsets, axes=axes, delta_max=delta_max)
    samples = collect_samples(
        V, plan, grid, profile, vmag_schedule=vmags, policy=policy, source=source, jobs=ctx.jobs
    )
    rows = [
        (s.v_hat[0], s.v_hat[1], s.offset, s.axis, s.value.real, s.value.imag, s.source, int(s.flagged))
        for s in samples
    ]
    out_s = ctx.out_dir / "samples.csv"
    _write_csv(out_s, "radon-samples", "vhat1,vhat2,offset,axis,re,im,source,flagged", rows)

    recon = ReconstructionGrid(
        raster_n=int(rsec.get("raster_n", 128)),
        extent=float(rsec.get("extent", 8.0)),
        delta_max=delta_max,
        complete_wedge=rsec.get("complete_wedge", "true").lower() != "false",
    )
    packet = make_packet(grid, profile)
    res = invert(samples, recon, packet, truth=V.total_value)
    out_r = ctx.out_dir / "v_est.txt"
    header = (
        f"# {CSV_SCHEMA} raster\n"
        f"# extent={recon.extent} n={recon.raster_n} row-major x1 slow, x2 fast\n"
    )
    with out_r.open("w", encoding="utf-8", newline="\n") as f:
        f.write(header)
        for row in res.v_est:
            f.write(" ".join(repr(float(x)) for x in row) + "\n")
    out_rep = ctx.out_dir / "recon_report.json"
    out_rep.write_text(json.dumps(res.report, indent=2, sort_keys=True), encoding="utf-8")
    budget = float(rsec.get("max_rel_err", 0.05 if source == "rhs_direct" else 0.15))
    verdicts = {"rel_l2_disk_within_budget": res.report.get("rel_l2_disk", math.inf) <= budget}
    return verdicts, [out_s, out_r, out_rep]


_RUNNERS = {
    "exponents": _run_exponents,
    "propagate": _run_propagate,
    "smatrix": _run_smatrix,
    "ratecheck": _run_ratecheck,
    "reconstruct": _run_reconstruct,
}


def run(config_path: str, output: str = None, jobs: int = 1) -> int:
    path = Path(config_path)
    cp = _load_config(path)
    kind = cp.get("experiment", "kind")
    seed = cp.getint("experiment", "seed", fallback=0)
    out_root = output or cp.get("output", "directory", fallback=None) or os.environ.get(
        "STARKLAB_OUTPUT_ROOT", "starklab_out"
    )
    out_dir = Path(out_root)
    out_dir.mkdir(parents=True, exist_ok=True)
    ctx = RunContext(config=cp, out_dir=out_dir, jobs=jobs, seed=seed)
    ctx.config_path = path
    np.random.seed(seed)
    verdicts, artifacts = _RUNNERS[kind](ctx)
    manifest = _manifest(ctx, kind, verdicts, artifacts)
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    for name, ok in verdicts.items():
        print(f"[{'PASS' if ok else 'FAIL'}] {kind}: {name}")
    return 0 if all(verdicts.values()) else 1


def summarize(directory: str) -> int:
    root = Path(directory)
    manifests = sorted(root.rglob("manifest.json"))
    if not manifests:
        raise MissingArtifacts(f"no manifest.json under {root}")
    rows = []
    for m in manifests:
        data = json.loads(m.read_text(encoding="utf-8"))
        for name, ok in data.get("verdicts", {}).items():
            rows.append((bool(ok), data.get("kind", "?"), name, str(m.parent)))
    rows.sort(key=lambda r: (r[0], r[1], r[2]))  # failures first
    n_pass = sum(1 for r in rows if r[0])
    for ok, kind, name, where in rows:
        print(f"[{'PASS' if ok else 'FAIL'}] {kind}: {name}  ({where})")
    print(f"{n_pass}/{len(rows)} PASS")
    return 0 if n_pass == len(rows) else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="starklab", description=__doc__)
    sub = parser.add_subparsers(dest="cmd", required=True)
    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--output", default=None, help="output directory")
    p_run.add_argument("--jobs", type=int, default=1, help="worker cap for parallel sweeps")
    p_sum = sub.add_parser("summarize", help="aggregate verdicts from artifact manifests")
    p_sum.add_argument("directory")
    args = parser.parse_args(argv)
    try:
        if args.cmd == "run":
            return run(args.config, output=args.output, jobs=args.jobs)
        return summarize(args.directory)
    except ConfigInvalid as exc:
        print(f"error: invalid config ({exc.field}): {exc}", file=sys.stderr)
        return 2
    except StarkLabError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
