"""Command-line pipeline: doe, simulate, fit-reduction, train, validate, control, report.

Every command reads the run manifest, loads its upstream artifacts from
``--out-dir`` (checking fingerprints), and writes its own artifacts plus a
metrics JSON.  Metrics files hold no wall-clock values so that two runs of
one manifest produce identical bytes.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import load_episodes, save_episodes, split_train_validation
from .errors import ArtifactError, FormTwinError, NumericalError, SchemaError
from .koopman import KoopmanModel, spectral_radius, train
from .manifest import PRODUCER, RunManifest, defaults
from .mpc import ControlTrace, envelope_bounds, run_closed_loop
from .plant import Plant, moderate_target, saturation_tip, simulate_plan
from .reduction import (ReductionBases, energy_fraction, fit_chebyshev, fit_reduction,
                        reconstruct_chebyshev, reconstruct_pod, reduce_episode)
from .report import render_report
from .toolpath import DoePlan, lhs_sequences, sample_base_paths

log = logging.getLogger("formtwin")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


class Context:
    def __init__(self, manifest: RunManifest, out_dir: Path):
        self.manifest = manifest
        self.out = out_dir

    def path(self, name: str) -> Path:
        return self.manifest.artifact(self.out, name)

    def require(self, name: str) -> Path:
        path = self.path(name)
        if not path.exists():
            raise ArtifactError(f"missing {path}; run `formtwin {PRODUCER[name]}` first")
        return path

    def write_json(self, filename: str, doc: dict) -> Path:
        path = self.out / filename
        path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
        return path

    def episodes(self):
        return load_episodes(self.require("episodes"))

    def bases(self) -> ReductionBases:
        return ReductionBases.load(self.require("bases"))

    def model(self, bases: ReductionBases) -> KoopmanModel:
        model = KoopmanModel.load(self.require("model"))
        if model.bases_fingerprint != bases.fingerprint:
            raise ArtifactError(f"model was trained on bases {model.bases_fingerprint or '?'}, "
                                f"but {self.path('bases')} is {bases.fingerprint}; rerun `formtwin train`")
        return model

    def split(self, episodes, seed: int | None = None):
        m = self.manifest
        return split_train_validation(episodes, m.doc["split"]["holdout"], m.seed if seed is None else seed)


def _one_step_errors(model, bases, episodes):
    """Snapshot-space one-step prediction errors, shape (pairs, n_x)."""
    errs = []
    for ep in episodes:
        red = reduce_episode(bases, ep)
        for k in range(ep.n_cycles):
            pred = reconstruct_pod(bases.pod, model.predict_one_step(red.x_tilde[:, k], red.u_tilde[:, k]))
            errs.append(pred - ep.X[:, k + 1])
    return np.array(errs)


def _mean_tip(episodes) -> float:
    return float(np.mean([abs(ep.X[-1, -1]) for ep in episodes]))


def _fit_model(ctx: Context, bases, train_eps, val_eps, seed: int):
    cfg = ctx.manifest.train_config
    cfg = type(cfg).from_dict({**cfg.to_dict(), "seed": seed})
    rt = [reduce_episode(bases, e) for e in train_eps]
    rv = [reduce_episode(bases, e) for e in val_eps]
    result = train(rt, cfg, rv, bases.fingerprint)
    lo, hi = envelope_bounds(rt, 0.0)
    result.model.meta["u_tilde_range"] = {"min": list(lo), "max": list(hi)}
    return result


# ----------------------------------------------------------------- commands

def cmd_doe(ctx: Context, args) -> dict:
    d = ctx.manifest.doc["doe"]
    count = args.sequences if args.sequences is not None else d["sequences"]
    if count < 1:
        raise SchemaError("--sequences must be at least 1")
    seed = ctx.manifest.seed
    paths = sample_base_paths(seed, d["n_negative"], d["n_positive"])
    plan = lhs_sequences(d["base_count"], d["seq_len"], count, seed, base_paths=paths)
    plan.save(ctx.path("doe"))
    return {"base_paths": len(plan.base_paths), "sequences": len(plan.sequences)}


def cmd_simulate(ctx: Context, args) -> dict:
    try:
        plan = DoePlan.load(ctx.require("doe"))
        episodes = simulate_plan(plan, ctx.manifest.plant)
    except ValueError as exc:
        raise SchemaError(str(exc)) from None
    save_episodes(ctx.path("episodes"), episodes, {"doe_seed": plan.seed, "plant": ctx.manifest.doc["plant"]})
    return {"episodes": len(episodes), "shifted_pairs": sum(e.n_cycles for e in episodes)}


def cmd_fit_reduction(ctx: Context, args) -> dict:
    episodes = ctx.episodes()
    train_eps, _ = ctx.split(episodes)
    red = ctx.manifest.doc["reduction"]
    bases = fit_reduction(train_eps, red["r"], red["p"], red["center"])
    bases.save(ctx.path("bases"))
    U = np.hstack([e.U for e in episodes])
    cheb_err = float(np.max(np.abs(reconstruct_chebyshev(bases.cheb, fit_chebyshev(bases.cheb, U)) - U)))
    metrics = {"bases_fingerprint": bases.fingerprint,
               "energy_fraction": energy_fraction(bases.pod, bases.r),
               "chebyshev_max_error_mm": cheb_err}
    ctx.write_json("reduction_metrics.json", metrics)
    return metrics


def cmd_train(ctx: Context, args) -> dict:
    episodes = ctx.episodes()
    bases = ctx.bases()
    train_eps, val_eps = ctx.split(episodes)
    t0 = time.perf_counter()
    result = _fit_model(ctx, bases, train_eps, val_eps, ctx.manifest.seed)
    log.info("training took %.1f s, best epoch %d", time.perf_counter() - t0, result.best_epoch)
    model = result.model
    model.save(ctx.path("model"))
    ctx.path("history").write_text(json.dumps(result.history) + "\n")
    errs = _one_step_errors(model, bases, val_eps or train_eps)
    mae = np.abs(errs).mean(axis=0)
    tip = _mean_tip(episodes)
    metrics = {"model_fingerprint": model.fingerprint, "bases_fingerprint": bases.fingerprint,
               "best_epoch": result.best_epoch, "epochs_run": len(result.history),
               "spectral_radius": spectral_radius(model.A),
               "heldout_mae_per_tracker": mae.tolist(), "mean_final_tip_mm": tip,
               "mae_to_tip_ratio": float(mae.max() / tip),
               "final_train_terms": {k[6:]: v for k, v in result.history[-1].items() if k.startswith("train_")
                                     and k != "train_loss"}}
    ctx.path("train_metrics").write_text(json.dumps(metrics, indent=1, sort_keys=True) + "\n")
    return {k: metrics[k] for k in ("best_epoch", "spectral_radius", "mae_to_tip_ratio")}


def cmd_validate(ctx: Context, args) -> dict:
    episodes = ctx.episodes()
    bases = ctx.bases()
    m = ctx.manifest
    per_rep, example = [], None
    for rep in range(m.doc["validation"]["replicates"]):
        seed = m.seed + rep
        train_eps, val_eps = ctx.split(episodes, seed)
        if not val_eps:
            raise SchemaError("validation needs split.holdout >= 1")
        model = _fit_model(ctx, bases, train_eps, val_eps, seed).model
        errs = _one_step_errors(model, bases, val_eps)
        per_rep.append(np.abs(errs).mean(axis=0).tolist())
        log.info("replicate %d: max tracker MAE %.3f mm", rep, max(per_rep[-1]))
        if example is None:
            ep = val_eps[0]
            red = reduce_episode(bases, ep)
            pred = [reconstruct_pod(bases.pod, model.predict_one_step(red.x_tilde[:, k], red.u_tilde[:, k]))
                    for k in range(ep.n_cycles)]
            example = {"episode_id": ep.episode_id, "tracker_grid": list(m.plant.tracker_grid),
                       "true": ep.X[:, 1:].T.tolist(), "predicted": np.array(pred).tolist()}
    per = np.array(per_rep)
    tip = _mean_tip(episodes)
    metrics = {"replicates": len(per_rep), "per_replicate_mae": per_rep,
               "mae_per_tracker": per.mean(axis=0).tolist(), "mae_std_per_tracker": per.std(axis=0).tolist(),
               "tracker_grid": list(m.plant.tracker_grid), "mean_final_tip_mm": tip,
               "mae_to_tip_ratio": float(per.mean(axis=0).max() / tip),
               "bases_fingerprint": bases.fingerprint, "example": example}
    ctx.path("validation").write_text(json.dumps(metrics, indent=1, sort_keys=True) + "\n")
    return {"mae_per_tracker": [round(v, 3) for v in metrics["mae_per_tracker"]],
            "mae_to_tip_ratio": metrics["mae_to_tip_ratio"]}


def _load_target(path: str) -> np.ndarray:
    p = Path(path)
    if not p.exists():
        raise SchemaError(f"target file {p} does not exist")
    text = p.read_text().strip()
    try:
        values = json.loads(text) if text.startswith("[") else [float(v) for v in text.replace(",", " ").split()]
        return np.asarray(values, dtype=float).ravel()
    except (ValueError, TypeError) as exc:
        raise SchemaError(f"target file {p}: {exc}") from None


def cmd_control(ctx: Context, args) -> dict:
    m = ctx.manifest
    bases = ctx.bases()
    model = ctx.model(bases)
    control = m.doc["control"]
    adapt = control["adapt"] if args.adapt is None else args.adapt == "on"
    drift = control["drift"] if args.drift is None else args.drift
    spec = m.mpc_spec
    if args.max_cycles is not None:
        spec.max_cycles = args.max_cycles
    if args.tol_mm is not None:
        spec.termination_tol = args.tol_mm
    if m.envelope_margin is not None:
        rng_ = model.meta.get("u_tilde_range")
        if rng_ is None:
            raise ArtifactError("model has no recorded input range; rerun `formtwin train`")
        lo, hi = np.asarray(rng_["min"]), np.asarray(rng_["max"])
        w = hi - lo
        spec.u_min = tuple(lo - m.envelope_margin * w)
        spec.u_max = tuple(hi + m.envelope_margin * w)

    nominal = m.plant
    if args.target:
        target = _load_target(args.target)
        if target.shape != (len(nominal.tracker_grid),):
            raise SchemaError(f"target must have {len(nominal.tracker_grid)} values, got {target.size}")
    else:
        target = moderate_target(nominal, control["target_fraction"], control["target_cycles"])

    seed = m.seed if args.control_seed is None else args.control_seed
    plant = Plant(nominal.with_(seed=seed, yield_drift=drift))
    a = m.doc["adapt"]
    trace = run_closed_loop(plant, model, spec, target, bases, adapt=adapt, rls_lambda=a["lambda"],
                            triggers=m.triggers)
    trace.meta = {"bases_fingerprint": bases.fingerprint, "model_fingerprint": model.fingerprint,
                  "seed": seed, "drift": drift}
    name = args.name or f"trace_adapt-{'on' if adapt else 'off'}"
    trace.to_jsonl(ctx.out / f"{name}.jsonl")
    summary = {"adapt": adapt, "drift": drift, "seed": seed, "target": trace.target,
               "applied_cycles": trace.applied_count, "terminated": trace.terminated,
               "final_max_deviation_mm": trace.final_deviation, "final_measured": trace.final_measured,
               "deviation_per_cycle": [r.deviation for r in trace.records] + [trace.final_deviation],
               "b_updates": [r.update_reason for r in trace.records if r.b_updated],
               "saturation_tip_mm": saturation_tip(nominal)}
    ctx.write_json(f"{name}.metrics.json", summary)
    return {k: summary[k] for k in ("adapt", "applied_cycles", "terminated", "final_max_deviation_mm")}


def cmd_report(ctx: Context, args) -> dict:
    paths = [Path(p) for p in args.traces] if args.traces else sorted(ctx.out.glob("trace*.jsonl"))
    traces = {}
    for p in paths:
        if not p.exists():
            raise ArtifactError(f"missing trace {p}; run `formtwin control` first")
        try:
            traces[p.stem] = ControlTrace.from_jsonl(p)
        except (ValueError, KeyError, TypeError) as exc:
            raise SchemaError(f"malformed trace {p}: {exc}") from None
    if ctx.path("bases").exists():
        fp = ctx.bases().fingerprint
        for name, t in traces.items():
            if t.meta.get("bases_fingerprint", fp) != fp:
                raise ArtifactError(f"trace {name} was produced with different bases; rerun `formtwin control`")
    validation = None
    if ctx.path("validation").exists():
        validation = json.loads(ctx.path("validation").read_text())
    plant = ctx.manifest.plant
    written = render_report(ctx.path("report_dir"), traces, validation,
                            plant.tracker_grid, plant.station_grid, ctx.manifest.doc["reduction"]["p"])
    return {"traces": len(traces), "files": [str(p) for p in written]}


COMMANDS = {
    "doe": cmd_doe,
    "simulate": cmd_simulate,
    "fit-reduction": cmd_fit_reduction,
    "train": cmd_train,
    "validate": cmd_validate,
    "control": cmd_control,
    "report": cmd_report,
}


# -------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="formtwin", description=__doc__.splitlines()[0])
    parser.add_argument("--manifest", help="run manifest JSON (defaults are used when omitted)")
    parser.add_argument("--seed", type=int, help="override the manifest seed")
    parser.add_argument("--out-dir", default="formtwin-run", help="artifact directory (default: %(default)s)")
    parser.add_argument("--verbose", "-v", action="count", default=0)
    parser.add_argument("--print-defaults", action="store_true", help="print the default manifest and exit")
    parser.add_argument("--version", action="version", version=f"formtwin {__version__}")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("doe", help="sample base toolpaths and Latin-hypercube sequences")
    p.add_argument("--sequences", type=int, help="number of sequences (manifest default 80)")
    sub.add_parser("simulate", help="run every DOE sequence on the synthetic plant")
    sub.add_parser("fit-reduction", help="fit POD modes and the Chebyshev basis")
    sub.add_parser("train", help="train the Koopman model")
    sub.add_parser("validate", help="reshuffled hold-out replicates, per-tracker MAE")

    p = sub.add_parser("control", help="closed-loop MPC run on the plant")
    p.add_argument("--target", help="target snapshot file (JSON list or whitespace/comma separated)")
    p.add_argument("--adapt", choices=("on", "off"))
    p.add_argument("--max-cycles", type=int)
    p.add_argument("--tol-mm", type=float)
    p.add_argument("--seed", type=int, dest="control_seed", help="plant noise seed for this run")
    p.add_argument("--drift", type=float, help="yield threshold multiplier of the plant")
    p.add_argument("--name", help="trace file stem (default trace_adapt-on/off)")

    p = sub.add_parser("report", help="CSV tables and SVG figures")
    p.add_argument("traces", nargs="*", help="trace files (default: trace*.jsonl in --out-dir)")
    return parser


def load_manifest(args) -> RunManifest:
    manifest = RunManifest.load(args.manifest) if args.manifest else RunManifest()
    return manifest.with_seed(args.seed) if args.seed is not None else manifest


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_defaults:
        print(json.dumps(defaults(), indent=1, sort_keys=True))
        return EXIT_OK
    if not args.command:
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        ctx = Context(load_manifest(args), Path(args.out_dir))
        ctx.out.mkdir(parents=True, exist_ok=True)
        ctx.manifest.save(ctx.out / "resolved_manifest.json")
        result = COMMANDS[args.command](ctx, args)
    except NumericalError as exc:
        log.error("%s", exc)
        return EXIT_NUMERICAL
    except (FormTwinError, ValueError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    print(json.dumps(result, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
