"""Command-line front end: evaluate, rank, perturb, heatmap, biomarker, survival."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import analysis, cls_metrics, nifti, perturb, ranking, seg_metrics, survival
from .errors import AirwayKitError, NoCasesMatched
from .morphology import largest_component

MASK_SUFFIXES = (".nii.gz", ".nii")


def _case_id(path: Path) -> str:
    name = path.name
    for suffix in MASK_SUFFIXES:
        if name.endswith(suffix):
            return name[: -len(suffix)]
    return path.stem


def list_cases(directory: Path) -> dict[str, Path]:
    out: dict[str, Path] = {}
    for path in sorted(directory.iterdir()):
        if path.is_file() and path.name.endswith(MASK_SUFFIXES):
            out[_case_id(path)] = path
    return out


def pair_cases(pred_dir: Path, gt_dir: Path,
               manifest: Path | None) -> tuple[list[tuple[str, Path, Path]], list[str]]:
    """Pair prediction and ground-truth files by basename or via a manifest."""
    if manifest is not None:
        pairs, missing = [], []
        with open(manifest, newline="") as fh:
            for row in csv.DictReader(fh):
                pred = Path(row["pred"])
                gt = Path(row["gt"])
                if pred.exists() and gt.exists():
                    pairs.append((row["case_id"], pred, gt))
                else:
                    missing.append(row["case_id"])
        return pairs, missing
    preds = list_cases(pred_dir)
    gts = list_cases(gt_dir)
    pairs = [(cid, preds[cid], gts[cid]) for cid in sorted(gts) if cid in preds]
    missing = [cid for cid in sorted(gts) if cid not in preds]
    return pairs, missing


def resolve_config(defaults: dict, config_path: str | None, cli_values: dict) -> dict:
    """defaults, overridden by the JSON config file, overridden by given flags."""
    resolved = dict(defaults)
    if config_path:
        with open(config_path) as fh:
            file_values = json.load(fh)
        for key, value in file_values.items():
            if key in resolved:
                resolved[key] = value
    for key, value in cli_values.items():
        if key in resolved and value is not None:
            resolved[key] = value
    return resolved


def echo_config(resolved: dict, out_dir: Path, command: str) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {"command": command}
    payload.update({k: (str(v) if isinstance(v, Path) else v) for k, v in resolved.items()})
    (out_dir / "config.resolved.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


# --- evaluate ---------------------------------------------------------------

EVALUATE_DEFAULTS = {
    "threshold": seg_metrics.DETECTION_THRESHOLD,
    "prune_vox": 2,
    "largest_component": False,
    "strict": False,
    "jobs": 1,
}


def _evaluate_one(task) -> tuple[str, seg_metrics.CaseMetrics]:
    case_id, pred_path, gt_path, threshold, prune_vox, keep_largest = task
    pred = nifti.read_mask(pred_path)
    gt = nifti.read_mask(gt_path)
    if keep_largest and pred.foreground_count:
        pred = largest_component(pred)
    metrics = seg_metrics.case_metrics(pred, gt, threshold=threshold, prune_vox=prune_vox)
    return case_id, metrics


def cmd_evaluate(args) -> int:
    cfg = resolve_config(EVALUATE_DEFAULTS, args.config, {
        "threshold": args.threshold,
        "prune_vox": args.prune_vox,
        "largest_component": args.largest_component or None,
        "strict": args.strict or None,
        "jobs": args.jobs,
    })
    out_dir = Path(args.out_dir)
    pairs, missing = pair_cases(Path(args.pred_dir), Path(args.gt_dir),
                                Path(args.manifest) if args.manifest else None)
    if not pairs and not missing:
        raise NoCasesMatched("no cases were found in the ground-truth directory")
    if cfg["strict"] and missing:
        print(f"error: missing predictions for cases: {', '.join(missing)}", file=sys.stderr)
        return 2
    if not pairs:
        raise NoCasesMatched("no prediction/ground-truth pairs could be formed")

    echo_config(cfg, out_dir, "evaluate")
    tasks = [(cid, p, g, cfg["threshold"], cfg["prune_vox"], cfg["largest_component"])
             for cid, p, g in pairs]
    if cfg["jobs"] > 1:
        with ProcessPoolExecutor(max_workers=cfg["jobs"]) as pool:
            rows = list(pool.map(_evaluate_one, tasks))
    else:
        rows = [_evaluate_one(t) for t in tasks]

    seg_metrics.write_case_metrics(rows, out_dir / "per_case.csv")
    summary = seg_metrics.summarize(rows)
    with open(out_dir / "summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(summary))
        writer.writerow([repr(v) for v in summary.values()])
    if missing:
        with open(out_dir / "missing.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["case_id"])
            for cid in missing:
                writer.writerow([cid])
        print(f"warning: {len(missing)} case(s) had no prediction; see missing.csv",
              file=sys.stderr)
    return 0


# --- rank -------------------------------------------------------------------

def _read_entries_csv(path: Path) -> list[tuple[str, float, float]]:
    entries = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"team", "ovacc", "time_s"} <= set(reader.fieldnames):
            raise ValueError(f"{path}: expected columns team, ovacc, time_s")
        for lineno, row in enumerate(reader, start=2):
            try:
                entries.append((row["team"], float(row["ovacc"]), float(row["time_s"])))
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from exc
    return entries


def _mean_ovacc(per_case_csv: Path) -> float:
    values = []
    with open(per_case_csv, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "ovacc" not in reader.fieldnames:
            raise ValueError(f"{per_case_csv}: expected an ovacc column")
        for lineno, row in enumerate(reader, start=2):
            try:
                values.append(float(row["ovacc"]))
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{per_case_csv}: line {lineno}: {exc}") from exc
    if not values:
        raise ValueError(f"{per_case_csv}: no rows")
    return float(np.mean(values))


def cmd_rank(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.time_command:
        if not (args.cases_dir and args.team):
            print("error: --time-command needs --cases-dir and --team", file=sys.stderr)
            return 1
        cases = sorted(Path(args.cases_dir).iterdir())
        cases = [c for c in cases if c.name.endswith(MASK_SUFFIXES)]
        masks_dir = out_dir / "masks" / args.team
        report = ranking.time_runner(args.time_command, cases, masks_dir,
                                     strict=args.strict)
        ranking.write_times(report, out_dir / f"times_{args.team}.csv")
        print(f"{args.team}: mean {report.mean_seconds:.3f} s over "
              f"{sum(1 for c in report.cases if c.status == 'ok')} ok case(s)")
        if not args.entries and not args.per_case_dir:
            return 0

    if args.entries:
        entries = _read_entries_csv(Path(args.entries))
    elif args.per_case_dir:
        if not args.times:
            print("error: --per-case-dir needs --times", file=sys.stderr)
            return 1
        times = {}
        with open(args.times, newline="") as fh:
            for row in csv.DictReader(fh):
                times[row["team"]] = float(row["time_s"])
        entries = []
        for team_csv in sorted(Path(args.per_case_dir).glob("*.csv")):
            team = team_csv.stem
            if team not in times:
                raise ValueError(f"no time entry for team {team}")
            entries.append((team, _mean_ovacc(team_csv), times[team]))
    else:
        print("error: provide --entries, --per-case-dir or --time-command", file=sys.stderr)
        return 1

    board = ranking.rank_teams(entries)
    ranking.write_leaderboard(board, out_dir / "leaderboard.csv")
    for entry in board:
        print(f"{entry.final_position:2d}. {entry.team}  R={entry.combined_r:.2f} "
              f"ovacc={entry.ovacc_mean:.4f} time={entry.time_s:.2f}s")
    return 0


# --- perturb ----------------------------------------------------------------

PERTURB_DEFAULTS = {
    "kind": "flip-z",
    "sigma_hu": perturb.DEFAULT_SIGMA_HU,
    "ratio": None,
    "seed": 0,
}


def cmd_perturb(args) -> int:
    cfg = resolve_config(PERTURB_DEFAULTS, args.config, {
        "kind": args.kind,
        "sigma_hu": args.sigma_hu,
        "ratio": args.ratio,
        "seed": args.seed,
    })
    out_dir = Path(args.out_dir)
    if not args.images_dir and not args.masks_dir:
        print("error: provide --images-dir and/or --masks-dir", file=sys.stderr)
        return 1
    kind = perturb.PerturbKind(cfg["kind"])
    echo_config(cfg, out_dir, "perturb")

    images = list_cases(Path(args.images_dir)) if args.images_dir else {}
    masks = list_cases(Path(args.masks_dir)) if args.masks_dir else {}
    case_ids = sorted(set(images) | set(masks))

    manifest_rows = []
    for index, cid in enumerate(case_ids):
        case_seed = int(np.random.SeedSequence([int(cfg["seed"]), index]).generate_state(1)[0])
        spec = perturb.PerturbSpec(kind=kind, sigma_hu=float(cfg["sigma_hu"]),
                                   ratio=cfg["ratio"], seed=case_seed)
        params: dict = {}
        if cid in images:
            vol = nifti.read_volume(images[cid])
            result, params = perturb.apply_perturbation(vol, spec)
            (out_dir / "images").mkdir(parents=True, exist_ok=True)
            nifti.write_volume(result, out_dir / "images" / images[cid].name)
        if cid in masks:
            grid = nifti.read_mask(masks[cid])
            result, mask_params = perturb.apply_perturbation(grid, spec)
            params = params or mask_params
            (out_dir / "masks").mkdir(parents=True, exist_ok=True)
            nifti.write_mask(result, out_dir / "masks" / masks[cid].name)
        manifest_rows.append({
            "case_id": cid,
            "kind": kind.value,
            "sigma_hu": repr(spec.sigma_hu) if kind == perturb.PerturbKind.NOISE else "",
            "ratio": repr(params.get("ratio", "")) if kind == perturb.PerturbKind.DOWNSAMPLE else "",
            "seed": case_seed,
        })

    with open(out_dir / "manifest.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["case_id", "kind", "sigma_hu", "ratio", "seed"])
        writer.writeheader()
        writer.writerows(manifest_rows)
    return 0


# --- heatmap ----------------------------------------------------------------

def cmd_heatmap(args) -> int:
    out_dir = Path(args.out_dir)
    pairs, missing = pair_cases(Path(args.pred_dir), Path(args.gt_dir), None)
    if not pairs:
        raise NoCasesMatched("no prediction/ground-truth pairs could be formed")
    echo_config({"axis": args.axis}, out_dir, "heatmap")
    for cid, pred_path, gt_path in pairs:
        pred = nifti.read_mask(pred_path)
        gt = nifti.read_mask(gt_path)
        heatmap = analysis.residual_heatmap(pred, gt, axis=args.axis)
        analysis.write_heatmap_csv(heatmap, out_dir / f"{cid}.csv")
        analysis.write_heatmap_pgm(heatmap, out_dir / f"{cid}.pgm")
    if missing:
        print(f"warning: skipped {len(missing)} case(s) without predictions", file=sys.stderr)
    return 0


# --- biomarker ----------------------------------------------------------------

def cmd_biomarker(args) -> int:
    out_dir = Path(args.out_dir)
    airways = list_cases(Path(args.airways_dir))
    lungs = list_cases(Path(args.lungs_dir))
    images = list_cases(Path(args.images_dir)) if args.images_dir else {}
    case_ids = sorted(set(airways) & set(lungs))
    if not case_ids:
        raise NoCasesMatched("no airway/lung mask pairs could be formed")
    echo_config({"prune_vox": args.prune_vox}, out_dir, "biomarker")
    rows = []
    for cid in case_ids:
        airway = nifti.read_mask(airways[cid])
        lung = nifti.read_mask(lungs[cid])
        image = nifti.read_volume(images[cid]) if cid in images else None
        markers = analysis.compute_biomarkers(airway, lung, image=image,
                                              prune_vox=args.prune_vox)
        rows.append(analysis.biomarker_row(cid, markers))
    analysis.write_biomarkers(rows, out_dir / "biomarkers.csv")
    return 0


# --- survival -----------------------------------------------------------------

def cmd_survival(args) -> int:
    out_dir = Path(args.out_dir)
    records = survival.read_survival_csv(args.input)
    specs = [spec.split(",") for spec in args.model]
    echo_config({"ties": args.ties, "standardize": args.standardize,
                 "models": ["+".join(s) for s in specs]}, out_dir, "survival")
    entries = survival.cox_model_suite(records, specs, ties=args.ties,
                                       standardize=args.standardize)
    survival.write_suite_report(entries, out_dir / "cox_report.csv")
    for entry in entries:
        model = "+".join(entry.covariates)
        if entry.fit is None:
            print(f"{model}: {entry.error}")
            continue
        for row in entry.fit.rows():
            print(f"{model}: {row['variable']} p={row['p']:.4g} "
                  f"HR={row['hr']:.3f} ({row['ci_low']:.3f}-{row['ci_high']:.3f})")
    return 0


# --- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="airwaykit",
        description="Airway segmentation evaluation, ranking, robustness and biomarker toolkit.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    ev = sub.add_parser("evaluate", help="score predictions against ground truth")
    ev.add_argument("--pred-dir", required=True)
    ev.add_argument("--gt-dir", required=True)
    ev.add_argument("--out-dir", required=True)
    ev.add_argument("--manifest", help="CSV with case_id,pred,gt overriding basename pairing")
    ev.add_argument("--threshold", type=float, help="branch detection coverage threshold")
    ev.add_argument("--prune-vox", type=int, help="skeleton burr pruning threshold (voxels)")
    ev.add_argument("--largest-component", action="store_true", default=None,
                    help="keep only the largest predicted component before scoring")
    ev.add_argument("--strict", action="store_true", default=None,
                    help="abort when any ground-truth case has no prediction")
    ev.add_argument("--jobs", type=int, help="parallel case workers")
    ev.add_argument("--config", help="JSON config file; flags override it")
    ev.set_defaults(func=cmd_evaluate)

    rk = sub.add_parser("rank", help="aggregate team results into a leaderboard")
    rk.add_argument("--entries", help="CSV with team,ovacc,time_s")
    rk.add_argument("--per-case-dir", help="directory of per-team per-case metric CSVs")
    rk.add_argument("--times", help="CSV with team,time_s (used with --per-case-dir)")
    rk.add_argument("--time-command", help="command template with {input} {output} to time")
    rk.add_argument("--cases-dir", help="input volumes for --time-command")
    rk.add_argument("--team", help="team name for --time-command outputs")
    rk.add_argument("--strict", action="store_true", help="abort on a failing timed case")
    rk.add_argument("--out-dir", required=True)
    rk.set_defaults(func=cmd_rank)

    pb = sub.add_parser("perturb", help="emit perturbed volumes plus a rerun manifest")
    pb.add_argument("--images-dir")
    pb.add_argument("--masks-dir")
    pb.add_argument("--out-dir", required=True)
    pb.add_argument("--kind", choices=[k.value for k in perturb.PerturbKind])
    pb.add_argument("--sigma-hu", type=float, help="noise standard deviation (HU)")
    pb.add_argument("--ratio", type=float, help="slice keep ratio; omit for seeded draw")
    pb.add_argument("--seed", type=int)
    pb.add_argument("--config", help="JSON config file; flags override it")
    pb.set_defaults(func=cmd_perturb)

    hm = sub.add_parser("heatmap", help="accumulated residual maps per case")
    hm.add_argument("--pred-dir", required=True)
    hm.add_argument("--gt-dir", required=True)
    hm.add_argument("--out-dir", required=True)
    hm.add_argument("--axis", choices=["x", "y", "z"], default="z")
    hm.set_defaults(func=cmd_heatmap)

    bm = sub.add_parser("biomarker", help="airway-derived biomarker panel per case")
    bm.add_argument("--airways-dir", required=True)
    bm.add_argument("--lungs-dir", required=True)
    bm.add_argument("--images-dir")
    bm.add_argument("--out-dir", required=True)
    bm.add_argument("--prune-vox", type=int, default=2)
    bm.set_defaults(func=cmd_biomarker)

    sv = sub.add_parser("survival", help="proportional-hazards model suite")
    sv.add_argument("--input", required=True, help="CSV: id,time_weeks,event,covariates...")
    sv.add_argument("--model", action="append", required=True,
                    help="comma-separated covariates; repeat for multiple models")
    sv.add_argument("--ties", choices=["breslow", "efron"], default="breslow")
    sv.add_argument("--standardize", action="store_true")
    sv.add_argument("--out-dir", required=True)
    sv.set_defaults(func=cmd_survival)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except AirwayKitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
