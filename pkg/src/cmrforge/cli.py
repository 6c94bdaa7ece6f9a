"""Command-line pipeline: phantom | preprocess | augment | build-dataset | evaluate | inspect.

Stages talk through files (NIfTI volumes + JSON manifests), so external
tooling (e.g. the trainer) can slot between build-dataset and evaluate.
Every subcommand accepts ``--config FILE`` with JSON defaults (explicit
flags win) and writes a ``run.json`` provenance record next to its outputs.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import cmrforge
from cmrforge.augment import RotationAugmentation, build_landmark_set, generate_rotation_set, save_landmarks
from cmrforge.dataset import TrainingConfig, build, build_domain_manifest, format_summary
from cmrforge.errors import CmrForgeError
from cmrforge.image import SequenceKind, Volume
from cmrforge.manifest import (
    CohortManifest,
    CohortPatient,
    SequenceEntry,
    read_cohort,
    read_manifest,
    write_cohort,
)
from cmrforge.metrics import aggregate, evaluate_case, format_table, save_report
from cmrforge.nifti import _parse_header, _read_bytes, read_volume, write_volume
from cmrforge.phantom import (
    SLICE_COUNT_RANGES,
    default_labeled_counts,
    generate_cohort,
    write_cohort_to_dir,
)
from cmrforge.preprocess import (
    build_reference_histogram,
    correct_bias,
    match_histogram,
    normalize,
    save_reference,
    standardize_geometry,
    standardize_labels,
)

log = logging.getLogger(__name__)

THREADS_ENV = "CMR_FORGE_THREADS"


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; this pipeline reserves 2 for data errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _default_threads():
    env = os.environ.get(THREADS_ENV)
    if env and env.isdigit() and int(env) > 0:
        return int(env)
    return os.cpu_count() or 1


def _apply_config_file(parser, argv):
    """Pre-scan for --config and install its JSON values as subcommand defaults.

    Explicit flags still win; file-supplied values also satisfy required flags.
    """
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config")
    known, rest = probe.parse_known_args(argv)
    if not known.config:
        return
    with open(known.config, "r", encoding="utf-8") as f:
        values = json.load(f)
    if not isinstance(values, dict):
        raise CmrForgeError(f"config file {known.config} must hold a JSON object")
    values = {k.replace("-", "_"): v for k, v in values.items()}

    command = next((tok for tok in rest if not tok.startswith("-")), None)
    sub = parser.subparser_map.get(command)
    if sub is None:
        raise CmrForgeError(f"config file given but subcommand {command!r} is unknown")
    sub.set_defaults(**values)
    for action in sub._actions:
        if action.dest in values:
            action.required = False


def _write_run_record(out_dir, command, args):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "tool": "cmrforge",
        "version": cmrforge.__version__,
        "command": command,
        "config": {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "config")},
    }
    with open(out_dir / "run.json", "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, default=str)
        f.write("\n")


# ------------------------------------------------------------------ phantom

def cmd_phantom(args):
    ranges = dict(SLICE_COUNT_RANGES)
    for seq, override in ((SequenceKind.LGE, args.lge_slices),
                          (SequenceKind.BSSFP, args.bssfp_slices),
                          (SequenceKind.T2, args.t2_slices)):
        if override:
            ranges[seq] = (override[0], override[1])
    labeled = None
    if args.labeled_lge or args.labeled_bssfp or args.labeled_t2:
        labeled = default_labeled_counts(args.patients)
        if args.labeled_lge:
            labeled[SequenceKind.LGE] = args.labeled_lge
        if args.labeled_bssfp:
            labeled[SequenceKind.BSSFP] = args.labeled_bssfp
        if args.labeled_t2:
            labeled[SequenceKind.T2] = args.labeled_t2
    records = generate_cohort(args.patients, args.seed, size=(args.size, args.size),
                              labeled_counts=labeled, slice_ranges=ranges,
                              noise_sigma=args.noise)
    write_cohort_to_dir(records, args.out, base_seed=args.seed)
    _write_run_record(args.out, "phantom", args)
    print(f"wrote {args.patients} phantom patients to {args.out}")
    return 0


# --------------------------------------------------------------- preprocess

def _corrected(volume, args):
    if args.skip_bias:
        return volume
    corrected, _ = correct_bias(volume, degree=args.degree)
    return corrected


def cmd_preprocess(args):
    cohort_path = Path(args.cohort)
    cohort = read_cohort(cohort_path)
    root = cohort_path.parent
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    target_spacing = tuple(args.target_spacing)
    target_size = tuple(args.target_size)

    jobs = []  # (patient, seq, entry)
    for patient in cohort.patients:
        for seq, entry in sorted(patient.sequences.items(), key=lambda kv: kv[0].value):
            jobs.append((patient, seq, entry))

    def corrected_for(job):
        patient, seq, entry = job
        volume, _ = read_volume(root / entry.image, default_sequence=seq)
        return _corrected(volume, args)

    # pass 1: bias-correct everything once; the reference is built on corrected data
    with ThreadPoolExecutor(max_workers=args.threads) as pool:
        corrected_list = list(pool.map(corrected_for, jobs))

    if args.scope == "global":
        references = {None: build_reference_histogram(corrected_list)}
        save_reference(references[None], out_dir / "reference_histogram.json")
    else:
        by_seq = {}
        for (patient, seq, entry), volume in zip(jobs, corrected_list):
            by_seq.setdefault(seq, []).append(volume)
        references = {seq: build_reference_histogram(vols) for seq, vols in by_seq.items()}
        for seq, ref in references.items():
            save_reference(ref, out_dir / f"reference_histogram_{seq.value}.json")

    def process(job_and_volume):
        (patient, seq, entry), volume = job_and_volume
        ref = references[None] if args.scope == "global" else references[seq]
        volume = match_histogram(volume, ref)
        volume = standardize_geometry(volume, target_spacing, target_size)
        volume = normalize(volume)
        pdir = out_dir / patient.id
        pdir.mkdir(exist_ok=True)
        image_rel = f"{patient.id}/{Path(entry.image).name}"
        write_volume(volume, out_dir / image_rel)

        labels_rel = scar_rel = None
        if entry.labels is not None:
            labels, _ = read_volume(root / entry.labels, as_labels=True)
            labels = standardize_labels(labels, target_spacing, target_size)
            labels_rel = f"{patient.id}/{Path(entry.labels).name}"
            write_volume(labels, out_dir / labels_rel)
        if entry.scar is not None:
            scar, _ = read_volume(root / entry.scar, as_labels=True)
            scar = standardize_labels(scar, target_spacing, target_size)
            scar_rel = f"{patient.id}/{Path(entry.scar).name}"
            write_volume(scar, out_dir / scar_rel)
        return patient.id, seq, SequenceEntry(image_rel, labels_rel, scar_rel)

    with ThreadPoolExecutor(max_workers=args.threads) as pool:
        results = list(pool.map(process, zip(jobs, corrected_list)))

    by_patient = {}
    for pid, seq, entry in results:
        by_patient.setdefault(pid, {})[seq] = entry
    out_cohort = CohortManifest(seed=cohort.seed, patients=[
        CohortPatient(p.id, by_patient[p.id]) for p in cohort.patients])
    write_cohort(out_cohort, out_dir / "cohort.json")
    _write_run_record(out_dir, "preprocess", args)
    print(f"preprocessed {len(jobs)} volumes from {len(cohort.patients)} patients into {out_dir}")
    return 0


# ------------------------------------------------------------------ augment

def cmd_augment(args):
    cohort_path = Path(args.cohort)
    cohort = read_cohort(cohort_path)
    root = cohort_path.parent
    out_dir = Path(args.out)
    slices_dir = out_dir / "slices"
    slices_dir.mkdir(parents=True, exist_ok=True)
    schedule = RotationAugmentation(args.step, args.count)

    n_written = 0
    for patient in cohort.patients:
        if not patient.labeled(SequenceKind.LGE):
            continue
        entry = patient.sequences[SequenceKind.LGE]
        volume, _ = read_volume(root / entry.image, default_sequence=SequenceKind.LGE)
        labels, _ = read_volume(root / entry.labels, as_labels=True)
        if args.landmarks:
            save_landmarks(build_landmark_set(labels), out_dir / "landmarks" / f"{patient.id}.json")
        for z in range(volume.shape[2]):
            try:
                outputs = generate_rotation_set(volume.slice_at(z), labels.slice_at(z), schedule)
            except CmrForgeError as e:
                log.warning("%s slice %d skipped: %s", patient.id, z, e)
                continue
            for k, s in enumerate(outputs):
                out = Volume(s.data[:, :, None], volume.spacing, SequenceKind.LGE, patient.id)
                write_volume(out, slices_dir / f"{patient.id}_LGE_z{z:02d}_rot{k:02d}.nii.gz")
                n_written += 1
    _write_run_record(out_dir, "augment", args)
    print(f"wrote {n_written} rotated slices to {slices_dir}")
    return 0


# ------------------------------------------------------------- build-dataset

def cmd_build_dataset(args):
    if args.domain:
        manifest, path = build_domain_manifest(
            args.cohort, SequenceKind.from_name(args.domain), args.out, seed=args.seed)
    else:
        config = TrainingConfig.from_id(args.training_config)
        manifest, path = build(config, args.cohort, args.out,
                               synthetic_dir=args.synthetic_dir, seed=args.seed,
                               include_original=not args.drop_original)
    _write_run_record(args.out, "build-dataset", args)
    print(format_summary(manifest))
    print(f"manifest: {path}")
    return 0


# ----------------------------------------------------------------- evaluate

def _nifti_files(directory):
    directory = Path(directory)
    return sorted(p for p in directory.iterdir()
                  if p.name.endswith(".nii") or p.name.endswith(".nii.gz"))


def cmd_evaluate(args):
    pred_dir, gt_dir = Path(args.pred), Path(args.gt)
    remap = None
    if args.remap:
        with open(args.remap, "r", encoding="utf-8") as f:
            remap = {int(k): int(v) for k, v in json.load(f).items()}

    pairs = []
    for pred_path in _nifti_files(pred_dir):
        gt_path = gt_dir / pred_path.name
        if not gt_path.exists():
            raise CmrForgeError(f"no ground truth named {pred_path.name} under {gt_dir}")
        pairs.append((pred_path, gt_path))
    if not pairs:
        raise CmrForgeError(f"no NIfTI files found under {pred_dir}")

    reports = []
    for pred_path, gt_path in pairs:
        pred, _ = read_volume(pred_path, as_labels=True, remap=remap)
        gt, header = read_volume(gt_path, as_labels=True, remap=remap)
        spacing = tuple(args.spacing) if args.spacing else gt.spacing
        reports.append(evaluate_case(pred, gt, spacing, case_id=pred_path.name,
                                     mode=args.mode, hausdorff_percentile=args.percentile))

    agg = aggregate(reports)
    print(format_table(agg))
    if args.out:
        save_report(agg, reports, args.out)
        _write_run_record(args.out, "evaluate", args)
        print(f"report written to {Path(args.out) / 'report.json'}")
    return 0


# ------------------------------------------------------------------ inspect

def _inspect_nifti(path):
    header = _parse_header(_read_bytes(path), path)
    print(f"{path}: NIfTI-1, dims {header.dims}, datatype {header.datatype}, "
          f"pixdim {tuple(round(p, 4) for p in header.pixdim[1:4])}, "
          f"byte order {'little' if header.byte_order == '<' else 'big'}-endian, "
          f"scl {header.scl_slope}/{header.scl_inter}, "
          f"intent {header.intent_name!r}, descrip {header.descrip!r}")


def _inspect_json(path):
    try:
        manifest = read_manifest(path)
    except CmrForgeError:
        cohort = read_cohort(path)
        labeled = {seq.value: len(cohort.labeled_ids(seq)) for seq in
                   (SequenceKind.BSSFP, SequenceKind.LGE, SequenceKind.T2)}
        print(f"{path}: cohort manifest, {len(cohort.patients)} patients, labeled {labeled}")
        return
    print(f"{path}: dataset manifest")
    print(format_summary(manifest))


def cmd_inspect(args):
    for name in args.paths:
        path = Path(name)
        if not path.exists():
            raise CmrForgeError(f"no such file: {path}")
        if path.name.endswith(".json"):
            _inspect_json(path)
        else:
            _inspect_nifti(path)
    return 0


# --------------------------------------------------------------------- main

def build_parser():
    parser = _Parser(prog="cmrforge", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"cmrforge {cmrforge.__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", help="JSON file with default values for this subcommand's flags")
        p.add_argument("--threads", type=int, default=_default_threads(),
                       help=f"worker threads (default: ${THREADS_ENV} or CPU count)")

    p = sub.add_parser("phantom", help="generate a synthetic multi-sequence cohort")
    common(p)
    p.add_argument("--patients", type=int, default=45)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--size", type=int, default=256, help="in-plane size in pixels")
    p.add_argument("--noise", type=float, default=0.02, help="gaussian noise sigma")
    p.add_argument("--labeled-lge", type=int)
    p.add_argument("--labeled-bssfp", type=int)
    p.add_argument("--labeled-t2", type=int)
    p.add_argument("--lge-slices", type=int, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--bssfp-slices", type=int, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--t2-slices", type=int, nargs=2, metavar=("LO", "HI"))
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("preprocess", help="bias correction, histogram matching, standardization")
    common(p)
    p.add_argument("--cohort", required=True, help="cohort.json of the input cohort")
    p.add_argument("--out", required=True)
    p.add_argument("--scope", choices=("global", "per-sequence"), default="global",
                   help="histogram reference built over all volumes or per sequence")
    p.add_argument("--degree", type=int, default=3, help="bias polynomial degree")
    p.add_argument("--skip-bias", action="store_true")
    p.add_argument("--target-spacing", type=float, nargs=2, default=[1.25, 1.25], metavar=("SX", "SY"))
    p.add_argument("--target-size", type=int, nargs=2, default=[256, 256], metavar=("NX", "NY"))
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("augment", help="materialize myocardial rotation sets for audit")
    common(p)
    p.add_argument("--cohort", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--landmarks", action="store_true", help="export landmark JSON per patient")
    p.add_argument("--step", type=float, default=7.2)
    p.add_argument("--count", type=int, default=20)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("build-dataset", help="assemble one of the 8 training configurations")
    common(p)
    p.add_argument("--cohort", required=True)
    p.add_argument("--out", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--training-config", "--config-id", dest="training_config", type=int,
                       choices=range(1, 9), metavar="1..8")
    group.add_argument("--domain", choices=("bSSFP", "LGE", "T2"),
                       help="all slices of one domain (for synthesis training)")
    p.add_argument("--synthetic-dir", help="trainer synthesis output (configs 5-8)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--drop-original", action="store_true",
                   help="rotation configs: keep only the 20 rotated variants per slice")
    p.set_defaults(func=cmd_build_dataset)

    p = sub.add_parser("evaluate", help="segmentation metrics over paired prediction/gt dirs")
    common(p)
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", help="write report.json / report.txt here")
    p.add_argument("--spacing-from-header", action="store_true", default=True,
                   help="voxel spacing from the ground-truth headers (default)")
    p.add_argument("--spacing", type=float, nargs=3, metavar=("SX", "SY", "SZ"),
                   help="override spacing in mm")
    p.add_argument("--mode", choices=("3d", "2d"), default="3d")
    p.add_argument("--percentile", type=float, help="percentile Hausdorff (e.g. 95); default true max")
    p.add_argument("--remap", help="JSON file mapping external label codes to 0..3")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("inspect", help="describe NIfTI files and manifests")
    p.add_argument("paths", nargs="+")
    p.set_defaults(func=cmd_inspect)

    parser.subparser_map = {name: sp for name, sp in sub.choices.items()}
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        if args.command == "build-dataset" and args.training_config and \
                args.training_config >= 5 and not args.synthetic_dir:
            parser.error(f"--synthetic-dir is required for training configuration {args.training_config}")
        return args.func(args)
    except SystemExit as e:
        return int(e.code or 0)
    except CmrForgeError as e:
        print(f"cmrforge: error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"cmrforge: i/o error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
