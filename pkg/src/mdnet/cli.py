"""Command-line pipelines: phantom -> preprocess -> train -> predict -> evaluate.

Exit codes: 0 success, 1 invalid input or usage, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .errors import MDNetError
from .metrics import evaluate_case, filtration_curve, write_metrics_csv
from .model import build_model, load_checkpoint, predict_probs
from .postprocess import postprocess_probs
from .preprocess import CropPadInfo, preprocess_case, restore_shape
from .train import cross_validate, train_ensemble, train_model, write_history_csv
from .uncertainty import (UNCERTAINTY_SUFFIXES, ensemble_mean, save_uncertainty_maps,
                          uncertainty_from_prob)
from .volume import (MODALITIES, REGIONS, MultiModalVolume, ProbabilityMapSet,
                     UncertaintyMapSet, labels_to_regions, load_array, load_volume, make_phantom,
                     save_volume)

log = logging.getLogger("mdnet")

PROB_SUFFIX = {"whole": "_prob_whole", "core": "_prob_core", "enhancing": "_prob_enhance"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_help(sys.stderr)
        raise UsageError(message)


def _cases(root) -> list[Path]:
    cases = sorted(p for p in Path(root).glob("case_*") if p.is_dir())
    if not cases:
        raise FileNotFoundError(f"no case_* directories under {root}")
    return cases


def _map(fn, items, workers):
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# subcommands


def cmd_phantom(args, config):
    out = Path(args.out)

    def one(i):
        vol, mask = make_phantom([args.seed, i], tuple(args.shape))
        case = out / f"case_{i:04d}"
        case.mkdir(parents=True, exist_ok=True)
        for c, name in enumerate(MODALITIES):
            save_volume(vol.data[c], case / f"{name}.nii.gz", vol.spacing)
        save_volume(mask, case / "seg.nii.gz")

    _map(one, range(args.n), args.workers)
    log.info("wrote %d phantom cases to %s", args.n, out)


def _load_raw_case(case: Path):
    chans, spacing = [], None
    for name in MODALITIES:
        data, spacing = load_array(case / f"{name}.nii.gz")
        chans.append(data.astype(np.float32))
    vol = MultiModalVolume(np.stack(chans), spacing, MODALITIES)
    seg = case / "seg.nii.gz"
    return vol, (load_volume(seg, label=True) if seg.exists() else None)


def cmd_preprocess(args, config):
    out = Path(args.out)

    def one(case):
        vol, mask = _load_raw_case(case)
        dst = out / case.name
        dst.mkdir(parents=True, exist_ok=True)
        if mask is None:
            image, info = preprocess_case(vol, config.preprocess)
        else:
            image, cropped, info = preprocess_case(vol, config.preprocess, mask)
            save_volume(cropped, dst / "seg.nii.gz")
        save_volume(image, dst / "image.nii.gz")
        (dst / "crop.json").write_text(json.dumps(
            {"crop": info.to_dict(), "spacing": list(vol.spacing)}, indent=2))

    _map(one, _cases(args.data), args.workers)


def _load_prepared(case: Path):
    image = load_volume(case / "image.nii.gz")
    seg = case / "seg.nii.gz"
    mask = load_volume(seg, label=True) if seg.exists() else None
    meta = json.loads((case / "crop.json").read_text())
    return image, mask, CropPadInfo.from_dict(meta["crop"]), tuple(meta["spacing"])


def cmd_train(args, config):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(config.to_json())
    cases = _cases(args.data)
    data = []
    for case in cases:
        image, mask, _, _ = _load_prepared(case)
        if mask is None:
            raise FileNotFoundError(f"{case} has no seg.nii.gz")
        data.append((image.data, mask))

    kw = {"loss_config": config.loss, "augment_config": config.augment}
    if args.folds:
        tcfg = cfgmod.TrainConfig(**{**config.train.__dict__, "n_folds": args.folds})
        rows = cross_validate(data, [c.name for c in cases], config.model, tcfg,
                              config.postprocess, config.metrics, **kw)
        write_metrics_csv([{k: v for k, v in r.items() if k != "fold"} for r in rows],
                          out / "cv_metrics.csv")
    if args.ensemble:
        tcfg = cfgmod.TrainConfig(**{**config.train.__dict__, "n_ensemble": args.ensemble})
        train_ensemble(data, config.model, tcfg, out_dir=out, **kw)
    elif not args.folds:
        seed = config.train.seed
        result = train_model(data, build_model(config.model, seed=seed), config.train,
                             checkpoint_path=out / f"model_seed{seed}.pt", **kw)
        write_history_csv(result.history, out / f"history_seed{seed}.csv")


def _write_probs(probs: ProbabilityMapSet, info, spacing, out: Path, case: str):
    for region, p in zip(REGIONS, probs.as_tuple()):
        save_volume(restore_shape(p, info).astype(np.float32),
                    out / f"{case}{PROB_SUFFIX[region]}.nii.gz", spacing)


def _predict(args, config, checkpoints):
    models = [load_checkpoint(c)[0] for c in checkpoints]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def one(case):
        image, _, info, spacing = _load_prepared(case)
        probs = ensemble_mean(predict_probs(m, image.data) for m in models)
        _write_probs(probs, info, spacing, out, case.name)

    _map(one, _cases(args.data), args.workers)


def cmd_predict(args, config):
    _predict(args, config, [args.checkpoint])


def cmd_ensemble_predict(args, config):
    _predict(args, config, args.checkpoints)


def _read_probs(pred: Path, case: str):
    maps, spacing = [], None
    for region in REGIONS:
        data, spacing = load_array(pred / f"{case}{PROB_SUFFIX[region]}.nii.gz")
        maps.append(np.clip(data, 0, 1))
    return ProbabilityMapSet(*maps), spacing


def _pred_cases(pred: Path) -> list[str]:
    cases = sorted(p.name[: -len("_prob_whole.nii.gz")] for p in pred.glob("*_prob_whole.nii.gz"))
    if not cases:
        raise FileNotFoundError(f"no *_prob_whole.nii.gz under {pred}")
    return cases


def cmd_postprocess(args, config):
    pred = Path(args.pred)

    def one(case):
        probs, spacing = _read_probs(pred, case)
        labels = postprocess_probs(probs, config.postprocess, spacing)
        save_volume(labels, pred / f"{case}_seg.nii.gz")

    _map(one, _pred_cases(pred), args.workers)


def cmd_uncertainty(args, config):
    pred = Path(args.pred)

    def one(case):
        probs, spacing = _read_probs(pred, case)
        save_uncertainty_maps(uncertainty_from_prob(probs), case, pred, spacing)

    _map(one, _pred_cases(pred), args.workers)


def _read_unc(pred: Path, case: str):
    paths = [pred / f"{case}{UNCERTAINTY_SUFFIXES[r]}.nii.gz" for r in REGIONS]
    if not all(p.exists() for p in paths):
        return None
    return UncertaintyMapSet(*(load_array(p)[0] for p in paths))


def cmd_evaluate(args, config):
    pred, data = Path(args.pred), Path(args.data)
    cases = sorted(p.name[: -len("_seg.nii.gz")] for p in pred.glob("case_*_seg.nii.gz"))
    if not cases:
        raise FileNotFoundError(f"no *_seg.nii.gz under {pred}")

    def one(case):
        seg = load_volume(pred / f"{case}_seg.nii.gz", label=True)
        truth = load_volume(data / case / "seg.nii.gz", label=True)
        return evaluate_case(case, seg, truth, _read_unc(pred, case), config.metrics)

    rows = [r for rs in _map(one, cases, args.workers) for r in rs]
    write_metrics_csv(rows, args.out)
    if args.report:
        _report(Path(args.report), pred, data, cases, args.history or [], config)


def _report(out: Path, pred: Path, data: Path, cases, histories, config):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out.mkdir(parents=True, exist_ok=True)
    if histories:
        fig, ax = plt.subplots(figsize=(6, 4))
        for h in histories:
            rows = np.genfromtxt(h, delimiter=",", names=True)
            ax.plot(np.atleast_1d(rows["epoch"]), np.atleast_1d(rows["loss"]), label=Path(h).stem)
        ax.set_xlabel("epoch")
        ax.set_ylabel("training loss")
        ax.legend()
        fig.tight_layout()
        fig.savefig(out / "loss_curves.png", dpi=100)
        plt.close(fig)

    for case in cases:
        unc = _read_unc(pred, case)
        if unc is None:
            continue
        seg = load_volume(pred / f"{case}_seg.nii.gz", label=True)
        truth = load_volume(data / case / "seg.nii.gz", label=True)
        pr, tr = labels_to_regions(seg), labels_to_regions(truth)
        fig, axes = plt.subplots(1, 3, figsize=(12, 3.5))
        for ax, region in zip(axes, REGIONS):
            curve = filtration_curve(pr[region], tr[region], unc[region],
                                     config.metrics.filtration_thresholds)
            ax.plot(curve.thresholds, curve.dice_at_tau, label="Dice")
            ax.plot(curve.thresholds, curve.ftp_ratio_at_tau, label="filtered TP")
            ax.plot(curve.thresholds, curve.ftn_ratio_at_tau, label="filtered TN")
            ax.set_title(region)
            ax.set_xlabel("uncertainty threshold")
        axes[0].legend()
        fig.tight_layout()
        fig.savefig(out / f"{case}_filtration.png", dpi=100)
        plt.close(fig)


def cmd_selftest(args, config):
    from .selftest import run

    failed = 0
    for name, ok, detail in run(args.seed):
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        failed += not ok
    if failed:
        raise MDNetError(f"{failed} self-test check(s) failed")


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help=f"JSON config (default: ${cfgmod.ENV_VAR})")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config key; repeatable")
    common.add_argument("--toy", action="store_true", help="start from the 32^3 desk-scale preset")
    common.add_argument("--seed", type=int, default=None, help="master seed (train.seed, augment.seed)")
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="mdnet", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("phantom", parents=[common], help="generate synthetic cases")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--shape", type=int, nargs=3, default=(32, 32, 32))
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("preprocess", parents=[common], help="denoise-stack, normalize, resize")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", parents=[common], help="train one model, an ensemble, or CV folds")
    p.add_argument("--data", required=True, help="preprocessed dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--folds", type=int, default=0)
    p.add_argument("--ensemble", type=int, default=0)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--steps", type=int, default=None, help="stop after this many optimizer steps")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", parents=[common], help="probability maps from one checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("ensemble-predict", parents=[common], help="mean probability maps of members")
    p.add_argument("--checkpoints", nargs="+", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ensemble_predict)

    p = sub.add_parser("postprocess", parents=[common], help="probability maps to label masks")
    p.add_argument("--pred", required=True)
    p.set_defaults(func=cmd_postprocess)

    p = sub.add_parser("uncertainty", parents=[common], help="uncertainty maps from probabilities")
    p.add_argument("--pred", required=True)
    p.set_defaults(func=cmd_uncertainty)

    p = sub.add_parser("evaluate", parents=[common], help="metrics CSV (and optional plots)")
    p.add_argument("--pred", required=True)
    p.add_argument("--data", required=True, help="raw dataset with ground-truth seg.nii.gz")
    p.add_argument("--out", required=True, help="metrics CSV path")
    p.add_argument("--report", help="directory for PNG plots")
    p.add_argument("--history", nargs="*", help="history CSVs for loss curves")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("selftest", parents=[common], help="brute-force oracle checks")
    p.set_defaults(func=cmd_selftest)
    return parser


def _effective_config(args):
    base = cfgmod.toy_config() if args.toy else None
    config = cfgmod.load_config(args.config, base)
    sets = list(args.set)
    if args.seed is not None:
        sets += [f"train.seed={args.seed}", f"augment.seed={args.seed}"]
    if getattr(args, "epochs", None):
        sets.append(f"train.n_epochs={args.epochs}")
    if getattr(args, "steps", None):
        sets.append(f"train.max_steps={args.steps}")
    return cfgmod.override(config, sets)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"mdnet: error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = _effective_config(args)
        if args.seed is None:
            args.seed = config.train.seed
        log.info("effective config:\n%s", config.to_json())
        args.func(args, config)
    except (MDNetError, cfgmod.ConfigError, FileNotFoundError, ValueError) as exc:
        log.error("%s", exc)
        return 1
    except Exception as exc:  # noqa: BLE001 - report any runtime failure as exit 2
        log.exception("runtime failure: %s", exc)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
