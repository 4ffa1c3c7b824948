"""Command-line entry points.

Subcommands: synth, train, eval, predict, ablate-missing, cohorts, serve.
Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import archive, data, interpretation, synth, training


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ppn", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="write a synthetic dataset with planted subtypes")
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--patients", type=int, default=2000)
    sp.add_argument("--format", choices=["jsonl", "csv"], default=None)

    tp = sub.add_parser("train", help="train a model from a config file")
    tp.add_argument("--config", required=True)
    tp.add_argument("--train", required=True, dest="train_path")
    tp.add_argument("--val", required=True, dest="val_path")
    tp.add_argument("--out", required=True, help="model archive output path")
    tp.add_argument("--metrics", default=None, help="per-epoch metrics CSV path")

    ep = sub.add_parser("eval", help="print AUPRC and AUROC of a model on a dataset")
    ep.add_argument("--model", required=True)
    ep.add_argument("--data", required=True)

    pp = sub.add_parser("predict", help="score one patient file")
    pp.add_argument("--model", required=True)
    pp.add_argument("--patient", required=True, help="dataset file holding the patient")
    pp.add_argument("--id", default=None, help="patient id when the file holds several")
    pp.add_argument("--trajectory", action="store_true")

    ap = sub.add_parser("ablate-missing", help="AUPRC under reduced visit/observation rates")
    ap.add_argument("--model", required=True)
    ap.add_argument("--data", required=True)
    ap.add_argument("--axis", choices=["visit", "observation"], default="visit")
    ap.add_argument("--rates", default="1.0,0.75,0.5,0.25")
    ap.add_argument("--seeds", default="0,1,2")
    ap.add_argument("--out", default=None, help="write the table as CSV")

    cp = sub.add_parser("cohorts", help="export prototype and cohort tables")
    cp.add_argument("--model", required=True)
    cp.add_argument("--data", required=True)
    cp.add_argument("--out-dir", required=True)

    vp = sub.add_parser("serve", help="start the HTTP service")
    vp.add_argument("--model", required=True)
    vp.add_argument("--data", default=None)
    vp.add_argument("--host", default="127.0.0.1")
    vp.add_argument("--port", type=int, default=8000)
    return p


def _load_for_model(model, path: str) -> data.Dataset:
    ds = data.load_dataset(path)
    if ds.indicator_names != model.arch.indicator_names:
        raise data.IngestionError(f"{path}: indicators {ds.indicator_names} do not match "
                                  f"the model's {model.arch.indicator_names}")
    return ds


def _cmd_synth(args) -> int:
    ds = synth.default_dataset(args.patients, seed=args.seed)
    data.save_dataset(ds, args.out, format=args.format)
    print(f"wrote {len(ds)} patients to {args.out}")
    return 0


def _cmd_train(args) -> int:
    config = training.load_config(args.config)
    train_raw = data.load_dataset(args.train_path)
    val_raw = data.load_dataset(args.val_path)
    stats = data.compute_stats(train_raw)
    train_ds = data.normalize_and_impute(train_raw, stats)
    val_ds = data.normalize_and_impute(val_raw, stats)
    model, report = training.train(config, train_ds, val_ds)
    archive.save_model(model, args.out, train_config=config)
    if args.metrics:
        training.write_metrics_csv(report, args.metrics)
    print(f"best epoch {report.best_epoch}: val AUPRC {report.auprc:.4f}, "
          f"val AUROC {report.auroc:.4f}; archive at {args.out}")
    return 0


def _cmd_eval(args) -> int:
    model, _ = archive.load_model(args.model)
    ds = _load_for_model(model, args.data)
    prepared = data.Dataset([model.prepare_record(r) for r in ds.records],
                            ds.indicator_names, ds.static_names)
    au_prc, au_roc = training.evaluate(model, prepared)
    print(f"AUPRC {au_prc:.6f}")
    print(f"AUROC {au_roc:.6f}")
    return 0


def _cmd_predict(args) -> int:
    model, _ = archive.load_model(args.model)
    ds = _load_for_model(model, args.patient)
    if args.id is not None:
        matches = [r for r in ds.records if r.id == args.id]
        if not matches:
            raise data.IngestionError(f"no patient {args.id!r} in {args.patient}")
        rec = matches[0]
    elif len(ds.records) == 1:
        rec = ds.records[0]
    else:
        raise data.IngestionError(f"{args.patient} holds {len(ds.records)} patients; "
                                  "pass --id to pick one")
    out = model.predict(model.prepare_record(rec))
    resp = {"risk": out.risk, "similarity": [float(v) for v in out.similarities],
            "nearest_prototype": out.nearest}
    if args.trajectory:
        entries = interpretation.trajectory(model, rec)
        resp["trajectory"] = [{"t": e.t, "similarity": e.similarities,
                               "nearest_prototype": e.nearest, "risk": e.risk}
                              for e in entries]
    print(json.dumps(resp, indent=1))
    return 0


def _cmd_ablate(args) -> int:
    model, _ = archive.load_model(args.model)
    ds = _load_for_model(model, args.data)
    rates = [float(r) for r in args.rates.split(",")]
    seeds = [int(s) for s in args.seeds.split(",")]
    table = training.run_missingness_experiment(model, ds, rates,
                                                axis=args.axis, seeds=seeds)
    for row in table:
        print(f"rate {row['rate']:.2f}: AUPRC {row['auprc_mean']:.4f} "
              f"+/- {row['auprc_std']:.4f}")
    if args.out:
        training.write_experiment_csv(table, args.out)
    return 0


def _cmd_cohorts(args) -> int:
    model, _ = archive.load_model(args.model)
    ds = _load_for_model(model, args.data)
    cards = interpretation.prototype_cards(model, ds)
    cohorts = [card.cohort for card in cards]
    os.makedirs(args.out_dir, exist_ok=True)
    cards_path = os.path.join(args.out_dir, "prototypes.csv")
    cohorts_path = os.path.join(args.out_dir, "cohorts.csv")
    interpretation.export_cards_csv(cards, ds.static_names, cards_path)
    interpretation.export_cohorts_csv(cohorts, ds.static_names, cohorts_path)
    print(f"wrote {cards_path} and {cohorts_path}")
    return 0


def _cmd_serve(args) -> int:
    from . import service
    model, _ = archive.load_model(args.model)
    ds = _load_for_model(model, args.data) if args.data else None
    service.run_service(model, ds, host=args.host, port=args.port)
    return 0


_COMMANDS = {"synth": _cmd_synth, "train": _cmd_train, "eval": _cmd_eval,
             "predict": _cmd_predict, "ablate-missing": _cmd_ablate,
             "cohorts": _cmd_cohorts, "serve": _cmd_serve}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except Exception as exc:  # runtime failures map to exit 1 with a message
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
