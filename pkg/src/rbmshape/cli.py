"""Command-line pipeline: gen-data -> train-frontal / train-pose -> sample /
correct / track -> eval.

Options come from built-in defaults, then an optional ``--config`` JSON file
(keys are option names with dashes replaced by underscores), then flags.
Every stage draws randomness from the master ``--seed``, split by stage name.

Exit codes: 0 success, 2 missing input file, 3 invalid configuration,
4 schema or numerical failure.
"""

import argparse
import json
import logging
import os
import sys
import time
import zlib

import numpy as np
from scipy.linalg import LinAlgError

from . import persistence, synth
from .energy import TrainConfig
from .frontal import FrontalPriorModel, SamplerConfig, sample_local_prior, train_frontal
from .fusion import KdeConfig, NotPositiveDefinite, estimate_sigma_l
from .pose import POSE_LEARNING_RATE, PosePriorModel, sample_pose_prior, train_pose
from .tracking import TrackReport, interocular_error, refine, track_sequence

log = logging.getLogger("rbmshape")

EXIT_MISSING, EXIT_CONFIG, EXIT_NUMERIC = 2, 3, 4
CORRUPTIONS = {"outlier": "outlier_point", "half": "half_face", "noise": "additive_noise"}


class ConfigError(Exception):
    usage_shown = False


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        err = ConfigError(message)
        err.usage_shown = True
        raise err


DEFAULTS = {
    "seed": 0,
    "n": 200, "n_test": 100, "sequences": 0, "seq_len": 20, "noise": 0.05, "outlier_rate": 0.1,
    "pose_deg": None, "sequence_pose_deg": 0.0,
    "hidden1": 50, "hidden2": 25, "factors": 32, "hidden_k": 20,
    "epochs": 500, "lr": None, "cd_k": 1, "batch": 32, "momentum": 0.5, "weight_decay": 1e-4,
    "samples": 100, "sweeps": 2, "chain": False, "fusion": "gaussian",
    "corrupt": "outlier", "magnitude": 0.5, "index": 0, "ridge": 1e-6,
}


def _opt(p, *flags, **kw):
    kw.setdefault("default", argparse.SUPPRESS)
    p.add_argument(*flags, **kw)


def build_parser():
    parser = _Parser(prog="rbmshape", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)

    def command(name, help):
        p = sub.add_parser(name, help=help)
        _opt(p, "--config", help="JSON config file")
        _opt(p, "--seed", type=int, help="master seed (default 0)")
        return p

    p = command("gen-data", "write synthetic corpora")
    _opt(p, "--out-dir", required=True)
    _opt(p, "--n", type=int, help="training shapes")
    _opt(p, "--n-test", type=int, help="held-out shapes")
    _opt(p, "--pose-deg", type=float, nargs="*", help="pair angles (a single value means +/-)")
    _opt(p, "--sequences", type=int, help="number of sequences")
    _opt(p, "--seq-len", type=int)
    _opt(p, "--noise", type=float, help="measurement noise std (IOD)")
    _opt(p, "--outlier-rate", type=float)
    _opt(p, "--sequence-pose-deg", type=float)

    def training(p):
        _opt(p, "--data", required=True)
        _opt(p, "--out", required=True)
        _opt(p, "--epochs", type=int)
        _opt(p, "--lr", type=float, help="learning rate (default 0.01 frontal, 0.005 pose)")
        _opt(p, "--cd-k", type=int)
        _opt(p, "--batch", type=int)
        _opt(p, "--momentum", type=float)
        _opt(p, "--weight-decay", type=float)

    p = command("train-frontal", "train the frontal DBN prior")
    training(p)
    _opt(p, "--hidden1", type=int)
    _opt(p, "--hidden2", type=int, help="0 for a single-layer prior")

    p = command("train-pose", "train the pose transfer model")
    training(p)
    _opt(p, "--frontal", required=True, help="trained frontal model JSON")
    _opt(p, "--factors", type=int)
    _opt(p, "--hidden-k", type=int)

    def sampler(p):
        _opt(p, "--samples", type=int, help="prior samples per shape (D)")
        _opt(p, "--sweeps", type=int, help="sweeps per sample (S)")
        _opt(p, "--chain", action="store_true", help="chain samples instead of restarting")

    p = command("sample", "draw local prior samples around one shape")
    _opt(p, "--model", required=True)
    _opt(p, "--data", required=True)
    _opt(p, "--index", type=int)
    _opt(p, "--out", required=True)
    sampler(p)

    p = command("correct", "corrupt shapes and correct them with the prior")
    _opt(p, "--model", required=True)
    _opt(p, "--data", required=True, help="clean shapes (ground truth)")
    _opt(p, "--calibration", help="clean shapes for estimating sigma_l (default: --data)")
    _opt(p, "--out-dir", required=True)
    _opt(p, "--corrupt", choices=sorted(CORRUPTIONS))
    _opt(p, "--magnitude", type=float)
    _opt(p, "--pose-deg", type=float, help="project shapes to this yaw before corrupting")
    _opt(p, "--fusion", choices=["gaussian", "kde"])
    _opt(p, "--ridge", type=float)
    sampler(p)

    p = command("track", "track measurement sequences")
    _opt(p, "--model", required=True)
    _opt(p, "--data", required=True, help="sequence JSON Lines")
    _opt(p, "--calibration", help="sequences with ground truth for sigma_l (default: --data)")
    _opt(p, "--out-dir", required=True)
    _opt(p, "--fusion", choices=["gaussian", "kde"])
    _opt(p, "--ridge", type=float)
    sampler(p)

    p = command("eval", "landmark errors of tracked shapes against ground truth")
    _opt(p, "--tracked", required=True)
    _opt(p, "--truth", required=True)
    _opt(p, "--baseline", help="measurement shapes for the baseline column")
    _opt(p, "--out-dir", required=True)
    return parser


def resolve(args):
    """Merge defaults, the config file and explicit flags."""
    given = vars(args).copy()
    cfg = dict(DEFAULTS)
    path = given.pop("config", None)
    if path is not None:
        with open(path) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config {path}: {exc.msg}") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"config {path}: expected a JSON object")
        cfg.update({k.replace("-", "_"): v for k, v in doc.items()})
    cfg.update(given)
    cfg["seed"] = int(cfg["seed"])
    return cfg


def stage_rng(cfg, stage):
    return np.random.default_rng(np.random.SeedSequence([cfg["seed"], zlib.crc32(stage.encode())]))


def train_config(cfg, default_lr=0.01):
    lr = default_lr if cfg["lr"] is None else cfg["lr"]
    try:
        return TrainConfig(cd_steps=cfg["cd_k"], learning_rate=lr, epochs=cfg["epochs"],
                           batch_size=cfg["batch"], momentum=cfg["momentum"],
                           weight_decay=cfg["weight_decay"], rng_seed=cfg["seed"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def sampler_config(cfg):
    try:
        return SamplerConfig(cfg["sweeps"], cfg["samples"], not cfg["chain"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _config_echo(cfg):
    return {k: v for k, v in sorted(cfg.items())}


def _write_json(path, doc):
    persistence._write_text(path, json.dumps(doc, sort_keys=True, indent=2) + "\n")


def cmd_gen_data(cfg):
    if cfg["n"] < 1:
        raise ConfigError("--n must be >= 1")
    out = cfg["out_dir"]
    rng_train, rng_test, rng_seq, rng_cal = (np.random.default_rng(s) for s in
                                              np.random.SeedSequence([cfg["seed"], 1]).spawn(4))
    poses = cfg["pose_deg"] or []
    if len(poses) == 1:
        poses = [-abs(poses[0]), abs(poses[0])]
    for theta in poses:
        if not abs(theta) < synth.MAX_POSE_DEG:
            raise ConfigError(f"pose angle {theta} outside (-50, 50) degrees")
    train = synth.sample_shapes(cfg["n"], rng_train)
    test = synth.sample_shapes(cfg["n_test"], rng_test) if cfg["n_test"] > 0 else []
    persistence.write_shapes(os.path.join(out, "frontal.jsonl"), train)
    persistence.write_shapes(os.path.join(out, "test.jsonl"), test)
    persistence.write_pairs(os.path.join(out, "pairs.jsonl"), synth.make_pairs(train, poses))
    persistence.write_template(os.path.join(out, "template.json"))
    labels = [e for e in synth.EXPRESSIONS if e != "neutral"]
    for name, count, rng in (("sequences.jsonl", cfg["sequences"], rng_seq),
                             ("calibration_sequences.jsonl", cfg["sequences"], rng_cal)):
        seqs = [synth.make_sequence(f"q{i:04d}", labels[i % len(labels)], rng, cfg["seq_len"],
                                    cfg["sequence_pose_deg"], cfg["noise"], cfg["outlier_rate"])
                for i in range(count)]
        persistence.write_sequences(os.path.join(out, name), seqs)
    _write_json(os.path.join(out, "gen_data.json"), {"config": _config_echo(cfg), "seed": cfg["seed"]})
    return {"shapes": len(train), "test": len(test), "pose_angles": poses}


def cmd_train_frontal(cfg):
    data = persistence.shapes_array(persistence.read_shapes(cfg["data"]))
    model = train_frontal(data, (cfg["hidden1"], cfg["hidden2"] or None), train_config(cfg),
                          rng=stage_rng(cfg, "train-frontal"))
    persistence.save_model(model, cfg["out"])
    return {"H1": model.sizes[0], "H2": model.sizes[1], "shapes": len(data)}


def cmd_train_pose(cfg):
    frontal = persistence.load_model(cfg["frontal"])
    if isinstance(frontal, PosePriorModel):
        frontal = frontal.frontal
    pairs = persistence.read_pairs(cfg["data"])
    if len(pairs) < 2:
        raise ConfigError("need at least 2 pairs")
    x = np.array([p.x for p in pairs])
    y = np.array([p.y for p in pairs])
    model = train_pose(frontal, x, y, (cfg["hidden_k"], cfg["factors"]), train_config(cfg, POSE_LEARNING_RATE),
                       rng=stage_rng(cfg, "train-pose"))
    persistence.save_model(model, cfg["out"])
    return {"K": cfg["hidden_k"], "F": cfg["factors"], "pairs": len(pairs)}


def _sample(model, shape, sampler, rng):
    if isinstance(model, PosePriorModel):
        return sample_pose_prior(model, shape, sampler, rng)
    return sample_local_prior(model, shape, sampler, rng)


def cmd_sample(cfg):
    model = persistence.load_model(cfg["model"])
    records = persistence.read_shapes(cfg["data"])
    if not 0 <= cfg["index"] < len(records):
        raise ConfigError(f"--index {cfg['index']} outside [0, {len(records)})")
    rec = records[cfg["index"]]
    samples = _sample(model, rec.coords, sampler_config(cfg), stage_rng(cfg, "sample"))
    out = [synth.ShapeRecord(f"{rec.id}_d{d:03d}", rec.expression_label, rec.pose_deg, s)
           for d, s in enumerate(samples)]
    persistence.write_shapes(cfg["out"], out)
    return {"samples": len(out), "source": rec.id}


def _corruption(cfg, rng):
    mode = CORRUPTIONS[cfg["corrupt"]]
    indices = (int(rng.integers(synth.N_POINTS)),) if mode == "outlier_point" else None
    return synth.CorruptionSpec(mode, indices, cfg["magnitude"])


def _posed(records, cfg):
    theta = cfg.get("pose_deg")
    if isinstance(theta, list):
        theta = theta[0] if theta else None
    if not theta:
        return records, 0.0
    if not abs(theta) < synth.MAX_POSE_DEG:
        raise ConfigError(f"pose angle {theta} outside (-50, 50) degrees")
    return [synth.ShapeRecord(r.id, r.expression_label, theta, synth.project_pose(r.coords, theta),
                              r.intensity, r.identity) for r in records], theta


def cmd_correct(cfg):
    model = persistence.load_model(cfg["model"])
    truth, theta = _posed(persistence.read_shapes(cfg["data"]), cfg)
    calib, _ = _posed(persistence.read_shapes(cfg.get("calibration") or cfg["data"]), cfg)
    if cfg["magnitude"] < 0:
        raise ConfigError("--magnitude must be nonnegative")
    rng_cal, rng_cor, rng_samp = (np.random.default_rng(s) for s in
                                  np.random.SeedSequence([cfg["seed"], zlib.crc32(b"correct")]).spawn(3))
    cal_truth = np.array([r.coords for r in calib])
    cal_meas = np.array([synth.corrupt(c, _corruption(cfg, rng_cal), rng_cal)[0] for c in cal_truth])
    mm = estimate_sigma_l(cal_truth, cal_meas, cfg["ridge"])
    sampler = sampler_config(cfg)
    measured, corrected, targets = [], [], []
    for rec in truth:
        meas, tg = synth.corrupt(rec.coords, _corruption(cfg, rng_cor), rng_cor)
        fixed = refine(model, meas, mm, cfg["fusion"], sampler, rng_samp)
        measured.append(synth.ShapeRecord(rec.id, rec.expression_label, theta, meas))
        corrected.append(synth.ShapeRecord(rec.id, rec.expression_label, theta, fixed))
        targets.append(tg)
    out = cfg["out_dir"]
    _write_records(os.path.join(out, "measured.jsonl"), measured, targets)
    _write_records(os.path.join(out, "corrected.jsonl"), corrected, targets)
    persistence.write_shapes(os.path.join(out, "truth.jsonl"), truth)
    _write_json(os.path.join(out, "correct.json"), {"config": _config_echo(cfg), "seed": cfg["seed"]})
    return {"shapes": len(truth), "fusion": cfg["fusion"], "corruption": cfg["corrupt"]}


def _write_records(path, records, targets):
    docs = []
    for rec, tg in zip(records, targets):
        doc = rec.to_json()
        doc["corrupted_indices"] = [int(i) for i in tg]
        docs.append(doc)
    persistence.write_jsonl(path, docs)


def cmd_track(cfg):
    model = persistence.load_model(cfg["model"])
    seqs = persistence.read_sequences(cfg["data"])
    calib = persistence.read_sequences(cfg.get("calibration") or cfg["data"])
    pairs = [(f.ground_truth, f.measurement) for s in calib for f in s.frames if f.ground_truth is not None]
    if len(pairs) < 2:
        raise ConfigError("calibration sequences need ground truth on at least 2 frames")
    mm = estimate_sigma_l(*map(np.array, zip(*pairs)), ridge=cfg["ridge"])
    rng = stage_rng(cfg, "track")
    sampler = sampler_config(cfg)
    report = TrackReport.concat([track_sequence(s, model, mm, cfg["fusion"], sampler, rng,
                                                kde=KdeConfig()) for s in seqs])
    out = cfg["out_dir"]
    persistence._write_text(os.path.join(out, "track_report.csv"), report.to_csv())
    persistence._write_text(os.path.join(out, "track_curve.csv"), report.curve_csv())
    summary = {"config": _config_echo(cfg), "seed": cfg["seed"], **report.summary()}
    _write_json(os.path.join(out, "track_summary.json"), summary)
    return report.summary()


def cmd_eval(cfg):
    tracked = {r["id"]: r for r in persistence.read_jsonl(cfg["tracked"])}
    truth = persistence.read_shapes(cfg["truth"])
    base = {r["id"]: r for r in persistence.read_jsonl(cfg["baseline"])} if cfg.get("baseline") else None
    rows, base_rows, ids, corrupted = [], [], [], []
    for rec in truth:
        if rec.id not in tracked:
            raise ConfigError(f"tracked file has no record with id {rec.id!r}")
        doc = tracked[rec.id]
        est = synth.ShapeRecord.from_json(doc).coords
        rows.append(interocular_error(est, rec.coords))
        if base is not None:
            base_rows.append(interocular_error(synth.ShapeRecord.from_json(base[rec.id]).coords, rec.coords))
        corrupted.append(doc.get("corrupted_indices"))
        ids.append(rec.id)
    if not rows:
        raise ConfigError("no records to evaluate")
    errors = np.array(rows)
    baseline = np.array(base_rows) if base is not None else errors
    report = TrackReport(errors, baseline, [0] * len(ids), ids)
    summary = {"config": _config_echo(cfg), "seed": cfg["seed"], **report.summary()}
    if base is None:
        summary.pop("baseline")
        summary.pop("improvement_percent")
    if all(c for c in corrupted):
        e_c = np.mean([errors[i, c].mean() for i, c in enumerate(corrupted)])
        summary["corrupted_points"] = {"tracked": float(e_c)}
        if base is not None:
            b_c = np.mean([baseline[i, c].mean() for i, c in enumerate(corrupted)])
            summary["corrupted_points"]["baseline"] = float(b_c)
            summary["corrupted_points"]["reduction_percent"] = 100.0 * (b_c - e_c) / b_c if b_c > 0 else 0.0
    out = cfg["out_dir"]
    persistence._write_text(os.path.join(out, "eval_report.csv"), report.to_csv())
    _write_json(os.path.join(out, "eval_summary.json"), summary)
    return {k: v for k, v in summary.items() if k != "config"}


COMMANDS = {
    "gen-data": cmd_gen_data, "train-frontal": cmd_train_frontal, "train-pose": cmd_train_pose,
    "sample": cmd_sample, "correct": cmd_correct, "track": cmd_track, "eval": cmd_eval,
}


def run(argv=None):
    """Run one pipeline stage; returns the process exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise ConfigError("a command is required")
        command = args.command
        del args.command
        cfg = resolve(args)
        t0 = time.perf_counter()
        result = COMMANDS[command](cfg)
        elapsed = time.perf_counter() - t0
    except ConfigError as exc:
        if not exc.usage_shown:
            parser.print_usage(sys.stderr)
        print(f"rbmshape: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"rbmshape: error: file not found: {exc.filename}", file=sys.stderr)
        return EXIT_MISSING
    except (persistence.SchemaError, NotPositiveDefinite, LinAlgError, FloatingPointError) as exc:
        print(f"rbmshape: error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"rbmshape: error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    # timings stay out of the artifacts so reruns are byte-identical
    print(json.dumps({"command": command, "seed": cfg["seed"], "seconds": round(elapsed, 3),
                      "result": result}, sort_keys=True, default=float))
    return 0


def main():
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    sys.exit(run())


if __name__ == "__main__":
    main()
