"""Command-line front end: ``overlaytext {detect,track,extract,eval,synth}``.

Exit codes: 0 success, 1 configuration error, 2 I/O error, 3 external
command failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional

from . import __version__, evaluation, extract, synth
from .imageio import dumps, read_jsonl, write_jsonl
from .pipeline import Config, ConfigError, iter_frames, load_detections, track_frames, write_track_output, detect_frames, extract_tracks

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_IO = 2
EXIT_EXTERNAL = 3

log = logging.getLogger("overlaytext")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("configuration (flags override --config)")
    g.add_argument("--config", help="JSON file with configuration keys")
    g.add_argument("--eta-fo", type=float, help="RCC-5 overlap tolerance (default 0.1)")
    g.add_argument("--epsilon", type=int, help="gap tolerance of the profile grouping (default 2)")
    g.add_argument("--hist-match", type=float, help="colour histogram match threshold (default 0.8)")
    g.add_argument("--max-misses", type=int, help="frames a track may be restored without detection (default 5)")
    g.add_argument("--min-w", type=int, help="minimum band width")
    g.add_argument("--min-h", type=int, help="minimum band height")
    g.add_argument("--plain", dest="enhanced", action="store_const", const=False, help="skip contrast enhancement")
    g.add_argument("--ocr-cmd", help='OCR command template, e.g. "tesseract {img} stdout"')
    g.add_argument("--ocr-timeout", type=float, help="seconds per OCR call (default 10)")
    g.add_argument("--ocr-jobs", type=int, help="concurrent OCR processes (default 4)")
    g.add_argument("--wordlist", help="one word per line; default is the bundled news list")
    g.add_argument("--no-correct", dest="correct", action="store_const", const=False, help="skip dictionary correction")
    g.add_argument("--max-d", type=int, help="maximum correction edit distance, 1 or 2")
    g.add_argument("--debug-dir", help="write intermediate maps and traces here")
    g.add_argument("--threads", type=int, help="detection worker threads (default 1)")
    g.add_argument("--seed", type=int, help="seed for synth")


def _config(args) -> Config:
    keys = (
        "eta_fo", "epsilon", "hist_match", "max_misses", "min_w", "min_h", "enhanced", "ocr_cmd",
        "ocr_timeout", "ocr_jobs", "wordlist", "correct", "max_d", "debug_dir", "threads", "seed",
    )
    return Config.from_sources(args.config, **{k: getattr(args, k, None) for k in keys})


def _open_out(path: Optional[str]):
    if path is None or path == "-":
        return sys.stdout
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    return open(path, "w", encoding="utf-8")


# -- subcommands ---------------------------------------------------------------


def cmd_detect(args) -> int:
    config = _config(args)
    out = _open_out(args.out)
    timings = []
    failed = 0
    try:
        for _, res in detect_frames(iter_frames(args.input), config):
            if res.error:
                log.error("frame %s: %s", res.name, res.error)
                failed += 1
                continue
            out.write(dumps(res.record()) + "\n")
            timings.append({"frame": res.index, "ms": round(res.ms, 3)})
    finally:
        if out is not sys.stdout:
            out.close()
    if args.timings:
        write_jsonl(args.timings, timings)
    if timings:
        rep = evaluation.timing_report(t["ms"] for t in timings)
        log.info("%d frames, mean %.1f ms, p95 %.1f ms", rep["n"], rep["mean_ms"], rep["p95_ms"])
    if failed:
        log.warning("%d frame(s) skipped", failed)
    return EXIT_OK


def cmd_track(args) -> int:
    config = _config(args)
    detections = load_detections(args.detections) if args.detections else None
    result = track_frames(iter_frames(args.input), config, detections)
    write_track_output(result, args.out)
    log.info("%d tracks written to %s", len(result.tracks), args.out)
    return EXIT_OK


def cmd_extract(args) -> int:
    config = _config(args)
    records = extract_tracks(args.tracks, config)
    out = _open_out(args.out)
    try:
        for rec in records:
            out.write(dumps(rec) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def cmd_eval(args) -> int:
    gt = read_jsonl(args.gt)
    report: dict = {}
    rows = []
    if args.pred:
        pred_by = evaluation.rects_by_frame(read_jsonl(args.pred))
        gt_by = evaluation.rects_by_frame(gt)
        frames = sorted(set(pred_by) | set(gt_by))
        m = evaluation.epshtein_prf([pred_by.get(f, []) for f in frames], [gt_by.get(f, []) for f in frames])
        report["detection"] = m.to_dict()
        rows += [("precision", f"{m.precision:.4f}"), ("recall", f"{m.recall:.4f}"), ("f-measure", f"{m.f_measure:.4f}")]
    if args.tracks:
        sys_tracks = evaluation.system_tracks_from_records(read_jsonl(args.tracks))
        tm = evaluation.track_purity_switches(sys_tracks, evaluation.gt_tracks_from_records(gt))
        report["tracking"] = tm.to_dict()
        rows += [("tracks", str(tm.total)), ("pure", str(tm.pure)), ("switches", str(tm.switches))]
        if args.texts:
            texts = {int(r["track_id"]): r for r in read_jsonl(args.texts)}
            refs = evaluation.gt_texts_from_records(gt)
            owner = evaluation.assign_tracks(sys_tracks, evaluation.gt_tracks_from_records(gt))
            per = []
            for tid in sorted(texts):
                gid = owner.get(tid)
                if gid is None or gid not in refs:
                    continue
                raw = extract.error_rates(texts[tid]["raw"], refs[gid])
                cor = extract.error_rates(texts[tid]["corrected"], refs[gid])
                per.append({"track_id": tid, "cer_raw": raw[0], "wer_raw": raw[1], "cer": cor[0], "wer": cor[1]})
            report["recognition"] = per
            if per:
                rows.append(("mean WER", f"{sum(p['wer'] for p in per) / len(per):.4f}"))
    if args.timings:
        rep = evaluation.timing_report(r["ms"] for r in read_jsonl(args.timings))
        report["timing"] = rep
        rows += [("mean ms", f"{rep['mean_ms']:.1f}"), ("p95 ms", f"{rep['p95_ms']:.1f}")]
    if not rows:
        raise ConfigError("nothing to evaluate: give --pred and/or --tracks")
    if args.json:
        Path(args.json).write_text(json.dumps(report, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    print(evaluation.format_table(rows))
    return EXIT_OK


def cmd_synth(args) -> int:
    seed = args.seed if args.seed is not None else 0
    if args.spec:
        spec = synth.SynthSpec.load(args.spec)
        synth.render_sequence(spec, args.out, args.suffix)
    elif args.kind == "corpus":
        synth.render_corpus(seed, args.frames, args.out, args.background, args.noise, args.width, args.height, args.suffix)
    else:
        spec = synth.random_sequence_spec(seed, args.frames, args.width, args.height, background=args.background, noise=args.noise)
        synth.render_sequence(spec, args.out, args.suffix)
        Path(args.out, "spec.json").write_text(spec.to_json() + "\n", encoding="utf-8")
    return EXIT_OK


# -- entry point ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="overlaytext", description="Overlay text band detection, tracking and extraction.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", parents=[common], help="per-frame band detection to JSONL")
    p.add_argument("input", help="frame directory, PNM stream file, or - for stdin")
    p.add_argument("-o", "--out", help="output JSONL (default stdout)")
    p.add_argument("--timings", help="write per-frame wall times to this JSONL")
    _add_config_flags(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("track", parents=[common], help="detect and track; writes tracks, events and band images")
    p.add_argument("input", help="frame directory, PNM stream file, or - for stdin")
    p.add_argument("-o", "--out", required=True, help="output directory")
    p.add_argument("--detections", help="reuse a detect JSONL instead of detecting again")
    _add_config_flags(p)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("extract", parents=[common], help="OCR and correct accumulated track images")
    p.add_argument("tracks", help="directory written by the track command")
    p.add_argument("-o", "--out", help="output JSONL (default stdout)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("eval", parents=[common], help="score outputs against ground truth")
    p.add_argument("--gt", required=True, help="ground-truth JSONL")
    p.add_argument("--pred", help="detect JSONL")
    p.add_argument("--tracks", help="tracks.jsonl from the track command")
    p.add_argument("--texts", help="extract JSONL, scored against GT text")
    p.add_argument("--timings", help="timings JSONL from detect")
    p.add_argument("--json", help="also write the report as JSON")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", parents=[common], help="render a synthetic corpus with ground truth")
    p.add_argument("-o", "--out", required=True, help="output directory")
    p.add_argument("--kind", choices=("corpus", "sequence"), default="corpus")
    p.add_argument("--spec", help="JSON scene spec to render instead of a random one")
    p.add_argument("--frames", type=int, default=100)
    p.add_argument("--width", type=int, default=720)
    p.add_argument("--height", type=int, default=576)
    p.add_argument("--background", choices=synth.BACKGROUNDS, default="textured")
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--suffix", choices=(".png", ".ppm"), default=".png")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except extract.OcrConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except extract.OcrError as exc:
        log.error("%s", exc)
        return EXIT_EXTERNAL
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        log.error("%s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
