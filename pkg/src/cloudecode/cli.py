"""Command-line interface: decode, synth, eval, redesign.

Exit codes: 0 success, 1 I/O failure, 2 invalid config or input schema,
3 processing failure. Failures also print one JSON object on stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from cloudecode import __version__
from cloudecode.config import PipelineConfig
from cloudecode.errors import CloudDecodeError, ConfigError
from cloudecode.evalgen import (GroundTruth, LayoutConfig, evaluate, random_entries, rank_agreement,
                                synthesize_cloud)
from cloudecode.raster import RasterImage, load_image, save_image
from cloudecode.sizing import CloudData, DecodedWord, DecodeTrace, decode_cloud
from cloudecode.wordgraph import dump_trace_line

logger = logging.getLogger("cloudecode")

EXIT_OK, EXIT_IO, EXIT_CONFIG, EXIT_PROCESSING = 0, 1, 2, 3


class CliError(Exception):
    def __init__(self, code: int, kind: str, message: str):
        super().__init__(message)
        self.code = code
        self.kind = kind


def _classify_error(exc: BaseException) -> CliError:
    if isinstance(exc, CliError):
        return exc
    if isinstance(exc, ConfigError):
        return CliError(EXIT_CONFIG, "config", str(exc))
    if isinstance(exc, OSError):
        return CliError(EXIT_IO, "io", str(exc))
    if isinstance(exc, (CloudDecodeError, ValueError, AssertionError)):
        return CliError(EXIT_PROCESSING, "processing", str(exc))
    raise exc


# --------------------------------------------------------------------------
# helpers
def _config_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("pipeline parameters (override the config file)")
    for f in fields(PipelineConfig):
        flag = "--" + f.name.replace("_", "-")
        base = f.type.split(" ")[0]
        if base == "bool":
            group.add_argument(flag, dest=f"cfg_{f.name}", action=argparse.BooleanOptionalAction, default=None)
        elif f.name == "format":
            continue
        else:
            group.add_argument(flag, dest=f"cfg_{f.name}", type={"int": int, "float": float}.get(base, str),
                               default=None, metavar=base.upper())


def _load_config(args) -> PipelineConfig:
    overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg_") and v is not None}
    if getattr(args, "format", None):
        overrides["format"] = args.format
    return PipelineConfig.load(args.config, overrides)


def _read_json(path: str):
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_CONFIG, "schema", f"{path}: invalid JSON ({exc})") from exc


def _write(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _render_cloud(cloud: CloudData, fmt: str) -> str:
    if fmt == "csv":
        return cloud.to_csv()
    return json.dumps(cloud.to_json(), indent=1) + "\n"


def component_map(image: RasterImage, trace: DecodeTrace) -> RasterImage:
    """Each component painted a distinct colour on black, for eyeballing segmentation."""
    px = np.zeros_like(image.pixels)
    for i, comp in enumerate(trace.components):
        color = ((i * 97 + 60) % 256, (i * 57 + 120) % 256, (i * 193 + 180) % 256)
        view = px[comp.y0:comp.y0 + comp.height, comp.x0:comp.x0 + comp.width]
        view[comp.mask] = color
    return RasterImage(px)


def _decode_file(path: str, config: PipelineConfig, debug_dir: str | None) -> str:
    image = load_image(path)
    trace = DecodeTrace() if debug_dir else None
    cloud = decode_cloud(image, config, trace, source={"image": path})
    if debug_dir:
        out = Path(debug_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = Path(path).stem
        save_image(component_map(image, trace), out / f"{stem}.components.png")
        with open(out / f"{stem}.sweep.jsonl", "w") as fh:
            for event in trace.sweep_events:
                fh.write(dump_trace_line(event) + "\n")
    return _render_cloud(cloud, config.format)


def _decode_job(path: str, config_dict: dict, debug_dir: str | None):
    # runs in a worker process: hand errors back as data
    try:
        return _decode_file(path, PipelineConfig.from_dict(config_dict), debug_dir), None
    except Exception as exc:  # noqa: BLE001
        err = _classify_error(exc)
        return None, (err.code, err.kind, str(err))


# --------------------------------------------------------------------------
# commands
def cmd_decode(args) -> int:
    config = _load_config(args)
    if args.dump_config:
        Path(args.dump_config).write_text(json.dumps(config.to_dict(), indent=1, sort_keys=True) + "\n")
    images = args.images
    batch = len(images) > 1
    if batch and args.out is None and config.format == "csv":
        raise CliError(EXIT_CONFIG, "usage", "CSV output for several images needs --out DIRECTORY")
    if batch and args.out is not None:
        Path(args.out).mkdir(parents=True, exist_ok=True)

    if args.jobs > 1 and batch:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_decode_job, images, [config.to_dict()] * len(images),
                                    [args.debug] * len(images)))
    else:
        results = [_decode_job(p, config.to_dict(), args.debug) for p in images]

    worst = EXIT_OK
    for path, (text, err) in zip(images, results):
        if err is not None:
            code, kind, message = err
            _report(CliError(code, kind, message if message.startswith(path) else f"{path}: {message}"))
            worst = worst or code
            continue
        if not batch:
            _write(text, args.out)
        elif args.out is not None:
            suffix = ".csv" if config.format == "csv" else ".json"
            (Path(args.out) / (Path(path).stem + suffix)).write_text(text)
        else:
            sys.stdout.write(json.dumps(json.loads(text), separators=(",", ":")) + "\n")
    return worst


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def _parse_entries(spec: str) -> list[tuple[str, float]]:
    path = Path(spec)
    if path.is_file():
        text = path.read_text()
        if path.suffix == ".json":
            data = json.loads(text)
            if isinstance(data, dict):
                data = data.get("entries", data.get("words"))
            out = []
            for item in data:
                if isinstance(item, dict):
                    out.append((str(item["text"]), float(item.get("font_size", item.get("weight")))))
                else:
                    out.append((str(item[0]), float(item[1])))
            return out
        rows = [ln.rsplit(",", 1) for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        if rows and not _is_number(rows[0][-1]):
            rows = rows[1:]  # header
        return [(t.strip(), float(s)) for t, s in rows]
    # inline: word:size,word:size
    return [(t.strip(), float(s)) for t, s in (item.rsplit(":", 1) for item in spec.split(",") if item)]


def cmd_synth(args) -> int:
    layout_data = _read_json(args.layout) if args.layout else {}
    if not isinstance(layout_data, dict):
        raise ConfigError("layout file must hold a JSON object")
    for key in ("width", "height", "p_vertical", "padding"):
        val = getattr(args, key)
        if val is not None:
            layout_data[key] = val
    if args.antialias is not None:
        layout_data["antialias"] = args.antialias
    layout = LayoutConfig.from_dict(layout_data)
    if args.random is not None:
        entries = random_entries(np.random.default_rng(args.seed), args.random)
    elif args.entries:
        try:
            entries = _parse_entries(args.entries)
        except (ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
            raise CliError(EXIT_CONFIG, "schema", f"cannot parse entries: {exc}") from exc
    else:
        raise CliError(EXIT_CONFIG, "usage", "give an entries spec or --random N")
    image, gt = synthesize_cloud(entries, layout, args.seed)
    prefix = Path(args.out)
    if prefix.parent != Path("."):
        prefix.parent.mkdir(parents=True, exist_ok=True)
    save_image(image, prefix.with_name(prefix.name + ".png"))
    prefix.with_name(prefix.name + ".json").write_text(gt.dumps() + "\n")
    logger.info("wrote %s.png and %s.json (%d words)", prefix, prefix, len(gt.entries))
    return EXIT_OK


def _why(exc: Exception) -> str:
    if isinstance(exc, KeyError) and exc.args:
        return f"missing key {exc.args[0]}"
    return str(exc)


def _load_decoded(data) -> CloudData:
    """Decoder output, or a ground-truth file whose font sizes stand in for weights."""
    if isinstance(data, dict) and "words" in data:
        return CloudData.from_json(data)
    if isinstance(data, dict) and "entries" in data:
        gt = GroundTruth.from_json(data)
        return CloudData(tuple(DecodedWord(e.text, e.font_size, e.font_size, tuple(e.bbox), e.orientation)
                               for e in gt.entries))
    raise KeyError("'words' or 'entries'")


def cmd_eval(args) -> int:
    decoded_raw, gt_raw = _read_json(args.decoded), _read_json(args.truth)
    try:
        decoded = _load_decoded(decoded_raw)
        gt = GroundTruth.from_json(gt_raw)
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise CliError(EXIT_CONFIG, "schema", f"input does not match the expected schema: {_why(exc)}") from exc
    report = evaluate(decoded, gt)
    agree, total = rank_agreement(report.pairs, gt)
    report.extra["rank_agreement"] = agree / total if total else None
    _write(json.dumps(report.to_json(), indent=1) + "\n", args.out)
    return EXIT_OK


def bar_chart_svg(words, bar_length: float = 400.0, bar_height: int = 18, gap: int = 6,
                  label_width: int = 160) -> str:
    """Horizontal bar chart: one bar per (text, weight), heaviest on top, length linear in weight."""
    words = sorted(words, key=lambda w: (-w[1], w[0]))
    top = max((w for _, w in words), default=0.0)
    scale = bar_length / top if top > 0 else 0.0
    width = label_width + bar_length + 80
    height = gap + len(words) * (bar_height + gap)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:g}" height="{height}" '
           f'viewBox="0 0 {width:g} {height}" font-family="sans-serif" font-size="12">']
    for i, (text, weight) in enumerate(words):
        y = gap + i * (bar_height + gap)
        length = weight * scale
        out.append(f'<text x="{label_width - 6}" y="{y + bar_height - 5}" text-anchor="end">{escape(text)}</text>')
        out.append(f'<rect x="{label_width}" y="{y}" width="{length!r}" height="{bar_height}" '
                   f'fill="#4c72b0" data-weight="{weight!r}"/>')
        out.append(f'<text x="{label_width + length + 4:.2f}" y="{y + bar_height - 5}">{weight:.1f}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def cmd_redesign(args) -> int:
    raw = _read_json(args.decoded)
    try:
        cloud = _load_decoded(raw)
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise CliError(EXIT_CONFIG, "schema", f"input does not match the expected schema: {_why(exc)}") from exc
    _write(bar_chart_svg([(w.text, w.weight) for w in cloud.words]), args.out)
    return EXIT_OK


# --------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cloudecode", description="Recover (word, weight) data from word-cloud images.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="log to stderr (-vv for debug)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decode", help="decode word-cloud PNGs")
    p.add_argument("images", nargs="+")
    p.add_argument("--config", help="JSON config file (default: $CLOUDECODE_CONFIG)")
    p.add_argument("--out", help="output file; a directory when several images are given")
    p.add_argument("--format", choices=("json", "csv"))
    p.add_argument("--debug", metavar="DIR", help="write component maps and sweep traces here")
    p.add_argument("--jobs", type=int, default=1, help="decode several images in parallel")
    p.add_argument("--dump-config", metavar="PATH", help="write the effective config as JSON")
    _config_flags(p)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("synth", help="render a synthetic cloud with ground truth")
    p.add_argument("entries", nargs="?", help="word:size,... inline, or a .json / .csv file")
    p.add_argument("--random", type=int, metavar="N", help="N random vocabulary words instead of entries")
    p.add_argument("--out", required=True, help="output prefix; writes PREFIX.png and PREFIX.json")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--layout", help="JSON layout config")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--p-vertical", dest="p_vertical", type=float)
    p.add_argument("--padding", type=int)
    p.add_argument("--antialias", action=argparse.BooleanOptionalAction, default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="score decoded output against ground truth")
    p.add_argument("decoded")
    p.add_argument("truth")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("redesign", help="draw decoded data as an SVG bar chart")
    p.add_argument("decoded")
    p.add_argument("--out")
    p.set_defaults(func=cmd_redesign)
    return parser


def _report(err: CliError) -> None:
    sys.stderr.write(json.dumps({"error": err.kind, "message": str(err), "exit_code": err.code}) + "\n")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001
        err = _classify_error(exc)
        _report(err)
        return err.code


if __name__ == "__main__":
    sys.exit(main())
