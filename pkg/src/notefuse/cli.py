"""Command-line entry points.

Subcommands: generate (synthetic corpus), extract-frames, train, eval,
visualize. Exit codes: 0 success, 1 usage error, 2 data error (missing
files, schema violations, bad checkpoints).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .config import TrainConfig, write_config
from .corpus import CorpusFormatError, load_notes
from .frames import ConceptLexicon, export_frames_jsonl, load_section_inventory
from .synth import SynthConfig, generate_synthetic
from .training import evaluate_records, load_checkpoint, train
from .visualize import visualize_note

logger = logging.getLogger(__name__)


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2; we reserve that
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="notefuse", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("generate", help="write a synthetic labeled corpus with gold frames")
    p.add_argument("--config", help="TOML synthetic-corpus config (defaults when omitted)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("extract-frames", help="tag notes into per-sentence semantic frames")
    p.add_argument("--notes", required=True)
    p.add_argument("--lexicon", required=True)
    p.add_argument("--out", required=True, help="frames.jsonl output path")
    p.add_argument("--sections", help="custom section-inventory JSON")
    p.set_defaults(func=_cmd_extract_frames)

    p = sub.add_parser("train", help="train the note-embedding network")
    p.add_argument("--config", required=True, help="TOML training config")
    p.add_argument("--notes", required=True)
    p.add_argument("--patients", help="labels JSONL (default: patients.jsonl next to notes)")
    p.add_argument("--lexicon", help="concept lexicon JSON (required unless ablation is no_struct)")
    p.add_argument("--out", required=True, help="output directory for checkpoint and log")
    p.add_argument("--ablate", choices=["none", "no_struct", "no_unstruct"],
                   help="override the config's ablation")
    p.add_argument("--sections", help="custom section-inventory JSON")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="frozen-representation mortality probe + AUC-ROC")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--horizon", required=True, choices=["30d", "1y"])
    p.add_argument("--out", required=True, help="report JSON output path")
    p.add_argument("--notes", help="override the notes path recorded in the checkpoint")
    p.add_argument("--patients", help="override the labels path recorded in the checkpoint")
    p.add_argument("--lexicon", help="override the lexicon path recorded in the checkpoint")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("visualize", help="write a shaded-weights HTML page for one note")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--note-id", required=True)
    p.add_argument("--out", required=True, help="HTML output path")
    p.add_argument("--notes", help="override the notes path recorded in the checkpoint")
    p.add_argument("--lexicon", help="override the lexicon path recorded in the checkpoint")
    p.set_defaults(func=_cmd_visualize)
    return parser


def _read_toml(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise DataError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise DataError(f"{path}: invalid TOML: {exc}")


def _require_file(path, what: str) -> Path:
    if path is None:
        raise DataError(f"no {what} path given and none recorded in the checkpoint")
    p = Path(path)
    if not p.is_file():
        raise DataError(f"{what} file not found: {p}")
    return p


def _cmd_generate(args) -> int:
    cfg = SynthConfig.from_dict(_read_toml(args.config)) if args.config else SynthConfig()
    corpus = generate_synthetic(cfg, seed=args.seed)
    paths = corpus.write(args.out)
    n_notes = sum(len(r.notes) for r in corpus.records)
    print(f"wrote {len(corpus.records)} patients / {n_notes} notes to {args.out}")
    for name, path in paths.items():
        print(f"  {name}: {path}")
    return 0


def _cmd_extract_frames(args) -> int:
    lexicon = ConceptLexicon.from_json(_require_file(args.lexicon, "lexicon"))
    inventory = load_section_inventory(args.sections) if args.sections else None
    records = load_notes(_require_file(args.notes, "notes"))
    notes = [n for r in records for n in r.notes]
    count = export_frames_jsonl(notes, lexicon, args.out, inventory)
    print(f"wrote {count} frames for {len(notes)} notes to {args.out}")
    return 0


def _default_patients_path(notes_path) -> Path | None:
    candidate = Path(notes_path).parent / "patients.jsonl"
    return candidate if candidate.is_file() else None


def _cmd_train(args) -> int:
    config = TrainConfig.from_dict(_read_toml(args.config))
    if args.ablate:
        config = config.replace(ablation=args.ablate)
    notes_path = _require_file(args.notes, "notes")
    patients_path = Path(args.patients) if args.patients else _default_patients_path(notes_path)
    if patients_path is not None and not patients_path.is_file():
        raise DataError(f"patients file not found: {patients_path}")
    lexicon = None
    lexicon_path = None
    if config.ablation != "no_struct":
        lexicon_path = _require_file(args.lexicon, "lexicon")
        lexicon = ConceptLexicon.from_json(lexicon_path)
    inventory = load_section_inventory(args.sections) if args.sections else None
    records = load_notes(notes_path, patients_path)
    if not records:
        raise DataError(f"no usable patients in {notes_path}")
    data_paths = {
        "notes": str(Path(notes_path).resolve()),
        "patients": str(patients_path.resolve()) if patients_path else None,
        "lexicon": str(Path(lexicon_path).resolve()) if lexicon_path else None,
    }
    result = train(records, config, lexicon=lexicon, out_dir=args.out,
                   data_paths=data_paths, inventory=inventory)
    write_config(config, Path(args.out) / "config.toml")
    final = result.log[-1]["total"] if result.log else float("nan")
    print(f"trained {config.epochs} epoch(s) on {len(result.splits['train'])} patients; "
          f"final loss {final:.4f}")
    print(f"checkpoint: {result.checkpoint_path}")
    return 0


def _load_bundle(args):
    path = Path(args.checkpoint)
    if not path.is_file():
        raise DataError(f"checkpoint not found: {path}")
    try:
        return load_checkpoint(path)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}")


def _bundle_inputs(bundle, args):
    notes_path = _require_file(
        getattr(args, "notes", None) or bundle.data_paths.get("notes"), "notes"
    )
    lexicon = None
    if bundle.config.ablation != "no_struct":
        lex_path = _require_file(
            getattr(args, "lexicon", None) or bundle.data_paths.get("lexicon"), "lexicon"
        )
        lexicon = ConceptLexicon.from_json(lex_path)
    return notes_path, lexicon


def _cmd_eval(args) -> int:
    bundle = _load_bundle(args)
    notes_path, lexicon = _bundle_inputs(bundle, args)
    patients_path = _require_file(
        args.patients or bundle.data_paths.get("patients"), "patients"
    )
    records = load_notes(notes_path, patients_path)
    report = evaluate_records(bundle, records, args.horizon, lexicon=lexicon)
    report.write(args.out)
    print(f"{args.horizon} AUC-ROC {report.auc_roc:.4f} "
          f"({report.n_pos} pos / {report.n_neg} neg) -> {args.out}")
    return 0


def _cmd_visualize(args) -> int:
    bundle = _load_bundle(args)
    if bundle.config.ablation == "no_unstruct":
        raise DataError("the frame-only ablation has no word weights to visualize")
    notes_path, lexicon = _bundle_inputs(bundle, args)
    records = load_notes(notes_path)
    note = next((n for r in records for n in r.notes if n.note_id == args.note_id), None)
    if note is None:
        raise DataError(f"note id {args.note_id!r} not found in {notes_path}")
    extractor = bundle.make_extractor(lexicon)
    out = visualize_note(bundle.model, extractor.extract(note), note, args.out)
    print(f"wrote {out}")
    return 0


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "func", None) is None:
            parser.print_help()
            return 1
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (CorpusFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:  # config/schema violations surfaced by the library
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
