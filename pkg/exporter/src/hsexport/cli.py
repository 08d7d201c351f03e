"""Command line front end.

    hsexport export --model tiny --prompts prompts.txt --out states/

Exit codes: 0 success, 1 bad arguments, 2 runtime failure (model load,
encoding, or I/O problems).
"""

import argparse
import sys
from pathlib import Path

from .export import ExportJob, export


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hsexport")
    sub = parser.add_subparsers(dest="command", required=True)
    ex = sub.add_parser("export", help="dump hidden states for a prompt file")
    ex.add_argument("--model", required=True,
                    help="'tiny[:seed]' or 'hf:<name-or-path>'")
    ex.add_argument("--prompts", required=True, help="text file, one prompt per line")
    ex.add_argument("--out", required=True, help="output directory for .ochs files")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    prompts = Path(args.prompts)
    if not prompts.exists():
        print(f"prompts file not found: {prompts}", file=sys.stderr)
        return 1
    job = ExportJob(model_id=args.model, prompts_path=prompts, out_dir=Path(args.out))
    try:
        written = export(job)
    except ValueError as e:
        print(f"bad arguments: {e}", file=sys.stderr)
        return 1
    except (RuntimeError, OSError) as e:
        print(f"export failed: {e}", file=sys.stderr)
        return 2
    print(f"wrote {len(written)} hidden-state files to {job.out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
