"""
Command-line entry: `radisynth [global flags] <command> [command flags]`.

Command flags are generated from each command's pydantic parameter model.
A `--config` file (JSON or TOML) may supply any flag by its long name;
flags given on the command line win. Logs go to stderr, stdout carries only
the id of the produced artifact.
"""
import argparse
import json
import logging
import sys
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
import traceback
from pathlib import Path
from typing import Any, Dict, List, Optional, Type

from pydantic import BaseModel, ValidationError

sys.path.insert(0, str(Path(__file__).parent.parent))

import config
from errors import ConfigError, StageError, ValidationFailure
from pipeline import COMMAND_REGISTRY, get_command
from pipeline.commands import CommandContext
from pipeline.workspace import Workspace

logger = logging.getLogger("radisynth")

GLOBAL_KEYS = ("workspace", "seed", "threads")


def configure_logging(level: str = config.LOG_LEVEL, log_file: str = config.LOG_FILE) -> None:
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if log_file:
        handlers.append(logging.FileHandler(log_file, encoding="utf-8"))
    logging.basicConfig(level=getattr(logging, level.upper(), logging.INFO),
                        format=config.LOG_FORMAT, handlers=handlers, force=True)


def _add_params(parser: argparse.ArgumentParser, model: Type[BaseModel]) -> None:
    for name, field in model.model_fields.items():
        flag = "--" + name.replace("_", "-")
        if field.annotation is bool:
            parser.add_argument(flag, dest=name, action="store_true", default=argparse.SUPPRESS,
                                help=field.description)
        else:
            default = "required" if field.is_required() else f"default: {field.default}"
            help_text = f"{field.description} ({default})" if field.description else default
            parser.add_argument(flag, dest=name, metavar=name.upper(), default=argparse.SUPPRESS,
                                help=help_text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="radisynth", description="合成 X 射线无损检测流水线")
    parser.add_argument("--workspace", default=None,
                        help=f"workspace root (env RADISYNTH_WORKSPACE, default {config.WORKSPACE_ROOT})")
    parser.add_argument("--seed", type=int, default=None, help=f"run seed (default {config.DEFAULT_SEED})")
    parser.add_argument("--threads", type=int, default=None,
                        help=f"worker threads (default {config.DEFAULT_THREADS})")
    parser.add_argument("--config", default=None, help="JSON or TOML file mirroring the flags")
    parser.add_argument("--log-level", default=config.LOG_LEVEL)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, command in COMMAND_REGISTRY.items():
        _add_params(sub.add_parser(name, help=command.description), command.params)
    return parser


def load_config_file(path: str) -> Dict[str, Any]:
    """Flat key → value mapping; dashes in keys become underscores."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
        data = tomllib.loads(text) if path.suffix.lower() == ".toml" else json.loads(text)
    except (OSError, ValueError) as e:
        raise ConfigError(f"cannot read config file {path}: {e}")
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a key-value table")
    return {str(k).replace("-", "_"): v for k, v in data.items()}


def resolve(args: argparse.Namespace, file_values: Dict[str, Any], model: Type[BaseModel]) -> BaseModel:
    """Command parameters from the config file overridden by explicit flags."""
    merged = {k: v for k, v in file_values.items() if k in model.model_fields}
    merged.update({k: v for k, v in vars(args).items() if k in model.model_fields})
    return model.model_validate(merged)


def exit_code(error: BaseException) -> int:
    if isinstance(error, StageError) and error.__cause__ is not None:
        return exit_code(error.__cause__)
    if isinstance(error, (ValidationFailure, ValidationError)):
        return 1
    return 2


def _origin(error: BaseException) -> str:
    frames = traceback.extract_tb(error.__traceback__)
    if not frames:
        return "?"
    last = Path(frames[-1].filename)
    return f"{last.parent.name}/{last.name}:{frames[-1].lineno}"


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        file_values = load_config_file(args.config) if args.config else {}
        command = get_command(args.command)
        params = resolve(args, file_values, command.params)
        seed = args.seed if args.seed is not None else int(file_values.get("seed", config.DEFAULT_SEED))
        threads = args.threads if args.threads is not None else \
            int(file_values.get("threads", config.DEFAULT_THREADS))
        if threads < 1:
            raise ConfigError(f"threads must be >= 1, got {threads}")
        root = args.workspace or file_values.get("workspace") or config.WORKSPACE_ROOT
        logger.info(f"执行命令: {args.command} (workspace={root}, seed={seed}, threads={threads})")
        output = command.handler(CommandContext(Workspace(root), seed, threads), params)
    except Exception as e:
        code = exit_code(e)
        logger.error(f"{args.command} 失败 [{type(e).__name__} @ {_origin(e)}]: {e}")
        logger.debug("详细堆栈", exc_info=True)
        return code
    if output:
        print(output)
    return 0


if __name__ == "__main__":
    sys.exit(main())
