import argparse
import logging
import os
import sys
import time
from copy import deepcopy

import yaml

from retivid import framework
from retivid.framework.exceptions import UsageError
from retivid.utility import utils
from retivid.video import constants
from retivid.video.checkpoint import load_checkpoint, save_checkpoint
from retivid.video.exceptions import RetividException, UnknownConfigKey
from retivid.video.flow import build_backend
from retivid.video.media import load_clip, save_clip
from retivid.video.metrics import evaluate
from retivid.video.temporal import build_flow_cache
from retivid.video.train import TrainConfig, enhance_clip, train

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

LOG_FORMAT = (
    "%(asctime)s - %(threadName)s - %(name)s - %(levelname)s - %(message)s"
)
LOG_FILE = 'retivid.log'

_handlers = []


def init_retivid_conf(arguments=None):
    """
    Update the config object with any files passed via the CLI

    Args:
        arguments (list): command line arguments
    """
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument('--retivid-conf', action='append', default=[])
    args, unknown = parser.parse_known_args(args=arguments)
    for config_file in args.retivid_conf:
        with open(
            os.path.abspath(os.path.expanduser(config_file))
        ) as file_stream:
            custom_config_data = yaml.safe_load(file_stream)
            try:
                framework.config.update(custom_config_data or {})
            except ValueError as ex:
                raise UsageError(f"{config_file}: {ex}")
    framework.config.RUN['run_id'] = int(time.time())
    bin_dir = framework.config.RUN.get('bin_dir')
    if bin_dir:
        framework.config.RUN['bin_dir'] = os.path.abspath(
            os.path.expanduser(framework.config.RUN['bin_dir'])
        )
        utils.add_path_to_env_path(framework.config.RUN['bin_dir'])


def configure_logging(log_level):
    """
    Log to stderr and to retivid.log in the run log directory
    """
    root = logging.getLogger()
    for handler in _handlers:
        root.removeHandler(handler)
        handler.close()
    _handlers.clear()
    formatter = logging.Formatter(LOG_FORMAT)
    stream = logging.StreamHandler(sys.stderr)
    _handlers.append(stream)
    log_dir = utils.retivid_log_path()
    try:
        utils.create_directory_path(log_dir)
        _handlers.append(
            logging.FileHandler(os.path.join(log_dir, LOG_FILE))
        )
    except OSError as ex:
        print(f"retivid: log file disabled: {ex}", file=sys.stderr)
    for handler in _handlers:
        handler.setFormatter(formatter)
        root.addHandler(handler)
    root.setLevel(log_level)


def _add_train_options(parser):
    parser.add_argument(
        '--config', help="flat YAML file of TrainConfig keys"
    )
    parser.add_argument(
        '--set', action='append', default=[], metavar='KEY=VALUE',
        help="override one TrainConfig key, may be repeated",
    )
    parser.add_argument(
        '--underwater', action='store_true',
        help="underwater loss mode (per channel brightness targets)",
    )
    parser.add_argument(
        '--freeze-temporal', action='store_true',
        help="zero temporal feedback for every frame",
    )
    parser.add_argument(
        '--flow-cache', help="directory of precomputed flow fields"
    )


def build_parser():
    parser = argparse.ArgumentParser(
        prog='retivid',
        description=(
            "Zero-shot enhancement of low-light and underwater video clips"
        ),
    )
    parser.add_argument(
        '--retivid-conf', action='append', default=[],
        help="YAML file of config sections, may be repeated",
    )
    parser.add_argument('--log-level', help="overrides RUN.log_level")
    subparsers = parser.add_subparsers(dest='subcommand', metavar='COMMAND')
    subparsers.required = True

    train_parser = subparsers.add_parser(
        'train', help="train the networks on one clip"
    )
    train_parser.add_argument('--input', required=True)
    train_parser.add_argument('--out', required=True, help="checkpoint file")
    train_parser.add_argument('--init', help="checkpoint to start from")
    train_parser.add_argument(
        '--crop', type=int, help="train on square crops of this side"
    )
    _add_train_options(train_parser)

    enhance_parser = subparsers.add_parser(
        'enhance', help="enhance a clip with a trained checkpoint"
    )
    enhance_parser.add_argument('--input', required=True)
    enhance_parser.add_argument('--ckpt', required=True)
    enhance_parser.add_argument('--out', required=True, help="frame directory")
    enhance_parser.add_argument(
        '--bit-depth', type=int, choices=sorted(constants.MAX_CODE),
        help="overrides IO.bit_depth",
    )
    _add_train_options(enhance_parser)

    evaluate_parser = subparsers.add_parser(
        'evaluate', help="score an enhanced clip"
    )
    evaluate_parser.add_argument('--pred', required=True)
    evaluate_parser.add_argument('--ref')
    evaluate_parser.add_argument('--out', required=True, help="report dir")
    evaluate_parser.add_argument(
        '--underwater', action='store_true', help="add UIQM and UCIQE"
    )
    evaluate_parser.add_argument('--jobs', type=int)
    evaluate_parser.add_argument(
        '--hm-direction', choices=constants.HM_DIRECTIONS
    )

    cache_parser = subparsers.add_parser(
        'flow-cache', help="precompute the flow fields of a clip"
    )
    cache_parser.add_argument('--input', required=True)
    cache_parser.add_argument('--out', required=True)
    cache_parser.add_argument('--jobs', type=int)
    cache_parser.add_argument(
        '--set', action='append', default=[], metavar='KEY=VALUE',
        help="override one TrainConfig key (flow_scale)",
    )
    return parser


def parse_overrides(items):
    """
    Parse KEY=VALUE overrides, values are YAML scalars; a dotted key
    addresses a nested mapping (loss_weights.color=2)

    Returns:
        dict: nested overrides

    """
    overrides = {}
    for item in items:
        key, sep, raw = item.partition('=')
        if not sep or not key:
            raise UsageError(f"Override {item!r} is not KEY=VALUE")
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError as ex:
            raise UsageError(f"Override {item!r}: {ex}")
        target = overrides
        *parents, leaf = key.split('.')
        for parent in parents:
            target = target.setdefault(parent, {})
        target[leaf] = value
    return overrides


def resolve_train_config(args):
    """
    TRAIN section, layered with the --config file, --set overrides and
    flags, stored back into the global config

    Returns:
        TrainConfig: the resolved hyperparameters

    Raises:
        UnknownConfigKey: keys which are not TrainConfig fields
        UsageError: malformed config file or invalid values

    """
    values = deepcopy(framework.config.TRAIN)
    layers = []
    if getattr(args, 'config', None):
        with open(os.path.expanduser(args.config)) as file_stream:
            try:
                file_values = yaml.safe_load(file_stream) or {}
            except yaml.YAMLError as ex:
                raise UsageError(f"{args.config} is not valid YAML: {ex}")
        if not isinstance(file_values, dict):
            raise UsageError(f"{args.config} is not a key/value mapping")
        layers.append(file_values)
    layers.append(parse_overrides(getattr(args, 'set', [])))
    flags = {}
    if getattr(args, 'underwater', False):
        flags['mode'] = constants.MODE_UNDERWATER
    if getattr(args, 'freeze_temporal', False):
        flags['freeze_temporal'] = True
    if getattr(args, 'crop', None):
        flags['crop'] = args.crop
    layers.append(flags)
    valid = TrainConfig.field_names()
    for layer in layers:
        unknown = set(layer) - set(valid)
        if unknown:
            raise UnknownConfigKey(unknown, valid)
        framework.merge_dict(values, layer)
    try:
        cfg = TrainConfig.from_dict(values)
    except (TypeError, ValueError) as ex:
        raise UsageError(str(ex))
    framework.config.TRAIN.update(values)
    return cfg


def _manifest_path(out, out_is_dir):
    if out_is_dir:
        return os.path.join(out, constants.RUN_MANIFEST)
    return f"{out}.{constants.RUN_MANIFEST}"


def cmd_train(args):
    cfg = resolve_train_config(args)
    init = None
    if args.init:
        init = load_checkpoint(
            args.init, framework.config.model_hash(cfg.mode)
        )
    clip = load_clip(args.input)
    run = train(clip, cfg, init=init, flow_cache=args.flow_cache)
    out_dir = os.path.dirname(os.path.abspath(args.out))
    utils.create_directory_path(out_dir)
    save_checkpoint(run.checkpoint, args.out)
    log.info(
        f"{len(run.history)} steps, final mean total loss "
        f"{run.epochs[-1].mean_total:.6f}"
    )
    return [args.input, args.init], _manifest_path(args.out, False)


def cmd_enhance(args):
    cfg = resolve_train_config(args)
    ckpt = load_checkpoint(args.ckpt, framework.config.model_hash(cfg.mode))
    clip = load_clip(args.input)
    enhanced = enhance_clip(clip, ckpt, cfg, flow_cache=args.flow_cache)
    bit_depth = args.bit_depth or framework.config.IO['bit_depth']
    save_clip(enhanced, args.out, bit_depth)
    return [args.input, args.ckpt], _manifest_path(args.out, True)


def cmd_evaluate(args):
    pred = load_clip(args.pred)
    ref = load_clip(args.ref) if args.ref else None
    evaluate(
        pred, ref, underwater=args.underwater, out_dir=args.out,
        jobs=args.jobs, hm_direction=args.hm_direction,
    )
    return [args.pred, args.ref], _manifest_path(args.out, True)


def cmd_flow_cache(args):
    cfg = resolve_train_config(args)
    clip = load_clip(args.input)
    jobs = args.jobs or framework.config.IO['jobs']
    build_flow_cache(
        clip, build_backend(framework.config.FLOW), args.out,
        scale=cfg.flow_scale, jobs=jobs,
    )
    return [args.input], _manifest_path(args.out, True)


COMMANDS = {
    'train': cmd_train,
    'enhance': cmd_enhance,
    'evaluate': cmd_evaluate,
    'flow-cache': cmd_flow_cache,
}


def run(argv=None):
    """
    Execute one retivid command line

    Args:
        argv (list): command line arguments without the program name

    Returns:
        int: 0 on success, 1 on runtime errors, 2 on usage errors

    """
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as ex:
        return EXIT_OK if ex.code in (0, None) else EXIT_USAGE
    try:
        init_retivid_conf(argv)
        configure_logging(
            args.log_level or framework.config.RUN.get('log_level', 'INFO')
        )
        framework.config.RUN['cli_params'] = vars(args)
        inputs, manifest = COMMANDS[args.subcommand](args)
        utils.dump_run_manifest(manifest, args.subcommand, argv, inputs)
    except (UsageError, UnknownConfigKey) as ex:
        print(f"retivid: usage error: {ex}", file=sys.stderr)
        return EXIT_USAGE
    except RetividException as ex:
        log.debug("Run failed", exc_info=True)
        print(f"retivid: error: {ex}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as ex:
        print(f"retivid: error: {ex}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK
