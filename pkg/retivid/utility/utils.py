import hashlib
import logging
import os
import shlex
import subprocess
from copy import deepcopy
from shutil import which

import yaml

import retivid
from retivid.framework import config
from retivid.video.exceptions import CommandFailed

log = logging.getLogger(__name__)


def run_cmd(cmd, input_data=None, decode=True, **kwargs):
    """
    Run an arbitrary command locally

    Args:
        cmd (str): command to run
        input_data (bytes): data written to the stdin of the command
        decode (bool): decode stdout to str, raw bytes are returned
            otherwise (default: True)

    Raises:
        CommandFailed: In case the command execution fails

    Returns:
        (str or bytes) stdout of command

    """
    log.info(f"Executing command: {cmd}")
    if isinstance(cmd, str):
        cmd = shlex.split(cmd)
    try:
        r = subprocess.run(
            cmd,
            input=input_data,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            **kwargs
        )
    except OSError as ex:
        raise CommandFailed(f"Unable to start command {cmd[0]}: {ex}")
    stderr = r.stderr.decode(errors='replace')
    if stderr and not r.returncode:
        log.warning(f"Command warning: {stderr}")
    if r.returncode:
        raise CommandFailed(
            f"Error during execution of command: {' '.join(cmd)}."
            f"\nError is {stderr}"
        )
    if decode:
        out = r.stdout.decode()
        log.debug(f"Command output: {out}")
        return out
    log.debug(f"Command returned {len(r.stdout)} bytes")
    return r.stdout


def add_path_to_env_path(path):
    """
    Add path to the PATH environment variable (if not already there).

    Args:
        path (str): Path which should be added to the PATH env. variable

    """
    env_path = os.environ['PATH'].split(os.pathsep)
    if path not in env_path:
        os.environ['PATH'] = os.pathsep.join([path] + env_path)
        log.info(f"Path '{path}' added to the PATH environment variable.")
    log.debug(f"PATH: {os.environ['PATH']}")


def check_if_executable_in_path(exec_name):
    """
    Checks whether an executable can be found in the $PATH

    Args:
        exec_name: Name of executable to look for

    Returns:
        Boolean: Whether the executable was found

    """
    return which(exec_name) is not None


def create_directory_path(path):
    """
    Creates directory if path doesn't exists
    """
    path = os.path.expanduser(path)
    if not os.path.exists(path):
        os.makedirs(path)
    else:
        log.debug(f"{path} already exists")


def retivid_log_path():
    """
    Construct the full path for the log directory.

    Returns:
        str: full path for retivid log directory

    """
    return os.path.expanduser(
        os.path.join(
            config.RUN['log_dir'],
            f"retivid-logs-{config.RUN['run_id']}"
        )
    )


def file_sha256(path):
    """
    SHA-256 of a file, read in chunks

    Args:
        path (str): file to hash

    Returns:
        str: hex digest

    """
    digest = hashlib.sha256()
    with open(path, 'rb') as fd:
        for chunk in iter(lambda: fd.read(1 << 20), b''):
            digest.update(chunk)
    return digest.hexdigest()


def hash_inputs(paths):
    """
    Hash every file of the given inputs. Directories are walked in sorted
    order so the result does not depend on the file system.

    Args:
        paths (list): files or directories

    Returns:
        dict: path -> hex digest

    """
    hashes = {}
    for path in paths:
        if path is None:
            continue
        if os.path.isdir(path):
            for root, dirs, files in os.walk(path):
                dirs.sort()
                for name in sorted(files):
                    file_path = os.path.join(root, name)
                    hashes[file_path] = file_sha256(file_path)
        elif os.path.isfile(path):
            hashes[path] = file_sha256(path)
    return hashes


def dump_run_manifest(file_path, subcommand, argv, inputs):
    """
    Write the run-manifest of one command line run. Two manifests with
    equal content describe runs with bit-equal outputs on one platform.

    Args:
        file_path (str): where to write the manifest
        subcommand (str): executed subcommand
        argv (list): raw command line arguments
        inputs (list): input files or directories to hash

    Returns:
        dict: the manifest data

    """
    manifest = {
        'subcommand': subcommand,
        'argv': list(argv),
        'version': retivid.__version__,
        'seed': config.TRAIN.get('seed'),
        'config': deepcopy(config.to_dict()),
        'inputs': hash_inputs(inputs),
    }
    # run_id and log paths change on every run
    manifest['config']['RUN'].pop('run_id', None)
    with open(file_path, "w") as fs:
        yaml.safe_dump(manifest, fs)
    log.info(f"Run manifest written to {file_path}")
    return manifest
