"""Utils
- printing to stderr
- verbosity
- parsing cli args
- reading and writing text files
"""
from argparse import ArgumentParser, Namespace
from pathlib import Path
from termcolor import colored
from typing import Iterable, List, Optional, Union
import functools
import logging
import sys


colored_output = True

parse_args: Union[Namespace, None] = None


def warn(text: str):
    if not colored_output:
        return text
    return colored(text, 'yellow')


def error(text: str):
    if not colored_output:
        return text
    return colored(text, 'red')


@functools.lru_cache(maxsize=1)
def verbosity() -> int:
    global parse_args
    if parse_args is not None and 'verbose' in parse_args:
        return parse_args.verbose

    if '-vvv' in sys.argv:
        return 3
    elif '-vv' in sys.argv:
        return 2
    elif '-v' in sys.argv:
        return 1

    return 0


def set_verbosity(args: Optional[Namespace] = None):
    global parse_args
    if args is not None:
        parse_args = args

    verbosity.cache_clear()
    v = verbosity()

    default_verbosity_level = 30
    verbosity_level = max(default_verbosity_level - v * 10, logging.DEBUG)

    logger = logging.getLogger()
    logger.setLevel(verbosity_level)


def log(*args, file=None, prefix=None, **kwds):
    """Print to stderr
    """
    if file is None:
        # resolve lazily, s.t. redirected streams are respected
        file = sys.stderr
    if prefix is None:
        prefix = warn('···')

    print(prefix, *args, file=file, **kwds)


def debug(*args, **kwds):
    """Similar to logging.debug, but without custom string formatting
    """
    if verbosity():
        log(*args, **kwds)


def add_default_args(parser: ArgumentParser):
    if parser is None:
        raise NotImplementedError()

    parser.add_argument('-v', '--verbose', default=0, action='count',
                        help='increase verbosity; may be repeated')


def read_file(filename: Union[str, Path]) -> str:
    return next(read_files([filename]))


def read_files(filenames: Iterable[Union[str, Path]]):
    for fn in filenames:
        with open(fn, encoding='utf-8') as f:
            result = f.read()
        yield result


def write_output(text: str, filename: Union[str, Path, None] = None):
    """Write text to a file, or to stdout if no filename is given.
    """
    if filename is None or str(filename) == '-':
        sys.stdout.write(text)
        sys.stdout.flush()
        return

    with open(filename, 'w', encoding='utf-8', newline='\n') as f:
        f.write(text)

    debug(f'wrote {filename}')


def list_files(folder: Union[str, Path], suffixes=('.json', '.csv')) -> List[Path]:
    """List the files in `folder` with one of the given suffixes, sorted by name.
    """
    folder = Path(folder)
    if not folder.is_dir():
        raise ValueError(f'Not a directory: {folder}')

    return sorted(p for p in folder.iterdir()
                  if p.is_file() and p.suffix in suffixes)


set_verbosity()
